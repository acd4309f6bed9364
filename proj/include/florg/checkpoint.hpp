#pragma once

#include <string>
#include <utility>
#include <vector>

#include "florg/matrix.hpp"

namespace florg {

// On-disk run state: the config that produced it, how many rounds completed,
// and the named state matrices. Serialized little-endian regardless of host.
struct Checkpoint {
    std::string config_text;
    int rounds = 0;
    std::vector<std::pair<std::string, Matrix>> matrices;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path); // throws IoError

// binary layout version written by this build
inline constexpr std::uint32_t kCheckpointVersion = 1;

} // namespace florg
