#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace florg {

// Stable exit codes, documented in the README.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1; // bad config/arguments or I/O setup failure
inline constexpr int kExitDivergence = 2;
inline constexpr int kExitVerify = 3;

inline constexpr const char* kToolVersion = "1.0.0";

struct RunOptions {
    std::string config_path;
    std::string out_dir;
    bool overwrite = false;
    bool seed_set = false; // --seed given (beats FLORG_SEED, which beats the file)
    std::uint64_t seed = 0;
};

struct CompareOptions {
    std::string config_path;
    std::string out_dir;
    std::vector<std::string> schemes;
    std::vector<std::uint64_t> seeds;
    int workers = 1;
    bool overwrite = false;
};

struct VerifyOptions {
    bool quick = false;
};

int cmd_run(const RunOptions& opt);
int cmd_compare(const CompareOptions& opt);
int cmd_verify(const VerifyOptions& opt);

} // namespace florg
