#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace florg {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail; // failure explanation or trial count
};

// Runs the full property-check registry (each module's documented
// invariants) with seeds derived from base_seed. quick mode cuts the trial
// counts roughly fivefold.
std::vector<CheckResult> run_verification(std::uint64_t base_seed, bool quick);

} // namespace florg
