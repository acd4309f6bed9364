#pragma once

#include <string>

#include "florg/federation.hpp"

namespace florg {

// ======== name <-> enum ========

const char* scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name); // throws ConfigError
const char* task_name(TaskKind k);
const char* init_name(InitScheme s);

// ======== config text ========

// Line format: `key = value`. Blank lines and lines starting with '#' are
// skipped; a trailing `# comment` is stripped. Unknown keys, bad values and
// duplicate keys are hard errors carrying the line number.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// Set a single key on an existing config, same value grammar as the file.
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Range and consistency checks; throws ConfigError so the CLI can map the
// failure to its config-error exit code.
void validate_config(const ExperimentConfig& cfg);

// Canonical text form (round-trips through parse_config_text).
std::string config_to_text(const ExperimentConfig& cfg);

} // namespace florg
