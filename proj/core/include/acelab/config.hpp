// Plain-text key=value configuration with per-key overrides.
//
// Precedence is built-in default < config file < explicit override; the CLI
// wires its flags through apply_config_entries so every trainer field can be
// set either way. Optional fields accept "auto".

#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "acelab/trainer.hpp"

namespace acelab {

using KeyValueMap = std::map<std::string, std::string>;

/// Parses `key = value` lines; '#' starts a comment, blank lines ignored.
KeyValueMap parse_key_value_stream(std::istream& in);
KeyValueMap parse_key_value_file(const std::string& path);

/// Applies entries onto a config. Unknown keys and malformed values throw
/// std::invalid_argument naming the offending key.
void apply_config_entries(TrainerConfig& config, const KeyValueMap& entries);

/// Defaults overlaid with `entries`.
TrainerConfig config_from_entries(const KeyValueMap& entries);

/// Full snapshot of every field (optionals rendered as "auto"/"none").
KeyValueMap config_to_entries(const TrainerConfig& config);

}  // namespace acelab
