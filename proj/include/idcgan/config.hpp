#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "idcgan/train.hpp"

namespace idcgan {

// Bad flags, bad config keys/values, invalid flag combinations.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Plain-text `key = value` file, one pair per line, `#` comments. Unknown
// and duplicate keys are errors (catches typos).
std::map<std::string, std::string> parse_config_file(const std::string& path);

// Applies config-file pairs onto a TrainConfig; key names mirror the
// TrainConfig fields. Values are validated against type and range.
void apply_config(TrainConfig& cfg, const std::map<std::string, std::string>& kv);

}  // namespace idcgan
