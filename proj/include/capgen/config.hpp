#ifndef CAPGEN_CONFIG_HPP_
#define CAPGEN_CONFIG_HPP_

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "capgen/gradcheck.hpp"
#include "capgen/train.hpp"

namespace capgen {

/// key=value pairs in file order. Blank lines and lines starting with '#'
/// are skipped; whitespace around keys and values is trimmed.
using ConfigMap = std::vector<std::pair<std::string, std::string>>;

ConfigMap parse_config_text(std::string_view text);
ConfigMap read_config_file(const std::filesystem::path& path);

/// Later entries win. Unknown keys and unparsable values raise ConfigError.
void apply_config(const ConfigMap& entries, TrainConfig& cfg);
void apply_config(const ConfigMap& entries, GradcheckConfig& cfg);

/// Every field as key=value lines, in a fixed order; parses back to the same
/// config.
std::string echo_config(const TrainConfig& cfg);
std::string echo_config(const GradcheckConfig& cfg);

}  // namespace capgen

#endif  // CAPGEN_CONFIG_HPP_
