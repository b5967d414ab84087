#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace klshc::cli {

/// Reads a flat `key = value` file. Blank lines, `#` comments and `[section]`
/// headers are skipped; surrounding quotes on values are removed.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path);

/// Builds the argument list seen by the parser: options from the config file
/// come first, so any flag given on the command line takes precedence.
std::vector<std::string> merge_config_args(const std::vector<std::string>& argv);

}  // namespace klshc::cli
