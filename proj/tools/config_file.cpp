#include "config_file.hpp"

#include <fstream>

#include "klshc/common.hpp"

namespace klshc::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open config file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::format,
            path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    require(!key.empty(), ErrorKind::format, path.string() + ":" + std::to_string(lineno) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

std::vector<std::string> merge_config_args(const std::vector<std::string>& argv) {
  std::string config;
  std::size_t sub = 0;  // position of the subcommand
  for (std::size_t i = 1; i < argv.size(); ++i) {
    const std::string& a = argv[i];
    if (a == "--config" && i + 1 < argv.size()) {
      config = argv[++i];
    } else if (a.rfind("--config=", 0) == 0) {
      config = a.substr(9);
    } else if (!sub && !a.empty() && a[0] != '-') {
      sub = i;
    }
  }
  if (config.empty() || !sub) return argv;

  std::vector<std::string> out(argv.begin(), argv.begin() + static_cast<std::ptrdiff_t>(sub) + 1);
  for (const auto& [key, value] : read_config_file(config)) {
    if (key == "config" || value.empty()) continue;
    out.push_back("--" + key + "=" + value);
  }
  out.insert(out.end(), argv.begin() + static_cast<std::ptrdiff_t>(sub) + 1, argv.end());
  return out;
}

}  // namespace klshc::cli
