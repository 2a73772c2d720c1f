#include "fgted/cli/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "fgted/dataio/annotation.hpp"
#include "fgted/numerics/errors.hpp"

namespace fgted::cli {

namespace {

std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

}  // namespace

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::map<std::string, std::string> out;
  const auto lines = dataio::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    const std::string key = eq == std::string::npos ? "" : trim(std::string_view(t).substr(0, eq));
    if (key.empty()) {
      throw DataError(path.string() + " line " + std::to_string(i + 1) + ": expected key=value");
    }
    out[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return out;
}

bool RunConfig::has(std::string_view key) const {
  auto it = values_.find(std::string(key));
  return it != values_.end() && !it->second.empty();
}

const std::string& RunConfig::str(std::string_view key) const {
  auto it = values_.find(std::string(key));
  if (it == values_.end() || it->second.empty()) {
    throw UsageError(subcommand_ + ": --" + std::string(key) + " is required");
  }
  return it->second;
}

std::string RunConfig::str_or(std::string_view key, std::string fallback) const {
  return has(key) ? str(key) : std::move(fallback);
}

std::uint64_t RunConfig::u64(std::string_view key) const {
  const std::string& s = str(key);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw UsageError("--" + std::string(key) + " expects a non-negative integer, got '" + s + "'");
  }
  return v;
}

std::size_t RunConfig::count(std::string_view key) const { return static_cast<std::size_t>(u64(key)); }

double RunConfig::real(std::string_view key) const {
  const std::string& s = str(key);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || used == 0) {
    throw UsageError("--" + std::string(key) + " expects a number, got '" + s + "'");
  }
  return v;
}

bool RunConfig::flag(std::string_view key) const {
  const std::string& s = str(key);
  if (s == "on" || s == "true" || s == "1") return true;
  if (s == "off" || s == "false" || s == "0") return false;
  throw UsageError("--" + std::string(key) + " expects on or off, got '" + s + "'");
}

std::vector<double> RunConfig::reals(std::string_view key) const {
  std::vector<double> out;
  std::stringstream ss(str(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    RunConfig one(subcommand_, {{std::string(key), t}});
    out.push_back(one.real(key));
  }
  if (out.empty()) throw UsageError("--" + std::string(key) + " expects a comma list");
  return out;
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand_;
  nlohmann::ordered_json v = nlohmann::ordered_json::object();
  for (const auto& [k, val] : values_) v[k] = val;
  j["settings"] = v;
  return j;
}

RunConfig resolve_config(std::string subcommand,
                         const std::map<std::string, std::string>& defaults,
                         const std::map<std::string, std::string>& explicit_flags,
                         const std::map<std::string, std::string>& file_values,
                         const char* env_seed) {
  std::map<std::string, std::string> v = defaults;
  for (const auto& [k, val] : file_values) {
    if (!defaults.count(k)) {
      throw UsageError(subcommand + ": config file sets unknown key '" + k + "'");
    }
    v[k] = val;
  }
  if (defaults.count("seed") && !file_values.count("seed") && env_seed && *env_seed) {
    v["seed"] = env_seed;
  }
  for (const auto& [k, val] : explicit_flags) v[k] = val;
  return RunConfig(std::move(subcommand), std::move(v));
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw UsageError("cannot create output directory " + dir.string());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw UsageError("cannot write " + path.string());
}

void write_run_config(const std::filesystem::path& dir, const RunConfig& config) {
  ensure_dir(dir);
  write_json_file(dir / "run-config.json", config.to_json());
}

}  // namespace fgted::cli
