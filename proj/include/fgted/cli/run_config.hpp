#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace fgted::cli {

// key=value lines; '#' starts a comment; blank lines are skipped. Keys use the
// long flag spelling without dashes. Throws DataError naming the line.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

// Effective string-valued settings of one run. Resolution order: explicit
// flag, then config file, then (for seed only) FGTED_SEED, then the default.
class RunConfig {
 public:
  RunConfig(std::string subcommand, std::map<std::string, std::string> values)
      : subcommand_(std::move(subcommand)), values_(std::move(values)) {}

  const std::string& subcommand() const { return subcommand_; }
  bool has(std::string_view key) const;
  // Throws UsageError if the key is missing or empty.
  const std::string& str(std::string_view key) const;
  std::string str_or(std::string_view key, std::string fallback) const;
  std::size_t count(std::string_view key) const;
  std::uint64_t u64(std::string_view key) const;
  double real(std::string_view key) const;
  bool flag(std::string_view key) const;  // on/off, true/false, 1/0
  std::vector<double> reals(std::string_view key) const;  // comma list

  const std::map<std::string, std::string>& values() const { return values_; }
  nlohmann::ordered_json to_json() const;

 private:
  std::string subcommand_;
  std::map<std::string, std::string> values_;
};

// Resolves settings for a subcommand. `explicit_flags` holds only the flags
// given on the command line.
RunConfig resolve_config(std::string subcommand,
                         const std::map<std::string, std::string>& defaults,
                         const std::map<std::string, std::string>& explicit_flags,
                         const std::map<std::string, std::string>& file_values,
                         const char* env_seed);

// Writes run-config.json into dir (created if needed).
void write_run_config(const std::filesystem::path& dir, const RunConfig& config);

// Creates dir or throws UsageError.
void ensure_dir(const std::filesystem::path& dir);
void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j);

}  // namespace fgted::cli
