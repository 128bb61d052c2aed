#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace igb::experiment {

inline constexpr const char* kVersion = "1.0.0";

enum class Kind { StaticEnsemble, GammaScan, TheoryTable, FilteredDynamics, DistributionTest };

std::string to_string(Kind k);
/// Accepts the subcommand spellings ("static-ensemble", ...). Throws ConfigError.
Kind parse_kind(const std::string& s);

/// Values that take precedence over the config file (CLI flags, then IGB_* env vars).
struct Overrides {
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::optional<std::size_t> threads;
};

/// Reads IGB_OUT, IGB_SEED, IGB_RUNS, IGB_THREADS into any field not already set.
void apply_env(Overrides& o);

/// Parses a config file. A manifest written by `run` is accepted as well;
/// its embedded resolved config is returned.
nlohmann::json load_config(const std::filesystem::path& path);

/// Fills defaults, applies overrides and checks every constraint. Throws
/// ConfigError listing all violations (unknown keys included).
nlohmann::json resolve(const nlohmann::json& config, const Overrides& o,
                       std::optional<Kind> expected = std::nullopt);

struct Outcome {
  std::filesystem::path out_dir;
  std::vector<std::string> files;  // relative to out_dir, manifest excluded
  nlohmann::json summary;
};

/// Executes a resolved config and writes result files plus manifest.json
/// into the output directory (created if missing).
Outcome run(const nlohmann::json& resolved);

/// Diff of two result directories of the same kind. Throws ConfigError on a
/// kind mismatch.
nlohmann::json compare(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace igb::experiment
