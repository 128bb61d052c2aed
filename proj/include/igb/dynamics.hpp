#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "igb/metrics.hpp"
#include "igb/trainer.hpp"

namespace igb {

/// Screen many initializations on a Gaussian blob, group them by their
/// step-0 guessing bias, then train a few members of each group.
struct FilteredDynamicsSpec {
  NetworkConfig network;
  std::size_t n_per_class = 5000;
  double mu_scale = 1.0;
  std::size_t test_per_class = 0;  // 0: no test set
  std::uint64_t data_seed = 0;
  std::size_t screen_runs = 100;
  std::uint64_t base_seed = 0;     // init seed of screen run i is base_seed + i
  FilterThresholds thresholds;
  TrainConfig train;               // train.seed + init seed drives each run's shuffles
  std::size_t runs_per_group = 10; // first members (in seed order) of each trained group
  bool train_weak = false;
  double accuracy_level = 0.6;
  std::size_t threads = 0;
  /// When set, used instead of the generated blob (labels must fit num_classes).
  const Dataset* train_data = nullptr;
  const Dataset* test_data = nullptr;
};

struct DynamicsRun {
  std::uint64_t seed = 0;
  InitGroup group = InitGroup::Neutral;
  TrainTrajectory trajectory;
  std::optional<std::size_t> tau;  // first step reaching accuracy_level
};

struct FilteredDynamicsResult {
  std::vector<std::uint64_t> seeds;
  std::vector<double> g0;
  std::vector<double> ghat0;
  std::vector<InitGroup> groups;
  FilteredSeeds filtered;
  std::vector<DynamicsRun> runs;  // neutral, then weak, then deep; seed order within
};

FilteredDynamicsResult run_filtered_dynamics(const FilteredDynamicsSpec& spec);

std::string to_string(InitGroup g);

/// Median of tau over runs of one group; censored runs count as +inf.
/// nullopt when the group has no trained runs.
std::optional<double> median_tau(const FilteredDynamicsResult& r, InitGroup g);

}  // namespace igb
