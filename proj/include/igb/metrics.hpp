#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "igb/data.hpp"
#include "igb/network.hpp"
#include "igb/stats.hpp"

namespace igb {

/// Per-class fractions of predictions. Fractions are count / total, so
/// total * fractions[c] is an integer.
struct GuessStats {
  std::vector<std::size_t> counts;
  std::vector<double> fractions;
  std::vector<double> ranked;  // fractions sorted in decreasing order
  std::size_t dominant_class = 0;
  std::size_t total = 0;

  double g0() const { return fractions.at(0); }
  double max_fraction() const { return ranked.at(0); }
};

/// Dominant class ties go to the lowest index.
GuessStats guess_stats(const std::vector<int>& predictions, std::size_t num_classes);

/// Forward + predict with full-batch BN statistics.
GuessStats estimate_guess_stats(const Network& net, const Dataset& data);
GuessStats estimate_guess_stats(const Network& net, const Matrix& inputs, Mode mode);

/// Inputs for static ensembles: N(0, I) + shift with d = config.input_dim.
struct DataSpec {
  std::size_t n_samples = 10000;
  double shift = 0.0;
  /// false: one dataset drawn from `seed` and shared by all runs.
  /// true: run i draws its own dataset from seed + i.
  bool fresh_per_run = false;
  std::uint64_t seed = 0;
};

Dataset make_static_data(const DataSpec& spec, std::size_t d, std::size_t run_index);

struct LayerGamma {
  std::size_t layer = 0;  // 1..L+1, L+1 is the output layer
  double gamma = 0.0;
  double se = 0.0;        // jackknife over runs
  double var_w = 0.0;     // variance of node dataset means, pooled over runs and nodes
  double var_d = 0.0;     // mean over runs and nodes of node dataset variances
  double gamma_node0 = 0.0;  // same ratio using node 0 only
  std::size_t nodes = 0;
};

struct VarianceRatioReport {
  std::vector<LayerGamma> layers;
  std::size_t runs = 0;

  /// Throws DomainError when the layer was not recorded.
  const LayerGamma& at(std::size_t layer) const;
  std::vector<double> gammas() const;
};

struct EnsembleOptions {
  std::size_t threads = 0;
  bool collect_gamma = false;
  std::size_t bins = 40;
  /// When set, every run uses this dataset instead of `DataSpec`.
  const Dataset* fixed_data = nullptr;
};

struct EnsembleResult {
  std::vector<std::uint64_t> seeds;  // base_seed + run index
  std::vector<double> g0;
  std::vector<double> ghat0;
  stats::Histogram histogram;        // of g0
  NetworkConfig config;
  DataSpec data;
  /// Per-run, per-layer ratio pooled over the nodes of that run (audit only).
  std::vector<std::vector<double>> run_gamma;
  std::optional<VarianceRatioReport> gamma;
};

/// Independent initializations; runs execute concurrently and merge by index.
EnsembleResult run_ensemble(const NetworkConfig& config, const DataSpec& data, std::size_t n_runs,
                            std::uint64_t base_seed, const EnsembleOptions& options = {});

/// n_runs >= 2.
EnsembleResult ensemble_g0(const NetworkConfig& config, const DataSpec& data, std::size_t n_runs,
                           std::uint64_t base_seed, std::size_t threads = 0);

/// Every layer's variance ratio; n_runs >= 10.
VarianceRatioReport estimate_gamma(const NetworkConfig& config, const DataSpec& data,
                                   std::size_t n_runs, std::uint64_t base_seed,
                                   std::size_t threads = 0);

struct FilterThresholds {
  double neutral_halfwidth = 0.05;
  double deep_threshold = 0.95;

  /// Throws ConfigError unless 0 < halfwidth < 0.5 < deep < 1.
  void validate() const;
};

enum class InitGroup { Neutral, WeakPrejudice, DeepPrejudice };

InitGroup classify_init(double max_fraction, std::size_t num_classes, const FilterThresholds& t);

struct FilteredSeeds {
  std::vector<std::uint64_t> neutral;
  std::vector<std::uint64_t> weak;
  std::vector<std::uint64_t> deep;
};

/// Groups by max_c G_c (ranked fraction 0).
FilteredSeeds filter_initializations(const std::vector<std::uint64_t>& seeds,
                                     const std::vector<double>& max_fractions,
                                     std::size_t num_classes, const FilterThresholds& t);
FilteredSeeds filter_initializations(const EnsembleResult& r, const FilterThresholds& t);

}  // namespace igb
