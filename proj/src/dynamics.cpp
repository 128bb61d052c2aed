#include "igb/dynamics.hpp"

#include <limits>

#include "igb/error.hpp"
#include "igb/parallel.hpp"

namespace igb {

std::string to_string(InitGroup g) {
  switch (g) {
    case InitGroup::Neutral: return "neutral";
    case InitGroup::WeakPrejudice: return "weak_prejudice";
    case InitGroup::DeepPrejudice: return "deep_prejudice";
  }
  return "?";
}

FilteredDynamicsResult run_filtered_dynamics(const FilteredDynamicsSpec& spec) {
  spec.network.validate();
  spec.thresholds.validate();
  spec.train.validate(spec.network);
  if (spec.screen_runs < 1) throw ConfigError("runs: must be >= 1");

  std::optional<Dataset> own_train, own_test;
  const Dataset* train = spec.train_data;
  const Dataset* test = spec.test_data;
  if (!train) {
    own_train = gaussian_blob(spec.n_per_class, spec.network.input_dim, spec.mu_scale,
                              spec.data_seed);
    train = &*own_train;
    if (spec.test_per_class > 0) {
      // Distinct stream from the training draw.
      own_test = gaussian_blob(spec.test_per_class, spec.network.input_dim, spec.mu_scale,
                               spec.data_seed ^ 0x7465737473657431ULL);
      test = &*own_test;
    }
  }

  FilteredDynamicsResult res;
  const std::size_t n = spec.screen_runs;
  res.seeds.resize(n);
  res.g0.resize(n);
  res.ghat0.resize(n);
  res.groups.resize(n);
  parallel_for(n, spec.threads, [&](std::size_t i) {
    const std::uint64_t seed = spec.base_seed + i;
    const Network net = init_network(spec.network, seed);
    const GuessStats g = estimate_guess_stats(net, *train);
    res.seeds[i] = seed;
    res.g0[i] = g.g0();
    res.ghat0[i] = g.max_fraction();
    res.groups[i] = classify_init(g.max_fraction(), spec.network.num_classes, spec.thresholds);
  });
  res.filtered =
      filter_initializations(res.seeds, res.ghat0, spec.network.num_classes, spec.thresholds);

  auto pick = [&](const std::vector<std::uint64_t>& seeds, InitGroup g) {
    for (std::size_t k = 0; k < seeds.size() && k < spec.runs_per_group; ++k) {
      DynamicsRun r;
      r.seed = seeds[k];
      r.group = g;
      res.runs.push_back(std::move(r));
    }
  };
  pick(res.filtered.neutral, InitGroup::Neutral);
  if (spec.train_weak) pick(res.filtered.weak, InitGroup::WeakPrejudice);
  pick(res.filtered.deep, InitGroup::DeepPrejudice);

  parallel_for(res.runs.size(), spec.threads, [&](std::size_t k) {
    DynamicsRun& r = res.runs[k];
    Network net = init_network(spec.network, r.seed);
    TrainConfig cfg = spec.train;
    cfg.seed = spec.train.seed + r.seed;
    r.trajectory = train_network(net, *train, test, cfg);
    r.tau = convergence_step(r.trajectory, spec.accuracy_level);
  });
  return res;
}

std::optional<double> median_tau(const FilteredDynamicsResult& r, InitGroup g) {
  std::vector<double> taus;
  for (const auto& run : r.runs) {
    if (run.group != g) continue;
    taus.push_back(run.tau ? static_cast<double>(*run.tau)
                           : std::numeric_limits<double>::infinity());
  }
  if (taus.empty()) return std::nullopt;
  return stats::median(std::move(taus));
}

}  // namespace igb
