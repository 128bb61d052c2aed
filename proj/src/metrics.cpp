#include "igb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "igb/error.hpp"
#include "igb/parallel.hpp"

namespace igb {

GuessStats guess_stats(const std::vector<int>& predictions, std::size_t num_classes) {
  if (predictions.empty()) throw DomainError("guess_stats: no predictions");
  if (num_classes < 1) throw DomainError("guess_stats: num_classes must be >= 1");
  GuessStats g;
  g.total = predictions.size();
  g.counts.assign(num_classes, 0);
  for (int p : predictions) {
    if (p < 0 || static_cast<std::size_t>(p) >= num_classes) {
      throw DomainError("guess_stats: prediction " + std::to_string(p) + " out of range");
    }
    ++g.counts[static_cast<std::size_t>(p)];
  }
  g.fractions.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    g.fractions[c] = static_cast<double>(g.counts[c]) / static_cast<double>(g.total);
  }
  g.dominant_class = static_cast<std::size_t>(
      std::max_element(g.counts.begin(), g.counts.end()) - g.counts.begin());
  g.ranked = g.fractions;
  std::sort(g.ranked.begin(), g.ranked.end(), std::greater<>());
  return g;
}

GuessStats estimate_guess_stats(const Network& net, const Matrix& inputs, Mode mode) {
  const Matrix out = propagate(net, inputs, mode);
  return guess_stats(predict(out), net.config.num_classes);
}

GuessStats estimate_guess_stats(const Network& net, const Dataset& data) {
  return estimate_guess_stats(net, data.inputs, Mode::FullBatch);
}

Dataset make_static_data(const DataSpec& spec, std::size_t d, std::size_t run_index) {
  const std::uint64_t seed = spec.fresh_per_run ? spec.seed + run_index : spec.seed;
  Dataset data = unlabeled_gaussian(spec.n_samples, d, seed);
  if (spec.shift != 0.0) data = shift_pixels(data, spec.shift);
  return data;
}

const LayerGamma& VarianceRatioReport::at(std::size_t layer) const {
  for (const auto& l : layers) {
    if (l.layer == layer) return l;
  }
  throw DomainError("variance ratio report has no layer " + std::to_string(layer));
}

std::vector<double> VarianceRatioReport::gammas() const {
  std::vector<double> g;
  g.reserve(layers.size());
  for (const auto& l : layers) g.push_back(l.gamma);
  return g;
}

namespace {

// Sufficient statistics of one layer in one run.
struct LayerMoments {
  double sum_mean = 0.0;
  double sum_mean2 = 0.0;
  double sum_var = 0.0;
  double node0_mean = 0.0;
  double node0_var = 0.0;
  std::size_t nodes = 0;
};

LayerMoments layer_moments(const Matrix& pre) {
  LayerMoments m;
  const double n = static_cast<double>(pre.rows());
  const RowVector mean = pre.colwise().mean();
  const RowVector var = (pre.rowwise() - mean).colwise().squaredNorm() / n;
  m.nodes = static_cast<std::size_t>(pre.cols());
  m.sum_mean = mean.sum();
  m.sum_mean2 = mean.squaredNorm();
  m.sum_var = var.sum();
  m.node0_mean = mean(0);
  m.node0_var = var(0);
  return m;
}

double pooled_ratio(const std::vector<const LayerMoments*>& runs, std::size_t skip,
                    double* var_w_out = nullptr, double* var_d_out = nullptr) {
  double s1 = 0.0, s2 = 0.0, sv = 0.0, k = 0.0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (r == skip) continue;
    s1 += runs[r]->sum_mean;
    s2 += runs[r]->sum_mean2;
    sv += runs[r]->sum_var;
    k += static_cast<double>(runs[r]->nodes);
  }
  const double var_w = (s2 - s1 * s1 / k) / (k - 1.0);
  const double var_d = sv / k;
  if (var_w_out) *var_w_out = var_w;
  if (var_d_out) *var_d_out = var_d;
  if (!(var_d > 0.0)) throw DegenerateVarianceError("estimate_gamma: zero dataset variance");
  return std::max(0.0, var_w) / var_d;
}

double node0_ratio(const std::vector<const LayerMoments*>& runs) {
  double s1 = 0.0, s2 = 0.0, sv = 0.0;
  const double k = static_cast<double>(runs.size());
  for (const auto* r : runs) {
    s1 += r->node0_mean;
    s2 += r->node0_mean * r->node0_mean;
    sv += r->node0_var;
  }
  const double var_w = (s2 - s1 * s1 / k) / (k - 1.0);
  return sv > 0.0 ? std::max(0.0, var_w) / (sv / k) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

EnsembleResult run_ensemble(const NetworkConfig& config, const DataSpec& data, std::size_t n_runs,
                            std::uint64_t base_seed, const EnsembleOptions& options) {
  config.validate();
  if (n_runs < 1) throw ConfigError("runs: must be >= 1");
  if (data.n_samples < 2 && !options.fixed_data) throw ConfigError("data.n_samples: must be >= 2");
  const std::size_t layers = config.depth() + 1;

  std::optional<Dataset> shared;
  const Dataset* fixed = options.fixed_data;
  if (!fixed && !data.fresh_per_run) {
    shared = make_static_data(data, config.input_dim, 0);
    fixed = &*shared;
  }

  EnsembleResult res;
  res.config = config;
  res.data = data;
  res.seeds.resize(n_runs);
  res.g0.resize(n_runs);
  res.ghat0.resize(n_runs);
  std::vector<std::vector<LayerMoments>> moments(n_runs);

  parallel_for(n_runs, options.threads, [&](std::size_t i) {
    const std::uint64_t seed = base_seed + i;
    const Network net = init_network(config, seed);
    std::optional<Dataset> own;
    const Dataset* d = fixed;
    if (!d) {
      own = make_static_data(data, config.input_dim, i);
      d = &*own;
    }
    PreActivationObserver obs;
    if (options.collect_gamma) {
      moments[i].resize(layers);
      obs = [&, i](std::size_t l, const Matrix& pre) { moments[i][l - 1] = layer_moments(pre); };
    }
    const Matrix out = propagate(net, d->inputs, Mode::FullBatch, obs);
    const GuessStats g = guess_stats(predict(out), config.num_classes);
    res.seeds[i] = seed;
    res.g0[i] = g.g0();
    res.ghat0[i] = g.max_fraction();
  });

  res.histogram = stats::make_histogram(res.g0, options.bins, 0.0, 1.0);

  if (options.collect_gamma) {
    res.run_gamma.assign(n_runs, std::vector<double>(layers));
    for (std::size_t i = 0; i < n_runs; ++i) {
      for (std::size_t l = 0; l < layers; ++l) {
        const auto& m = moments[i][l];
        const double k = static_cast<double>(m.nodes);
        const double vw = k > 1 ? (m.sum_mean2 - m.sum_mean * m.sum_mean / k) / (k - 1.0)
                                : std::numeric_limits<double>::quiet_NaN();
        res.run_gamma[i][l] = m.sum_var > 0.0 ? std::max(0.0, vw) / (m.sum_var / k)
                                              : std::numeric_limits<double>::quiet_NaN();
      }
    }
    if (n_runs >= 2) {
      VarianceRatioReport rep;
      rep.runs = n_runs;
      for (std::size_t l = 0; l < layers; ++l) {
        std::vector<const LayerMoments*> per_run(n_runs);
        for (std::size_t i = 0; i < n_runs; ++i) per_run[i] = &moments[i][l];
        LayerGamma lg;
        lg.layer = l + 1;
        lg.nodes = per_run[0]->nodes;
        lg.gamma = pooled_ratio(per_run, n_runs, &lg.var_w, &lg.var_d);
        lg.se = stats::jackknife_se(n_runs, [&](std::size_t skip) {
          return pooled_ratio(per_run, skip);
        });
        lg.gamma_node0 = node0_ratio(per_run);
        rep.layers.push_back(lg);
      }
      res.gamma = std::move(rep);
    }
  }
  return res;
}

EnsembleResult ensemble_g0(const NetworkConfig& config, const DataSpec& data, std::size_t n_runs,
                           std::uint64_t base_seed, std::size_t threads) {
  if (n_runs < 2) throw ConfigError("runs: ensemble needs at least 2 runs");
  EnsembleOptions o;
  o.threads = threads;
  return run_ensemble(config, data, n_runs, base_seed, o);
}

VarianceRatioReport estimate_gamma(const NetworkConfig& config, const DataSpec& data,
                                   std::size_t n_runs, std::uint64_t base_seed,
                                   std::size_t threads) {
  if (n_runs < 10) throw ConfigError("runs: gamma estimation needs at least 10 runs");
  EnsembleOptions o;
  o.threads = threads;
  o.collect_gamma = true;
  return *run_ensemble(config, data, n_runs, base_seed, o).gamma;
}

void FilterThresholds::validate() const {
  std::vector<std::string> v;
  if (!(neutral_halfwidth > 0.0 && neutral_halfwidth < 0.5)) {
    v.push_back("neutral_halfwidth: must be in (0, 0.5)");
  }
  if (!(deep_threshold > 0.5 && deep_threshold < 1.0)) {
    v.push_back("deep_threshold: must be in (0.5, 1)");
  }
  if (!v.empty()) throw ConfigError(std::move(v));
}

InitGroup classify_init(double max_fraction, std::size_t num_classes, const FilterThresholds& t) {
  const double center = 1.0 / static_cast<double>(num_classes);
  // The slack keeps count/total fractions on the band edge (0.55 = 5500/10000) inside.
  if (std::abs(max_fraction - center) <= t.neutral_halfwidth + 1e-12) return InitGroup::Neutral;
  if (max_fraction >= t.deep_threshold) return InitGroup::DeepPrejudice;
  return InitGroup::WeakPrejudice;
}

FilteredSeeds filter_initializations(const std::vector<std::uint64_t>& seeds,
                                     const std::vector<double>& max_fractions,
                                     std::size_t num_classes, const FilterThresholds& t) {
  t.validate();
  if (seeds.empty()) throw DomainError("filter_initializations: no samples");
  if (seeds.size() != max_fractions.size()) {
    throw ShapeError("filter_initializations: seeds and fractions differ in length");
  }
  FilteredSeeds f;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    switch (classify_init(max_fractions[i], num_classes, t)) {
      case InitGroup::Neutral: f.neutral.push_back(seeds[i]); break;
      case InitGroup::WeakPrejudice: f.weak.push_back(seeds[i]); break;
      case InitGroup::DeepPrejudice: f.deep.push_back(seeds[i]); break;
    }
  }
  return f;
}

FilteredSeeds filter_initializations(const EnsembleResult& r, const FilterThresholds& t) {
  return filter_initializations(r.seeds, r.ghat0, r.config.num_classes, t);
}

}  // namespace igb
