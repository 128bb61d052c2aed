// Acceptance suite: one PASS/FAIL line per criterion.
//
//   igb_acceptance [--only N] [--threads T] [--enforce-budgets]
//
// Wall-clock budgets are reported for every criterion; they only turn into
// failures with --enforce-budgets, because ctest machines vary widely.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <CLI11.hpp>
#include <json.hpp>

#include "igb/dynamics.hpp"
#include "igb/error.hpp"
#include "igb/hash.hpp"
#include "igb/io.hpp"
#include "igb/metrics.hpp"
#include "igb/network.hpp"
#include "igb/rng.hpp"
#include "igb/sampling.hpp"
#include "igb/special_functions.hpp"
#include "igb/stats.hpp"
#include "igb/theory.hpp"
#include "igb/trainer.hpp"

using namespace igb;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Context {
  std::size_t threads = 0;
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Collects named checks; the criterion passes when all of them hold.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    all_ &= ok;
    if (!parts_.empty()) parts_ += "; ";
    parts_ += what + (ok ? "" : " [violated]");
  }
  void note(const std::string& what) {
    if (!parts_.empty()) parts_ += "; ";
    parts_ += what;
  }
  Outcome done() const { return {all_, parts_}; }

 private:
  bool all_ = true;
  std::string parts_;
};

std::string num(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi); }

// ---------------------------------------------------------------------------

Outcome criterion_1(const Context& ctx) {
  const std::size_t B = 10;
  const auto d = norm::sample_normalized_columns(B, 100000, 101, norm::Estimator::LeaveOneOut, ctx.threads);
  const double m = stats::mean(d.variance);
  const double expected = 8.0 / 9.0;
  Checks c;
  c.expect(std::abs(m - expected) <= 0.01, "mean sigma-tilde^2 = " + num(m, 6) + " vs 8/9 +- 0.01");
  c.note("se " + num(stats::standard_error(d.variance), 3));
  c.expect(std::abs(theory::loo_var_expectation(1.0, B) - expected) < 1e-15, "closed form equals 8/9");
  return c.done();
}

Outcome criterion_2(const Context& ctx) {
  const auto d = norm::sample_normalized_columns(8, 1000000, 202, norm::Estimator::LeaveOneOut, ctx.threads);
  const double v = stats::sample_variance(d.normalized);
  Checks c;
  c.expect(std::abs(v - 2.0) <= 0.02, "Var(b-tilde) at B=8 = " + num(v, 6) + " vs 2.0 +- 0.02");
  return c.done();
}

Outcome criterion_3(const Context& ctx) {
  const auto d = norm::sample_normalized_columns(16, 1000000, 303, norm::Estimator::LeaveOneOut, ctx.threads);
  const double ks = stats::ks_distance_pdf(d.normalized, [](double z) { return theory::bn_unit_pdf(z, 16); },
                                           -kInf);
  double worst = 0.0;
  for (int i = 0; i <= 800; ++i) {
    const double z = -4.0 + 0.01 * i;
    worst = std::max(worst, std::abs(theory::bn_unit_pdf(z, 10000) - phi(z)));
  }
  Checks c;
  c.expect(ks < 0.005, "KS(B=16, 1e6 samples) = " + num(ks, 4) + " < 0.005");
  c.expect(worst < 1e-3, "max |pdf_B=1e4 - phi| on [-4,4] = " + num(worst, 3) + " < 1e-3");
  return c.done();
}

Outcome criterion_4(const Context&) {
  Checks c;
  std::mt19937_64 rng(404);
  std::normal_distribution<double> nd;
  const std::size_t n = 10000000;
  for (auto [mu, sigma] : {std::pair{0.0, 1.0}, {1.0, 1.0}, {-1.0, 2.0}}) {
    // Welford-free: accumulate raw power sums of ReLU(X) in long double.
    long double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const long double r = std::max(0.0, mu + sigma * nd(rng));
      s1 += r;
      s2 += r * r;
      s3 += r * r * r;
      s4 += r * r * r * r;
    }
    const long double N = n;
    const long double m = s1 / N;
    const long double v = s2 / N - m * m;
    const long double m4 = s4 / N - 4 * m * s3 / N + 6 * m * m * s2 / N - 3 * m * m * m * m;
    const double se_m = std::sqrt(static_cast<double>(v / N));
    const double se_v = std::sqrt(static_cast<double>((m4 - v * v) / N));
    const auto th = theory::rectified_gaussian_moments(mu, sigma);
    const double zm = (static_cast<double>(m) - th.mean) / se_m;
    const double zv = (static_cast<double>(v) - th.variance) / se_v;
    const std::string tag = "(" + num(mu) + "," + num(sigma) + ")";
    c.expect(std::abs(zm) < 3.0, tag + " mean z=" + num(zm, 3));
    c.expect(std::abs(zv) < 3.0, tag + " var z=" + num(zv, 3));
  }
  bool exact = true;
  for (double a : {0.5, 2.0}) {
    for (auto [mu, sigma] : {std::pair{0.0, 1.0}, {1.0, 1.0}, {-1.0, 2.0}}) {
      const auto b = theory::rectified_gaussian_moments(mu, sigma);
      const auto s = theory::rectified_gaussian_moments(a * mu, a * sigma);
      exact &= std::abs(s.mean - a * b.mean) <= 4e-16 * std::abs(a * b.mean) + 1e-300;
      exact &= std::abs(s.variance - a * a * b.variance) <= 8e-16 * std::abs(a * a * b.variance);
    }
  }
  c.expect(exact, "scaling law for alpha in {0.5, 2} to rounding");
  return c.done();
}

Outcome criterion_5(const Context& ctx) {
  Checks c;
  DataSpec spec;
  spec.n_samples = 10000;
  spec.seed = 505;
  const std::size_t d = 1000;
  for (NormKind k : {NormKind::BatchNorm, NormKind::LayerNorm}) {
    for (std::size_t L : {1u, 20u}) {
      auto cfg = make_config(d, 500, L, k, NormPlacement::PostActivation);
      const auto r = ensemble_g0(cfg, spec, 200, 5000 * (L + 1), ctx.threads);
      const auto [lo, hi] = std::minmax_element(r.g0.begin(), r.g0.end());
      c.expect(*lo >= 0.4 && *hi <= 0.6, std::string(to_string(k)) + " L=" + std::to_string(L) +
                                              " G0 in [" + num(*lo) + ", " + num(*hi) + "]");
    }
    double dev[2];
    const std::size_t widths[2] = {100, 1000};
    for (int w = 0; w < 2; ++w) {
      auto cfg = make_config(d, widths[w], 1, k, NormPlacement::PostActivation);
      const auto r = ensemble_g0(cfg, spec, 200, 7000, ctx.threads);
      double s = 0.0;
      for (double g : r.g0) s += std::abs(g - 0.5);
      dev[w] = s / static_cast<double>(r.g0.size());
    }
    c.expect(dev[1] < dev[0], std::string(to_string(k)) + " mean|G0-0.5| width 1000 = " + num(dev[1], 3) +
                                  " < width 100 = " + num(dev[0], 3));
  }
  return c.done();
}

Outcome criterion_6(const Context& ctx) {
  DataSpec spec;
  spec.n_samples = 10000;
  spec.seed = 606;
  const auto one = ensemble_g0(make_config(1000, 100, 1, NormKind::BatchNorm, NormPlacement::PreActivation),
                               spec, 500, 0, ctx.threads);
  const auto deep = ensemble_g0(make_config(1000, 100, 20, NormKind::BatchNorm, NormPlacement::PreActivation),
                                spec, 500, 100000, ctx.threads);
  const double ks = stats::ks_two_sample(one.g0, deep.g0);
  Checks c;
  c.expect(ks < 0.1, "two-sample KS(L=1, L=20) = " + num(ks, 3) + " < 0.1");
  return c.done();
}

Outcome criterion_7(const Context& ctx) {
  DataSpec spec;
  spec.n_samples = 10000;
  spec.seed = 707;
  auto frac_extreme = [](const EnsembleResult& r) {
    double n = 0;
    for (double g : r.g0) n += std::max(g, 1.0 - g) > 0.9;
    return n / static_cast<double>(r.g0.size());
  };
  EnsembleOptions opt;
  opt.threads = ctx.threads;
  const auto ln1 = run_ensemble(make_config(1000, 100, 1, NormKind::LayerNorm, NormPlacement::PreActivation),
                                spec, 500, 0, opt);
  opt.collect_gamma = true;
  const auto ln20 = run_ensemble(make_config(1000, 100, 20, NormKind::LayerNorm, NormPlacement::PreActivation),
                                 spec, 500, 0, opt);
  // Same seeds: identical weights, so the comparison isolates the effect of LN.
  const auto plain = run_ensemble(make_config(1000, 100, 20, NormKind::None, NormPlacement::Absent), spec, 500,
                                  0, opt);
  const double f1 = frac_extreme(ln1), f20 = frac_extreme(ln20);
  Checks c;
  c.expect(f20 >= 2.0 * f1 && f20 > 0.0,
           "fraction max(G0,1-G0)>0.9: L=20 " + num(f20, 3) + " >= 2 x L=1 " + num(f1, 3));
  double worst = 0.0;
  std::size_t worst_layer = 0, matched = 0;
  for (std::size_t l = 1; l <= 20; ++l) {
    const double a = ln20.gamma->at(l).gamma, b = plain.gamma->at(l).gamma;
    const double rel = std::abs(a - b) / b;
    if (rel <= 0.10 && matched + 1 == l) matched = l;
    if (rel > worst) {
      worst = rel;
      worst_layer = l;
    }
  }
  c.expect(worst <= 0.10, "max relative |gamma_LN - gamma_plain| over l<=20 = " + num(worst, 3) +
                              " (layer " + std::to_string(worst_layer) + ") <= 0.10");
  c.note("within 10% through layer " + std::to_string(matched));
  c.note("gamma^(20): LN " + num(ln20.gamma->at(20).gamma, 4) + ", plain " + num(plain.gamma->at(20).gamma, 4));
  return c.done();
}

Outcome criterion_8(const Context& ctx) {
  DataSpec spec;
  spec.n_samples = 10000;
  spec.seed = 808;
  const auto cfg = make_config(1000, 1000, 1, NormKind::BatchNorm, NormPlacement::PreActivation);
  const auto rep = estimate_gamma(cfg, spec, 200, 0, ctx.threads);
  const auto& out = rep.at(2);
  const double target = 1.0 / (kPi - 1.0);
  const double pred = *theory::gamma_prediction(cfg).gamma;
  Checks c;
  c.expect(std::abs(out.gamma - target) <= 0.1 * target,
           "output gamma = " + num(out.gamma, 4) + " (se " + num(out.se, 2) + ") vs 1/(pi-1) = " +
               num(target, 4) + " +- 10%");
  c.expect(std::abs(pred - target) < 1e-14, "gamma_prediction = " + num(pred, 6));
  return c.done();
}

// Bin masses of G0 = Phi(Z), Z ~ N(0, gamma), by stratified importance
// sampling in z. Each bin draws from an exponential tilt matched to the log
// density slope at its inner end, so tail bins are resolved as well as the
// central ones. Uses only the Gaussian density and boost's normal quantile.
std::vector<double> mc_bin_masses(double gamma, std::size_t bins, std::size_t per_bin, std::uint64_t seed) {
  const boost::math::normal unit;
  const double s = std::sqrt(gamma);
  auto f = [s](double z) { return phi(z / s) / s; };
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> mass(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double a = static_cast<double>(k) / static_cast<double>(bins);
    const double b = static_cast<double>(k + 1) / static_cast<double>(bins);
    const double za = k == 0 ? -kInf : boost::math::quantile(unit, a);
    const double zb = k + 1 == bins ? kInf : boost::math::quantile(unit, b);
    // Work on the side z <= 0; the mirrored interval has the same mass.
    const bool flip = za + zb > 0.0 || (std::isinf(zb) && zb > 0);
    const double lo = flip ? -zb : za, hi = flip ? -za : zb;
    const double lambda = hi < 0.0 ? -hi / gamma : 0.0;  // slope of log f at the inner end
    double acc = 0.0;
    for (std::size_t i = 0; i < per_bin; ++i) {
      const double u = 1.0 - U(rng);  // (0, 1]
      double z, q;
      if (std::isinf(lo)) {
        z = hi + std::log(u) / lambda;
        q = lambda * std::exp(lambda * (z - hi));
      } else if (lambda * (hi - lo) > 1e-3) {
        const double w = hi - lo;
        z = hi + std::log1p(-u * -std::expm1(-lambda * w)) / lambda;
        q = lambda * std::exp(lambda * (z - hi)) / -std::expm1(-lambda * w);
      } else {
        z = lo + u * (hi - lo);
        q = 1.0 / (hi - lo);
      }
      acc += f(z) / q;
    }
    mass[k] = acc / static_cast<double>(per_bin);
  }
  return mass;
}

Outcome criterion_9(const Context&) {
  Checks c;
  const std::size_t bins = 40;
  boost::math::quadrature::tanh_sinh<double> ts;
  for (double gamma : {0.1, 0.4669, 5.0}) {
    const auto mc = mc_bin_masses(gamma, bins, 1000000 / bins, 909);
    double worst = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double a = static_cast<double>(k) / bins, b = static_cast<double>(k + 1) / bins;
      const double model = ts.integrate([gamma](double g) { return theory::g0_pdf_from_gamma(g, gamma); }, a, b);
      worst = std::max(worst, std::abs(model - mc[k]) / mc[k]);
    }
    c.expect(worst < 0.02, "gamma=" + num(gamma) + " max per-bin rel err " + num(worst, 3) + " < 2%");
  }
  bool symmetric = true;
  for (int k = 1; k < 1024; ++k) {
    const double g = k / 1024.0;
    for (double gamma : {0.1, 0.4669, 5.0}) {
      symmetric &= theory::g0_pdf_from_gamma(g, gamma) == theory::g0_pdf_from_gamma(1.0 - g, gamma);
    }
  }
  c.expect(symmetric, "p(g) == p(1-g) exactly on the 1/1024 grid");
  return c.done();
}

double loss_of(const Network& net, const Matrix& x, const std::vector<int>& y) {
  return softmax_cross_entropy(forward(net, x, Mode::Train).outputs, y);
}

template <class M>
double tensor_error(Network& net, M& param, const M& grad, const Matrix& x, const std::vector<int>& y,
                    double& scale) {
  // Fourth-order central stencil: some LOO seeds give losses in the hundreds,
  // where a second-order stencil with a step small enough for its truncation
  // error is dominated by roundoff.
  const double h = 1e-4;
  double err = 0.0;
  auto at = [&](Eigen::Index i, double v) {
    param.data()[i] = v;
    return loss_of(net, x, y);
  };
  for (Eigen::Index i = 0; i < param.size(); ++i) {
    const double v = param.data()[i];
    const double d1 = at(i, v + h) - at(i, v - h);
    const double d2 = at(i, v + 2.0 * h) - at(i, v - 2.0 * h);
    param.data()[i] = v;
    const double numeric = (8.0 * d1 - d2) / (12.0 * h);
    err = std::max(err, std::abs(numeric - grad.data()[i]));
    scale = std::max(scale, std::abs(numeric));
  }
  return err;
}

Outcome criterion_10(const Context&) {
  struct Combo {
    NormKind k;
    NormPlacement p;
    bool loo;
  };
  const Combo combos[] = {{NormKind::None, NormPlacement::Absent, false},
                          {NormKind::BatchNorm, NormPlacement::PreActivation, false},
                          {NormKind::BatchNorm, NormPlacement::PostActivation, false},
                          {NormKind::BatchNorm, NormPlacement::PreActivation, true},
                          {NormKind::BatchNorm, NormPlacement::PostActivation, true},
                          {NormKind::LayerNorm, NormPlacement::PreActivation, false},
                          {NormKind::LayerNorm, NormPlacement::PostActivation, false},
                          {NormKind::RmsNorm, NormPlacement::PreActivation, false},
                          {NormKind::RmsNorm, NormPlacement::PostActivation, false}};
  Checks c;
  for (const auto& cb : combos) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto cfg = make_config(5, 5, 2, cb.k, cb.p);
      cfg.epsilon = 1e-3;
      cfg.loo_estimators = cb.loo;
      Network net = init_network(cfg, 1000 + seed);
      Rng rng(seed);
      if (net.has_norm()) {
        for (auto& s : net.norm_scale) fill_normal(s, rng, 1.0, 0.3);
        for (auto& s : net.norm_shift) fill_normal(s, rng, 0.0, 0.3);
      }
      for (auto& b : net.biases) fill_normal(b, rng, 0.0, 0.1);
      Matrix x(8, 5);
      fill_normal(x, rng);
      const std::vector<int> y{0, 1, 1, 0, 1, 0, 0, 1};
      const Gradients g = backward(net, forward(net, x, Mode::Train), y);
      double err = 0.0, scale = 0.0;
      for (std::size_t l = 0; l < net.weights.size(); ++l) {
        err = std::max(err, tensor_error(net, net.weights[l], g.weights[l], x, y, scale));
        err = std::max(err, tensor_error(net, net.biases[l], g.biases[l], x, y, scale));
      }
      for (std::size_t l = 0; l < net.norm_scale.size(); ++l) {
        err = std::max(err, tensor_error(net, net.norm_scale[l], g.norm_scale[l], x, y, scale));
        err = std::max(err, tensor_error(net, net.norm_shift[l], g.norm_shift[l], x, y, scale));
      }
      worst = std::max(worst, err / scale);
    }
    std::string name = std::string(to_string(cb.k)) + "-" + std::string(to_string(cb.p)) + (cb.loo ? "-loo" : "");
    c.expect(worst < 1e-5, name + " " + num(worst, 2));
  }
  return c.done();
}

FilteredDynamicsSpec blob_spec(const Context& ctx) {
  FilteredDynamicsSpec s;
  s.network = make_config(1000, 100, 1, NormKind::None, NormPlacement::Absent);
  s.n_per_class = 5000;
  s.mu_scale = 1.0;
  s.data_seed = 1111;
  s.train.learning_rate = 1e-3;
  s.train.batch_size = 512;
  s.train.steps = 2000;
  s.train.eval_cadence = 20;
  s.accuracy_level = 0.6;
  s.threads = ctx.threads;
  return s;
}

std::string tau_str(const std::optional<double>& m) {
  if (!m) return "none";
  return std::isinf(*m) ? "censored" : num(*m);
}

Outcome criterion_11(const Context& ctx) {
  FilteredDynamicsSpec s = blob_spec(ctx);
  s.screen_runs = 1500;
  s.base_seed = 0;
  s.runs_per_group = 10;
  const auto r = run_filtered_dynamics(s);
  Checks c;
  c.note("screened " + std::to_string(r.seeds.size()) + ": neutral " + std::to_string(r.filtered.neutral.size()) +
         ", weak " + std::to_string(r.filtered.weak.size()) + ", deep " + std::to_string(r.filtered.deep.size()));
  std::size_t n_neutral = 0, n_deep = 0;
  bool deep_ok = true, neutral_ok = true;
  double lo_n = 1.0, hi_n = 0.0, min_d0 = 1.0, max_d1 = 0.0;
  for (const auto& run : r.runs) {
    const auto& a = run.trajectory.records.front().acc_class_train;
    if (run.group == InitGroup::DeepPrejudice) {
      ++n_deep;
      deep_ok &= a[0] >= 0.9 && a[1] <= 0.1;
      min_d0 = std::min(min_d0, a[0]);
      max_d1 = std::max(max_d1, a[1]);
    } else if (run.group == InitGroup::Neutral) {
      ++n_neutral;
      for (double v : a) {
        neutral_ok &= v >= 0.4 && v <= 0.6;
        lo_n = std::min(lo_n, v);
        hi_n = std::max(hi_n, v);
      }
    }
  }
  c.expect(n_neutral >= 10 && n_deep >= 10,
           "trained neutral " + std::to_string(n_neutral) + ", deep " + std::to_string(n_deep) + " (>= 10 each)");
  c.expect(deep_ok && n_deep > 0, "deep t=0 class accuracies: min acc_0 " + num(min_d0, 3) + " >= 0.9, max acc_1 " +
                                      num(max_d1, 3) + " <= 0.1");
  c.expect(neutral_ok && n_neutral > 0,
           "neutral t=0 class accuracies in [" + num(lo_n, 3) + ", " + num(hi_n, 3) + "] within [0.4, 0.6]");
  const auto mn = median_tau(r, InitGroup::Neutral), md = median_tau(r, InitGroup::DeepPrejudice);
  c.expect(mn && md && *mn <= *md, "median tau_0.6 neutral " + tau_str(mn) + " <= deep " + tau_str(md));
  return c.done();
}

Outcome criterion_12(const Context& ctx) {
  Checks c;
  FilteredDynamicsSpec post = blob_spec(ctx);
  post.network = make_config(1000, 100, 1, NormKind::LayerNorm, NormPlacement::PostActivation);
  post.network.epsilon = 1e-5;
  post.screen_runs = 100;
  post.base_seed = 20000;
  post.runs_per_group = 3;  // unfiltered: the first three seeds when all are neutral
  const auto rp = run_filtered_dynamics(post);
  double worst = 0.0;
  for (double g : rp.ghat0) worst = std::max(worst, g);
  c.expect(rp.filtered.neutral.size() == rp.seeds.size() && rp.filtered.deep.empty(),
           "LN after ReLU: " + std::to_string(rp.filtered.neutral.size()) + "/100 neutral, deep " +
               std::to_string(rp.filtered.deep.size()) + ", max G " + num(worst, 3));
  c.note("median tau_0.6 of 3 unfiltered LN-post runs " + tau_str(median_tau(rp, InitGroup::Neutral)));

  FilteredDynamicsSpec pre = blob_spec(ctx);
  pre.network = make_config(1000, 100, 20, NormKind::LayerNorm, NormPlacement::PreActivation);
  pre.network.epsilon = 1e-5;
  pre.screen_runs = 100;
  pre.base_seed = 30000;
  pre.runs_per_group = 0;
  const auto rq = run_filtered_dynamics(pre);
  c.expect(!rq.filtered.deep.empty(), "LN before ReLU, L=20: deep " + std::to_string(rq.filtered.deep.size()) +
                                          "/100 (neutral " + std::to_string(rq.filtered.neutral.size()) + ")");
  return c.done();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(IGB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome criterion_13(const Context&) {
  const fs::path root = fs::temp_directory_path() / "igb_acceptance_13";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::vector<std::pair<std::string, json>> configs = {
      {"static-ensemble",
       {{"kind", "static-ensemble"}, {"runs", 20}, {"seed", 13},
        {"network", {{"input_dim", 200}, {"width", 50}, {"norm_kind", "batch"}, {"placement", "pre"}}},
        {"sweep", {{"depths", {1, 4}}}}, {"data", {{"n_samples", 2000}}}, {"collect_gamma", true}}},
      {"gamma-scan",
       {{"kind", "gamma-scan"}, {"runs", 12}, {"seed", 14},
        {"network", {{"input_dim", 100}, {"width", 40}, {"depth", 3}, {"norm_kind", "layer"}}},
        {"data", {{"n_samples", 1000}, {"fresh_per_run", true}}}}},
      {"theory-table", {{"kind", "theory-table"}}},
      {"dist-test", {{"kind", "dist-test"}, {"seed", 15}, {"dist", {{"batch_size", 16}, {"samples", 200000}}}}},
      {"filtered-dynamics",
       {{"kind", "filtered-dynamics"}, {"runs", 30}, {"seed", 16}, {"runs_per_group", 2},
        {"network", {{"input_dim", 100}, {"width", 30}}},
        {"data", {{"n_per_class", 500}, {"test_per_class", 100}}},
        {"train", {{"batch_size", 64}, {"steps", 60}, {"eval_cadence", 10}, {"learning_rate", 0.01}}}}},
  };
  Checks c;
  for (const auto& [name, cfg] : configs) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path a = root / (name + "_a"), b = root / (name + "_b");
    io::write_text(root / (name + ".json"), cfg.dump(2));
    bool ok = run_cli(name + " --config " + (root / (name + ".json")).string() + " --out " + a.string()) == 0;
    // Re-run from the manifest with a different thread count.
    ok = ok && run_cli("run --config " + (a / "manifest.json").string() + " --out " + b.string() +
                       " --threads 2") == 0;
    std::size_t files = 0;
    if (ok) {
      const json ma = json::parse(io::read_text(a / "manifest.json"));
      const json mb = json::parse(io::read_text(b / "manifest.json"));
      for (const auto& f : ma["files"]) {
        const std::string p = f["path"];
        ok &= sha256_file(a / p) == f["sha256"];
        ok &= fs::exists(b / p) && io::read_text(a / p) == io::read_text(b / p);
        ++files;
      }
      ok &= ma["files"] == mb["files"];
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(ok && secs < 60.0, name + " " + std::to_string(files) + " files identical (" + num(secs, 2) + " s)");
  }
  return c.done();
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  Outcome (*fn)(const Context&);
};

const Criterion kCriteria[] = {
    {1, "leave-one-out variance identity", 10, criterion_1},
    {2, "leave-one-out normalized variance", 30, criterion_2},
    {3, "closed-form BN density", 60, criterion_3},
    {4, "rectified Gaussian moments", 30, criterion_4},
    {5, "post-activation neutrality", 300, criterion_5},
    {6, "BN-pre depth stability", 300, criterion_6},
    {7, "LN-pre amplification", 600, criterion_7},
    {8, "BN-pre gamma", 180, criterion_8},
    {9, "G0 density reconstruction", 60, criterion_9},
    {10, "gradient suite", 60, criterion_10},
    {11, "filtered dynamics", 900, criterion_11},
    {12, "norm-placement dynamics", 900, criterion_12},
    {13, "determinism and reproducibility", 300, criterion_13},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int only = 0;
  bool enforce = false;
  Context ctx;
  app.add_option("--only", only, "Run a single criterion (1-13)")->check(CLI::Range(1, 13));
  app.add_option("--threads", ctx.threads, "Worker threads (0 = hardware concurrency)");
  app.add_flag("--enforce-budgets", enforce, "Fail criteria that exceed their time budget");
  CLI11_PARSE(app, argc, argv);

  int failures = 0;
  for (const auto& cr : kCriteria) {
    if (only && cr.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.fn(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool over = secs > cr.budget_s;
    const bool pass = o.pass && !(enforce && over);
    failures += !pass;
    std::printf("criterion %d (%s): %s | %s | %.1f s of %.0f s budget%s\n", cr.id, cr.name, pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs, cr.budget_s, over ? " (over budget)" : "");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
