#include "igb/theory.hpp"

#include <cmath>

#include "igb/error.hpp"
#include "igb/special_functions.hpp"

namespace igb::theory {

using special::kInvSqrt2Pi;
using special::kPi;

std::string to_string(Regime r) {
  switch (r) {
    case Regime::Neutral: return "neutral";
    case Regime::WeakPrejudice: return "weak_prejudice";
    case Regime::DeepPrejudice: return "deep_prejudice";
  }
  return "?";
}

Moments rectified_gaussian_moments(double mu, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma) || !std::isfinite(mu)) {
    throw DomainError("rectified_gaussian_moments: sigma must be positive and finite");
  }
  const double r = mu / sigma;
  const double p = special::std_normal_cdf(r);  // 1 - Phi(-mu/sigma)
  const double e = kInvSqrt2Pi * std::exp(-0.5 * r * r);
  Moments m;
  m.mean = mu * p + sigma * e;
  m.variance = (mu * mu + sigma * sigma) * p + mu * sigma * e - m.mean * m.mean;
  return m;
}

namespace {

// sqrt(1/(B pi)) Gamma((B-1)/2) / Gamma((B-2)/2)
double bn_prefactor(double b) {
  return std::sqrt(1.0 / (b * kPi)) * special::gamma_ratio(0.5 * (b - 1.0), 0.5 * (b - 2.0));
}

}  // namespace

double bn_unit_pdf(double z, std::size_t B) {
  if (B < 3) throw DomainError("bn_unit_pdf: B must be >= 3");
  const double b = static_cast<double>(B);
  return bn_prefactor(b) * std::exp(-0.5 * (b - 1.0) * std::log1p(z * z / b));
}

Moments bn_relu_moments(std::size_t B) {
  if (B < 5) throw DomainError("bn_relu_moments: B must be >= 5");
  const double b = static_cast<double>(B);
  Moments m;
  m.mean = bn_prefactor(b) * b / (b - 3.0);
  m.variance = b / (2.0 * (b - 4.0)) - m.mean * m.mean;
  return m;
}

double loo_var_expectation(double sigma2, std::size_t B) {
  if (B < 2) throw DomainError("loo_var_expectation: B must be >= 2");
  const double b = static_cast<double>(B);
  return sigma2 * (b - 2.0) / (b - 1.0);
}

namespace {

TheoryPrediction neutral(double sigma_w2, std::string why) {
  TheoryPrediction p;
  p.regime = Regime::Neutral;
  p.gamma = 0.0;
  p.output_dist = {0.0, sigma_w2};
  p.center_dist = std::nullopt;
  p.rationale = std::move(why);
  return p;
}

// Output node fed by i.i.d. nodes with dataset mean `m` and variance `v`.
TheoryPrediction from_moments(double sigma_w2, Moments g, std::string why) {
  TheoryPrediction p;
  p.regime = Regime::WeakPrejudice;
  p.gamma = g.mean * g.mean / g.variance;
  p.output_dist = {0.0, sigma_w2 * g.variance};
  p.center_dist = GaussianParams{0.0, sigma_w2 * g.mean * g.mean};
  p.rationale = std::move(why);
  return p;
}

TheoryPrediction deferred(std::string why) {
  TheoryPrediction p;
  p.regime = Regime::DeepPrejudice;
  p.gamma = std::nullopt;
  p.defers_to_no_norm = true;
  p.output_dist = {0.0, std::nan("")};
  p.center_dist = GaussianParams{0.0, std::nan("")};
  p.rationale = std::move(why);
  return p;
}

}  // namespace

TheoryPrediction gamma_prediction(const NetworkConfig& c) {
  c.validate();
  const double s2 = c.sigma_w2;
  const std::size_t L = c.depth();
  const Moments unit = rectified_gaussian_moments(0.0, 1.0);

  if (L == 0) {
    return neutral(s2, "linear readout of centered inputs: node means vanish");
  }
  const bool mean_removing_post =
      c.placement == NormPlacement::PostActivation &&
      (c.norm_kind == NormKind::BatchNorm || c.norm_kind == NormKind::LayerNorm);
  if (mean_removing_post) {
    return neutral(s2, "normalization after ReLU re-centers every hidden node");
  }

  if (c.norm_kind == NormKind::BatchNorm) {  // pre-activation
    if (!c.bn_batch_size) {
      return from_moments(s2, unit, "full-batch BN before ReLU: rectified standard normal nodes");
    }
    if (*c.bn_batch_size < 5) {
      throw ConfigError("bn_batch_size: pre-activation BN prediction needs B >= 5");
    }
    return from_moments(s2, bn_relu_moments(*c.bn_batch_size),
                        "mini-batch BN before ReLU: rectified leave-one-out density");
  }

  // LN/RMS before ReLU, ReLU then RMSNorm, and no normalization share the
  // unnormalized variance ratio.
  if (L > 1) {
    return deferred("variance ratio grows with depth as in the unnormalized ReLU network");
  }
  switch (c.norm_kind) {
    case NormKind::LayerNorm:
    case NormKind::RmsNorm:
      if (c.placement == NormPlacement::PreActivation) {
        return from_moments(s2, unit, "per-sample standardization before ReLU, one layer");
      }
      // ReLU then RMSNorm divides by sqrt(E[ReLU(h)^2]) = sqrt(sigma_w2 / 2).
      return from_moments(s2, {unit.mean * std::sqrt(2.0), unit.variance * 2.0},
                          "RMSNorm after ReLU rescales without re-centering");
    default: {
      const double sw = std::sqrt(s2);
      return from_moments(s2, {unit.mean * sw, unit.variance * s2},
                          "one ReLU layer on standardized inputs");
    }
  }
}

double g0_pdf_from_gamma(double g, double gamma) {
  if (!(g > 0.0 && g < 1.0)) throw DomainError("g0_pdf_from_gamma: g must be in (0, 1)");
  if (!(gamma >= 0.0)) throw DomainError("g0_pdf_from_gamma: gamma must be >= 0");
  if (gamma == 0.0) return g == 0.5 ? HUGE_VAL : 0.0;
  const double q = special::std_normal_quantile(g);
  return std::exp(-0.5 * std::log(gamma) - 0.5 * q * q / gamma + 0.5 * q * q);
}

double g0_cdf_from_gamma(double g, double gamma) {
  if (!(gamma >= 0.0)) throw DomainError("g0_cdf_from_gamma: gamma must be >= 0");
  if (g <= 0.0) return 0.0;
  if (g >= 1.0) return 1.0;
  if (gamma == 0.0) return g < 0.5 ? 0.0 : 1.0;
  return special::std_normal_cdf(special::std_normal_quantile(g) / std::sqrt(gamma));
}

}  // namespace igb::theory
