#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "igb/network.hpp"

namespace igb::theory {

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

struct GaussianParams {
  double mean = 0.0;
  double variance = 0.0;
};

enum class Regime { Neutral, WeakPrejudice, DeepPrejudice };
std::string to_string(Regime r);

/// Predicted initialization statistics of one output node.
///
/// center_dist is the law of m_c = <O_c> over weight draws; nullopt encodes a
/// point mass at 0. output_dist is the dataset law of O_c around its center.
/// When `defers_to_no_norm` is set, gamma and the Gaussian parameters are not
/// available in closed form and equal those of the unnormalized ReLU network
/// of the same depth (estimate them empirically).
struct TheoryPrediction {
  Regime regime = Regime::Neutral;
  std::optional<double> gamma;
  bool defers_to_no_norm = false;
  GaussianParams output_dist;
  std::optional<GaussianParams> center_dist;
  std::string rationale;
};

/// Mean and variance of ReLU(X), X ~ N(mu, sigma^2). DomainError if sigma <= 0.
Moments rectified_gaussian_moments(double mu, double sigma);

/// Density of a leave-one-out normalized Gaussian sample for batch size B:
/// sqrt(B/(B-2)) times a Student-t with B-2 degrees of freedom. B >= 3.
double bn_unit_pdf(double z, std::size_t B);

/// Mean and variance of ReLU applied to that density. B >= 5.
Moments bn_relu_moments(std::size_t B);

/// E[leave-one-out variance] = sigma2 (B - 2) / (B - 1). B >= 2.
double loo_var_expectation(double sigma2, std::size_t B);

/// Closed-form regime and variance ratio at the output layer.
TheoryPrediction gamma_prediction(const NetworkConfig& config);

/// Density of G0 = Phi(Z), Z ~ N(0, gamma), on (0, 1). gamma = 0 is a point
/// mass at 1/2: the density is 0 away from 1/2 and +inf at 1/2.
double g0_pdf_from_gamma(double g, double gamma);
/// Matching CDF; for gamma = 0 it is the step at 1/2 (right-continuous).
double g0_cdf_from_gamma(double g, double gamma);

}  // namespace igb::theory
