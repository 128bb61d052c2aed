#include "igb/network.hpp"

#include <cmath>
#include <string>

#include "igb/error.hpp"
#include "igb/rng.hpp"

namespace igb {

std::string_view to_string(NormKind k) noexcept {
  switch (k) {
    case NormKind::None: return "none";
    case NormKind::BatchNorm: return "batch";
    case NormKind::LayerNorm: return "layer";
    case NormKind::RmsNorm: return "rms";
  }
  return "?";
}

std::string_view to_string(NormPlacement p) noexcept {
  switch (p) {
    case NormPlacement::PreActivation: return "pre";
    case NormPlacement::PostActivation: return "post";
    case NormPlacement::Absent: return "absent";
  }
  return "?";
}

NormKind parse_norm_kind(std::string_view s) {
  if (s == "none" || s == "None") return NormKind::None;
  if (s == "batch" || s == "bn" || s == "BatchNorm") return NormKind::BatchNorm;
  if (s == "layer" || s == "ln" || s == "LayerNorm") return NormKind::LayerNorm;
  if (s == "rms" || s == "RmsNorm") return NormKind::RmsNorm;
  throw ConfigError("norm_kind: unknown value '" + std::string(s) + "'");
}

NormPlacement parse_placement(std::string_view s) {
  if (s == "pre" || s == "PreActivation") return NormPlacement::PreActivation;
  if (s == "post" || s == "PostActivation") return NormPlacement::PostActivation;
  if (s == "absent" || s == "Absent") return NormPlacement::Absent;
  throw ConfigError("placement: unknown value '" + std::string(s) + "'");
}

std::vector<std::string> NetworkConfig::violations() const {
  std::vector<std::string> v;
  if (input_dim < 1) v.push_back("input_dim: must be >= 1");
  for (std::size_t i = 0; i < hidden_widths.size(); ++i) {
    if (hidden_widths[i] < 1) {
      v.push_back("hidden_widths[" + std::to_string(i) + "]: must be >= 1");
    }
  }
  if (num_classes < 2) v.push_back("num_classes: must be >= 2");
  if (!(sigma_w2 > 0.0) || !std::isfinite(sigma_w2)) v.push_back("sigma_w2: must be > 0");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) v.push_back("epsilon: must be >= 0");
  const bool none = norm_kind == NormKind::None;
  if (none != (placement == NormPlacement::Absent)) {
    v.push_back("placement: must be 'absent' exactly when norm_kind is 'none'");
  }
  if (bn_batch_size) {
    if (*bn_batch_size < 2) v.push_back("bn_batch_size: must be >= 2");
    if (loo_estimators && *bn_batch_size < 3) {
      v.push_back("bn_batch_size: must be >= 3 with loo_estimators");
    }
  }
  if (loo_estimators && norm_kind != NormKind::BatchNorm) {
    v.push_back("loo_estimators: only valid with norm_kind 'batch'");
  }
  const bool needs_layer_stats =
      norm_kind == NormKind::LayerNorm && placement != NormPlacement::Absent;
  if (needs_layer_stats) {
    for (std::size_t i = 0; i < hidden_widths.size(); ++i) {
      if (hidden_widths[i] < 2) {
        v.push_back("hidden_widths[" + std::to_string(i) + "]: layer norm needs width >= 2");
      }
    }
  }
  return v;
}

void NetworkConfig::validate() const {
  auto v = violations();
  if (!v.empty()) throw ConfigError(std::move(v));
}

NetworkConfig make_config(std::size_t input_dim, std::size_t width, std::size_t depth,
                          NormKind kind, NormPlacement placement) {
  NetworkConfig c;
  c.input_dim = input_dim;
  c.hidden_widths.assign(depth, width);
  c.norm_kind = kind;
  c.placement = placement;
  return c;
}

Network init_network(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Network net;
  net.config = config;
  Rng rng = make_rng(seed, Stream::Weights);
  std::size_t fan_in = config.input_dim;
  const std::size_t L = config.depth();
  for (std::size_t l = 0; l <= L; ++l) {
    const std::size_t fan_out = l < L ? config.hidden_widths[l] : config.num_classes;
    Matrix w(static_cast<Eigen::Index>(fan_out), static_cast<Eigen::Index>(fan_in));
    fill_normal(w, rng, 0.0, std::sqrt(config.sigma_w2 / static_cast<double>(fan_in)));
    net.weights.push_back(std::move(w));
    net.biases.push_back(RowVector::Zero(static_cast<Eigen::Index>(fan_out)));
    if (l < L && net.has_norm()) {
      const auto n = static_cast<Eigen::Index>(fan_out);
      net.norm_scale.push_back(RowVector::Ones(n));
      net.norm_shift.push_back(RowVector::Zero(n));
      net.running_mean.push_back(RowVector::Zero(n));
      net.running_var.push_back(RowVector::Ones(n));
    }
    fan_in = fan_out;
  }
  return net;
}

namespace {

void check_input(const Network& net, const Matrix& batch, Mode mode) {
  if (batch.rows() < 1) throw ShapeError("forward: empty batch");
  if (batch.cols() != static_cast<Eigen::Index>(net.config.input_dim)) {
    throw ShapeError("forward: batch has " + std::to_string(batch.cols()) +
                     " columns, network expects " + std::to_string(net.config.input_dim));
  }
  if (!all_finite(batch)) throw NonFiniteError("forward: non-finite input");
  const auto& c = net.config;
  if (mode == Mode::Train && c.uses_batch_norm() && c.bn_batch_size &&
      batch.rows() != static_cast<Eigen::Index>(*c.bn_batch_size)) {
    throw ShapeError("forward: Train-mode batch has " + std::to_string(batch.rows()) +
                     " rows, bn_batch_size is " + std::to_string(*c.bn_batch_size));
  }
}

Matrix dense(const Matrix& g, const Matrix& w, const RowVector& b) {
  Matrix h = g * w.transpose();
  h.rowwise() += b;
  return h;
}

// Normalizes x for hidden layer l and applies scale/shift. When cache is
// non-null, everything backward needs is stored in it.
Matrix normalize(const Network& net, std::size_t l, const Matrix& x, Mode mode,
                 NormCache* cache) {
  const auto& c = net.config;
  NormCache local;
  NormCache& nc = cache ? *cache : local;
  switch (c.norm_kind) {
    case NormKind::BatchNorm:
      if (mode == Mode::Eval) {
        norm::batch_norm_columns_with(x, net.running_mean[l], net.running_var[l], c.epsilon,
                                      nc.xhat);
        nc.col_inv_std = (net.running_var[l].array() + c.epsilon).rsqrt().matrix();
        nc.uses_stored_stats = true;
      } else if (c.loo_estimators) {
        nc.loo = norm::batch_norm_loo_columns(x, c.epsilon, nc.xhat);
        // Standard statistics of the same batch feed the running averages.
        nc.batch_mean = x.colwise().mean();
        nc.batch_var = (x.rowwise() - nc.batch_mean).colwise().squaredNorm() /
                       static_cast<double>(x.rows());
      } else {
        auto st = norm::batch_norm_columns(x, c.epsilon, nc.xhat);
        nc.col_inv_std = std::move(st.inv_std);
        nc.batch_mean = std::move(st.mean);
        nc.batch_var = std::move(st.var);
      }
      break;
    case NormKind::LayerNorm:
    case NormKind::RmsNorm: {
      auto st = norm::layer_norm_rows(x, c.epsilon, c.norm_kind == NormKind::LayerNorm, nc.xhat);
      nc.row_inv_std = std::move(st.inv_std);
      break;
    }
    case NormKind::None:
      throw ConfigError("normalize called without a normalization");
  }
  if (cache) nc.input = x;
  Matrix y = nc.xhat;
  y.array().rowwise() *= net.norm_scale[l].array();
  y.rowwise() += net.norm_shift[l];
  return y;
}

Matrix relu_matrix(const Matrix& x) { return x.cwiseMax(0.0); }

}  // namespace

ForwardTrace forward(const Network& net, const Matrix& batch, Mode mode) {
  check_input(net, batch, mode);
  const std::size_t L = net.depth();
  ForwardTrace t;
  t.mode = mode;
  t.input = batch;
  t.pre.reserve(L);
  t.post.reserve(L);
  if (net.has_norm()) {
    t.normed.reserve(L);
    t.norm.resize(L);
  }
  const Matrix* g = &t.input;
  for (std::size_t l = 0; l < L; ++l) {
    t.pre.push_back(dense(*g, net.weights[l], net.biases[l]));
    switch (net.config.placement) {
      case NormPlacement::PreActivation:
        t.normed.push_back(normalize(net, l, t.pre[l], mode, &t.norm[l]));
        t.post.push_back(relu_matrix(t.normed[l]));
        break;
      case NormPlacement::PostActivation:
        t.normed.push_back(normalize(net, l, relu_matrix(t.pre[l]), mode, &t.norm[l]));
        t.post.push_back(t.normed[l]);
        break;
      case NormPlacement::Absent:
        t.post.push_back(relu_matrix(t.pre[l]));
        break;
    }
    g = &t.post[l];
  }
  t.outputs = dense(*g, net.weights[L], net.biases[L]);
  if (!all_finite(t.outputs)) throw NonFiniteError("forward: non-finite outputs");
  return t;
}

Matrix propagate(const Network& net, const Matrix& batch, Mode mode,
                 const PreActivationObserver& observe) {
  check_input(net, batch, mode);
  const std::size_t L = net.depth();
  Matrix g;
  for (std::size_t l = 0; l < L; ++l) {
    Matrix h = dense(l == 0 ? batch : g, net.weights[l], net.biases[l]);
    if (observe) observe(l + 1, h);
    switch (net.config.placement) {
      case NormPlacement::PreActivation:
        g = relu_matrix(normalize(net, l, h, mode, nullptr));
        break;
      case NormPlacement::PostActivation:
        g = normalize(net, l, relu_matrix(h), mode, nullptr);
        break;
      case NormPlacement::Absent:
        g = relu_matrix(h);
        break;
    }
  }
  Matrix out = dense(L == 0 ? batch : g, net.weights[L], net.biases[L]);
  if (observe) observe(L + 1, out);
  if (!all_finite(out)) throw NonFiniteError("propagate: non-finite outputs");
  return out;
}

std::vector<int> predict(const Matrix& outputs) {
  if (outputs.rows() < 1) throw ShapeError("predict: empty batch");
  if (outputs.cols() < 2) throw ShapeError("predict: need at least 2 output columns");
  std::vector<int> cls(static_cast<std::size_t>(outputs.rows()));
  for (Eigen::Index i = 0; i < outputs.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < outputs.cols(); ++j) {
      if (outputs(i, j) > outputs(i, best)) best = j;
    }
    cls[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return cls;
}

}  // namespace igb
