#include "igb/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "igb/error.hpp"
#include "igb/rng.hpp"

namespace igb {

std::vector<std::string> TrainConfig::violations(const NetworkConfig& net) const {
  std::vector<std::string> v;
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    v.push_back("learning_rate: must be finite and >= 0");
  }
  if (batch_size < 1) v.push_back("batch_size: must be >= 1");
  if (eval_cadence < 1) v.push_back("eval_cadence: must be >= 1");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) v.push_back("bn_momentum: must be in [0, 1)");
  if (net.uses_batch_norm()) {
    if (batch_size < 2) v.push_back("batch_size: must be >= 2 with batch norm");
    if (net.loo_estimators && batch_size < 3) {
      v.push_back("batch_size: must be >= 3 with leave-one-out batch norm");
    }
    if (net.bn_batch_size && *net.bn_batch_size != batch_size) {
      v.push_back("batch_size: must equal network bn_batch_size (" +
                  std::to_string(*net.bn_batch_size) + ")");
    }
  }
  return v;
}

void TrainConfig::validate(const NetworkConfig& net) const {
  auto v = violations(net);
  if (!v.empty()) throw ConfigError(std::move(v));
}

Matrix softmax(const Matrix& outputs) {
  Matrix p = outputs.colwise() - outputs.rowwise().maxCoeff();
  p = p.array().exp().matrix();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

double softmax_cross_entropy(const Matrix& outputs, const std::vector<int>& labels,
                             Matrix* d_outputs) {
  const Eigen::Index n = outputs.rows();
  if (static_cast<std::size_t>(n) != labels.size() || n == 0) {
    throw ShapeError("softmax_cross_entropy: outputs and labels differ in length");
  }
  const Vector mx = outputs.rowwise().maxCoeff();
  const Matrix shifted = outputs.colwise() - mx;
  const Vector lse = shifted.array().exp().rowwise().sum().log().matrix();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= outputs.cols()) throw DomainError("softmax_cross_entropy: label out of range");
    loss += lse(i) - shifted(i, y);
  }
  loss /= static_cast<double>(n);
  if (d_outputs) {
    Matrix p = (shifted.colwise() - lse).array().exp().matrix();
    for (Eigen::Index i = 0; i < n; ++i) p(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    *d_outputs = p / static_cast<double>(n);
  }
  return loss;
}

namespace {

Matrix relu_mask(const Matrix& x, const Matrix& d) {
  return (x.array() > 0.0).select(d, 0.0);
}

// dL/d(normalizer input) given dL/d(xhat).
Matrix norm_backward(const Network& net, const NormCache& c, const Matrix& dxhat) {
  switch (net.config.norm_kind) {
    case NormKind::BatchNorm:
      if (c.uses_stored_stats) {
        Matrix dx = dxhat;
        dx.array().rowwise() *= c.col_inv_std.array();
        return dx;
      }
      if (net.config.loo_estimators) {
        return norm::batch_norm_loo_columns_backward(c.input, c.loo, c.xhat, dxhat);
      }
      return norm::batch_norm_columns_backward(c.xhat, c.col_inv_std, dxhat);
    case NormKind::LayerNorm:
      return norm::layer_norm_rows_backward(c.xhat, c.row_inv_std, dxhat, true);
    case NormKind::RmsNorm:
      return norm::layer_norm_rows_backward(c.xhat, c.row_inv_std, dxhat, false);
    case NormKind::None:
      break;
  }
  throw ConfigError("norm_backward called without a normalization");
}

}  // namespace

Gradients backward_from_outputs(const Network& net, const ForwardTrace& t,
                                const Matrix& d_outputs) {
  const std::size_t L = net.depth();
  if (t.pre.size() != L || d_outputs.rows() != t.outputs.rows() ||
      d_outputs.cols() != t.outputs.cols()) {
    throw ShapeError("backward: trace does not match network or upstream gradient");
  }
  Gradients g;
  g.weights.resize(L + 1);
  g.biases.resize(L + 1);
  if (net.has_norm()) {
    g.norm_scale.resize(L);
    g.norm_shift.resize(L);
  }
  Matrix dh = d_outputs;
  for (std::size_t k = L + 1; k-- > 0;) {
    const Matrix& g_in = k == 0 ? t.input : t.post[k - 1];
    g.weights[k] = dh.transpose() * g_in;
    g.biases[k] = dh.colwise().sum();
    if (k == 0) break;
    const std::size_t l = k - 1;  // hidden layer feeding layer k
    Matrix dg = dh * net.weights[k];
    switch (net.config.placement) {
      case NormPlacement::Absent:
        dh = relu_mask(t.pre[l], dg);
        break;
      case NormPlacement::PreActivation: {
        const Matrix dn = relu_mask(t.normed[l], dg);
        g.norm_scale[l] = (dn.array() * t.norm[l].xhat.array()).colwise().sum().matrix();
        g.norm_shift[l] = dn.colwise().sum();
        Matrix dxhat = dn;
        dxhat.array().rowwise() *= net.norm_scale[l].array();
        dh = norm_backward(net, t.norm[l], dxhat);
        break;
      }
      case NormPlacement::PostActivation: {
        g.norm_scale[l] = (dg.array() * t.norm[l].xhat.array()).colwise().sum().matrix();
        g.norm_shift[l] = dg.colwise().sum();
        Matrix dxhat = dg;
        dxhat.array().rowwise() *= net.norm_scale[l].array();
        dh = relu_mask(t.pre[l], norm_backward(net, t.norm[l], dxhat));
        break;
      }
    }
  }
  return g;
}

Gradients backward(const Network& net, const ForwardTrace& trace, const std::vector<int>& labels) {
  Matrix d_out;
  const double loss = softmax_cross_entropy(trace.outputs, labels, &d_out);
  Gradients g = backward_from_outputs(net, trace, d_out);
  g.loss = loss;
  return g;
}

void sgd_step(Network& net, const Gradients& g, double lr) {
  for (std::size_t k = 0; k < net.weights.size(); ++k) {
    net.weights[k] -= lr * g.weights[k];
    net.biases[k] -= lr * g.biases[k];
  }
  for (std::size_t l = 0; l < g.norm_scale.size(); ++l) {
    net.norm_scale[l] -= lr * g.norm_scale[l];
    net.norm_shift[l] -= lr * g.norm_shift[l];
  }
}

namespace {

struct SetScore {
  double loss = 0.0;
  double acc = 0.0;
  std::vector<double> acc_class;
  std::vector<double> guesses;
};

SetScore score(const Network& net, const Dataset& d) {
  const Matrix out = propagate(net, d.inputs, Mode::Eval);
  SetScore s;
  s.loss = softmax_cross_entropy(out, d.labels);
  const auto pred = predict(out);
  const std::size_t c = net.config.num_classes;
  std::vector<std::size_t> correct(c, 0), total(c, 0), guessed(c, 0);
  std::size_t all_correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto y = static_cast<std::size_t>(d.labels[i]);
    ++total[y];
    ++guessed[static_cast<std::size_t>(pred[i])];
    if (pred[i] == d.labels[i]) {
      ++correct[y];
      ++all_correct;
    }
  }
  const double n = static_cast<double>(pred.size());
  s.acc = static_cast<double>(all_correct) / n;
  s.acc_class.resize(c);
  s.guesses.resize(c);
  for (std::size_t k = 0; k < c; ++k) {
    s.acc_class[k] = total[k] ? static_cast<double>(correct[k]) / static_cast<double>(total[k])
                              : std::nan("");
    s.guesses[k] = static_cast<double>(guessed[k]) / n;
  }
  return s;
}

EvalRecord evaluate(const Network& net, std::size_t step, const Dataset& train,
                    const Dataset* test) {
  EvalRecord r;
  r.step = step;
  SetScore s;
  try {
    s = score(net, train);
  } catch (const NonFiniteError&) {
    throw DivergenceError(step, std::nan(""));
  }
  if (!std::isfinite(s.loss)) throw DivergenceError(step, s.loss);
  r.loss = s.loss;
  r.acc_train = s.acc;
  r.acc_class_train = std::move(s.acc_class);
  r.guess_fractions = std::move(s.guesses);
  r.max_guess_fraction = *std::max_element(r.guess_fractions.begin(), r.guess_fractions.end());
  if (test) {
    SetScore ts = score(net, *test);
    r.acc_test = ts.acc;
    r.acc_class_test = std::move(ts.acc_class);
  }
  return r;
}

void check_data(const Network& net, const Dataset& d, const char* which) {
  d.check();
  if (d.dim() != net.config.input_dim) {
    throw ShapeError(std::string(which) + " data has " + std::to_string(d.dim()) +
                     " features, network expects " + std::to_string(net.config.input_dim));
  }
  for (int y : d.labels) {
    if (static_cast<std::size_t>(y) >= net.config.num_classes) {
      throw DomainError(std::string(which) + " data label " + std::to_string(y) +
                        " exceeds the network's classes");
    }
  }
}

void seed_running_stats(Network& net, const Dataset& d) {
  if (!net.config.uses_batch_norm()) return;
  const ForwardTrace t = forward(net, d.inputs, Mode::FullBatch);
  for (std::size_t l = 0; l < net.depth(); ++l) {
    net.running_mean[l] = t.norm[l].batch_mean;
    net.running_var[l] = t.norm[l].batch_var;
  }
}

}  // namespace

TrainTrajectory train_network(Network& net, const Dataset& train_data, const Dataset* test_data,
                              const TrainConfig& cfg) {
  cfg.validate(net.config);
  check_data(net, train_data, "train");
  if (test_data) check_data(net, *test_data, "test");
  const std::size_t n = train_data.size();
  const std::size_t per_epoch = n / cfg.batch_size;
  if (per_epoch == 0) {
    throw ConfigError("batch_size: larger than the training set (" + std::to_string(n) + ")");
  }

  TrainTrajectory traj;
  traj.num_classes = net.config.num_classes;
  traj.permutation.resize(traj.num_classes);
  std::iota(traj.permutation.begin(), traj.permutation.end(), 0);
  traj.dropped_per_epoch = n - per_epoch * cfg.batch_size;

  seed_running_stats(net, train_data);
  traj.records.push_back(evaluate(net, 0, train_data, test_data));

  Rng shuffle = make_rng(cfg.seed, Stream::Shuffle);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  Matrix xb(static_cast<Eigen::Index>(cfg.batch_size), train_data.inputs.cols());
  std::vector<int> yb(cfg.batch_size);
  std::size_t batch_in_epoch = per_epoch;
  const bool bn = net.config.uses_batch_norm();

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    if (batch_in_epoch == per_epoch) {
      std::shuffle(order.begin(), order.end(), shuffle);
      batch_in_epoch = 0;
    }
    const std::size_t off = batch_in_epoch * cfg.batch_size;
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      const Eigen::Index src = order[off + i];
      xb.row(static_cast<Eigen::Index>(i)) = train_data.inputs.row(src);
      yb[i] = train_data.labels[static_cast<std::size_t>(src)];
    }
    ++batch_in_epoch;

    ForwardTrace t;
    try {
      t = forward(net, xb, Mode::Train);
    } catch (const NonFiniteError&) {
      throw DivergenceError(step, std::nan(""));
    }
    const Gradients g = backward(net, t, yb);
    if (!std::isfinite(g.loss)) throw DivergenceError(step, g.loss);
    sgd_step(net, g, cfg.learning_rate);
    if (bn) {
      const double m = cfg.bn_momentum;
      for (std::size_t l = 0; l < net.depth(); ++l) {
        net.running_mean[l] = m * net.running_mean[l] + (1.0 - m) * t.norm[l].batch_mean;
        net.running_var[l] = m * net.running_var[l] + (1.0 - m) * t.norm[l].batch_var;
      }
    }
    if (step % cfg.eval_cadence == 0 || step == cfg.steps) {
      traj.records.push_back(evaluate(net, step, train_data, test_data));
    }
  }
  return cfg.relabel_dominant ? relabel_dominant(traj) : traj;
}

std::vector<std::size_t> dominant_permutation(const std::vector<double>& fractions) {
  std::vector<std::size_t> perm(fractions.size());
  std::iota(perm.begin(), perm.end(), 0);
  if (fractions.empty()) return perm;
  const auto dom = static_cast<std::size_t>(
      std::max_element(fractions.begin(), fractions.end()) - fractions.begin());
  std::swap(perm[0], perm[dom]);
  return perm;
}

namespace {

std::vector<double> permuted(const std::vector<double>& v, const std::vector<std::size_t>& perm) {
  if (v.empty()) return v;
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[perm[k]];
  return out;
}

}  // namespace

TrainTrajectory relabel_dominant(const TrainTrajectory& t) {
  if (t.records.empty()) return t;
  const auto local = dominant_permutation(t.records.front().guess_fractions);
  TrainTrajectory out = t;
  for (auto& r : out.records) {
    r.acc_class_train = permuted(r.acc_class_train, local);
    r.acc_class_test = permuted(r.acc_class_test, local);
    r.guess_fractions = permuted(r.guess_fractions, local);
  }
  // Compose with any earlier relabeling so permutation stays relative to the original labels.
  for (std::size_t k = 0; k < local.size(); ++k) out.permutation[k] = t.permutation[local[k]];
  out.relabeled = true;
  return out;
}

GuessStats relabel_dominant(const GuessStats& g) {
  const auto perm = dominant_permutation(g.fractions);
  GuessStats out = g;
  for (std::size_t k = 0; k < perm.size(); ++k) {
    out.counts[k] = g.counts[perm[k]];
    out.fractions[k] = g.fractions[perm[k]];
  }
  out.dominant_class = 0;
  return out;
}

std::vector<double> bias_trajectory(const TrainTrajectory& t) {
  std::vector<double> s;
  s.reserve(t.records.size());
  for (const auto& r : t.records) s.push_back(r.max_guess_fraction);
  return s;
}

std::optional<std::size_t> convergence_step(const TrainTrajectory& t, double level) {
  for (const auto& r : t.records) {
    if (r.acc_train >= level) return r.step;
  }
  return std::nullopt;
}

}  // namespace igb
