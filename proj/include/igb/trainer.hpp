#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "igb/data.hpp"
#include "igb/metrics.hpp"
#include "igb/network.hpp"

namespace igb {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 512;
  std::size_t steps = 2000;
  std::size_t eval_cadence = 10;
  bool relabel_dominant = true;
  std::uint64_t seed = 0;
  /// Running BN statistics: running = momentum * running + (1 - momentum) * batch.
  double bn_momentum = 0.9;

  std::vector<std::string> violations(const NetworkConfig& net) const;
  void validate(const NetworkConfig& net) const;
};

/// Gradients with the same layout as the network parameters.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<RowVector> biases;
  std::vector<RowVector> norm_scale;
  std::vector<RowVector> norm_shift;
  double loss = 0.0;
};

/// Mean softmax cross-entropy over rows. When `d_outputs` is non-null it
/// receives dLoss/dOutputs = (softmax - onehot) / rows.
double softmax_cross_entropy(const Matrix& outputs, const std::vector<int>& labels,
                             Matrix* d_outputs = nullptr);

/// Row-wise softmax.
Matrix softmax(const Matrix& outputs);

/// Exact gradients of the mean cross-entropy of `trace` with respect to every
/// parameter. Batch statistics of BN (standard or leave-one-out) and
/// per-sample LN/RMS statistics are differentiated through.
Gradients backward(const Network& net, const ForwardTrace& trace, const std::vector<int>& labels);

/// Same, starting from an arbitrary upstream gradient on the outputs.
Gradients backward_from_outputs(const Network& net, const ForwardTrace& trace,
                                const Matrix& d_outputs);

/// Plain SGD update in place.
void sgd_step(Network& net, const Gradients& g, double learning_rate);

/// One evaluation of the full train (and optional test) sets in Eval mode.
struct EvalRecord {
  std::size_t step = 0;
  double loss = 0.0;  // train set
  double acc_train = 0.0;
  std::vector<double> acc_class_train;
  std::optional<double> acc_test;
  std::vector<double> acc_class_test;
  std::vector<double> guess_fractions;  // train set
  double max_guess_fraction = 0.0;
};

struct TrainTrajectory {
  std::size_t num_classes = 2;
  std::vector<EvalRecord> records;
  /// permutation[new_class] = original class. Identity unless relabeled.
  std::vector<std::size_t> permutation;
  bool relabeled = false;
  std::size_t dropped_per_epoch = 0;  // samples left out of each epoch's last partial batch
};

/// Mini-batch SGD on softmax cross-entropy. Evaluates at step 0, then every
/// eval_cadence steps and after the last step. Running BN statistics start
/// from the full training set statistics of the initial network.
/// Throws DivergenceError on a non-finite loss.
TrainTrajectory train_network(Network& net, const Dataset& train_data, const Dataset* test_data,
                              const TrainConfig& cfg);

/// Permutation that swaps the most-predicted class into index 0.
std::vector<std::size_t> dominant_permutation(const std::vector<double>& fractions);
/// Relabels every per-class series so class 0 is the step-0 dominant class.
TrainTrajectory relabel_dominant(const TrainTrajectory& t);
GuessStats relabel_dominant(const GuessStats& g);

/// max_c G_c at every recorded step.
std::vector<double> bias_trajectory(const TrainTrajectory& t);

/// First recorded step with global train accuracy >= level; nullopt if never.
std::optional<std::size_t> convergence_step(const TrainTrajectory& t, double level);

}  // namespace igb
