#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "igb/linalg.hpp"
#include "igb/norm_ops.hpp"

namespace igb {

enum class NormKind { None, BatchNorm, LayerNorm, RmsNorm };
enum class NormPlacement { PreActivation, PostActivation, Absent };

std::string_view to_string(NormKind k) noexcept;
std::string_view to_string(NormPlacement p) noexcept;
/// Accepts "none", "batch", "layer", "rms" (and the enum spellings). Throws ConfigError.
NormKind parse_norm_kind(std::string_view s);
/// Accepts "pre", "post", "absent" (and the enum spellings). Throws ConfigError.
NormPlacement parse_placement(std::string_view s);

struct NetworkConfig {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_widths;
  std::size_t num_classes = 2;
  double sigma_w2 = 2.0;
  NormKind norm_kind = NormKind::None;
  NormPlacement placement = NormPlacement::Absent;
  double epsilon = 0.0;
  /// Mini-batch size for BN in Train mode; nullopt means full batch.
  std::optional<std::size_t> bn_batch_size;
  bool loo_estimators = false;

  std::size_t depth() const noexcept { return hidden_widths.size(); }
  bool uses_batch_norm() const noexcept { return norm_kind == NormKind::BatchNorm; }

  /// Every violated constraint, empty when valid.
  std::vector<std::string> violations() const;
  /// Throws ConfigError listing all violations.
  void validate() const;
};

/// Uniform-width helper: `depth` hidden layers of `width` nodes.
NetworkConfig make_config(std::size_t input_dim, std::size_t width, std::size_t depth,
                          NormKind kind, NormPlacement placement);

/// Weights, biases and normalization parameters.
///
/// weights[l] has shape n^(l+1) x n^(l) (row j holds the fan-in of node j),
/// for l = 0..L, where index L is the linear output layer. norm_scale,
/// norm_shift and the running BN statistics have one entry per hidden layer
/// when normalization is configured and are empty otherwise.
struct Network {
  NetworkConfig config;
  std::vector<Matrix> weights;
  std::vector<RowVector> biases;
  std::vector<RowVector> norm_scale;
  std::vector<RowVector> norm_shift;
  std::vector<RowVector> running_mean;
  std::vector<RowVector> running_var;

  std::size_t depth() const noexcept { return config.depth(); }
  bool has_norm() const noexcept { return config.norm_kind != NormKind::None; }
};

/// Kaiming-style Gaussian init, deterministic per seed. Biases 0, scale 1, shift 0,
/// running mean 0 and running variance 1.
Network init_network(const NetworkConfig& config, std::uint64_t seed);

/// Train: BN uses current-batch statistics; rows must equal bn_batch_size when set.
/// Eval: BN uses the stored running statistics.
/// FullBatch: BN statistics over every row regardless of bn_batch_size.
/// LN and RMSNorm are per sample in every mode.
enum class Mode { Train, Eval, FullBatch };

/// Per-layer values needed to differentiate a normalization.
struct NormCache {
  Matrix input;  // normalizer input: h for pre placement, ReLU(h) for post
  Matrix xhat;   // normalized values before scale/shift
  RowVector col_inv_std;       // standard BN
  norm::LooStats loo;          // leave-one-out BN
  Vector row_inv_std;          // LN / RMSNorm
  RowVector batch_mean;        // standard BN batch statistics (for running averages)
  RowVector batch_var;
  bool uses_stored_stats = false;
};

struct ForwardTrace {
  Mode mode = Mode::Train;
  Matrix input;
  std::vector<Matrix> pre;     // h^(l), l = 1..L
  std::vector<Matrix> normed;  // after normalization and affine, empty without norm
  std::vector<Matrix> post;    // g^(l)
  std::vector<NormCache> norm;
  Matrix outputs;              // O = h^(L+1)
};

ForwardTrace forward(const Network& net, const Matrix& batch, Mode mode);

/// Called once per layer l = 1..L+1 with that layer's pre-activation matrix.
using PreActivationObserver = std::function<void(std::size_t layer, const Matrix& pre)>;

/// Lean forward pass that keeps only the current layer; returns the outputs.
Matrix propagate(const Network& net, const Matrix& batch, Mode mode,
                 const PreActivationObserver& observe = {});

/// Row-wise argmax; ties go to the lowest index.
std::vector<int> predict(const Matrix& outputs);

}  // namespace igb
