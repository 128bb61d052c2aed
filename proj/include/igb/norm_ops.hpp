#pragma once

#include <span>
#include <vector>

#include "igb/linalg.hpp"

namespace igb::norm {

enum class Estimator { Standard, LeaveOneOut };

/// Batch statistics used by a normalization.
///
/// Standard: one entry, mean and sqrt of the divide-by-B variance.
/// LeaveOneOut: one entry per sample a, computed over the other B-1 samples
/// with a divide-by-(B-1) variance.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  Estimator estimator = Estimator::Standard;
};

struct Normalized {
  std::vector<double> values;
  NormStats stats;
};

/// (x_b - mean) / sqrt(var + eps) with the biased variance. Requires B >= 2.
Normalized batch_norm(std::span<const double> column, double eps);

/// Leave-one-out standardization: sample a is normalized with mean and
/// variance estimated on the remaining B-1 samples, which makes it
/// independent of its own normalizer for Gaussian columns. Requires B >= 3.
Normalized batch_norm_loo(std::span<const double> column, double eps);

/// Per-sample normalization over a layer. With subtract_mean = false this is
/// RMSNorm: x_i / sqrt(mean(x^2) + eps).
std::vector<double> layer_norm(std::span<const double> row, double eps, bool subtract_mean);

inline double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }
std::vector<double> relu(std::span<const double> x);

// Matrix kernels used by the network. Rows are samples, columns are nodes.
// Every kernel writes the normalized value before any affine transform.

struct ColumnStats {
  RowVector mean;
  RowVector var;      // biased
  RowVector inv_std;  // 1 / sqrt(var + eps)
};

/// Column-wise standard BN over all rows.
ColumnStats batch_norm_columns(const Matrix& x, double eps, Matrix& xhat);

/// Column-wise BN with externally supplied statistics (eval mode).
void batch_norm_columns_with(const Matrix& x, const RowVector& mean, const RowVector& var,
                             double eps, Matrix& xhat);

struct LooStats {
  Matrix mean;     // per sample, per node
  Matrix inv_std;  // per sample, per node
};

/// Column-wise leave-one-out BN over all rows (rows >= 3).
LooStats batch_norm_loo_columns(const Matrix& x, double eps, Matrix& xhat);

struct RowStats {
  Vector mean;  // zero for RMS mode
  Vector inv_std;
};

/// Row-wise LayerNorm / RMSNorm.
RowStats layer_norm_rows(const Matrix& x, double eps, bool subtract_mean, Matrix& xhat);

/// Gradient of standard column BN with respect to its input.
Matrix batch_norm_columns_backward(const Matrix& xhat, const RowVector& inv_std,
                                   const Matrix& dxhat);

/// Gradient of leave-one-out column BN with respect to its input.
Matrix batch_norm_loo_columns_backward(const Matrix& x, const LooStats& stats, const Matrix& xhat,
                                       const Matrix& dxhat);

/// Gradient of row-wise LayerNorm / RMSNorm with respect to its input.
Matrix layer_norm_rows_backward(const Matrix& xhat, const Vector& inv_std, const Matrix& dxhat,
                                bool subtract_mean);

}  // namespace igb::norm
