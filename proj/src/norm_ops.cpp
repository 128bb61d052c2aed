#include "igb/norm_ops.hpp"

#include <cmath>
#include <string>

#include "igb/error.hpp"

namespace igb::norm {

namespace {

void require_nondegenerate(double var, double eps, const char* what) {
  if (eps == 0.0 && !(var > 0.0)) {
    throw DegenerateVarianceError(std::string(what) + ": zero variance with eps = 0");
  }
}

}  // namespace

Normalized batch_norm(std::span<const double> column, double eps) {
  const std::size_t n = column.size();
  if (n < 2) throw DomainError("batch_norm: batch size must be >= 2, got " + std::to_string(n));
  double mean = 0.0;
  for (double v : column) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : column) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  require_nondegenerate(var, eps, "batch_norm");

  const double inv = 1.0 / std::sqrt(var + eps);
  Normalized out;
  out.values.reserve(n);
  for (double v : column) out.values.push_back((v - mean) * inv);
  out.stats = {{mean}, {std::sqrt(var)}, Estimator::Standard};
  return out;
}

Normalized batch_norm_loo(std::span<const double> column, double eps) {
  const std::size_t n = column.size();
  if (n < 3) {
    throw DomainError("batch_norm_loo: batch size must be >= 3, got " + std::to_string(n));
  }
  // Shift by the full mean first; every leave-one-out statistic is
  // shift-equivariant and the centered sums are better conditioned.
  double center = 0.0;
  for (double v : column) center += v;
  center /= static_cast<double>(n);
  double s = 0.0, q = 0.0;
  for (double v : column) {
    s += v - center;
    q += (v - center) * (v - center);
  }
  const double m = static_cast<double>(n - 1);

  Normalized out;
  out.values.reserve(n);
  out.stats.estimator = Estimator::LeaveOneOut;
  out.stats.mean.reserve(n);
  out.stats.stddev.reserve(n);
  for (double v : column) {
    const double xa = v - center;
    const double mu = (s - xa) / m;
    const double var = std::max(0.0, (q - xa * xa) / m - mu * mu);
    require_nondegenerate(var, eps, "batch_norm_loo");
    out.values.push_back((xa - mu) / std::sqrt(var + eps));
    out.stats.mean.push_back(mu + center);
    out.stats.stddev.push_back(std::sqrt(var));
  }
  return out;
}

std::vector<double> layer_norm(std::span<const double> row, double eps, bool subtract_mean) {
  const std::size_t n = row.size();
  if (n < (subtract_mean ? 2u : 1u)) {
    throw DomainError("layer_norm: row too short (" + std::to_string(n) + ")");
  }
  double mean = 0.0;
  if (subtract_mean) {
    for (double v : row) mean += v;
    mean /= static_cast<double>(n);
  }
  double var = 0.0;
  for (double v : row) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  require_nondegenerate(var, eps, subtract_mean ? "layer_norm" : "rms_norm");
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> out;
  out.reserve(n);
  for (double v : row) out.push_back((v - mean) * inv);
  return out;
}

std::vector<double> relu(std::span<const double> x) {
  std::vector<double> out;
  out.reserve(x.size());
  for (double v : x) out.push_back(relu(v));
  return out;
}

ColumnStats batch_norm_columns(const Matrix& x, double eps, Matrix& xhat) {
  if (x.rows() < 2) throw ShapeError("batch norm needs at least 2 rows");
  ColumnStats st;
  st.mean = x.colwise().mean();
  xhat = x.rowwise() - st.mean;
  st.var = xhat.colwise().squaredNorm() / static_cast<double>(x.rows());
  if (eps == 0.0 && !(st.var.array() > 0.0).all()) {
    throw DegenerateVarianceError("batch norm: zero-variance column with eps = 0");
  }
  st.inv_std = (st.var.array() + eps).rsqrt().matrix();
  xhat.array().rowwise() *= st.inv_std.array();
  return st;
}

void batch_norm_columns_with(const Matrix& x, const RowVector& mean, const RowVector& var,
                             double eps, Matrix& xhat) {
  if (eps == 0.0 && !(var.array() > 0.0).all()) {
    throw DegenerateVarianceError("batch norm (stored statistics): zero variance with eps = 0");
  }
  const RowVector inv = (var.array() + eps).rsqrt().matrix();
  xhat = x.rowwise() - mean;
  xhat.array().rowwise() *= inv.array();
}

LooStats batch_norm_loo_columns(const Matrix& x, double eps, Matrix& xhat) {
  const Eigen::Index b = x.rows();
  if (b < 3) throw ShapeError("leave-one-out batch norm needs at least 3 rows");
  const RowVector center = x.colwise().mean();
  const Matrix xc = x.rowwise() - center;
  const RowVector s = xc.colwise().sum();
  const RowVector q = xc.colwise().squaredNorm();
  const double m = static_cast<double>(b - 1);

  LooStats st;
  st.mean.resize(b, x.cols());
  st.inv_std.resize(b, x.cols());
  xhat.resize(b, x.cols());
  for (Eigen::Index a = 0; a < b; ++a) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double xa = xc(a, j);
      const double mu = (s(j) - xa) / m;
      const double var = std::max(0.0, (q(j) - xa * xa) / m - mu * mu);
      if (eps == 0.0 && !(var > 0.0)) {
        throw DegenerateVarianceError("leave-one-out batch norm: zero residual variance");
      }
      const double inv = 1.0 / std::sqrt(var + eps);
      st.mean(a, j) = mu + center(j);
      st.inv_std(a, j) = inv;
      xhat(a, j) = (xa - mu) * inv;
    }
  }
  return st;
}

RowStats layer_norm_rows(const Matrix& x, double eps, bool subtract_mean, Matrix& xhat) {
  const auto n = static_cast<double>(x.cols());
  if (x.cols() < (subtract_mean ? 2 : 1)) throw ShapeError("layer norm: layer too narrow");
  RowStats st;
  if (subtract_mean) {
    st.mean = x.rowwise().mean();
    xhat = x.colwise() - st.mean;
  } else {
    st.mean = Vector::Zero(x.rows());
    xhat = x;
  }
  const Vector var = xhat.rowwise().squaredNorm() / n;
  if (eps == 0.0 && !(var.array() > 0.0).all()) {
    throw DegenerateVarianceError("layer norm: zero-variance sample with eps = 0");
  }
  st.inv_std = (var.array() + eps).rsqrt().matrix();
  xhat.array().colwise() *= st.inv_std.array();
  return st;
}

Matrix batch_norm_columns_backward(const Matrix& xhat, const RowVector& inv_std,
                                   const Matrix& dxhat) {
  const double b = static_cast<double>(xhat.rows());
  const RowVector mean_d = dxhat.colwise().sum() / b;
  const RowVector mean_dx = (dxhat.array() * xhat.array()).colwise().sum().matrix() / b;
  Matrix dx = dxhat.rowwise() - mean_d;
  dx.array() -= xhat.array().rowwise() * mean_dx.array();
  dx.array().rowwise() *= inv_std.array();
  return dx;
}

Matrix batch_norm_loo_columns_backward(const Matrix& x, const LooStats& st, const Matrix& xhat,
                                       const Matrix& dxhat) {
  // y_a = (x_a - mu_a) / s_a with mu_a, s_a over b != a. For c != a:
  //   d mu_a / d x_c = 1/(B-1),  d s_a / d x_c = (x_c - mu_a) / ((B-1) s_a).
  // Sums over a are done once per column, giving O(B) per node.
  const Eigen::Index b = x.rows();
  const double m = static_cast<double>(b - 1);
  Matrix dx(b, x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double su = 0.0, sv = 0.0, svmu = 0.0;
    for (Eigen::Index a = 0; a < b; ++a) {
      const double u = dxhat(a, j) * st.inv_std(a, j);
      const double v = u * xhat(a, j) * st.inv_std(a, j);
      su += u;
      sv += v;
      svmu += v * st.mean(a, j);
    }
    for (Eigen::Index c = 0; c < b; ++c) {
      const double u = dxhat(c, j) * st.inv_std(c, j);
      const double v = u * xhat(c, j) * st.inv_std(c, j);
      const double xc = x(c, j);
      dx(c, j) = u - (su - u) / m - (xc * (sv - v) - (svmu - v * st.mean(c, j))) / m;
    }
  }
  return dx;
}

Matrix layer_norm_rows_backward(const Matrix& xhat, const Vector& inv_std, const Matrix& dxhat,
                                bool subtract_mean) {
  const double n = static_cast<double>(xhat.cols());
  const Vector mean_dx = (dxhat.array() * xhat.array()).rowwise().sum().matrix() / n;
  Matrix dx = dxhat;
  if (subtract_mean) {
    const Vector mean_d = dxhat.rowwise().sum() / n;
    dx.colwise() -= mean_d;
  }
  dx.array() -= xhat.array().colwise() * mean_dx.array();
  dx.array().colwise() *= inv_std.array();
  return dx;
}

}  // namespace igb::norm
