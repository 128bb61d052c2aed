#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "igb/norm_ops.hpp"

namespace igb::norm {

/// Monte Carlo draws of normalized Gaussian samples. Each draw comes from
/// its own column of B i.i.d. N(0, 1) values, so draws are independent.
/// Columns are generated in fixed-size chunks with per-chunk seeds, so the
/// result does not depend on the thread count.
struct ColumnDraws {
  std::vector<double> normalized;  // sample 0 of each column after normalization
  std::vector<double> variance;    // that sample's variance estimate (sigma-tilde^2 or biased)
};

ColumnDraws sample_normalized_columns(std::size_t B, std::size_t columns, std::uint64_t seed,
                                      Estimator estimator, std::size_t threads = 0);

}  // namespace igb::norm
