#include "igb/sampling.hpp"

#include <algorithm>
#include <random>

#include "igb/error.hpp"
#include "igb/parallel.hpp"
#include "igb/rng.hpp"

namespace igb::norm {

ColumnDraws sample_normalized_columns(std::size_t B, std::size_t columns, std::uint64_t seed,
                                      Estimator estimator, std::size_t threads) {
  if (B < (estimator == Estimator::LeaveOneOut ? 3u : 2u)) {
    throw DomainError("sample_normalized_columns: batch size too small");
  }
  constexpr std::size_t kChunk = 8192;
  const std::size_t chunks = (columns + kChunk - 1) / kChunk;
  ColumnDraws out;
  out.normalized.resize(columns);
  out.variance.resize(columns);
  parallel_for(chunks, threads, [&](std::size_t c) {
    Rng rng = make_rng(mix_seed(seed) + c, Stream::Sampling);
    std::normal_distribution<double> normal;
    std::vector<double> col(B);
    const std::size_t end = std::min(columns, (c + 1) * kChunk);
    for (std::size_t k = c * kChunk; k < end; ++k) {
      for (auto& v : col) v = normal(rng);
      const Normalized r =
          estimator == Estimator::LeaveOneOut ? batch_norm_loo(col, 0.0) : batch_norm(col, 0.0);
      out.normalized[k] = r.values[0];
      const double sd = r.stats.stddev[0];
      out.variance[k] = sd * sd;
    }
  });
  return out;
}

}  // namespace igb::norm
