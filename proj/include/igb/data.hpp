#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "igb/linalg.hpp"

namespace igb {

/// Inputs (one row per sample) with integer labels in [0, num_classes).
///
/// provenance records how the data was produced: generator name and
/// parameters with the seed, or source file paths with their SHA-256, plus
/// any transforms applied afterwards (in order).
struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  std::size_t num_classes = 1;
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(inputs.cols()); }
  /// Throws ShapeError / NonFiniteError / DomainError if an invariant fails.
  void check() const;
  std::vector<std::size_t> class_counts() const;
};

/// Two balanced classes: class 0 ~ N(-mu 1, I), class 1 ~ N(+mu 1, I) with
/// mu = mu_scale / sqrt(d), rows shuffled.
Dataset gaussian_blob(std::size_t n_per_class, std::size_t d, double mu_scale,
                      std::uint64_t seed);

/// N(0, I) inputs, all labels 0.
Dataset unlabeled_gaussian(std::size_t n, std::size_t d, std::uint64_t seed);

/// inputs + c.
Dataset shift_pixels(const Dataset& data, double c);

/// Per-feature zero mean and unit (biased) variance. Constant features are
/// only centered and listed under provenance "degenerate_features".
Dataset standardize(const Dataset& data);

/// Replaces every label by map[label]; labels missing from the map are an error.
Dataset remap_labels(const Dataset& data, const std::map<int, int>& map);

/// Column by header name or by zero-based index.
using LabelColumn = std::variant<std::string, std::size_t>;

/// CSV with a header row; every non-label column is a feature. Parse errors
/// report the line number.
Dataset load_csv(const std::filesystem::path& path, const LabelColumn& label_column);
/// Writes header f0..f{d-1},label with round-trip exact doubles.
void write_csv(const std::filesystem::path& path, const Dataset& data);

/// IDX image file (magic 0x00000803, uint8 pixels, flattened) plus IDX label
/// file (magic 0x00000801). Pixels are returned unscaled in [0, 255].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
/// Inverse of load_idx; inputs must be integers in [0, 255] and labels in [0, 255].
void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
               const Dataset& data, std::uint32_t rows, std::uint32_t cols);

/// Writes data.provenance as pretty JSON next to a data file.
void write_provenance(const std::filesystem::path& path, const Dataset& data);

}  // namespace igb
