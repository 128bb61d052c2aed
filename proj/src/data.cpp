#include "igb/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "igb/error.hpp"
#include "igb/hash.hpp"
#include "igb/io.hpp"
#include "igb/rng.hpp"

namespace igb {

using nlohmann::json;

void Dataset::check() const {
  if (labels.empty()) throw ShapeError("dataset: no samples");
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
    throw ShapeError("dataset: " + std::to_string(inputs.rows()) + " input rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (inputs.cols() < 1) throw ShapeError("dataset: zero features");
  if (!all_finite(inputs)) throw NonFiniteError("dataset: non-finite input value");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw DomainError("dataset: label " + std::to_string(labels[i]) + " at row " +
                        std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> c(num_classes, 0);
  for (int y : labels) ++c.at(static_cast<std::size_t>(y));
  return c;
}

namespace {

void append_transform(Dataset& d, json step) {
  if (!d.provenance.contains("transforms")) d.provenance["transforms"] = json::array();
  d.provenance["transforms"].push_back(std::move(step));
}

}  // namespace

Dataset gaussian_blob(std::size_t n_per_class, std::size_t d, double mu_scale,
                      std::uint64_t seed) {
  if (n_per_class < 1 || d < 1) throw DomainError("gaussian_blob: n_per_class and d must be >= 1");
  if (!std::isfinite(mu_scale)) throw DomainError("gaussian_blob: mu_scale must be finite");
  const double mu = mu_scale / std::sqrt(static_cast<double>(d));
  const auto n = static_cast<Eigen::Index>(2 * n_per_class);
  Matrix raw(n, static_cast<Eigen::Index>(d));
  Rng rng = make_rng(seed, Stream::Data);
  fill_normal(raw, rng);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle = make_rng(seed, Stream::Shuffle);
  std::shuffle(order.begin(), order.end(), shuffle);

  Dataset out;
  out.num_classes = 2;
  out.inputs.resize(n, raw.cols());
  out.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = order[static_cast<std::size_t>(i)];
    const int y = src < static_cast<Eigen::Index>(n_per_class) ? 0 : 1;
    out.inputs.row(i) = raw.row(src).array() + (y == 0 ? -mu : mu);
    out.labels[static_cast<std::size_t>(i)] = y;
  }
  out.provenance = {{"generator", "gaussian_blob"}, {"n_per_class", n_per_class},
                    {"d", d},                       {"mu_scale", mu_scale},
                    {"seed", seed}};
  return out;
}

Dataset unlabeled_gaussian(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n < 1 || d < 1) throw DomainError("unlabeled_gaussian: n and d must be >= 1");
  Dataset out;
  out.num_classes = 1;
  out.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  Rng rng = make_rng(seed, Stream::Data);
  fill_normal(out.inputs, rng);
  out.labels.assign(n, 0);
  out.provenance = {{"generator", "unlabeled_gaussian"}, {"n", n}, {"d", d}, {"seed", seed}};
  return out;
}

Dataset shift_pixels(const Dataset& data, double c) {
  Dataset out = data;
  out.inputs.array() += c;
  append_transform(out, {{"shift_pixels", c}});
  return out;
}

Dataset standardize(const Dataset& data) {
  Dataset out = data;
  const double n = static_cast<double>(out.inputs.rows());
  const RowVector mean = out.inputs.colwise().mean();
  out.inputs.rowwise() -= mean;
  const RowVector var = out.inputs.colwise().squaredNorm() / n;
  json degenerate = json::array();
  for (Eigen::Index j = 0; j < out.inputs.cols(); ++j) {
    if (var(j) > 0.0) {
      out.inputs.col(j) /= std::sqrt(var(j));
    } else {
      degenerate.push_back(j);
    }
  }
  append_transform(out, {{"standardize", "per_feature"}});
  if (!degenerate.empty()) out.provenance["degenerate_features"] = degenerate;
  return out;
}

Dataset remap_labels(const Dataset& data, const std::map<int, int>& map) {
  Dataset out = data;
  int max_label = 0;
  for (auto& y : out.labels) {
    auto it = map.find(y);
    if (it == map.end()) throw DomainError("remap_labels: no mapping for label " + std::to_string(y));
    if (it->second < 0) throw DomainError("remap_labels: negative target label");
    y = it->second;
    max_label = std::max(max_label, y);
  }
  out.num_classes = static_cast<std::size_t>(max_label) + 1;
  json m = json::object();
  for (auto [k, v] : map) m[std::to_string(k)] = v;
  append_transform(out, {{"remap_labels", m}});
  return out;
}

namespace {

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      fields.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const LabelColumn& label_column) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": line 1: missing header");
  const auto header = split_csv_line(line);
  std::size_t label_idx = 0;
  if (const auto* name = std::get_if<std::string>(&label_column)) {
    auto it = std::find_if(header.begin(), header.end(),
                           [&](std::string_view h) { return trim(h) == *name; });
    if (it == header.end()) {
      throw FormatError(path.string() + ": line 1: no column named '" + *name + "'");
    }
    label_idx = static_cast<std::size_t>(it - header.begin());
  } else {
    label_idx = std::get<std::size_t>(label_column);
    if (label_idx >= header.size()) {
      throw FormatError(path.string() + ": line 1: label column index out of range");
    }
  }
  const std::size_t cols = header.size();
  if (cols < 2) throw FormatError(path.string() + ": line 1: need at least one feature column");

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    const std::string where = path.string() + ": line " + std::to_string(line_no);
    if (fields.size() != cols) {
      throw FormatError(where + ": expected " + std::to_string(cols) + " fields, got " +
                        std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = io::parse_double(fields[j], where + ", column " + std::to_string(j + 1));
      if (j == label_idx) {
        if (v != std::floor(v) || v < 0.0 || v > 1e9) {
          throw FormatError(where + ": label must be a non-negative integer");
        }
        labels.push_back(static_cast<int>(v));
      } else {
        if (!std::isfinite(v)) throw FormatError(where + ": non-finite feature value");
        values.push_back(v);
      }
    }
  }
  if (labels.empty()) throw FormatError(path.string() + ": no data rows");
  Dataset out;
  const auto n = static_cast<Eigen::Index>(labels.size());
  const auto d = static_cast<Eigen::Index>(cols - 1);
  out.inputs = Eigen::Map<const Matrix>(values.data(), n, d);
  out.labels = std::move(labels);
  out.num_classes = static_cast<std::size_t>(*std::max_element(out.labels.begin(), out.labels.end())) + 1;
  out.provenance = {{"source", "csv"}, {"path", path.string()}, {"sha256", sha256_file(path)}};
  return out;
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ostringstream os;
  for (Eigen::Index j = 0; j < data.inputs.cols(); ++j) os << 'f' << j << ',';
  os << "label\n";
  for (Eigen::Index i = 0; i < data.inputs.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.inputs.cols(); ++j) {
      os << io::format_double(data.inputs(i, j)) << ',';
    }
    os << data.labels[static_cast<std::size_t>(i)] << '\n';
  }
  io::write_text(path, os.str());
}

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("load_idx: cannot open " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::uint32_t be32(const std::string& b, std::size_t off, const std::filesystem::path& p) {
  if (off + 4 > b.size()) {
    throw FormatError(p.string() + ": truncated header at byte " + std::to_string(off));
  }
  const auto* u = reinterpret_cast<const unsigned char*>(b.data() + off);
  return (std::uint32_t{u[0]} << 24) | (std::uint32_t{u[1]} << 16) | (std::uint32_t{u[2]} << 8) |
         std::uint32_t{u[3]};
}

void put_be32(std::string& b, std::uint32_t v) {
  b.push_back(static_cast<char>((v >> 24) & 0xFF));
  b.push_back(static_cast<char>((v >> 16) & 0xFF));
  b.push_back(static_cast<char>((v >> 8) & 0xFF));
  b.push_back(static_cast<char>(v & 0xFF));
}

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const std::string ib = read_all(images);
  const std::string lb = read_all(labels);
  if (const auto m = be32(ib, 0, images); m != kIdxImages) {
    throw FormatError(images.string() + ": byte 0: bad magic " + hex32(m) + ", expected 0x803");
  }
  if (const auto m = be32(lb, 0, labels); m != kIdxLabels) {
    throw FormatError(labels.string() + ": byte 0: bad magic " + hex32(m) + ", expected 0x801");
  }
  const std::uint64_t n = be32(ib, 4, images);
  const std::uint64_t rows = be32(ib, 8, images);
  const std::uint64_t cols = be32(ib, 12, images);
  const std::uint64_t nl = be32(lb, 4, labels);
  if (n != nl) {
    throw FormatError(labels.string() + ": byte 4: " + std::to_string(nl) +
                      " labels for " + std::to_string(n) + " images");
  }
  const std::uint64_t d = rows * cols;
  if (n == 0 || d == 0) throw FormatError(images.string() + ": empty image set");
  if (ib.size() != 16 + n * d) {
    throw FormatError(images.string() + ": byte " + std::to_string(std::min<std::uint64_t>(ib.size(), 16 + n * d)) +
                      ": payload size mismatch");
  }
  if (lb.size() != 8 + n) {
    throw FormatError(labels.string() + ": byte " + std::to_string(std::min<std::uint64_t>(lb.size(), 8 + n)) +
                      ": payload size mismatch");
  }
  Dataset out;
  out.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const auto* px = reinterpret_cast<const unsigned char*>(ib.data() + 16);
  for (std::uint64_t i = 0; i < n * d; ++i) out.inputs.data()[i] = px[i];
  out.labels.resize(n);
  const auto* lab = reinterpret_cast<const unsigned char*>(lb.data() + 8);
  for (std::uint64_t i = 0; i < n; ++i) out.labels[i] = lab[i];
  out.num_classes = static_cast<std::size_t>(*std::max_element(out.labels.begin(), out.labels.end())) + 1;
  out.provenance = {{"source", "idx"},
                    {"images", images.string()},
                    {"labels", labels.string()},
                    {"images_sha256", sha256_hex(ib)},
                    {"labels_sha256", sha256_hex(lb)},
                    {"rows", rows},
                    {"cols", cols}};
  return out;
}

void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
               const Dataset& data, std::uint32_t rows, std::uint32_t cols) {
  const auto n = static_cast<std::uint64_t>(data.inputs.rows());
  if (static_cast<std::uint64_t>(rows) * cols != static_cast<std::uint64_t>(data.inputs.cols())) {
    throw ShapeError("write_idx: rows * cols must equal the feature count");
  }
  std::string ib;
  put_be32(ib, kIdxImages);
  put_be32(ib, static_cast<std::uint32_t>(n));
  put_be32(ib, rows);
  put_be32(ib, cols);
  for (Eigen::Index i = 0; i < data.inputs.size(); ++i) {
    const double v = data.inputs.data()[i];
    if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) {
      throw DomainError("write_idx: pixel values must be integers in [0, 255]");
    }
    ib.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  std::string lb;
  put_be32(lb, kIdxLabels);
  put_be32(lb, static_cast<std::uint32_t>(n));
  for (int y : data.labels) {
    if (y < 0 || y > 255) throw DomainError("write_idx: labels must be in [0, 255]");
    lb.push_back(static_cast<char>(static_cast<unsigned char>(y)));
  }
  io::write_text(images, ib);
  io::write_text(labels, lb);
}

void write_provenance(const std::filesystem::path& path, const Dataset& data) {
  io::write_text(path, data.provenance.dump(2) + "\n");
}

}  // namespace igb
