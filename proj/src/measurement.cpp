#include "seqdiff/measurement.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "seqdiff/error.hpp"
#include "seqdiff/rng.hpp"

namespace seqdiff {

namespace {

std::size_t kept_count(std::size_t total, double keep_fraction) {
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0) {
    throw InvalidArgument("mask: keep_fraction must lie in (0, 1]");
  }
  const auto n = static_cast<std::size_t>(std::llround(keep_fraction * static_cast<double>(total)));
  return std::clamp<std::size_t>(n, 1, total);
}

std::vector<std::size_t> sample_without_replacement(std::size_t total, std::size_t count,
                                                    std::uint64_t seed) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.index(total - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void require_operator_shape(const LinearOperator& op, const Field& x, const char* context) {
  if (x.height() != op.height() || x.width() != op.width()) {
    throw ShapeMismatch(std::string(context) + ": image " + std::to_string(x.height()) + "x" +
                        std::to_string(x.width()) + " vs operator " + std::to_string(op.height()) +
                        "x" + std::to_string(op.width()));
  }
}

void require_measurements(const LinearOperator& op, const std::vector<double>& y,
                          const char* context) {
  if (y.size() != op.measurements()) {
    throw ShapeMismatch(std::string(context) + ": expected " + std::to_string(op.measurements()) +
                        " measurements, got " + std::to_string(y.size()));
  }
}

}  // namespace

LinearOperator LinearOperator::identity(std::size_t height, std::size_t width, double noise_std) {
  LinearOperator op;
  op.kind_ = OperatorKind::identity;
  op.height_ = height;
  op.width_ = width;
  op.noise_std_ = noise_std;
  op.keep_.assign(height * width, true);
  op.finalize();
  return op;
}

LinearOperator LinearOperator::columns(std::size_t height, std::size_t width,
                                       std::vector<std::size_t> kept_columns, double noise_std) {
  std::sort(kept_columns.begin(), kept_columns.end());
  if (std::adjacent_find(kept_columns.begin(), kept_columns.end()) != kept_columns.end()) {
    throw InvalidArgument("column mask: duplicate column");
  }
  if (kept_columns.empty()) throw InvalidArgument("column mask: no kept columns");
  if (kept_columns.back() >= width) throw InvalidArgument("column mask: column index out of range");
  LinearOperator op;
  op.kind_ = OperatorKind::column_mask;
  op.height_ = height;
  op.width_ = width;
  op.noise_std_ = noise_std;
  op.keep_.assign(height * width, false);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c : kept_columns) op.keep_[r * width + c] = true;
  }
  op.finalize();
  return op;
}

LinearOperator LinearOperator::pixels(std::size_t height, std::size_t width, std::vector<bool> keep,
                                      double noise_std) {
  if (keep.size() != height * width) throw ShapeMismatch("pixel mask: size does not match image");
  if (std::none_of(keep.begin(), keep.end(), [](bool k) { return k; })) {
    throw InvalidArgument("pixel mask: no kept pixels");
  }
  LinearOperator op;
  op.kind_ = OperatorKind::pixel_mask;
  op.height_ = height;
  op.width_ = width;
  op.noise_std_ = noise_std;
  op.keep_ = std::move(keep);
  op.finalize();
  return op;
}

void LinearOperator::finalize() {
  if (!(noise_std_ >= 0.0)) throw InvalidArgument("operator: noise_std must be nonnegative");
  kept_.clear();
  for (std::size_t i = 0; i < keep_.size(); ++i) {
    if (keep_[i]) kept_.push_back(i);
  }
  columns_.clear();
  if (kind_ != OperatorKind::pixel_mask && height_ > 0) {
    for (std::size_t c = 0; c < width_; ++c) {
      if (keep_[c]) columns_.push_back(c);
    }
  }
}

LinearOperator LinearOperator::with_noise(double noise_std) const {
  LinearOperator op = *this;
  op.noise_std_ = noise_std;
  op.finalize();
  return op;
}

LinearOperator make_column_mask(std::size_t height, std::size_t width, double keep_fraction,
                                std::uint64_t seed, double noise_std) {
  const std::size_t n = kept_count(width, keep_fraction);
  if (n == width) {
    std::vector<std::size_t> all(width);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return LinearOperator::columns(height, width, std::move(all), noise_std);
  }
  return LinearOperator::columns(height, width, sample_without_replacement(width, n, seed), noise_std);
}

LinearOperator make_pixel_mask(std::size_t height, std::size_t width, double keep_fraction,
                               std::uint64_t seed, double noise_std) {
  const std::size_t total = height * width;
  const std::size_t n = kept_count(total, keep_fraction);
  std::vector<bool> keep(total, false);
  for (std::size_t i : sample_without_replacement(total, n, seed)) keep[i] = true;
  return LinearOperator::pixels(height, width, std::move(keep), noise_std);
}

std::vector<double> apply_forward(const LinearOperator& op, const Field& x) {
  require_operator_shape(op, x, "apply_forward");
  std::vector<double> y;
  y.reserve(op.measurements());
  for (std::size_t i : op.kept_indices()) y.push_back(x[i]);
  return y;
}

Field apply_adjoint(const LinearOperator& op, const std::vector<double>& y) {
  require_measurements(op, y, "apply_adjoint");
  Field out(op.height(), op.width(), 0.0);
  const auto& kept = op.kept_indices();
  for (std::size_t k = 0; k < kept.size(); ++k) out[kept[k]] = y[k];
  return out;
}

Observation observe(std::shared_ptr<const LinearOperator> op, const Field& x, std::uint64_t seed,
                    int frame_index) {
  if (!op) throw InvalidArgument("observe: null operator");
  Observation obs;
  obs.values = apply_forward(*op, x);
  if (op->noise_std() > 0.0) {
    Rng rng(seed);
    for (double& v : obs.values) v += op->noise_std() * rng.normal();
  }
  obs.op = std::move(op);
  obs.frame_index = frame_index;
  return obs;
}

Field adjoint_fill(const LinearOperator& op, const std::vector<double>& y) {
  Field out = apply_adjoint(op, y);
  if (op.kind() != OperatorKind::column_mask) return out;
  const auto& cols = op.kept_columns();
  const std::size_t W = op.width();
  for (std::size_t c = 0; c < W; ++c) {
    if (std::binary_search(cols.begin(), cols.end(), c)) continue;
    const auto right = std::lower_bound(cols.begin(), cols.end(), c);
    const bool has_right = right != cols.end();
    const bool has_left = right != cols.begin();
    for (std::size_t r = 0; r < op.height(); ++r) {
      double v;
      if (has_left && has_right) {
        const std::size_t cl = *(right - 1);
        const std::size_t cr = *right;
        const double t = static_cast<double>(c - cl) / static_cast<double>(cr - cl);
        v = (1.0 - t) * out(r, cl) + t * out(r, cr);
      } else {
        v = out(r, has_left ? *(right - 1) : *right);
      }
      out(r, c) = v;
    }
  }
  return out;
}

std::string format_mask_line(const LinearOperator& op) {
  std::string line;
  for (std::size_t c : op.kept_columns()) {
    if (!line.empty()) line += ',';
    line += std::to_string(c);
  }
  return line;
}

std::vector<std::size_t> parse_mask_line(const std::string& line, std::size_t line_number) {
  std::vector<std::size_t> cols;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    const std::size_t comma = std::min(line.find(',', pos), line.size());
    std::size_t v = 0;
    const char* begin = line.data() + pos;
    const char* end = line.data() + comma;
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end || begin == end) {
      throw ParseError("mask line: expected column index", line_number);
    }
    if (!cols.empty() && v <= cols.back()) {
      throw ParseError("mask line: indices must be strictly ascending", line_number);
    }
    cols.push_back(v);
    pos = comma + 1;
  }
  return cols;
}

}  // namespace seqdiff
