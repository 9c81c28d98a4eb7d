#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "seqdiff/field.hpp"

namespace seqdiff {

enum class OperatorKind { column_mask, pixel_mask, identity };

/// Selection operator A: keeps a subset of pixels of an H x W image.
/// Kept coordinates are enumerated in row-major order, so for a column mask
/// row r contributes its kept columns in ascending order.
class LinearOperator {
 public:
  static LinearOperator identity(std::size_t height, std::size_t width, double noise_std = 0.0);
  static LinearOperator columns(std::size_t height, std::size_t width,
                                std::vector<std::size_t> kept_columns, double noise_std = 0.0);
  static LinearOperator pixels(std::size_t height, std::size_t width, std::vector<bool> keep,
                               double noise_std = 0.0);

  OperatorKind kind() const noexcept { return kind_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  double noise_std() const noexcept { return noise_std_; }
  /// Number of measurements m.
  std::size_t measurements() const noexcept { return kept_.size(); }
  /// Flat pixel indices of the kept coordinates, in measurement order.
  const std::vector<std::size_t>& kept_indices() const noexcept { return kept_; }
  /// Ascending kept columns (all columns for identity; empty for pixel masks).
  const std::vector<std::size_t>& kept_columns() const noexcept { return columns_; }
  bool is_kept(std::size_t flat_index) const { return keep_[flat_index]; }

  LinearOperator with_noise(double noise_std) const;

 private:
  LinearOperator() = default;
  void finalize();

  OperatorKind kind_ = OperatorKind::identity;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  double noise_std_ = 0.0;
  std::vector<bool> keep_;
  std::vector<std::size_t> kept_;
  std::vector<std::size_t> columns_;
};

/// y = A x + n for frame `frame_index`.
struct Observation {
  std::vector<double> values;
  std::shared_ptr<const LinearOperator> op;
  int frame_index = 0;
};

/// Keeps max(1, round(keep_fraction * width)) columns drawn uniformly without
/// replacement. Rejects keep_fraction outside (0, 1].
LinearOperator make_column_mask(std::size_t height, std::size_t width, double keep_fraction,
                                std::uint64_t seed, double noise_std = 0.0);
LinearOperator make_pixel_mask(std::size_t height, std::size_t width, double keep_fraction,
                               std::uint64_t seed, double noise_std = 0.0);

std::vector<double> apply_forward(const LinearOperator& op, const Field& x);
/// Scatters y into the kept coordinates, zeros elsewhere.
Field apply_adjoint(const LinearOperator& op, const std::vector<double>& y);

/// y = A x + noise_std * g with g ~ N(0, I) drawn from `seed`.
Observation observe(std::shared_ptr<const LinearOperator> op, const Field& x, std::uint64_t seed,
                    int frame_index = 0);

/// Deterministic single-frame reconstruction g(y): kept columns copied, each
/// dropped column linearly interpolated between the nearest kept columns
/// (nearest copy at the borders). Pixel masks fall back to zero fill.
Field adjoint_fill(const LinearOperator& op, const std::vector<double>& y);

/// Mask persistence: one line of comma-separated ascending kept-column indices.
std::string format_mask_line(const LinearOperator& op);
/// Parses a mask line; `line_number` is reported in ParseError.
std::vector<std::size_t> parse_mask_line(const std::string& line, std::size_t line_number = 1);

}  // namespace seqdiff
