#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace seqdiff {

/// Value range convention of a field: data-space is [0,1], model-space is
/// the image of data-space under z = 2x - 1.
enum class Space { data, model };

/// Dense H x W grid of doubles stored row-major. Vectors are 1 x d fields.
class Field {
 public:
  Field() = default;
  Field(std::size_t height, std::size_t width, double fill = 0.0, Space space = Space::model);
  Field(std::size_t height, std::size_t width, std::vector<double> values,
        Space space = Space::model);

  static Field vector(std::vector<double> values, Space space = Space::model);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  Space space() const noexcept { return space_; }
  void set_space(Space space) noexcept { space_ = space; }

  double& operator()(std::size_t row, std::size_t col) { return values_[row * width_ + col]; }
  double operator()(std::size_t row, std::size_t col) const { return values_[row * width_ + col]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  bool same_shape(const Field& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool all_finite() const noexcept;

  Field& operator+=(const Field& other);
  Field& operator-=(const Field& other);
  Field& operator*=(double scale) noexcept;
  /// this += scale * other
  Field& add_scaled(const Field& other, double scale);

  friend Field operator+(Field lhs, const Field& rhs) { return lhs += rhs; }
  friend Field operator-(Field lhs, const Field& rhs) { return lhs -= rhs; }
  friend Field operator*(Field lhs, double scale) { return lhs *= scale; }
  friend Field operator*(double scale, Field rhs) { return rhs *= scale; }

  bool operator==(const Field& other) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
  Space space_ = Space::model;
};

/// Throws ShapeMismatch naming `context` unless a and b have equal shape.
void require_same_shape(const Field& a, const Field& b, std::string_view context);

double dot(const Field& a, const Field& b);
double squared_norm(const Field& a);
double norm(const Field& a);
double max_abs_difference(const Field& a, const Field& b);

/// z = 2x - 1.
Field to_model_space(const Field& data);
/// x = (z + 1) / 2, clamped to [0,1] unless `clamp` is false.
Field to_data_space(const Field& model, bool clamp = true);

}  // namespace seqdiff
