#include "seqdiff/field.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "seqdiff/error.hpp"

namespace seqdiff {

Field::Field(std::size_t height, std::size_t width, double fill, Space space)
    : height_(height), width_(width), values_(height * width, fill), space_(space) {}

Field::Field(std::size_t height, std::size_t width, std::vector<double> values, Space space)
    : height_(height), width_(width), values_(std::move(values)), space_(space) {
  if (values_.size() != height * width) {
    throw ShapeMismatch("field values: expected " + std::to_string(height * width) +
                        " entries, got " + std::to_string(values_.size()));
  }
}

Field Field::vector(std::vector<double> values, Space space) {
  const std::size_t d = values.size();
  return Field(1, d, std::move(values), space);
}

bool Field::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Field& Field::operator+=(const Field& other) {
  require_same_shape(*this, other, "field +=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Field& Field::operator-=(const Field& other) {
  require_same_shape(*this, other, "field -=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

Field& Field::operator*=(double scale) noexcept {
  for (double& v : values_) v *= scale;
  return *this;
}

Field& Field::add_scaled(const Field& other, double scale) {
  require_same_shape(*this, other, "field add_scaled");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * other.values_[i];
  return *this;
}

void require_same_shape(const Field& a, const Field& b, std::string_view context) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch(std::string(context) + ": shape " + std::to_string(a.height()) + "x" +
                        std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                        std::to_string(b.width()));
  }
}

double dot(const Field& a, const Field& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double squared_norm(const Field& a) { return dot(a, a); }

double norm(const Field& a) { return std::sqrt(squared_norm(a)); }

double max_abs_difference(const Field& a, const Field& b) {
  require_same_shape(a, b, "max_abs_difference");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Field to_model_space(const Field& data) {
  Field out = data;
  for (double& v : out.values()) v = 2.0 * v - 1.0;
  out.set_space(Space::model);
  return out;
}

Field to_data_space(const Field& model, bool clamp) {
  Field out = model;
  for (double& v : out.values()) {
    v = 0.5 * (v + 1.0);
    if (clamp) v = std::clamp(v, 0.0, 1.0);
  }
  out.set_space(Space::data);
  return out;
}

}  // namespace seqdiff
