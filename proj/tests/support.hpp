#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "seqdiff/field.hpp"
#include "seqdiff/rng.hpp"

namespace testing {

inline seqdiff::Field random_field(std::size_t h, std::size_t w, std::uint64_t seed, double scale = 1.0) {
  seqdiff::Rng rng(seed);
  seqdiff::Field f(h, w);
  for (double& v : f.values()) v = scale * rng.normal();
  return f;
}

// Random SPD matrix with eigenvalues in [lo, hi].
inline Eigen::MatrixXd random_spd(int d, std::uint64_t seed, double lo = 0.2, double hi = 2.0) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = n(g);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd ev(d);
  for (int i = 0; i < d; ++i) ev(i) = u(g);
  Eigen::MatrixXd s = q * ev.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

// Central difference of f along coordinate i.
inline double central_difference(const std::function<double(const seqdiff::Field&)>& f,
                                 const seqdiff::Field& x, std::size_t i, double h) {
  seqdiff::Field a = x, b = x;
  a[i] += h;
  b[i] -= h;
  return (f(a) - f(b)) / (2.0 * h);
}

inline double relative_error(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("seqdiff_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
