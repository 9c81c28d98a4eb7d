#include <doctest.h>

#include <set>

#include "seqdiff/error.hpp"
#include "seqdiff/measurement.hpp"
#include "support.hpp"

using namespace seqdiff;

TEST_SUITE("measurement") {

TEST_CASE("column mask sizes") {
  CHECK(make_column_mask(8, 32, 0.2, 1).kept_columns().size() == 6);
  CHECK(make_column_mask(8, 32, 1.0, 1).kept_columns().size() == 32);
  CHECK(make_column_mask(8, 32, 0.001, 1).kept_columns().size() == 1);
  const LinearOperator op = make_column_mask(8, 32, 0.5, 3);
  CHECK(op.measurements() == 8 * 16);
  CHECK(std::is_sorted(op.kept_columns().begin(), op.kept_columns().end()));
  CHECK_THROWS_AS(make_column_mask(8, 32, 0.0, 1), InvalidArgument);
  CHECK_THROWS_AS(make_column_mask(8, 32, 1.5, 1), InvalidArgument);
  CHECK_THROWS_AS(LinearOperator::columns(4, 4, {1, 1}), InvalidArgument);
  CHECK_THROWS_AS(LinearOperator::columns(4, 4, {5}), InvalidArgument);
}

TEST_CASE("masks are seeded and roughly uniform") {
  CHECK(make_column_mask(4, 32, 0.25, 9).kept_columns() == make_column_mask(4, 32, 0.25, 9).kept_columns());
  CHECK(make_column_mask(4, 32, 0.25, 9).kept_columns() != make_column_mask(4, 32, 0.25, 10).kept_columns());
  std::vector<int> hits(16, 0);
  for (std::uint64_t s = 0; s < 4000; ++s) {
    const LinearOperator op = make_column_mask(1, 16, 0.25, s);
    for (std::size_t c : op.kept_columns()) ++hits[c];
  }
  // Each column is kept with probability 1/4: 1000 expected, sd ~27.
  for (int h : hits) CHECK(std::abs(h - 1000) < 150);
}

TEST_CASE("adjoint identity <Ax, y> = <x, A^T y>") {
  for (const LinearOperator& op :
       {make_column_mask(6, 7, 0.4, 1), make_pixel_mask(6, 7, 0.3, 2), LinearOperator::identity(6, 7)}) {
    const Field x = testing::random_field(6, 7, 5);
    const Field yf = testing::random_field(1, op.measurements(), 6);
    const std::vector<double> y(yf.values().begin(), yf.values().end());
    const auto ax = apply_forward(op, x);
    double lhs = 0.0;
    for (std::size_t i = 0; i < ax.size(); ++i) lhs += ax[i] * y[i];
    CHECK(lhs == doctest::Approx(dot(x, apply_adjoint(op, y))).epsilon(1e-12));
  }
  CHECK_THROWS_AS(apply_forward(make_column_mask(6, 7, 0.4, 1), Field(7, 6)), ShapeMismatch);
  CHECK_THROWS_AS(apply_adjoint(make_column_mask(6, 7, 0.4, 1), {1.0}), ShapeMismatch);
}

TEST_CASE("adjoint fill interpolates dropped columns") {
  const LinearOperator op = LinearOperator::columns(2, 6, {1, 4});
  Field x(2, 6, 0.0);
  for (std::size_t r = 0; r < 2; ++r) {
    x(r, 1) = 1.0 + static_cast<double>(r);
    x(r, 4) = 4.0 + static_cast<double>(r);
  }
  const Field g = adjoint_fill(op, apply_forward(op, x));
  CHECK(g(0, 0) == 1.0);  // nearest copy at the border
  CHECK(g(0, 2) == doctest::Approx(2.0));
  CHECK(g(0, 3) == doctest::Approx(3.0));
  CHECK(g(1, 3) == doctest::Approx(4.0));
  CHECK(g(1, 5) == 5.0);
  // Linear images along rows are reproduced exactly between kept columns.
  Field ramp(3, 9);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 9; ++c) ramp(r, c) = 0.5 * static_cast<double>(c) - static_cast<double>(r);
  const LinearOperator op2 = LinearOperator::columns(3, 9, {0, 3, 8});
  CHECK(max_abs_difference(adjoint_fill(op2, apply_forward(op2, ramp)), ramp) < 1e-12);
  // Pixel masks fall back to zero fill.
  const LinearOperator pm = make_pixel_mask(3, 3, 0.5, 1);
  CHECK(adjoint_fill(pm, apply_forward(pm, Field(3, 3, 2.0))) ==
        apply_adjoint(pm, apply_forward(pm, Field(3, 3, 2.0))));
}

TEST_CASE("observation noise") {
  auto clean = std::make_shared<LinearOperator>(make_column_mask(16, 16, 0.5, 1));
  const Field x = testing::random_field(16, 16, 2);
  CHECK(observe(clean, x, 1).values == apply_forward(*clean, x));
  auto noisy = std::make_shared<LinearOperator>(clean->with_noise(0.1));
  const Observation a = observe(noisy, x, 7, 3);
  CHECK(a.frame_index == 3);
  CHECK(a.values == observe(noisy, x, 7).values);
  const auto ax = apply_forward(*clean, x);
  double var = 0.0;
  for (std::size_t i = 0; i < ax.size(); ++i) var += (a.values[i] - ax[i]) * (a.values[i] - ax[i]);
  var /= static_cast<double>(ax.size());
  CHECK(var == doctest::Approx(0.01).epsilon(0.25));
  CHECK_THROWS_AS(observe(nullptr, x, 1), InvalidArgument);
  CHECK_THROWS_AS(clean->with_noise(-1.0), InvalidArgument);
}

TEST_CASE("mask lines") {
  const LinearOperator op = LinearOperator::columns(4, 10, {0, 3, 9});
  CHECK(format_mask_line(op) == "0,3,9");
  CHECK(parse_mask_line("0,3,9") == std::vector<std::size_t>{0, 3, 9});
  CHECK_THROWS_AS(parse_mask_line(""), ParseError);
  CHECK_THROWS_AS(parse_mask_line("1,,2"), ParseError);
  CHECK_THROWS_AS(parse_mask_line("1,x"), ParseError);
  try {
    parse_mask_line("3,2", 17);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.position() == 17);
  }
}

}
