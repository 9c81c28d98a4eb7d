#include <doctest.h>

#include <cmath>
#include <fstream>

#include "seqdiff/error.hpp"
#include "seqdiff/metrics.hpp"
#include "seqdiff/sequence.hpp"
#include "support.hpp"

using namespace seqdiff;

namespace {

SequenceConfig ar1(double rho, std::size_t length, std::uint64_t seed) {
  SequenceConfig c;
  c.kind = SequenceKind::ar1_gaussian;
  c.rho = rho;
  c.length = length;
  c.seed = seed;
  return c;
}

SequenceConfig blobs(double motion, int count, std::uint64_t seed, std::size_t length = 20) {
  SequenceConfig c;
  c.motion_level = motion;
  c.num_blobs = count;
  c.seed = seed;
  c.length = length;
  return c;
}

std::vector<double> latent(const Sequence& s, std::size_t t) {
  std::vector<double> out;
  for (double v : s.frames[t].values()) out.push_back((v - s.offset) / s.scale);
  return out;
}

// Lag-1 correlation of the zero-mean latent, pooled over pixels.
double lag_correlation(const Sequence& s) {
  const std::size_t d = s.frames[0].size();
  const std::size_t n = s.frames.size();
  double num = 0.0, den_a = 0.0, den_b = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t t = 1; t < n; ++t) {
      const double a = (s.frames[t - 1][i] - s.offset) / s.scale;
      const double b = (s.frames[t][i] - s.offset) / s.scale;
      num += a * b;
      den_a += a * a;
      den_b += b * b;
    }
  }
  return num / std::sqrt(den_a * den_b);
}

double variance(const std::vector<double>& v) {
  double m = 0.0, s = 0.0;
  for (double x : v) m += x / v.size();
  for (double x : v) s += (x - m) * (x - m) / (v.size() - 1);
  return s;
}

}  // namespace

TEST_SUITE("sequence") {

TEST_CASE("config validation") {
  SequenceConfig c;
  CHECK_NOTHROW(c.validate());
  c.length = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = SequenceConfig{};
  c.rho = 1.5;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = SequenceConfig{};
  c.motion_level = -1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = SequenceConfig{};
  c.num_blobs = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = SequenceConfig{};
  c.width = 0;
  CHECK_THROWS_AS(generate(c), InvalidArgument);
}

TEST_CASE("ar1 with rho one is static") {
  const Sequence s = gen_ar1(ar1(1.0, 6, 3));
  for (std::size_t t = 1; t < 6; ++t) CHECK(s.frames[t] == s.frames[0]);
  for (double v : s.frames[0].values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(s.frames[0].space() == Space::data);
}

TEST_CASE("ar1 lag correlation") {
  CHECK(std::abs(lag_correlation(gen_ar1(ar1(0.0, 100, 4)))) < 0.02);
  CHECK(std::abs(lag_correlation(gen_ar1(ar1(0.9, 200, 5))) - 0.9) < 0.02);
  CHECK(lag_correlation(gen_ar1(ar1(0.5, 100, 6))) == doctest::Approx(0.5).epsilon(0.06));
}

TEST_CASE("ar1 is stationary") {
  // Per-pixel scales are U[0.5, 1]: E[s^2] = 7/12.
  SequenceConfig c = ar1(0.9, 30, 8);
  c.height = c.width = 100;
  const Sequence s = gen_ar1(c);
  for (std::size_t t : {0u, 10u, 29u}) CHECK(variance(latent(s, t)) == doctest::Approx(7.0 / 12.0).epsilon(0.05));
}

TEST_CASE("blob displacement per frame") {
  int straight = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SequenceConfig c = blobs(2.0, 3, seed, 15);
    c.height = c.width = 64;
    const Sequence s = gen_blobs(c);
    REQUIRE(s.centers.size() == 15);
    for (std::size_t t = 1; t < 15; ++t) {
      for (std::size_t b = 0; b < 3; ++b) {
        const double dr = s.centers[t][b][0] - s.centers[t - 1][b][0];
        const double dc = s.centers[t][b][1] - s.centers[t - 1][b][1];
        const double d = std::hypot(dr, dc);
        CHECK(d <= 2.0 + 1e-9);  // a reflection folds the step
        if (std::abs(d - 2.0) < 1e-9) ++straight;
        ++total;
      }
    }
  }
  CHECK(straight > total * 3 / 4);
}

TEST_CASE("blobs stay in the frame and keep their mass") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Sequence s = gen_blobs(blobs(3.0, 1, 100 + seed, 40));
    double mass0 = 0.0;
    for (double v : s.frames[0].values()) mass0 += v;
    for (std::size_t t = 0; t < s.frames.size(); ++t) {
      double mass = 0.0;
      for (double v : s.frames[t].values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        mass += v;
      }
      CHECK(mass == doctest::Approx(mass0).epsilon(0.01));
      const Point p = s.centers[t][0];
      CHECK(p[0] > 0.0);
      CHECK(p[0] < 31.0);
      CHECK(p[1] > 0.0);
      CHECK(p[1] < 31.0);
    }
  }
}

TEST_CASE("motion grows with the motion level") {
  double previous = -1.0;
  for (double level : {0.0, 1.0, 2.0, 3.0, 4.0}) {
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const auto m = motion(gen_blobs(blobs(level, 3, seed)).frames);
      CHECK(m[0] == 0.0);
      for (std::size_t t = 1; t < m.size(); ++t) sum += m[t];
    }
    if (level == 0.0) CHECK(sum == 0.0);
    CHECK(sum > previous);
    previous = sum;
  }
}

TEST_CASE("generation is deterministic in the seed") {
  CHECK(generate(blobs(1.0, 3, 7)).frames == generate(blobs(1.0, 3, 7)).frames);
  CHECK(generate(blobs(1.0, 3, 7)).frames != generate(blobs(1.0, 3, 8)).frames);
  CHECK(generate(ar1(0.9, 4, 1)).frames == gen_ar1(ar1(0.9, 4, 1)).frames);
}

TEST_CASE("seqf round trip") {
  const Sequence s = gen_blobs(blobs(1.0, 3, 2, 5));
  const std::string bytes = encode_seqf(s.frames);
  CHECK(bytes.size() == 20 + 5 * 32 * 32 * 4);
  CHECK(bytes.substr(0, 4) == "SEQF");
  const auto back = decode_seqf(bytes);
  REQUIRE(back.size() == 5);
  for (std::size_t t = 0; t < 5; ++t) CHECK(max_abs_difference(back[t], s.frames[t]) == 0.0);

  const auto dir = testing::temp_dir("seqf");
  save_sequence(s.frames, dir / "a.seqf");
  const auto loaded = load_sequence(dir / "a.seqf");
  CHECK(encode_seqf(loaded) == bytes);
  CHECK_THROWS_AS(load_sequence(dir / "missing.seqf"), IoError);
}

TEST_CASE("seqf corruption") {
  const std::string bytes = encode_seqf(gen_blobs(blobs(1.0, 1, 2, 2)).frames);
  try {
    decode_seqf("PGM5" + bytes.substr(4));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.position() == 0);
  }
  std::string v = bytes;
  v[4] = 9;
  try {
    decode_seqf(v);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.position() == 4);
  }
  CHECK_THROWS_AS(decode_seqf(bytes.substr(0, bytes.size() - 1)), ParseError);
  CHECK_THROWS_AS(decode_seqf(bytes.substr(0, 10)), ParseError);
  CHECK_THROWS_AS(decode_seqf(bytes + std::string(1, '\0')), ParseError);
  CHECK_THROWS_AS(decode_seqf(""), ParseError);
  CHECK_THROWS_AS(encode_seqf({}), InvalidArgument);
  CHECK_THROWS_AS(encode_seqf({Field(2, 2), Field(2, 3)}), ShapeMismatch);
}

TEST_CASE("pgm export") {
  Field f(2, 3, 0.0, Space::data);
  f(0, 1) = 1.0;
  f(1, 2) = 0.5;
  const std::string pgm = encode_pgm(f);
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(pgm.size() == header.size() + 6);
  CHECK(pgm.substr(0, header.size()) == header);
  CHECK(static_cast<unsigned char>(pgm[header.size() + 1]) == 255);
  CHECK(static_cast<unsigned char>(pgm[header.size() + 5]) == 128);
  CHECK(static_cast<unsigned char>(pgm[header.size()]) == 0);
}

}
