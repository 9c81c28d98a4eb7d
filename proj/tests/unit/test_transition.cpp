#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "seqdiff/checkpoint.hpp"
#include "seqdiff/error.hpp"
#include "seqdiff/transition.hpp"
#include "support.hpp"

using namespace seqdiff;

namespace {

TubeletConfig tiny_config() {
  TubeletConfig c;
  c.context = 2;
  c.tubelet_time = 2;
  c.tubelet_height = 2;
  c.tubelet_width = 2;
  c.embed_dim = 8;
  c.num_layers = 1;
  c.num_heads = 2;
  c.mlp_dim = 16;
  c.frame_height = 4;
  c.frame_width = 4;
  return c;
}

std::vector<Field> frames(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed, double scale = 0.5) {
  std::vector<Field> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(testing::random_field(h, w, seed + i, scale));
  return out;
}

// Drifting stripes in model space.
std::vector<Field> stripes(int length, int shift, std::size_t size) {
  std::vector<Field> seq;
  for (int t = 0; t < length; ++t) {
    Field f(size, size);
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t c = 0; c < size; ++c) f(r, c) = 0.6 * std::sin(0.8 * static_cast<double>(c + static_cast<std::size_t>(t * shift)) + 0.3 * r);
    seq.push_back(f);
  }
  return seq;
}

}  // namespace

TEST_SUITE("transition") {

TEST_CASE("history buffer") {
  HistoryBuffer h(3);
  CHECK_THROWS_AS(h.back(), InvalidArgument);
  CHECK_THROWS_AS(h.padded(), InvalidArgument);
  h.push(Field(1, 1, 1.0), 0);
  auto p = h.padded();
  REQUIRE(p.size() == 3);
  CHECK(p[0][0] == 1.0);
  CHECK(p[2][0] == 1.0);
  h.push(Field(1, 1, 2.0), 1);
  h.push(Field(1, 1, 3.0), 2);
  h.push(Field(1, 1, 4.0), 5);
  CHECK(h.size() == 3);
  CHECK(h.frames().front()[0] == 2.0);
  CHECK(h.frame_indices().back() == 5);
  CHECK_THROWS_AS(h.push(Field(1, 1), 5), InvalidArgument);
  CHECK_THROWS_AS(HistoryBuffer(0), InvalidArgument);
}

TEST_CASE("simple predictors") {
  HistoryBuffer h(4);
  h.push(Field::vector({0.1, 0.5, -0.9}), 0);
  const IdentityTransition id;
  const LinearExtrapolation lin;
  CHECK(lin.predict(h) == h.back());
  h.push(Field::vector({0.2, 0.9, -0.99}), 1);
  CHECK(id.predict(h) == h.back());
  const Field p = lin.predict(h);
  CHECK(p[0] == doctest::Approx(0.3));
  CHECK(p[1] == 1.0);
  CHECK(p[2] == -1.0);
}

TEST_CASE("tubelet config and token layout") {
  const TubeletConfig desk = desk_tubelet_config();
  desk.validate();
  CHECK(desk.num_tokens() == 128);
  CHECK(desk.tubelet_volume() == 32);
  const TubeletConfig big = paper_tubelet_config();
  big.validate();
  CHECK(big.num_tokens() == 128);
  CHECK(big.tubelet_volume() == 512);

  const auto f = frames(4, 32, 32, 3);
  const RowMatrix<double> parts = tubelet_partition(f, desk);
  CHECK(parts.rows() == 128);
  CHECK(parts.cols() == 32);
  // token (it=1, ih=2, iw=3), entry (dt=1, dy=2, dx=0)
  CHECK(parts((1 * 8 + 2) * 8 + 3, (1 * 4 + 2) * 4 + 0) == f[3](2 * 4 + 2, 3 * 4 + 0));

  TubeletConfig bad = desk;
  bad.tubelet_time = 3;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = desk;
  bad.num_heads = 5;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = desk;
  bad.tubelet_width = 5;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  CHECK_THROWS_AS(tubelet_partition(std::span(f).subspan(0, 3), desk), InvalidArgument);
  const auto wrong = frames(4, 16, 32, 3);
  CHECK_THROWS_AS(tubelet_partition(wrong, desk), ShapeMismatch);
}

TEST_CASE("attention is normalized and order matters") {
  const TubeletAttention<double> model(desk_tubelet_config(), 4);
  auto f = frames(4, 32, 32, 11);
  TubeletAttention<double>::Cache cache;
  const Field a = model.forward(f, &cache);
  CHECK(a.height() == 32);
  CHECK(a.width() == 32);
  REQUIRE(cache.blocks.size() == 4);
  for (const auto& b : cache.blocks) {
    REQUIRE(b.attention.size() == 4);
    for (const auto& att : b.attention) {
      CHECK(att.rows() == 128);
      CHECK(att.cols() == 128);
      CHECK((att.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
      CHECK(att.minCoeff() >= 0.0);
    }
  }
  std::swap(f[0], f[1]);
  CHECK(max_abs_difference(model.forward(f, nullptr) - f[3], a - f[1]) > 0.0);
  std::swap(f[0], f[1]);
  CHECK(model.forward(f, nullptr) == a);

  HistoryBuffer h(4);
  for (int t = 0; t < 4; ++t) h.push(f[static_cast<std::size_t>(t)], t);
  CHECK(model.predict(h) == a);
  HistoryBuffer wrong(3);
  wrong.push(f[0], 0);
  CHECK_THROWS_AS(model.predict(wrong), InvalidArgument);
}

TEST_CASE("parameter gradient matches finite differences") {
  TubeletAttention<double> model(tiny_config(), 2);
  // Move away from the small-init head so every parameter matters.
  Rng rng(5);
  for (double& p : model.parameters()) p += 0.2 * rng.normal();
  const std::vector<std::vector<Field>> windows{frames(2, 4, 4, 20), frames(2, 4, 4, 30)};
  const std::vector<Field> targets{testing::random_field(4, 4, 40, 0.5), testing::random_field(4, 4, 41, 0.5)};
  std::vector<double> grad(model.parameter_count(), 0.0);
  const double loss = transition_loss_and_gradient<double>(model, windows, targets, grad);
  CHECK(std::isfinite(loss));

  const std::size_t n = model.parameter_count();
  const std::size_t stride = std::max<std::size_t>(1, n / 40);
  int checked = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; i += stride) {
    const double saved = model.parameters()[i];
    std::vector<double> scratch(n, 0.0);
    const double h = 1e-5;
    model.parameters()[i] = saved + h;
    const double lp = transition_loss_and_gradient<double>(model, windows, targets, scratch);
    model.parameters()[i] = saved - h;
    const double lm = transition_loss_and_gradient<double>(model, windows, targets, scratch);
    model.parameters()[i] = saved;
    const double fd = (lp - lm) / (2 * h);
    worst = std::max(worst, testing::relative_error(grad[i], fd, 1e-6));
    ++checked;
  }
  CHECK(checked >= 20);
  CHECK(worst < 1e-4);
}

TEST_CASE("training lowers the next-frame error") {
  TubeletConfig c = tiny_config();
  c.frame_height = c.frame_width = 8;
  c.context = 4;
  c.embed_dim = 16;
  TubeletAttention<float> model(c, 1);
  const std::vector<std::vector<Field>> seqs{stripes(10, 1, 8), stripes(10, 1, 8)};
  const double before = next_frame_mse(model, seqs, 4);
  const TransitionTrace trace = train_transition(model, std::span(seqs), TrainConfig{3e-3, 4, 300, 1, true});
  CHECK(trace.losses.size() == 300);
  CHECK(next_frame_mse(model, seqs, 4) < 0.5 * before);

  TubeletAttention<float> frozen(c, 1);
  const std::vector<float> p0(frozen.parameters().begin(), frozen.parameters().end());
  train_transition(frozen, std::span(seqs), TrainConfig{3e-3, 4, 0, 1});
  CHECK(std::equal(p0.begin(), p0.end(), frozen.parameters().begin()));

  const std::vector<std::vector<Field>> shorty{stripes(4, 1, 8)};
  CHECK_THROWS_AS(train_transition(frozen, std::span(shorty), TrainConfig{}), InvalidArgument);
  CHECK_THROWS_AS(next_frame_mse(model, shorty, 4), InvalidArgument);
}

TEST_CASE("paired inputs and targets") {
  TubeletConfig c = tiny_config();
  c.context = 2;
  const std::vector<std::vector<Field>> clean{stripes(6, 1, 4), stripes(6, 2, 4)};
  TubeletAttention<double> a(c, 3), b(c, 3);
  const TrainConfig tc{1e-3, 2, 20, 4};
  train_transition(a, std::span(clean), tc);
  train_transition(b, std::span(clean), std::span(clean), tc);
  CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));

  // Targets come from the paired sequence: an input-independent offset is learned.
  std::vector<std::vector<Field>> shifted = clean;
  for (auto& seq : shifted)
    for (Field& f : seq) f = f + Field(4, 4, 0.3);
  TubeletAttention<double> m(c, 5);
  train_transition(m, std::span(clean), std::span(shifted), TrainConfig{3e-3, 4, 400, 6, true});
  HistoryBuffer h(2);
  h.push(clean[0][3], 3);
  h.push(clean[0][4], 4);
  CHECK(norm(m.predict(h) - shifted[0][5]) < norm(clean[0][5] - shifted[0][5]));

  const std::vector<std::vector<Field>> one{stripes(6, 1, 4)};
  CHECK_THROWS_AS(train_transition(m, std::span(clean), std::span(one), tc), InvalidArgument);
  const std::vector<std::vector<Field>> uneven{stripes(6, 1, 4), stripes(5, 1, 4)};
  CHECK_THROWS_AS(train_transition(m, std::span(clean), std::span(uneven), tc), InvalidArgument);
}

TEST_CASE("identity model error on static data is zero") {
  const IdentityTransition id;
  std::vector<Field> still(6, testing::random_field(4, 4, 1));
  const std::vector<std::vector<Field>> seqs{still};
  CHECK(next_frame_mse(id, seqs, 4) == 0.0);
  const std::vector<std::vector<Field>> moving{stripes(8, 1, 4)};
  double oracle = 0.0;
  int count = 0;
  for (std::size_t t = 4; t < 8; ++t, ++count)
    oracle += squared_norm(moving[0][t] - moving[0][t - 1]) / 16.0 / 4.0;
  CHECK(next_frame_mse(id, moving, 4) == doctest::Approx(oracle / count));
}

TEST_CASE("transition checkpoint") {
  const TubeletAttention<float> model(desk_tubelet_config(), 9);
  const std::string bytes = encode_checkpoint(transition_checkpoint(model));
  const TubeletAttention<float> back = transition_from_checkpoint(decode_checkpoint(bytes));
  CHECK(std::equal(model.parameters().begin(), model.parameters().end(), back.parameters().begin()));
  CHECK(back.config().num_tokens() == 128);
  const auto f = frames(4, 32, 32, 2);
  CHECK(back.forward(f, nullptr) == model.forward(f, nullptr));

  Checkpoint wrong = transition_checkpoint(model);
  wrong.parameters.pop_back();
  CHECK_THROWS_AS(transition_from_checkpoint(wrong), IoError);
  wrong = transition_checkpoint(model);
  wrong.kind = ModelKind::denoiser;
  CHECK_THROWS_AS(transition_from_checkpoint(wrong), IoError);
  wrong = transition_checkpoint(model);
  wrong.arch.pop_back();
  CHECK_THROWS_AS(transition_from_checkpoint(wrong), IoError);
}

}
