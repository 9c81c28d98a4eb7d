#include "seqdiff/transition.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "seqdiff/checkpoint.hpp"
#include "seqdiff/error.hpp"
#include "seqdiff/rng.hpp"

namespace seqdiff {

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename Real>
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
template <typename Real>
using RowVector = Eigen::Matrix<Real, 1, Eigen::Dynamic>;

template <typename Real>
Real gelu(Real x) {
  constexpr Real c = Real(0.7978845608028654);  // sqrt(2/pi)
  return Real(0.5) * x * (Real(1) + std::tanh(c * (x + Real(0.044715) * x * x * x)));
}

template <typename Real>
Real gelu_grad(Real x) {
  constexpr Real c = Real(0.7978845608028654);
  const Real t = std::tanh(c * (x + Real(0.044715) * x * x * x));
  return Real(0.5) * (Real(1) + t) +
         Real(0.5) * x * (Real(1) - t * t) * c * (Real(1) + Real(3 * 0.044715) * x * x);
}

}  // namespace

// ---------------------------------------------------------------- history

HistoryBuffer::HistoryBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw InvalidArgument("history buffer: capacity must be positive");
}

void HistoryBuffer::push(Field frame, int frame_index) {
  if (!indices_.empty() && frame_index <= indices_.back()) {
    throw InvalidArgument("history buffer: frame indices must be strictly increasing");
  }
  if (!frames_.empty()) require_same_shape(frames_.back(), frame, "history buffer");
  frames_.push_back(std::move(frame));
  indices_.push_back(frame_index);
  if (frames_.size() > capacity_) {
    frames_.pop_front();
    indices_.pop_front();
  }
}

void HistoryBuffer::clear() noexcept {
  frames_.clear();
  indices_.clear();
}

const Field& HistoryBuffer::back() const {
  if (frames_.empty()) throw InvalidArgument("history buffer is empty");
  return frames_.back();
}

std::vector<Field> HistoryBuffer::padded() const {
  if (frames_.empty()) throw InvalidArgument("history buffer is empty");
  std::vector<Field> out(capacity_ - frames_.size(), frames_.front());
  out.insert(out.end(), frames_.begin(), frames_.end());
  return out;
}

Field IdentityTransition::predict(const HistoryBuffer& history) const { return history.back(); }

Field LinearExtrapolation::predict(const HistoryBuffer& history) const {
  const Field& last = history.back();
  if (history.size() < 2) return last;
  const Field& prev = history.frames()[history.size() - 2];
  Field out = last;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(2.0 * last[i] - prev[i], -1.0, 1.0);
  }
  return out;
}

// ---------------------------------------------------------------- tubelets

void TubeletConfig::validate() const {
  if (context < 1 || tubelet_time < 1 || tubelet_height < 1 || tubelet_width < 1 ||
      embed_dim < 1 || num_layers < 0 || num_heads < 1 || mlp_dim < 1 || frame_height < 1 ||
      frame_width < 1) {
    throw InvalidArgument("tubelet config: all sizes must be positive");
  }
  if (context % tubelet_time != 0) throw InvalidArgument("tubelet config: t_time must divide K");
  if (frame_height % tubelet_height != 0) throw InvalidArgument("tubelet config: t_h must divide H");
  if (frame_width % tubelet_width != 0) throw InvalidArgument("tubelet config: t_w must divide W");
  if (embed_dim % num_heads != 0) {
    throw InvalidArgument("tubelet config: num_heads must divide embed_dim");
  }
}

TubeletConfig desk_tubelet_config() { return TubeletConfig{}; }

TubeletConfig paper_tubelet_config() {
  TubeletConfig c;
  c.tubelet_height = 16;
  c.tubelet_width = 16;
  c.num_heads = 8;
  c.frame_height = 128;
  c.frame_width = 128;
  return c;
}

RowMatrix<double> tubelet_partition(std::span<const Field> frames, const TubeletConfig& config) {
  config.validate();
  if (frames.size() != static_cast<std::size_t>(config.context)) {
    throw InvalidArgument("tubelet partition: expected " + std::to_string(config.context) +
                          " frames, got " + std::to_string(frames.size()));
  }
  for (const Field& f : frames) {
    if (f.height() != static_cast<std::size_t>(config.frame_height) ||
        f.width() != static_cast<std::size_t>(config.frame_width)) {
      throw ShapeMismatch("tubelet partition: frame shape does not match config");
    }
  }
  const int tt = config.tubelet_time, th = config.tubelet_height, tw = config.tubelet_width;
  const int nh = config.frame_height / th, nw = config.frame_width / tw;
  RowMatrix<double> patches(config.num_tokens(), config.tubelet_volume());
  for (int it = 0; it < config.temporal_tokens(); ++it) {
    for (int ih = 0; ih < nh; ++ih) {
      for (int iw = 0; iw < nw; ++iw) {
        const int token = (it * nh + ih) * nw + iw;
        for (int dt = 0; dt < tt; ++dt) {
          const Field& f = frames[static_cast<std::size_t>(it * tt + dt)];
          for (int dy = 0; dy < th; ++dy) {
            for (int dx = 0; dx < tw; ++dx) {
              patches(token, (dt * th + dy) * tw + dx) =
                  f(static_cast<std::size_t>(ih * th + dy), static_cast<std::size_t>(iw * tw + dx));
            }
          }
        }
      }
    }
  }
  return patches;
}

// ---------------------------------------------------------------- network

template <typename Real>
TubeletAttention<Real>::TubeletAttention(TubeletConfig config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  const std::size_t D = static_cast<std::size_t>(config_.embed_dim);
  const std::size_t M = static_cast<std::size_t>(config_.mlp_dim);
  const std::size_t P = static_cast<std::size_t>(config_.tubelet_volume());
  const std::size_t n = static_cast<std::size_t>(config_.num_tokens());
  const std::size_t patch_pixels = static_cast<std::size_t>(config_.tubelet_height * config_.tubelet_width);
  std::size_t cursor = 0;
  embed_weight_ = take_slice(cursor, D * P);
  embed_bias_ = take_slice(cursor, D);
  position_ = take_slice(cursor, n * D);
  for (int b = 0; b < 2 * config_.num_layers; ++b) {
    BlockParams p;
    p.ln1_gain = take_slice(cursor, D);
    p.ln1_bias = take_slice(cursor, D);
    p.qkv_weight = take_slice(cursor, 3 * D * D);
    p.qkv_bias = take_slice(cursor, 3 * D);
    p.out_weight = take_slice(cursor, D * D);
    p.out_bias = take_slice(cursor, D);
    p.ln2_gain = take_slice(cursor, D);
    p.ln2_bias = take_slice(cursor, D);
    p.fc1_weight = take_slice(cursor, M * D);
    p.fc1_bias = take_slice(cursor, M);
    p.fc2_weight = take_slice(cursor, D * M);
    p.fc2_bias = take_slice(cursor, D);
    blocks_.push_back(p);
  }
  final_gain_ = take_slice(cursor, D);
  final_bias_ = take_slice(cursor, D);
  unpatch_weight_ = take_slice(cursor, patch_pixels * config_.temporal_tokens() * D);
  unpatch_bias_ = take_slice(cursor, patch_pixels);
  params_.assign(cursor, Real(0));

  std::mt19937_64 engine(seed);
  std::span<Real> all(params_);
  auto normal = [&](ParamSlice s, double scale) { fill_normal(all.subspan(s.offset, s.size), scale, engine); };
  auto ones = [&](ParamSlice s) { std::fill_n(params_.begin() + static_cast<long>(s.offset), s.size, Real(1)); };
  normal(embed_weight_, 1.0 / std::sqrt(static_cast<double>(P)));
  normal(position_, 0.1);
  for (const BlockParams& p : blocks_) {
    ones(p.ln1_gain);
    ones(p.ln2_gain);
    normal(p.qkv_weight, 1.0 / std::sqrt(static_cast<double>(D)));
    normal(p.out_weight, 0.5 / std::sqrt(static_cast<double>(D)));
    normal(p.fc1_weight, std::sqrt(2.0 / static_cast<double>(D)));
    normal(p.fc2_weight, 0.5 / std::sqrt(static_cast<double>(M)));
  }
  ones(final_gain_);
  // The un-patching head starts near zero so an untrained model predicts
  // (almost exactly) the most recent frame.
  normal(unpatch_weight_, 1e-3 / std::sqrt(static_cast<double>(config_.temporal_tokens() * D)));
}

namespace {

template <typename Real>
RowMatrix<Real> layer_norm(const RowMatrix<Real>& x, const Real* gain, const Real* bias,
                           typename TubeletAttention<Real>::LayerNormCache* cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  RowMatrix<Real> xhat(n, d);
  Vector<Real> inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Real mean = x.row(i).mean();
    const Real var = (x.row(i).array() - mean).square().mean();
    inv_std(i) = Real(1) / std::sqrt(var + Real(kLayerNormEps));
    xhat.row(i) = (x.row(i).array() - mean) * inv_std(i);
  }
  Eigen::Map<const RowVector<Real>> g(gain, d), b(bias, d);
  RowMatrix<Real> y = (xhat.array().rowwise() * g.array()).rowwise() + b.array();
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename Real>
RowMatrix<Real> layer_norm_backward(const typename TubeletAttention<Real>::LayerNormCache& cache,
                                    const RowMatrix<Real>& grad, const Real* gain, Real* grad_gain,
                                    Real* grad_bias) {
  const Eigen::Index d = grad.cols();
  Eigen::Map<const RowVector<Real>> g(gain, d);
  if (grad_gain) {
    Eigen::Map<RowVector<Real>>(grad_gain, d) += (grad.array() * cache.normalized.array()).colwise().sum().matrix();
    Eigen::Map<RowVector<Real>>(grad_bias, d) += grad.colwise().sum();
  }
  RowMatrix<Real> dxhat = grad.array().rowwise() * g.array();
  RowMatrix<Real> dx(grad.rows(), d);
  for (Eigen::Index i = 0; i < grad.rows(); ++i) {
    const Real m1 = dxhat.row(i).mean();
    const Real m2 = (dxhat.row(i).array() * cache.normalized.row(i).array()).mean();
    dx.row(i) = cache.inv_std(i) *
                (dxhat.row(i).array() - m1 - cache.normalized.row(i).array() * m2);
  }
  return dx;
}

// y = x W^T + b for W stored out x in.
template <typename Real>
RowMatrix<Real> linear(const RowMatrix<Real>& x, const Real* w, const Real* b, Eigen::Index out,
                       Eigen::Index in) {
  ConstMatrixMap<Real> W(w, out, in);
  RowMatrix<Real> y = x * W.transpose();
  y.rowwise() += Eigen::Map<const RowVector<Real>>(b, out);
  return y;
}

// Accumulates weight/bias gradients and returns dL/dx.
template <typename Real>
RowMatrix<Real> linear_backward(const RowMatrix<Real>& x, const RowMatrix<Real>& grad,
                                const Real* w, Real* gw, Real* gb, Eigen::Index out,
                                Eigen::Index in) {
  ConstMatrixMap<Real> W(w, out, in);
  if (gw) {
    MatrixMap<Real>(gw, out, in).noalias() += grad.transpose() * x;
    Eigen::Map<RowVector<Real>>(gb, out) += grad.colwise().sum();
  }
  return grad * W;
}

}  // namespace

template <typename Real>
typename TubeletAttention<Real>::Matrix TubeletAttention<Real>::block_forward(
    const BlockParams& p, const Matrix& x, BlockCache* cache) const {
  const Eigen::Index D = config_.embed_dim, M = config_.mlp_dim;
  const int heads = config_.num_heads;
  const Eigen::Index dh = D / heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  const Real* w = params_.data();

  LayerNormCache ln1;
  Matrix a = layer_norm<Real>(x, w + p.ln1_gain.offset, w + p.ln1_bias.offset, &ln1);
  Matrix qkv = linear<Real>(a, w + p.qkv_weight.offset, w + p.qkv_bias.offset, 3 * D, D);
  Matrix heads_out(x.rows(), D);
  std::vector<Matrix> attention(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto q = qkv.middleCols(h * dh, dh);
    const auto k = qkv.middleCols(D + h * dh, dh);
    const auto v = qkv.middleCols(2 * D + h * dh, dh);
    Matrix s = (q * k.transpose()) * scale;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const Real mx = s.row(i).maxCoeff();
      s.row(i) = (s.row(i).array() - mx).exp();
      s.row(i) /= s.row(i).sum();
    }
    heads_out.middleCols(h * dh, dh).noalias() = s * v;
    attention[static_cast<std::size_t>(h)] = std::move(s);
  }
  Matrix mid = x + linear<Real>(heads_out, w + p.out_weight.offset, w + p.out_bias.offset, D, D);
  LayerNormCache ln2;
  Matrix b = layer_norm<Real>(mid, w + p.ln2_gain.offset, w + p.ln2_bias.offset, &ln2);
  Matrix hidden_pre = linear<Real>(b, w + p.fc1_weight.offset, w + p.fc1_bias.offset, M, D);
  Matrix hidden = hidden_pre.unaryExpr([](Real v) { return gelu(v); });
  Matrix out = mid + linear<Real>(hidden, w + p.fc2_weight.offset, w + p.fc2_bias.offset, D, M);
  if (cache) {
    cache->input = x;
    cache->ln1 = std::move(ln1);
    cache->ln1_out = std::move(a);
    cache->qkv = std::move(qkv);
    cache->attention = std::move(attention);
    cache->heads = std::move(heads_out);
    cache->mid = std::move(mid);
    cache->ln2 = std::move(ln2);
    cache->ln2_out = std::move(b);
    cache->hidden_pre = std::move(hidden_pre);
    cache->hidden = std::move(hidden);
  }
  return out;
}

template <typename Real>
typename TubeletAttention<Real>::Matrix TubeletAttention<Real>::block_backward(
    const BlockParams& p, const BlockCache& c, const Matrix& grad, std::span<Real> gp) const {
  const Eigen::Index D = config_.embed_dim, M = config_.mlp_dim;
  const int heads = config_.num_heads;
  const Eigen::Index dh = D / heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  const Real* w = params_.data();
  Real* g = gp.data();

  // out = mid + fc2(gelu(fc1(ln2(mid))))
  Matrix d_mid = grad;
  Matrix d_hidden = linear_backward<Real>(c.hidden, grad, w + p.fc2_weight.offset,
                                          g + p.fc2_weight.offset, g + p.fc2_bias.offset, D, M);
  Matrix d_hidden_pre = d_hidden.binaryExpr(c.hidden_pre, [](Real gr, Real z) { return gr * gelu_grad(z); });
  Matrix d_b = linear_backward<Real>(c.ln2_out, d_hidden_pre, w + p.fc1_weight.offset,
                                     g + p.fc1_weight.offset, g + p.fc1_bias.offset, M, D);
  d_mid += layer_norm_backward<Real>(c.ln2, d_b, w + p.ln2_gain.offset, g + p.ln2_gain.offset,
                                     g + p.ln2_bias.offset);

  // mid = x + out_proj(attention(ln1(x)))
  Matrix d_x = d_mid;
  Matrix d_heads = linear_backward<Real>(c.heads, d_mid, w + p.out_weight.offset,
                                         g + p.out_weight.offset, g + p.out_bias.offset, D, D);
  Matrix d_qkv(c.qkv.rows(), 3 * D);
  for (int h = 0; h < heads; ++h) {
    const Matrix& attn = c.attention[static_cast<std::size_t>(h)];
    const auto q = c.qkv.middleCols(h * dh, dh);
    const auto k = c.qkv.middleCols(D + h * dh, dh);
    const auto v = c.qkv.middleCols(2 * D + h * dh, dh);
    const auto d_out = d_heads.middleCols(h * dh, dh);
    Matrix d_attn = d_out * v.transpose();
    d_qkv.middleCols(2 * D + h * dh, dh).noalias() = attn.transpose() * d_out;
    Matrix d_scores(attn.rows(), attn.cols());
    for (Eigen::Index i = 0; i < attn.rows(); ++i) {
      const Real dot = (d_attn.row(i).array() * attn.row(i).array()).sum();
      d_scores.row(i) = attn.row(i).array() * (d_attn.row(i).array() - dot);
    }
    d_scores *= scale;
    d_qkv.middleCols(h * dh, dh).noalias() = d_scores * k;
    d_qkv.middleCols(D + h * dh, dh).noalias() = d_scores.transpose() * q;
  }
  Matrix d_a = linear_backward<Real>(c.ln1_out, d_qkv, w + p.qkv_weight.offset,
                                     g + p.qkv_weight.offset, g + p.qkv_bias.offset, 3 * D, D);
  d_x += layer_norm_backward<Real>(c.ln1, d_a, w + p.ln1_gain.offset, g + p.ln1_gain.offset,
                                   g + p.ln1_bias.offset);
  return d_x;
}

template <typename Real>
typename TubeletAttention<Real>::Matrix TubeletAttention<Real>::embed(
    std::span<const Field> frames) const {
  const Matrix patches = tubelet_partition(frames, config_).template cast<Real>();
  const Eigen::Index D = config_.embed_dim;
  Matrix x = linear<Real>(patches, params_.data() + embed_weight_.offset,
                          params_.data() + embed_bias_.offset, D, config_.tubelet_volume());
  x += ConstMatrixMap<Real>(params_.data() + position_.offset, config_.num_tokens(), D);
  return x;
}

template <typename Real>
Field TubeletAttention<Real>::forward(std::span<const Field> frames, Cache* cache) const {
  const Eigen::Index D = config_.embed_dim;
  Matrix patches = tubelet_partition(frames, config_).template cast<Real>();
  Matrix x = linear<Real>(patches, params_.data() + embed_weight_.offset,
                          params_.data() + embed_bias_.offset, D, config_.tubelet_volume());
  x += ConstMatrixMap<Real>(params_.data() + position_.offset, config_.num_tokens(), D);
  if (cache) {
    cache->patches = std::move(patches);
    cache->blocks.assign(blocks_.size(), BlockCache());
  }
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    x = block_forward(blocks_[b], x, cache ? &cache->blocks[b] : nullptr);
  }
  LayerNormCache lnf;
  const Matrix f = layer_norm<Real>(x, params_.data() + final_gain_.offset,
                                    params_.data() + final_bias_.offset, &lnf);

  const int nt = config_.temporal_tokens();
  const int ns = config_.spatial_tokens();
  Matrix u(ns, nt * D);
  for (int it = 0; it < nt; ++it) u.middleCols(it * D, D) = f.middleRows(it * ns, ns);
  const int th = config_.tubelet_height, tw = config_.tubelet_width;
  const Matrix offsets = linear<Real>(u, params_.data() + unpatch_weight_.offset,
                                      params_.data() + unpatch_bias_.offset, th * tw, nt * D);

  Field out = frames.back();
  const int nw = config_.frame_width / tw;
  for (int s = 0; s < ns; ++s) {
    const int ih = s / nw, iw = s % nw;
    for (int dy = 0; dy < th; ++dy) {
      for (int dx = 0; dx < tw; ++dx) {
        out(static_cast<std::size_t>(ih * th + dy), static_cast<std::size_t>(iw * tw + dx)) +=
            static_cast<double>(offsets(s, dy * tw + dx));
      }
    }
  }
  if (cache) {
    cache->final_ln = std::move(lnf);
    cache->unpatch_input = std::move(u);
  }
  return out;
}

template <typename Real>
void TubeletAttention<Real>::backward(const Cache& cache, const Field& grad_output,
                                      std::span<Real> gp) const {
  if (gp.size() != params_.size()) throw ShapeMismatch("transition backward: gradient size mismatch");
  const Eigen::Index D = config_.embed_dim;
  const int nt = config_.temporal_tokens();
  const int ns = config_.spatial_tokens();
  const int th = config_.tubelet_height, tw = config_.tubelet_width;
  const int nw = config_.frame_width / tw;
  const Real* w = params_.data();
  Real* g = gp.data();

  Matrix d_offsets(ns, th * tw);
  for (int s = 0; s < ns; ++s) {
    const int ih = s / nw, iw = s % nw;
    for (int dy = 0; dy < th; ++dy) {
      for (int dx = 0; dx < tw; ++dx) {
        d_offsets(s, dy * tw + dx) = static_cast<Real>(
            grad_output(static_cast<std::size_t>(ih * th + dy), static_cast<std::size_t>(iw * tw + dx)));
      }
    }
  }
  const Matrix d_u = linear_backward<Real>(cache.unpatch_input, d_offsets, w + unpatch_weight_.offset,
                                           g + unpatch_weight_.offset, g + unpatch_bias_.offset,
                                           th * tw, nt * D);
  Matrix d_f(config_.num_tokens(), D);
  for (int it = 0; it < nt; ++it) d_f.middleRows(it * ns, ns) = d_u.middleCols(it * D, D);
  Matrix d_x = layer_norm_backward<Real>(cache.final_ln, d_f, w + final_gain_.offset,
                                         g + final_gain_.offset, g + final_bias_.offset);
  for (std::size_t b = blocks_.size(); b-- > 0;) {
    d_x = block_backward(blocks_[b], cache.blocks[b], d_x, gp);
  }
  MatrixMap<Real>(g + position_.offset, config_.num_tokens(), D) += d_x;
  linear_backward<Real>(cache.patches, d_x, w + embed_weight_.offset, g + embed_weight_.offset,
                        g + embed_bias_.offset, D, config_.tubelet_volume());
}

template <typename Real>
Field TubeletAttention<Real>::predict(const HistoryBuffer& history) const {
  const std::vector<Field> frames = history.padded();
  if (frames.size() != static_cast<std::size_t>(config_.context)) {
    throw InvalidArgument("tubelet-attention: history capacity must equal K");
  }
  return forward(frames, nullptr);
}

template class TubeletAttention<float>;
template class TubeletAttention<double>;

// ---------------------------------------------------------------- training

template <typename Real>
double transition_loss_and_gradient(const TubeletAttention<Real>& model,
                                    std::span<const std::vector<Field>> windows,
                                    std::span<const Field> targets, std::span<Real> grad) {
  if (windows.empty() || windows.size() != targets.size()) {
    throw InvalidArgument("transition loss: windows and targets must be nonempty and paired");
  }
  std::fill(grad.begin(), grad.end(), Real(0));
  double loss = 0.0;
  const double n_pixels = static_cast<double>(targets.front().size());
  const double norm = 1.0 / (n_pixels * static_cast<double>(windows.size()));
  typename TubeletAttention<Real>::Cache cache;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    Field diff = model.forward(windows[i], grad.empty() ? nullptr : &cache);
    diff -= targets[i];
    loss += squared_norm(diff) * norm;
    if (!grad.empty()) {
      diff *= 2.0 * norm;
      model.backward(cache, diff, grad);
    }
  }
  return loss;
}

template double transition_loss_and_gradient<float>(const TubeletAttention<float>&,
                                                    std::span<const std::vector<Field>>,
                                                    std::span<const Field>, std::span<float>);
template double transition_loss_and_gradient<double>(const TubeletAttention<double>&,
                                                     std::span<const std::vector<Field>>,
                                                     std::span<const Field>, std::span<double>);

template <typename Real>
TransitionTrace train_transition(TubeletAttention<Real>& model,
                                 std::span<const std::vector<Field>> inputs,
                                 std::span<const std::vector<Field>> targets,
                                 const TrainConfig& config) {
  const std::size_t K = static_cast<std::size_t>(model.config().context);
  if (inputs.empty()) throw InvalidArgument("train_transition: no sequences");
  if (inputs.size() != targets.size()) throw InvalidArgument("train_transition: inputs and targets must pair up");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() <= K) throw InvalidArgument("train_transition: every sequence must be longer than K");
    if (inputs[i].size() != targets[i].size()) {
      throw InvalidArgument("train_transition: input and target sequences differ in length");
    }
  }
  if (config.batch_size < 1 || config.iterations < 0 || !(config.learning_rate > 0.0)) {
    throw InvalidArgument("train_transition: invalid training configuration");
  }
  TransitionTrace trace;
  Adam<Real> adam(model.parameter_count(), config.learning_rate);
  std::vector<Real> grad(model.parameter_count());
  Rng rng(derive_seed(config.seed, {0x7a11}));
  std::vector<std::vector<Field>> windows(static_cast<std::size_t>(config.batch_size));
  std::vector<Field> next(static_cast<std::size_t>(config.batch_size));
  for (int it = 0; it < config.iterations; ++it) {
    for (std::size_t b = 0; b < windows.size(); ++b) {
      const std::size_t s = rng.index(inputs.size());
      const auto& seq = inputs[s];
      const std::size_t start = rng.index(seq.size() - K);
      windows[b].assign(seq.begin() + static_cast<long>(start), seq.begin() + static_cast<long>(start + K));
      next[b] = targets[s][start + K];
    }
    const double loss = transition_loss_and_gradient<Real>(model, windows, next, grad);
    if (!std::isfinite(loss)) {
      throw NumericalError("train_transition: non-finite loss at iteration " + std::to_string(it));
    }
    trace.losses.push_back(loss);
    adam.set_learning_rate(learning_rate_at(config, it));
    adam.step(model.parameters(), grad);
  }
  return trace;
}

template <typename Real>
TransitionTrace train_transition(TubeletAttention<Real>& model,
                                 std::span<const std::vector<Field>> sequences,
                                 const TrainConfig& config) {
  return train_transition(model, sequences, sequences, config);
}

template TransitionTrace train_transition<float>(TubeletAttention<float>&,
                                                 std::span<const std::vector<Field>>,
                                                 const TrainConfig&);
template TransitionTrace train_transition<double>(TubeletAttention<double>&,
                                                  std::span<const std::vector<Field>>,
                                                  const TrainConfig&);
template TransitionTrace train_transition<float>(TubeletAttention<float>&,
                                                 std::span<const std::vector<Field>>,
                                                 std::span<const std::vector<Field>>,
                                                 const TrainConfig&);
template TransitionTrace train_transition<double>(TubeletAttention<double>&,
                                                  std::span<const std::vector<Field>>,
                                                  std::span<const std::vector<Field>>,
                                                  const TrainConfig&);

double next_frame_mse(const TransitionModel& model, std::span<const std::vector<Field>> sequences,
                      std::size_t context) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& seq : sequences) {
    for (std::size_t t = context; t < seq.size(); ++t) {
      HistoryBuffer h(context);
      for (std::size_t j = t - context; j < t; ++j) h.push(seq[j], static_cast<int>(j));
      const Field pred = model.predict(h);
      total += squared_norm(pred - seq[t]) / (4.0 * static_cast<double>(pred.size()));
      ++count;
    }
  }
  if (count == 0) throw InvalidArgument("next_frame_mse: no full windows");
  return total / static_cast<double>(count);
}

Checkpoint transition_checkpoint(const TubeletAttention<float>& model) {
  const TubeletConfig& c = model.config();
  Checkpoint ckpt;
  ckpt.kind = ModelKind::transition;
  for (int v : {c.context, c.tubelet_time, c.tubelet_height, c.tubelet_width, c.embed_dim,
                c.num_layers, c.num_heads, c.mlp_dim, c.frame_height, c.frame_width}) {
    ckpt.arch.push_back(static_cast<std::uint32_t>(v));
  }
  ckpt.parameters.assign(model.parameters().begin(), model.parameters().end());
  return ckpt;
}

TubeletAttention<float> transition_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != ModelKind::transition) throw IoError("checkpoint is not a transition model");
  if (ckpt.arch.size() != 10) throw IoError("transition checkpoint: expected 10 arch fields");
  TubeletConfig c;
  int* fields[] = {&c.context, &c.tubelet_time, &c.tubelet_height, &c.tubelet_width, &c.embed_dim,
                   &c.num_layers, &c.num_heads, &c.mlp_dim, &c.frame_height, &c.frame_width};
  for (std::size_t i = 0; i < 10; ++i) *fields[i] = static_cast<int>(ckpt.arch[i]);
  TubeletAttention<float> model(c, 0);
  if (model.parameter_count() != ckpt.parameters.size()) {
    throw IoError("transition checkpoint: parameter count does not match architecture");
  }
  std::copy(ckpt.parameters.begin(), ckpt.parameters.end(), model.parameters().begin());
  return model;
}

}  // namespace seqdiff
