#include "seqdiff/denoiser.hpp"

#include <cmath>
#include <string>

#include "seqdiff/error.hpp"

namespace seqdiff {

namespace {

constexpr double kMinFrequency = 1.0;
constexpr double kMaxFrequency = 200.0;

template <typename Real>
Real sigmoid(Real z) {
  return Real(1) / (Real(1) + std::exp(-z));
}

// cols[(c*9 + ky*3 + kx), b*hw + y*W + x] = in[c, b*hw + (y+ky-1)*W + (x+kx-1)], zero outside.
template <typename Real>
void im2col(const RowMatrix<Real>& in, int channels, std::size_t batch, std::size_t H,
            std::size_t W, RowMatrix<Real>& cols) {
  const std::size_t hw = H * W;
  cols.resize(channels * 9, static_cast<Eigen::Index>(batch * hw));
  for (int c = 0; c < channels; ++c) {
    const Real* src = in.row(c).data();
    for (int k = 0; k < 9; ++k) {
      const long dy = k / 3 - 1;
      const long dx = k % 3 - 1;
      Real* dst = cols.row(c * 9 + k).data();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t y = 0; y < H; ++y) {
          Real* d = dst + b * hw + y * W;
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(H)) {
            std::fill(d, d + W, Real(0));
            continue;
          }
          const Real* s = src + b * hw + static_cast<std::size_t>(sy) * W;
          for (std::size_t x = 0; x < W; ++x) {
            const long sx = static_cast<long>(x) + dx;
            d[x] = (sx >= 0 && sx < static_cast<long>(W)) ? s[sx] : Real(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col.
template <typename Real>
void col2im(const RowMatrix<Real>& cols, int channels, std::size_t batch, std::size_t H,
            std::size_t W, RowMatrix<Real>& out) {
  const std::size_t hw = H * W;
  out.setZero(channels, static_cast<Eigen::Index>(batch * hw));
  for (int c = 0; c < channels; ++c) {
    Real* dst = out.row(c).data();
    for (int k = 0; k < 9; ++k) {
      const long dy = k / 3 - 1;
      const long dx = k % 3 - 1;
      const Real* src = cols.row(c * 9 + k).data();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t y = 0; y < H; ++y) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(H)) continue;
          const Real* s = src + b * hw + y * W;
          Real* d = dst + b * hw + static_cast<std::size_t>(sy) * W;
          for (std::size_t x = 0; x < W; ++x) {
            const long sx = static_cast<long>(x) + dx;
            if (sx >= 0 && sx < static_cast<long>(W)) d[sx] += s[x];
          }
        }
      }
    }
  }
}

template <typename Real>
typename DenoiserNet<Real>::Input single_input(const Field& x, double tau, Rates rates) {
  typename DenoiserNet<Real>::Input in;
  in.height = x.height();
  in.width = x.width();
  in.batch = 1;
  in.x.resize(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) in.x(0, static_cast<Eigen::Index>(i)) = static_cast<Real>(x[i]);
  in.tau = {tau};
  in.sigma = {rates.sigma};
  return in;
}

template <typename Real>
Field row_to_field(const RowMatrix<Real>& m, std::size_t height, std::size_t width) {
  Field out(height, width);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(m(0, static_cast<Eigen::Index>(i)));
  return out;
}

}  // namespace

template <typename Real>
DenoiserNet<Real>::DenoiserNet(DenoiserArch arch, std::uint64_t seed) : arch_(arch) {
  if (arch_.channels < 1 || arch_.stages < 2 || arch_.time_frequencies < 1) {
    throw InvalidArgument("denoiser: channels >= 1, stages >= 2, time_frequencies >= 1 required");
  }
  const std::size_t embed = 2 * static_cast<std::size_t>(arch_.time_frequencies);
  std::size_t cursor = 0;
  for (int s = 0; s < arch_.stages; ++s) {
    Stage st;
    st.in_channels = s == 0 ? 1 : arch_.channels;
    st.out_channels = s == arch_.stages - 1 ? 1 : arch_.channels;
    st.weight = take_slice(cursor, static_cast<std::size_t>(st.out_channels * st.in_channels * 9));
    st.bias = take_slice(cursor, static_cast<std::size_t>(st.out_channels));
    st.time_weight = s == arch_.stages - 1
                         ? ParamSlice{cursor, 0}
                         : take_slice(cursor, static_cast<std::size_t>(st.out_channels) * embed);
    stages_.push_back(st);
  }
  params_.assign(cursor, Real(0));

  std::mt19937_64 engine(seed);
  std::span<Real> p(params_);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const Stage& st = stages_[s];
    const double fan_in = st.in_channels * 9.0;
    const bool last = s + 1 == stages_.size();
    const double scale = last ? 0.1 / std::sqrt(fan_in) : std::sqrt(2.0 / fan_in);
    fill_normal(p.subspan(st.weight.offset, st.weight.size), scale, engine);
    if (st.time_weight.size > 0) {
      fill_normal(p.subspan(st.time_weight.offset, st.time_weight.size),
                  0.5 / std::sqrt(static_cast<double>(embed)), engine);
    }
  }
}

template <typename Real>
typename DenoiserNet<Real>::Matrix DenoiserNet<Real>::embed_times(
    const std::vector<double>& tau) const {
  const int f = arch_.time_frequencies;
  Matrix e(static_cast<Eigen::Index>(tau.size()), 2 * f);
  for (std::size_t b = 0; b < tau.size(); ++b) {
    for (int k = 0; k < f; ++k) {
      const double t = f == 1 ? 0.0 : static_cast<double>(k) / (f - 1);
      const double freq = std::exp(std::log(kMinFrequency) +
                                   t * (std::log(kMaxFrequency) - std::log(kMinFrequency)));
      e(static_cast<Eigen::Index>(b), k) = static_cast<Real>(std::sin(freq * tau[b]));
      e(static_cast<Eigen::Index>(b), f + k) = static_cast<Real>(std::cos(freq * tau[b]));
    }
  }
  return e;
}

template <typename Real>
typename DenoiserNet<Real>::Matrix DenoiserNet<Real>::forward(const Input& input,
                                                              Cache* cache) const {
  const std::size_t hw = input.height * input.width;
  if (input.x.rows() != 1 || static_cast<std::size_t>(input.x.cols()) != input.batch * hw ||
      input.tau.size() != input.batch || input.sigma.size() != input.batch) {
    throw ShapeMismatch("denoiser forward: inconsistent batch layout");
  }
  const Matrix embedding = embed_times(input.tau);
  if (cache) {
    cache->columns.assign(stages_.size(), Matrix());
    cache->pre_activation.assign(stages_.size(), Matrix());
    cache->embedding = embedding;
  }

  Matrix h = input.x;
  Matrix cols;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const Stage& st = stages_[s];
    im2col(h, st.in_channels, input.batch, input.height, input.width, cols);
    ConstMatrixMap<Real> w(params_.data() + st.weight.offset, st.out_channels, st.in_channels * 9);
    Matrix z = w * cols;

    Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>> bias(params_.data() + st.bias.offset, st.out_channels);
    Matrix per_sample_bias(st.out_channels, static_cast<Eigen::Index>(input.batch));
    if (st.time_weight.size > 0) {
      ConstMatrixMap<Real> wt(params_.data() + st.time_weight.offset, st.out_channels, embedding.cols());
      per_sample_bias = wt * embedding.transpose();
    } else {
      per_sample_bias.setZero();
    }
    per_sample_bias.colwise() += bias;
    for (int c = 0; c < st.out_channels; ++c) {
      for (std::size_t b = 0; b < input.batch; ++b) {
        z.row(c).segment(static_cast<Eigen::Index>(b * hw), static_cast<Eigen::Index>(hw)).array() +=
            per_sample_bias(c, static_cast<Eigen::Index>(b));
      }
    }

    const bool last = s + 1 == stages_.size();
    if (last) {
      for (std::size_t b = 0; b < input.batch; ++b) {
        const auto seg = Eigen::seqN(static_cast<Eigen::Index>(b * hw), static_cast<Eigen::Index>(hw));
        z(0, seg) += static_cast<Real>(input.sigma[b]) * input.x(0, seg);
      }
    } else {
      h = z.unaryExpr([](Real v) { return v * sigmoid(v); });
    }
    if (cache) {
      cache->columns[s] = std::move(cols);
      if (!last) cache->pre_activation[s] = z;
      cols = Matrix();
    }
    if (last) return z;
  }
  return Matrix();  // unreachable: stages >= 2
}

template <typename Real>
void DenoiserNet<Real>::backward(const Input& input, const Cache& cache,
                                 const Matrix& grad_output, std::span<Real> grad_params,
                                 Matrix* grad_input) const {
  const std::size_t hw = input.height * input.width;
  const bool want_params = !grad_params.empty();
  if (want_params && grad_params.size() != params_.size()) {
    throw ShapeMismatch("denoiser backward: gradient buffer size mismatch");
  }
  Matrix dz = grad_output;
  Matrix dx = Matrix::Zero(1, grad_output.cols());
  for (std::size_t b = 0; b < input.batch; ++b) {
    const auto seg = Eigen::seqN(static_cast<Eigen::Index>(b * hw), static_cast<Eigen::Index>(hw));
    dx(0, seg) = static_cast<Real>(input.sigma[b]) * grad_output(0, seg);
  }

  Matrix dcols, din;
  for (std::size_t si = stages_.size(); si-- > 0;) {
    const Stage& st = stages_[si];
    ConstMatrixMap<Real> w(params_.data() + st.weight.offset, st.out_channels, st.in_channels * 9);
    if (want_params) {
      MatrixMap<Real> gw(grad_params.data() + st.weight.offset, st.out_channels, st.in_channels * 9);
      gw.noalias() += dz * cache.columns[si].transpose();
      Matrix per_sample(st.out_channels, static_cast<Eigen::Index>(input.batch));
      for (std::size_t b = 0; b < input.batch; ++b) {
        per_sample.col(static_cast<Eigen::Index>(b)) =
            dz.middleCols(static_cast<Eigen::Index>(b * hw), static_cast<Eigen::Index>(hw)).rowwise().sum();
      }
      Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>> gb(grad_params.data() + st.bias.offset, st.out_channels);
      gb += per_sample.rowwise().sum();
      if (st.time_weight.size > 0) {
        MatrixMap<Real> gwt(grad_params.data() + st.time_weight.offset, st.out_channels, cache.embedding.cols());
        gwt.noalias() += per_sample * cache.embedding;
      }
    }
    if (si == 0 && !grad_input) break;
    dcols.noalias() = w.transpose() * dz;
    col2im(dcols, st.in_channels, input.batch, input.height, input.width, din);
    if (si == 0) {
      dx += din;
      break;
    }
    const Matrix& zprev = cache.pre_activation[si - 1];
    dz = din.binaryExpr(zprev, [](Real g, Real z) {
      const Real sg = sigmoid(z);
      return g * sg * (Real(1) + z * (Real(1) - sg));
    });
  }
  if (grad_input) *grad_input = std::move(dx);
}

template <typename Real>
Field DenoiserNet<Real>::predict_noise(const Field& x_tau, double tau, Rates rates) const {
  const Input in = single_input<Real>(x_tau, tau, rates);
  return row_to_field(forward(in, nullptr), x_tau.height(), x_tau.width());
}

template <typename Real>
Field DenoiserNet<Real>::noise_vjp(const Field& x_tau, double tau, Rates rates,
                                   const Field& v) const {
  require_same_shape(x_tau, v, "noise_vjp");
  const Input in = single_input<Real>(x_tau, tau, rates);
  Cache cache;
  forward(in, &cache);
  Matrix g(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) g(0, static_cast<Eigen::Index>(i)) = static_cast<Real>(v[i]);
  Matrix dx;
  backward(in, cache, g, {}, &dx);
  return row_to_field(dx, x_tau.height(), x_tau.width());
}

template class DenoiserNet<float>;
template class DenoiserNet<double>;

DsmDraw draw_dsm(std::span<const Field> x0_batch, const NoiseSchedule& schedule, Rng& rng) {
  if (x0_batch.empty()) throw InvalidArgument("dsm: empty batch");
  const double floor = kTauFloorFraction * schedule.horizon();
  DsmDraw d;
  for (const Field& x0 : x0_batch) {
    const double tau = rng.uniform(floor, schedule.horizon());
    const Rates r = rates_at(schedule, tau);
    Field eps = rng.normal_field(x0.height(), x0.width());
    d.x_tau.push_back(forward_diffuse(x0, r, eps));
    d.tau.push_back(tau);
    d.rates.push_back(r);
    d.noise.push_back(std::move(eps));
  }
  return d;
}

double dsm_loss(const NoisePredictor& model, std::span<const Field> x0_batch,
                const NoiseSchedule& schedule, std::uint64_t seed) {
  Rng rng(seed);
  const DsmDraw d = draw_dsm(x0_batch, schedule, rng);
  double total = 0.0;
  for (std::size_t i = 0; i < x0_batch.size(); ++i) {
    total += squared_norm(model.predict_noise(d.x_tau[i], d.tau[i], d.rates[i]) - d.noise[i]);
  }
  return total / static_cast<double>(x0_batch.size());
}

template <typename Real>
double dsm_loss_and_gradient(const DenoiserNet<Real>& model, std::span<const Field> x0_batch,
                             const NoiseSchedule& schedule, std::uint64_t seed,
                             std::span<Real> grad) {
  Rng rng(seed);
  const DsmDraw d = draw_dsm(x0_batch, schedule, rng);
  const std::size_t hw = x0_batch.front().size();
  typename DenoiserNet<Real>::Input in;
  in.height = x0_batch.front().height();
  in.width = x0_batch.front().width();
  in.batch = x0_batch.size();
  in.x.resize(1, static_cast<Eigen::Index>(in.batch * hw));
  RowMatrix<Real> target(1, static_cast<Eigen::Index>(in.batch * hw));
  for (std::size_t b = 0; b < in.batch; ++b) {
    require_same_shape(x0_batch[b], x0_batch.front(), "dsm batch");
    for (std::size_t i = 0; i < hw; ++i) {
      in.x(0, static_cast<Eigen::Index>(b * hw + i)) = static_cast<Real>(d.x_tau[b][i]);
      target(0, static_cast<Eigen::Index>(b * hw + i)) = static_cast<Real>(d.noise[b][i]);
    }
    in.tau.push_back(d.tau[b]);
    in.sigma.push_back(d.rates[b].sigma);
  }
  typename DenoiserNet<Real>::Cache cache;
  const RowMatrix<Real> out = model.forward(in, &cache);
  const RowMatrix<Real> diff = out - target;
  const double loss = static_cast<double>(diff.squaredNorm()) / static_cast<double>(in.batch);
  std::fill(grad.begin(), grad.end(), Real(0));
  const RowMatrix<Real> g = diff * static_cast<Real>(2.0 / static_cast<double>(in.batch));
  model.backward(in, cache, g, grad, nullptr);
  return loss;
}

template double dsm_loss_and_gradient<float>(const DenoiserNet<float>&, std::span<const Field>,
                                             const NoiseSchedule&, std::uint64_t, std::span<float>);
template double dsm_loss_and_gradient<double>(const DenoiserNet<double>&, std::span<const Field>,
                                              const NoiseSchedule&, std::uint64_t, std::span<double>);

template <typename Real>
TrainTrace train_score(DenoiserNet<Real>& model, std::span<const Field> dataset,
                       const TrainConfig& config, const NoiseSchedule& schedule) {
  if (dataset.empty()) throw InvalidArgument("train_score: empty dataset");
  if (config.batch_size < 1 || config.iterations < 0 || !(config.learning_rate > 0.0)) {
    throw InvalidArgument("train_score: invalid training configuration");
  }
  TrainTrace trace;
  Adam<Real> adam(model.parameter_count(), config.learning_rate);
  std::vector<Real> grad(model.parameter_count());
  Rng picker(derive_seed(config.seed, {0x5c0e}));
  std::vector<Field> batch(static_cast<std::size_t>(config.batch_size));
  for (int it = 0; it < config.iterations; ++it) {
    for (Field& f : batch) f = dataset[picker.index(dataset.size())];
    const double loss = dsm_loss_and_gradient<Real>(
        model, batch, schedule, derive_seed(config.seed, {static_cast<std::uint64_t>(it)}), grad);
    if (!std::isfinite(loss)) {
      throw NumericalError("train_score: non-finite loss at iteration " + std::to_string(it));
    }
    trace.losses.push_back(loss);
    adam.set_learning_rate(learning_rate_at(config, it));
    adam.step(model.parameters(), grad);
  }
  return trace;
}

template TrainTrace train_score<float>(DenoiserNet<float>&, std::span<const Field>,
                                       const TrainConfig&, const NoiseSchedule&);
template TrainTrace train_score<double>(DenoiserNet<double>&, std::span<const Field>,
                                        const TrainConfig&, const NoiseSchedule&);

Field NetworkScore::score(const Field& x_tau, double tau, Rates rates) const {
  if (!(rates.sigma > 0.0)) throw InvalidArgument("network score: sigma must be positive");
  Field eps = net_->predict_noise(x_tau, tau, rates);
  eps *= -1.0 / rates.sigma;
  return eps;
}

Field NetworkScore::score_vjp(const Field& x_tau, double tau, Rates rates, const Field& v) const {
  if (!exact_) return ScoreModel::score_vjp(x_tau, tau, rates, v);
  if (!(rates.sigma > 0.0)) throw InvalidArgument("network score: sigma must be positive");
  Field g = net_->noise_vjp(x_tau, tau, rates, v);
  g *= -1.0 / rates.sigma;
  return g;
}

}  // namespace seqdiff
