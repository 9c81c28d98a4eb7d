#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "seqdiff/field.hpp"
#include "seqdiff/nn.hpp"

namespace seqdiff {

/// Ring buffer of the last K posterior estimates, oldest first.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(std::size_t capacity);

  /// Appends a frame; frame indices must be strictly increasing.
  void push(Field frame, int frame_index);
  void clear() noexcept;

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return frames_.size(); }
  bool empty() const noexcept { return frames_.empty(); }
  const Field& back() const;
  const std::deque<Field>& frames() const noexcept { return frames_; }
  const std::deque<int>& frame_indices() const noexcept { return indices_; }

  /// Exactly `capacity()` frames, left-padded by repeating the oldest frame.
  std::vector<Field> padded() const;

 private:
  std::size_t capacity_;
  std::deque<Field> frames_;
  std::deque<int> indices_;
};

/// Predicts the mean of the next frame from a history of posterior estimates.
class TransitionModel {
 public:
  virtual ~TransitionModel() = default;
  /// Throws InvalidArgument on an empty history.
  virtual Field predict(const HistoryBuffer& history) const = 0;
  virtual std::string name() const = 0;
};

/// x^{t+1} ~ x^t: the implicit model behind initializing from the previous estimate.
class IdentityTransition final : public TransitionModel {
 public:
  Field predict(const HistoryBuffer& history) const override;
  std::string name() const override { return "identity"; }
};

/// x^t + (x^t - x^{t-1}), clamped to the model-space range [-1, 1].
class LinearExtrapolation final : public TransitionModel {
 public:
  Field predict(const HistoryBuffer& history) const override;
  std::string name() const override { return "linear-extrapolation"; }
};

struct TubeletConfig {
  int context = 4;  // K
  int tubelet_time = 2;
  int tubelet_height = 4;
  int tubelet_width = 4;
  int embed_dim = 64;
  int num_layers = 2;  // per stack (encoder and decoder each)
  int num_heads = 4;
  int mlp_dim = 128;
  int frame_height = 32;
  int frame_width = 32;

  /// Throws InvalidArgument if tubelets do not tile the K x H x W volume or
  /// heads do not divide the embedding.
  void validate() const;
  int temporal_tokens() const { return context / tubelet_time; }
  int spatial_tokens() const {
    return (frame_height / tubelet_height) * (frame_width / tubelet_width);
  }
  int num_tokens() const { return temporal_tokens() * spatial_tokens(); }
  int tubelet_volume() const { return tubelet_time * tubelet_height * tubelet_width; }
};

/// 32x32 frames, (2,4,4) tubelets, 64-dim embedding, 2 layers, 4 heads.
TubeletConfig desk_tubelet_config();
/// 128x128 frames, (2,16,16) tubelets, 2 layers, 8 heads.
TubeletConfig paper_tubelet_config();

/// Raw tubelet partition of K frames: num_tokens x tubelet_volume. Token
/// (it, ih, iw) has row (it * nh + ih) * nw + iw; within a tube the entry
/// (dt, dy, dx) sits at column (dt * th + dy) * tw + dx.
RowMatrix<double> tubelet_partition(std::span<const Field> frames, const TubeletConfig& config);

/// Tubelet-attention next-frame predictor.
///
/// The K-frame volume is cut into tubelets, linearly embedded with learned
/// position embeddings, and passed through an encoder stack and a decoder
/// stack of pre-norm transformer blocks (multi-head self-attention + GELU
/// MLP). A final layer norm feeds a linear un-patching head that maps, for
/// each spatial patch, the concatenated temporal tokens to pixel offsets
/// added to the most recent frame.
template <typename Real>
class TubeletAttention final : public TransitionModel {
 public:
  using Matrix = RowMatrix<Real>;

  explicit TubeletAttention(TubeletConfig config = desk_tubelet_config(), std::uint64_t seed = 0);

  const TubeletConfig& config() const noexcept { return config_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::span<Real> parameters() noexcept { return params_; }
  std::span<const Real> parameters() const noexcept { return params_; }

  struct LayerNormCache {
    Matrix normalized;
    Eigen::Matrix<Real, Eigen::Dynamic, 1> inv_std;
  };
  struct BlockCache {
    Matrix input;
    LayerNormCache ln1;
    Matrix ln1_out;
    Matrix qkv;
    std::vector<Matrix> attention;  // per head, rows sum to one
    Matrix heads;
    Matrix mid;
    LayerNormCache ln2;
    Matrix ln2_out;
    Matrix hidden_pre;
    Matrix hidden;
  };
  struct Cache {
    Matrix patches;
    std::vector<BlockCache> blocks;
    LayerNormCache final_ln;
    Matrix unpatch_input;
  };

  /// Embedded tokens (num_tokens x embed_dim) of exactly K frames.
  Matrix embed(std::span<const Field> frames) const;

  /// Predicted next frame from exactly K frames (oldest first).
  Field forward(std::span<const Field> frames, Cache* cache) const;
  /// Accumulates dL/dparams for dL/d(output frame) = grad_output.
  void backward(const Cache& cache, const Field& grad_output, std::span<Real> grad_params) const;

  Field predict(const HistoryBuffer& history) const override;
  std::string name() const override { return "tubelet-attention"; }

  template <typename Other>
  TubeletAttention<Other> cast() const {
    TubeletAttention<Other> out(config_, 0);
    auto dst = out.parameters();
    for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<Other>(params_[i]);
    return out;
  }

 private:
  struct BlockParams {
    ParamSlice ln1_gain, ln1_bias, qkv_weight, qkv_bias, out_weight, out_bias;
    ParamSlice ln2_gain, ln2_bias, fc1_weight, fc1_bias, fc2_weight, fc2_bias;
  };

  Matrix block_forward(const BlockParams& p, const Matrix& x, BlockCache* cache) const;
  Matrix block_backward(const BlockParams& p, const BlockCache& cache, const Matrix& grad,
                        std::span<Real> grad_params) const;

  TubeletConfig config_;
  ParamSlice embed_weight_, embed_bias_, position_;
  std::vector<BlockParams> blocks_;  // encoder blocks, then decoder blocks
  ParamSlice final_gain_, final_bias_, unpatch_weight_, unpatch_bias_;
  std::vector<Real> params_;
};

extern template class TubeletAttention<float>;
extern template class TubeletAttention<double>;

struct TransitionTrace {
  std::vector<double> losses;
};

/// Mean squared error between the prediction from K frames and the next frame.
template <typename Real>
double transition_loss_and_gradient(const TubeletAttention<Real>& model,
                                    std::span<const std::vector<Field>> windows,
                                    std::span<const Field> targets, std::span<Real> grad);

/// Fits the predictor on clean sequences (model-space frames) by Adam on the
/// next-frame MSE over K-frame windows. Every sequence must be longer than K.
template <typename Real>
TransitionTrace train_transition(TubeletAttention<Real>& model,
                                 std::span<const std::vector<Field>> sequences,
                                 const TrainConfig& config);
/// Same, with history windows drawn from `inputs` (e.g. past posterior
/// estimates) and next-frame targets from the paired clean `targets`.
template <typename Real>
TransitionTrace train_transition(TubeletAttention<Real>& model,
                                 std::span<const std::vector<Field>> inputs,
                                 std::span<const std::vector<Field>> targets,
                                 const TrainConfig& config);

/// Average next-frame MSE over all full K-frame windows of model-space
/// sequences, reported in data-space units (model-space MSE / 4).
double next_frame_mse(const TransitionModel& model, std::span<const std::vector<Field>> sequences,
                      std::size_t context);

struct Checkpoint;
/// Transition arch fields: K, tubelet (t,h,w), embed_dim, num_layers,
/// num_heads, mlp_dim, frame height, frame width.
Checkpoint transition_checkpoint(const TubeletAttention<float>& model);
TubeletAttention<float> transition_from_checkpoint(const Checkpoint& ckpt);

}  // namespace seqdiff
