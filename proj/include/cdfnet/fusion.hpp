#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdfnet/ops.hpp"
#include "cdfnet/rng.hpp"
#include "cdfnet/tensor.hpp"

namespace cdfnet {

/// Learnable weights of one cross-directional fusion block for C-channel
/// branch features.
///
/// channel_reduce maps the 2C pooled statistics of the concatenated branches to
/// C gate logits (weight [C,2C], bias [C]). spatial_conv is a 1x1 convolution
/// from the 2C channel-fused maps to a single gate map (weight [1,2C,1,1],
/// bias [1]).
template <typename T>
struct FusionParams {
  Tensor<T> reduce_weight;
  Tensor<T> reduce_bias;
  Tensor<T> spatial_weight;
  Tensor<T> spatial_bias;

  /// Weights uniform in +-1/sqrt(fan_in), biases zero.
  static FusionParams initialized(std::int64_t channels, Rng& rng);
  static FusionParams zeros(std::int64_t channels);

  std::int64_t channels() const { return reduce_weight.dim(0); }
  std::vector<Tensor<T>> tensors() const { return {reduce_weight, reduce_bias, spatial_weight, spatial_bias}; }
  /// Checkpoint names: cdf{level}.reduce.w / .reduce.b / .spatial.w / .spatial.b
  std::vector<std::pair<std::string, Tensor<T>>> named(int level) const;

  /// Throws ShapeError unless the four tensors form a valid 2C->C / 2C->1 pair.
  void validate() const;
};

/// Every tensor of one block evaluation, inputs through outputs.
template <typename T>
struct FusionIO {
  Tensor<T> u_pre;
  Tensor<T> u_post;
  Tensor<T> channel_gate;  // [C], sigmoid of the reduced pooled features
  Tensor<T> u_pre_cha;
  Tensor<T> u_post_cha;
  Tensor<T> spatial_gate;  // [1,H,W]
  Tensor<T> u_pre_spa;
  Tensor<T> u_post_spa;
};

template <typename T>
struct ChannelFused {
  Tensor<T> u_pre_cha;
  Tensor<T> u_post_cha;
  Tensor<T> channel_gate;
};

template <typename T>
struct SpatialFused {
  Tensor<T> u_pre_spa;
  Tensor<T> u_post_spa;
  Tensor<T> spatial_gate;
};

/// Channel-wise cross recalibration. The gate is shared by both directions and
/// each branch's residual receives the *other* branch scaled by it:
///   gate       = sigmoid(reduce(avgpool([u_pre, u_post])))
///   u_pre_cha  = gate * u_post + u_pre
///   u_post_cha = gate * u_pre  + u_post
template <typename T>
ChannelFused<T> channel_fuse(Tape<T>& tape, const Tensor<T>& u_pre, const Tensor<T>& u_post,
                             const FusionParams<T>& params);

/// Spatial-wise cross recalibration of the channel-fused maps. Residuals are
/// the original block inputs, not the channel-fused maps:
///   gate       = sigmoid(conv1x1([u_pre_cha, u_post_cha]))    [1,H,W]
///   u_pre_spa  = gate . u_post_cha + u_pre
///   u_post_spa = gate . u_pre_cha  + u_post
template <typename T>
SpatialFused<T> spatial_fuse(Tape<T>& tape, const Tensor<T>& u_pre_cha, const Tensor<T>& u_post_cha,
                             const Tensor<T>& u_pre, const Tensor<T>& u_post, const FusionParams<T>& params);

/// channel_fuse followed by spatial_fuse, fully taped.
template <typename T>
FusionIO<T> cdf_block(Tape<T>& tape, const Tensor<T>& u_pre, const Tensor<T>& u_post, const FusionParams<T>& params);

extern template struct FusionParams<float>;
extern template struct FusionParams<double>;

}  // namespace cdfnet
