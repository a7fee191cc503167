#include "cdfnet/fusion.hpp"

#include <cmath>

namespace cdfnet {

namespace {

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": branch features must share one [C,H,W] shape, got " +
                     shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
  }
}

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<T> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>(std::move(shape), std::move(data), true);
}

}  // namespace

template <typename T>
FusionParams<T> FusionParams<T>::initialized(std::int64_t channels, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(2 * channels));
  FusionParams p;
  p.reduce_weight = uniform_tensor<T>({channels, 2 * channels}, bound, rng);
  p.reduce_bias = Tensor<T>::zeros({channels}, true);
  p.spatial_weight = uniform_tensor<T>({1, 2 * channels, 1, 1}, bound, rng);
  p.spatial_bias = Tensor<T>::zeros({1}, true);
  return p;
}

template <typename T>
FusionParams<T> FusionParams<T>::zeros(std::int64_t channels) {
  return FusionParams{Tensor<T>::zeros({channels, 2 * channels}, true), Tensor<T>::zeros({channels}, true),
                      Tensor<T>::zeros({1, 2 * channels, 1, 1}, true), Tensor<T>::zeros({1}, true)};
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> FusionParams<T>::named(int level) const {
  const std::string prefix = "cdf" + std::to_string(level);
  return {{prefix + ".reduce.w", reduce_weight},
          {prefix + ".reduce.b", reduce_bias},
          {prefix + ".spatial.w", spatial_weight},
          {prefix + ".spatial.b", spatial_bias}};
}

template <typename T>
void FusionParams<T>::validate() const {
  const std::int64_t c = reduce_weight.rank() == 2 ? reduce_weight.dim(0) : -1;
  const bool ok = c > 0 && reduce_weight.shape() == Shape{c, 2 * c} && reduce_bias.shape() == Shape{c} &&
                  spatial_weight.shape() == Shape{1, 2 * c, 1, 1} && spatial_bias.shape() == Shape{1};
  if (!ok) {
    throw ShapeError("fusion params: expected reduce [C,2C]+[C] and spatial [1,2C,1,1]+[1], got " +
                     shape_to_string(reduce_weight.shape()) + ", " + shape_to_string(reduce_bias.shape()) + ", " +
                     shape_to_string(spatial_weight.shape()) + ", " + shape_to_string(spatial_bias.shape()));
  }
}

template <typename T>
ChannelFused<T> channel_fuse(Tape<T>& tape, const Tensor<T>& u_pre, const Tensor<T>& u_post,
                             const FusionParams<T>& params) {
  require_same_shape("channel_fuse", u_pre, u_post);
  params.validate();
  if (params.channels() != u_pre.dim(0)) {
    throw ShapeError("channel_fuse: params sized for C=" + std::to_string(params.channels()) + " but features are " +
                     shape_to_string(u_pre.shape()));
  }
  const auto pooled = global_average_pool(tape, concat_channels(tape, u_pre, u_post));
  const auto gate = sigmoid(tape, linear(tape, pooled, params.reduce_weight, params.reduce_bias));
  auto pre_cha = add(tape, channelwise_scale(tape, u_post, gate), u_pre);
  auto post_cha = add(tape, channelwise_scale(tape, u_pre, gate), u_post);
  return {std::move(pre_cha), std::move(post_cha), gate};
}

template <typename T>
SpatialFused<T> spatial_fuse(Tape<T>& tape, const Tensor<T>& u_pre_cha, const Tensor<T>& u_post_cha,
                             const Tensor<T>& u_pre, const Tensor<T>& u_post, const FusionParams<T>& params) {
  require_same_shape("spatial_fuse", u_pre_cha, u_post_cha);
  require_same_shape("spatial_fuse", u_pre_cha, u_pre);
  require_same_shape("spatial_fuse", u_pre_cha, u_post);
  params.validate();
  const auto gate =
      sigmoid(tape, conv2d(tape, concat_channels(tape, u_pre_cha, u_post_cha), params.spatial_weight, params.spatial_bias));
  auto pre_spa = add(tape, spatialwise_scale(tape, u_post_cha, gate), u_pre);
  auto post_spa = add(tape, spatialwise_scale(tape, u_pre_cha, gate), u_post);
  return {std::move(pre_spa), std::move(post_spa), gate};
}

template <typename T>
FusionIO<T> cdf_block(Tape<T>& tape, const Tensor<T>& u_pre, const Tensor<T>& u_post, const FusionParams<T>& params) {
  auto cha = channel_fuse(tape, u_pre, u_post, params);
  auto spa = spatial_fuse(tape, cha.u_pre_cha, cha.u_post_cha, u_pre, u_post, params);
  return FusionIO<T>{u_pre,          u_post,         cha.channel_gate, cha.u_pre_cha, cha.u_post_cha,
                     spa.spatial_gate, spa.u_pre_spa, spa.u_post_spa};
}

template struct FusionParams<float>;
template struct FusionParams<double>;

#define CDFNET_INSTANTIATE_FUSION(T)                                                                          \
  template ChannelFused<T> channel_fuse(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const FusionParams<T>&); \
  template SpatialFused<T> spatial_fuse(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                        const Tensor<T>&, const FusionParams<T>&);                            \
  template FusionIO<T> cdf_block(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const FusionParams<T>&);

CDFNET_INSTANTIATE_FUSION(float)
CDFNET_INSTANTIATE_FUSION(double)

}  // namespace cdfnet
