#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "cdfnet/tensor.hpp"

namespace cdfnet {

inline constexpr std::uint8_t kIgnoreLabel = 255;

/// Ordered record of executed differentiable operations.
///
/// An operation is recorded only when the tape is recording and at least one of
/// its inputs requires a gradient. backward() replays the record in reverse,
/// visiting every node once, then empties the tape: a second backward() on the
/// same loss without a new forward pass is rejected.
template <typename T>
class Tape {
 public:
  using StoragePtr = std::shared_ptr<detail::TensorStorage<T>>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void record(std::vector<StoragePtr> inputs, StoragePtr output, std::function<void()> backward_fn);
  void backward(const Tensor<T>& loss);
  void reset() { nodes_.clear(); }

 private:
  struct Node {
    std::vector<StoragePtr> inputs;
    StoragePtr output;
    std::function<void()> backward_fn;
  };
  bool recording_;
  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

// Closed primitive set. Feature maps are [C,H,W]; vectors are [N].

/// 3x3 or 1x1 convolution, stride 1, zero padding that preserves HxW.
/// weight is [Cout,Cin,k,k], bias is [Cout].
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

/// Affine map y = W x + b on a vector; weight is [Nout,Nin].
template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

/// [C,H,W] -> [C].
template <typename T>
Tensor<T> global_average_pool(Tape<T>& tape, const Tensor<T>& input);

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& input);

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& input);

/// [C1,H,W] ++ [C2,H,W] -> [C1+C2,H,W].
template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& first, const Tensor<T>& second);

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> multiply(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// Scales channel c of a [C,H,W] map by scales[c].
template <typename T>
Tensor<T> channelwise_scale(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& scales);

/// Scales every channel of a [C,H,W] map by a shared [1,H,W] map.
template <typename T>
Tensor<T> spatialwise_scale(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& map);

/// 2x2 max pooling; H and W must be even. Ties resolve to the first element in
/// row-major window order.
template <typename T>
Tensor<T> max_pool2x2(Tape<T>& tape, const Tensor<T>& input);

template <typename T>
Tensor<T> upsample_nearest2x(Tape<T>& tape, const Tensor<T>& input);

/// Mean per-pixel softmax cross-entropy of [K,H,W] logits against H*W class ids.
/// Pixels labelled ignore_index are excluded; any other label >= K is rejected.
/// If every pixel is ignored the loss is 0 and contributes no gradient.
template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>& tape, const Tensor<T>& logits, std::span<const std::uint8_t> labels,
                                std::uint8_t ignore_index = kIgnoreLabel);

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& input);

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& input, T factor);

}  // namespace cdfnet
