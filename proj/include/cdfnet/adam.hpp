#pragma once

#include <cstdint>
#include <vector>

#include "cdfnet/tensor.hpp"

namespace cdfnet {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Holds one pair of moment buffers per parameter;
/// the parameters themselves are shared handles, so step() updates the model
/// in place.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamOptions options);

  /// Applies one update and clears every parameter gradient. Throws
  /// AutogradError if any parameter has no gradient.
  void step();

  std::int64_t step_count() const noexcept { return step_; }
  const AdamOptions& options() const noexcept { return options_; }
  const std::vector<T>& first_moment(std::size_t i) const { return m_.at(i); }
  const std::vector<T>& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  std::vector<Tensor<T>> params_;
  AdamOptions options_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::int64_t step_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace cdfnet
