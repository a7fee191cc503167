#include "cdfnet/adam.hpp"

#include <cmath>
#include <string>

namespace cdfnet {

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), T(0));
    v_.emplace_back(p.numel(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad())
      throw AutogradError("adam_step: parameter " + std::to_string(i) + " of shape " +
                          shape_to_string(params_[i].shape()) + " has no gradient");
  }
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i].data();
    auto g = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double m_hat = mj / correction1;
      const double v_hat = vj / correction2;
      w[j] = static_cast<T>(w[j] - options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon));
    }
    params_[i].clear_grad();
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace cdfnet
