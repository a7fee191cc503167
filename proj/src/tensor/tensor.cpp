#include "cdfnet/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace cdfnet {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto extent : shape) {
    if (extent < 0) throw ShapeError("negative extent in shape " + shape_to_string(shape));
    n *= extent;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : storage_(std::make_shared<detail::TensorStorage<T>>()) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_to_string(shape));
  }
  storage_->shape = std::move(shape);
  storage_->data = std::move(data);
  storage_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
  return storage_->data[0];
}

template <typename T>
T& Tensor<T>::at(std::int64_t c, std::int64_t h, std::int64_t w) {
  const auto& s = storage_->shape;
  return storage_->data[static_cast<std::size_t>((c * s[1] + h) * s[2] + w)];
}

template <typename T>
T Tensor<T>::at(std::int64_t c, std::int64_t h, std::int64_t w) const {
  const auto& s = storage_->shape;
  return storage_->data[static_cast<std::size_t>((c * s[1] + h) * s[2] + w)];
}

template <typename T>
std::span<T> Tensor<T>::grad_mut() {
  if (storage_->grad.empty()) storage_->grad.assign(storage_->data.size(), T(0));
  return storage_->grad;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor copy(storage_->shape, storage_->data, storage_->requires_grad);
  copy.storage_->grad = storage_->grad;
  return copy;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace cdfnet
