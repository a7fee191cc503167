#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdfnet {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Thrown when an operation receives operands whose extents do not fit its rule.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Misuse of the gradient machinery (non-scalar loss, double backward, missing grads).
class AutogradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {
template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until the first accumulation
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major array that can participate in reverse-mode differentiation.
///
/// Copies are shallow: two Tensor values may refer to the same storage, which is
/// how parameters are shared between the twin branches of the damage network.
/// Use clone() for an independent deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(storage_); }
  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::int64_t dim(std::size_t axis) const { return storage_->shape.at(axis); }
  std::size_t numel() const { return storage_->data.size(); }

  std::span<T> data() { return storage_->data; }
  std::span<const T> data() const { return storage_->data; }
  T item() const;

  T& at(std::int64_t c, std::int64_t h, std::int64_t w);
  T at(std::int64_t c, std::int64_t h, std::int64_t w) const;

  bool requires_grad() const { return storage_->requires_grad; }
  void set_requires_grad(bool value) { storage_->requires_grad = value; }

  bool has_grad() const { return !storage_->grad.empty(); }
  std::span<const T> grad() const { return storage_->grad; }
  std::span<T> grad_mut();  // allocates a zero buffer on first use
  void clear_grad() { storage_->grad.clear(); }

  Tensor clone() const;
  bool shares_storage(const Tensor& other) const noexcept { return storage_ == other.storage_; }

  // Used by the tape; not part of the numerical surface.
  const std::shared_ptr<detail::TensorStorage<T>>& storage() const { return storage_; }

 private:
  std::shared_ptr<detail::TensorStorage<T>> storage_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace cdfnet
