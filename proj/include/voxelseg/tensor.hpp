#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace voxelseg::nn {

using Dims = std::vector<std::size_t>;

std::size_t product(const Dims& dims);
std::string to_string(const Dims& dims);

/// Dense row-major array (last dimension fastest). Activations use the
/// layout (batch, x, y, z, channels). `grad` is allocated lazily and always
/// matches `values` in length once present.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Dims shape, T fill = T(0), bool requires_grad = false);
  Tensor(Dims shape, std::vector<T> values, bool requires_grad = false);

  const Dims& shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  T& operator[](std::size_t i) { return values_[i]; }
  T operator[](std::size_t i) const { return values_[i]; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool has_grad() const { return !grad_.empty(); }
  /// Gradient buffer, zero-initialised on first access.
  std::vector<T>& grad();
  const std::vector<T>& grad() const { return grad_; }
  void zero_grad();

 private:
  Dims shape_;
  std::vector<T> values_;
  std::vector<T> grad_;
  bool requires_grad_ = false;
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorPtr<T> make_tensor(Dims shape, T fill = T(0), bool requires_grad = false) {
  return std::make_shared<Tensor<T>>(std::move(shape), fill, requires_grad);
}

template <typename T>
TensorPtr<T> make_tensor(Dims shape, std::vector<T> values, bool requires_grad = false) {
  return std::make_shared<Tensor<T>>(std::move(shape), std::move(values), requires_grad);
}

/// Ordered record of executed differentiable operations. Each entry is a
/// closure holding the op's saved inputs; backward() runs them in exact
/// reverse order, and every closure adds into its inputs' gradients.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

  /// Seeds d(output)/d(output) = 1 for a one-element tensor and propagates.
  void backward(const TensorPtr<T>& output);

  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

 private:
  std::vector<std::function<void()>> ops_;
};

/// True when an op producing from `inputs` must be recorded on `tape`.
template <typename T>
bool needs_grad(const Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (tape == nullptr) return false;
  for (const auto* t : inputs)
    if (t != nullptr && t->requires_grad()) return true;
  return false;
}

/// Worker count for internal data parallelism: hardware concurrency, capped
/// by the VOXELSEG_THREADS environment variable.
std::size_t thread_count();

/// Runs fn(i) for i in [0, n). Work items must touch disjoint memory; the
/// split into items is the caller's, so results do not depend on the
/// number of threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace voxelseg::nn
