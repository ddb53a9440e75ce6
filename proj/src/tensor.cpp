#include "voxelseg/tensor.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <exception>
#include <mutex>
#include <thread>

#include "voxelseg/error.hpp"

namespace voxelseg::nn {

std::size_t product(const Dims& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string to_string(const Dims& dims) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ')';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Dims shape, T fill, bool requires_grad)
    : shape_(std::move(shape)), values_(product(shape_), fill), requires_grad_(requires_grad) {}

template <typename T>
Tensor<T>::Tensor(Dims shape, std::vector<T> values, bool requires_grad)
    : shape_(std::move(shape)), values_(std::move(values)), requires_grad_(requires_grad) {
  require(values_.size() == product(shape_), ErrorCode::ShapeMismatch,
          "tensor of shape " + to_string(shape_) + " given " + std::to_string(values_.size()) + " values");
}

template <typename T>
std::vector<T>& Tensor<T>::grad() {
  if (grad_.size() != values_.size()) grad_.assign(values_.size(), T(0));
  return grad_;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(grad_.begin(), grad_.end(), T(0));
}

template <typename T>
void Tape<T>::backward(const TensorPtr<T>& output) {
  require(output && output->size() == 1, ErrorCode::InvalidArgument, "backward needs a one-element output");
  output->grad()[0] += T(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

std::size_t thread_count() {
  static const std::size_t count = [] {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("VOXELSEG_THREADS")) {
      const long cap = std::strtol(env, nullptr, 10);
      if (cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
    }
    return n;
  }();
  return count;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex guard;
  std::exception_ptr error;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          std::lock_guard lock(guard);
          if (!error) error = std::current_exception();
        }
      });
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace voxelseg::nn
