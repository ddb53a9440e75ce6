#include "voxelseg/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "voxelseg/error.hpp"

namespace voxelseg::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Rows (output voxels) per work item. Fixed so that reductions over items
// happen in the same order whatever the thread count.
constexpr std::size_t kChunkRows = 4096;

/// Runs `work(item, slot)` for every item in parallel waves of at most
/// thread_count() items, then `reduce(item, slot)` serially in item order.
template <typename Work, typename Reduce>
void in_waves(std::size_t items, Work&& work, Reduce&& reduce) {
  const std::size_t width = std::max<std::size_t>(1, thread_count());
  for (std::size_t first = 0; first < items; first += width) {
    const std::size_t n = std::min(width, items - first);
    parallel_for(n, [&](std::size_t slot) { work(first + slot, slot); });
    for (std::size_t slot = 0; slot < n; ++slot) reduce(first + slot, slot);
  }
}

void check_rank5(const Dims& d, const char* what) {
  require(d.size() == 5, ErrorCode::ShapeMismatch, std::string(what) + " expects a (b,x,y,z,c) tensor, got " + to_string(d));
}

struct ConvGeometry {
  std::size_t batch, in[3], ci, k, pad, stride, out[3], co;

  std::size_t rows() const { return batch * out[0] * out[1] * out[2]; }
  std::size_t cols() const { return k * k * k * ci; }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, std::size_t r0, std::size_t n, T* col) {
  const std::size_t cols = g.cols();
  for (std::size_t r = r0; r < r0 + n; ++r) {
    std::size_t rem = r;
    const std::size_t oz = rem % g.out[2];
    rem /= g.out[2];
    const std::size_t oy = rem % g.out[1];
    rem /= g.out[1];
    const std::size_t ox = rem % g.out[0];
    const std::size_t b = rem / g.out[0];
    T* dst = col + (r - r0) * cols;
    for (std::size_t kx = 0; kx < g.k; ++kx) {
      const long ix = long(ox * g.stride + kx) - long(g.pad);
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        const long iy = long(oy * g.stride + ky) - long(g.pad);
        for (std::size_t kz = 0; kz < g.k; ++kz, dst += g.ci) {
          const long iz = long(oz * g.stride + kz) - long(g.pad);
          if (ix < 0 || iy < 0 || iz < 0 || ix >= long(g.in[0]) || iy >= long(g.in[1]) || iz >= long(g.in[2])) {
            std::fill(dst, dst + g.ci, T(0));
            continue;
          }
          const T* src = x + (((b * g.in[0] + ix) * g.in[1] + iy) * g.in[2] + iz) * g.ci;
          std::copy(src, src + g.ci, dst);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, std::size_t r0, std::size_t n, T* dx) {
  const std::size_t cols = g.cols();
  for (std::size_t r = r0; r < r0 + n; ++r) {
    std::size_t rem = r;
    const std::size_t oz = rem % g.out[2];
    rem /= g.out[2];
    const std::size_t oy = rem % g.out[1];
    rem /= g.out[1];
    const std::size_t ox = rem % g.out[0];
    const std::size_t b = rem / g.out[0];
    const T* src = col + (r - r0) * cols;
    for (std::size_t kx = 0; kx < g.k; ++kx) {
      const long ix = long(ox * g.stride + kx) - long(g.pad);
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        const long iy = long(oy * g.stride + ky) - long(g.pad);
        for (std::size_t kz = 0; kz < g.k; ++kz, src += g.ci) {
          const long iz = long(oz * g.stride + kz) - long(g.pad);
          if (ix < 0 || iy < 0 || iz < 0 || ix >= long(g.in[0]) || iy >= long(g.in[1]) || iz >= long(g.in[2]))
            continue;
          T* dst = dx + (((b * g.in[0] + ix) * g.in[1] + iy) * g.in[2] + iz) * g.ci;
          for (std::size_t c = 0; c < g.ci; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

template <typename T>
TensorPtr<T> make_output(Dims shape, bool tracked) {
  return make_tensor<T>(std::move(shape), T(0), tracked);
}

}  // namespace

template <typename T>
TensorPtr<T> conv3d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& bias,
                    std::size_t stride) {
  check_rank5(x->shape(), "conv3d input");
  const Dims& ws = w->shape();
  require(ws.size() == 5 && ws[0] == ws[1] && ws[1] == ws[2] && ws[0] % 2 == 1, ErrorCode::ShapeMismatch,
          "conv3d weights must be [k,k,k,ci,co] with odd k, got " + to_string(ws));
  require(ws[3] == x->dim(4), ErrorCode::ShapeMismatch,
          "conv3d weight input channels " + std::to_string(ws[3]) + " vs input " + std::to_string(x->dim(4)));
  require(stride >= 1, ErrorCode::InvalidArgument, "conv3d stride must be >= 1");
  require(!bias || (bias->rank() == 1 && bias->dim(0) == ws[4]), ErrorCode::ShapeMismatch, "conv3d bias must be [co]");

  ConvGeometry g{};
  g.batch = x->dim(0);
  g.ci = x->dim(4);
  g.k = ws[0];
  g.pad = (g.k - 1) / 2;
  g.stride = stride;
  g.co = ws[4];
  for (int a = 0; a < 3; ++a) {
    g.in[a] = x->dim(1 + a);
    g.out[a] = (g.in[a] + 2 * g.pad - g.k) / stride + 1;
  }

  const bool tracked = needs_grad(tape, {x.get(), w.get(), bias.get()});
  auto out = make_output<T>({g.batch, g.out[0], g.out[1], g.out[2], g.co}, tracked);
  const std::size_t rows = g.rows(), cols = g.cols();
  const std::size_t chunks = (rows + kChunkRows - 1) / kChunkRows;
  ConstMapMat<T> wm(w->data(), cols, g.co);

  parallel_for(chunks, [&](std::size_t c) {
    thread_local std::vector<T> col;
    const std::size_t r0 = c * kChunkRows, n = std::min(kChunkRows, rows - r0);
    col.resize(n * cols);
    im2col(x->data(), g, r0, n, col.data());
    MapMat<T> dst(out->data() + r0 * g.co, n, g.co);
    dst.noalias() = ConstMapMat<T>(col.data(), n, cols) * wm;
    if (bias) dst.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias->data(), g.co);
  });

  if (tracked) {
    tape->record([x, w, bias, out, g, rows, cols, chunks] {
      if (!out->has_grad()) return;
      const T* dy = out->grad().data();
      const bool gw = w->requires_grad(), gx = x->requires_grad();
      if (bias && bias->requires_grad()) {
        auto& db = bias->grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t o = 0; o < g.co; ++o) db[o] += dy[r * g.co + o];
      }
      if (!gw && !gx) return;
      ConstMapMat<T> wm(w->data(), cols, g.co);
      const std::size_t width = std::max<std::size_t>(1, thread_count());
      std::vector<RowMat<T>> dw_part(std::min(width, chunks));
      std::vector<std::vector<T>> dcol(std::min(width, chunks));
      T* dx = gx ? x->grad().data() : nullptr;
      T* dwp = gw ? w->grad().data() : nullptr;
      in_waves(
          chunks,
          [&](std::size_t c, std::size_t slot) {
            thread_local std::vector<T> col;
            const std::size_t r0 = c * kChunkRows, n = std::min(kChunkRows, rows - r0);
            ConstMapMat<T> dyc(dy + r0 * g.co, n, g.co);
            if (gw) {
              col.resize(n * cols);
              im2col(x->data(), g, r0, n, col.data());
              dw_part[slot].noalias() = ConstMapMat<T>(col.data(), n, cols).transpose() * dyc;
            }
            if (gx) {
              dcol[slot].resize(n * cols);
              MapMat<T>(dcol[slot].data(), n, cols).noalias() = dyc * wm.transpose();
            }
          },
          [&](std::size_t c, std::size_t slot) {
            const std::size_t r0 = c * kChunkRows, n = std::min(kChunkRows, rows - r0);
            if (gw) MapMat<T>(dwp, cols, g.co) += dw_part[slot];
            if (gx) col2im_add(dcol[slot].data(), g, r0, n, dx);
          });
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> transposed_conv3d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                               const TensorPtr<T>& bias) {
  check_rank5(x->shape(), "transposed_conv3d input");
  const Dims& ws = w->shape();
  require(ws.size() == 5 && ws[0] == 2 && ws[1] == 2 && ws[2] == 2, ErrorCode::ShapeMismatch,
          "transposed_conv3d weights must be [2,2,2,co,ci], got " + to_string(ws));
  const std::size_t ci = x->dim(4), co = ws[3];
  require(ws[4] == ci, ErrorCode::ShapeMismatch, "transposed_conv3d weight input channels mismatch");
  require(!bias || (bias->rank() == 1 && bias->dim(0) == co), ErrorCode::ShapeMismatch,
          "transposed_conv3d bias must be [co]");
  const std::size_t B = x->dim(0), X = x->dim(1), Y = x->dim(2), Z = x->dim(3);
  const std::size_t rows = B * X * Y * Z, wide = 8 * co;

  const bool tracked = needs_grad(tape, {x.get(), w.get(), bias.get()});
  auto out = make_output<T>({B, 2 * X, 2 * Y, 2 * Z, co}, tracked);

  // Row r of the product holds the 8 output voxels fed by input voxel r,
  // column k*co + o for kernel offset k = (kx*2 + ky)*2 + kz.
  auto out_offset = [=](std::size_t r, std::size_t k) {
    const std::size_t z = r % Z, y = (r / Z) % Y, xx = (r / (Z * Y)) % X, b = r / (Z * Y * X);
    const std::size_t kx = k >> 2, ky = (k >> 1) & 1, kz = k & 1;
    return (((b * 2 * X + 2 * xx + kx) * 2 * Y + 2 * y + ky) * 2 * Z + 2 * z + kz) * co;
  };

  const std::size_t chunks = (rows + kChunkRows - 1) / kChunkRows;
  ConstMapMat<T> wt(w->data(), wide, ci);
  parallel_for(chunks, [&](std::size_t c) {
    thread_local RowMat<T> prod;
    const std::size_t r0 = c * kChunkRows, n = std::min(kChunkRows, rows - r0);
    prod.noalias() = ConstMapMat<T>(x->data() + r0 * ci, n, ci) * wt.transpose();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < 8; ++k) {
        T* dst = out->data() + out_offset(r0 + i, k);
        for (std::size_t o = 0; o < co; ++o) dst[o] = prod(i, k * co + o) + (bias ? (*bias)[o] : T(0));
      }
  });

  if (tracked) {
    tape->record([x, w, bias, out, rows, ci, co, wide, chunks, out_offset] {
      if (!out->has_grad()) return;
      const T* dy = out->grad().data();
      if (bias && bias->requires_grad()) {
        auto& db = bias->grad();
        const std::size_t voxels = out->size() / co;
        for (std::size_t v = 0; v < voxels; ++v)
          for (std::size_t o = 0; o < co; ++o) db[o] += dy[v * co + o];
      }
      const bool gw = w->requires_grad(), gx = x->requires_grad();
      if (!gw && !gx) return;
      ConstMapMat<T> wt(w->data(), wide, ci);
      const std::size_t width = std::max<std::size_t>(1, thread_count());
      std::vector<RowMat<T>> dw_part(std::min(width, chunks));
      T* dx = gx ? x->grad().data() : nullptr;
      T* dw = gw ? w->grad().data() : nullptr;
      in_waves(
          chunks,
          [&](std::size_t c, std::size_t slot) {
            thread_local RowMat<T> dprod;
            const std::size_t r0 = c * kChunkRows, n = std::min(kChunkRows, rows - r0);
            dprod.resize(n, wide);
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t k = 0; k < 8; ++k) {
                const T* src = dy + out_offset(r0 + i, k);
                for (std::size_t o = 0; o < co; ++o) dprod(i, k * co + o) = src[o];
              }
            if (gx) MapMat<T>(dx + r0 * ci, n, ci).noalias() += dprod * wt;
            if (gw) dw_part[slot].noalias() = dprod.transpose() * ConstMapMat<T>(x->data() + r0 * ci, n, ci);
          },
          [&](std::size_t, std::size_t slot) {
            if (gw) MapMat<T>(dw, wide, ci) += dw_part[slot];
          });
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> maxpool3d(Tape<T>* tape, const TensorPtr<T>& x) {
  check_rank5(x->shape(), "maxpool3d input");
  const std::size_t B = x->dim(0), X = x->dim(1), Y = x->dim(2), Z = x->dim(3), C = x->dim(4);
  require(X % 2 == 0 && Y % 2 == 0 && Z % 2 == 0, ErrorCode::IndivisibleShape,
          "maxpool3d needs even spatial dims, got " + to_string(x->shape()));
  const std::size_t OX = X / 2, OY = Y / 2, OZ = Z / 2;
  const bool tracked = needs_grad(tape, {x.get()});
  auto out = make_output<T>({B, OX, OY, OZ, C}, tracked);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out->size());

  const T* in = x->data();
  std::size_t o = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t ox = 0; ox < OX; ++ox)
      for (std::size_t oy = 0; oy < OY; ++oy)
        for (std::size_t oz = 0; oz < OZ; ++oz)
          for (std::size_t c = 0; c < C; ++c, ++o) {
            std::size_t best = 0;
            T best_v = -std::numeric_limits<T>::infinity();
            bool first = true;
            for (std::size_t dx = 0; dx < 2; ++dx)
              for (std::size_t dy = 0; dy < 2; ++dy)
                for (std::size_t dz = 0; dz < 2; ++dz) {
                  const std::size_t i = (((b * X + 2 * ox + dx) * Y + 2 * oy + dy) * Z + 2 * oz + dz) * C + c;
                  if (first || in[i] > best_v) {
                    best_v = in[i];
                    best = i;
                    first = false;
                  }
                }
            (*out)[o] = best_v;
            (*argmax)[o] = best;
          }

  if (tracked) {
    tape->record([x, out, argmax] {
      if (!out->has_grad()) return;
      auto& dx = x->grad();
      const auto& dy = out->grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[(*argmax)[i]] += dy[i];
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> batchnorm(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& gamma, const TensorPtr<T>& beta,
                       Tensor<T>& running_mean, Tensor<T>& running_var, Mode mode, BatchNormOptions opts) {
  require(x->rank() >= 2, ErrorCode::ShapeMismatch, "batchnorm input needs a channel axis");
  const std::size_t C = x->shape().back(), N = x->size() / C;
  for (const Tensor<T>* t : {gamma.get(), beta.get(), &running_mean, &running_var})
    require(t->size() == C, ErrorCode::ShapeMismatch, "batchnorm parameter size differs from channel count");

  const bool tracked = needs_grad(tape, {x.get(), gamma.get(), beta.get()});
  auto out = make_output<T>(x->shape(), tracked);
  auto xhat = std::make_shared<std::vector<T>>(x->size());
  auto inv_std = std::make_shared<std::vector<T>>(C);
  const T* in = x->data();

  if (mode == Mode::Train) {
    std::vector<double> mean(C, 0.0), var(C, 0.0);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t c = 0; c < C; ++c) mean[c] += in[i * C + c];
    for (auto& m : mean) m /= double(N);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t c = 0; c < C; ++c) {
        const double d = in[i * C + c] - mean[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < C; ++c) {
      var[c] /= double(N);
      (*inv_std)[c] = static_cast<T>(1.0 / std::sqrt(var[c] + opts.eps));
      const double unbiased = N > 1 ? var[c] * double(N) / double(N - 1) : var[c];
      running_mean[c] = static_cast<T>((1.0 - opts.momentum) * running_mean[c] + opts.momentum * mean[c]);
      running_var[c] = static_cast<T>((1.0 - opts.momentum) * running_var[c] + opts.momentum * unbiased);
    }
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t c = 0; c < C; ++c)
        (*xhat)[i * C + c] = static_cast<T>((in[i * C + c] - mean[c]) * (*inv_std)[c]);
  } else {
    for (std::size_t c = 0; c < C; ++c)
      (*inv_std)[c] = static_cast<T>(1.0 / std::sqrt(double(running_var[c]) + opts.eps));
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t c = 0; c < C; ++c)
        (*xhat)[i * C + c] = (in[i * C + c] - running_mean[c]) * (*inv_std)[c];
  }
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t c = 0; c < C; ++c) (*out)[i * C + c] = (*gamma)[c] * (*xhat)[i * C + c] + (*beta)[c];

  if (tracked) {
    tape->record([x, gamma, beta, out, xhat, inv_std, mode, N, C] {
      if (!out->has_grad()) return;
      const auto& dy = out->grad();
      std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t c = 0; c < C; ++c) {
          sum_dy[c] += dy[i * C + c];
          sum_dy_xhat[c] += double(dy[i * C + c]) * (*xhat)[i * C + c];
        }
      if (gamma->requires_grad()) {
        auto& dg = gamma->grad();
        for (std::size_t c = 0; c < C; ++c) dg[c] += static_cast<T>(sum_dy_xhat[c]);
      }
      if (beta->requires_grad()) {
        auto& db = beta->grad();
        for (std::size_t c = 0; c < C; ++c) db[c] += static_cast<T>(sum_dy[c]);
      }
      if (!x->requires_grad()) return;
      auto& dx = x->grad();
      if (mode == Mode::Train) {
        for (std::size_t i = 0; i < N; ++i)
          for (std::size_t c = 0; c < C; ++c) {
            const double g = double((*gamma)[c]) * (*inv_std)[c] / double(N);
            dx[i * C + c] += static_cast<T>(
                g * (double(N) * dy[i * C + c] - sum_dy[c] - double((*xhat)[i * C + c]) * sum_dy_xhat[c]));
          }
      } else {
        for (std::size_t i = 0; i < N; ++i)
          for (std::size_t c = 0; c < C; ++c) dx[i * C + c] += dy[i * C + c] * (*gamma)[c] * (*inv_std)[c];
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> relu(Tape<T>* tape, const TensorPtr<T>& x) {
  const bool tracked = needs_grad(tape, {x.get()});
  auto out = make_output<T>(x->shape(), tracked);
  for (std::size_t i = 0; i < x->size(); ++i) (*out)[i] = (*x)[i] > T(0) ? (*x)[i] : T(0);
  if (tracked) {
    tape->record([x, out] {
      if (!out->has_grad()) return;
      auto& dx = x->grad();
      const auto& dy = out->grad();
      for (std::size_t i = 0; i < dy.size(); ++i)
        if ((*x)[i] > T(0)) dx[i] += dy[i];
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> concat_channels(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require(a->rank() == b->rank() && a->rank() >= 1, ErrorCode::ShapeMismatch, "concat rank mismatch");
  for (std::size_t i = 0; i + 1 < a->rank(); ++i)
    require(a->dim(i) == b->dim(i), ErrorCode::ShapeMismatch,
            "concat non-channel dims differ: " + to_string(a->shape()) + " vs " + to_string(b->shape()));
  const std::size_t ca = a->shape().back(), cb = b->shape().back(), n = a->size() / ca;
  Dims shape = a->shape();
  shape.back() = ca + cb;
  const bool tracked = needs_grad(tape, {a.get(), b.get()});
  auto out = make_output<T>(shape, tracked);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a->data() + i * ca, ca, out->data() + i * (ca + cb));
    std::copy_n(b->data() + i * cb, cb, out->data() + i * (ca + cb) + ca);
  }
  if (tracked) {
    tape->record([a, b, out, ca, cb, n] {
      if (!out->has_grad()) return;
      const auto& dy = out->grad();
      if (a->requires_grad()) {
        auto& da = a->grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < ca; ++c) da[i * ca + c] += dy[i * (ca + cb) + c];
      }
      if (b->requires_grad()) {
        auto& db = b->grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < cb; ++c) db[i * cb + c] += dy[i * (ca + cb) + ca + c];
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> softmax_channels(Tape<T>* tape, const TensorPtr<T>& x) {
  require(x->rank() >= 1, ErrorCode::ShapeMismatch, "softmax needs a channel axis");
  const std::size_t C = x->shape().back(), n = x->size() / C;
  const bool tracked = needs_grad(tape, {x.get()});
  auto out = make_output<T>(x->shape(), tracked);
  for (std::size_t i = 0; i < n; ++i) {
    const T* src = x->data() + i * C;
    T* dst = out->data() + i * C;
    const T m = *std::max_element(src, src + C);
    T total = 0;
    for (std::size_t c = 0; c < C; ++c) total += dst[c] = std::exp(src[c] - m);
    for (std::size_t c = 0; c < C; ++c) dst[c] /= total;
  }
  if (tracked) {
    tape->record([x, out, C, n] {
      if (!out->has_grad()) return;
      auto& dx = x->grad();
      const auto& dy = out->grad();
      for (std::size_t i = 0; i < n; ++i) {
        const T* y = out->data() + i * C;
        T dot = 0;
        for (std::size_t c = 0; c < C; ++c) dot += dy[i * C + c] * y[c];
        for (std::size_t c = 0; c < C; ++c) dx[i * C + c] += y[c] * (dy[i * C + c] - dot);
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require(a->shape() == b->shape(), ErrorCode::ShapeMismatch, "add needs equal shapes");
  const bool tracked = needs_grad(tape, {a.get(), b.get()});
  auto out = make_output<T>(a->shape(), tracked);
  for (std::size_t i = 0; i < a->size(); ++i) (*out)[i] = (*a)[i] + (*b)[i];
  if (tracked) {
    tape->record([a, b, out] {
      if (!out->has_grad()) return;
      const auto& dy = out->grad();
      for (const auto& t : {a, b})
        if (t->requires_grad()) {
          auto& g = t->grad();
          for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i];
        }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> weighted_sum(Tape<T>* tape, const TensorPtr<T>& x, std::span<const T> weights) {
  require(weights.size() == x->size(), ErrorCode::ShapeMismatch, "weighted_sum weight count differs from tensor size");
  const bool tracked = needs_grad(tape, {x.get()});
  auto out = make_output<T>({1}, tracked);
  double acc = 0.0;
  for (std::size_t i = 0; i < x->size(); ++i) acc += double(weights[i]) * (*x)[i];
  (*out)[0] = static_cast<T>(acc);
  if (tracked) {
    tape->record([x, out, w = std::vector<T>(weights.begin(), weights.end())] {
      if (!out->has_grad()) return;
      const T g = out->grad()[0];
      auto& dx = x->grad();
      for (std::size_t i = 0; i < w.size(); ++i) dx[i] += g * w[i];
    });
  }
  return out;
}

#define VOXELSEG_INSTANTIATE(T)                                                                                   \
  template TensorPtr<T> conv3d(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&,          \
                               std::size_t);                                                                       \
  template TensorPtr<T> transposed_conv3d(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&); \
  template TensorPtr<T> maxpool3d(Tape<T>*, const TensorPtr<T>&);                                                  \
  template TensorPtr<T> batchnorm(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&,       \
                                  Tensor<T>&, Tensor<T>&, Mode, BatchNormOptions);                                 \
  template TensorPtr<T> relu(Tape<T>*, const TensorPtr<T>&);                                                       \
  template TensorPtr<T> concat_channels(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&);                       \
  template TensorPtr<T> softmax_channels(Tape<T>*, const TensorPtr<T>&);                                           \
  template TensorPtr<T> add(Tape<T>*, const TensorPtr<T>&, const TensorPtr<T>&);                                   \
  template TensorPtr<T> weighted_sum(Tape<T>*, const TensorPtr<T>&, std::span<const T>);

VOXELSEG_INSTANTIATE(float)
VOXELSEG_INSTANTIATE(double)

}  // namespace voxelseg::nn
