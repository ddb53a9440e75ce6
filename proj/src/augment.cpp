#include "voxelseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "interp.hpp"
#include "voxelseg/error.hpp"

namespace voxelseg {

namespace {

bool contains(const std::pair<double, double>& r, double v) { return r.first <= v && v <= r.second; }

double mean_of(const std::vector<float>& v) {
  double s = 0.0;
  for (float x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<float>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (float x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 multiply(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat3 rotation(std::array<double, 3> deg) {
  const double to_rad = std::numbers::pi / 180.0;
  const double cx = std::cos(deg[0] * to_rad), sx = std::sin(deg[0] * to_rad);
  const double cy = std::cos(deg[1] * to_rad), sy = std::sin(deg[1] * to_rad);
  const double cz = std::cos(deg[2] * to_rad), sz = std::sin(deg[2] * to_rad);
  const Mat3 rx{{{1, 0, 0}, {0, cx, -sx}, {0, sx, cx}}};
  const Mat3 ry{{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
  const Mat3 rz{{{cz, -sz, 0}, {sz, cz, 0}, {0, 0, 1}}};
  return multiply(rz, multiply(ry, rx));
}

// Separable Gaussian smoothing of an x-fastest field with edge clamping.
void gaussian_smooth(std::vector<double>& field, const Shape3& shape, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& k : kernel) k /= total;

  std::vector<double> tmp(field.size());
  const std::size_t stride[3] = {1, shape[0], shape[0] * shape[1]};
  for (int axis = 0; axis < 3; ++axis) {
    const auto n = static_cast<long>(shape[axis]);
    for (std::size_t z = 0; z < shape[2]; ++z)
      for (std::size_t y = 0; y < shape[1]; ++y)
        for (std::size_t x = 0; x < shape[0]; ++x) {
          const std::size_t idx = linear_index(shape, x, y, z);
          const long pos = static_cast<long>(axis == 0 ? x : axis == 1 ? y : z);
          const std::size_t base = idx - static_cast<std::size_t>(pos) * stride[axis];
          double acc = 0.0;
          for (int k = -radius; k <= radius; ++k) {
            const long p = std::clamp(pos + k, 0L, n - 1);
            acc += kernel[k + radius] * field[base + static_cast<std::size_t>(p) * stride[axis]];
          }
          tmp[idx] = acc;
        }
    field.swap(tmp);
  }
}

}  // namespace

void AugmentConfig::validate() const {
  auto check = [](bool ok, const char* what) { require(ok, ErrorCode::ConfigError, std::string("augment: ") + what); };
  check(p_apply >= 0.0 && p_apply <= 1.0, "p_apply must lie in [0, 1]");
  check(mirror_axis_probability >= 0.0 && mirror_axis_probability <= 1.0, "mirror_axis_probability must lie in [0, 1]");
  check(rotation_range >= 0.0, "rotation_range must be non-negative");
  check(contains(scale_range, 1.0) && scale_range.first > 0.0, "scale_range must contain 1 and be positive");
  check(elastic_alpha >= 0.0 && elastic_sigma >= 0.0, "elastic parameters must be non-negative");
  check(brightness_range >= 0.0, "brightness_range must be non-negative");
  check(contains(contrast_range, 1.0) && contrast_range.first >= 0.0, "contrast_range must contain 1");
  check(contains(gamma_range, 1.0) && gamma_range.first > 0.0, "gamma_range must contain 1 and be positive");
  check(noise_sigma_range.first >= 0.0 && noise_sigma_range.first <= noise_sigma_range.second,
        "noise_sigma_range must be a non-negative interval");
}

Sample mirror(const Sample& sample, AxisMask axes) {
  if (!axes[0] && !axes[1] && !axes[2]) return sample;
  Sample out = sample;
  const Shape3 s = sample.image.shape;
  for (std::size_t z = 0; z < s[2]; ++z)
    for (std::size_t y = 0; y < s[1]; ++y)
      for (std::size_t x = 0; x < s[0]; ++x) {
        const std::size_t sx = axes[0] ? s[0] - 1 - x : x;
        const std::size_t sy = axes[1] ? s[1] - 1 - y : y;
        const std::size_t sz = axes[2] ? s[2] - 1 - z : z;
        out.image.at(x, y, z) = sample.image.at(sx, sy, sz);
        if (out.labels) out.labels->at(x, y, z) = sample.labels->at(sx, sy, sz);
      }
  return out;
}

Sample affine_spatial(const Sample& sample, std::array<double, 3> angles_deg, double scale) {
  require(scale > 0.0, ErrorCode::InvalidArgument, "scale must be positive");
  const Mat3 r = rotation(angles_deg);
  const Shape3 s = sample.image.shape;
  const double c[3] = {(s[0] - 1) / 2.0, (s[1] - 1) / 2.0, (s[2] - 1) / 2.0};
  const float fill = *std::min_element(sample.image.voxels.begin(), sample.image.voxels.end());

  Sample out = sample;
  for (std::size_t z = 0; z < s[2]; ++z)
    for (std::size_t y = 0; y < s[1]; ++y)
      for (std::size_t x = 0; x < s[0]; ++x) {
        const double d[3] = {x - c[0], y - c[1], z - c[2]};
        double src[3];
        bool inside = true;
        for (int i = 0; i < 3; ++i) {
          // R^T d: column i of R dotted with d.
          src[i] = c[i] + scale * (r[0][i] * d[0] + r[1][i] * d[1] + r[2][i] * d[2]);
          inside = inside && src[i] >= -0.5 && src[i] < static_cast<double>(s[i]) - 0.5;
        }
        if (!inside) {
          out.image.at(x, y, z) = fill;
          if (out.labels) out.labels->at(x, y, z) = label::kBackground;
          continue;
        }
        out.image.at(x, y, z) = detail::sample_trilinear(sample.image, src[0], src[1], src[2]);
        if (out.labels) out.labels->at(x, y, z) = detail::sample_nearest(*sample.labels, src[0], src[1], src[2]);
      }
  return out;
}

Sample elastic_deform(const Sample& sample, double alpha, double sigma, SeededRng& rng) {
  const Shape3 s = sample.image.shape;
  const std::size_t n = voxel_count(s);
  std::array<std::vector<double>, 3> disp;
  for (auto& field : disp) {
    field.resize(n);
    for (auto& v : field) v = rng.normal();
    gaussian_smooth(field, s, sigma);
    for (auto& v : field) v *= alpha;
  }
  if (alpha == 0.0) return sample;

  Sample out = sample;
  for (std::size_t z = 0; z < s[2]; ++z)
    for (std::size_t y = 0; y < s[1]; ++y)
      for (std::size_t x = 0; x < s[0]; ++x) {
        const std::size_t i = linear_index(s, x, y, z);
        const double sx = x + disp[0][i], sy = y + disp[1][i], sz = z + disp[2][i];
        out.image.voxels[i] = detail::sample_trilinear(sample.image, sx, sy, sz);
        if (out.labels) out.labels->voxels[i] = detail::sample_nearest(*sample.labels, sx, sy, sz);
      }
  return out;
}

ImageVolume brightness(const ImageVolume& vol, double shift) {
  ImageVolume out = vol;
  if (shift == 0.0) return out;
  for (auto& v : out.voxels) v = static_cast<float>(v + shift);
  return out;
}

ImageVolume contrast(const ImageVolume& vol, double factor) {
  ImageVolume out = vol;
  if (factor == 1.0) return out;
  const double m = mean_of(vol.voxels);
  for (auto& v : out.voxels) v = static_cast<float>(m + factor * (v - m));
  return out;
}

ImageVolume gamma(const ImageVolume& vol, double g) {
  ImageVolume out = vol;
  const auto [lo_it, hi_it] = std::minmax_element(vol.voxels.begin(), vol.voxels.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi == lo) return out;
  const double range = hi - lo;
  for (auto& v : out.voxels) v = static_cast<float>(lo + range * std::pow((v - lo) / range, g));
  return out;
}

ImageVolume gaussian_noise(const ImageVolume& vol, double sigma, SeededRng& rng) {
  require(sigma >= 0.0, ErrorCode::InvalidArgument, "noise sigma must be non-negative");
  ImageVolume out = vol;
  if (sigma == 0.0) return out;
  for (auto& v : out.voxels) v = static_cast<float>(v + sigma * rng.normal());
  return out;
}

Sample apply_pipeline(const Sample& sample, const AugmentConfig& cfg, SeededRng& rng) {
  cfg.validate();
  require(sample.image.intensity_kind == IntensityKind::ZScored, ErrorCode::WrongIntensityKind,
          "augmentation expects a z-scored image");
  Sample out = sample;

  if (rng.bernoulli(cfg.p_apply)) {
    AxisMask axes{};
    for (auto& a : axes) a = rng.bernoulli(cfg.mirror_axis_probability);
    out = mirror(out, axes);
  }
  if (rng.bernoulli(cfg.p_apply)) {
    std::array<double, 3> angles{};
    for (auto& a : angles) a = rng.uniform(-cfg.rotation_range, cfg.rotation_range);
    const double scale = rng.uniform(cfg.scale_range.first, cfg.scale_range.second);
    out = affine_spatial(out, angles, scale);
  }
  if (rng.bernoulli(cfg.p_apply)) out = elastic_deform(out, cfg.elastic_alpha, cfg.elastic_sigma, rng);
  if (rng.bernoulli(cfg.p_apply)) {
    const double shift = rng.uniform(-cfg.brightness_range, cfg.brightness_range) * std_of(out.image.voxels);
    out.image = brightness(out.image, shift);
  }
  if (rng.bernoulli(cfg.p_apply))
    out.image = contrast(out.image, rng.uniform(cfg.contrast_range.first, cfg.contrast_range.second));
  if (rng.bernoulli(cfg.p_apply))
    out.image = gamma(out.image, rng.uniform(cfg.gamma_range.first, cfg.gamma_range.second));
  if (rng.bernoulli(cfg.p_apply)) {
    const double sigma = rng.uniform(cfg.noise_sigma_range.first, cfg.noise_sigma_range.second);
    out.image = gaussian_noise(out.image, sigma, rng);
  }
  return out;
}

}  // namespace voxelseg
