#include "voxelseg/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "interp.hpp"
#include "voxelseg/error.hpp"

namespace voxelseg {

void PreprocessConfig::validate() const {
  require(clip_min < clip_max, ErrorCode::ConfigError, "preprocess: clip_min must be below clip_max");
  require(grayscale_lo < grayscale_hi, ErrorCode::ConfigError, "preprocess: grayscale_lo must be below grayscale_hi");
  for (double s : target_spacing)
    require(s > 0.0 && std::isfinite(s), ErrorCode::ConfigError, "preprocess: target_spacing must be positive");
  require(zscore_epsilon > 0.0, ErrorCode::ConfigError, "preprocess: zscore_epsilon must be positive");
}

ImageVolume clip_intensity(const ImageVolume& vol, double min, double max) {
  require(vol.intensity_kind == IntensityKind::HounsfieldLike, ErrorCode::WrongIntensityKind,
          "clipping applies to HU-like volumes only, got " + std::string(to_string(vol.intensity_kind)));
  require(min <= max, ErrorCode::InvalidArgument, "clip range is inverted");
  ImageVolume out = vol;
  const auto lo = static_cast<float>(min), hi = static_cast<float>(max);
  for (auto& v : out.voxels) v = std::max(lo, std::min(hi, v));
  return out;
}

ImageVolume normalize_grayscale(const ImageVolume& vol, double clip_min, double clip_max, double lo, double hi) {
  require(clip_max != clip_min, ErrorCode::DegenerateRange, "clip_min equals clip_max");
  ImageVolume out = vol;
  const double scale = (hi - lo) / (clip_max - clip_min);
  for (auto& v : out.voxels) v = static_cast<float>(lo + (static_cast<double>(v) - clip_min) * scale);
  out.intensity_kind = IntensityKind::Grayscale0to255;
  return out;
}

ImageVolume zscore(const ImageVolume& vol, double epsilon) {
  ImageVolume out = vol;
  out.intensity_kind = IntensityKind::ZScored;
  const double n = static_cast<double>(vol.size());
  double mean = 0.0;
  for (float v : vol.voxels) mean += v;
  mean /= n;
  double var = 0.0;
  for (float v : vol.voxels) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  if (sd < epsilon) {
    std::fill(out.voxels.begin(), out.voxels.end(), 0.0f);
    return out;
  }
  for (auto& v : out.voxels) v = static_cast<float>((v - mean) / sd);
  return out;
}

Shape3 resampled_shape(const Shape3& shape, const Spacing3& spacing, const Spacing3& target) {
  Shape3 out{};
  for (int a = 0; a < 3; ++a) {
    require(spacing[a] > 0.0 && target[a] > 0.0, ErrorCode::InvalidArgument, "spacings must be positive");
    const double n = std::floor(static_cast<double>(shape[a]) * spacing[a] / target[a] + 0.5);
    out[a] = std::max<std::size_t>(1, static_cast<std::size_t>(n));
  }
  return out;
}

ImageVolume resample_image(const ImageVolume& vol, const Spacing3& target) {
  if (vol.spacing == target) {
    return vol;
  }
  const Shape3 shape = resampled_shape(vol.shape, vol.spacing, target);
  ImageVolume out(shape, target, vol.intensity_kind);
  const double r[3] = {target[0] / vol.spacing[0], target[1] / vol.spacing[1], target[2] / vol.spacing[2]};
  for (std::size_t z = 0; z < shape[2]; ++z)
    for (std::size_t y = 0; y < shape[1]; ++y)
      for (std::size_t x = 0; x < shape[0]; ++x)
        out.at(x, y, z) = detail::sample_trilinear(vol, double(x) * r[0], double(y) * r[1], double(z) * r[2]);
  return out;
}

LabelVolume resample_labels(const LabelVolume& labels, const Spacing3& spacing, const Spacing3& target) {
  if (spacing == target) return labels;
  const Shape3 shape = resampled_shape(labels.shape, spacing, target);
  LabelVolume out(shape, labels.num_classes);
  const double r[3] = {target[0] / spacing[0], target[1] / spacing[1], target[2] / spacing[2]};
  for (std::size_t z = 0; z < shape[2]; ++z)
    for (std::size_t y = 0; y < shape[1]; ++y)
      for (std::size_t x = 0; x < shape[0]; ++x)
        out.at(x, y, z) = detail::sample_nearest(labels, double(x) * r[0], double(y) * r[1], double(z) * r[2]);
  return out;
}

Sample preprocess_sample(const Sample& sample, const PreprocessConfig& cfg) {
  cfg.validate();
  Sample out;
  out.id = sample.id;
  ImageVolume img = sample.image;
  if (img.intensity_kind == IntensityKind::HounsfieldLike) {
    img = clip_intensity(img, cfg.clip_min, cfg.clip_max);
    img = normalize_grayscale(img, cfg.clip_min, cfg.clip_max, cfg.grayscale_lo, cfg.grayscale_hi);
  }
  img = zscore(img, cfg.zscore_epsilon);
  const Spacing3 source_spacing = img.spacing;
  out.image = resample_image(img, cfg.target_spacing);
  if (sample.labels) out.labels = resample_labels(*sample.labels, source_spacing, cfg.target_spacing);
  return out;
}

}  // namespace voxelseg
