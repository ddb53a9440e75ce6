#include "voxelseg/volume.hpp"

#include <cmath>
#include <cstring>

#include "voxelseg/error.hpp"

namespace voxelseg {

std::string_view to_string(IntensityKind kind) {
  switch (kind) {
    case IntensityKind::HounsfieldLike: return "HounsfieldLike";
    case IntensityKind::Grayscale0to255: return "Grayscale0to255";
    case IntensityKind::ZScored: return "ZScored";
  }
  return "HounsfieldLike";
}

IntensityKind intensity_kind_from_string(std::string_view name) {
  if (name == "HounsfieldLike") return IntensityKind::HounsfieldLike;
  if (name == "Grayscale0to255") return IntensityKind::Grayscale0to255;
  if (name == "ZScored") return IntensityKind::ZScored;
  fail(ErrorCode::InvalidArgument, "unknown intensity kind '" + std::string(name) + "'");
}

void ImageVolume::validate() const {
  for (int a = 0; a < 3; ++a) {
    require(shape[a] >= 1, ErrorCode::InvalidVolume, "shape component < 1");
    require(spacing[a] > 0.0 && std::isfinite(spacing[a]), ErrorCode::InvalidVolume,
            "spacing component must be positive");
  }
  require(voxels.size() == voxel_count(shape), ErrorCode::InvalidVolume,
          "voxel buffer length does not match shape");
  for (float v : voxels) require(std::isfinite(v), ErrorCode::InvalidVolume, "non-finite voxel");
}

void LabelVolume::validate() const {
  for (int a = 0; a < 3; ++a) require(shape[a] >= 1, ErrorCode::InvalidVolume, "shape component < 1");
  require(num_classes >= 1 && num_classes <= 256, ErrorCode::InvalidVolume, "bad class count");
  require(voxels.size() == voxel_count(shape), ErrorCode::InvalidVolume,
          "label buffer length does not match shape");
  for (auto v : voxels)
    require(v < num_classes, ErrorCode::InvalidVolume, "label value outside [0, num_classes)");
}

void Sample::validate() const {
  image.validate();
  if (labels) {
    labels->validate();
    require(labels->shape == image.shape, ErrorCode::ShapeMismatch, "label shape differs from image");
  }
}

bool operator==(const ImageVolume& a, const ImageVolume& b) {
  return a.shape == b.shape && a.spacing == b.spacing && a.intensity_kind == b.intensity_kind &&
         a.voxels.size() == b.voxels.size() &&
         std::memcmp(a.voxels.data(), b.voxels.data(), a.voxels.size() * sizeof(float)) == 0;
}

bool operator==(const LabelVolume& a, const LabelVolume& b) {
  return a.shape == b.shape && a.num_classes == b.num_classes && a.voxels == b.voxels;
}

bool operator==(const Sample& a, const Sample& b) {
  return a.id == b.id && a.image == b.image && a.labels == b.labels;
}

}  // namespace voxelseg
