#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace voxelseg {

using Shape3 = std::array<std::size_t, 3>;
using Spacing3 = std::array<double, 3>;

inline std::size_t voxel_count(const Shape3& s) { return s[0] * s[1] * s[2]; }

/// Linear offset of (x, y, z) in x-fastest order. Every volume buffer in the
/// project uses this layout.
inline std::size_t linear_index(const Shape3& s, std::size_t x, std::size_t y, std::size_t z) {
  return x + s[0] * (y + s[1] * z);
}

enum class IntensityKind { HounsfieldLike, Grayscale0to255, ZScored };

std::string_view to_string(IntensityKind kind);
IntensityKind intensity_kind_from_string(std::string_view name);

/// Class indices used throughout: 0 background, 1 lung left, 2 lung right,
/// 3 infection.
namespace label {
inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kLungLeft = 1;
inline constexpr std::uint8_t kLungRight = 2;
inline constexpr std::uint8_t kInfection = 3;
inline constexpr int kNumClasses = 4;
}  // namespace label

struct ImageVolume {
  Shape3 shape{1, 1, 1};
  Spacing3 spacing{1.0, 1.0, 1.0};
  std::vector<float> voxels = std::vector<float>(1, 0.0f);
  IntensityKind intensity_kind = IntensityKind::HounsfieldLike;

  ImageVolume() = default;
  ImageVolume(Shape3 shape_, Spacing3 spacing_, IntensityKind kind, float fill = 0.0f)
      : shape(shape_), spacing(spacing_), voxels(voxel_count(shape_), fill), intensity_kind(kind) {}

  std::size_t size() const { return voxels.size(); }
  float& at(std::size_t x, std::size_t y, std::size_t z) { return voxels[linear_index(shape, x, y, z)]; }
  float at(std::size_t x, std::size_t y, std::size_t z) const {
    return voxels[linear_index(shape, x, y, z)];
  }

  /// Throws InvalidVolume when any invariant (positive shape and spacing,
  /// matching buffer length, finite voxels) is broken.
  void validate() const;
};

struct LabelVolume {
  Shape3 shape{1, 1, 1};
  std::vector<std::uint8_t> voxels = std::vector<std::uint8_t>(1, 0);
  int num_classes = label::kNumClasses;

  LabelVolume() = default;
  explicit LabelVolume(Shape3 shape_, int classes = label::kNumClasses, std::uint8_t fill = 0)
      : shape(shape_), voxels(voxel_count(shape_), fill), num_classes(classes) {}

  std::size_t size() const { return voxels.size(); }
  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t z) {
    return voxels[linear_index(shape, x, y, z)];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t z) const {
    return voxels[linear_index(shape, x, y, z)];
  }

  void validate() const;
};

struct Sample {
  std::string id;
  ImageVolume image;
  std::optional<LabelVolume> labels;

  void validate() const;
};

bool operator==(const ImageVolume& a, const ImageVolume& b);
bool operator==(const LabelVolume& a, const LabelVolume& b);
bool operator==(const Sample& a, const Sample& b);

}  // namespace voxelseg
