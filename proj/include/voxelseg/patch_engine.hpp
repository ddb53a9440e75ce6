#pragma once

#include <optional>
#include <vector>

#include "voxelseg/augment.hpp"
#include "voxelseg/rng.hpp"
#include "voxelseg/tensor.hpp"
#include "voxelseg/volume.hpp"

namespace voxelseg {

struct PatchGridConfig {
  Shape3 patch_shape{160, 160, 80};
  Shape3 overlap{80, 80, 40};
  std::size_t batch_size = 2;

  Shape3 stride() const { return {patch_shape[0] - overlap[0], patch_shape[1] - overlap[1], patch_shape[2] - overlap[2]}; }
  void validate() const;
};

/// Per-axis record of the padding applied by pad_to_min.
struct PadRecord {
  Shape3 before{0, 0, 0};
  Shape3 original{0, 0, 0};

  bool empty(const Shape3& padded) const { return before == Shape3{0, 0, 0} && padded == original; }
};

/// Pads every axis shorter than the patch up to the patch length, splitting
/// the padding as evenly as possible (the extra voxel goes after). Images
/// are padded with their minimum, labels with background.
std::pair<Sample, PadRecord> pad_to_min(const Sample& sample, const Shape3& patch_shape);
ImageVolume crop_back(const ImageVolume& vol, const PadRecord& pad);
LabelVolume crop_back(const LabelVolume& vol, const PadRecord& pad);

struct Patch {
  Shape3 origin{0, 0, 0};
  ImageVolume image;
  std::optional<LabelVolume> labels;
};

/// Window at an origin drawn uniformly per axis (x, then y, then z).
Patch random_crop(const Sample& sample, const Shape3& patch_shape, SeededRng& rng);
Patch extract_patch(const Sample& sample, const Shape3& origin, const Shape3& patch_shape);

/// Grid origins: per axis 0, stride, 2*stride, ... with the last origin
/// clamped to dim - patch and duplicates dropped; x-outer cartesian order.
std::vector<Shape3> grid_positions(const Shape3& vol_shape, const Shape3& patch_shape, const Shape3& overlap);

/// Per-voxel class probabilities, class index fastest, then x, y, z.
struct ProbabilityVolume {
  Shape3 shape{1, 1, 1};
  std::size_t num_classes = 0;
  std::vector<float> probs;

  float at(std::size_t x, std::size_t y, std::size_t z, std::size_t c) const {
    return probs[linear_index(shape, x, y, z) * num_classes + c];
  }
};

struct ProbPatch {
  Shape3 origin{0, 0, 0};
  Shape3 shape{1, 1, 1};
  std::vector<float> probs;  // same layout as ProbabilityVolume
};

/// Averages overlapping patch probabilities voxel by voxel. Sums are kept in
/// double so identical contributions average back bit-exactly. Throws
/// CoverageGap when a voxel is not covered.
ProbabilityVolume reassemble(const std::vector<ProbPatch>& patches, const Shape3& vol_shape, std::size_t num_classes);

/// Cuts a probability volume along the grid (inverse of reassemble).
std::vector<ProbPatch> slice_grid(const ProbabilityVolume& vol, const Shape3& patch_shape, const Shape3& overlap);

LabelVolume argmax(const ProbabilityVolume& probs);

struct Batch {
  nn::TensorPtr<float> images;  // (b, px, py, pz, 1)
  nn::TensorPtr<float> onehot;  // (b, px, py, pz, num_classes)
};

/// Writes `labels` one-hot into slot `slot` of a (b, x, y, z, C) tensor.
void one_hot_into(const LabelVolume& labels, nn::Tensor<float>& dst, std::size_t slot);
/// Copies an image window into slot `slot` of a (b, x, y, z, 1) tensor.
void image_into(const ImageVolume& image, nn::Tensor<float>& dst, std::size_t slot);
ImageVolume image_from(const nn::Tensor<float>& src, std::size_t slot, const Spacing3& spacing);

/// Slot `slot` of a (b, x, y, z, C) network output as a patch at `origin`.
ProbPatch prob_patch_from(const nn::Tensor<float>& src, std::size_t slot, const Shape3& origin);

/// One training batch. Slot s draws a sample uniformly with replacement,
/// augments it, pads if needed, crops a random patch and one-hot encodes its
/// labels, all from its own stream seeded by derive(batch_seed, {s}), so
/// slots are independent of generation order.
Batch training_batch(const std::vector<Sample>& dataset, const PatchGridConfig& cfg, const AugmentConfig& aug,
                     std::uint64_t batch_seed);
Batch training_batch(const std::vector<Sample>& dataset, const PatchGridConfig& cfg, const AugmentConfig& aug,
                     SeededRng& rng);

}  // namespace voxelseg
