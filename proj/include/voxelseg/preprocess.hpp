#pragma once

#include "voxelseg/volume.hpp"

namespace voxelseg {

struct PreprocessConfig {
  double clip_min = -1250.0;
  double clip_max = 250.0;
  double grayscale_lo = 0.0;
  double grayscale_hi = 255.0;
  Spacing3 target_spacing{1.58, 1.58, 2.70};
  double zscore_epsilon = 1e-8;

  void validate() const;
};

/// Clamps HU-like intensities to [min, max]. Volumes that are already
/// grayscale must skip this step (WrongIntensityKind).
ImageVolume clip_intensity(const ImageVolume& vol, double min, double max);

/// Linear map of [clip_min, clip_max] onto [lo, hi].
ImageVolume normalize_grayscale(const ImageVolume& vol, double clip_min, double clip_max, double lo, double hi);

/// Per-volume standardisation with population statistics. A volume whose
/// standard deviation is below `epsilon` becomes all zeros.
ImageVolume zscore(const ImageVolume& vol, double epsilon = 1e-8);

/// Per axis: round_half_up(n * s_in / s_target), at least 1.
Shape3 resampled_shape(const Shape3& shape, const Spacing3& spacing, const Spacing3& target);

// Resampling convention: voxel centres sit at index * spacing, so output
// index i reads source coordinate i * s_target / s_in. Reads beyond the last
// voxel clamp to the edge.
ImageVolume resample_image(const ImageVolume& vol, const Spacing3& target);
LabelVolume resample_labels(const LabelVolume& labels, const Spacing3& spacing, const Spacing3& target);

/// Full chain for one sample: clip and normalise (HU-like input only),
/// z-score, then resample image and labels to the target spacing.
Sample preprocess_sample(const Sample& sample, const PreprocessConfig& cfg);

}  // namespace voxelseg
