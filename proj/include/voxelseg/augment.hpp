#pragma once

#include <array>
#include <utility>

#include "voxelseg/rng.hpp"
#include "voxelseg/volume.hpp"

namespace voxelseg {

struct AugmentConfig {
  double p_apply = 0.15;
  /// Once mirroring triggers, each axis flips independently with this probability.
  double mirror_axis_probability = 0.5;
  double rotation_range = 15.0;  // +/- degrees per axis
  std::pair<double, double> scale_range{0.85, 1.25};
  double elastic_alpha = 10.0;
  double elastic_sigma = 5.0;
  double brightness_range = 0.3;  // +/- fraction of the intensity std
  std::pair<double, double> contrast_range{0.65, 1.5};
  std::pair<double, double> gamma_range{0.7, 1.5};
  std::pair<double, double> noise_sigma_range{0.0, 0.1};

  void validate() const;
};

using AxisMask = std::array<bool, 3>;

Sample mirror(const Sample& sample, AxisMask axes);

/// Rotation (degrees, applied x then y then z) about the volume centre fused
/// with isotropic scaling about the same centre, in index space. Output
/// voxel p reads source c + scale * R^T (p - c), so scale > 1 shrinks the
/// content. Sources outside the field are filled with the image minimum and
/// label 0.
Sample affine_spatial(const Sample& sample, std::array<double, 3> angles_deg, double scale);

/// Random displacement field: N(0,1) per voxel and axis, Gaussian-smoothed
/// with width sigma, multiplied by alpha.
Sample elastic_deform(const Sample& sample, double alpha, double sigma, SeededRng& rng);

ImageVolume brightness(const ImageVolume& vol, double shift);
ImageVolume contrast(const ImageVolume& vol, double factor);
/// Power law on the min-max normalised volume; a constant volume is returned unchanged.
ImageVolume gamma(const ImageVolume& vol, double g);
ImageVolume gaussian_noise(const ImageVolume& vol, double sigma, SeededRng& rng);

/// Draws each of the seven methods with probability p_apply, in the fixed
/// order mirror, rotation+scaling, elastic, brightness, contrast, gamma,
/// noise. Parameters are uniform over the configured ranges.
Sample apply_pipeline(const Sample& sample, const AugmentConfig& cfg, SeededRng& rng);

}  // namespace voxelseg
