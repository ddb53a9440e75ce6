#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>

#include "voxelseg/volume.hpp"

namespace voxelseg {

/// Synthetic chest-like CT volume with analytically known labels: soft
/// tissue background, two lung ellipsoids and a few spherical infection
/// blobs inside the lungs. Geometry is in voxel units; fractions are of the
/// volume extent along each axis.
struct PhantomSpec {
  Shape3 shape{64, 64, 32};
  Spacing3 spacing{1.58, 1.58, 2.70};
  std::array<double, 3> lung_radii{0.14, 0.22, 0.38};
  double lung_offset = 0.18;   // lung centres at x = 0.5 -/+ offset
  double center_jitter = 0.03;
  double radius_jitter = 0.1;  // radii scaled by U(1 - j, 1 + j)
  // The two lungs differ in density so that a patch seen in isolation still
  // tells left from right; the gap has to survive intensity augmentation.
  double left_lung_hu = -950.0;
  double right_lung_hu = -780.0;
  double tissue_hu = 40.0;
  double infection_hu = 100.0;
  double noise_hu = 12.0;
  int max_blobs_per_lung = 4;
  std::pair<double, double> blob_radius{2.5, 6.0};
  std::pair<double, double> infection_fraction{0.002, 0.03};

  void validate() const;
};

/// Deterministic per seed. The left lung sits at larger x. Blob placements
/// are redrawn until the infection fraction lands inside the configured range.
Sample make_phantom(const PhantomSpec& spec, std::uint64_t seed, const std::string& id);

}  // namespace voxelseg
