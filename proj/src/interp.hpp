#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "voxelseg/volume.hpp"

namespace voxelseg::detail {

inline std::size_t clamp_index(double c, std::size_t n) {
  if (c <= 0.0) return 0;
  const auto i = static_cast<std::size_t>(c);
  return std::min(i, n - 1);
}

/// Trilinear read at continuous index coordinates, clamped to the grid.
inline float sample_trilinear(const ImageVolume& v, double x, double y, double z) {
  const double c[3] = {std::clamp(x, 0.0, double(v.shape[0] - 1)), std::clamp(y, 0.0, double(v.shape[1] - 1)),
                       std::clamp(z, 0.0, double(v.shape[2] - 1))};
  std::size_t i0[3], i1[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    i0[a] = static_cast<std::size_t>(std::floor(c[a]));
    i1[a] = std::min(i0[a] + 1, v.shape[a] - 1);
    f[a] = c[a] - static_cast<double>(i0[a]);
  }
  auto at = [&](std::size_t xi, std::size_t yi, std::size_t zi) { return static_cast<double>(v.at(xi, yi, zi)); };
  auto lerp = [](double a, double b, double t) { return t == 0.0 ? a : a + (b - a) * t; };
  const double c00 = lerp(at(i0[0], i0[1], i0[2]), at(i1[0], i0[1], i0[2]), f[0]);
  const double c10 = lerp(at(i0[0], i1[1], i0[2]), at(i1[0], i1[1], i0[2]), f[0]);
  const double c01 = lerp(at(i0[0], i0[1], i1[2]), at(i1[0], i0[1], i1[2]), f[0]);
  const double c11 = lerp(at(i0[0], i1[1], i1[2]), at(i1[0], i1[1], i1[2]), f[0]);
  const double c0 = lerp(c00, c10, f[1]);
  const double c1 = lerp(c01, c11, f[1]);
  return static_cast<float>(lerp(c0, c1, f[2]));
}

/// Nearest-neighbour index along one axis: round half up, clamped.
inline std::size_t nearest_index(double c, std::size_t n) { return clamp_index(std::floor(c + 0.5), n); }

inline std::uint8_t sample_nearest(const LabelVolume& v, double x, double y, double z) {
  return v.at(nearest_index(x, v.shape[0]), nearest_index(y, v.shape[1]), nearest_index(z, v.shape[2]));
}

}  // namespace voxelseg::detail
