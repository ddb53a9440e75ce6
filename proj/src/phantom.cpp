#include "voxelseg/phantom.hpp"

#include <cmath>

#include "voxelseg/error.hpp"
#include "voxelseg/rng.hpp"

namespace voxelseg {

void PhantomSpec::validate() const {
  auto check = [](bool ok, const char* what) { require(ok, ErrorCode::ConfigError, std::string("synth: ") + what); };
  check(shape[0] >= 4 && shape[1] >= 4 && shape[2] >= 4, "shape must be at least 4 per axis");
  check(spacing[0] > 0 && spacing[1] > 0 && spacing[2] > 0, "spacing must be positive");
  for (double r : lung_radii) check(r > 0.0 && r < 0.5, "lung_radii must lie in (0, 0.5)");
  check(lung_offset > 0.0 && lung_offset < 0.5, "lung_offset must lie in (0, 0.5)");
  check(center_jitter >= 0.0 && radius_jitter >= 0.0 && radius_jitter < 1.0, "jitter out of range");
  check(noise_hu >= 0.0, "noise_hu must be non-negative");
  check(max_blobs_per_lung >= 0, "max_blobs_per_lung must be >= 0");
  check(blob_radius.first > 0.0 && blob_radius.first <= blob_radius.second, "blob_radius must be 0 < lo <= hi");
  check(infection_fraction.first >= 0.0 && infection_fraction.first <= infection_fraction.second &&
            infection_fraction.second < 1.0,
        "infection_fraction must be 0 <= lo <= hi < 1");
}

namespace {
struct Ellipsoid {
  std::array<double, 3> center, radii;
  double value(double x, double y, double z) const {
    const double dx = (x - center[0]) / radii[0], dy = (y - center[1]) / radii[1], dz = (z - center[2]) / radii[2];
    return dx * dx + dy * dy + dz * dz;
  }
};

struct Blob {
  std::array<double, 3> center;
  double radius;
};
}  // namespace

Sample make_phantom(const PhantomSpec& spec, std::uint64_t seed, const std::string& id) {
  spec.validate();
  SeededRng rng(seed);
  const Shape3& s = spec.shape;

  std::array<Ellipsoid, 2> lungs;  // [0] right (smaller x), [1] left
  for (int k = 0; k < 2; ++k) {
    const double cx = 0.5 + (k == 0 ? -spec.lung_offset : spec.lung_offset);
    const std::array<double, 3> rel{cx, 0.5, 0.5};
    for (int a = 0; a < 3; ++a) {
      lungs[k].center[a] = (rel[a] + spec.center_jitter * rng.uniform(-1.0, 1.0)) * double(s[a]) - 0.5;
      lungs[k].radii[a] = spec.lung_radii[a] * double(s[a]) * rng.uniform(1.0 - spec.radius_jitter, 1.0 + spec.radius_jitter);
    }
  }

  LabelVolume labels(s);
  for (std::size_t z = 0; z < s[2]; ++z)
    for (std::size_t y = 0; y < s[1]; ++y)
      for (std::size_t x = 0; x < s[0]; ++x) {
        if (lungs[0].value(x, y, z) <= 1.0) labels.at(x, y, z) = label::kLungRight;
        else if (lungs[1].value(x, y, z) <= 1.0) labels.at(x, y, z) = label::kLungLeft;
      }

  const double total = double(voxel_count(s));
  LabelVolume infected = labels;
  bool accepted = false;
  for (int attempt = 0; attempt < 1000 && !accepted; ++attempt) {
    std::vector<Blob> blobs;
    for (const auto& lung : lungs) {
      const auto count = rng.uniform_index(std::uint64_t(spec.max_blobs_per_lung) + 1);
      for (std::uint64_t b = 0; b < count; ++b) {
        std::array<double, 3> u;
        do {
          for (auto& v : u) v = rng.uniform(-1.0, 1.0);
        } while (u[0] * u[0] + u[1] * u[1] + u[2] * u[2] > 1.0);
        Blob blob;
        for (int a = 0; a < 3; ++a) blob.center[a] = lung.center[a] + 0.55 * u[a] * lung.radii[a];
        blob.radius = rng.uniform(spec.blob_radius.first, spec.blob_radius.second);
        blobs.push_back(blob);
      }
    }
    infected = labels;
    std::size_t count = 0;
    for (std::size_t z = 0; z < s[2]; ++z)
      for (std::size_t y = 0; y < s[1]; ++y)
        for (std::size_t x = 0; x < s[0]; ++x) {
          std::uint8_t& l = infected.at(x, y, z);
          if (l == label::kBackground) continue;
          for (const auto& b : blobs) {
            const double dx = x - b.center[0], dy = y - b.center[1], dz = z - b.center[2];
            if (dx * dx + dy * dy + dz * dz <= b.radius * b.radius) {
              l = label::kInfection;
              ++count;
              break;
            }
          }
        }
    const double fraction = double(count) / total;
    accepted = fraction >= spec.infection_fraction.first && fraction <= spec.infection_fraction.second;
  }
  require(accepted, ErrorCode::InvalidArgument, "phantom generator could not reach the infection fraction range");

  ImageVolume image(s, spec.spacing, IntensityKind::HounsfieldLike);
  for (std::size_t i = 0; i < image.voxels.size(); ++i) {
    double base = spec.tissue_hu;
    switch (infected.voxels[i]) {
      case label::kLungLeft: base = spec.left_lung_hu; break;
      case label::kLungRight: base = spec.right_lung_hu; break;
      case label::kInfection: base = spec.infection_hu; break;
      default: break;
    }
    image.voxels[i] = static_cast<float>(base + spec.noise_hu * rng.normal());
  }
  Sample sample{id, std::move(image), std::move(infected)};
  sample.validate();
  return sample;
}

}  // namespace voxelseg
