#pragma once

#include <doctest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "voxelseg/error.hpp"
#include "voxelseg/rng.hpp"
#include "voxelseg/tensor.hpp"
#include "voxelseg/volume.hpp"

#define CHECK_THROWS_CODE(expr, expected)                      \
  do {                                                         \
    try {                                                      \
      (void)(expr);                                            \
      FAIL_CHECK("expected an exception from " #expr);        \
    } catch (const voxelseg::Error& e_) {                      \
      CHECK_MESSAGE(e_.code() == (expected), std::string(e_.what()));     \
    }                                                          \
  } while (0)

namespace testing {

namespace fs = std::filesystem;

/// Scratch directory removed on scope exit.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("voxelseg_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path operator/(const std::string& leaf) const { return path / leaf; }
};

inline voxelseg::ImageVolume random_image(const voxelseg::Shape3& s, std::uint64_t seed,
                                          voxelseg::IntensityKind kind = voxelseg::IntensityKind::ZScored) {
  voxelseg::SeededRng rng(seed);
  voxelseg::ImageVolume v(s, {1.0, 1.0, 1.0}, kind);
  for (auto& x : v.voxels) x = static_cast<float>(rng.normal());
  return v;
}

inline voxelseg::LabelVolume random_labels(const voxelseg::Shape3& s, std::uint64_t seed) {
  voxelseg::SeededRng rng(seed);
  voxelseg::LabelVolume l(s);
  for (auto& x : l.voxels) x = static_cast<std::uint8_t>(rng.uniform_index(voxelseg::label::kNumClasses));
  return l;
}

template <typename T>
voxelseg::nn::TensorPtr<T> random_tensor(const voxelseg::nn::Dims& shape, std::uint64_t seed, double lo = -1.0,
                                         double hi = 1.0) {
  voxelseg::SeededRng rng(seed);
  auto t = voxelseg::nn::make_tensor<T>(shape);
  for (auto& v : t->values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

inline std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing
