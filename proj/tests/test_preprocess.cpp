#include <cmath>
#include <numeric>

#include "support.hpp"
#include "voxelseg/preprocess.hpp"

using namespace voxelseg;

namespace {
ImageVolume line(std::vector<float> values, IntensityKind kind) {
  ImageVolume v({values.size(), 1, 1}, {1, 1, 1}, kind);
  v.voxels = std::move(values);
  return v;
}
}  // namespace

TEST_CASE("clip to the HU window") {
  const auto out = clip_intensity(line({-2000, -1250, 0, 250, 1000}, IntensityKind::HounsfieldLike), -1250, 250);
  CHECK(out.voxels == std::vector<float>{-1250, -1250, 0, 250, 250});
  CHECK_THROWS_CODE(clip_intensity(line({0}, IntensityKind::ZScored), -1250, 250), ErrorCode::WrongIntensityKind);
}

TEST_CASE("grayscale normalisation maps the window linearly onto [lo, hi]") {
  const auto out = normalize_grayscale(line({-1250, 250, -500}, IntensityKind::HounsfieldLike), -1250, 250, 0, 255);
  CHECK(out.voxels[0] == doctest::Approx(0.0));
  CHECK(out.voxels[1] == doctest::Approx(255.0));
  CHECK(out.voxels[2] == doctest::Approx(127.5));
  CHECK(out.intensity_kind == IntensityKind::Grayscale0to255);
  CHECK_THROWS_CODE(normalize_grayscale(line({0}, IntensityKind::HounsfieldLike), 5, 5, 0, 255),
                    ErrorCode::DegenerateRange);
}

TEST_CASE("z-score uses population statistics") {
  const auto out = zscore(line({0, 2, 4, 6}, IntensityKind::Grayscale0to255));
  // mean 3, population std sqrt(5)
  CHECK(out.voxels[0] == doctest::Approx(-3.0 / std::sqrt(5.0)).epsilon(1e-6));
  CHECK(out.voxels[1] == doctest::Approx(-1.0 / std::sqrt(5.0)).epsilon(1e-6));
  CHECK(out.voxels[2] == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-6));
  CHECK(out.voxels[3] == doctest::Approx(1.3416408).epsilon(1e-6));
  CHECK(out.intensity_kind == IntensityKind::ZScored);

  const auto flat = zscore(line({7, 7, 7}, IntensityKind::Grayscale0to255));
  CHECK(flat.voxels == std::vector<float>{0, 0, 0});
}

TEST_CASE("z-score property: zero mean, unit variance") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto v = testing::random_image({9, 7, 5}, seed, IntensityKind::Grayscale0to255);
    for (auto& x : v.voxels) x = 100.0f + 30.0f * x;
    const auto z = zscore(v);
    double mean = 0, sq = 0;
    for (float x : z.voxels) mean += x;
    mean /= double(z.size());
    for (float x : z.voxels) sq += (x - mean) * (x - mean);
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::sqrt(sq / double(z.size())) == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("resampled shape rounds to the nearest voxel") {
  CHECK(resampled_shape({100, 100, 100}, {3.16, 3.16, 3.16}, {1.58, 1.58, 2.70}) == Shape3{200, 200, 117});
  CHECK(resampled_shape({267, 254, 104}, {1.58, 1.58, 2.70}, {1.58, 1.58, 2.70}) == Shape3{267, 254, 104});
  CHECK(resampled_shape({1, 1, 1}, {0.1, 0.1, 0.1}, {10, 10, 10}) == Shape3{1, 1, 1});
}

TEST_CASE("resampling to the current spacing is the identity") {
  auto v = testing::random_image({6, 5, 4}, 3);
  v.spacing = {1.58, 1.58, 2.70};
  const auto out = resample_image(v, {1.58, 1.58, 2.70});
  CHECK(out.shape == v.shape);
  CHECK(out.voxels == v.voxels);
}

TEST_CASE("trilinear upsampling reproduces a linear ramp") {
  ImageVolume v({4, 3, 3}, {2.0, 2.0, 2.0}, IntensityKind::ZScored);
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t x = 0; x < 4; ++x) v.at(x, y, z) = float(x) + 10.0f * float(y) - 3.0f * float(z);
  const auto out = resample_image(v, {1.0, 1.0, 1.0});
  CHECK(out.shape == Shape3{8, 6, 6});
  CHECK(out.spacing == Spacing3{1.0, 1.0, 1.0});
  // Output voxel i sits at source coordinate i / 2; inside the grid a
  // trilinear interpolant of a linear function is exact.
  for (std::size_t z = 0; z < 5; ++z)
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t x = 0; x < 7; ++x)
        CHECK(out.at(x, y, z) == doctest::Approx(0.5 * x + 5.0 * y - 1.5 * z).epsilon(1e-6));
  // Past the last source voxel the border value is held.
  CHECK(out.at(7, 0, 0) == doctest::Approx(3.0));
}

TEST_CASE("label resampling is nearest neighbour and never invents classes") {
  LabelVolume l({4, 1, 1});
  l.voxels = {0, 1, 2, 3};
  const auto up = resample_labels(l, {2, 1, 1}, {1, 1, 1});
  REQUIRE(up.shape == Shape3{8, 1, 1});
  // source coordinate i/2 rounded half up
  CHECK(up.voxels == std::vector<std::uint8_t>{0, 1, 1, 2, 2, 3, 3, 3});

  const auto rnd = testing::random_labels({7, 6, 5}, 8);
  const auto down = resample_labels(rnd, {1, 1, 1}, {1.7, 1.3, 2.1});
  for (auto c : down.voxels) CHECK(c < label::kNumClasses);
}

TEST_CASE("preprocess_sample chains clip, normalise, z-score and resample") {
  PreprocessConfig cfg;
  cfg.target_spacing = {1.0, 1.0, 1.0};
  ImageVolume img({4, 4, 2}, {2.0, 2.0, 1.0}, IntensityKind::HounsfieldLike);
  for (std::size_t i = 0; i < img.size(); ++i) img.voxels[i] = -1500.0f + 150.0f * float(i);
  Sample s{"s", img, testing::random_labels({4, 4, 2}, 1)};
  const Sample out = preprocess_sample(s, cfg);
  CHECK(out.image.intensity_kind == IntensityKind::ZScored);
  CHECK(out.image.shape == Shape3{8, 8, 2});
  CHECK(out.labels->shape == out.image.shape);

  SUBCASE("grayscale input skips straight to z-score") {
    cfg.target_spacing = {2.0, 2.0, 1.0};
    ImageVolume gray({4, 1, 1}, {2.0, 2.0, 1.0}, IntensityKind::Grayscale0to255);
    gray.voxels = {0, 2, 4, 6};
    const Sample g = preprocess_sample({"g", gray, std::nullopt}, cfg);
    CHECK(g.image.voxels == zscore(gray).voxels);
  }
}

TEST_CASE("config validation") {
  PreprocessConfig cfg;
  cfg.clip_min = 300;
  CHECK_THROWS_CODE(cfg.validate(), ErrorCode::ConfigError);
}
