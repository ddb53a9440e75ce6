#include <boost/math/distributions/chi_squared.hpp>

#include <cstring>
#include <map>
#include <set>

#include "support.hpp"
#include "voxelseg/patch_engine.hpp"

using namespace voxelseg;

namespace {

ProbabilityVolume random_probs(const Shape3& s, std::size_t C, std::uint64_t seed) {
  SeededRng rng(seed);
  ProbabilityVolume v{s, C, std::vector<float>(voxel_count(s) * C)};
  for (std::size_t i = 0; i < voxel_count(s); ++i) {
    double total = 0;
    for (std::size_t c = 0; c < C; ++c) total += v.probs[i * C + c] = float(rng.uniform(0.01, 1.0));
    for (std::size_t c = 0; c < C; ++c) v.probs[i * C + c] = float(v.probs[i * C + c] / total);
  }
  return v;
}

// Independent enumeration of one grid axis.
std::vector<std::size_t> axis_positions(std::size_t dim, std::size_t patch, std::size_t overlap) {
  std::vector<std::size_t> out;
  const std::size_t stride = patch - overlap;
  std::size_t o = 0;
  while (o + patch < dim) {
    out.push_back(o);
    o += stride;
  }
  out.push_back(dim - patch);
  return out;
}

}  // namespace

TEST_CASE("grid positions") {
  CHECK(grid_positions({160, 160, 80}, {160, 160, 80}, {80, 80, 40}) == std::vector<Shape3>{{0, 0, 0}});
  const auto eight = grid_positions({240, 240, 120}, {160, 160, 80}, {80, 80, 40});
  CHECK(eight.size() == 8);
  CHECK(eight.front() == Shape3{0, 0, 0});
  CHECK(eight[1] == Shape3{0, 0, 40});  // x-outer, z fastest
  CHECK(eight.back() == Shape3{80, 80, 40});

  const auto median = grid_positions({267, 254, 104}, {160, 160, 80}, {80, 80, 40});
  CHECK(median.size() == 18);
  std::set<std::size_t> xs, ys, zs;
  for (const auto& o : median) {
    xs.insert(o[0]);
    ys.insert(o[1]);
    zs.insert(o[2]);
  }
  CHECK(xs == std::set<std::size_t>{0, 80, 107});
  CHECK(ys == std::set<std::size_t>{0, 80, 94});
  CHECK(zs == std::set<std::size_t>{0, 24});
}

TEST_CASE("grid positions property: cartesian product of per-axis enumeration, full coverage") {
  SeededRng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    Shape3 patch, overlap, vol;
    for (int a = 0; a < 3; ++a) {
      patch[a] = 2 + rng.uniform_index(8);
      overlap[a] = rng.uniform_index(patch[a]);
      vol[a] = patch[a] + rng.uniform_index(20);
    }
    const auto got = grid_positions(vol, patch, overlap);
    std::vector<Shape3> expected;
    for (auto x : axis_positions(vol[0], patch[0], overlap[0]))
      for (auto y : axis_positions(vol[1], patch[1], overlap[1]))
        for (auto z : axis_positions(vol[2], patch[2], overlap[2])) expected.push_back({x, y, z});
    expected.erase(std::unique(expected.begin(), expected.end()), expected.end());
    CHECK(got == expected);

    std::vector<int> cover(voxel_count(vol), 0);
    for (const auto& o : got)
      for (std::size_t z = 0; z < patch[2]; ++z)
        for (std::size_t y = 0; y < patch[1]; ++y)
          for (std::size_t x = 0; x < patch[0]; ++x) ++cover[linear_index(vol, o[0] + x, o[1] + y, o[2] + z)];
    CHECK(*std::min_element(cover.begin(), cover.end()) >= 1);
  }
}

TEST_CASE("slice then reassemble is bit-exact") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto vol = random_probs({24, 24, 24}, 4, seed);
    const auto back = reassemble(slice_grid(vol, {16, 16, 16}, {8, 8, 8}), vol.shape, 4);
    REQUIRE(back.probs.size() == vol.probs.size());
    CHECK(std::memcmp(back.probs.data(), vol.probs.data(), vol.probs.size() * sizeof(float)) == 0);
  }
  // uneven case with clamped last origins
  const auto odd = random_probs({21, 17, 9}, 3, 77);
  const auto back = reassemble(slice_grid(odd, {8, 6, 4}, {3, 2, 1}), odd.shape, 3);
  CHECK(std::memcmp(back.probs.data(), odd.probs.data(), odd.probs.size() * sizeof(float)) == 0);
}

TEST_CASE("reassembly averages overlaps and divides by the true coverage") {
  ProbPatch a{{0, 0, 0}, {3, 1, 1}, {0.2f, 0.2f, 0.2f}};
  ProbPatch b{{2, 0, 0}, {3, 1, 1}, {0.6f, 0.6f, 0.6f}};
  const auto out = reassemble({a, b}, {5, 1, 1}, 1);
  CHECK(out.probs[0] == 0.2f);
  CHECK(out.probs[2] == doctest::Approx(0.4));
  CHECK(out.probs[4] == 0.6f);

  // ones in, ones out: the coverage count is the denominator
  ProbabilityVolume ones{{24, 24, 24}, 2, std::vector<float>(24 * 24 * 24 * 2, 1.0f)};
  const auto back = reassemble(slice_grid(ones, {16, 16, 16}, {8, 8, 8}), ones.shape, 2);
  CHECK(std::all_of(back.probs.begin(), back.probs.end(), [](float v) { return v == 1.0f; }));

  CHECK_THROWS_CODE(reassemble({a}, {5, 1, 1}, 1), ErrorCode::CoverageGap);
}

TEST_CASE("pad and crop back") {
  const Sample big{"b", testing::random_image({9, 9, 9}, 1), testing::random_labels({9, 9, 9}, 1)};
  const auto [same, rec0] = pad_to_min(big, {8, 8, 8});
  CHECK(same == big);
  CHECK(rec0.empty(same.image.shape));

  const Sample s{"s", testing::random_image({60, 10, 3}, 2), testing::random_labels({60, 10, 3}, 2)};
  const auto [padded, rec] = pad_to_min(s, {80, 8, 4});
  CHECK(padded.image.shape == Shape3{80, 10, 4});
  CHECK(rec.before == Shape3{10, 0, 0});
  CHECK(rec.original == Shape3{60, 10, 3});
  const float lo = *std::min_element(s.image.voxels.begin(), s.image.voxels.end());
  CHECK(padded.image.at(0, 0, 0) == lo);
  CHECK(padded.labels->at(79, 0, 0) == label::kBackground);
  CHECK(padded.image.at(10, 0, 0) == s.image.at(0, 0, 0));
  CHECK(crop_back(padded.image, rec) == s.image);
  CHECK(crop_back(*padded.labels, rec) == *s.labels);
}

TEST_CASE("random crop") {
  const Sample exact{"e", testing::random_image({8, 8, 4}, 1), testing::random_labels({8, 8, 4}, 1)};
  SeededRng rng(1);
  for (int i = 0; i < 20; ++i) CHECK(random_crop(exact, {8, 8, 4}, rng).origin == Shape3{0, 0, 0});

  SUBCASE("paper-scale shape with one spare voxel along x") {
    const Sample wide{"w", ImageVolume({161, 160, 80}, {1, 1, 1}, IntensityKind::ZScored), std::nullopt};
    SeededRng r(2);
    std::map<std::size_t, int> hits;
    for (int i = 0; i < 200; ++i) {
      const auto p = random_crop(wide, {160, 160, 80}, r);
      ++hits[p.origin[0]];
      CHECK(p.origin[1] == 0);
      CHECK(p.origin[2] == 0);
    }
    CHECK(hits.size() == 2);
  }

  SUBCASE("origins are uniform: two positions") {
    const Sample s{"u", testing::random_image({5, 4, 2}, 3), std::nullopt};
    SeededRng r(3);
    int ones = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) ones += random_crop(s, {4, 4, 2}, r).origin[0] == 1;
    CHECK(double(ones) / n == doctest::Approx(0.5).epsilon(0.1));  // 0.5 +/- 0.05
  }

  SUBCASE("origins are uniform: chi-square over all positions") {
    const Sample s{"u", testing::random_image({12, 10, 10}, 3), std::nullopt};
    SeededRng r(4);
    const Shape3 patch{8, 8, 8};
    const std::size_t cells = 5 * 3 * 3;
    std::vector<int> counts(cells, 0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const auto o = random_crop(s, patch, r).origin;
      ++counts[o[0] + 5 * (o[1] + 3 * o[2])];
    }
    const double expected = double(n) / cells;
    double chi2 = 0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    const boost::math::chi_squared dist(double(cells - 1));
    CHECK(boost::math::cdf(boost::math::complement(dist, chi2)) > 0.01);
  }

  SUBCASE("fixed seed gives the same origins") {
    const Sample s{"d", testing::random_image({20, 20, 20}, 5), std::nullopt};
    SeededRng a(9), b(9);
    for (int i = 0; i < 50; ++i) CHECK(random_crop(s, {5, 6, 7}, a).origin == random_crop(s, {5, 6, 7}, b).origin);
  }
}

TEST_CASE("extracted windows match the source") {
  const Sample s{"x", testing::random_image({10, 9, 8}, 6), testing::random_labels({10, 9, 8}, 6)};
  const Patch p = extract_patch(s, {2, 3, 4}, {5, 4, 3});
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 5; ++x) {
        CHECK(p.image.at(x, y, z) == s.image.at(x + 2, y + 3, z + 4));
        CHECK(p.labels->at(x, y, z) == s.labels->at(x + 2, y + 3, z + 4));
      }
}

TEST_CASE("tensor layout conversions") {
  const ImageVolume img = testing::random_image({4, 3, 2}, 7);
  nn::Tensor<float> t({2, 4, 3, 2, 1});
  image_into(img, t, 1);
  // (b, x, y, z, c) row-major: z fastest among spatial axes
  CHECK(t[((1 * 4 + 3) * 3 + 2) * 2 + 1] == img.at(3, 2, 1));
  CHECK(image_from(t, 1, img.spacing).voxels == img.voxels);

  const LabelVolume l = testing::random_labels({4, 3, 2}, 8);
  nn::Tensor<float> oh({1, 4, 3, 2, 4});
  one_hot_into(l, oh, 0);
  for (std::size_t x = 0; x < 4; ++x)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t z = 0; z < 2; ++z)
        for (std::size_t c = 0; c < 4; ++c)
          CHECK(oh[((x * 3 + y) * 2 + z) * 4 + c] == (l.at(x, y, z) == c ? 1.0f : 0.0f));

  nn::Tensor<float> probs({1, 4, 3, 2, 4});
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = float(i);
  const ProbPatch pp = prob_patch_from(probs, 0, {1, 2, 3});
  CHECK(pp.origin == Shape3{1, 2, 3});
  CHECK(pp.probs[linear_index({4, 3, 2}, 3, 1, 1) * 4 + 2] == probs[((3 * 3 + 1) * 2 + 1) * 4 + 2]);
}

TEST_CASE("training batches") {
  std::vector<Sample> data;
  for (std::uint64_t i = 0; i < 3; ++i)
    data.push_back({"s" + std::to_string(i), testing::random_image({12, 10, 6}, i), testing::random_labels({12, 10, 6}, i)});
  PatchGridConfig cfg;
  cfg.patch_shape = {8, 8, 8};  // z is padded up from 6
  cfg.overlap = {4, 4, 4};
  cfg.batch_size = 2;
  AugmentConfig aug;
  aug.p_apply = 0.5;
  const Batch b = training_batch(data, cfg, aug, 1234);
  CHECK(b.images->shape() == nn::Dims{2, 8, 8, 8, 1});
  CHECK(b.onehot->shape() == nn::Dims{2, 8, 8, 8, 4});
  for (std::size_t v = 0; v < b.onehot->size() / 4; ++v) {
    float total = 0;
    for (std::size_t c = 0; c < 4; ++c) total += (*b.onehot)[v * 4 + c];
    CHECK(total == 1.0f);
  }
  const Batch again = training_batch(data, cfg, aug, 1234);
  CHECK(std::memcmp(again.images->data(), b.images->data(), b.images->size() * 4) == 0);
  CHECK(std::memcmp(again.onehot->data(), b.onehot->data(), b.onehot->size() * 4) == 0);
  const Batch other = training_batch(data, cfg, aug, 1235);
  CHECK(std::memcmp(other.images->data(), b.images->data(), b.images->size() * 4) != 0);
}
