#include <cmath>
#include <fstream>

#include "grad_cases.hpp"
#include "support.hpp"
#include "voxelseg/training.hpp"
#include "voxelseg/unet3d.hpp"

using namespace voxelseg;
using namespace voxelseg::nn;

namespace {

UNetConfig desk_config() {
  UNetConfig cfg;
  cfg.base_filters = 4;
  cfg.num_levels = 3;
  return cfg;
}

// Closed-form element count: conv blocks carry weight, bias, gamma, beta and
// two running statistics; each up-conv has a 2^3 kernel and a bias.
std::size_t expected_params(const UNetConfig& cfg) {
  auto block = [&](std::size_t cin, std::size_t f) {
    std::size_t n = 0;
    for (int i = 0; i < cfg.convs_per_block; ++i) n += 27 * (i == 0 ? cin : f) * f + 5 * f;
    return n;
  };
  std::size_t n = 0, cin = cfg.in_channels;
  for (int l = 0; l < cfg.num_levels; ++l) {
    const std::size_t f = std::size_t(cfg.base_filters) << l;
    n += block(cin, f);
    cin = f;
  }
  for (int l = cfg.num_levels - 2; l >= 0; --l) {
    const std::size_t f = std::size_t(cfg.base_filters) << l;
    n += 8 * (2 * f) * f + f + block(2 * f, f);
  }
  return n + cfg.base_filters * cfg.num_classes + cfg.num_classes;
}

std::size_t conv_weights(const Model<float>& m) {
  std::size_t n = 0;
  for (const auto& p : m.params)
    if (p.name.find(".conv") != std::string::npos && p.name.ends_with(".weight")) n += p.tensor->size();
  return n;
}

std::vector<float> vec(const Tensor<float>& t) { return {t.values().begin(), t.values().end()}; }

TensorPtr<float> random_input(const Dims& shape, std::uint64_t seed) {
  SeededRng rng(seed);
  auto t = make_tensor<float>(shape);
  for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = float(rng.normal());
  return t;
}

void check_probabilities(const Tensor<float>& p) {
  const std::size_t c = p.dim(4);
  double worst = 0.0;
  for (std::size_t v = 0; v < p.size() / c; ++v) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const float q = p[v * c + k];
      REQUIRE(q >= 0.0f);
      REQUIRE(q <= 1.0f);
      s += q;
    }
    worst = std::max(worst, std::abs(s - 1.0));
  }
  CHECK(worst <= 1e-5);
}

}  // namespace

TEST_CASE("filter ladders") {
  UNetConfig paper;
  CHECK(paper.filter_ladder() == std::vector<std::size_t>{32, 64, 128, 256, 512});
  CHECK(desk_config().filter_ladder() == std::vector<std::size_t>{4, 8, 16});
}

TEST_CASE("shape inference") {
  UNetConfig paper;
  const auto table = shape_inference(paper, {160, 160, 80});
  Shape3 smallest = table.front().spatial;
  for (const auto& row : table)
    if (row.spatial[0] < smallest[0]) smallest = row.spatial;
  CHECK(smallest == Shape3{10, 10, 5});
  CHECK(table.back().spatial == Shape3{160, 160, 80});
  CHECK(table.back().channels == 4);

  UNetConfig one = paper;
  one.num_levels = 1;
  for (const auto& row : shape_inference(one, {7, 9, 5})) CHECK(row.spatial == Shape3{7, 9, 5});

  CHECK_THROWS_CODE(shape_inference(paper, {30, 30, 30}), ErrorCode::IndivisibleShape);
}

TEST_CASE("parameter counts") {
  SeededRng rng(1);
  const auto model = build<float>(desk_config(), rng);
  CHECK(model.get("enc0.conv0.weight")->size() + model.get("enc0.conv0.bias")->size() == 27 * 4 + 4);

  for (int base : {2, 4, 8, 32})
    for (int levels : {1, 2, 3, 5}) {
      UNetConfig cfg;
      cfg.base_filters = base;
      cfg.num_levels = levels;
      CHECK(param_count(cfg) == expected_params(cfg));
    }
  CHECK(param_count(desk_config()) == model.element_count());

  SeededRng rng2(1);
  UNetConfig wide = desk_config();
  wide.base_filters = 8;
  const double ratio = double(conv_weights(build<float>(wide, rng2))) / double(conv_weights(model));
  CHECK(ratio >= 3.5);
  CHECK(ratio <= 4.5);
}

TEST_CASE("initialization") {
  SeededRng a(5), b(5);
  const auto m1 = build<float>(desk_config(), a), m2 = build<float>(desk_config(), b);
  REQUIRE(m1.params.size() == m2.params.size());
  for (std::size_t i = 0; i < m1.params.size(); ++i) CHECK(vec(*m1.params[i].tensor) == vec(*m2.params[i].tensor));

  for (const auto& p : m1.params) {
    if (p.name.ends_with(".bias") || p.name.ends_with(".beta") || p.name.ends_with(".running_mean"))
      for (float v : p.tensor->values()) CHECK(v == 0.0f);
  }
  // He-normal std for the widest desk conv
  const auto w = m1.get("enc2.conv1.weight");
  double ss = 0.0;
  for (float v : w->values()) ss += double(v) * v;
  const double want = std::sqrt(2.0 / (27.0 * 16.0));
  CHECK(std::sqrt(ss / double(w->size())) == doctest::Approx(want).epsilon(0.1));
}

TEST_CASE("forward output shape and probabilities") {
  SeededRng rng(2);
  const auto model = build<float>(desk_config(), rng);
  for (auto mode : {Mode::Train, Mode::Infer}) {
    const auto out = forward<float>(model, nullptr, random_input({1, 32, 32, 16, 1}, 3), mode);
    CHECK(out->shape() == Dims{1, 32, 32, 16, 4});
    check_probabilities(*out);
  }
  CHECK_THROWS_CODE(forward<float>(model, nullptr, random_input({1, 30, 32, 16, 1}, 3), Mode::Infer),
                    ErrorCode::IndivisibleShape);
}

TEST_CASE("forward preserves every divisible spatial shape") {
  SeededRng rng(4);
  const auto model = build<float>(desk_config(), rng);
  SeededRng pick(9);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t x = 4 * (1 + pick.uniform_index(4)), y = 4 * (1 + pick.uniform_index(4)),
                      z = 4 * (1 + pick.uniform_index(3)), b = 1 + pick.uniform_index(2);
    INFO(x << "x" << y << "x" << z << " batch " << b);
    const auto out = forward<float>(model, nullptr, random_input({b, x, y, z, 1}, trial), Mode::Infer);
    CHECK(out->shape() == Dims{b, x, y, z, 4});
    check_probabilities(*out);
  }
}

TEST_CASE("gradient reaches every trainable parameter") {
  SeededRng rng(6);
  const auto model = build<float>(desk_config(), rng);
  auto x = random_input({2, 8, 8, 8, 1}, 7);
  auto y = make_tensor<float>({2, 8, 8, 8, 4});
  for (std::size_t v = 0; v < y->size() / 4; ++v) (*y)[v * 4 + rng.uniform_index(4)] = 1.0f;
  for (auto& t : model.trainable()) t->set_requires_grad(true);
  Tape<float> tape;
  const TrainConfig cfg;
  tape.backward(total_loss<float>(&tape, forward<float>(model, &tape, x, Mode::Train), y, cfg));
  for (const auto& p : model.params) {
    if (!p.trainable) continue;
    INFO(p.name);
    REQUIRE(p.tensor->has_grad());
    double norm = 0.0;
    for (float g : p.tensor->grad()) norm += double(g) * g;
    CHECK(norm > 0.0);
  }
}

TEST_CASE("infer mode is per-sample and batch independent") {
  SeededRng rng(8);
  const auto model = build<float>(desk_config(), rng);
  auto a = random_input({1, 8, 8, 4, 1}, 1), b = random_input({1, 8, 8, 4, 1}, 2);
  auto both = make_tensor<float>({2, 8, 8, 4, 1});
  std::copy(a->values().begin(), a->values().end(), both->values().begin());
  std::copy(b->values().begin(), b->values().end(), both->values().begin() + a->size());
  const auto pa = forward<float>(model, nullptr, a, Mode::Infer), pb = forward<float>(model, nullptr, b, Mode::Infer);
  const auto pab = forward<float>(model, nullptr, both, Mode::Infer);
  CHECK(vec(*forward<float>(model, nullptr, a, Mode::Infer)) == vec(*pa));
  double worst = 0.0;
  for (std::size_t i = 0; i < pa->size(); ++i) {
    worst = std::max(worst, double(std::abs((*pab)[i] - (*pa)[i])));
    worst = std::max(worst, double(std::abs((*pab)[pa->size() + i] - (*pb)[i])));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("checkpoint round trip") {
  testing::TempDir dir("unet3d");
  SeededRng rng(10);
  auto model = build<float>(desk_config(), rng);
  // make running statistics non-trivial before saving
  forward<float>(model, nullptr, random_input({1, 8, 8, 8, 1}, 11), Mode::Train);
  save_checkpoint(model, dir.path / "ckpt");
  const auto loaded = load_checkpoint(dir.path / "ckpt");
  CHECK(loaded.config.base_filters == 4);
  CHECK(loaded.config.num_levels == 3);
  auto x = random_input({1, 16, 16, 8, 1}, 12);
  CHECK(vec(*forward<float>(loaded, nullptr, x, Mode::Infer)) == vec(*forward<float>(model, nullptr, x, Mode::Infer)));

  std::ifstream in(dir.path / "ckpt.json");
  const auto manifest = nlohmann::json::parse(in);
  std::size_t total = 0;
  for (const auto& t : manifest.at("tensors")) {
    std::size_t n = 1;
    for (const auto& d : t.at("shape")) n *= d.get<std::size_t>();
    total += n;
  }
  CHECK(total == param_count(desk_config()));
  CHECK(std::filesystem::file_size(dir.path / "ckpt.bin") == total * sizeof(float));

  CHECK_THROWS(load_checkpoint(dir.path / "missing"));
}

TEST_CASE("tiny U-Net gradients in double precision") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    INFO("seed " << seed);
    CHECK(grad_cases::unet_loss_case(seed) < 1e-3);
  }
}

TEST_CASE("tiny U-Net single-precision backward agrees with double differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    INFO("seed " << seed);
    CHECK(grad_cases::unet_loss_single_case(seed, 1e-3) < 1e-3);
  }
}
