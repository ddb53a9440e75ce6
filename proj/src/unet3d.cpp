#include "voxelseg/unet3d.hpp"

#include <cmath>
#include <unordered_map>

#include "voxelseg/error.hpp"

namespace voxelseg {

using nn::Dims;
using nn::make_tensor;
using nn::TensorPtr;

std::vector<std::size_t> UNetConfig::filter_ladder() const {
  std::vector<std::size_t> out;
  for (int l = 0; l < num_levels; ++l) out.push_back(filters(l));
  return out;
}

void UNetConfig::validate() const {
  require(in_channels >= 1, ErrorCode::ConfigError, "model: in_channels must be >= 1");
  require(num_classes >= 2, ErrorCode::ConfigError, "model: num_classes must be >= 2");
  require(base_filters >= 1, ErrorCode::ConfigError, "model: base_filters must be >= 1");
  require(num_levels >= 1 && num_levels <= 8, ErrorCode::ConfigError, "model: num_levels must be in [1, 8]");
  require(convs_per_block >= 1, ErrorCode::ConfigError, "model: convs_per_block must be >= 1");
}

nlohmann::ordered_json UNetConfig::to_json() const {
  return {{"in_channels", in_channels},
          {"num_classes", num_classes},
          {"base_filters", base_filters},
          {"num_levels", num_levels},
          {"convs_per_block", convs_per_block}};
}

UNetConfig UNetConfig::from_json(const nlohmann::json& j) {
  UNetConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.base_filters = j.at("base_filters").get<int>();
  c.num_levels = j.at("num_levels").get<int>();
  c.convs_per_block = j.at("convs_per_block").get<int>();
  c.validate();
  return c;
}

std::vector<LayerShape> shape_inference(const UNetConfig& cfg, const Shape3& input) {
  cfg.validate();
  const std::size_t factor = std::size_t{1} << (cfg.num_levels - 1);
  for (auto d : input)
    require(d >= factor && d % factor == 0, ErrorCode::IndivisibleShape,
            "spatial dim " + std::to_string(d) + " is not divisible by " + std::to_string(factor));

  std::vector<LayerShape> table;
  table.push_back({"input", input, std::size_t(cfg.in_channels)});
  Shape3 s = input;
  for (int l = 0; l < cfg.num_levels; ++l) {
    const std::string p = "enc" + std::to_string(l);
    for (int i = 0; i < cfg.convs_per_block; ++i) table.push_back({p + ".block" + std::to_string(i), s, cfg.filters(l)});
    if (l + 1 < cfg.num_levels) {
      for (auto& d : s) d /= 2;
      table.push_back({p + ".pool", s, cfg.filters(l)});
    }
  }
  table.push_back({"bottleneck", s, cfg.filters(cfg.num_levels - 1)});
  for (int l = cfg.num_levels - 2; l >= 0; --l) {
    const std::string p = "dec" + std::to_string(l);
    for (auto& d : s) d *= 2;
    table.push_back({p + ".up", s, cfg.filters(l)});
    table.push_back({p + ".concat", s, 2 * cfg.filters(l)});
    for (int i = 0; i < cfg.convs_per_block; ++i) table.push_back({p + ".block" + std::to_string(i), s, cfg.filters(l)});
  }
  table.push_back({"head", s, std::size_t(cfg.num_classes)});
  table.push_back({"softmax", s, std::size_t(cfg.num_classes)});
  return table;
}

namespace {

// Visits every parameter tensor of the architecture in its canonical order.
template <typename Fn>
void for_each_param(const UNetConfig& cfg, Fn&& fn) {
  auto block = [&](const std::string& p, std::size_t cin, std::size_t f) {
    for (int i = 0; i < cfg.convs_per_block; ++i) {
      const std::string c = p + ".conv" + std::to_string(i), b = p + ".bn" + std::to_string(i);
      fn(c + ".weight", Dims{3, 3, 3, i == 0 ? cin : f, f}, true, 27 * (i == 0 ? cin : f));
      fn(c + ".bias", Dims{f}, true, 0);
      fn(b + ".gamma", Dims{f}, true, 0);
      fn(b + ".beta", Dims{f}, true, 0);
      fn(b + ".running_mean", Dims{f}, false, 0);
      fn(b + ".running_var", Dims{f}, false, 0);
    }
  };
  std::size_t cin = cfg.in_channels;
  for (int l = 0; l < cfg.num_levels; ++l) {
    block("enc" + std::to_string(l), cin, cfg.filters(l));
    cin = cfg.filters(l);
  }
  for (int l = cfg.num_levels - 2; l >= 0; --l) {
    const std::string p = "dec" + std::to_string(l);
    const std::size_t f = cfg.filters(l);
    fn(p + ".up.weight", Dims{2, 2, 2, f, cfg.filters(l + 1)}, true, 8 * cfg.filters(l + 1));
    fn(p + ".up.bias", Dims{f}, true, 0);
    block(p, 2 * f, f);
  }
  fn("head.weight", Dims{1, 1, 1, cfg.filters(0), std::size_t(cfg.num_classes)}, true, cfg.filters(0));
  fn("head.bias", Dims{std::size_t(cfg.num_classes)}, true, 0);
}

bool ends_with(const std::string& s, std::string_view suffix) { return s.ends_with(suffix); }

}  // namespace

std::size_t param_count(const UNetConfig& cfg) {
  cfg.validate();
  std::size_t n = 0;
  for_each_param(cfg, [&](const std::string&, const Dims& d, bool, std::size_t) { n += nn::product(d); });
  return n;
}

std::size_t trainable_param_count(const UNetConfig& cfg) {
  cfg.validate();
  std::size_t n = 0;
  for_each_param(cfg, [&](const std::string&, const Dims& d, bool trainable, std::size_t) {
    if (trainable) n += nn::product(d);
  });
  return n;
}

template <typename T>
TensorPtr<T> Model<T>::get(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return p.tensor;
  fail(ErrorCode::InvalidArgument, "model has no parameter '" + name + "'");
}

template <typename T>
std::vector<TensorPtr<T>> Model<T>::trainable() const {
  std::vector<TensorPtr<T>> out;
  for (const auto& p : params)
    if (p.trainable) out.push_back(p.tensor);
  return out;
}

template <typename T>
std::size_t Model<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor->size();
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : params) p.tensor->zero_grad();
}

template <typename T>
Model<T> Model<T>::clone() const {
  Model out;
  out.config = config;
  for (const auto& p : params) {
    auto t = make_tensor<T>(p.tensor->shape(), std::vector<T>(p.tensor->values().begin(), p.tensor->values().end()),
                            p.tensor->requires_grad());
    out.params.push_back({p.name, t, p.trainable});
  }
  return out;
}

template <typename T>
Model<T> build(const UNetConfig& cfg, SeededRng& rng) {
  cfg.validate();
  Model<T> m;
  m.config = cfg;
  for_each_param(cfg, [&](const std::string& name, const Dims& shape, bool trainable, std::size_t fan_in) {
    auto t = make_tensor<T>(shape, T(0), trainable);
    if (fan_in > 0) {
      const double sd = std::sqrt(2.0 / double(fan_in));
      for (auto& v : t->values()) v = static_cast<T>(sd * rng.normal());
    } else if (ends_with(name, ".gamma") || ends_with(name, ".running_var")) {
      for (auto& v : t->values()) v = T(1);
    }
    m.params.push_back({name, t, trainable});
  });
  return m;
}

template <typename T>
TensorPtr<T> forward(const Model<T>& model, nn::Tape<T>* tape, const TensorPtr<T>& input, nn::Mode mode) {
  const UNetConfig& cfg = model.config;
  require(input->rank() == 5, ErrorCode::ShapeMismatch, "forward expects (b,x,y,z,c) input");
  require(input->dim(4) == std::size_t(cfg.in_channels), ErrorCode::ShapeMismatch, "input channel count mismatch");
  shape_inference(cfg, {input->dim(1), input->dim(2), input->dim(3)});

  auto block = [&](const std::string& p, TensorPtr<T> x) {
    for (int i = 0; i < cfg.convs_per_block; ++i) {
      const std::string c = p + ".conv" + std::to_string(i), b = p + ".bn" + std::to_string(i);
      x = nn::conv3d(tape, x, model.get(c + ".weight"), model.get(c + ".bias"));
      x = nn::relu(tape, x);
      x = nn::batchnorm(tape, x, model.get(b + ".gamma"), model.get(b + ".beta"), *model.get(b + ".running_mean"),
                        *model.get(b + ".running_var"), mode);
    }
    return x;
  };

  std::vector<TensorPtr<T>> skips;
  TensorPtr<T> x = input;
  for (int l = 0; l < cfg.num_levels; ++l) {
    x = block("enc" + std::to_string(l), x);
    if (l + 1 < cfg.num_levels) {
      skips.push_back(x);
      x = nn::maxpool3d(tape, x);
    }
  }
  for (int l = cfg.num_levels - 2; l >= 0; --l) {
    const std::string p = "dec" + std::to_string(l);
    x = nn::transposed_conv3d(tape, x, model.get(p + ".up.weight"), model.get(p + ".up.bias"));
    x = nn::concat_channels(tape, skips[l], x);
    x = block(p, x);
  }
  x = nn::conv3d(tape, x, model.get("head.weight"), model.get("head.bias"));
  return nn::softmax_channels(tape, x);
}

template <typename To, typename From>
Model<To> cast_model(const Model<From>& model) {
  Model<To> out;
  out.config = model.config;
  for (const auto& p : model.params) {
    std::vector<To> values(p.tensor->values().begin(), p.tensor->values().end());
    out.params.push_back({p.name, make_tensor<To>(p.tensor->shape(), std::move(values), p.tensor->requires_grad()),
                          p.trainable});
  }
  return out;
}

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& stem) {
  nlohmann::ordered_json meta;
  meta["model"] = model.config.to_json();
  nn::save_tensors(model.params, meta, stem);
}

Model<float> load_checkpoint(const std::filesystem::path& stem) {
  auto loaded = nn::load_tensors(stem);
  require(loaded.meta.contains("model"), ErrorCode::IoError, "checkpoint manifest lacks model config");
  Model<double> wide;
  wide.config = UNetConfig::from_json(loaded.meta.at("model"));
  SeededRng rng(0);
  const Model<float> reference = build<float>(wide.config, rng);
  require(loaded.tensors.size() == reference.params.size(), ErrorCode::ShapeMismatch,
          "checkpoint tensor count disagrees with its model config");
  for (std::size_t i = 0; i < loaded.tensors.size(); ++i) {
    const auto& got = loaded.tensors[i];
    const auto& want = reference.params[i];
    require(got.name == want.name && got.tensor->shape() == want.tensor->shape(), ErrorCode::ShapeMismatch,
            "checkpoint tensor '" + got.name + "' does not match the architecture");
    got.tensor->set_requires_grad(want.trainable);
    wide.params.push_back({got.name, got.tensor, want.trainable});
  }
  return cast_model<float>(wide);
}

template class Model<float>;
template class Model<double>;
template Model<float> build<float>(const UNetConfig&, SeededRng&);
template Model<double> build<double>(const UNetConfig&, SeededRng&);
template TensorPtr<float> forward(const Model<float>&, nn::Tape<float>*, const TensorPtr<float>&, nn::Mode);
template TensorPtr<double> forward(const Model<double>&, nn::Tape<double>*, const TensorPtr<double>&, nn::Mode);
template Model<double> cast_model<double, float>(const Model<float>&);
template Model<float> cast_model<float, double>(const Model<double>&);
template void save_checkpoint(const Model<float>&, const std::filesystem::path&);
template void save_checkpoint(const Model<double>&, const std::filesystem::path&);

}  // namespace voxelseg
