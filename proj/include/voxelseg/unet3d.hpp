#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "voxelseg/checkpoint.hpp"
#include "voxelseg/layers.hpp"
#include "voxelseg/rng.hpp"
#include "voxelseg/volume.hpp"

namespace voxelseg {

struct UNetConfig {
  int in_channels = 1;
  int num_classes = label::kNumClasses;
  int base_filters = 32;
  int num_levels = 5;
  int convs_per_block = 2;

  /// Feature maps at a resolution level: base_filters * 2^level.
  std::size_t filters(int level) const { return static_cast<std::size_t>(base_filters) << level; }
  std::vector<std::size_t> filter_ladder() const;
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static UNetConfig from_json(const nlohmann::json& j);
};

struct LayerShape {
  std::string name;
  Shape3 spatial;
  std::size_t channels;
};

/// Symbolic shapes through the network for one input patch; throws
/// IndivisibleShape unless every spatial dim divides by 2^(num_levels-1).
std::vector<LayerShape> shape_inference(const UNetConfig& cfg, const Shape3& input);

/// Number of stored elements over every parameter tensor, running
/// batch-norm statistics included (the checkpoint element total).
std::size_t param_count(const UNetConfig& cfg);
/// Same, counting only gradient-trained tensors.
std::size_t trainable_param_count(const UNetConfig& cfg);

/// Standard 3D U-Net. Encoder levels run blocks of Conv3^3 -> ReLU -> BN
/// followed by 2^3 max pooling (none at the bottom); each decoder level
/// upsamples with a 2^3 stride-2 transposed convolution, concatenates the
/// matching encoder output, and runs the same blocks. A 1^3 convolution and
/// channel softmax form the head.
///
/// Parameters are addressed by stable names such as "enc0.conv1.weight",
/// "enc2.bn0.running_var", "dec1.up.weight" and "head.bias".
template <typename T>
class Model {
 public:
  UNetConfig config;
  std::vector<nn::NamedTensor<T>> params;

  nn::TensorPtr<T> get(const std::string& name) const;
  std::vector<nn::TensorPtr<T>> trainable() const;
  std::size_t element_count() const;
  void zero_grad();
  Model clone() const;
};

template <typename T>
Model<T> build(const UNetConfig& cfg, SeededRng& rng);

/// Per-voxel class probabilities for input (b, x, y, z, in_channels).
template <typename T>
nn::TensorPtr<T> forward(const Model<T>& model, nn::Tape<T>* tape, const nn::TensorPtr<T>& input, nn::Mode mode);

template <typename To, typename From>
Model<To> cast_model(const Model<From>& model);

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& stem);
/// Loads a checkpoint written by save_checkpoint; the config comes from the manifest.
Model<float> load_checkpoint(const std::filesystem::path& stem);

}  // namespace voxelseg
