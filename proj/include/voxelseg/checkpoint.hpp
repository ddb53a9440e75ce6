#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "voxelseg/tensor.hpp"

namespace voxelseg::nn {

template <typename T>
struct NamedTensor {
  std::string name;
  TensorPtr<T> tensor;
  bool trainable = true;
};

/// Parameter checkpoint: `<stem>.json` manifest (names, shapes, dtype,
/// trainable flag, plus caller metadata under "meta") and `<stem>.bin`
/// holding the little-endian arrays back to back in manifest order.
template <typename T>
void save_tensors(const std::vector<NamedTensor<T>>& tensors, const nlohmann::ordered_json& meta,
                  const std::filesystem::path& stem);

struct LoadedTensors {
  nlohmann::ordered_json meta;
  std::vector<NamedTensor<double>> tensors;  // widened; callers narrow as needed
  std::string dtype;
};

LoadedTensors load_tensors(const std::filesystem::path& stem);

}  // namespace voxelseg::nn
