#include "voxelseg/checkpoint.hpp"

#include "binary_io.hpp"
#include "voxelseg/error.hpp"

namespace voxelseg::nn {

namespace fs = std::filesystem;

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "float32" : "float64";
}

template <typename T>
void save_tensors(const std::vector<NamedTensor<T>>& tensors, const nlohmann::ordered_json& meta,
                  const fs::path& stem) {
  nlohmann::ordered_json manifest;
  manifest["format"] = "voxelseg-checkpoint";
  manifest["dtype"] = dtype_name<T>();
  manifest["meta"] = meta;
  manifest["tensors"] = nlohmann::ordered_json::array();
  std::vector<std::uint8_t> blob;
  for (const auto& t : tensors) {
    manifest["tensors"].push_back(
        {{"name", t.name}, {"shape", t.tensor->shape()}, {"dtype", dtype_name<T>()}, {"trainable", t.trainable}});
    detail::append_le<T>(blob, t.tensor->values());
  }
  detail::write_text(fs::path(stem.string() + ".json"), manifest.dump(2) + "\n");
  detail::write_bytes(fs::path(stem.string() + ".bin"), blob);
}

LoadedTensors load_tensors(const fs::path& stem) {
  const fs::path mpath(stem.string() + ".json");
  require(fs::exists(mpath), ErrorCode::IoError, "missing checkpoint manifest " + mpath.string());
  LoadedTensors out;
  nlohmann::ordered_json manifest;
  try {
    manifest = nlohmann::ordered_json::parse(detail::read_text(mpath));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoError, "malformed checkpoint manifest: " + std::string(e.what()));
  }
  require(manifest.value("format", "") == "voxelseg-checkpoint", ErrorCode::IoError, "not a voxelseg checkpoint");
  out.dtype = manifest.at("dtype").get<std::string>();
  require(out.dtype == "float32" || out.dtype == "float64", ErrorCode::UnsupportedDatatype, out.dtype);
  out.meta = manifest.value("meta", nlohmann::ordered_json::object());
  const std::size_t elem = out.dtype == "float32" ? 4 : 8;

  const auto blob = detail::read_bytes(fs::path(stem.string() + ".bin"));
  std::size_t offset = 0;
  for (const auto& entry : manifest.at("tensors")) {
    const auto shape = entry.at("shape").get<Dims>();
    const std::size_t n = product(shape);
    require(offset + n * elem <= blob.size(), ErrorCode::ShapeMismatch, "checkpoint payload shorter than manifest");
    std::span<const std::uint8_t> bytes(blob.data() + offset, n * elem);
    std::vector<double> values;
    if (elem == 4) {
      const auto f = detail::decode_le<float>(bytes);
      values.assign(f.begin(), f.end());
    } else {
      values = detail::decode_le<double>(bytes);
    }
    offset += n * elem;
    out.tensors.push_back({entry.at("name").get<std::string>(), make_tensor<double>(shape, std::move(values)),
                           entry.value("trainable", true)});
  }
  require(offset == blob.size(), ErrorCode::ShapeMismatch, "checkpoint payload longer than manifest");
  return out;
}

template void save_tensors(const std::vector<NamedTensor<float>>&, const nlohmann::ordered_json&, const fs::path&);
template void save_tensors(const std::vector<NamedTensor<double>>&, const nlohmann::ordered_json&, const fs::path&);

}  // namespace voxelseg::nn
