#include "voxelseg/volume_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <json.hpp>

#include "binary_io.hpp"
#include "voxelseg/error.hpp"

namespace voxelseg {

namespace fs = std::filesystem;
using detail::load_le;
using detail::store_le;

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kDataOffset = 352;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;
constexpr std::string_view kDescripPrefix = "voxelseg:";

// Field offsets inside the NIfTI-1 header.
namespace off {
constexpr std::size_t dim = 40;
constexpr std::size_t datatype = 70;
constexpr std::size_t bitpix = 72;
constexpr std::size_t pixdim = 76;
constexpr std::size_t vox_offset = 108;
constexpr std::size_t scl_slope = 112;
constexpr std::size_t scl_inter = 116;
constexpr std::size_t xyzt_units = 123;
constexpr std::size_t descrip = 148;
constexpr std::size_t magic = 344;
}  // namespace off

std::vector<std::uint8_t> make_header(const Shape3& shape, const Spacing3& spacing, std::int16_t datatype,
                                      std::string_view descrip) {
  std::vector<std::uint8_t> h(kDataOffset, 0);
  store_le<std::int32_t>(h.data(), static_cast<std::int32_t>(kHeaderSize));
  store_le<std::int16_t>(h.data() + off::dim, 3);
  for (int a = 0; a < 3; ++a) {
    if (shape[a] > 32767) fail(ErrorCode::IoError, "dimension exceeds NIfTI-1 int16 range");
    store_le<std::int16_t>(h.data() + off::dim + 2 * (a + 1), static_cast<std::int16_t>(shape[a]));
  }
  for (int a = 4; a < 8; ++a) store_le<std::int16_t>(h.data() + off::dim + 2 * a, 1);
  store_le<std::int16_t>(h.data() + off::datatype, datatype);
  store_le<std::int16_t>(h.data() + off::bitpix, datatype == kDtFloat32 ? 32 : 16);
  store_le<float>(h.data() + off::pixdim, 1.0f);
  for (int a = 0; a < 3; ++a)
    store_le<float>(h.data() + off::pixdim + 4 * (a + 1), static_cast<float>(spacing[a]));
  store_le<float>(h.data() + off::vox_offset, static_cast<float>(kDataOffset));
  store_le<float>(h.data() + off::scl_slope, 1.0f);
  store_le<float>(h.data() + off::scl_inter, 0.0f);
  h[off::xyzt_units] = 2;  // millimetres
  std::memcpy(h.data() + off::descrip, descrip.data(), std::min<std::size_t>(descrip.size(), 79));
  std::memcpy(h.data() + off::magic, "n+1\0", 4);
  return h;
}

}  // namespace

namespace {

ImageVolume decode_nifti(const std::vector<std::uint8_t>& bytes, bool read_kind) {
  require(bytes.size() >= kHeaderSize, ErrorCode::CorruptHeader, "file shorter than a NIfTI-1 header");
  const std::uint8_t* h = bytes.data();
  require(load_le<std::int32_t>(h) == static_cast<std::int32_t>(kHeaderSize), ErrorCode::CorruptHeader,
          "sizeof_hdr is not 348 (little-endian)");
  const bool magic_ok = std::memcmp(h + off::magic, "n+1\0", 4) == 0 || std::memcmp(h + off::magic, "ni1\0", 4) == 0;
  require(magic_ok, ErrorCode::CorruptHeader, "bad magic");

  const auto ndim = load_le<std::int16_t>(h + off::dim);
  require(ndim == 3, ErrorCode::DimensionalityError, "dim[0] is " + std::to_string(ndim) + ", expected 3");

  ImageVolume vol;
  for (int a = 0; a < 3; ++a) {
    const auto n = load_le<std::int16_t>(h + off::dim + 2 * (a + 1));
    require(n >= 1, ErrorCode::CorruptHeader, "non-positive dimension");
    vol.shape[a] = static_cast<std::size_t>(n);
    const float px = load_le<float>(h + off::pixdim + 4 * (a + 1));
    require(std::isfinite(px) && px > 0.0f, ErrorCode::CorruptHeader, "pixdim must be positive on spatial axes");
    vol.spacing[a] = px;
  }

  const auto datatype = load_le<std::int16_t>(h + off::datatype);
  std::size_t elem = 0;
  if (datatype == kDtInt16) elem = 2;
  else if (datatype == kDtFloat32) elem = 4;
  else fail(ErrorCode::UnsupportedDatatype, "datatype code " + std::to_string(datatype));

  const float vox_offset = load_le<float>(h + off::vox_offset);
  require(std::isfinite(vox_offset) && vox_offset >= static_cast<float>(kHeaderSize), ErrorCode::CorruptHeader,
          "vox_offset before end of header");
  const auto offset = static_cast<std::size_t>(vox_offset);
  const std::size_t n = voxel_count(vol.shape);
  require(bytes.size() >= offset + n * elem, ErrorCode::CorruptHeader, "payload shorter than header dims imply");

  const float slope = load_le<float>(h + off::scl_slope);
  const float inter = load_le<float>(h + off::scl_inter);
  const bool scale = slope != 0.0f && std::isfinite(slope) && !(slope == 1.0f && inter == 0.0f);

  vol.voxels.resize(n);
  std::span<const std::uint8_t> payload(bytes.data() + offset, n * elem);
  if (datatype == kDtFloat32) {
    vol.voxels = detail::decode_le<float>(payload);
  } else {
    const auto raw = detail::decode_le<std::int16_t>(payload);
    std::transform(raw.begin(), raw.end(), vol.voxels.begin(), [](std::int16_t v) { return static_cast<float>(v); });
  }
  if (scale)
    for (auto& v : vol.voxels) v = v * slope + inter;

  char descrip[81] = {};
  std::memcpy(descrip, h + off::descrip, 80);
  std::string_view desc(descrip);
  vol.intensity_kind = IntensityKind::HounsfieldLike;
  if (read_kind && desc.starts_with(kDescripPrefix))
    vol.intensity_kind = intensity_kind_from_string(desc.substr(kDescripPrefix.size()));

  vol.validate();
  return vol;
}

}  // namespace

ImageVolume read_nifti(const fs::path& path) { return decode_nifti(detail::read_bytes(path), true); }

void write_nifti(const ImageVolume& volume, const fs::path& path) {
  volume.validate();
  std::string descrip(kDescripPrefix);
  descrip += to_string(volume.intensity_kind);
  auto bytes = make_header(volume.shape, volume.spacing, kDtFloat32, descrip);
  detail::append_le<float>(bytes, volume.voxels);
  detail::write_bytes(path, bytes);
}

void write_nifti_labels(const LabelVolume& labels, const Spacing3& spacing, const fs::path& path) {
  labels.validate();
  auto bytes = make_header(labels.shape, spacing, kDtInt16, "voxelseg:labels");
  std::vector<std::int16_t> wide(labels.voxels.begin(), labels.voxels.end());
  detail::append_le<std::int16_t>(bytes, wide);
  detail::write_bytes(path, bytes);
}

LabelVolume read_nifti_labels(const fs::path& path, int num_classes) {
  const ImageVolume img = decode_nifti(detail::read_bytes(path), false);
  LabelVolume out(img.shape, num_classes);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const float v = img.voxels[i];
    require(v >= 0.0f && v < static_cast<float>(num_classes) && v == std::floor(v), ErrorCode::InvalidVolume,
            "label voxel is not a class index");
    out.voxels[i] = static_cast<std::uint8_t>(v);
  }
  return out;
}

void write_mvf(const Sample& sample, const fs::path& stem) {
  sample.validate();
  nlohmann::ordered_json meta;
  meta["format"] = "mvf";
  meta["id"] = sample.id;
  meta["shape"] = sample.image.shape;
  meta["spacing"] = sample.image.spacing;
  meta["intensity_kind"] = to_string(sample.image.intensity_kind);
  meta["num_classes"] = sample.labels ? sample.labels->num_classes : label::kNumClasses;
  meta["has_labels"] = sample.labels.has_value();
  detail::write_text(fs::path(stem.string() + ".json"), meta.dump(2) + "\n");

  std::vector<std::uint8_t> img;
  detail::append_le<float>(img, sample.image.voxels);
  detail::write_bytes(fs::path(stem.string() + ".img.raw"), img);
  const fs::path lbl(stem.string() + ".lbl.raw");
  if (sample.labels) detail::write_bytes(lbl, sample.labels->voxels);
  else if (fs::exists(lbl)) fs::remove(lbl);
}

Sample read_mvf(const fs::path& stem) {
  const fs::path sidecar(stem.string() + ".json");
  require(fs::exists(sidecar), ErrorCode::MissingSidecar, sidecar.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(detail::read_text(sidecar));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoError, "malformed sidecar " + sidecar.string() + ": " + e.what());
  }

  Sample s;
  try {
    s.id = meta.value("id", stem.filename().string());
    s.image.shape = meta.at("shape").get<Shape3>();
    s.image.spacing = meta.at("spacing").get<Spacing3>();
    s.image.intensity_kind = intensity_kind_from_string(meta.at("intensity_kind").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoError, "sidecar " + sidecar.string() + " lacks a field: " + e.what());
  }
  const int num_classes = meta.value("num_classes", label::kNumClasses);
  const std::size_t n = voxel_count(s.image.shape);

  const auto img = detail::read_bytes(fs::path(stem.string() + ".img.raw"));
  require(img.size() == n * sizeof(float), ErrorCode::ShapeMismatch,
          "image payload holds " + std::to_string(img.size() / sizeof(float)) + " voxels, sidecar shape needs " +
              std::to_string(n));
  s.image.voxels = detail::decode_le<float>(img);

  const fs::path lbl(stem.string() + ".lbl.raw");
  if (meta.value("has_labels", fs::exists(lbl))) {
    auto raw = detail::read_bytes(lbl);
    require(raw.size() == n, ErrorCode::ShapeMismatch, "label payload size disagrees with sidecar shape");
    LabelVolume labels(s.image.shape, num_classes);
    labels.voxels = std::move(raw);
    s.labels = std::move(labels);
  }
  s.validate();
  return s;
}

std::vector<fs::path> list_mvf(const fs::path& dir) {
  std::vector<fs::path> stems;
  if (!fs::is_directory(dir)) fail(ErrorCode::IoError, "not a directory: " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto& p = entry.path();
    if (p.extension() != ".json") continue;
    fs::path stem = p;
    stem.replace_extension();
    if (fs::exists(fs::path(stem.string() + ".img.raw"))) stems.push_back(stem);
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

}  // namespace voxelseg
