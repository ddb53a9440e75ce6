#include "voxelseg/evaluation.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "binary_io.hpp"
#include "voxelseg/error.hpp"
#include "voxelseg/rng.hpp"

namespace voxelseg {

ConfusionCounts confusion(const LabelVolume& pred, const LabelVolume& gt, std::uint8_t cls) {
  require(pred.shape == gt.shape, ErrorCode::ShapeMismatch, "prediction and ground truth differ in shape");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.voxels.size(); ++i) {
    const bool p = pred.voxels[i] == cls, g = gt.voxels[i] == cls;
    if (p && g)
      ++c.tp;
    else if (p)
      ++c.fp;
    else if (g)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

namespace {
double ratio(std::uint64_t num, std::uint64_t den) { return den == 0 ? 1.0 : double(num) / double(den); }
}  // namespace

double dsc(const ConfusionCounts& c) { return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn); }
double sensitivity(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn); }
double specificity(const ConfusionCounts& c) { return ratio(c.tn, c.tn + c.fp); }

SampleMetrics evaluate_sample(const LabelVolume& pred, const LabelVolume& gt) {
  require(pred.shape == gt.shape, ErrorCode::ShapeMismatch, "prediction and ground truth differ in shape");
  SampleMetrics m;
  for (std::size_t c = 0; c < label::kNumClasses; ++c) {
    const auto counts = confusion(pred, gt, static_cast<std::uint8_t>(c));
    m.per_class[c] = {dsc(counts), sensitivity(counts), specificity(counts)};
  }
  const auto& l = m.per_class[label::kLungLeft];
  const auto& r = m.per_class[label::kLungRight];
  m.lungs = {(l.dsc + r.dsc) / 2.0, (l.sensitivity + r.sensitivity) / 2.0, (l.specificity + r.specificity) / 2.0};
  m.infection = m.per_class[label::kInfection];
  return m;
}

std::vector<std::vector<std::size_t>> cv_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  require(k >= 2, ErrorCode::InvalidK, "k must be at least 2, got " + std::to_string(k));
  require(k <= n, ErrorCode::InvalidK, "k = " + std::to_string(k) + " exceeds sample count " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  SeededRng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_index(i + 1)]);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(order.begin() + pos, order.begin() + pos + size);
    std::sort(folds[f].begin(), folds[f].end());
    pos += size;
  }
  return folds;
}

double median(std::vector<double> values) {
  require(!values.empty(), ErrorCode::InvalidArgument, "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

CvReport aggregate(const std::vector<SampleRecord>& samples, std::size_t fold_count) {
  CvReport report;
  report.samples = samples;
  report.folds.resize(fold_count);
  using Field = double MetricTriple::*;
  const Field fields[] = {&MetricTriple::dsc, &MetricTriple::sensitivity, &MetricTriple::specificity};
  for (std::size_t f = 0; f < fold_count; ++f) {
    std::vector<const SampleMetrics*> members;
    for (const auto& s : samples)
      if (s.fold == f) members.push_back(&s.metrics);
    require(!members.empty(), ErrorCode::InvalidArgument, "fold " + std::to_string(f) + " has no samples");
    for (Field field : fields) {
      std::vector<double> lungs, infection;
      for (const auto* m : members) {
        lungs.push_back(m->lungs.*field);
        infection.push_back(m->infection.*field);
      }
      report.folds[f].lungs.*field = median(lungs);
      report.folds[f].infection.*field = median(infection);
    }
  }
  for (Field field : fields) {
    double lungs = 0.0, infection = 0.0;
    for (const auto& row : report.folds) {
      lungs += row.lungs.*field;
      infection += row.infection.*field;
    }
    report.average.lungs.*field = lungs / double(fold_count);
    report.average.infection.*field = infection / double(fold_count);
  }
  return report;
}

namespace {
std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string csv_row(const std::string& name, const ReportRow& r) {
  return name + "," + fmt(r.lungs.dsc) + "," + fmt(r.lungs.sensitivity) + "," + fmt(r.lungs.specificity) + "," +
         fmt(r.infection.dsc) + "," + fmt(r.infection.sensitivity) + "," + fmt(r.infection.specificity) + "\n";
}

nlohmann::ordered_json triple_json(const MetricTriple& t) {
  return {{"dsc", t.dsc}, {"sens", t.sensitivity}, {"spec", t.specificity}};
}

nlohmann::ordered_json row_json(const ReportRow& r) {
  return {{"lungs", triple_json(r.lungs)}, {"covid", triple_json(r.infection)}};
}
}  // namespace

std::string CvReport::to_csv() const {
  std::string out = "fold,lungs_dsc,lungs_sens,lungs_spec,covid_dsc,covid_sens,covid_spec\n";
  for (std::size_t f = 0; f < folds.size(); ++f) out += csv_row(std::to_string(f + 1), folds[f]);
  out += csv_row("AVG", average);
  return out;
}

std::string CvReport::to_json() const {
  nlohmann::ordered_json j;
  j["folds"] = nlohmann::ordered_json::array();
  for (std::size_t f = 0; f < folds.size(); ++f) {
    auto row = row_json(folds[f]);
    row["fold"] = f + 1;
    j["folds"].push_back(row);
  }
  j["average"] = row_json(average);
  j["samples"] = nlohmann::ordered_json::array();
  for (const auto& s : samples) {
    nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
    for (const auto& t : s.metrics.per_class) per_class.push_back(triple_json(t));
    j["samples"].push_back({{"id", s.id},
                            {"fold", s.fold + 1},
                            {"lungs", triple_json(s.metrics.lungs)},
                            {"covid", triple_json(s.metrics.infection)},
                            {"per_class", per_class}});
  }
  return j.dump(2) + "\n";
}

// ---- overlays -------------------------------------------------------------

RgbImage overlay_slice(const ImageVolume& image, const LabelVolume& labels, int axis, std::size_t index) {
  require(axis >= 0 && axis <= 2, ErrorCode::InvalidArgument, "overlay axis must be 0, 1 or 2");
  require(image.shape == labels.shape, ErrorCode::ShapeMismatch, "overlay image and labels differ in shape");
  const auto& s = image.shape;
  require(index < s[axis], ErrorCode::IndexOutOfRange,
          "slice " + std::to_string(index) + " outside axis of length " + std::to_string(s[axis]));
  const int ca = axis == 0 ? 1 : 0;  // column axis
  const int ra = axis == 2 ? 1 : 2;  // row axis
  RgbImage out{s[ca], s[ra], {}};
  out.pixels.resize(out.width * out.height * 3);

  auto voxel = [&](std::size_t col, std::size_t row) {
    std::array<std::size_t, 3> p{};
    p[axis] = index;
    p[ca] = col;
    p[ra] = row;
    return linear_index(s, p[0], p[1], p[2]);
  };
  float lo = std::numeric_limits<float>::infinity(), hi = -lo;
  for (std::size_t r = 0; r < out.height; ++r)
    for (std::size_t c = 0; c < out.width; ++c) {
      const float v = image.voxels[voxel(c, r)];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  constexpr double kAlpha = 0.4;
  for (std::size_t r = 0; r < out.height; ++r)
    for (std::size_t c = 0; c < out.width; ++c) {
      const std::size_t i = voxel(c, r);
      const double gray = hi > lo ? 255.0 * (double(image.voxels[i]) - lo) / (double(hi) - lo) : 0.0;
      double rgb[3] = {gray, gray, gray};
      const std::uint8_t l = labels.voxels[i];
      if (l == label::kLungLeft || l == label::kLungRight || l == label::kInfection) {
        const double color[3] = {l == label::kInfection ? 255.0 : 0.0, 0.0, l == label::kInfection ? 0.0 : 255.0};
        for (int k = 0; k < 3; ++k) rgb[k] = (1.0 - kAlpha) * gray + kAlpha * color[k];
      }
      for (int k = 0; k < 3; ++k)
        out.pixels[(r * out.width + c) * 3 + k] = static_cast<std::uint8_t>(std::lround(std::clamp(rgb[k], 0.0, 255.0)));
    }
  return out;
}

namespace {
void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_be32(out, static_cast<std::uint32_t>(crc));
}
}  // namespace

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  require(img.width > 0 && img.height > 0 && img.pixels.size() == img.width * img.height * 3,
          ErrorCode::InvalidArgument, "malformed RGB image");
  std::vector<std::uint8_t> raw;
  raw.reserve(img.height * (1 + img.width * 3));
  for (std::size_t r = 0; r < img.height; ++r) {
    raw.push_back(0);  // filter: none
    const auto* row = img.pixels.data() + r * img.width * 3;
    raw.insert(raw.end(), row, row + img.width * 3);
  }
  uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_len);
  require(compress2(packed.data(), &packed_len, raw.data(), static_cast<uLong>(raw.size()), 6) == Z_OK,
          ErrorCode::IoError, "zlib compression failed");
  packed.resize(packed_len);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(img.width));
  put_be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit truecolour
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", {});
  return out;
}

std::filesystem::path render_overlay(const ImageVolume& image, const LabelVolume& labels, int axis,
                                     std::size_t index, const std::filesystem::path& dir,
                                     const std::string& sample_id) {
  const auto png = encode_png(overlay_slice(image, labels, axis, index));
  const auto path = dir / (sample_id + "_" + "xyz"[axis] + std::to_string(index) + ".png");
  detail::write_bytes(path, png);
  return path;
}

}  // namespace voxelseg
