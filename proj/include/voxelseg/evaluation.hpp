#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "voxelseg/volume.hpp"

namespace voxelseg {

/// One-vs-rest voxel counts for a single class.
struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const { return tp + fp + tn + fn; }
};

ConfusionCounts confusion(const LabelVolume& pred, const LabelVolume& gt, std::uint8_t cls);

// 0/0 cases (nothing to find or nothing to reject) count as perfect agreement.
double dsc(const ConfusionCounts& c);
double sensitivity(const ConfusionCounts& c);
double specificity(const ConfusionCounts& c);

struct MetricTriple {
  double dsc = 0.0, sensitivity = 0.0, specificity = 0.0;
};

struct SampleMetrics {
  MetricTriple lungs;      // mean of the left and right lung classes
  MetricTriple infection;
  std::array<MetricTriple, label::kNumClasses> per_class{};
};

SampleMetrics evaluate_sample(const LabelVolume& pred, const LabelVolume& gt);

/// Seeded shuffle of [0, n) split into k contiguous folds; the first n % k
/// folds get one extra sample. Indices inside a fold are sorted.
std::vector<std::vector<std::size_t>> cv_split(std::size_t n, std::size_t k, std::uint64_t seed);

double median(std::vector<double> values);

struct SampleRecord {
  std::string id;
  std::size_t fold = 0;
  SampleMetrics metrics;
};

struct ReportRow {
  MetricTriple lungs, infection;
};

struct CvReport {
  std::vector<ReportRow> folds;  // fold medians, fold index = position
  ReportRow average;             // mean over folds
  std::vector<SampleRecord> samples;

  /// `fold,lungs_dsc,lungs_sens,lungs_spec,covid_dsc,covid_sens,covid_spec`,
  /// one row per fold (numbered from 1) and a final AVG row.
  std::string to_csv() const;
  std::string to_json() const;
};

/// Per fold and metric the median over that fold's samples, then the mean of
/// the fold medians. `fold_count` folds are reported; every fold needs at
/// least one sample.
CvReport aggregate(const std::vector<SampleRecord>& samples, std::size_t fold_count);

// ---- overlays -------------------------------------------------------------

struct RgbImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB triples
};

/// Slice through `axis` (0 = x, 1 = y, 2 = z) at `index`. The remaining two
/// axes in increasing order become (column, row). Intensities are min-max
/// windowed per slice; lung voxels blend towards blue and infection voxels
/// towards red with alpha 0.4.
RgbImage overlay_slice(const ImageVolume& image, const LabelVolume& labels, int axis, std::size_t index);

std::vector<std::uint8_t> encode_png(const RgbImage& img);

/// Writes `<dir>/<sample_id>_<axis letter><index>.png` and returns its path.
std::filesystem::path render_overlay(const ImageVolume& image, const LabelVolume& labels, int axis,
                                     std::size_t index, const std::filesystem::path& dir,
                                     const std::string& sample_id);

}  // namespace voxelseg
