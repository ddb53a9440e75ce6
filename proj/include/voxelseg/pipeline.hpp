#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "voxelseg/augment.hpp"
#include "voxelseg/evaluation.hpp"
#include "voxelseg/patch_engine.hpp"
#include "voxelseg/phantom.hpp"
#include "voxelseg/preprocess.hpp"
#include "voxelseg/training.hpp"
#include "voxelseg/unet3d.hpp"

namespace voxelseg {

struct EvalConfig {
  int overlay_axis = 2;
  bool overlays = true;
};

/// Default locations used when a command is not given them explicitly.
struct PathsConfig {
  std::string data_dir;
  std::string cache_dir;
  std::string out_dir;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  PreprocessConfig preprocess;
  AugmentConfig augment;
  PatchGridConfig patch;
  UNetConfig model;
  TrainConfig train;
  EvalConfig eval;
  PathsConfig paths;
  PhantomSpec synth;

  void validate() const;
};

/// INI-style text: `seed = N` at the top, then `[section]` blocks whose keys
/// are the config field names. Triples and ranges are comma separated.
/// Unknown sections or keys, malformed values and failed validation all
/// raise ConfigError.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);
/// Every field, in a fixed order, in the format parse_config reads.
std::string to_config_text(const PipelineConfig& cfg);
void write_resolved_config(const PipelineConfig& cfg, const std::filesystem::path& dir);

/// Overlap-averaged sliding-window inference on a z-scored volume:
/// pad, grid, infer-mode forward per batch of patches, reassemble, argmax,
/// crop back to the input shape.
LabelVolume predict_volume(const Model<float>& model, const ImageVolume& image, const PatchGridConfig& patch);

/// Samples read from an MVF directory, optionally restricted to `ids` (in that order).
std::vector<Sample> load_samples(const std::filesystem::path& dir, const std::vector<std::string>& ids = {});

void cmd_synth(std::size_t n, const PipelineConfig& cfg, const std::filesystem::path& out);
void cmd_preprocess(const std::filesystem::path& in, const PipelineConfig& cfg, const std::filesystem::path& out);
/// Trains on `ids` (all samples when empty) and monitors `val_ids`.
FitLog cmd_train(const std::filesystem::path& cache, const std::vector<std::string>& ids,
                 const std::vector<std::string>& val_ids, const PipelineConfig& cfg,
                 const std::filesystem::path& out);
void cmd_predict(const std::filesystem::path& checkpoint, const std::filesystem::path& in, const PipelineConfig& cfg,
                 const std::filesystem::path& out);
CvReport cmd_evaluate(const std::filesystem::path& pred, const std::filesystem::path& gt, const PipelineConfig& cfg,
                      const std::filesystem::path& out);
CvReport cmd_cv(const std::filesystem::path& cache, std::size_t k, const PipelineConfig& cfg,
                const std::filesystem::path& out);

}  // namespace voxelseg
