// voxelseg command-line driver.
#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "voxelseg/error.hpp"
#include "voxelseg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace voxelseg;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Pipeline config file");
  cmd->add_option("--seed", c.seed, "Seed overriding the config");
  cmd->add_option("--out", c.out, "Output directory");
}

PipelineConfig resolve(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

fs::path pick(const std::string& given, const std::string& fallback, const char* what) {
  const std::string& p = given.empty() ? fallback : given;
  require(!p.empty(), ErrorCode::InvalidArgument, std::string("missing ") + what);
  return p;
}

std::vector<std::string> split_ids(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < s.size()) {
    const auto end = s.find(',', start);
    const auto item = s.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!item.empty()) out.push_back(item);
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volumetric lung and infection segmentation with a 3D U-Net"};
  app.require_subcommand(1);

  Common synth_c, prep_c, train_c, pred_c, eval_c, cv_c;
  std::size_t n = 0, k = 5;
  std::string in_dir, cache_dir, ids, val_ids, checkpoint, pred_dir, gt_dir;
  std::optional<int> max_epochs;

  auto* synth = app.add_subcommand("synth", "Generate synthetic phantom samples");
  add_common(synth, synth_c);
  synth->add_option("-n", n, "Number of phantoms")->required();

  auto* prep = app.add_subcommand("preprocess", "Clip, normalise, z-score and resample a sample directory");
  add_common(prep, prep_c);
  prep->add_option("--in", in_dir, "Directory of raw MVF samples");

  auto* train = app.add_subcommand("train", "Train a model on a sample cache");
  add_common(train, train_c);
  train->add_option("--cache", cache_dir, "Directory of MVF samples");
  train->add_option("--ids", ids, "Comma-separated training sample ids (default: all)");
  train->add_option("--val-ids", val_ids, "Comma-separated validation sample ids");
  train->add_option("--max-epochs", max_epochs, "Override train.max_epochs");

  auto* predict = app.add_subcommand("predict", "Segment samples with a trained checkpoint");
  add_common(predict, pred_c);
  predict->add_option("--checkpoint", checkpoint, "Checkpoint stem (path without .json/.bin)")->required();
  predict->add_option("--in", in_dir, "Directory of MVF samples");

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against ground truth");
  add_common(evaluate, eval_c);
  evaluate->add_option("--pred", pred_dir, "Directory of predicted MVF samples")->required();
  evaluate->add_option("--gt", gt_dir, "Directory of ground-truth MVF samples")->required();

  auto* cv = app.add_subcommand("cv", "k-fold cross-validation: train, predict and evaluate every fold");
  add_common(cv, cv_c);
  cv->add_option("--cache", cache_dir, "Directory of MVF samples");
  cv->add_option("-k", k, "Number of folds");
  cv->add_option("--max-epochs", max_epochs, "Override train.max_epochs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      const auto cfg = resolve(synth_c);
      cmd_synth(n, cfg, pick(synth_c.out, cfg.paths.data_dir, "--out"));
    } else if (prep->parsed()) {
      const auto cfg = resolve(prep_c);
      cmd_preprocess(pick(in_dir, cfg.paths.data_dir, "--in"), cfg, pick(prep_c.out, cfg.paths.cache_dir, "--out"));
    } else if (train->parsed()) {
      auto cfg = resolve(train_c);
      if (max_epochs) cfg.train.max_epochs = *max_epochs;
      cfg.validate();
      cmd_train(pick(cache_dir, cfg.paths.cache_dir, "--cache"), split_ids(ids), split_ids(val_ids), cfg,
                pick(train_c.out, cfg.paths.out_dir, "--out"));
    } else if (predict->parsed()) {
      const auto cfg = resolve(pred_c);
      cmd_predict(checkpoint, pick(in_dir, cfg.paths.cache_dir, "--in"), cfg,
                  pick(pred_c.out, cfg.paths.out_dir, "--out"));
    } else if (evaluate->parsed()) {
      const auto cfg = resolve(eval_c);
      cmd_evaluate(pred_dir, gt_dir, cfg, pick(eval_c.out, cfg.paths.out_dir, "--out"));
    } else if (cv->parsed()) {
      auto cfg = resolve(cv_c);
      if (max_epochs) cfg.train.max_epochs = *max_epochs;
      cfg.validate();
      const auto report = cmd_cv(pick(cache_dir, cfg.paths.cache_dir, "--cache"), k, cfg,
                                 pick(cv_c.out, cfg.paths.out_dir, "--out"));
      std::cout << report.to_csv();
    }
  } catch (const Error& e) {
    std::cerr << "voxelseg: error: " << e.what() << '\n';
    return e.is_validation() ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "voxelseg: error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
