#include "voxelseg/pipeline.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "voxelseg/error.hpp"
#include "voxelseg/volume_io.hpp"

namespace voxelseg {

namespace fs = std::filesystem;

// ---- config values --------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_number(const std::string& text) {
  const std::string s = trim(text);
  T value{};
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty())
    fail(ErrorCode::ConfigError, "cannot parse '" + text + "' as a number");
  return value;
}

std::string format(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string format(std::uint64_t v) { return std::to_string(v); }
std::string format(int v) { return std::to_string(v); }

template <std::size_t N, typename T>
std::array<T, N> parse_array(const std::string& text) {
  const auto items = split_list(text);
  require(items.size() == N, ErrorCode::ConfigError,
          "expected " + std::to_string(N) + " comma-separated values, got '" + text + "'");
  std::array<T, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = parse_number<T>(items[i]);
  return out;
}

template <typename Array>
std::string format_list(const Array& a) {
  std::string out;
  for (const auto& v : a) out += (out.empty() ? "" : ", ") + format(v);
  return out;
}

struct Field {
  std::string section, key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

class FieldTable {
 public:
  FieldTable& section(std::string name) {
    section_ = std::move(name);
    return *this;
  }
  FieldTable& add(const std::string& key, double& v) {
    return push(key, [&v](const std::string& s) { v = parse_number<double>(s); }, [&v] { return format(v); });
  }
  FieldTable& add(const std::string& key, int& v) {
    return push(key, [&v](const std::string& s) { v = parse_number<int>(s); }, [&v] { return format(v); });
  }
  FieldTable& add(const std::string& key, std::size_t& v) {
    return push(key, [&v](const std::string& s) { v = parse_number<std::size_t>(s); },
                [&v] { return format(std::uint64_t(v)); });
  }
  FieldTable& add(const std::string& key, bool& v) {
    return push(
        key,
        [&v, key](const std::string& s) {
          const std::string t = trim(s);
          if (t == "true" || t == "1") v = true;
          else if (t == "false" || t == "0") v = false;
          else fail(ErrorCode::ConfigError, "'" + key + "' expects true or false, got '" + s + "'");
        },
        [&v] { return std::string(v ? "true" : "false"); });
  }
  FieldTable& add(const std::string& key, std::string& v) {
    return push(key, [&v](const std::string& s) { v = trim(s); }, [&v] { return v; });
  }
  FieldTable& add(const std::string& key, Shape3& v) {
    return push(key, [&v](const std::string& s) { v = parse_array<3, std::size_t>(s); },
                [&v] { return format_list(std::array<std::uint64_t, 3>{v[0], v[1], v[2]}); });
  }
  FieldTable& add(const std::string& key, std::array<double, 3>& v) {
    return push(key, [&v](const std::string& s) { v = parse_array<3, double>(s); }, [&v] { return format_list(v); });
  }
  FieldTable& add(const std::string& key, std::pair<double, double>& v) {
    return push(
        key,
        [&v](const std::string& s) {
          const auto a = parse_array<2, double>(s);
          v = {a[0], a[1]};
        },
        [&v] { return format_list(std::array<double, 2>{v.first, v.second}); });
  }

  std::vector<Field> fields;

 private:
  FieldTable& push(const std::string& key, std::function<void(const std::string&)> set,
                   std::function<std::string()> get) {
    fields.push_back({section_, key, std::move(set), std::move(get)});
    return *this;
  }
  std::string section_;
};

std::vector<Field> field_table(PipelineConfig& c) {
  FieldTable t;
  t.section("").add("seed", c.seed);
  t.section("preprocess")
      .add("clip_min", c.preprocess.clip_min)
      .add("clip_max", c.preprocess.clip_max)
      .add("grayscale_lo", c.preprocess.grayscale_lo)
      .add("grayscale_hi", c.preprocess.grayscale_hi)
      .add("target_spacing", c.preprocess.target_spacing)
      .add("zscore_epsilon", c.preprocess.zscore_epsilon);
  t.section("augment")
      .add("p_apply", c.augment.p_apply)
      .add("mirror_axis_probability", c.augment.mirror_axis_probability)
      .add("rotation_range", c.augment.rotation_range)
      .add("scale_range", c.augment.scale_range)
      .add("elastic_alpha", c.augment.elastic_alpha)
      .add("elastic_sigma", c.augment.elastic_sigma)
      .add("brightness_range", c.augment.brightness_range)
      .add("contrast_range", c.augment.contrast_range)
      .add("gamma_range", c.augment.gamma_range)
      .add("noise_sigma_range", c.augment.noise_sigma_range);
  t.section("patch")
      .add("patch_shape", c.patch.patch_shape)
      .add("overlap", c.patch.overlap)
      .add("batch_size", c.patch.batch_size);
  t.section("model")
      .add("in_channels", c.model.in_channels)
      .add("num_classes", c.model.num_classes)
      .add("base_filters", c.model.base_filters)
      .add("num_levels", c.model.num_levels)
      .add("convs_per_block", c.model.convs_per_block);
  t.section("train")
      .add("alpha", c.train.alpha)
      .add("beta", c.train.beta)
      .add("initial_lr", c.train.initial_lr)
      .add("lr_factor", c.train.lr_factor)
      .add("lr_patience", c.train.lr_patience)
      .add("min_lr", c.train.min_lr)
      .add("es_patience", c.train.es_patience)
      .add("max_epochs", c.train.max_epochs)
      .add("batches_per_epoch", c.train.batches_per_epoch)
      .add("batch_size", c.train.batch_size)
      .add("adam_beta1", c.train.adam_beta1)
      .add("adam_beta2", c.train.adam_beta2)
      .add("adam_eps", c.train.adam_eps)
      .add("loss_prob_floor", c.train.loss_prob_floor)
      .add("tversky_smooth", c.train.tversky_smooth)
      .add("checkpoint_every", c.train.checkpoint_every);
  t.section("eval").add("overlay_axis", c.eval.overlay_axis).add("overlays", c.eval.overlays);
  t.section("paths")
      .add("data_dir", c.paths.data_dir)
      .add("cache_dir", c.paths.cache_dir)
      .add("out_dir", c.paths.out_dir);
  t.section("synth")
      .add("shape", c.synth.shape)
      .add("spacing", c.synth.spacing)
      .add("lung_radii", c.synth.lung_radii)
      .add("lung_offset", c.synth.lung_offset)
      .add("center_jitter", c.synth.center_jitter)
      .add("radius_jitter", c.synth.radius_jitter)
      .add("left_lung_hu", c.synth.left_lung_hu)
      .add("right_lung_hu", c.synth.right_lung_hu)
      .add("tissue_hu", c.synth.tissue_hu)
      .add("infection_hu", c.synth.infection_hu)
      .add("noise_hu", c.synth.noise_hu)
      .add("max_blobs_per_lung", c.synth.max_blobs_per_lung)
      .add("blob_radius", c.synth.blob_radius)
      .add("infection_fraction", c.synth.infection_fraction);
  return std::move(t.fields);
}

void log_line(const std::string& text) { std::cerr << "voxelseg: " << text << '\n'; }

}  // namespace

void PipelineConfig::validate() const {
  preprocess.validate();
  augment.validate();
  patch.validate();
  model.validate();
  train.validate();
  synth.validate();
  require(eval.overlay_axis >= 0 && eval.overlay_axis <= 2, ErrorCode::ConfigError, "eval: overlay_axis must be 0, 1 or 2");
  require(patch.batch_size == train.batch_size, ErrorCode::ConfigError,
          "patch.batch_size and train.batch_size disagree (" + std::to_string(patch.batch_size) + " vs " +
              std::to_string(train.batch_size) + ")");
  require(model.num_classes == label::kNumClasses, ErrorCode::ConfigError,
          "model: num_classes must be " + std::to_string(label::kNumClasses) + " for lung/infection labels");
  require(model.in_channels == 1, ErrorCode::ConfigError, "model: in_channels must be 1 for single-modality CT");
}

PipelineConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::ConfigError, std::string("config syntax: ") + e.what());
  }
  PipelineConfig cfg;
  auto fields = field_table(cfg);
  std::map<std::pair<std::string, std::string>, Field*> index;
  std::set<std::string> sections;
  for (auto& f : fields) {
    index[{f.section, f.key}] = &f;
    sections.insert(f.section);
  }
  bool seen_batch[2] = {false, false};
  auto apply = [&](const std::string& section, const std::string& key, const std::string& value) {
    const auto it = index.find({section, key});
    require(it != index.end(), ErrorCode::ConfigError,
            "unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
    try {
      it->second->set(value);
    } catch (const Error& e) {
      fail(ErrorCode::ConfigError, (section.empty() ? key : section + "." + key) + ": " + e.what());
    }
    if (key == "batch_size") seen_batch[section == "train"] = true;
  };
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      apply("", name, node.data());
      continue;
    }
    require(sections.count(name) && !name.empty(), ErrorCode::ConfigError, "unknown config section [" + name + "]");
    for (const auto& [key, leaf] : node) {
      require(leaf.empty(), ErrorCode::ConfigError, "nested keys are not supported: " + name + "." + key);
      apply(name, key, leaf.data());
    }
  }
  // batch_size lives in two sections; one mention sets both.
  if (seen_batch[0] && !seen_batch[1]) cfg.train.batch_size = cfg.patch.batch_size;
  if (seen_batch[1] && !seen_batch[0]) cfg.patch.batch_size = cfg.train.batch_size;
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = detail::read_text(path);
  } catch (const Error& e) {
    fail(ErrorCode::ConfigError, std::string("cannot read config: ") + e.what());
  }
  return parse_config(text);
}

std::string to_config_text(const PipelineConfig& cfg) {
  PipelineConfig copy = cfg;
  std::string out;
  std::string section;
  for (const auto& f : field_table(copy)) {
    if (f.section != section) {
      section = f.section;
      out += "\n[" + section + "]\n";
    }
    out += f.key + " = " + f.get() + "\n";
  }
  return out;
}

void write_resolved_config(const PipelineConfig& cfg, const fs::path& dir) {
  detail::write_text(dir / "config.resolved", to_config_text(cfg));
}

// ---- inference ------------------------------------------------------------

LabelVolume predict_volume(const Model<float>& model, const ImageVolume& image, const PatchGridConfig& patch) {
  patch.validate();
  require(image.intensity_kind == IntensityKind::ZScored, ErrorCode::WrongIntensityKind,
          "prediction expects a z-scored volume");
  shape_inference(model.config, patch.patch_shape);  // IndivisibleShape check
  const Shape3& ps = patch.patch_shape;
  const auto [padded, pad] = pad_to_min(Sample{"", image, std::nullopt}, ps);
  const auto origins = grid_positions(padded.image.shape, ps, patch.overlap);
  const std::size_t classes = std::size_t(model.config.num_classes);

  std::vector<ProbPatch> pieces;
  pieces.reserve(origins.size());
  for (std::size_t start = 0; start < origins.size(); start += patch.batch_size) {
    const std::size_t count = std::min(patch.batch_size, origins.size() - start);
    auto input = nn::make_tensor<float>({count, ps[0], ps[1], ps[2], 1});
    for (std::size_t i = 0; i < count; ++i)
      image_into(extract_patch(padded, origins[start + i], ps).image, *input, i);
    const auto probs = forward<float>(model, nullptr, input, nn::Mode::Infer);
    for (std::size_t i = 0; i < count; ++i) pieces.push_back(prob_patch_from(*probs, i, origins[start + i]));
  }
  const LabelVolume labels = argmax(reassemble(pieces, padded.image.shape, classes));
  return crop_back(labels, pad);
}

// ---- commands -------------------------------------------------------------

std::vector<Sample> load_samples(const fs::path& dir, const std::vector<std::string>& ids) {
  std::vector<Sample> out;
  if (ids.empty()) {
    for (const auto& stem : list_mvf(dir)) out.push_back(read_mvf(stem));
  } else {
    for (const auto& id : ids) out.push_back(read_mvf(dir / id));
  }
  require(!out.empty(), ErrorCode::InvalidArgument, "no samples found in " + dir.string());
  return out;
}

void cmd_synth(std::size_t n, const PipelineConfig& cfg, const fs::path& out) {
  require(n >= 1, ErrorCode::InvalidArgument, "synth needs n >= 1");
  cfg.validate();
  fs::create_directories(out);
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "phantom_%03zu", i);
    write_mvf(make_phantom(cfg.synth, SeededRng::derive(cfg.seed, {i}), id), out / id);
  }
  write_resolved_config(cfg, out);
  log_line("wrote " + std::to_string(n) + " phantoms to " + out.string());
}

namespace {
nlohmann::ordered_json shape_json(const Shape3& s) { return {s[0], s[1], s[2]}; }

Sample prepare(const Sample& raw, const PipelineConfig& cfg) {
  if (raw.image.intensity_kind == IntensityKind::Grayscale0to255)
    log_line(raw.id + ": grayscale input, skipping clip and normalisation");
  return preprocess_sample(raw, cfg.preprocess);
}

/// Samples ready for the network, preprocessing any that are not z-scored yet.
std::vector<Sample> ready_samples(const fs::path& dir, const PipelineConfig& cfg, const std::vector<std::string>& ids) {
  auto samples = load_samples(dir, ids);
  for (auto& s : samples)
    if (s.image.intensity_kind != IntensityKind::ZScored) s = prepare(s, cfg);
  return samples;
}

Model<float> train_model(const std::vector<Sample>& train, const std::vector<Sample>& val, const PipelineConfig& cfg,
                         std::uint64_t seed, const fs::path& out, FitLog& log) {
  SeededRng init(SeededRng::derive(seed, {0}));
  auto model = build<float>(cfg.model, init);
  FitOptions options;
  options.checkpoint_dir = out / "checkpoints";
  options.on_epoch = [&](const FitLog::Row& r) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %d  train %.5f  val %.5f  lr %.1e  %.1fs", r.epoch, r.train_loss,
                  r.val_loss, r.lr, r.seconds);
    log_line(line);
  };
  auto result = fit(std::move(model), train, val, cfg.train, cfg.patch, cfg.augment, SeededRng::derive(seed, {1}),
                    options);
  save_checkpoint(result.model, out / "model");
  detail::write_text(out / "fitlog.csv", result.log.to_csv());
  log = std::move(result.log);
  return std::move(result.model);
}

void write_prediction(const Sample& input, const LabelVolume& pred, const fs::path& out) {
  write_nifti_labels(pred, input.image.spacing, out / (input.id + ".nii"));
  write_mvf(Sample{input.id, input.image, pred}, out / input.id);
}
}  // namespace

void cmd_preprocess(const fs::path& in, const PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  fs::create_directories(out);
  nlohmann::ordered_json manifest;
  manifest["target_spacing"] = cfg.preprocess.target_spacing;
  manifest["samples"] = nlohmann::ordered_json::array();
  for (const auto& stem : list_mvf(in)) {
    const Sample raw = read_mvf(stem);
    const Sample ready = prepare(raw, cfg);
    write_mvf(ready, out / ready.id);
    manifest["samples"].push_back({{"id", raw.id},
                                   {"intensity_kind", to_string(raw.image.intensity_kind)},
                                   {"original_shape", shape_json(raw.image.shape)},
                                   {"original_spacing", raw.image.spacing},
                                   {"resampled_shape", shape_json(ready.image.shape)}});
  }
  require(!manifest["samples"].empty(), ErrorCode::InvalidArgument, "no samples found in " + in.string());
  detail::write_text(out / "manifest.json", manifest.dump(2) + "\n");
  write_resolved_config(cfg, out);
  log_line("preprocessed " + std::to_string(manifest["samples"].size()) + " samples into " + out.string());
}

FitLog cmd_train(const fs::path& cache, const std::vector<std::string>& ids, const std::vector<std::string>& val_ids,
                 const PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  const auto train = ready_samples(cache, cfg, ids);
  const auto val = val_ids.empty() ? std::vector<Sample>{} : ready_samples(cache, cfg, val_ids);
  fs::create_directories(out);
  write_resolved_config(cfg, out);
  FitLog log;
  train_model(train, val, cfg, cfg.seed, out, log);
  return log;
}

void cmd_predict(const fs::path& checkpoint, const fs::path& in, const PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  const Model<float> model = load_checkpoint(checkpoint);
  fs::create_directories(out);
  write_resolved_config(cfg, out);
  for (const auto& sample : ready_samples(in, cfg, {})) {
    write_prediction(sample, predict_volume(model, sample.image, cfg.patch), out);
    log_line("predicted " + sample.id);
  }
}

namespace {
SampleRecord evaluate_one(const Sample& gt, const LabelVolume& pred, std::size_t fold, const PipelineConfig& cfg,
                          const fs::path& overlay_dir) {
  require(gt.labels.has_value(), ErrorCode::InvalidArgument, "sample '" + gt.id + "' has no ground truth labels");
  SampleRecord rec{gt.id, fold, evaluate_sample(pred, *gt.labels)};
  if (cfg.eval.overlays) {
    const int axis = cfg.eval.overlay_axis;
    render_overlay(gt.image, pred, axis, gt.image.shape[axis] / 2, overlay_dir, gt.id);
  }
  return rec;
}
}  // namespace

CvReport cmd_evaluate(const fs::path& pred, const fs::path& gt, const PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  fs::create_directories(out);
  write_resolved_config(cfg, out);
  std::vector<SampleRecord> records;
  for (const auto& stem : list_mvf(pred)) {
    const Sample p = read_mvf(stem);
    require(p.labels.has_value(), ErrorCode::InvalidArgument, "prediction '" + p.id + "' has no labels");
    Sample truth = read_mvf(gt / p.id);
    if (truth.image.shape != p.labels->shape) truth = prepare(truth, cfg);
    records.push_back(evaluate_one(truth, *p.labels, 0, cfg, out / "overlays"));
  }
  require(!records.empty(), ErrorCode::InvalidArgument, "no predictions found in " + pred.string());
  const CvReport report = aggregate(records, 1);
  detail::write_text(out / "metrics.csv", report.to_csv());
  detail::write_text(out / "metrics.json", report.to_json());
  return report;
}

CvReport cmd_cv(const fs::path& cache, std::size_t k, const PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  const auto samples = ready_samples(cache, cfg, {});
  const auto folds = cv_split(samples.size(), k, cfg.seed);
  fs::create_directories(out);
  write_resolved_config(cfg, out);

  nlohmann::ordered_json folds_json;
  folds_json["k"] = k;
  folds_json["seed"] = cfg.seed;
  folds_json["folds"] = nlohmann::ordered_json::array();
  for (const auto& fold : folds) {
    nlohmann::ordered_json ids = nlohmann::ordered_json::array();
    for (std::size_t i : fold) ids.push_back(samples[i].id);
    folds_json["folds"].push_back(ids);
  }
  detail::write_text(out / "folds.json", folds_json.dump(2) + "\n");

  std::vector<SampleRecord> records;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const fs::path dir = out / ("fold_" + std::to_string(f + 1));
    fs::create_directories(dir);
    std::vector<Sample> train, held_out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const bool test = std::find(folds[f].begin(), folds[f].end(), i) != folds[f].end();
      (test ? held_out : train).push_back(samples[i]);
    }
    log_line("fold " + std::to_string(f + 1) + "/" + std::to_string(folds.size()) + ": " +
             std::to_string(train.size()) + " train, " + std::to_string(held_out.size()) + " held out");
    FitLog log;
    const Model<float> model = train_model(train, held_out, cfg, SeededRng::derive(cfg.seed, {f + 1}), dir, log);
    for (const auto& s : held_out) {
      const LabelVolume pred = predict_volume(model, s.image, cfg.patch);
      write_prediction(s, pred, dir / "predictions");
      records.push_back(evaluate_one(s, pred, f, cfg, dir / "overlays"));
      log_line("  " + s.id + "  lungs DSC " + std::to_string(records.back().metrics.lungs.dsc) + "  infection DSC " +
               std::to_string(records.back().metrics.infection.dsc));
    }
  }
  const CvReport report = aggregate(records, folds.size());
  detail::write_text(out / "report.csv", report.to_csv());
  detail::write_text(out / "report.json", report.to_json());
  return report;
}

}  // namespace voxelseg
