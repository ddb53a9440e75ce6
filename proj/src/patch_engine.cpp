#include "voxelseg/patch_engine.hpp"

#include <algorithm>

#include "voxelseg/error.hpp"

namespace voxelseg {

void PatchGridConfig::validate() const {
  for (int a = 0; a < 3; ++a) {
    require(patch_shape[a] >= 1, ErrorCode::ConfigError, "patch: patch_shape components must be >= 1");
    require(overlap[a] < patch_shape[a], ErrorCode::ConfigError, "patch: overlap must be smaller than patch_shape");
  }
  require(batch_size >= 1, ErrorCode::ConfigError, "patch: batch_size must be >= 1");
}

std::pair<Sample, PadRecord> pad_to_min(const Sample& sample, const Shape3& patch_shape) {
  PadRecord rec;
  rec.original = sample.image.shape;
  Shape3 padded = rec.original;
  for (int a = 0; a < 3; ++a) {
    if (padded[a] < patch_shape[a]) {
      rec.before[a] = (patch_shape[a] - padded[a]) / 2;
      padded[a] = patch_shape[a];
    }
  }
  if (padded == rec.original) return {sample, rec};

  Sample out;
  out.id = sample.id;
  const float fill = *std::min_element(sample.image.voxels.begin(), sample.image.voxels.end());
  out.image = ImageVolume(padded, sample.image.spacing, sample.image.intensity_kind, fill);
  if (sample.labels) out.labels = LabelVolume(padded, sample.labels->num_classes, label::kBackground);
  const Shape3& s = rec.original;
  for (std::size_t z = 0; z < s[2]; ++z)
    for (std::size_t y = 0; y < s[1]; ++y)
      for (std::size_t x = 0; x < s[0]; ++x) {
        const std::size_t px = x + rec.before[0], py = y + rec.before[1], pz = z + rec.before[2];
        out.image.at(px, py, pz) = sample.image.at(x, y, z);
        if (sample.labels) out.labels->at(px, py, pz) = sample.labels->at(x, y, z);
      }
  return {std::move(out), rec};
}

namespace {
template <typename Vol>
Vol crop_impl(const Vol& vol, const PadRecord& pad, Vol out) {
  const Shape3& s = pad.original;
  for (std::size_t z = 0; z < s[2]; ++z)
    for (std::size_t y = 0; y < s[1]; ++y)
      for (std::size_t x = 0; x < s[0]; ++x)
        out.at(x, y, z) = vol.at(x + pad.before[0], y + pad.before[1], z + pad.before[2]);
  return out;
}
}  // namespace

ImageVolume crop_back(const ImageVolume& vol, const PadRecord& pad) {
  if (vol.shape == pad.original) return vol;
  return crop_impl(vol, pad, ImageVolume(pad.original, vol.spacing, vol.intensity_kind));
}

LabelVolume crop_back(const LabelVolume& vol, const PadRecord& pad) {
  if (vol.shape == pad.original) return vol;
  return crop_impl(vol, pad, LabelVolume(pad.original, vol.num_classes));
}

Patch extract_patch(const Sample& sample, const Shape3& origin, const Shape3& patch_shape) {
  for (int a = 0; a < 3; ++a)
    require(origin[a] + patch_shape[a] <= sample.image.shape[a], ErrorCode::IndexOutOfRange,
            "patch window exceeds the volume");
  Patch p;
  p.origin = origin;
  p.image = ImageVolume(patch_shape, sample.image.spacing, sample.image.intensity_kind);
  if (sample.labels) p.labels = LabelVolume(patch_shape, sample.labels->num_classes);
  for (std::size_t z = 0; z < patch_shape[2]; ++z)
    for (std::size_t y = 0; y < patch_shape[1]; ++y) {
      const std::size_t src = linear_index(sample.image.shape, origin[0], origin[1] + y, origin[2] + z);
      const std::size_t dst = linear_index(patch_shape, 0, y, z);
      std::copy_n(sample.image.voxels.begin() + src, patch_shape[0], p.image.voxels.begin() + dst);
      if (sample.labels) std::copy_n(sample.labels->voxels.begin() + src, patch_shape[0], p.labels->voxels.begin() + dst);
    }
  return p;
}

Patch random_crop(const Sample& sample, const Shape3& patch_shape, SeededRng& rng) {
  Shape3 origin{};
  for (int a = 0; a < 3; ++a) {
    require(sample.image.shape[a] >= patch_shape[a], ErrorCode::ShapeMismatch,
            "random_crop needs a volume at least as large as the patch");
    origin[a] = rng.uniform_index(sample.image.shape[a] - patch_shape[a] + 1);
  }
  return extract_patch(sample, origin, patch_shape);
}

std::vector<Shape3> grid_positions(const Shape3& vol_shape, const Shape3& patch_shape, const Shape3& overlap) {
  std::array<std::vector<std::size_t>, 3> axes;
  for (int a = 0; a < 3; ++a) {
    require(vol_shape[a] >= patch_shape[a], ErrorCode::ShapeMismatch, "grid needs volume >= patch on every axis");
    require(overlap[a] < patch_shape[a], ErrorCode::InvalidArgument, "overlap must be smaller than the patch");
    const std::size_t stride = patch_shape[a] - overlap[a];
    const std::size_t last = vol_shape[a] - patch_shape[a];
    for (std::size_t o = 0;; o += stride) {
      const std::size_t clamped = std::min(o, last);
      if (axes[a].empty() || axes[a].back() != clamped) axes[a].push_back(clamped);
      if (o >= last) break;
    }
  }
  std::vector<Shape3> out;
  for (auto x : axes[0])
    for (auto y : axes[1])
      for (auto z : axes[2]) out.push_back({x, y, z});
  return out;
}

ProbabilityVolume reassemble(const std::vector<ProbPatch>& patches, const Shape3& vol_shape, std::size_t num_classes) {
  const std::size_t n = voxel_count(vol_shape);
  std::vector<double> sum(n * num_classes, 0.0);
  std::vector<std::uint32_t> count(n, 0);
  for (const auto& p : patches) {
    require(p.probs.size() == voxel_count(p.shape) * num_classes, ErrorCode::ShapeMismatch,
            "patch probability buffer has the wrong size");
    for (int a = 0; a < 3; ++a)
      require(p.origin[a] + p.shape[a] <= vol_shape[a], ErrorCode::IndexOutOfRange, "patch lies outside the volume");
    for (std::size_t z = 0; z < p.shape[2]; ++z)
      for (std::size_t y = 0; y < p.shape[1]; ++y)
        for (std::size_t x = 0; x < p.shape[0]; ++x) {
          const std::size_t v = linear_index(vol_shape, p.origin[0] + x, p.origin[1] + y, p.origin[2] + z);
          const float* src = p.probs.data() + linear_index(p.shape, x, y, z) * num_classes;
          for (std::size_t c = 0; c < num_classes; ++c) sum[v * num_classes + c] += src[c];
          ++count[v];
        }
  }
  ProbabilityVolume out{vol_shape, num_classes, std::vector<float>(n * num_classes)};
  for (std::size_t v = 0; v < n; ++v) {
    require(count[v] > 0, ErrorCode::CoverageGap, "voxel " + std::to_string(v) + " is covered by no patch");
    for (std::size_t c = 0; c < num_classes; ++c)
      out.probs[v * num_classes + c] = static_cast<float>(sum[v * num_classes + c] / count[v]);
  }
  return out;
}

std::vector<ProbPatch> slice_grid(const ProbabilityVolume& vol, const Shape3& patch_shape, const Shape3& overlap) {
  std::vector<ProbPatch> out;
  const std::size_t C = vol.num_classes;
  for (const auto& origin : grid_positions(vol.shape, patch_shape, overlap)) {
    ProbPatch p{origin, patch_shape, std::vector<float>(voxel_count(patch_shape) * C)};
    for (std::size_t z = 0; z < patch_shape[2]; ++z)
      for (std::size_t y = 0; y < patch_shape[1]; ++y)
        for (std::size_t x = 0; x < patch_shape[0]; ++x) {
          const std::size_t src = linear_index(vol.shape, origin[0] + x, origin[1] + y, origin[2] + z) * C;
          std::copy_n(vol.probs.begin() + src, C, p.probs.begin() + linear_index(patch_shape, x, y, z) * C);
        }
    out.push_back(std::move(p));
  }
  return out;
}

LabelVolume argmax(const ProbabilityVolume& probs) {
  LabelVolume out(probs.shape, static_cast<int>(probs.num_classes));
  const std::size_t C = probs.num_classes;
  for (std::size_t v = 0; v < out.size(); ++v) {
    const float* p = probs.probs.data() + v * C;
    out.voxels[v] = static_cast<std::uint8_t>(std::max_element(p, p + C) - p);
  }
  return out;
}

void image_into(const ImageVolume& image, nn::Tensor<float>& dst, std::size_t slot) {
  const Shape3& s = image.shape;
  require(dst.rank() == 5 && dst.dim(1) == s[0] && dst.dim(2) == s[1] && dst.dim(3) == s[2] && dst.dim(4) == 1,
          ErrorCode::ShapeMismatch, "image tensor shape mismatch");
  float* base = dst.data() + slot * voxel_count(s);
  for (std::size_t x = 0; x < s[0]; ++x)
    for (std::size_t y = 0; y < s[1]; ++y)
      for (std::size_t z = 0; z < s[2]; ++z) *base++ = image.at(x, y, z);
}

ImageVolume image_from(const nn::Tensor<float>& src, std::size_t slot, const Spacing3& spacing) {
  const Shape3 s{src.dim(1), src.dim(2), src.dim(3)};
  ImageVolume out(s, spacing, IntensityKind::ZScored);
  const float* base = src.data() + slot * voxel_count(s) * src.dim(4);
  for (std::size_t x = 0; x < s[0]; ++x)
    for (std::size_t y = 0; y < s[1]; ++y)
      for (std::size_t z = 0; z < s[2]; ++z, base += src.dim(4)) out.at(x, y, z) = *base;
  return out;
}

ProbPatch prob_patch_from(const nn::Tensor<float>& src, std::size_t slot, const Shape3& origin) {
  require(src.rank() == 5 && slot < src.dim(0), ErrorCode::ShapeMismatch, "probability tensor shape mismatch");
  const Shape3 s{src.dim(1), src.dim(2), src.dim(3)};
  const std::size_t C = src.dim(4);
  ProbPatch out{origin, s, std::vector<float>(voxel_count(s) * C)};
  const float* base = src.data() + slot * voxel_count(s) * C;
  for (std::size_t x = 0; x < s[0]; ++x)
    for (std::size_t y = 0; y < s[1]; ++y)
      for (std::size_t z = 0; z < s[2]; ++z, base += C)
        std::copy(base, base + C, out.probs.begin() + linear_index(s, x, y, z) * C);
  return out;
}

void one_hot_into(const LabelVolume& labels, nn::Tensor<float>& dst, std::size_t slot) {
  const Shape3& s = labels.shape;
  const std::size_t C = dst.dim(4);
  require(dst.rank() == 5 && dst.dim(1) == s[0] && dst.dim(2) == s[1] && dst.dim(3) == s[2] &&
              C == std::size_t(labels.num_classes),
          ErrorCode::ShapeMismatch, "one-hot tensor shape mismatch");
  float* base = dst.data() + slot * voxel_count(s) * C;
  for (std::size_t x = 0; x < s[0]; ++x)
    for (std::size_t y = 0; y < s[1]; ++y)
      for (std::size_t z = 0; z < s[2]; ++z, base += C) {
        std::fill(base, base + C, 0.0f);
        base[labels.at(x, y, z)] = 1.0f;
      }
}

Batch training_batch(const std::vector<Sample>& dataset, const PatchGridConfig& cfg, const AugmentConfig& aug,
                     std::uint64_t batch_seed) {
  require(!dataset.empty(), ErrorCode::InvalidArgument, "training_batch needs a non-empty dataset");
  cfg.validate();
  const Shape3& ps = cfg.patch_shape;
  const int classes = dataset.front().labels ? dataset.front().labels->num_classes : label::kNumClasses;
  Batch batch;
  batch.images = nn::make_tensor<float>({cfg.batch_size, ps[0], ps[1], ps[2], 1});
  batch.onehot = nn::make_tensor<float>({cfg.batch_size, ps[0], ps[1], ps[2], std::size_t(classes)});

  nn::parallel_for(cfg.batch_size, [&](std::size_t slot) {
    SeededRng rng(SeededRng::derive(batch_seed, {slot}));
    const Sample& source = dataset[rng.uniform_index(dataset.size())];
    require(source.labels.has_value(), ErrorCode::InvalidArgument, "training sample '" + source.id + "' has no labels");
    const Sample augmented = apply_pipeline(source, aug, rng);
    const Sample padded = pad_to_min(augmented, ps).first;
    const Patch patch = random_crop(padded, ps, rng);
    image_into(patch.image, *batch.images, slot);
    one_hot_into(*patch.labels, *batch.onehot, slot);
  });
  return batch;
}

Batch training_batch(const std::vector<Sample>& dataset, const PatchGridConfig& cfg, const AugmentConfig& aug,
                     SeededRng& rng) {
  return training_batch(dataset, cfg, aug, rng.next_u64());
}

}  // namespace voxelseg
