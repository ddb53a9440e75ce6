#pragma once

#include <filesystem>

#include "voxelseg/volume.hpp"

namespace voxelseg {

/// Reads an uncompressed single-file NIfTI-1 volume (int16 or float32
/// payload). The affine is ignored; voxels keep their stored index order.
/// A descrip field of the form "voxelseg:<kind>" restores the intensity
/// kind, otherwise the volume is tagged HounsfieldLike.
ImageVolume read_nifti(const std::filesystem::path& path);

/// Writes a float32 NIfTI-1 file: 348-byte header, 4 zero extension bytes,
/// payload at offset 352.
void write_nifti(const ImageVolume& volume, const std::filesystem::path& path);

/// Label maps go to disk as int16 so read_nifti_labels (and any other
/// NIfTI reader) can decode them.
void write_nifti_labels(const LabelVolume& labels, const Spacing3& spacing,
                        const std::filesystem::path& path);
LabelVolume read_nifti_labels(const std::filesystem::path& path, int num_classes = label::kNumClasses);

/// MVF cache format. `stem` is the path without extension; the files are
/// `<stem>.json`, `<stem>.img.raw` (float32 LE) and, when labels exist,
/// `<stem>.lbl.raw` (uint8 class indices).
void write_mvf(const Sample& sample, const std::filesystem::path& stem);
Sample read_mvf(const std::filesystem::path& stem);

/// Sample stems (`<dir>/<id>`) of every MVF sidecar in a directory, sorted.
std::vector<std::filesystem::path> list_mvf(const std::filesystem::path& dir);

}  // namespace voxelseg
