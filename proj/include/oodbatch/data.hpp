#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace oodbatch {

/// Ordered task identifiers; every label vector indexes into it.
class TaskSet {
public:
  TaskSet();  // Cardiomegaly, Effusion, Edema, Consolidation
  explicit TaskSet(std::vector<std::string> names);

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }
  const std::string& operator[](std::size_t i) const { return names_[i]; }

  friend bool operator==(const TaskSet&, const TaskSet&) = default;

private:
  std::vector<std::string> names_;
};

enum class Label : std::int8_t { negative = 0, positive = 1, missing = -1 };

using LabelVector = std::vector<Label>;

struct ImageRecord {
  std::string id;
  std::uint32_t image_ref = 0;
  LabelVector labels;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// One environment. Record order is the canonical "original dataset" order.
struct DatasetManifest {
  std::string name;
  std::string region;
  TaskSet tasks;
  std::vector<ImageRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Fixed-size 8-bit grayscale images stored back to back, row-major.
struct ImagePack {
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::uint32_t count = 0;
  std::vector<std::uint8_t> pixels;

  std::size_t plane_size() const noexcept { return std::size_t{height} * width; }
  std::span<const std::uint8_t> image(std::size_t i) const {
    return {pixels.data() + i * plane_size(), plane_size()};
  }

  friend bool operator==(const ImagePack&, const ImagePack&) = default;
};

/// A manifest with the pack its image_refs point into.
struct Environment {
  DatasetManifest manifest;
  ImagePack pack;

  const std::string& name() const noexcept { return manifest.name; }
  std::size_t size() const noexcept { return manifest.size(); }
};

struct ClassCount {
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::size_t n_missing = 0;

  friend bool operator==(const ClassCount&, const ClassCount&) = default;
};

// ---- file formats ---------------------------------------------------------

/// Manifest CSV: header `id,image_ref,<task1>,...,<taskK>`, label tokens
/// `1`, `0` or empty, LF line endings. Errors carry the 1-based line number.
DatasetManifest read_manifest(std::istream& in, std::string name);
void write_manifest(std::ostream& out, const DatasetManifest& manifest);

/// XRPK: "XRPK", u16 version = 1, u16 height, u16 width, u32 count, pixels.
/// All integers little-endian.
ImagePack read_pack(std::istream& in);
void write_pack(std::ostream& out, const ImagePack& pack);

/// Reads both files and checks every image_ref against the pack. The
/// environment name is the manifest file stem.
std::pair<DatasetManifest, ImagePack> load_manifest(const std::filesystem::path& manifest_path,
                                                    const std::filesystem::path& pack_path);

/// Writes `<dir>/<name>.csv` and `<dir>/<name>.xrpk`.
void save_environment(const std::filesystem::path& dir, const Environment& env);
Environment load_environment(const std::filesystem::path& dir, const std::string& name);

// ---- manifest operations --------------------------------------------------

/// First `n` records in original order. Requires 0 < n <= size.
DatasetManifest subset_sequential(const DatasetManifest& manifest, std::size_t n);
Environment subset_sequential(const Environment& env, std::size_t n);

std::vector<ClassCount> class_counts(const DatasetManifest& manifest);

// ---- synthetic distribution-shift generator -------------------------------

struct SynthConfig {
  std::size_t n_envs = 4;
  std::size_t n_per_env = 1000;
  std::size_t image_size = 16;
  double core_strength = 0.6;
  std::vector<double> spurious_strength{0.8, -0.8, 0.8, -0.8};
  double noise_std = 0.05;
  double missing_rate = 0.1;
  std::uint64_t seed = 0;
  TaskSet tasks;
  /// Per-task positive rate. Empty means the built-in default for each task.
  std::vector<double> prevalence;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

/// Image layout (S = image_size, q = S/4):
///   task t owns the core blob at quadrant t of the centre square [q, 3q)^2
///   and the corner patch of side q at corner t (TL, TR, BL, BR).
/// For each image and task a latent z = r*s + sqrt(1 - r^2)*u is drawn, with
/// s = +-1 the true label and u ~ N(0, 1); the region intensity is
/// 0.5 + 0.2*z plus per-pixel noise. Core uses r = core_strength in every
/// environment; corners use that environment's spurious_strength.
/// Environments are named e0, e1, ...
std::vector<Environment> generate_synthetic(const SynthConfig& cfg);

/// Pixel boxes used by the generator, exposed for probes and tests.
struct PixelBox {
  std::size_t row0, col0, rows, cols;
};
PixelBox core_region(std::size_t image_size, std::size_t task);
PixelBox corner_region(std::size_t image_size, std::size_t task);

/// Mean pixel value (0..255) of `box` in image `i` of `pack`.
double region_mean(const ImagePack& pack, std::size_t i, const PixelBox& box);

}  // namespace oodbatch
