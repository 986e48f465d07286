#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pinet/image.hpp"
#include "pinet/mesh.hpp"
#include "pinet/pose.hpp"
#include "pinet/render.hpp"

namespace pinet {

inline constexpr int kDatasetVersion = 1;

enum class ImageKind { Mask, Shaded, Both };
ImageKind parse_image_kind(const std::string& s);  // "mask", "shaded", "both"
std::string to_string(ImageKind k);

struct ClassSpec {
  std::string name;
  std::filesystem::path mesh;  // relative paths resolve against the manifest directory
  std::uint64_t cloud_seed = 0;
  int cloud_points = 1000;
  bool cloud_from_vertices = false;
};

struct DatasetRecord {
  std::string id;
  int class_id = 0;
  std::filesystem::path mask;    // relative to the manifest directory
  std::filesystem::path shaded;  // empty when not rendered
  Pose pose;
};

struct DatasetManifest {
  int version = kDatasetVersion;
  std::uint64_t seed = 0;
  ImageKind kind = ImageKind::Mask;
  CameraIntrinsics intrinsics;
  PoseSamplerConfig sampler;
  std::vector<ClassSpec> classes;
  std::vector<DatasetRecord> records;
};

/// JSON Lines: one header object, then one object per record. Floats are
/// written with 17 significant digits.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
/// Parses and checks record-level invariants (canonical quaternions, unique
/// ids, class ids in range). Throws DatasetError naming the record.
DatasetManifest read_manifest(const std::filesystem::path& path);

struct GenerateOptions {
  std::vector<ClassSpec> classes;  // mesh paths as given (copied into out_dir/meshes)
  std::vector<int> counts;         // per class, each >= 1
  PoseSamplerConfig sampler;
  CameraIntrinsics intrinsics;     // render resolution
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  ImageKind kind = ImageKind::Mask;
};

/// Renders every record (record i uses the stream derive_rng(seed, i)),
/// writes PGMs and manifest.jsonl under out_dir. Deterministic for a fixed
/// seed.
DatasetManifest generate_dataset(const GenerateOptions& opts);

/// Everything needed for training/evaluation, held in memory.
struct Dataset {
  DatasetManifest manifest;
  std::filesystem::path root;  // manifest directory
  std::vector<TriangleMesh> meshes;
  std::vector<Eigen::Matrix3Xd> clouds;  // loss cloud per class
  std::vector<MaskImage> masks;
  std::vector<GrayImage> shaded;  // empty unless the dataset has shaded images

  std::size_t size() const { return manifest.records.size(); }
  int num_classes() const { return static_cast<int>(manifest.classes.size()); }
  bool has_shaded() const { return !shaded.empty(); }
};

/// Loads the manifest, every image and regenerates the loss clouds. Throws
/// DatasetError (missing files, bad records) or FormatError.
std::shared_ptr<const Dataset> load_dataset(const std::filesystem::path& manifest_path);

/// An ordered subset of a loaded dataset.
struct DatasetView {
  std::shared_ptr<const Dataset> data;
  std::vector<std::size_t> indices;

  static DatasetView all(std::shared_ptr<const Dataset> d);
  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
  const DatasetRecord& record(std::size_t i) const { return data->manifest.records[indices[i]]; }
  /// First n records of every class, in manifest order.
  DatasetView first_per_class(std::size_t n) const;
  DatasetView shuffled(std::uint64_t seed) const;
};

/// Per-class stratified, disjoint and exhaustive; train gets
/// round(fraction * n_c) records of class c, clamped to [1, n_c - 1].
/// Throws DatasetError if a class has fewer than 2 records.
std::pair<DatasetView, DatasetView> split(const DatasetView& view, double train_fraction, std::uint64_t seed);

}  // namespace pinet
