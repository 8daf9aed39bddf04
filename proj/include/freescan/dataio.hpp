#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "freescan/geometry.hpp"

namespace freescan::dataio {

using json = nlohmann::ordered_json;

/// One 2D image, float32 intensities in [0,1], row-major.
struct Frame {
  int height = 0;
  int width = 0;
  int index = 0;  // time-step within the scan
  std::vector<float> pixels;

  double timestamp(double fps) const { return index / fps; }
  float at(int row, int col) const { return pixels[row * width + col]; }
};

struct Scan {
  std::vector<Frame> frames;
  std::vector<geometry::RigidTransform> world_from_tool;  // per frame
  geometry::RigidTransform calib;  // image -> tool
  double fps = 20.0;
  double pixel_spacing = 0.5;  // mm/px
  std::string subject_id;
  std::string scan_label;
  // Acquisition metadata carried through for filtering and reports.
  std::string trajectory_shape;  // "line" | "c_shape" | "s_shape" | ""
  std::string orientation;       // "perpendicular" | "parallel" | ""

  int height() const { return frames.empty() ? 0 : frames.front().height; }
  int width() const { return frames.empty() ? 0 : frames.front().width; }
  std::size_t n_frames() const { return frames.size(); }
  std::string id() const { return subject_id + "/" + scan_label; }

  /// Throws DataError on any invariant violation.
  void validate() const;
};

void write_scan(const Scan& scan, const std::filesystem::path& dir);
Scan read_scan(const std::filesystem::path& dir);

/// Lists scan directories (those containing meta.json) directly under root,
/// sorted by name.
std::vector<std::filesystem::path> list_scan_dirs(
    const std::filesystem::path& root);

struct ScanInfo {
  std::string subject_id;
  std::string scan_label;
  std::string id() const { return subject_id + "/" + scan_label; }
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

/// Subject-disjoint split with proportions as close to `ratios` as subject
/// granularity allows; deterministic for a given seed.
DatasetSplit split_dataset(const std::vector<ScanInfo>& scans,
                           const std::array<double, 3>& ratios,
                           std::uint64_t rng_seed);

json split_to_json(const DatasetSplit& split);
DatasetSplit split_from_json(const json& j);

// 4x4 row-major homogeneous serialization shared by every format.
json transform_to_json(const geometry::RigidTransform& t);
geometry::RigidTransform transform_from_json(const json& j);

/// Named binary payloads plus a JSON header, written as one checksummed
/// file. Backing store for model checkpoints and other typed archives.
struct BlobArchive {
  struct Blob {
    std::string dtype;  // "float32" | "float64" | "uint8"
    std::vector<std::int64_t> shape;
    std::vector<std::byte> data;
  };
  json meta;
  std::map<std::string, Blob> blobs;
};

void write_archive(const BlobArchive& a, const std::filesystem::path& path);
BlobArchive read_archive(const std::filesystem::path& path);

// Small file helpers used across modules.
void write_text_file(const std::filesystem::path& path,
                     const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);
json read_json_file(const std::filesystem::path& path);

}  // namespace freescan::dataio
