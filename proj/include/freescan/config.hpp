#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "freescan/dataio.hpp"
#include "freescan/metrics.hpp"
#include "freescan/model.hpp"
#include "freescan/reconstruct.hpp"
#include "freescan/simulator.hpp"

namespace freescan::config {

using json = dataio::json;

struct SimulateConfig {
  int n_subjects = 8;
  int scans_per_subject = 6;
  int n_frames = 100;
  double length_min_mm = 100.0;
  double length_max_mm = 150.0;
  std::vector<std::string> shapes = {"line", "c_shape", "s_shape"};
  std::vector<std::string> orientations = {"perpendicular", "parallel"};
  double turn_deg = 90.0;
  double noise_translation_mm = 0.0;
  double noise_rotation_rad = 0.0;
  simulator::DatasetOptions options;
};

json simulate_config_to_json(const SimulateConfig& cfg);
SimulateConfig simulate_config_from_json(const json& j);

struct SplitConfig {
  std::array<double, 3> ratios = {3.0, 1.0, 1.0};
};

/// The full run configuration: one seed drives simulation, splitting and
/// training unless a section overrides it.
struct RunConfig {
  std::uint64_t seed = 0;
  SimulateConfig simulate;
  SplitConfig split;
  model::TrainConfig train;
  // evaluation options
  int pixel_stride = 4;
  double voxel_mm = 1.0;
  std::string dice_scans = "all";  // all | perpendicular | parallel

  void validate() const;
};

json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const json& j);

/// Cartesian shape x orientation cycle with per-scan lengths drawn from
/// [length_min, length_max]; deterministic per seed.
std::vector<dataio::Scan> run_simulation(const SimulateConfig& cfg,
                                         std::uint64_t seed);

struct Dataset {
  std::vector<dataio::Scan> scans;
  dataio::DatasetSplit split;

  std::vector<const dataio::Scan*> select(
      const std::vector<std::string>& ids) const;
};

std::string scan_dir_name(const dataio::Scan& scan);

void write_dataset(const std::filesystem::path& root,
                   const std::vector<dataio::Scan>& scans,
                   const dataio::DatasetSplit& split);
Dataset load_dataset(const std::filesystem::path& root);

/// Reconstructs every listed scan with the checkpoint's inference
/// parameters and reports the four metrics. Dice is computed only for
/// scans whose orientation matches dice_scans ("all" keeps every scan).
metrics::MetricsReport evaluate_scans(
    const model::Checkpoint& ckpt,
    const std::vector<const dataio::Scan*>& scans, int pixel_stride,
    double voxel_mm, const std::string& dice_scans);

reconstruct::ReconstructedScan reconstruct_with_checkpoint(
    const model::Checkpoint& ckpt, const dataio::Scan& scan);

}  // namespace freescan::config
