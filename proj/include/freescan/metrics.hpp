#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "freescan/geometry.hpp"

namespace freescan::metrics {

using json = nlohmann::ordered_json;

/// Mean Euclidean distance (mm) over the four tool-space corner points
/// between a predicted and a ground-truth relative transform.
double frame_error(const geometry::RigidTransform& pred,
                   const geometry::RigidTransform& gt,
                   const geometry::RigidTransform& calib,
                   const geometry::PointSet& corners);

struct PixelGrid {
  int width = 0;
  int height = 0;
  double spacing_mm = 0.5;
  int stride = 4;  // 1 = the exact full grid
};

/// Mean Euclidean distance over all (frame, grid pixel) pairs between the
/// predicted and ground-truth chains; both chains are poses of localized
/// frames relative to the same scan reference.
double accumulated_error(
    const std::vector<geometry::RigidTransform>& pred_chain,
    const std::vector<geometry::RigidTransform>& gt_chain,
    const geometry::RigidTransform& calib, const PixelGrid& grid);

/// Dice overlap between the two swept volumes, each approximated by the
/// union of hexahedra spanned by adjacent frame quads, voxelized at
/// voxel_mm. Throws NumericalError for degenerate zero-volume scans.
double volume_dice(const std::vector<geometry::RigidTransform>& pred_chain,
                   const std::vector<geometry::RigidTransform>& gt_chain,
                   const geometry::RigidTransform& calib, int frame_width,
                   int frame_height, double pixel_spacing_mm, double voxel_mm);

/// frame_error evaluated at the final chain element.
double final_drift(const std::vector<geometry::RigidTransform>& pred_chain,
                   const std::vector<geometry::RigidTransform>& gt_chain,
                   const geometry::RigidTransform& calib,
                   const geometry::PointSet& corners);

struct ScanMetrics {
  double frame_err_mm = 0.0;
  double acc_err_mm = 0.0;
  std::optional<double> dice;  // absent when filtered out
  double drift_mm = 0.0;
};

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population
  int count = 0;
};

struct MetricsReport {
  std::vector<std::pair<std::string, ScanMetrics>> per_scan;
  std::string config_ref;

  Aggregate aggregate_frame_err() const;
  Aggregate aggregate_acc_err() const;
  Aggregate aggregate_dice() const;
  Aggregate aggregate_drift() const;
};

json report_to_json(const MetricsReport& report);
std::string report_to_csv(const MetricsReport& report);

}  // namespace freescan::metrics
