#pragma once

#include <functional>
#include <vector>

#include "freescan/dataio.hpp"
#include "freescan/model.hpp"

namespace freescan::train {

using LogFn = std::function<void(const dataio::json&)>;

struct TrainResult {
  model::Checkpoint checkpoint;
  dataio::json history = dataio::json::array();
  bool aborted_non_finite = false;
};

/// Deterministic minibatch training; selects the checkpoint minimizing
/// validation frame error. Pass `resume_from` to continue a run bit-exactly;
/// training proceeds until cfg.steps total steps.
TrainResult train(model::TrainConfig cfg,
                  const std::vector<const dataio::Scan*>& train_scans,
                  const std::vector<const dataio::Scan*>& val_scans,
                  const LogFn& log = {},
                  const model::Checkpoint* resume_from = nullptr);

/// Convenience overload for owned scan lists.
TrainResult train(const model::TrainConfig& cfg,
                  const std::vector<dataio::Scan>& train_scans,
                  const std::vector<dataio::Scan>& val_scans,
                  const LogFn& log = {},
                  const model::Checkpoint* resume_from = nullptr);

/// Validation-style frame error of a parameter set: mean corner error of
/// the main-pair prediction over deterministically scheduled sequences.
double validation_frame_error(
    const model::TrainConfig& cfg,
    const std::vector<std::pair<std::string, nn::Mat<double>>>& params_f64,
    const sampling::TaskSet& tasks,
    const std::vector<const dataio::Scan*>& scans, int max_sequences);

struct GradCheckEntry {
  std::string tensor;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst_rel_err = 0.0;
  bool pass = false;
};

/// Central finite-difference check of every parameter tensor against the
/// tape gradients, in float64, on a tiny model (8x10 frames, M=3, tau=2,
/// hidden 16) with all three losses enabled.
GradCheckReport gradient_check(model::Variant variant, std::uint64_t seed,
                               double tolerance = 1e-4, double fd_eps = 1e-5);

}  // namespace freescan::train
