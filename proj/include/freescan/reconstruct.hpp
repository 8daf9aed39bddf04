#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "freescan/dataio.hpp"
#include "freescan/geometry.hpp"
#include "freescan/model.hpp"
#include "freescan/sampling.hpp"

namespace freescan::reconstruct {

/// 1-based sequence start indices advancing by (j*-i*) so that each
/// sequence's i*-th frame coincides with the previous sequence's j*-th
/// frame; covers the scan until fewer than seq_len frames remain.
std::vector<int> chain_schedule(int scan_len, int seq_len,
                                sampling::PairIndex main);

struct ReconstructedScan {
  std::vector<int> frame_indices;  // 1-based, step = interval
  std::vector<geometry::RigidTransform> transforms_from_ref;
  int reference_index = 0;  // the first sequence's i*-th frame, identity pose
  int interval = 0;         // j* - i*
  int n_frames_total = 0;
  int n_unlocalized_tail = 0;  // frames after the last localized one
  std::string model_ref;
  std::string scan_ref;
};

/// Folds per-sequence main-pair predictions (aligned with chain_schedule)
/// into poses relative to the initial reference frame. Composed rotations
/// are re-orthonormalized whenever drift exceeds 1e-12 so 400-frame chains
/// stay orthonormal to 1e-9.
ReconstructedScan reconstruct_from_predictions(
    const dataio::Scan& scan, int seq_len, sampling::PairIndex main,
    const std::vector<geometry::RigidTransform>& main_predictions,
    const std::string& model_ref);

/// Runs the model over the scheduled sequences and chains the main-task
/// predictions. Throws DataError when the scan is shorter than seq_len.
template <class S>
ReconstructedScan run_model(const model::ModelConfig& cfg,
                            const model::Params<S>& params,
                            const sampling::TaskSet& tasks,
                            const dataio::Scan& scan,
                            const std::string& model_ref);

/// Ground-truth poses of the localized frames relative to the same
/// reference frame.
std::vector<geometry::RigidTransform> gt_chain(const dataio::Scan& scan,
                                               const ReconstructedScan& rec);

void export_trajectory(const ReconstructedScan& rec, const dataio::Scan& scan,
                       const std::filesystem::path& path);
ReconstructedScan import_trajectory(const std::filesystem::path& path);

}  // namespace freescan::reconstruct
