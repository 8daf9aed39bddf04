#pragma once

#include <optional>
#include <vector>

#include "freescan/geometry.hpp"
#include "freescan/nn/tape.hpp"
#include "freescan/sampling.hpp"

namespace freescan::losses {

struct LossWeights {
  double multi_task = 1.0;
  double consistency = 0.0;
  double accumulated = 0.0;

  /// Supervised weight must be positive to avoid the trivial
  /// all-predictions-agree solution of a consistency-only objective.
  void validate() const;
  bool wants_triples() const { return consistency > 0.0 || accumulated > 0.0; }
};

/// One 6-DoF pose per task, in the frozen task order (main first).
struct PredictionSet {
  std::vector<geometry::Pose6DoF> poses;
  sampling::TaskSet tasks;
};

/// Mean over points and over the 3 coordinates of squared differences (mm^2).
double point_mse(const geometry::PointSet& a, const geometry::PointSet& b);

/// A composable triple within a task set: pairs (i,k), (k,j) and (i,j) all
/// present. Indices are positions in task order.
struct Triple {
  int i = 0, k = 0, j = 0;
  std::size_t idx_ik = 0, idx_kj = 0, idx_ij = 0;
};

std::vector<Triple> enumerate_triples(const sampling::TaskSet& tasks);

/// Average over all tasks of the corner-point MSE between prediction- and
/// ground-truth-transformed tool-space corners.
double multi_task_loss(const PredictionSet& preds,
                       const std::vector<geometry::RigidTransform>& gts,
                       const geometry::RigidTransform& calib,
                       const geometry::PointSet& corners,
                       bool image_space = false);

/// Corner-point disagreement between each direct prediction and the
/// composition through an intermediate frame, averaged over all composable
/// triples. Uses no ground truth. Empty when the task set has no triple.
std::optional<double> consistency_loss(const PredictionSet& preds,
                                       const geometry::RigidTransform& calib,
                                       const geometry::PointSet& corners,
                                       bool image_space = false);

/// Composed prediction vs ground truth of the (i,j) endpoints, averaged over
/// the same triples as consistency_loss.
std::optional<double> accumulated_loss(
    const PredictionSet& preds,
    const std::vector<geometry::RigidTransform>& gts,
    const geometry::RigidTransform& calib, const geometry::PointSet& corners,
    bool image_space = false);

/// Weighted sum of the enabled losses. Throws ConfigError when the weights
/// are invalid or when a triple-based loss is enabled but no triple exists.
double total_loss(const PredictionSet& preds,
                  const std::vector<geometry::RigidTransform>& gts,
                  const geometry::RigidTransform& calib,
                  const geometry::PointSet& corners, const LossWeights& weights,
                  bool image_space = false);

// ---- differentiable batch versions used by the trainer ----

template <class S>
struct LossGraph {
  typename nn::Tape<S>::Id total = -1;
  typename nn::Tape<S>::Id multi_task = -1;
  typename nn::Tape<S>::Id consistency = -1;
  typename nn::Tape<S>::Id accumulated = -1;
};

/// Builds the batched loss graph on top of a {B, (tau+1)*6} prediction node.
/// gt_per_sample holds, per batch element, the ground-truth relative
/// transform of every task in task order.
template <class S>
LossGraph<S> build_loss_graph(
    nn::Tape<S>& tape, typename nn::Tape<S>::Id predictions,
    const sampling::TaskSet& tasks,
    const std::vector<std::vector<geometry::RigidTransform>>& gt_per_sample,
    const geometry::RigidTransform& calib, const geometry::PointSet& corners,
    const LossWeights& weights, bool image_space = false);

}  // namespace freescan::losses
