#include "freescan/losses.hpp"

#include <map>

namespace freescan::losses {

namespace {

geometry::PointSet tool_corners(const geometry::RigidTransform& calib,
                                const geometry::PointSet& corners) {
  return geometry::apply(calib, corners);
}

double pair_point_mse(const geometry::RigidTransform& a,
                      const geometry::RigidTransform& b,
                      const geometry::PointSet& q) {
  return point_mse(geometry::apply(a, q), geometry::apply(b, q));
}

}  // namespace

void LossWeights::validate() const {
  if (multi_task < 0.0 || consistency < 0.0 || accumulated < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (!(multi_task + accumulated > 0.0)) {
    throw ConfigError(
        "at least one supervised loss (multi_task or accumulated) must have "
        "positive weight");
  }
}

double point_mse(const geometry::PointSet& a, const geometry::PointSet& b) {
  if (a.size() != b.size() || a.size() == 0) {
    throw ConfigError("point_mse: point count mismatch");
  }
  double acc = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n) {
    const Eigen::Vector3d d =
        a.points[n].head<3>() - b.points[n].head<3>();
    acc += d.squaredNorm();
  }
  return acc / (3.0 * static_cast<double>(a.size()));
}

std::vector<Triple> enumerate_triples(const sampling::TaskSet& tasks) {
  std::map<std::pair<int, int>, std::size_t> index;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto p = tasks.task(t);
    index.emplace(std::make_pair(p.i, p.j), t);
  }
  std::vector<Triple> out;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto p = tasks.task(t);
    for (int k = p.i + 1; k < p.j; ++k) {
      const auto ik = index.find({p.i, k});
      const auto kj = index.find({k, p.j});
      if (ik != index.end() && kj != index.end()) {
        out.push_back({p.i, k, p.j, ik->second, kj->second, t});
      }
    }
  }
  return out;
}

double multi_task_loss(const PredictionSet& preds,
                       const std::vector<geometry::RigidTransform>& gts,
                       const geometry::RigidTransform& calib,
                       const geometry::PointSet& corners, bool image_space) {
  if (preds.poses.size() != preds.tasks.size() ||
      gts.size() != preds.tasks.size()) {
    throw ConfigError("multi_task_loss: misaligned predictions/ground truth");
  }
  const geometry::PointSet q = tool_corners(calib, corners);
  const geometry::RigidTransform cinv = geometry::inverse(calib);
  double acc = 0.0;
  for (std::size_t t = 0; t < preds.poses.size(); ++t) {
    geometry::RigidTransform pred = geometry::pose_to_transform(preds.poses[t]);
    geometry::RigidTransform gt = gts[t];
    if (image_space) {
      pred = geometry::compose(cinv, pred);
      gt = geometry::compose(cinv, gt);
    }
    acc += pair_point_mse(pred, gt, q);
  }
  return acc / static_cast<double>(preds.poses.size());
}

std::optional<double> consistency_loss(const PredictionSet& preds,
                                       const geometry::RigidTransform& calib,
                                       const geometry::PointSet& corners,
                                       bool image_space) {
  if (preds.poses.size() != preds.tasks.size()) {
    throw ConfigError("consistency_loss: misaligned predictions");
  }
  const auto triples = enumerate_triples(preds.tasks);
  if (triples.empty()) return std::nullopt;
  const geometry::PointSet q = tool_corners(calib, corners);
  const geometry::RigidTransform cinv = geometry::inverse(calib);
  double acc = 0.0;
  for (const auto& tr : triples) {
    geometry::RigidTransform composed = geometry::compose(
        geometry::pose_to_transform(preds.poses[tr.idx_kj]),
        geometry::pose_to_transform(preds.poses[tr.idx_ik]));
    geometry::RigidTransform direct =
        geometry::pose_to_transform(preds.poses[tr.idx_ij]);
    if (image_space) {
      composed = geometry::compose(cinv, composed);
      direct = geometry::compose(cinv, direct);
    }
    acc += pair_point_mse(direct, composed, q);
  }
  return acc / static_cast<double>(triples.size());
}

std::optional<double> accumulated_loss(
    const PredictionSet& preds,
    const std::vector<geometry::RigidTransform>& gts,
    const geometry::RigidTransform& calib, const geometry::PointSet& corners,
    bool image_space) {
  if (preds.poses.size() != preds.tasks.size() ||
      gts.size() != preds.tasks.size()) {
    throw ConfigError("accumulated_loss: misaligned predictions/ground truth");
  }
  const auto triples = enumerate_triples(preds.tasks);
  if (triples.empty()) return std::nullopt;
  const geometry::PointSet q = tool_corners(calib, corners);
  const geometry::RigidTransform cinv = geometry::inverse(calib);
  double acc = 0.0;
  for (const auto& tr : triples) {
    geometry::RigidTransform composed = geometry::compose(
        geometry::pose_to_transform(preds.poses[tr.idx_kj]),
        geometry::pose_to_transform(preds.poses[tr.idx_ik]));
    geometry::RigidTransform gt = gts[tr.idx_ij];
    if (image_space) {
      composed = geometry::compose(cinv, composed);
      gt = geometry::compose(cinv, gt);
    }
    acc += pair_point_mse(gt, composed, q);
  }
  return acc / static_cast<double>(triples.size());
}

double total_loss(const PredictionSet& preds,
                  const std::vector<geometry::RigidTransform>& gts,
                  const geometry::RigidTransform& calib,
                  const geometry::PointSet& corners, const LossWeights& weights,
                  bool image_space) {
  weights.validate();
  double total = 0.0;
  if (weights.multi_task > 0.0) {
    total +=
        weights.multi_task * multi_task_loss(preds, gts, calib, corners,
                                             image_space);
  }
  if (weights.consistency > 0.0) {
    const auto c = consistency_loss(preds, calib, corners, image_space);
    if (!c) {
      throw ConfigError(
          "consistency loss enabled but the task set has no composable "
          "triple");
    }
    total += weights.consistency * *c;
  }
  if (weights.accumulated > 0.0) {
    const auto a = accumulated_loss(preds, gts, calib, corners, image_space);
    if (!a) {
      throw ConfigError(
          "accumulated loss enabled but the task set has no composable "
          "triple");
    }
    total += weights.accumulated * *a;
  }
  return total;
}

// ---- batched differentiable path ----

namespace {

template <class S>
nn::Mat<S> points_as_mat(const geometry::PointSet& pts) {
  nn::Mat<S> m(static_cast<std::int64_t>(pts.size()), 3);
  for (std::size_t n = 0; n < pts.size(); ++n) {
    for (int d = 0; d < 3; ++d) {
      m(static_cast<std::int64_t>(n), d) = static_cast<S>(pts.points[n][d]);
    }
  }
  return m;
}

template <class S>
void write_points_row(nn::Mat<S>& m, std::int64_t row,
                      const geometry::PointSet& pts) {
  for (std::size_t n = 0; n < pts.size(); ++n) {
    for (int d = 0; d < 3; ++d) {
      m(row, static_cast<std::int64_t>(3 * n + d)) =
          static_cast<S>(pts.points[n][d]);
    }
  }
}

template <class S>
nn::Mat<S> tile_rotation(const Eigen::Matrix3d& r, std::int64_t rows) {
  nn::Mat<S> m(rows, 9);
  for (std::int64_t rr = 0; rr < rows; ++rr) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        m(rr, i * 3 + j) = static_cast<S>(r(i, j));
      }
  }
  return m;
}

template <class S>
nn::Mat<S> tile_translation(const Eigen::Vector3d& t, std::int64_t rows) {
  nn::Mat<S> m(rows, 3);
  for (std::int64_t rr = 0; rr < rows; ++rr) {
    for (int d = 0; d < 3; ++d) m(rr, d) = static_cast<S>(t[d]);
  }
  return m;
}

}  // namespace

template <class S>
LossGraph<S> build_loss_graph(
    nn::Tape<S>& tape, typename nn::Tape<S>::Id predictions,
    const sampling::TaskSet& tasks,
    const std::vector<std::vector<geometry::RigidTransform>>& gt_per_sample,
    const geometry::RigidTransform& calib, const geometry::PointSet& corners,
    const LossWeights& weights, bool image_space) {
  weights.validate();
  using Id = typename nn::Tape<S>::Id;
  const std::int64_t batch = static_cast<std::int64_t>(gt_per_sample.size());
  const std::int64_t n_tasks = static_cast<std::int64_t>(tasks.size());
  if (tape.value(predictions).rows != batch ||
      tape.value(predictions).cols != n_tasks * 6) {
    throw NumericalError("build_loss_graph: prediction shape mismatch");
  }
  const geometry::PointSet q = tool_corners(calib, corners);
  const geometry::RigidTransform cinv = geometry::inverse(calib);
  const std::int64_t np = static_cast<std::int64_t>(q.size());
  const std::int64_t rows = batch * n_tasks;

  // Per-(sample, task) pose rows.
  const Id flat = tape.reshape(predictions, rows, 6);
  Id rot = tape.euler_to_rot(tape.slice_cols(flat, 0, 3));
  Id trans = tape.slice_cols(flat, 3, 3);
  if (image_space) {
    const Id cinv_rot = tape.leaf(tile_rotation<S>(cinv.rotation, rows));
    const Id cinv_t = tape.leaf(tile_translation<S>(cinv.translation, rows));
    trans = tape.add(tape.rot_apply(cinv_rot, trans), cinv_t);
    rot = tape.rot_compose(cinv_rot, rot);
  }
  const Id pred_pts = tape.rigid_apply_points(rot, trans, points_as_mat<S>(q));

  // Ground-truth corner targets, constant wrt the parameters.
  nn::Mat<S> gt_pts(rows, 3 * np);
  for (std::int64_t b = 0; b < batch; ++b) {
    if (gt_per_sample[b].size() != tasks.size()) {
      throw ConfigError("build_loss_graph: ground truth misaligned with tasks");
    }
    for (std::int64_t t = 0; t < n_tasks; ++t) {
      geometry::RigidTransform gt = gt_per_sample[b][t];
      if (image_space) gt = geometry::compose(cinv, gt);
      write_points_row(gt_pts, b * n_tasks + t, geometry::apply(gt, q));
    }
  }

  LossGraph<S> graph;
  graph.multi_task = tape.mse(pred_pts, tape.leaf(gt_pts));

  std::vector<Id> parts;
  std::vector<double> part_weights;
  if (weights.multi_task > 0.0) {
    parts.push_back(graph.multi_task);
    part_weights.push_back(weights.multi_task);
  }

  if (weights.wants_triples()) {
    const auto triples = enumerate_triples(tasks);
    if (triples.empty()) {
      throw ConfigError(
          "triple-based loss enabled but the task set has no composable "
          "triple");
    }
    std::vector<std::int64_t> rows_ik, rows_kj, rows_ij;
    rows_ik.reserve(batch * triples.size());
    for (std::int64_t b = 0; b < batch; ++b) {
      for (const auto& tr : triples) {
        rows_ik.push_back(b * n_tasks + static_cast<std::int64_t>(tr.idx_ik));
        rows_kj.push_back(b * n_tasks + static_cast<std::int64_t>(tr.idx_kj));
        rows_ij.push_back(b * n_tasks + static_cast<std::int64_t>(tr.idx_ij));
      }
    }
    const Id rot_ik = tape.gather_rows(rot, rows_ik);
    const Id rot_kj = tape.gather_rows(rot, rows_kj);
    const Id trans_ik = tape.gather_rows(trans, rows_ik);
    const Id trans_kj = tape.gather_rows(trans, rows_kj);
    // T_jk * T_ki: rotate/shift the i->k estimate by the k->j estimate.
    const Id rot_comp = tape.rot_compose(rot_kj, rot_ik);
    const Id trans_comp =
        tape.add(tape.rot_apply(rot_kj, trans_ik), trans_kj);
    const Id comp_pts =
        tape.rigid_apply_points(rot_comp, trans_comp, points_as_mat<S>(q));

    if (weights.consistency > 0.0) {
      graph.consistency =
          tape.mse(comp_pts, tape.gather_rows(pred_pts, rows_ij));
      parts.push_back(graph.consistency);
      part_weights.push_back(weights.consistency);
    }
    if (weights.accumulated > 0.0) {
      nn::Mat<S> gt_rows(static_cast<std::int64_t>(rows_ij.size()), 3 * np);
      for (std::size_t r = 0; r < rows_ij.size(); ++r) {
        gt_rows.map().row(static_cast<std::int64_t>(r)) =
            gt_pts.map().row(rows_ij[r]);
      }
      graph.accumulated = tape.mse(comp_pts, tape.leaf(std::move(gt_rows)));
      parts.push_back(graph.accumulated);
      part_weights.push_back(weights.accumulated);
    }
  }

  graph.total = tape.weighted_sum(parts, part_weights);
  return graph;
}

template LossGraph<float> build_loss_graph<float>(
    nn::Tape<float>&, nn::Tape<float>::Id, const sampling::TaskSet&,
    const std::vector<std::vector<geometry::RigidTransform>>&,
    const geometry::RigidTransform&, const geometry::PointSet&,
    const LossWeights&, bool);
template LossGraph<double> build_loss_graph<double>(
    nn::Tape<double>&, nn::Tape<double>::Id, const sampling::TaskSet&,
    const std::vector<std::vector<geometry::RigidTransform>>&,
    const geometry::RigidTransform&, const geometry::PointSet&,
    const LossWeights&, bool);

}  // namespace freescan::losses
