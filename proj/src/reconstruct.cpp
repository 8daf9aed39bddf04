#include "freescan/reconstruct.hpp"

namespace freescan::reconstruct {

std::vector<int> chain_schedule(int scan_len, int seq_len,
                                sampling::PairIndex main) {
  if (seq_len < 2 || !(1 <= main.i && main.i < main.j && main.j <= seq_len)) {
    throw ConfigError("chain_schedule: invalid sequence configuration");
  }
  if (scan_len < seq_len) {
    throw DataError("chain_schedule: scan of " + std::to_string(scan_len) +
                    " frames is shorter than the sequence length " +
                    std::to_string(seq_len));
  }
  const int step = main.j - main.i;
  std::vector<int> starts;
  for (int s = 1; s + seq_len - 1 <= scan_len; s += step) starts.push_back(s);
  return starts;
}

ReconstructedScan reconstruct_from_predictions(
    const dataio::Scan& scan, int seq_len, sampling::PairIndex main,
    const std::vector<geometry::RigidTransform>& main_predictions,
    const std::string& model_ref) {
  const int scan_len = static_cast<int>(scan.n_frames());
  const auto schedule = chain_schedule(scan_len, seq_len, main);
  if (main_predictions.size() != schedule.size()) {
    throw DataError("reconstruct: prediction count does not match schedule");
  }
  ReconstructedScan rec;
  rec.reference_index = schedule.front() + main.i - 1;
  rec.interval = main.j - main.i;
  rec.n_frames_total = scan_len;
  rec.model_ref = model_ref;
  rec.scan_ref = scan.id();

  geometry::RigidTransform from_ref;  // identity at the reference frame
  for (std::size_t n = 0; n < schedule.size(); ++n) {
    // Prediction maps frame-i* coordinates into frame-j* coordinates; the
    // localized pose of j* in reference space therefore composes with the
    // inverse.
    from_ref =
        geometry::compose(from_ref, geometry::inverse(main_predictions[n]));
    if (from_ref.orthonormality_error() > 1e-12) {
      from_ref = from_ref.orthonormalized();
    }
    rec.frame_indices.push_back(schedule[n] + main.j - 1);
    rec.transforms_from_ref.push_back(from_ref);
  }
  rec.n_unlocalized_tail = scan_len - rec.frame_indices.back();
  return rec;
}

template <class S>
ReconstructedScan run_model(const model::ModelConfig& cfg,
                            const model::Params<S>& params,
                            const sampling::TaskSet& tasks,
                            const dataio::Scan& scan,
                            const std::string& model_ref) {
  const auto schedule = chain_schedule(static_cast<int>(scan.n_frames()),
                                       cfg.seq_len, cfg.main_pair);
  const auto samples =
      sampling::sequences_at(scan, cfg.seq_len, cfg.main_pair, schedule);
  const auto preds = model::predict(cfg, params, tasks, samples);
  std::vector<geometry::RigidTransform> mains;
  mains.reserve(preds.size());
  for (const auto& p : preds) {
    mains.push_back(geometry::pose_to_transform(p.poses[0]));
  }
  return reconstruct_from_predictions(scan, cfg.seq_len, cfg.main_pair, mains,
                                      model_ref);
}

template ReconstructedScan run_model<float>(const model::ModelConfig&,
                                            const model::Params<float>&,
                                            const sampling::TaskSet&,
                                            const dataio::Scan&,
                                            const std::string&);
template ReconstructedScan run_model<double>(const model::ModelConfig&,
                                             const model::Params<double>&,
                                             const sampling::TaskSet&,
                                             const dataio::Scan&,
                                             const std::string&);

std::vector<geometry::RigidTransform> gt_chain(const dataio::Scan& scan,
                                               const ReconstructedScan& rec) {
  if (rec.reference_index < 1 ||
      rec.reference_index > static_cast<int>(scan.n_frames())) {
    throw DataError("gt_chain: reference index out of range");
  }
  const geometry::RigidTransform ref_inv = geometry::inverse(
      scan.world_from_tool[static_cast<std::size_t>(rec.reference_index - 1)]);
  std::vector<geometry::RigidTransform> chain;
  chain.reserve(rec.frame_indices.size());
  for (int idx : rec.frame_indices) {
    if (idx < 1 || idx > static_cast<int>(scan.n_frames())) {
      throw DataError("gt_chain: localized frame index out of range");
    }
    chain.push_back(geometry::compose(
        ref_inv, scan.world_from_tool[static_cast<std::size_t>(idx - 1)]));
  }
  return chain;
}

void export_trajectory(const ReconstructedScan& rec, const dataio::Scan& scan,
                       const std::filesystem::path& path) {
  if (rec.frame_indices.empty()) {
    throw DataError("export_trajectory: empty reconstruction");
  }
  if (rec.frame_indices.size() != rec.transforms_from_ref.size()) {
    throw DataError("export_trajectory: malformed reconstruction");
  }
  dataio::json j;
  j["format_version"] = "1.0";
  j["kind"] = "trajectory";
  j["model_ref"] = rec.model_ref;
  j["scan_ref"] = rec.scan_ref;
  j["reference_index"] = rec.reference_index;
  j["interval"] = rec.interval;
  j["n_frames_total"] = rec.n_frames_total;
  j["n_unlocalized_tail"] = rec.n_unlocalized_tail;
  j["frame_indices"] = rec.frame_indices;
  dataio::json tfs = dataio::json::array();
  for (const auto& t : rec.transforms_from_ref) {
    tfs.push_back(dataio::transform_to_json(t));
  }
  j["transforms_from_ref"] = tfs;

  // Corner polyline in reference tool space, 4 points per localized frame,
  // ready for external plotting.
  const geometry::PointSet corners = geometry::corner_points(
      scan.width(), scan.height(), scan.pixel_spacing);
  dataio::json poly = dataio::json::array();
  for (const auto& t : rec.transforms_from_ref) {
    const geometry::PointSet pts =
        geometry::apply(geometry::compose(t, scan.calib), corners);
    for (const auto& p : pts.points) {
      poly.push_back({p[0], p[1], p[2]});
    }
  }
  j["corner_polyline"] = poly;
  dataio::write_json_file(path, j);
}

ReconstructedScan import_trajectory(const std::filesystem::path& path) {
  const auto j = dataio::read_json_file(path);
  if (j.value("kind", "") != "trajectory") {
    throw DataError("not a trajectory file: " + path.string());
  }
  ReconstructedScan rec;
  rec.model_ref = j.at("model_ref").get<std::string>();
  rec.scan_ref = j.at("scan_ref").get<std::string>();
  rec.reference_index = j.at("reference_index").get<int>();
  rec.interval = j.at("interval").get<int>();
  rec.n_frames_total = j.at("n_frames_total").get<int>();
  rec.n_unlocalized_tail = j.at("n_unlocalized_tail").get<int>();
  rec.frame_indices = j.at("frame_indices").get<std::vector<int>>();
  for (const auto& t : j.at("transforms_from_ref")) {
    rec.transforms_from_ref.push_back(dataio::transform_from_json(t));
  }
  if (rec.frame_indices.size() != rec.transforms_from_ref.size()) {
    throw DataError("trajectory file is internally inconsistent");
  }
  return rec;
}

}  // namespace freescan::reconstruct
