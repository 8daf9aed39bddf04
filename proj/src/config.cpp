#include "freescan/config.hpp"

#include <algorithm>

namespace freescan::config {

json simulate_config_to_json(const SimulateConfig& cfg) {
  json j;
  j["n_subjects"] = cfg.n_subjects;
  j["scans_per_subject"] = cfg.scans_per_subject;
  j["n_frames"] = cfg.n_frames;
  j["length_min_mm"] = cfg.length_min_mm;
  j["length_max_mm"] = cfg.length_max_mm;
  j["shapes"] = cfg.shapes;
  j["orientations"] = cfg.orientations;
  j["turn_deg"] = cfg.turn_deg;
  j["noise_translation_mm"] = cfg.noise_translation_mm;
  j["noise_rotation_rad"] = cfg.noise_rotation_rad;
  j["width"] = cfg.options.width;
  j["height"] = cfg.options.height;
  j["pixel_spacing"] = cfg.options.pixel_spacing_mm;
  j["fps"] = cfg.options.fps;
  j["band_count"] = cfg.options.band_count;
  j["smoothness_mm"] = cfg.options.smoothness_mm;
  return j;
}

SimulateConfig simulate_config_from_json(const json& j) {
  SimulateConfig cfg;
  cfg.n_subjects = j.value("n_subjects", cfg.n_subjects);
  cfg.scans_per_subject = j.value("scans_per_subject", cfg.scans_per_subject);
  cfg.n_frames = j.value("n_frames", cfg.n_frames);
  cfg.length_min_mm = j.value("length_min_mm", cfg.length_min_mm);
  cfg.length_max_mm = j.value("length_max_mm", cfg.length_max_mm);
  if (j.contains("shapes")) {
    cfg.shapes = j.at("shapes").get<std::vector<std::string>>();
  }
  if (j.contains("orientations")) {
    cfg.orientations = j.at("orientations").get<std::vector<std::string>>();
  }
  cfg.turn_deg = j.value("turn_deg", cfg.turn_deg);
  cfg.noise_translation_mm =
      j.value("noise_translation_mm", cfg.noise_translation_mm);
  cfg.noise_rotation_rad =
      j.value("noise_rotation_rad", cfg.noise_rotation_rad);
  cfg.options.width = j.value("width", cfg.options.width);
  cfg.options.height = j.value("height", cfg.options.height);
  cfg.options.pixel_spacing_mm =
      j.value("pixel_spacing", cfg.options.pixel_spacing_mm);
  cfg.options.fps = j.value("fps", cfg.options.fps);
  cfg.options.band_count = j.value("band_count", cfg.options.band_count);
  cfg.options.smoothness_mm =
      j.value("smoothness_mm", cfg.options.smoothness_mm);
  return cfg;
}

void RunConfig::validate() const {
  if (simulate.n_subjects < 1 || simulate.scans_per_subject < 1 ||
      simulate.n_frames < 2) {
    throw ConfigError("simulate section: counts out of range");
  }
  if (!(simulate.length_min_mm > 0.0) ||
      simulate.length_max_mm < simulate.length_min_mm) {
    throw ConfigError("simulate section: bad length range");
  }
  if (simulate.shapes.empty() || simulate.orientations.empty()) {
    throw ConfigError("simulate section: need at least one shape/orientation");
  }
  for (double r : split.ratios) {
    if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
  }
  if (pixel_stride < 1) throw ConfigError("pixel_stride must be >= 1");
  if (!(voxel_mm > 0.0)) throw ConfigError("voxel_mm must be positive");
  if (dice_scans != "all" && dice_scans != "perpendicular" &&
      dice_scans != "parallel") {
    throw ConfigError("dice_scans must be all|perpendicular|parallel");
  }
}

json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["format_version"] = "1.0";
  j["seed"] = cfg.seed;
  j["simulate"] = simulate_config_to_json(cfg.simulate);
  j["split"] = {{"ratios", cfg.split.ratios}};
  j["train"] = model::train_config_to_json(cfg.train);
  j["evaluate"] = {{"pixel_stride", cfg.pixel_stride},
                   {"voxel_mm", cfg.voxel_mm},
                   {"dice_scans", cfg.dice_scans}};
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("simulate")) {
    cfg.simulate = simulate_config_from_json(j.at("simulate"));
  }
  if (j.contains("split") && j.at("split").contains("ratios")) {
    cfg.split.ratios = j.at("split").at("ratios").get<std::array<double, 3>>();
  }
  if (j.contains("train")) {
    cfg.train = model::train_config_from_json(j.at("train"));
  }
  if (j.contains("evaluate")) {
    const auto& e = j.at("evaluate");
    cfg.pixel_stride = e.value("pixel_stride", cfg.pixel_stride);
    cfg.voxel_mm = e.value("voxel_mm", cfg.voxel_mm);
    cfg.dice_scans = e.value("dice_scans", cfg.dice_scans);
  }
  return cfg;
}

std::vector<dataio::Scan> run_simulation(const SimulateConfig& cfg,
                                         std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x6c65'6e73ULL));
  std::uniform_real_distribution<double> length(cfg.length_min_mm,
                                                cfg.length_max_mm);
  std::vector<simulator::TrajectorySpec> specs;
  const int slots = cfg.n_subjects * cfg.scans_per_subject;
  specs.reserve(static_cast<std::size_t>(slots));
  std::size_t combo = 0;
  for (int k = 0; k < slots; ++k) {
    simulator::TrajectorySpec spec;
    spec.shape = simulator::shape_from_string(
        cfg.shapes[combo % cfg.shapes.size()]);
    spec.orientation = simulator::orientation_from_string(
        cfg.orientations[(combo / cfg.shapes.size()) % cfg.orientations.size()]);
    ++combo;
    spec.length_mm = length(rng);
    spec.n_frames = cfg.n_frames;
    spec.turn_deg = cfg.turn_deg;
    spec.noise_translation_mm = cfg.noise_translation_mm;
    spec.noise_rotation_rad = cfg.noise_rotation_rad;
    specs.push_back(spec);
  }
  return simulator::simulate_dataset(cfg.n_subjects, cfg.scans_per_subject,
                                     specs, seed, cfg.options);
}

std::vector<const dataio::Scan*> Dataset::select(
    const std::vector<std::string>& ids) const {
  std::vector<const dataio::Scan*> out;
  for (const auto& id : ids) {
    const auto it = std::find_if(scans.begin(), scans.end(),
                                 [&](const dataio::Scan& s) {
                                   return s.id() == id;
                                 });
    if (it == scans.end()) {
      throw DataError("split references unknown scan '" + id + "'");
    }
    out.push_back(&*it);
  }
  return out;
}

std::string scan_dir_name(const dataio::Scan& scan) {
  return scan.subject_id + "_" + scan.scan_label;
}

void write_dataset(const std::filesystem::path& root,
                   const std::vector<dataio::Scan>& scans,
                   const dataio::DatasetSplit& split) {
  std::filesystem::create_directories(root / "scans");
  for (const auto& scan : scans) {
    dataio::write_scan(scan, root / "scans" / scan_dir_name(scan));
  }
  dataio::write_json_file(root / "split.json", dataio::split_to_json(split));
}

Dataset load_dataset(const std::filesystem::path& root) {
  Dataset ds;
  for (const auto& dir : dataio::list_scan_dirs(root / "scans")) {
    ds.scans.push_back(dataio::read_scan(dir));
  }
  if (ds.scans.empty()) {
    throw DataError("no scans under " + (root / "scans").string());
  }
  ds.split = dataio::split_from_json(dataio::read_json_file(root / "split.json"));
  return ds;
}

reconstruct::ReconstructedScan reconstruct_with_checkpoint(
    const model::Checkpoint& ckpt, const dataio::Scan& scan) {
  const std::string ref = ckpt.config.model_ref();
  if (ckpt.config.precision == "float64") {
    const auto params = model::cast_params<double>(ckpt.inference_params());
    return reconstruct::run_model(ckpt.config.model, params, ckpt.tasks, scan,
                                  ref);
  }
  const auto params = model::cast_params<float>(ckpt.inference_params());
  return reconstruct::run_model(ckpt.config.model, params, ckpt.tasks, scan,
                                ref);
}

metrics::MetricsReport evaluate_scans(
    const model::Checkpoint& ckpt,
    const std::vector<const dataio::Scan*>& scans, int pixel_stride,
    double voxel_mm, const std::string& dice_scans) {
  metrics::MetricsReport report;
  report.config_ref = ckpt.config.model_ref();
  for (const dataio::Scan* scan : scans) {
    const auto rec = reconstruct_with_checkpoint(ckpt, *scan);
    const auto gt = reconstruct::gt_chain(*scan, rec);
    const geometry::PointSet corners = geometry::corner_points(
        scan->width(), scan->height(), scan->pixel_spacing);

    metrics::ScanMetrics sm;
    // Frame error over the scheduled sequences' main pairs.
    {
      const auto starts = reconstruct::chain_schedule(
          static_cast<int>(scan->n_frames()), ckpt.config.model.seq_len,
          ckpt.config.model.main_pair);
      const auto seqs = sampling::sequences_at(
          *scan, ckpt.config.model.seq_len, ckpt.config.model.main_pair,
          starts);
      sm.frame_err_mm = 0.0;
      std::vector<geometry::RigidTransform> rel;
      rel.reserve(rec.transforms_from_ref.size());
      for (std::size_t n = 0; n < rec.transforms_from_ref.size(); ++n) {
        // Recover the per-sequence relative prediction from the chain.
        const auto& cur = rec.transforms_from_ref[n];
        const auto prev = n == 0 ? geometry::RigidTransform::identity()
                                 : rec.transforms_from_ref[n - 1];
        rel.push_back(geometry::inverse(
            geometry::compose(geometry::inverse(prev), cur)));
      }
      for (std::size_t n = 0; n < seqs.size(); ++n) {
        const auto gt_rel = geometry::ground_truth_relative(
            seqs[n].world_from_tool(ckpt.config.model.main_pair.i),
            seqs[n].world_from_tool(ckpt.config.model.main_pair.j));
        sm.frame_err_mm +=
            metrics::frame_error(rel[n], gt_rel, scan->calib, corners);
      }
      sm.frame_err_mm /= static_cast<double>(seqs.size());
    }

    metrics::PixelGrid grid{scan->width(), scan->height(),
                            scan->pixel_spacing, pixel_stride};
    sm.acc_err_mm =
        metrics::accumulated_error(rec.transforms_from_ref, gt, scan->calib,
                                   grid);
    sm.drift_mm = metrics::final_drift(rec.transforms_from_ref, gt,
                                       scan->calib, corners);
    if (dice_scans == "all" || scan->orientation == dice_scans) {
      sm.dice = metrics::volume_dice(rec.transforms_from_ref, gt, scan->calib,
                                     scan->width(), scan->height(),
                                     scan->pixel_spacing, voxel_mm);
    }
    report.per_scan.emplace_back(scan->id(), sm);
  }
  return report;
}

}  // namespace freescan::config
