#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "freescan/config.hpp"
#include "freescan/train.hpp"

namespace fs = std::filesystem;
using freescan::dataio::json;

namespace {

std::mutex log_mutex;

void log_line(const json& j) {
  std::lock_guard<std::mutex> lock(log_mutex);
  std::cerr << j.dump() << "\n";
}

fs::path default_out(const std::string& subcommand) {
  const char* root = std::getenv("FREESCAN_OUT_ROOT");
  return fs::path(root ? root : "out") / subcommand;
}

freescan::config::RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return {};
  return freescan::config::run_config_from_json(
      freescan::dataio::read_json_file(path));
}

void persist_resolved(const freescan::config::RunConfig& cfg,
                      const fs::path& out, const std::string& subcommand,
                      const json& extra = json::object()) {
  json j = freescan::config::run_config_to_json(cfg);
  j["subcommand"] = subcommand;
  for (const auto& [k, v] : extra.items()) j[k] = v;
  freescan::dataio::write_json_file(out / "resolved_config.json", j);
}

struct SplitScans {
  std::vector<const freescan::dataio::Scan*> train;
  std::vector<const freescan::dataio::Scan*> validation;
  std::vector<const freescan::dataio::Scan*> test;
};

SplitScans select_splits(const freescan::config::Dataset& ds) {
  return {ds.select(ds.split.train), ds.select(ds.split.validation),
          ds.select(ds.split.test)};
}

int run_simulate(const freescan::config::RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  fs::create_directories(out);
  log_line({{"event", "simulate_start"},
            {"n_subjects", cfg.simulate.n_subjects},
            {"scans_per_subject", cfg.simulate.scans_per_subject}});
  const auto scans = freescan::config::run_simulation(cfg.simulate, cfg.seed);
  std::vector<freescan::dataio::ScanInfo> infos;
  for (const auto& s : scans) infos.push_back({s.subject_id, s.scan_label});
  const auto split =
      freescan::dataio::split_dataset(infos, cfg.split.ratios, cfg.seed);
  freescan::config::write_dataset(out, scans, split);
  persist_resolved(cfg, out, "simulate");
  log_line({{"event", "simulate_done"},
            {"scans", scans.size()},
            {"train", split.train.size()},
            {"validation", split.validation.size()},
            {"test", split.test.size()}});
  return 0;
}

int run_train(freescan::config::RunConfig cfg, const fs::path& data,
              const fs::path& out, const std::string& resume_path) {
  const auto ds = freescan::config::load_dataset(data);
  const auto splits = select_splits(ds);
  fs::create_directories(out);

  std::ofstream history(out / "history.jsonl", std::ios::trunc);
  const auto log = [&history](const json& j) {
    history << j.dump() << "\n";
    log_line(j);
  };

  freescan::model::Checkpoint resume;
  const freescan::model::Checkpoint* resume_ptr = nullptr;
  if (!resume_path.empty()) {
    resume = freescan::model::load_checkpoint(resume_path);
    resume_ptr = &resume;
  }
  const auto result = freescan::train::train(cfg.train, splits.train,
                                             splits.validation, log,
                                             resume_ptr);
  freescan::model::save_checkpoint(result.checkpoint, out / "checkpoint.fsa");
  cfg.train = result.checkpoint.config;
  persist_resolved(cfg, out, "train");
  log_line({{"event", "train_done"},
            {"steps", result.checkpoint.step},
            {"best_val_frame_err", result.checkpoint.best_val_frame_err},
            {"aborted", result.aborted_non_finite}});
  if (result.aborted_non_finite) {
    throw freescan::NumericalError(
        "training diverged; last good checkpoint written");
  }
  return 0;
}

int run_reconstruct(const std::string& model_path, const std::string& scan_dir,
                    const fs::path& out) {
  const auto ckpt = freescan::model::load_checkpoint(model_path);
  const auto scan = freescan::dataio::read_scan(scan_dir);
  const auto rec = freescan::config::reconstruct_with_checkpoint(ckpt, scan);
  fs::create_directories(out);
  freescan::reconstruct::export_trajectory(rec, scan, out / "trajectory.json");
  json resolved = freescan::model::train_config_to_json(ckpt.config);
  resolved["subcommand"] = "reconstruct";
  resolved["scan_ref"] = scan.id();
  freescan::dataio::write_json_file(out / "resolved_config.json", resolved);
  log_line({{"event", "reconstruct_done"},
            {"scan", scan.id()},
            {"localized_frames", rec.frame_indices.size()},
            {"unlocalized_tail", rec.n_unlocalized_tail}});
  return 0;
}

int run_evaluate(freescan::config::RunConfig cfg, const std::string& model_path,
                 const fs::path& data, const std::string& split_name,
                 const fs::path& out, bool export_trajectories) {
  const auto ckpt = freescan::model::load_checkpoint(model_path);
  const auto ds = freescan::config::load_dataset(data);
  const auto splits = select_splits(ds);
  const auto* scans = &splits.test;
  if (split_name == "train") scans = &splits.train;
  if (split_name == "validation") scans = &splits.validation;
  fs::create_directories(out);

  const auto report = freescan::config::evaluate_scans(
      ckpt, *scans, cfg.pixel_stride, cfg.voxel_mm, cfg.dice_scans);
  freescan::dataio::write_json_file(out / "report.json",
                                    freescan::metrics::report_to_json(report));
  freescan::dataio::write_text_file(out / "report.csv",
                                    freescan::metrics::report_to_csv(report));
  if (export_trajectories) {
    fs::create_directories(out / "trajectories");
    for (const auto* scan : *scans) {
      const auto rec =
          freescan::config::reconstruct_with_checkpoint(ckpt, *scan);
      freescan::reconstruct::export_trajectory(
          rec, *scan,
          out / "trajectories" /
              (freescan::config::scan_dir_name(*scan) + ".json"));
    }
  }
  cfg.train = ckpt.config;
  persist_resolved(cfg, out, "evaluate",
                   {{"split", split_name}, {"model", ckpt.config.model_ref()}});
  const auto fe = report.aggregate_frame_err();
  const auto ae = report.aggregate_acc_err();
  log_line({{"event", "evaluate_done"},
            {"scans", report.per_scan.size()},
            {"frame_err_mean", fe.mean},
            {"acc_err_mean", ae.mean}});
  return 0;
}

int run_gradcheck(const std::string& variant, std::uint64_t seed,
                  double tolerance, const std::string& out_path) {
  bool all_pass = true;
  json report = json::array();
  std::vector<freescan::model::Variant> variants;
  if (variant == "both" || variant == "feedforward") {
    variants.push_back(freescan::model::Variant::kFeedForward);
  }
  if (variant == "both" || variant == "recurrent") {
    variants.push_back(freescan::model::Variant::kRecurrent);
  }
  if (variants.empty()) {
    throw freescan::ConfigError("variant must be feedforward|recurrent|both");
  }
  for (const auto v : variants) {
    const auto r = freescan::train::gradient_check(v, seed, tolerance);
    all_pass = all_pass && r.pass;
    for (const auto& e : r.entries) {
      const json line{{"event", "gradcheck"},
                      {"variant", freescan::model::to_string(v)},
                      {"tensor", e.tensor},
                      {"max_rel_err", e.max_rel_err},
                      {"max_abs_err", e.max_abs_err}};
      log_line(line);
      report.push_back(line);
    }
    log_line({{"event", "gradcheck_summary"},
              {"variant", freescan::model::to_string(v)},
              {"worst_rel_err", r.worst_rel_err},
              {"pass", r.pass}});
  }
  if (!out_path.empty()) {
    freescan::dataio::write_json_file(out_path, report);
  }
  if (!all_pass) {
    throw freescan::NumericalError("gradient check failed the tolerance");
  }
  return 0;
}

struct SweepRun {
  std::string name;
  std::string axis;
  double value = 0;
  freescan::config::RunConfig cfg;
};

std::vector<SweepRun> expand_sweep(const json& sweep) {
  const auto base = freescan::config::run_config_from_json(sweep.at("base"));
  std::vector<std::string> variants =
      sweep.value("variants", std::vector<std::string>{"feedforward"});
  std::vector<std::uint64_t> seeds =
      sweep.value("seeds", std::vector<std::uint64_t>{base.train.seed});

  std::vector<SweepRun> runs;
  for (const auto& axis : sweep.at("axes")) {
    const auto name = axis.at("name").get<std::string>();
    for (const auto& value : axis.at("values")) {
      const int v = value.get<int>();
      for (const auto& variant : variants) {
        for (const auto seed : seeds) {
          freescan::config::RunConfig cfg = base;
          auto& mc = cfg.train.model;
          mc.variant = freescan::model::variant_from_string(variant);
          cfg.train.seed = seed;
          const int base_interval = mc.main_pair.j - mc.main_pair.i;
          const int base_future = mc.seq_len - mc.main_pair.j;
          if (name == "interval") {
            mc.main_pair.j = mc.main_pair.i + v;
            mc.seq_len = mc.main_pair.j + base_future;
          } else if (name == "past_frames") {
            mc.main_pair.i = v + 1;
            mc.main_pair.j = mc.main_pair.i + base_interval;
            mc.seq_len = mc.main_pair.j + base_future;
          } else if (name == "future_frames") {
            mc.seq_len = mc.main_pair.j + v;
          } else {
            throw freescan::ConfigError("unknown sweep axis '" + name + "'");
          }
          mc.n_aux = std::min<int>(
              mc.n_aux,
              static_cast<int>(freescan::sampling::pair_count(mc.seq_len)) -
                  1);
          SweepRun run;
          run.axis = name;
          run.value = v;
          run.cfg = cfg;
          run.name = name + std::to_string(v) + "_" + variant + "_s" +
                     std::to_string(seed);
          runs.push_back(std::move(run));
        }
      }
    }
  }
  return runs;
}

int run_sweep(const std::string& config_path, const fs::path& data,
              const fs::path& out, int jobs) {
  const auto sweep = freescan::dataio::read_json_file(config_path);
  auto runs = expand_sweep(sweep);
  const auto ds = freescan::config::load_dataset(data);
  const auto splits = select_splits(ds);
  fs::create_directories(out / "runs");

  std::vector<freescan::metrics::MetricsReport> reports(runs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= runs.size()) return;
      const SweepRun& run = runs[k];
      log_line({{"event", "sweep_run_start"}, {"run", run.name}});
      const fs::path run_dir = out / "runs" / run.name;
      fs::create_directories(run_dir);
      const auto result = freescan::train::train(run.cfg.train, splits.train,
                                                 splits.validation);
      freescan::model::save_checkpoint(result.checkpoint,
                                       run_dir / "checkpoint.fsa");
      reports[k] = freescan::config::evaluate_scans(
          result.checkpoint, splits.test, run.cfg.pixel_stride,
          run.cfg.voxel_mm, run.cfg.dice_scans);
      freescan::dataio::write_json_file(
          run_dir / "report.json",
          freescan::metrics::report_to_json(reports[k]));
      json resolved = freescan::config::run_config_to_json(run.cfg);
      resolved["subcommand"] = "sweep_run";
      resolved["axis"] = run.axis;
      resolved["value"] = run.value;
      freescan::dataio::write_json_file(run_dir / "resolved_config.json",
                                        resolved);
      log_line({{"event", "sweep_run_done"}, {"run", run.name}});
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = std::max(1, jobs);
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::ostringstream csv;
  csv.precision(17);
  csv << "axis,value,variant,M,i_star,j_star,tau,seed,"
         "frame_err_mean,frame_err_std,acc_err_mean,acc_err_std,"
         "dice_mean,dice_std,drift_mean,drift_std\n";
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto& mc = runs[k].cfg.train.model;
    const auto fe = reports[k].aggregate_frame_err();
    const auto ae = reports[k].aggregate_acc_err();
    const auto di = reports[k].aggregate_dice();
    const auto dr = reports[k].aggregate_drift();
    csv << runs[k].axis << "," << runs[k].value << ","
        << freescan::model::to_string(mc.variant) << "," << mc.seq_len << ","
        << mc.main_pair.i << "," << mc.main_pair.j << "," << mc.n_aux << ","
        << runs[k].cfg.train.seed << "," << fe.mean << "," << fe.stddev << ","
        << ae.mean << "," << ae.stddev << "," << di.mean << "," << di.stddev
        << "," << dr.mean << "," << dr.stddev << "\n";
  }
  freescan::dataio::write_text_file(out / "sweep.csv", csv.str());
  freescan::dataio::write_json_file(out / "resolved_config.json", sweep);
  log_line({{"event", "sweep_done"}, {"runs", runs.size()}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"freescan: trackerless freehand ultrasound transform "
               "estimation pipeline"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, model_path, scan_dir;
  std::string resume_path, split_name = "test", variant = "both";
  std::string dice_scans;
  std::uint64_t seed = 0;
  bool seed_set = false, export_trajectories = false;
  double tolerance = 1e-4;
  int jobs = 1, pixel_stride = 0;
  double voxel_mm = 0;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim->add_option("--config", config_path, "run-config JSON");
  sim->add_option("--out", out_dir, "output dataset directory");
  sim->add_option("--seed", seed, "override the config seed")
      ->each([&](const std::string&) { seed_set = true; });

  auto* tr = app.add_subcommand("train", "train a model on a dataset");
  tr->add_option("--config", config_path, "run-config JSON");
  tr->add_option("--data", data_dir, "dataset directory")->required();
  tr->add_option("--out", out_dir, "output directory");
  tr->add_option("--resume", resume_path, "checkpoint to resume from");
  tr->add_option("--seed", seed, "override the training seed")
      ->each([&](const std::string&) { seed_set = true; });

  auto* rc =
      app.add_subcommand("reconstruct", "chain predictions over a scan");
  rc->add_option("--model", model_path, "checkpoint path")->required();
  rc->add_option("--scan", scan_dir, "scan directory")->required();
  rc->add_option("--out", out_dir, "output directory");

  auto* ev = app.add_subcommand("evaluate", "reconstruct and report metrics");
  ev->add_option("--config", config_path, "run-config JSON");
  ev->add_option("--model", model_path, "checkpoint path")->required();
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--split", split_name, "train|validation|test");
  ev->add_option("--out", out_dir, "output directory");
  ev->add_option("--pixel-stride", pixel_stride,
                 "pixel grid stride for the accumulated error (1 = exact)");
  ev->add_option("--voxel", voxel_mm, "voxel size (mm) for dice");
  ev->add_option("--dice-scans", dice_scans,
                 "compute dice on all|perpendicular|parallel scans");
  ev->add_flag("--export-trajectories", export_trajectories,
               "also write per-scan trajectory JSON");

  auto* gc = app.add_subcommand("gradcheck",
                                "finite-difference gradient verification");
  gc->add_option("--variant", variant, "feedforward|recurrent|both");
  gc->add_option("--seed", seed, "data/init seed");
  gc->add_option("--tolerance", tolerance, "max relative error");
  gc->add_option("--out", out_dir, "optional report JSON path");

  auto* sw = app.add_subcommand("sweep", "run ablation grids");
  sw->add_option("--config", config_path, "sweep JSON")->required();
  sw->add_option("--data", data_dir, "dataset directory")->required();
  sw->add_option("--out", out_dir, "output directory");
  sw->add_option("--jobs", jobs, "parallel training runs");

  try {
    app.parse(argc, argv);

    if (sim->parsed()) {
      auto cfg = load_run_config(config_path);
      if (seed_set) cfg.seed = seed;
      return run_simulate(cfg, out_dir.empty() ? default_out("simulate")
                                               : fs::path(out_dir));
    }
    if (tr->parsed()) {
      auto cfg = load_run_config(config_path);
      if (seed_set) cfg.train.seed = seed;
      return run_train(cfg, data_dir,
                       out_dir.empty() ? default_out("train")
                                       : fs::path(out_dir),
                       resume_path);
    }
    if (rc->parsed()) {
      return run_reconstruct(model_path, scan_dir,
                             out_dir.empty() ? default_out("reconstruct")
                                             : fs::path(out_dir));
    }
    if (ev->parsed()) {
      auto cfg = load_run_config(config_path);
      if (pixel_stride > 0) cfg.pixel_stride = pixel_stride;
      if (voxel_mm > 0) cfg.voxel_mm = voxel_mm;
      if (!dice_scans.empty()) cfg.dice_scans = dice_scans;
      cfg.validate();
      return run_evaluate(cfg, model_path, data_dir, split_name,
                          out_dir.empty() ? default_out("evaluate")
                                          : fs::path(out_dir),
                          export_trajectories);
    }
    if (gc->parsed()) {
      return run_gradcheck(variant, seed, tolerance, out_dir);
    }
    if (sw->parsed()) {
      return run_sweep(config_path, data_dir,
                       out_dir.empty() ? default_out("sweep")
                                       : fs::path(out_dir),
                       jobs);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    log_line({{"error", {{"type", "config"}, {"message", e.what()}}}});
    return 2;
  } catch (const freescan::ConfigError& e) {
    log_line({{"error", {{"type", "config"}, {"message", e.what()}}}});
    return 2;
  } catch (const freescan::DataError& e) {
    log_line({{"error", {{"type", "data"}, {"message", e.what()}}}});
    return 3;
  } catch (const freescan::NumericalError& e) {
    log_line({{"error", {{"type", "numerical"}, {"message", e.what()}}}});
    return 4;
  } catch (const std::exception& e) {
    log_line({{"error", {{"type", "internal"}, {"message", e.what()}}}});
    return 1;
  }
}
