#include "freescan/train.hpp"

#include <cmath>
#include <sstream>

#include "freescan/metrics.hpp"
#include "freescan/reconstruct.hpp"

namespace freescan::train {

namespace {

void check_dataset(const model::TrainConfig& cfg,
                   const std::vector<const dataio::Scan*>& scans,
                   const char* which) {
  if (scans.empty()) {
    throw DataError(std::string(which) + " dataset is empty");
  }
  const Eigen::Matrix4d calib0 = scans.front()->calib.matrix();
  for (const auto* s : scans) {
    if (static_cast<int>(s->n_frames()) < cfg.model.seq_len) {
      throw DataError("scan '" + s->id() + "' shorter than sequence length");
    }
    if (s->height() != cfg.model.frame_height ||
        s->width() != cfg.model.frame_width) {
      throw DataError("scan '" + s->id() +
                      "' frame size does not match the model configuration");
    }
    if ((s->calib.matrix() - calib0).cwiseAbs().maxCoeff() != 0.0) {
      throw DataError("scans carry different calibrations; train on one rig");
    }
  }
}

std::vector<sampling::SequenceSample> validation_sequences(
    const model::ModelConfig& mc,
    const std::vector<const dataio::Scan*>& scans, int max_sequences) {
  std::vector<sampling::SequenceSample> seqs;
  for (const auto* scan : scans) {
    const auto starts = reconstruct::chain_schedule(
        static_cast<int>(scan->n_frames()), mc.seq_len, mc.main_pair);
    const auto s =
        sampling::sequences_at(*scan, mc.seq_len, mc.main_pair, starts);
    seqs.insert(seqs.end(), s.begin(), s.end());
  }
  if (static_cast<int>(seqs.size()) > max_sequences) {
    // Deterministic even subsample.
    std::vector<sampling::SequenceSample> kept;
    kept.reserve(static_cast<std::size_t>(max_sequences));
    const double stride =
        static_cast<double>(seqs.size()) / static_cast<double>(max_sequences);
    for (int k = 0; k < max_sequences; ++k) {
      kept.push_back(seqs[static_cast<std::size_t>(k * stride)]);
    }
    seqs = std::move(kept);
  }
  return seqs;
}

template <class S>
double frame_error_of_params(const model::ModelConfig& mc,
                             const model::Params<S>& params,
                             const sampling::TaskSet& tasks,
                             const std::vector<sampling::SequenceSample>& seqs) {
  if (seqs.empty()) throw DataError("no validation sequences");
  const auto preds = model::predict(mc, params, tasks, seqs);
  double acc = 0.0;
  for (std::size_t k = 0; k < seqs.size(); ++k) {
    const auto& scan = *seqs[k].scan;
    const geometry::PointSet corners = geometry::corner_points(
        scan.width(), scan.height(), scan.pixel_spacing);
    const auto gt = geometry::ground_truth_relative(
        seqs[k].world_from_tool(tasks.main.i),
        seqs[k].world_from_tool(tasks.main.j));
    acc += metrics::frame_error(geometry::pose_to_transform(preds[k].poses[0]),
                                gt, scan.calib, corners);
  }
  return acc / static_cast<double>(seqs.size());
}

template <class S>
TrainResult train_impl(const model::TrainConfig& cfg,
                       const std::vector<const dataio::Scan*>& train_scans,
                       const std::vector<const dataio::Scan*>& val_scans,
                       const LogFn& log,
                       const model::Checkpoint* resume_from) {
  const model::ModelConfig& mc = cfg.model;
  const geometry::RigidTransform calib = train_scans.front()->calib;
  const geometry::PointSet corners = geometry::corner_points(
      mc.frame_width, mc.frame_height, train_scans.front()->pixel_spacing);

  sampling::TaskSet tasks;
  model::Params<S> params;
  model::AdamState<S> adam;
  Rng data_rng(mix_seed(cfg.seed, 0x6461'7461ULL));
  int start_step = 0;

  TrainResult result;
  if (resume_from) {
    tasks = resume_from->tasks;
    params = model::cast_params<S>(resume_from->params);
    adam.m.clear();
    adam.v.clear();
    for (const auto& [name, m] : resume_from->adam_m) {
      adam.m.push_back(m.template cast<S>());
    }
    for (const auto& [name, m] : resume_from->adam_v) {
      adam.v.push_back(m.template cast<S>());
    }
    adam.step = resume_from->adam_step_count;
    std::istringstream ss(resume_from->data_rng_state);
    ss >> data_rng;
    start_step = resume_from->step;
    result.checkpoint = *resume_from;
  } else {
    // Auxiliary tasks are sampled once per model; the output head layout is
    // frozen here and stored in the checkpoint.
    tasks = sampling::make_task_set(mc.seq_len, mc.main_pair, mc.n_aux,
                                    cfg.seed);
    params = model::init_params<S>(mc, cfg.seed);
    result.checkpoint.tasks = tasks;
  }
  result.checkpoint.config = cfg;

  // Fail fast when a triple-based loss cannot be computed for this task set.
  if (cfg.loss_weights.wants_triples() &&
      losses::enumerate_triples(tasks).empty()) {
    throw ConfigError(
        "consistency/accumulated loss enabled but the task set has no "
        "composable triple");
  }

  const std::int64_t px =
      static_cast<std::int64_t>(mc.frame_height) * mc.frame_width;
  const auto val_seqs =
      validation_sequences(mc, val_scans, cfg.val_max_sequences);

  auto snapshot = [&](int step) {
    result.checkpoint.params = model::params_to_f64(params);
    result.checkpoint.adam_m.clear();
    result.checkpoint.adam_v.clear();
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
      result.checkpoint.adam_m.emplace_back(
          params.tensors[k].first,
          adam.m.empty() ? nn::Mat<double>::zeros(params.tensors[k].second.rows,
                                                  params.tensors[k].second.cols)
                         : adam.m[k].template cast<double>());
      result.checkpoint.adam_v.emplace_back(
          params.tensors[k].first,
          adam.v.empty() ? nn::Mat<double>::zeros(params.tensors[k].second.rows,
                                                  params.tensors[k].second.cols)
                         : adam.v[k].template cast<double>());
    }
    result.checkpoint.adam_step_count = adam.step;
    result.checkpoint.step = step;
    std::ostringstream ss;
    ss << data_rng;
    result.checkpoint.data_rng_state = ss.str();
  };

  auto validate_now = [&]() {
    const double err = frame_error_of_params(mc, params, tasks, val_seqs);
    if (err < result.checkpoint.best_val_frame_err) {
      result.checkpoint.best_val_frame_err = err;
      result.checkpoint.best_params = model::params_to_f64(params);
      result.checkpoint.has_best = true;
    }
    return err;
  };

  std::uniform_int_distribution<std::size_t> pick_scan(0,
                                                       train_scans.size() - 1);
  for (int step = start_step + 1; step <= cfg.steps; ++step) {
    // Assemble the minibatch.
    nn::Mat<S> frames(static_cast<std::int64_t>(cfg.batch_size) * mc.seq_len,
                      px);
    std::vector<std::vector<geometry::RigidTransform>> gt_per_sample(
        static_cast<std::size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      const dataio::Scan& scan = *train_scans[pick_scan(data_rng)];
      const int n_starts = sampling::valid_start_count(
          static_cast<int>(scan.n_frames()), mc.seq_len);
      std::uniform_int_distribution<int> pick_start(1, n_starts);
      const sampling::SequenceSample sample{&scan, pick_start(data_rng),
                                            mc.seq_len, mc.main_pair};
      gt_per_sample[static_cast<std::size_t>(b)] =
          sampling::gt_for_tasks(sample, tasks);
      for (int m = 1; m <= mc.seq_len; ++m) {
        const auto& fpix = sample.frame(m).pixels;
        S* row = &frames.v[(static_cast<std::size_t>(b) * mc.seq_len + m - 1) *
                           px];
        for (std::int64_t i = 0; i < px; ++i) row[i] = static_cast<S>(fpix[i]);
      }
    }

    double loss_val = 0.0, mt_val = 0.0, cons_val = 0.0, acc_val = 0.0;
    double grad_norm = 0.0;
    try {
      nn::Tape<S> tape;
      const auto fwd = model::forward(tape, mc, params, std::move(frames),
                                      /*with_grad=*/true);
      const auto lg = losses::build_loss_graph(
          tape, fwd.output, tasks, gt_per_sample, calib, corners,
          cfg.loss_weights, cfg.loss_in_image_space);
      loss_val = static_cast<double>(tape.value(lg.total)(0, 0));
      mt_val = static_cast<double>(tape.value(lg.multi_task)(0, 0));
      if (lg.consistency >= 0) {
        cons_val = static_cast<double>(tape.value(lg.consistency)(0, 0));
      }
      if (lg.accumulated >= 0) {
        acc_val = static_cast<double>(tape.value(lg.accumulated)(0, 0));
      }
      if (!std::isfinite(loss_val)) {
        throw NumericalError("non-finite loss");
      }
      tape.backward(lg.total);
      std::vector<nn::Mat<S>> grads;
      grads.reserve(fwd.param_ids.size());
      for (auto id : fwd.param_ids) grads.push_back(tape.grad(id));
      grad_norm = model::global_grad_norm(grads);
      if (!std::isfinite(grad_norm)) {
        throw NumericalError("non-finite gradient");
      }
      if (cfg.grad_clip > 0.0 && grad_norm > cfg.grad_clip) {
        const S sc = static_cast<S>(cfg.grad_clip / grad_norm);
        for (auto& g : grads) g.map() *= sc;
      }
      model::adam_step(params, grads, adam, cfg.learning_rate);
    } catch (const NumericalError& e) {
      // Divergence: stop and hand back the last good state.
      result.aborted_non_finite = true;
      snapshot(step - 1);
      dataio::json entry{{"step", step}, {"event", "aborted"},
                         {"reason", e.what()}};
      result.history.push_back(entry);
      if (log) log(entry);
      return result;
    }

    const bool do_val = step % cfg.val_interval == 0 || step == cfg.steps;
    dataio::json entry{{"step", step},
                       {"loss", loss_val},
                       {"multi_task", mt_val},
                       {"consistency", cons_val},
                       {"accumulated", acc_val},
                       {"grad_norm", grad_norm}};
    if (do_val) {
      const double err = validate_now();
      entry["val_frame_err"] = err;
      entry["best_val_frame_err"] = result.checkpoint.best_val_frame_err;
    }
    result.history.push_back(entry);
    if (log) log(entry);
  }

  snapshot(cfg.steps);
  return result;
}

}  // namespace

TrainResult train(model::TrainConfig cfg,
                  const std::vector<const dataio::Scan*>& train_scans,
                  const std::vector<const dataio::Scan*>& val_scans,
                  const LogFn& log, const model::Checkpoint* resume_from) {
  if (train_scans.empty()) throw DataError("training dataset is empty");
  if (cfg.model.frame_height == 0) {
    cfg.model.frame_height = train_scans.front()->height();
  }
  if (cfg.model.frame_width == 0) {
    cfg.model.frame_width = train_scans.front()->width();
  }
  cfg.validate();
  check_dataset(cfg, train_scans, "train");
  check_dataset(cfg, val_scans, "validation");
  if (resume_from) {
    const auto want = model::train_config_to_json(cfg);
    const auto have = model::train_config_to_json(resume_from->config);
    for (const auto& key : {"variant", "M", "i_star", "j_star", "tau",
                            "frame_height", "frame_width", "encoder",
                            "mlp_hidden", "rnn_hidden", "precision"}) {
      if (want.at(key) != have.at(key)) {
        throw DataError(std::string("resume: checkpoint field '") + key +
                        "' does not match the requested configuration");
      }
    }
  }
  if (cfg.precision == "float64") {
    return train_impl<double>(cfg, train_scans, val_scans, log, resume_from);
  }
  return train_impl<float>(cfg, train_scans, val_scans, log, resume_from);
}

TrainResult train(const model::TrainConfig& cfg,
                  const std::vector<dataio::Scan>& train_scans,
                  const std::vector<dataio::Scan>& val_scans, const LogFn& log,
                  const model::Checkpoint* resume_from) {
  std::vector<const dataio::Scan*> tr, va;
  for (const auto& s : train_scans) tr.push_back(&s);
  for (const auto& s : val_scans) va.push_back(&s);
  return train(cfg, tr, va, log, resume_from);
}

double validation_frame_error(
    const model::TrainConfig& cfg,
    const std::vector<std::pair<std::string, nn::Mat<double>>>& params_f64,
    const sampling::TaskSet& tasks,
    const std::vector<const dataio::Scan*>& scans, int max_sequences) {
  const auto seqs = validation_sequences(cfg.model, scans, max_sequences);
  if (cfg.precision == "float64") {
    return frame_error_of_params(cfg.model,
                                 model::cast_params<double>(params_f64), tasks,
                                 seqs);
  }
  return frame_error_of_params(cfg.model, model::cast_params<float>(params_f64),
                               tasks, seqs);
}

GradCheckReport gradient_check(model::Variant variant, std::uint64_t seed,
                               double tolerance, double fd_eps) {
  model::TrainConfig cfg;
  cfg.model.variant = variant;
  cfg.model.seq_len = 3;
  cfg.model.main_pair = {1, 3};
  cfg.model.n_aux = 2;  // the full complement for M=3: a triple always exists
  cfg.model.frame_height = 8;
  cfg.model.frame_width = 10;
  cfg.model.encoder.channels = {2, 3, 4};
  cfg.model.encoder.pool_grid = 1;
  cfg.model.mlp_hidden = {16, 16};
  cfg.model.rnn_hidden = 16;
  cfg.loss_weights = {1.0, 1.0, 1.0};
  cfg.model.validate();

  const int batch = 2;
  const auto tasks = sampling::make_task_set(cfg.model.seq_len,
                                             cfg.model.main_pair,
                                             cfg.model.n_aux, seed);
  auto params = model::init_params<double>(cfg.model, seed);

  Rng rng(mix_seed(seed, 0x6664'636bULL));
  // Zero-initialized biases leave dead receptive fields exactly on the relu
  // kink, where a two-sided difference is ill-defined; check at a generic
  // point instead.
  std::uniform_real_distribution<double> ubias(-0.05, 0.05);
  for (auto& [name, tensor] : params.tensors) {
    if (name.ends_with(".b")) {
      for (auto& x : tensor.v) x += ubias(rng);
    }
  }
  std::uniform_real_distribution<double> upix(0.0, 1.0);
  std::uniform_real_distribution<double> uang(-0.15, 0.15);
  std::uniform_real_distribution<double> uoff(-3.0, 3.0);
  const std::int64_t px = 8 * 10;
  nn::Mat<double> frames(batch * cfg.model.seq_len, px);
  for (auto& x : frames.v) x = upix(rng);
  std::vector<std::vector<geometry::RigidTransform>> gts(batch);
  for (auto& per_task : gts) {
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      geometry::Pose6DoF p;
      p.euler = Eigen::Vector3d(uang(rng), uang(rng), uang(rng));
      p.translation = Eigen::Vector3d(uoff(rng), uoff(rng), uoff(rng));
      per_task.push_back(geometry::pose_to_transform(p));
    }
  }
  geometry::Pose6DoF calib_pose;
  calib_pose.euler = Eigen::Vector3d(0.15, -0.12, 0.18);
  calib_pose.translation = Eigen::Vector3d(12.0, -15.0, 18.0);
  const geometry::RigidTransform calib = geometry::pose_to_transform(calib_pose);
  const geometry::PointSet corners = geometry::corner_points(10, 8, 0.5);

  const auto loss_of = [&](const model::Params<double>& p) {
    nn::Tape<double> tape;
    const auto fwd = model::forward(tape, cfg.model, p, frames, false);
    const auto lg =
        losses::build_loss_graph(tape, fwd.output, tasks, gts, calib, corners,
                                 cfg.loss_weights, false);
    return static_cast<double>(tape.value(lg.total)(0, 0));
  };

  // Analytic gradients.
  nn::Tape<double> tape;
  const auto fwd = model::forward(tape, cfg.model, params, frames, true);
  const auto lg = losses::build_loss_graph(tape, fwd.output, tasks, gts, calib,
                                           corners, cfg.loss_weights, false);
  tape.backward(lg.total);

  GradCheckReport report;
  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    const auto& grad = tape.grad(fwd.param_ids[k]);
    GradCheckEntry entry;
    entry.tensor = params.tensors[k].first;
    auto& tensor = params.tensors[k].second;
    for (std::size_t i = 0; i < tensor.v.size(); ++i) {
      const double keep = tensor.v[i];
      tensor.v[i] = keep + fd_eps;
      const double lp = loss_of(params);
      tensor.v[i] = keep - fd_eps;
      const double lm = loss_of(params);
      tensor.v[i] = keep;
      const double fd = (lp - lm) / (2.0 * fd_eps);
      const double ga = grad.v[i];
      const double abs_err = std::abs(ga - fd);
      // The loss is O(1..100) mm^2, so the finite-difference noise floor is
      // around 1e-9; the 1e-3 floor keeps near-zero entries from turning
      // that noise into spurious relative error.
      const double rel =
          abs_err / std::max({std::abs(ga), std::abs(fd), 1e-3});
      entry.max_abs_err = std::max(entry.max_abs_err, abs_err);
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    report.worst_rel_err = std::max(report.worst_rel_err, entry.max_rel_err);
    report.entries.push_back(entry);
  }
  report.pass = report.worst_rel_err <= tolerance;
  return report;
}

}  // namespace freescan::train
