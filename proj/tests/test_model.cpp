#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "freescan/model.hpp"
#include "freescan/simulator.hpp"
#include "freescan/train.hpp"
#include "support/test_support.hpp"

using namespace freescan;
using namespace freescan::model;
namespace ts = freescan::testsupport;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config(Variant v) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.seq_len = 3;
  cfg.main_pair = {1, 3};
  cfg.n_aux = 2;
  cfg.frame_height = 8;
  cfg.frame_width = 10;
  cfg.encoder.channels = {2, 3, 4};
  cfg.mlp_hidden = {16, 16};
  cfg.rnn_hidden = 16;
  return cfg;
}

nn::Mat<double> random_frames(const ModelConfig& cfg, int batch,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  nn::Mat<double> m(batch * cfg.seq_len,
                    static_cast<std::int64_t>(cfg.frame_height) *
                        cfg.frame_width);
  for (auto& x : m.v) x = u(rng);
  return m;
}

std::vector<dataio::Scan> smoke_dataset() {
  simulator::TrajectorySpec spec;
  spec.n_frames = 40;
  spec.length_mm = 50.0;
  std::vector<simulator::TrajectorySpec> specs;
  for (int k = 0; k < 5; ++k) {
    spec.length_mm = 40.0 + 8.0 * k;  // varied constant velocities
    specs.push_back(spec);
  }
  return simulator::simulate_dataset(1, 5, specs, 99,
                                     {40, 32, 0.5, 20.0, 48, 3.0});
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("output width follows the task count") {
  ModelConfig cfg = tiny_config(Variant::kFeedForward);
  cfg.seq_len = 20;
  cfg.main_pair = {6, 10};
  cfg.n_aux = 79;  // the paper configuration
  cfg.frame_height = 16;
  cfg.frame_width = 16;
  CHECK(cfg.out_dim() == 480);
  const auto params = init_params<double>(cfg, 0);
  nn::Tape<double> tape;
  const auto fr = forward(tape, cfg, params, random_frames(cfg, 1, 1), false);
  CHECK(tape.value(fr.output).rows == 1);
  CHECK(tape.value(fr.output).cols == 480);

  ModelConfig baseline = tiny_config(Variant::kFeedForward);
  baseline.seq_len = 2;
  baseline.main_pair = {1, 2};
  baseline.n_aux = 0;
  CHECK(baseline.out_dim() == 6);
  nn::Tape<double> tape2;
  const auto fr2 = forward(tape2, baseline, init_params<double>(baseline, 0),
                           random_frames(baseline, 2, 2), false);
  CHECK(tape2.value(fr2.output).cols == 6);
}

TEST_CASE("configuration validation") {
  ModelConfig cfg = tiny_config(Variant::kRecurrent);
  cfg.seq_len = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // M >= 2 by definition
  cfg = tiny_config(Variant::kFeedForward);
  cfg.main_pair = {3, 3};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config(Variant::kFeedForward);
  cfg.n_aux = 3;  // C(3,2)-1 = 2
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config(Variant::kRecurrent);
  cfg.rnn_hidden = 1024;  // paper-scale hidden size is accepted
  CHECK_NOTHROW(cfg.validate());
  CHECK_NOTHROW(parameter_shapes(cfg));
}

TEST_CASE("feed-forward output is order-sensitive") {
  const ModelConfig cfg = tiny_config(Variant::kFeedForward);
  const auto params = init_params<double>(cfg, 3);
  nn::Mat<double> frames = random_frames(cfg, 1, 4);
  nn::Mat<double> swapped = frames;
  // Swap frames 1 and 3 of the single sample.
  for (std::int64_t c = 0; c < frames.cols; ++c) {
    std::swap(swapped.v[0 * frames.cols + c], swapped.v[2 * frames.cols + c]);
  }
  nn::Tape<double> t1, t2;
  const auto y1 = t1.value(forward(t1, cfg, params, frames, false).output);
  const auto y2 = t2.value(forward(t2, cfg, params, swapped, false).output);
  double diff = 0;
  for (std::size_t k = 0; k < y1.v.size(); ++k) {
    diff = std::max(diff, std::abs(y1.v[k] - y2.v[k]));
  }
  CHECK(diff > 1e-8);
}

TEST_CASE("recurrent output is order-sensitive and rejects NaN state") {
  const ModelConfig cfg = tiny_config(Variant::kRecurrent);
  auto params = init_params<double>(cfg, 5);
  nn::Mat<double> frames = random_frames(cfg, 1, 6);
  nn::Mat<double> reversed = frames;
  for (std::int64_t c = 0; c < frames.cols; ++c) {
    std::swap(reversed.v[0 * frames.cols + c], reversed.v[2 * frames.cols + c]);
  }
  nn::Tape<double> t1, t2;
  const auto y1 = t1.value(forward(t1, cfg, params, frames, false).output);
  const auto y2 = t2.value(forward(t2, cfg, params, reversed, false).output);
  double diff = 0;
  for (std::size_t k = 0; k < y1.v.size(); ++k) {
    diff = std::max(diff, std::abs(y1.v[k] - y2.v[k]));
  }
  CHECK(diff > 1e-8);

  // Poison one gate weight; the unroll must report the failing step.
  for (auto& [name, tensor] : params.tensors) {
    if (name == "rnn.gates.w") {
      tensor.v[0] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  nn::Tape<double> t3;
  CHECK_THROWS_AS(forward(t3, cfg, params, frames, false), NumericalError);
}

TEST_CASE("zero weights predict the identity transform everywhere") {
  const ModelConfig cfg = tiny_config(Variant::kFeedForward);
  auto params = init_params<double>(cfg, 7);
  for (auto& [name, tensor] : params.tensors) {
    std::fill(tensor.v.begin(), tensor.v.end(), 0.0);
  }
  const auto tasks =
      sampling::make_task_set(cfg.seq_len, cfg.main_pair, cfg.n_aux, 1);

  simulator::TrajectorySpec spec;
  spec.n_frames = 5;
  spec.length_mm = 4.0;
  const auto scans = simulator::simulate_dataset(
      1, 1, {spec}, 2, {10, 8, 0.5, 20.0, 16, 3.0});
  const sampling::SequenceSample sample{&scans[0], 1, 3, cfg.main_pair};
  const auto preds = predict(cfg, params, tasks, {sample});
  REQUIRE(preds.size() == 1);
  for (const auto& pose : preds[0].poses) {
    CHECK(ts::transform_diff(geometry::pose_to_transform(pose),
                             geometry::RigidTransform::identity()) == 0.0);
  }
}

TEST_CASE("gradients match finite differences (both variants)") {
  const auto ff = train::gradient_check(Variant::kFeedForward, 11);
  CHECK(ff.pass);
  CHECK(ff.entries.size() == 12);  // every tensor reported
  const auto rec = train::gradient_check(Variant::kRecurrent, 11);
  CHECK(rec.pass);
  for (const auto& e : rec.entries) {
    CHECK(e.max_rel_err <= 1e-4);
  }
}

TEST_CASE("a task head outside every enabled loss term gets zero gradient") {
  ModelConfig cfg = tiny_config(Variant::kFeedForward);
  cfg.seq_len = 4;
  cfg.main_pair = {1, 4};
  cfg.n_aux = 3;
  const auto params = init_params<double>(cfg, 13);

  // Tasks: (1,4) main, (1,2), (2,4) form a triple with it; (3,4) is in no
  // triple. With multi_task weight zero, its head must receive no gradient.
  sampling::TaskSet tasks;
  tasks.seq_len = 4;
  tasks.main = {1, 4};
  tasks.auxiliary = {{1, 2}, {2, 4}, {3, 4}};

  std::mt19937_64 rng(14);
  std::vector<std::vector<geometry::RigidTransform>> gts(2);
  for (auto& per : gts) {
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      per.push_back(ts::random_transform(rng, 0.3, 5.0));
    }
  }
  nn::Tape<double> tape;
  const auto fwd = forward(tape, cfg, params, random_frames(cfg, 2, 15), true);
  const auto lg = losses::build_loss_graph(
      tape, fwd.output, tasks, gts, ts::random_transform(rng, 0.2, 10.0),
      geometry::corner_points(10, 8, 0.5), {0.0, 1.0, 1.0}, false);
  tape.backward(lg.total);

  // out.w rows are task-major: task t owns rows [6t, 6t+6).
  const auto shapes = parameter_shapes(cfg);
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    if (shapes[k].name != "out.w") continue;
    const auto& g = tape.grad(fwd.param_ids[k]);
    double head3 = 0.0, others = 0.0;
    for (std::int64_t r = 0; r < g.rows; ++r) {
      for (std::int64_t c = 0; c < g.cols; ++c) {
        if (r >= 18 && r < 24) {
          head3 = std::max(head3, std::abs(g(r, c)));
        } else {
          others = std::max(others, std::abs(g(r, c)));
        }
      }
    }
    CHECK(head3 == 0.0);
    CHECK(others > 0.0);
  }
}

TEST_CASE("adam step: zero gradient no-op and first-step closed form") {
  ModelConfig cfg = tiny_config(Variant::kFeedForward);
  auto params = init_params<double>(cfg, 17);
  const auto before = params;
  std::vector<nn::Mat<double>> grads;
  for (const auto& [name, t] : params.tensors) {
    grads.push_back(nn::Mat<double>::zeros(t.rows, t.cols));
  }
  AdamState<double> state;
  adam_step(params, grads, state, 1e-4);
  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    CHECK(params.tensors[k].second.v == before.tensors[k].second.v);
  }

  // First step with nonzero g: delta = lr * g / (|g| + eps), about lr*sign.
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (auto& g : grads) {
    for (auto& x : g.v) x = u(rng) * (u(rng) > 1.25 ? 1.0 : -1.0);
  }
  auto params2 = before;
  AdamState<double> state2;
  const double lr = 1e-4, eps = 1e-8;
  adam_step(params2, grads, state2, lr, 0.9, 0.999, eps);
  for (std::size_t k = 0; k < params2.tensors.size(); ++k) {
    for (std::size_t i = 0; i < params2.tensors[k].second.v.size(); ++i) {
      const double g = grads[k].v[i];
      const double delta =
          params2.tensors[k].second.v[i] - before.tensors[k].second.v[i];
      const double expect = -lr * g / (std::abs(g) + eps);
      CHECK(delta == doctest::Approx(expect).epsilon(1e-12));
      CHECK(std::abs(delta / lr + (g > 0 ? 1.0 : -1.0)) < 1e-6);
    }
  }
  CHECK(state2.step == 1);
}

TEST_CASE("training is deterministic and checkpoints resume bit-exactly") {
  const auto scans = smoke_dataset();
  std::vector<dataio::Scan> train_set(scans.begin(), scans.begin() + 4);
  std::vector<dataio::Scan> val_set(scans.begin() + 4, scans.end());

  TrainConfig cfg;
  cfg.model = tiny_config(Variant::kFeedForward);
  cfg.model.frame_height = 32;
  cfg.model.frame_width = 40;
  cfg.model.encoder.channels = {4, 8, 8};
  cfg.batch_size = 4;
  cfg.steps = 6;
  cfg.val_interval = 3;
  cfg.seed = 5;
  cfg.precision = "float32";

  const auto a = train::train(cfg, train_set, val_set);
  const auto b = train::train(cfg, train_set, val_set);
  CHECK(a.history.dump() == b.history.dump());
  REQUIRE(a.checkpoint.params.size() == b.checkpoint.params.size());
  for (std::size_t k = 0; k < a.checkpoint.params.size(); ++k) {
    CHECK(std::memcmp(a.checkpoint.params[k].second.v.data(),
                      b.checkpoint.params[k].second.v.data(),
                      a.checkpoint.params[k].second.v.size() *
                          sizeof(double)) == 0);
  }

  // Interrupted-and-resumed training equals the uninterrupted run.
  TrainConfig short_cfg = cfg;
  short_cfg.steps = 3;
  auto half = train::train(short_cfg, train_set, val_set);
  const fs::path dir =
      fs::temp_directory_path() / "freescan_tests" / "ckpt";
  fs::create_directories(dir);
  save_checkpoint(half.checkpoint, dir / "half.fsa");
  const auto loaded = load_checkpoint(dir / "half.fsa");
  CHECK(loaded.step == 3);
  auto resumed = train::train(cfg, train_set, val_set, {}, &loaded);
  for (std::size_t k = 0; k < a.checkpoint.params.size(); ++k) {
    CHECK(std::memcmp(a.checkpoint.params[k].second.v.data(),
                      resumed.checkpoint.params[k].second.v.data(),
                      a.checkpoint.params[k].second.v.size() *
                          sizeof(double)) == 0);
  }

  // Corruption and shape mismatch are explicit errors.
  {
    std::fstream f(dir / "half.fsa",
                   std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(0, std::ios::end);
    const auto size = f.tellp();
    f.seekp(static_cast<std::streamoff>(size) - 9);
    const char byte = 0x77;
    f.write(&byte, 1);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "half.fsa"), DataError);

  save_checkpoint(half.checkpoint, dir / "other.fsa");
  auto arch = dataio::read_archive(dir / "other.fsa");
  arch.meta["config"]["tau"] = 1;  // shape-incompatible configuration
  dataio::write_archive(arch, dir / "other.fsa");
  CHECK_THROWS_AS(load_checkpoint(dir / "other.fsa"), DataError);
}

TEST_CASE("tiny model fits a constant-velocity set (loss drops below 10%)") {
  const auto scans = smoke_dataset();
  std::vector<dataio::Scan> train_set(scans.begin(), scans.end());
  std::vector<dataio::Scan> val_set = {scans[0]};

  TrainConfig cfg;
  cfg.model = tiny_config(Variant::kFeedForward);
  cfg.model.frame_height = 32;
  cfg.model.frame_width = 40;
  cfg.model.encoder.channels = {4, 8, 16};
  cfg.model.seq_len = 3;
  cfg.model.main_pair = {1, 3};
  cfg.model.n_aux = 2;
  cfg.batch_size = 8;
  cfg.steps = 2000;
  cfg.val_interval = 500;
  cfg.learning_rate = 3e-4;
  cfg.seed = 1;

  double initial = -1.0, final_loss = -1.0;
  const auto result = train::train(cfg, train_set, val_set);
  for (const auto& e : result.history) {
    if (!e.contains("loss")) continue;
    if (initial < 0) initial = e.at("loss").get<double>();
    final_loss = e.at("loss").get<double>();
  }
  REQUIRE(initial > 0);
  CHECK(final_loss < 0.1 * initial);
  CHECK(!result.aborted_non_finite);
}

TEST_SUITE_END();
