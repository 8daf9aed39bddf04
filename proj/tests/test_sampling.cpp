#include <doctest.h>

#include <set>

#include "freescan/sampling.hpp"
#include "freescan/simulator.hpp"
#include "support/test_support.hpp"

using namespace freescan;
using namespace freescan::sampling;
namespace ts = freescan::testsupport;

namespace {

dataio::Scan line_scan(int n_frames, double length_mm) {
  simulator::TrajectorySpec spec;
  spec.n_frames = n_frames;
  spec.length_mm = length_mm;
  auto scans = simulator::simulate_dataset(1, 1, {spec}, 3,
                                           {16, 12, 0.5, 20.0, 16, 3.0});
  return std::move(scans[0]);
}

}  // namespace

TEST_SUITE_BEGIN("sampling");

TEST_CASE("enumerate_pairs") {
  CHECK(enumerate_pairs(2) == std::vector<PairIndex>{{1, 2}});
  const auto p5 = enumerate_pairs(5);
  CHECK(p5.size() == 10);
  CHECK(p5.front() == PairIndex{1, 2});
  CHECK(p5[1] == PairIndex{1, 3});
  CHECK(p5.back() == PairIndex{4, 5});
  CHECK(enumerate_pairs(20).size() == 190);  // up to 189 auxiliary tasks
  CHECK_THROWS_AS(enumerate_pairs(1), ConfigError);
}

TEST_CASE("make_task_set basics") {
  const TaskSet empty = make_task_set(2, {1, 2}, 0, 0);
  CHECK(empty.size() == 1);
  CHECK(empty.auxiliary.empty());

  // The paper's T_{10<-6} configuration with tau = 79.
  const TaskSet paper = make_task_set(20, {6, 10}, 79, 1);
  CHECK(paper.size() == 80);
  std::set<std::pair<int, int>> seen;
  seen.insert({paper.main.i, paper.main.j});
  for (const auto& p : paper.auxiliary) {
    CHECK(p.i < p.j);
    CHECK(p.i >= 1);
    CHECK(p.j <= 20);
    CHECK(seen.insert({p.i, p.j}).second);  // distinct, main excluded
  }

  const TaskSet full = make_task_set(5, {2, 4}, 9, 2);
  CHECK(full.auxiliary.size() == 9);  // the full complement of C(5,2)-1

  CHECK_THROWS_AS(make_task_set(5, {2, 4}, 10, 2), ConfigError);
  CHECK_THROWS_AS(make_task_set(5, {4, 2}, 0, 2), ConfigError);
}

TEST_CASE("task sets are deterministic and main-exclusive across seeds") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<int> mdist(2, 12);
    const int m = mdist(rng);
    const auto pairs = enumerate_pairs(m);
    std::uniform_int_distribution<std::size_t> pdist(0, pairs.size() - 1);
    const PairIndex main = pairs[pdist(rng)];
    std::uniform_int_distribution<int> tdist(
        0, static_cast<int>(pairs.size()) - 1);
    const int tau = tdist(rng);
    const std::uint64_t seed = rng();
    const TaskSet a = make_task_set(m, main, tau, seed);
    const TaskSet b = make_task_set(m, main, tau, seed);
    CHECK(a.auxiliary == b.auxiliary);
    std::set<std::pair<int, int>> seen{{main.i, main.j}};
    for (const auto& p : a.auxiliary) {
      CHECK(seen.insert({p.i, p.j}).second);
    }
  }
}

TEST_CASE("sample_sequences start ranges") {
  CHECK(valid_start_count(100, 20) == 81);
  CHECK(valid_start_count(36, 20) == 17);  // the paper's shortest scan
  const auto scan = line_scan(100, 60.0);
  Rng rng(4);
  const auto samples = sample_sequences(scan, 20, {6, 10}, 500, rng);
  CHECK(samples.size() == 500);
  for (const auto& s : samples) {
    CHECK(s.start >= 1);
    CHECK(s.start <= 81);
  }
  // The largest tested sequence length fits.
  const auto long_samples = sample_sequences(scan, 49, {20, 30}, 3, rng);
  CHECK(long_samples.size() == 3);

  const auto tiny = line_scan(10, 9.0);
  CHECK_THROWS_AS(sample_sequences(tiny, 20, {6, 10}, 1, rng), DataError);
}

TEST_CASE("gt_for_tasks on a stationary scan is identity") {
  auto scan = line_scan(12, 11.0);
  for (auto& w : scan.world_from_tool) w = scan.world_from_tool[0];
  const TaskSet tasks = make_task_set(6, {2, 5}, 5, 0);
  const SequenceSample sample{&scan, 3, 6, {2, 5}};
  for (const auto& gt : gt_for_tasks(sample, tasks)) {
    CHECK(ts::transform_diff(gt, geometry::RigidTransform::identity()) <
          1e-12);
  }
}

TEST_CASE("gt_for_tasks matches the compose oracle on a constant-step scan") {
  const auto scan = line_scan(40, 39.0);
  const auto step = geometry::ground_truth_relative(scan.world_from_tool[0],
                                                    scan.world_from_tool[1]);
  TaskSet tasks;
  tasks.seq_len = 5;
  tasks.main = {1, 3};
  tasks.auxiliary = {{1, 2}, {2, 3}, {3, 5}};
  const SequenceSample sample{&scan, 7, 5, {1, 3}};
  const auto gts = gt_for_tasks(sample, tasks);

  // Pair (1,3) spans two steps: exactly step*step by the matrix oracle.
  const Eigen::Matrix4d two = ts::mat4_mul_oracle(step.matrix(), step.matrix());
  CHECK(ts::max_abs_diff(gts[0].matrix(), two) < 1e-9);
  // Adjacent pairs match the simulator's per-step ground truth.
  CHECK(ts::transform_diff(gts[1], step) < 1e-9);
  CHECK(ts::transform_diff(gts[2], step) < 1e-9);
}

TEST_CASE("gt_for_tasks satisfies the composition identity") {
  simulator::TrajectorySpec spec;
  spec.shape = simulator::TrajectoryShape::kCShape;
  spec.n_frames = 30;
  spec.length_mm = 45.0;
  spec.noise_translation_mm = 0.4;
  spec.noise_rotation_rad = 0.02;
  const auto scans = simulator::simulate_dataset(
      1, 1, {spec}, 8, {16, 12, 0.5, 20.0, 16, 3.0});
  const auto& scan = scans[0];

  TaskSet tasks;
  tasks.seq_len = 6;
  tasks.main = {1, 6};
  tasks.auxiliary = {{1, 3}, {3, 6}, {1, 2}, {2, 3}, {3, 4}, {4, 6}};
  const SequenceSample sample{&scan, 11, 6, tasks.main};
  const auto gts = gt_for_tasks(sample, tasks);
  // T_{6<-1} = T_{6<-3} * T_{3<-1}
  CHECK(ts::transform_diff(geometry::compose(gts[2], gts[1]), gts[0]) < 1e-9);
  // T_{3<-1} = T_{3<-2} * T_{2<-1}
  CHECK(ts::transform_diff(geometry::compose(gts[4], gts[3]), gts[1]) < 1e-9);
}

TEST_SUITE_END();
