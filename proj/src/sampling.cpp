#include "freescan/sampling.hpp"

#include <algorithm>

namespace freescan::sampling {

std::vector<PairIndex> enumerate_pairs(int seq_len) {
  if (seq_len < 2) throw ConfigError("enumerate_pairs: need seq_len >= 2");
  std::vector<PairIndex> pairs;
  pairs.reserve(static_cast<std::size_t>(pair_count(seq_len)));
  for (int i = 1; i < seq_len; ++i) {
    for (int j = i + 1; j <= seq_len; ++j) pairs.push_back({i, j});
  }
  return pairs;
}

TaskSet make_task_set(int seq_len, PairIndex main, int n_aux,
                      std::uint64_t rng_seed) {
  if (!(1 <= main.i && main.i < main.j && main.j <= seq_len)) {
    throw ConfigError("make_task_set: main pair out of range");
  }
  auto pool = enumerate_pairs(seq_len);
  pool.erase(std::find(pool.begin(), pool.end(), main));
  if (n_aux < 0 || static_cast<std::size_t>(n_aux) > pool.size()) {
    throw ConfigError("make_task_set: tau must be in [0, C(M,2)-1]");
  }
  Rng rng(mix_seed(rng_seed, 0x7461'736bULL));
  // Partial Fisher-Yates: first n_aux entries are a uniform sample
  // without replacement, in sampled order.
  for (int k = 0; k < n_aux; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  TaskSet ts;
  ts.seq_len = seq_len;
  ts.main = main;
  ts.auxiliary.assign(pool.begin(), pool.begin() + n_aux);
  return ts;
}

namespace {

void check_sample_args(const dataio::Scan& scan, int seq_len, PairIndex main) {
  if (seq_len < 2) throw ConfigError("sequence length must be >= 2");
  if (!(1 <= main.i && main.i < main.j && main.j <= seq_len)) {
    throw ConfigError("main pair out of range for sequence length");
  }
  if (static_cast<int>(scan.n_frames()) < seq_len) {
    throw DataError("scan '" + scan.id() + "' has " +
                    std::to_string(scan.n_frames()) +
                    " frames, shorter than sequence length " +
                    std::to_string(seq_len));
  }
}

}  // namespace

std::vector<SequenceSample> sample_sequences(const dataio::Scan& scan,
                                             int seq_len, PairIndex main,
                                             int count, Rng& rng) {
  check_sample_args(scan, seq_len, main);
  const int n_starts =
      valid_start_count(static_cast<int>(scan.n_frames()), seq_len);
  std::uniform_int_distribution<int> pick(1, n_starts);
  std::vector<SequenceSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    out.push_back({&scan, pick(rng), seq_len, main});
  }
  return out;
}

std::vector<SequenceSample> sequences_at(const dataio::Scan& scan, int seq_len,
                                         PairIndex main,
                                         const std::vector<int>& starts) {
  check_sample_args(scan, seq_len, main);
  const int n_starts =
      valid_start_count(static_cast<int>(scan.n_frames()), seq_len);
  std::vector<SequenceSample> out;
  out.reserve(starts.size());
  for (int s : starts) {
    if (s < 1 || s > n_starts) {
      throw DataError("sequence start " + std::to_string(s) +
                      " out of range 1.." + std::to_string(n_starts));
    }
    out.push_back({&scan, s, seq_len, main});
  }
  return out;
}

std::vector<geometry::RigidTransform> gt_for_tasks(const SequenceSample& sample,
                                                   const TaskSet& tasks) {
  if (tasks.seq_len != sample.seq_len) {
    throw ConfigError("task set and sample have different sequence lengths");
  }
  std::vector<geometry::RigidTransform> out;
  out.reserve(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const PairIndex p = tasks.task(t);
    out.push_back(geometry::ground_truth_relative(
        sample.world_from_tool(p.i), sample.world_from_tool(p.j)));
  }
  return out;
}

}  // namespace freescan::sampling
