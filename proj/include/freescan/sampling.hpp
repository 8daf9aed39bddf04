#pragma once

#include <cstdint>
#include <vector>

#include "freescan/dataio.hpp"
#include "freescan/geometry.hpp"

namespace freescan::sampling {

/// Ordered frame pair within a sequence; indices are 1-based, i < j.
struct PairIndex {
  int i = 0;
  int j = 0;
  friend bool operator==(const PairIndex&, const PairIndex&) = default;
};

/// All C(M,2) pairs with i < j in lexicographic order.
std::vector<PairIndex> enumerate_pairs(int seq_len);

inline std::int64_t pair_count(int seq_len) {
  return static_cast<std::int64_t>(seq_len) * (seq_len - 1) / 2;
}

/// The main pair plus the sampled auxiliary pairs. Task order (main first,
/// auxiliary in sampled order) is frozen at construction; the model's output
/// head layout follows it.
struct TaskSet {
  int seq_len = 0;
  PairIndex main;
  std::vector<PairIndex> auxiliary;

  std::size_t size() const { return 1 + auxiliary.size(); }
  PairIndex task(std::size_t t) const {
    return t == 0 ? main : auxiliary[t - 1];
  }
};

/// n_aux pairs drawn uniformly without replacement from the complement of
/// the main pair; deterministic per seed.
TaskSet make_task_set(int seq_len, PairIndex main, int n_aux,
                      std::uint64_t rng_seed);

/// A window of consecutive frames of one scan. Non-owning view; the scan
/// must outlive the sample. start is 1-based; frame m of the sequence
/// (m = 1..seq_len) is scan frame start+m-1.
struct SequenceSample {
  const dataio::Scan* scan = nullptr;
  int start = 1;
  int seq_len = 0;
  PairIndex main;

  const dataio::Frame& frame(int m) const {
    return scan->frames[static_cast<std::size_t>(start - 1 + m - 1)];
  }
  const geometry::RigidTransform& world_from_tool(int m) const {
    return scan->world_from_tool[static_cast<std::size_t>(start - 1 + m - 1)];
  }
};

inline int valid_start_count(int scan_len, int seq_len) {
  return scan_len - seq_len + 1;
}

/// Training-mode sampling: `count` start indices drawn uniformly from
/// [1, scan_len - seq_len + 1]. Evaluation uses the deterministic chaining
/// schedule instead (see reconstruct).
std::vector<SequenceSample> sample_sequences(const dataio::Scan& scan,
                                             int seq_len, PairIndex main,
                                             int count, Rng& rng);

/// Samples at explicit 1-based start indices (used with a chain schedule).
std::vector<SequenceSample> sequences_at(const dataio::Scan& scan, int seq_len,
                                         PairIndex main,
                                         const std::vector<int>& starts);

/// Ground-truth relative transform for every task pair, in task order.
std::vector<geometry::RigidTransform> gt_for_tasks(const SequenceSample& sample,
                                                   const TaskSet& tasks);

}  // namespace freescan::sampling
