#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "freescan/losses.hpp"
#include "freescan/nn/tape.hpp"
#include "freescan/sampling.hpp"

namespace freescan::model {

using json = nlohmann::ordered_json;

enum class Variant { kFeedForward, kRecurrent };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct EncoderConfig {
  std::array<int, 3> channels = {8, 16, 32};  // three stride-2 conv layers
  int pool_grid = 1;  // 1 = global average pooling
};

struct ModelConfig {
  Variant variant = Variant::kFeedForward;
  int seq_len = 5;                        // M
  sampling::PairIndex main_pair = {2, 4};  // (i*, j*)
  int n_aux = 8;                          // tau
  int frame_height = 0;                   // 0 = take from the dataset
  int frame_width = 0;
  EncoderConfig encoder;
  std::array<int, 2> mlp_hidden = {64, 64};
  int rnn_hidden = 128;

  int n_tasks() const { return n_aux + 1; }
  int out_dim() const { return n_tasks() * 6; }
  int feature_dim() const {
    return encoder.channels[2] * encoder.pool_grid * encoder.pool_grid;
  }
  void validate() const;
};

struct NamedShape {
  std::string name;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
};

/// Parameter layout is a pure function of the configuration; checkpoints
/// must match it exactly.
std::vector<NamedShape> parameter_shapes(const ModelConfig& cfg);

template <class S>
struct Params {
  std::vector<std::pair<std::string, nn::Mat<S>>> tensors;

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [name, m] : tensors) n += m.size();
    return n;
  }
};

/// Uniform fan-in initialization; the recurrent forget gate bias starts at
/// +1 so early unrolled training does not wash out the cell state.
template <class S>
Params<S> init_params(const ModelConfig& cfg, std::uint64_t seed);

template <class S>
struct ForwardResult {
  typename nn::Tape<S>::Id output = -1;  // {B, (tau+1)*6}
  std::vector<typename nn::Tape<S>::Id> param_ids;  // aligned with Params
};

/// Builds the forward graph for a batch of B sequences packed as
/// {B*seq_len, H*W} frame rows (time-major within each sample).
template <class S>
ForwardResult<S> forward(nn::Tape<S>& tape, const ModelConfig& cfg,
                         const Params<S>& params, nn::Mat<S> frames,
                         bool with_grad);

/// Inference over samples; splits the network output into per-sample
/// prediction sets in frozen task order.
template <class S>
std::vector<losses::PredictionSet> predict(
    const ModelConfig& cfg, const Params<S>& params,
    const sampling::TaskSet& tasks,
    const std::vector<sampling::SequenceSample>& samples);

template <class S>
struct AdamState {
  std::vector<nn::Mat<S>> m;
  std::vector<nn::Mat<S>> v;
  std::int64_t step = 0;
};

template <class S>
void adam_step(Params<S>& params, const std::vector<nn::Mat<S>>& grads,
               AdamState<S>& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

template <class S>
double global_grad_norm(const std::vector<nn::Mat<S>>& grads);

struct TrainConfig {
  ModelConfig model;
  double learning_rate = 1e-4;
  int batch_size = 32;
  int steps = 2000;  // desk scale counts optimizer steps, not epochs
  int val_interval = 100;
  losses::LossWeights loss_weights;
  std::uint64_t seed = 0;
  std::string precision = "float32";  // "float32" | "float64"
  double grad_clip = 10.0;            // global norm; <= 0 disables
  bool loss_in_image_space = false;
  int val_max_sequences = 256;

  void validate() const;
  std::string model_ref() const;
};

json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const json& j);

json task_set_to_json(const sampling::TaskSet& ts);
sampling::TaskSet task_set_from_json(const json& j);

/// Everything needed to resume training bit-exactly or run inference with
/// the validation-selected parameters. Tensors are held as float64 blobs;
/// float32 values survive the round trip unchanged.
struct Checkpoint {
  TrainConfig config;
  sampling::TaskSet tasks;
  std::vector<std::pair<std::string, nn::Mat<double>>> params;
  std::vector<std::pair<std::string, nn::Mat<double>>> best_params;
  std::vector<std::pair<std::string, nn::Mat<double>>> adam_m;
  std::vector<std::pair<std::string, nn::Mat<double>>> adam_v;
  std::int64_t adam_step_count = 0;
  int step = 0;
  bool has_best = false;
  double best_val_frame_err = std::numeric_limits<double>::infinity();
  std::string data_rng_state;

  /// Parameters to use for inference: the best by validation frame error
  /// when available, else the latest.
  const std::vector<std::pair<std::string, nn::Mat<double>>>&
  inference_params() const {
    return has_best ? best_params : params;
  }
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <class S>
Params<S> cast_params(
    const std::vector<std::pair<std::string, nn::Mat<double>>>& src);

template <class S>
std::vector<std::pair<std::string, nn::Mat<double>>> params_to_f64(
    const Params<S>& src);

}  // namespace freescan::model
