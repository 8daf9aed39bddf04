#include "freescan/model.hpp"

#include <cmath>

#include "freescan/dataio.hpp"

namespace freescan::model {

Variant variant_from_string(const std::string& s) {
  if (s == "feedforward") return Variant::kFeedForward;
  if (s == "recurrent") return Variant::kRecurrent;
  throw ConfigError("unknown variant '" + s + "'");
}

std::string to_string(Variant v) {
  return v == Variant::kFeedForward ? "feedforward" : "recurrent";
}

namespace {

int conv_out(int d) { return (d + 2 * 1 - 3) / 2 + 1; }  // k=3, s=2, p=1

struct EncoderDims {
  int h1, w1, h2, w2, h3, w3;
};

EncoderDims encoder_dims(int h, int w) {
  EncoderDims d{};
  d.h1 = conv_out(h);
  d.w1 = conv_out(w);
  d.h2 = conv_out(d.h1);
  d.w2 = conv_out(d.w1);
  d.h3 = conv_out(d.h2);
  d.w3 = conv_out(d.w2);
  return d;
}

}  // namespace

void ModelConfig::validate() const {
  if (seq_len < 2) throw ConfigError("M must be >= 2");
  if (!(1 <= main_pair.i && main_pair.i < main_pair.j &&
        main_pair.j <= seq_len)) {
    throw ConfigError("main pair (i*, j*) must satisfy 1 <= i* < j* <= M");
  }
  if (n_aux < 0 || n_aux > sampling::pair_count(seq_len) - 1) {
    throw ConfigError("tau must be in [0, C(M,2)-1]");
  }
  if (frame_height < 4 || frame_width < 4) {
    throw ConfigError("frame dimensions must be at least 4x4");
  }
  for (int c : encoder.channels) {
    if (c < 1) throw ConfigError("encoder channels must be positive");
  }
  const auto d = encoder_dims(frame_height, frame_width);
  if (encoder.pool_grid < 1 || encoder.pool_grid > d.h3 ||
      encoder.pool_grid > d.w3) {
    throw ConfigError("pool_grid larger than the final feature map");
  }
  if (mlp_hidden[0] < 1 || mlp_hidden[1] < 1 || rnn_hidden < 1) {
    throw ConfigError("hidden sizes must be positive");
  }
}

std::vector<NamedShape> parameter_shapes(const ModelConfig& cfg) {
  cfg.validate();
  const auto& ch = cfg.encoder.channels;
  std::vector<NamedShape> shapes = {
      {"enc.conv1.w", ch[0], 9},
      {"enc.conv1.b", 1, ch[0]},
      {"enc.conv2.w", ch[1], static_cast<std::int64_t>(ch[0]) * 9},
      {"enc.conv2.b", 1, ch[1]},
      {"enc.conv3.w", ch[2], static_cast<std::int64_t>(ch[1]) * 9},
      {"enc.conv3.b", 1, ch[2]},
  };
  const std::int64_t feat = cfg.feature_dim();
  if (cfg.variant == Variant::kFeedForward) {
    shapes.push_back({"ff.fc1.w", cfg.mlp_hidden[0], cfg.seq_len * feat});
    shapes.push_back({"ff.fc1.b", 1, cfg.mlp_hidden[0]});
    shapes.push_back({"ff.fc2.w", cfg.mlp_hidden[1], cfg.mlp_hidden[0]});
    shapes.push_back({"ff.fc2.b", 1, cfg.mlp_hidden[1]});
    shapes.push_back({"out.w", cfg.out_dim(), cfg.mlp_hidden[1]});
  } else {
    const std::int64_t h = cfg.rnn_hidden;
    shapes.push_back({"rnn.gates.w", 4 * h, feat + h});
    shapes.push_back({"rnn.gates.b", 1, 4 * h});
    shapes.push_back({"out.w", cfg.out_dim(), h});
  }
  shapes.push_back({"out.b", 1, cfg.out_dim()});
  return shapes;
}

template <class S>
Params<S> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x696e'6974ULL));
  Params<S> p;
  for (const auto& shape : parameter_shapes(cfg)) {
    nn::Mat<S> m(shape.rows, shape.cols);
    const bool is_bias = shape.name.ends_with(".b");
    if (!is_bias) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(shape.cols));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& x : m.v) x = static_cast<S>(u(rng));
    }
    if (shape.name == "rnn.gates.b") {
      // Gate layout [input, forget, output, candidate]; open the forget gate.
      const std::int64_t h = cfg.rnn_hidden;
      for (std::int64_t k = h; k < 2 * h; ++k) m(0, k) = S(1);
    }
    p.tensors.emplace_back(shape.name, std::move(m));
  }
  return p;
}

template <class S>
ForwardResult<S> forward(nn::Tape<S>& tape, const ModelConfig& cfg,
                         const Params<S>& params, nn::Mat<S> frames,
                         bool with_grad) {
  using Id = typename nn::Tape<S>::Id;
  cfg.validate();
  const auto shapes = parameter_shapes(cfg);
  if (params.tensors.size() != shapes.size()) {
    throw ConfigError("parameter count does not match configuration");
  }
  if (frames.rows % cfg.seq_len != 0 ||
      frames.cols !=
          static_cast<std::int64_t>(cfg.frame_height) * cfg.frame_width) {
    throw ConfigError("forward: frame matrix shape mismatch");
  }
  const std::int64_t batch = frames.rows / cfg.seq_len;

  ForwardResult<S> fr;
  fr.param_ids.reserve(params.tensors.size());
  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    const auto& [name, m] = params.tensors[k];
    if (name != shapes[k].name || m.rows != shapes[k].rows ||
        m.cols != shapes[k].cols) {
      throw ConfigError("parameter tensor '" + name +
                        "' does not match the expected layout");
    }
    fr.param_ids.push_back(tape.leaf(m, with_grad));
  }
  auto pid = [&](const char* name) -> Id {
    for (std::size_t k = 0; k < shapes.size(); ++k) {
      if (shapes[k].name == name) return fr.param_ids[k];
    }
    throw ConfigError(std::string("missing parameter ") + name);
  };

  const auto& ch = cfg.encoder.channels;
  const auto d = encoder_dims(cfg.frame_height, cfg.frame_width);
  const Id x = tape.leaf(std::move(frames), false);
  nn::Conv2dSpec c1{1, cfg.frame_height, cfg.frame_width, ch[0], 3, 2, 1};
  nn::Conv2dSpec c2{ch[0], d.h1, d.w1, ch[1], 3, 2, 1};
  nn::Conv2dSpec c3{ch[1], d.h2, d.w2, ch[2], 3, 2, 1};
  Id a = tape.relu(tape.conv2d(x, pid("enc.conv1.w"), pid("enc.conv1.b"), c1));
  a = tape.relu(tape.conv2d(a, pid("enc.conv2.w"), pid("enc.conv2.b"), c2));
  a = tape.relu(tape.conv2d(a, pid("enc.conv3.w"), pid("enc.conv3.b"), c3));
  const Id feat =
      tape.avg_pool_grid(a, ch[2], d.h3, d.w3, cfg.encoder.pool_grid);

  const std::int64_t fdim = cfg.feature_dim();
  const Id seq = tape.reshape(feat, batch, cfg.seq_len * fdim);

  if (cfg.variant == Variant::kFeedForward) {
    Id h = tape.relu(tape.linear(seq, pid("ff.fc1.w"), pid("ff.fc1.b")));
    h = tape.relu(tape.linear(h, pid("ff.fc2.w"), pid("ff.fc2.b")));
    fr.output = tape.linear(h, pid("out.w"), pid("out.b"));
    return fr;
  }

  // Gated memory cell unrolled over the sequence, zero initial state;
  // the output layer reads the final hidden state.
  const std::int64_t hdim = cfg.rnn_hidden;
  Id h = tape.leaf(nn::Mat<S>::zeros(batch, hdim), false);
  Id c = tape.leaf(nn::Mat<S>::zeros(batch, hdim), false);
  const Id wg = pid("rnn.gates.w");
  const Id bg = pid("rnn.gates.b");
  for (int m = 1; m <= cfg.seq_len; ++m) {
    const Id xm = tape.slice_cols(seq, (m - 1) * fdim, fdim);
    const Id z = tape.linear(tape.concat_cols({xm, h}), wg, bg);
    const Id gi = tape.sigmoid(tape.slice_cols(z, 0, hdim));
    const Id gf = tape.sigmoid(tape.slice_cols(z, hdim, hdim));
    const Id go = tape.sigmoid(tape.slice_cols(z, 2 * hdim, hdim));
    const Id gc = tape.tanh(tape.slice_cols(z, 3 * hdim, hdim));
    c = tape.add(tape.mul(gf, c), tape.mul(gi, gc));
    h = tape.mul(go, tape.tanh(c));
    if (!tape.value(h).all_finite()) {
      throw NumericalError("recurrent state became non-finite at step " +
                           std::to_string(m));
    }
  }
  fr.output = tape.linear(h, pid("out.w"), pid("out.b"));
  return fr;
}

template <class S>
std::vector<losses::PredictionSet> predict(
    const ModelConfig& cfg, const Params<S>& params,
    const sampling::TaskSet& tasks,
    const std::vector<sampling::SequenceSample>& samples) {
  if (tasks.seq_len != cfg.seq_len ||
      static_cast<int>(tasks.size()) != cfg.n_tasks()) {
    throw ConfigError("predict: task set does not match the configuration");
  }
  std::vector<losses::PredictionSet> out;
  out.reserve(samples.size());

  const std::size_t chunk =
      std::max<std::size_t>(1, 512 / static_cast<std::size_t>(cfg.seq_len));
  const std::int64_t px =
      static_cast<std::int64_t>(cfg.frame_height) * cfg.frame_width;
  for (std::size_t at = 0; at < samples.size(); at += chunk) {
    const std::size_t n = std::min(chunk, samples.size() - at);
    nn::Mat<S> frames(static_cast<std::int64_t>(n) * cfg.seq_len, px);
    for (std::size_t s = 0; s < n; ++s) {
      const auto& sample = samples[at + s];
      if (sample.seq_len != cfg.seq_len) {
        throw ConfigError("predict: sample sequence length mismatch");
      }
      for (int m = 1; m <= cfg.seq_len; ++m) {
        const auto& fpix = sample.frame(m).pixels;
        if (static_cast<std::int64_t>(fpix.size()) != px) {
          throw ConfigError("predict: frame dimensions mismatch");
        }
        S* row = &frames.v[(s * cfg.seq_len + m - 1) * px];
        for (std::int64_t i = 0; i < px; ++i) row[i] = static_cast<S>(fpix[i]);
      }
    }
    nn::Tape<S> tape;
    const auto fr = forward(tape, cfg, params, std::move(frames), false);
    const auto& y = tape.value(fr.output);
    for (std::size_t s = 0; s < n; ++s) {
      losses::PredictionSet ps;
      ps.tasks = tasks;
      ps.poses.resize(tasks.size());
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        geometry::Pose6DoF& pose = ps.poses[t];
        for (int d = 0; d < 3; ++d) {
          pose.euler[d] = static_cast<double>(
              y(static_cast<std::int64_t>(s), static_cast<std::int64_t>(6 * t + d)));
          pose.translation[d] = static_cast<double>(
              y(static_cast<std::int64_t>(s),
                static_cast<std::int64_t>(6 * t + 3 + d)));
        }
      }
      out.push_back(std::move(ps));
    }
  }
  return out;
}

template <class S>
void adam_step(Params<S>& params, const std::vector<nn::Mat<S>>& grads,
               AdamState<S>& state, double lr, double beta1, double beta2,
               double eps) {
  if (grads.size() != params.tensors.size()) {
    throw ConfigError("adam_step: gradient list misaligned with parameters");
  }
  if (state.m.empty()) {
    for (const auto& [name, t] : params.tensors) {
      state.m.push_back(nn::Mat<S>::zeros(t.rows, t.cols));
      state.v.push_back(nn::Mat<S>::zeros(t.rows, t.cols));
    }
  }
  state.step += 1;
  const S b1 = static_cast<S>(beta1), b2 = static_cast<S>(beta2);
  const S corr1 =
      static_cast<S>(1.0 - std::pow(beta1, static_cast<double>(state.step)));
  const S corr2 =
      static_cast<S>(1.0 - std::pow(beta2, static_cast<double>(state.step)));
  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    auto& t = params.tensors[k].second;
    const auto& g = grads[k];
    if (g.rows != t.rows || g.cols != t.cols) {
      throw ConfigError("adam_step: gradient shape mismatch for " +
                        params.tensors[k].first);
    }
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < t.v.size(); ++i) {
      m.v[i] = b1 * m.v[i] + (S(1) - b1) * g.v[i];
      v.v[i] = b2 * v.v[i] + (S(1) - b2) * g.v[i] * g.v[i];
      const S mhat = m.v[i] / corr1;
      const S vhat = v.v[i] / corr2;
      t.v[i] -= static_cast<S>(lr) * mhat /
                (std::sqrt(vhat) + static_cast<S>(eps));
    }
  }
}

template <class S>
double global_grad_norm(const std::vector<nn::Mat<S>>& grads) {
  double acc = 0.0;
  for (const auto& g : grads) {
    for (S x : g.v) acc += static_cast<double>(x) * static_cast<double>(x);
  }
  return std::sqrt(acc);
}

void TrainConfig::validate() const {
  model.validate();
  loss_weights.validate();
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (val_interval < 1) throw ConfigError("val_interval must be >= 1");
  if (precision != "float32" && precision != "float64") {
    throw ConfigError("precision must be float32 or float64");
  }
  if (val_max_sequences < 1) throw ConfigError("val_max_sequences must be >= 1");
}

std::string TrainConfig::model_ref() const {
  return to_string(model.variant) + "_M" + std::to_string(model.seq_len) +
         "_i" + std::to_string(model.main_pair.i) + "_j" +
         std::to_string(model.main_pair.j) + "_tau" +
         std::to_string(model.n_aux) + "_seed" + std::to_string(seed);
}

json train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["variant"] = to_string(cfg.model.variant);
  j["M"] = cfg.model.seq_len;
  j["i_star"] = cfg.model.main_pair.i;
  j["j_star"] = cfg.model.main_pair.j;
  j["tau"] = cfg.model.n_aux;
  j["seed"] = cfg.seed;
  j["frame_height"] = cfg.model.frame_height;
  j["frame_width"] = cfg.model.frame_width;
  j["encoder"] = {{"channels", cfg.model.encoder.channels},
                  {"pool_grid", cfg.model.encoder.pool_grid}};
  j["mlp_hidden"] = cfg.model.mlp_hidden;
  j["rnn_hidden"] = cfg.model.rnn_hidden;
  j["learning_rate"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["steps"] = cfg.steps;
  j["val_interval"] = cfg.val_interval;
  j["loss_weights"] = {{"multi_task", cfg.loss_weights.multi_task},
                       {"consistency", cfg.loss_weights.consistency},
                       {"accumulated", cfg.loss_weights.accumulated}};
  j["precision"] = cfg.precision;
  j["grad_clip"] = cfg.grad_clip;
  j["loss_in_image_space"] = cfg.loss_in_image_space;
  j["val_max_sequences"] = cfg.val_max_sequences;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.model.variant = variant_from_string(j.value("variant", "feedforward"));
  cfg.model.seq_len = j.value("M", cfg.model.seq_len);
  cfg.model.main_pair.i = j.value("i_star", cfg.model.main_pair.i);
  cfg.model.main_pair.j = j.value("j_star", cfg.model.main_pair.j);
  cfg.model.n_aux = j.value("tau", cfg.model.n_aux);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.model.frame_height = j.value("frame_height", cfg.model.frame_height);
  cfg.model.frame_width = j.value("frame_width", cfg.model.frame_width);
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    if (e.contains("channels")) {
      cfg.model.encoder.channels = e.at("channels").get<std::array<int, 3>>();
    }
    cfg.model.encoder.pool_grid =
        e.value("pool_grid", cfg.model.encoder.pool_grid);
  }
  if (j.contains("mlp_hidden")) {
    cfg.model.mlp_hidden = j.at("mlp_hidden").get<std::array<int, 2>>();
  }
  cfg.model.rnn_hidden = j.value("rnn_hidden", cfg.model.rnn_hidden);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.steps = j.value("steps", cfg.steps);
  cfg.val_interval = j.value("val_interval", cfg.val_interval);
  if (j.contains("loss_weights")) {
    const auto& w = j.at("loss_weights");
    cfg.loss_weights.multi_task =
        w.value("multi_task", cfg.loss_weights.multi_task);
    cfg.loss_weights.consistency =
        w.value("consistency", cfg.loss_weights.consistency);
    cfg.loss_weights.accumulated =
        w.value("accumulated", cfg.loss_weights.accumulated);
  }
  cfg.precision = j.value("precision", cfg.precision);
  cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
  cfg.loss_in_image_space =
      j.value("loss_in_image_space", cfg.loss_in_image_space);
  cfg.val_max_sequences = j.value("val_max_sequences", cfg.val_max_sequences);
  return cfg;
}

json task_set_to_json(const sampling::TaskSet& ts) {
  json j;
  j["M"] = ts.seq_len;
  j["main"] = {ts.main.i, ts.main.j};
  json aux = json::array();
  for (const auto& p : ts.auxiliary) aux.push_back({p.i, p.j});
  j["auxiliary"] = aux;
  return j;
}

sampling::TaskSet task_set_from_json(const json& j) {
  sampling::TaskSet ts;
  ts.seq_len = j.at("M").get<int>();
  ts.main = {j.at("main")[0].get<int>(), j.at("main")[1].get<int>()};
  for (const auto& p : j.at("auxiliary")) {
    ts.auxiliary.push_back({p[0].get<int>(), p[1].get<int>()});
  }
  return ts;
}

namespace {

constexpr const char* kCheckpointVersion = "1.0";

void blobs_from_params(
    dataio::BlobArchive& a, const std::string& prefix,
    const std::vector<std::pair<std::string, nn::Mat<double>>>& params) {
  for (const auto& [name, m] : params) {
    dataio::BlobArchive::Blob b;
    b.dtype = "float64";
    b.shape = {m.rows, m.cols};
    b.data.resize(m.v.size() * sizeof(double));
    std::memcpy(b.data.data(), m.v.data(), b.data.size());
    a.blobs.emplace(prefix + name, std::move(b));
  }
}

std::vector<std::pair<std::string, nn::Mat<double>>> blobs_to_params(
    const dataio::BlobArchive& a, const std::string& prefix,
    const std::vector<NamedShape>& shapes) {
  std::vector<std::pair<std::string, nn::Mat<double>>> out;
  for (const auto& s : shapes) {
    const auto it = a.blobs.find(prefix + s.name);
    if (it == a.blobs.end()) {
      throw DataError("checkpoint missing tensor '" + prefix + s.name + "'");
    }
    const auto& b = it->second;
    if (b.dtype != "float64" || b.shape.size() != 2 || b.shape[0] != s.rows ||
        b.shape[1] != s.cols) {
      throw DataError("checkpoint tensor '" + prefix + s.name +
                      "' has mismatched shape");
    }
    nn::Mat<double> m(s.rows, s.cols);
    std::memcpy(m.v.data(), b.data.data(), b.data.size());
    out.emplace_back(s.name, std::move(m));
  }
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  dataio::BlobArchive a;
  a.meta["format_version"] = kCheckpointVersion;
  a.meta["kind"] = "checkpoint";
  a.meta["config"] = train_config_to_json(ckpt.config);
  a.meta["tasks"] = task_set_to_json(ckpt.tasks);
  a.meta["step"] = ckpt.step;
  a.meta["adam_step_count"] = ckpt.adam_step_count;
  a.meta["has_best"] = ckpt.has_best;
  a.meta["best_val_frame_err"] = ckpt.best_val_frame_err;
  a.meta["data_rng_state"] = ckpt.data_rng_state;
  blobs_from_params(a, "param/", ckpt.params);
  if (ckpt.has_best) blobs_from_params(a, "best/", ckpt.best_params);
  blobs_from_params(a, "adam_m/", ckpt.adam_m);
  blobs_from_params(a, "adam_v/", ckpt.adam_v);
  dataio::write_archive(a, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto a = dataio::read_archive(path);
  if (a.meta.value("kind", "") != "checkpoint") {
    throw DataError("not a checkpoint archive: " + path.string());
  }
  const auto version = a.meta.at("format_version").get<std::string>();
  if (version.substr(0, version.find('.')) != "1") {
    throw DataError("unsupported checkpoint version " + version);
  }
  Checkpoint c;
  c.config = train_config_from_json(a.meta.at("config"));
  c.config.validate();
  c.tasks = task_set_from_json(a.meta.at("tasks"));
  c.step = a.meta.at("step").get<int>();
  c.adam_step_count = a.meta.at("adam_step_count").get<std::int64_t>();
  c.has_best = a.meta.at("has_best").get<bool>();
  c.best_val_frame_err = a.meta.at("best_val_frame_err").get<double>();
  c.data_rng_state = a.meta.at("data_rng_state").get<std::string>();
  const auto shapes = parameter_shapes(c.config.model);
  c.params = blobs_to_params(a, "param/", shapes);
  if (c.has_best) c.best_params = blobs_to_params(a, "best/", shapes);
  c.adam_m = blobs_to_params(a, "adam_m/", shapes);
  c.adam_v = blobs_to_params(a, "adam_v/", shapes);
  return c;
}

template <class S>
Params<S> cast_params(
    const std::vector<std::pair<std::string, nn::Mat<double>>>& src) {
  Params<S> p;
  for (const auto& [name, m] : src) {
    p.tensors.emplace_back(name, m.template cast<S>());
  }
  return p;
}

template <class S>
std::vector<std::pair<std::string, nn::Mat<double>>> params_to_f64(
    const Params<S>& src) {
  std::vector<std::pair<std::string, nn::Mat<double>>> out;
  for (const auto& [name, m] : src.tensors) {
    out.emplace_back(name, m.template cast<double>());
  }
  return out;
}

template Params<float> init_params<float>(const ModelConfig&, std::uint64_t);
template Params<double> init_params<double>(const ModelConfig&, std::uint64_t);
template ForwardResult<float> forward<float>(nn::Tape<float>&,
                                             const ModelConfig&,
                                             const Params<float>&,
                                             nn::Mat<float>, bool);
template ForwardResult<double> forward<double>(nn::Tape<double>&,
                                               const ModelConfig&,
                                               const Params<double>&,
                                               nn::Mat<double>, bool);
template std::vector<losses::PredictionSet> predict<float>(
    const ModelConfig&, const Params<float>&, const sampling::TaskSet&,
    const std::vector<sampling::SequenceSample>&);
template std::vector<losses::PredictionSet> predict<double>(
    const ModelConfig&, const Params<double>&, const sampling::TaskSet&,
    const std::vector<sampling::SequenceSample>&);
template void adam_step<float>(Params<float>&, const std::vector<nn::Mat<float>>&,
                               AdamState<float>&, double, double, double,
                               double);
template void adam_step<double>(Params<double>&,
                                const std::vector<nn::Mat<double>>&,
                                AdamState<double>&, double, double, double,
                                double);
template double global_grad_norm<float>(const std::vector<nn::Mat<float>>&);
template double global_grad_norm<double>(const std::vector<nn::Mat<double>>&);
template Params<float> cast_params<float>(
    const std::vector<std::pair<std::string, nn::Mat<double>>>&);
template Params<double> cast_params<double>(
    const std::vector<std::pair<std::string, nn::Mat<double>>>&);
template std::vector<std::pair<std::string, nn::Mat<double>>> params_to_f64<float>(
    const Params<float>&);
template std::vector<std::pair<std::string, nn::Mat<double>>>
params_to_f64<double>(const Params<double>&);

}  // namespace freescan::model
