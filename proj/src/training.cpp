#include "tvae/training.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>

#include "tvae/autodiff.hpp"
#include "tvae/checkpoint.hpp"
#include "tvae/errors.hpp"

namespace tvae {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (kl_weight_override && !(*kl_weight_override >= 0.0)) throw ConfigError("train: kl weight must be >= 0");
}

double TrainConfig::kl_weight(std::size_t step) const {
  return kl_weight_override ? *kl_weight_override : anneal_weight(step);
}

TrainState init_state(const ModelConfig& model, const TrainConfig& train) {
  model.validate();
  train.validate();
  return {init_params(model, train.seed), {}, 0};
}

LossBreakdown train_step(TrainState& state, const CorpusBatch& batch, const TrainConfig& config) {
  const std::uint64_t key = derive_seed(config.seed, static_cast<std::uint64_t>(state.step));
  Rng noise_rng(derive_seed(key, "noise"));
  Rng dropout_rng(derive_seed(key, "dropout"));
  const auto noise = LatentNoise::draw(state.params.config, batch.batch_size, noise_rng);
  ForwardContext ctx{true, &dropout_rng};
  LossBreakdown loss = compute_loss(state.params, batch, noise, {config.kl_weight(state.step), true}, ctx);
  state.params.zero_grad();
  ad::backward(loss.total);
  auto tensors = state.params.tensors();
  adam_step(tensors, state.adam, config.adam());
  ++state.step;
  return loss;
}

// ---- evaluation -----------------------------------------------------------

double EvalReport::ppl() const {
  return token_count ? std::exp(nll_total / static_cast<double>(token_count)) : 0.0;
}

double EvalReport::objective(double kl_weight) const {
  if (!examples) return 0.0;
  return (nll_total + topic_nll_total + kl_weight * (kl_z_total + kl_t_total)) / static_cast<double>(examples);
}

EvalReport& EvalReport::operator+=(const EvalReport& other) {
  nll_total += other.nll_total;
  kl_z_total += other.kl_z_total;
  kl_t_total += other.kl_t_total;
  topic_nll_total += other.topic_nll_total;
  token_count += other.token_count;
  examples += other.examples;
  return *this;
}

void check_compatible(const ModelParams& params, const Dataset& data) {
  const auto& cfg = params.config;
  for (const auto& ex : data.examples) {
    for (int id : ex.ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
        throw InputError("token id outside the model vocabulary");
      }
    }
    if (cfg.conditional && (ex.label < 0 || static_cast<std::size_t>(ex.label) >= cfg.classes)) {
      throw InputError("conditional model needs a label in [0, classes) for every example");
    }
    if (cfg.topic == TopicMode::joint && ex.topic.size() != cfg.topics) {
      throw InputError("joint model needs a topic vector with " + std::to_string(cfg.topics) + " entries per example");
    }
  }
}

namespace {

std::uint64_t example_key(const Example& ex) {
  std::uint64_t h = splitmix64(ex.ids.size() ^ (static_cast<std::uint64_t>(ex.label + 1) << 32));
  for (int id : ex.ids) h = splitmix64(h ^ static_cast<std::uint64_t>(id));
  for (double t : ex.topic) {
    std::uint64_t bits;
    std::memcpy(&bits, &t, sizeof bits);
    h = splitmix64(h ^ bits);
  }
  return h;
}

}  // namespace

EvalReport evaluate(const ModelParams& params, const Dataset& data, std::uint64_t seed, std::size_t batch) {
  if (batch == 0) throw ConfigError("evaluate: batch must be positive");
  check_compatible(params, data);
  EvalReport report;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    std::vector<std::size_t> idx;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = start; i < std::min(start + batch, data.size()); ++i) {
      idx.push_back(i);
      seeds.push_back(derive_seed(seed, example_key(data.examples[i])));
    }
    const CorpusBatch b = make_batch(data, idx);
    const auto noise = LatentNoise::per_example(params.config, seeds);
    const auto loss = compute_loss(params, b, noise, {1.0, false}, {});
    for (std::size_t r = 0; r < idx.size(); ++r) {
      report.nll_total += loss.recon[r];
      report.kl_z_total += loss.kl_z_rows[r];
      if (params.config.topic == TopicMode::marginal) report.kl_t_total += loss.topic_rows[r];
      if (params.config.topic == TopicMode::joint) report.topic_nll_total += loss.topic_rows[r];
      report.token_count += loss.tokens[r];
    }
    report.examples += idx.size();
  }
  if (!std::isfinite(report.nll_total) || !std::isfinite(report.kl()) || !std::isfinite(report.topic_nll_total)) {
    throw NumericError("evaluate: non-finite report");
  }
  return report;
}

void write_metric_log(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "epoch,step,recon_nll,kl_z,kl_t,bow,total,valid_nll,valid_kl,valid_ppl\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.step << ',' << r.recon_nll << ',' << r.kl_z << ',' << r.kl_t << ',' << r.bow << ','
        << r.total << ',' << r.valid_nll << ',' << r.valid_kl << ',' << r.valid_ppl << '\n';
  }
}

// ---- training loop --------------------------------------------------------

TrainResult resume(TrainState state, const TrainConfig& config, const Dataset& train_data, const Dataset& valid_data,
                   const std::function<void(const MetricRow&)>& on_epoch) {
  config.validate();
  if (train_data.size() == 0) throw InputError("train: empty training split");
  if (valid_data.size() == 0) throw InputError("train: empty validation split");
  check_compatible(state.params, train_data);
  check_compatible(state.params, valid_data);

  const BatchIterator it(train_data, config.batch, derive_seed(config.seed, "shuffle"));
  const std::size_t per_epoch = it.batches_per_epoch();
  const double select_weight = config.kl_weight_override.value_or(1.0);

  TrainResult result;
  result.best_valid = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = state.step / per_epoch; epoch < config.epochs; ++epoch) {
    const auto batches = it.epoch(epoch);
    MetricRow row;
    row.epoch = epoch + 1;
    std::size_t seen = 0;
    for (std::size_t i = state.step % per_epoch; i < per_epoch; ++i) {
      const auto& b = batches[i];
      const auto loss = train_step(state, b, config);
      const auto n = static_cast<double>(b.batch_size);
      row.recon_nll += loss.recon_nll * n;
      row.kl_z += loss.kl_z * n;
      row.kl_t += loss.topic_term * n;
      row.bow += loss.bow_nll * n;
      row.total += loss.total.item() * n;
      seen += b.batch_size;
    }
    const double inv = seen ? 1.0 / static_cast<double>(seen) : 0.0;
    row.recon_nll *= inv;
    row.kl_z *= inv;
    row.kl_t *= inv;
    row.bow *= inv;
    row.total *= inv;
    row.step = state.step;

    const EvalReport valid = evaluate(state.params, valid_data);
    row.valid_nll = valid.nll();
    row.valid_kl = valid.kl();
    row.valid_ppl = valid.ppl();
    const double objective = valid.objective(select_weight);
    if (objective < result.best_valid) {
      result.best_valid = objective;
      result.best_epoch = epoch + 1;
      result.best = state.params.clone();
    }
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  if (!result.best_epoch) result.best = state.params.clone();
  result.last = std::move(state);
  return result;
}

TrainResult train(const ModelConfig& model, const TrainConfig& config, const Dataset& train_data,
                  const Dataset& valid_data, const std::function<void(const MetricRow&)>& on_epoch) {
  return resume(init_state(model, config), config, train_data, valid_data, on_epoch);
}

// ---- checkpoints -------------------------------------------------------------

namespace {

void put_config(ArchiveWriter& w, const ModelConfig& c) {
  w.put_int("config.vocab_size", static_cast<std::int64_t>(c.vocab_size));
  w.put_int("config.emb", static_cast<std::int64_t>(c.emb));
  w.put_int("config.hidden", static_cast<std::int64_t>(c.hidden));
  w.put_int("config.latent", static_cast<std::int64_t>(c.latent));
  w.put_int("config.topics", static_cast<std::int64_t>(c.topics));
  w.put_int("config.label_emb", static_cast<std::int64_t>(c.label_emb));
  w.put_int("config.classes", static_cast<std::int64_t>(c.classes));
  w.put_scalar("config.dropout", c.dropout);
  w.put_int("config.topic", static_cast<std::int64_t>(c.topic));
  w.put_int("config.conditional", c.conditional);
  w.put_int("config.bow", c.bow);
}

ModelConfig get_config(const ArchiveReader& r) {
  ModelConfig c;
  auto size = [&](const char* name) {
    const auto v = r.integer(name);
    if (v < 0) throw InputError(std::string("checkpoint: negative ") + name);
    return static_cast<std::size_t>(v);
  };
  c.vocab_size = size("config.vocab_size");
  c.emb = size("config.emb");
  c.hidden = size("config.hidden");
  c.latent = size("config.latent");
  c.topics = size("config.topics");
  c.label_emb = size("config.label_emb");
  c.classes = size("config.classes");
  c.dropout = r.scalar("config.dropout");
  const auto mode = r.integer("config.topic");
  if (mode < 0 || mode > 2) throw InputError("checkpoint: unknown topic mode");
  c.topic = static_cast<TopicMode>(mode);
  c.conditional = r.integer("config.conditional") != 0;
  c.bow = r.integer("config.bow") != 0;
  return c;
}

std::vector<std::size_t> dims_of(const ad::Tensor& t) { return {t.shape().begin(), t.shape().end()}; }

void write_archive(const std::filesystem::path& path, const ModelParams& params, const AdamState* adam,
                   std::size_t step, const TrainConfig* train) {
  ArchiveWriter w;
  put_config(w, params.config);
  const auto named = params.named();
  for (const auto& [name, t] : named) {
    w.put("param." + name, dims_of(t), std::vector<double>(t.value().begin(), t.value().end()));
  }
  w.put_int("train.step", static_cast<std::int64_t>(step));
  if (adam && adam->initialized()) {
    w.put_int("adam.t", static_cast<std::int64_t>(adam->t));
    for (std::size_t i = 0; i < named.size(); ++i) {
      w.put("adam.m." + named[i].first, dims_of(named[i].second), adam->m[i]);
      w.put("adam.v." + named[i].first, dims_of(named[i].second), adam->v[i]);
    }
  }
  if (train) {
    w.put_scalar("train.lr", train->lr);
    w.put_scalar("train.weight_decay", train->weight_decay);
    w.put_int("train.epochs", static_cast<std::int64_t>(train->epochs));
    w.put_int("train.batch", static_cast<std::int64_t>(train->batch));
    w.put_int("train.seed", static_cast<std::int64_t>(train->seed));
    if (train->kl_weight_override) w.put_scalar("train.kl_weight", *train->kl_weight_override);
  }
  w.write(path);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state, const TrainConfig* train) {
  write_archive(path, state.params, &state.adam, state.step, train);
}

void save_model(const std::filesystem::path& path, const ModelParams& params) {
  write_archive(path, params, nullptr, 0, nullptr);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto r = ArchiveReader::read(path);
  if (!r.has("config.vocab_size")) throw InputError(path.string() + " is not a model checkpoint");
  Checkpoint ck;
  const ModelConfig config = get_config(r);
  config.validate();
  ck.state.params = init_params(config, 0);
  auto named = ck.state.params.named();
  for (auto& [name, t] : named) {
    const auto& arr = r.get("param." + name);
    if (arr.dims != dims_of(t)) throw InputError("checkpoint: shape mismatch for " + name);
    const auto& data = arr.floats();
    std::copy(data.begin(), data.end(), t.mutable_value().begin());
  }
  ck.state.step = static_cast<std::size_t>(r.integer("train.step"));
  if (r.has("adam.t")) {
    ck.state.adam.t = static_cast<std::size_t>(r.integer("adam.t"));
    for (const auto& [name, t] : named) {
      ck.state.adam.m.push_back(r.floats("adam.m." + name));
      ck.state.adam.v.push_back(r.floats("adam.v." + name));
      if (ck.state.adam.m.back().size() != t.size() || ck.state.adam.v.back().size() != t.size()) {
        throw InputError("checkpoint: optimizer state mismatch for " + name);
      }
    }
  }
  if (r.has("train.lr")) {
    TrainConfig tc;
    tc.lr = r.scalar("train.lr");
    tc.weight_decay = r.scalar("train.weight_decay");
    tc.epochs = static_cast<std::size_t>(r.integer("train.epochs"));
    tc.batch = static_cast<std::size_t>(r.integer("train.batch"));
    tc.seed = static_cast<std::uint64_t>(r.integer("train.seed"));
    if (r.has("train.kl_weight")) tc.kl_weight_override = r.scalar("train.kl_weight");
    ck.train = tc;
  }
  return ck;
}

}  // namespace tvae
