#pragma once

// Optimization loop, evaluation metrics and model checkpoints.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "tvae/data.hpp"
#include "tvae/model.hpp"
#include "tvae/objectives.hpp"
#include "tvae/optim.hpp"

namespace tvae {

inline constexpr std::uint64_t kEvalSeed = 0x5eed'e7a1ULL;

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-3;
  std::size_t epochs = 48;
  std::size_t batch = 32;
  /// Fixed KL weight instead of the annealing schedule.
  std::optional<double> kl_weight_override;
  std::uint64_t seed = 0;

  void validate() const;
  AdamConfig adam() const { return {lr, 0.9, 0.999, 1e-8, weight_decay}; }
  double kl_weight(std::size_t step) const;
};

struct TrainState {
  ModelParams params;
  AdamState adam;
  std::size_t step = 0;  // optimizer steps taken so far
};

TrainState init_state(const ModelConfig& model, const TrainConfig& train);

/// One optimizer step. Latent noise and dropout masks come from streams keyed
/// by (seed, step), so a resumed run repeats the same step exactly.
LossBreakdown train_step(TrainState& state, const CorpusBatch& batch, const TrainConfig& config);

struct EvalReport {
  double nll_total = 0.0;        // reconstruction NLL summed over examples
  double kl_z_total = 0.0;
  double kl_t_total = 0.0;       // Dirichlet KL (marginal)
  double topic_nll_total = 0.0;  // -log p(t|z) (joint)
  std::size_t token_count = 0;
  std::size_t examples = 0;

  double nll() const { return examples ? nll_total / static_cast<double>(examples) : 0.0; }
  double kl() const { return examples ? (kl_z_total + kl_t_total) / static_cast<double>(examples) : 0.0; }
  double ppl() const;
  /// Negative bound per example with the KL scaled by kl_weight.
  double objective(double kl_weight = 1.0) const;
  EvalReport& operator+=(const EvalReport& other);
};

/// Single posterior sample per example in eval mode. The noise for an example
/// is keyed by its content, so reports add up across shards.
EvalReport evaluate(const ModelParams& params, const Dataset& data, std::uint64_t seed = kEvalSeed,
                    std::size_t batch = 64);

struct MetricRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double recon_nll = 0.0;
  double kl_z = 0.0;
  double kl_t = 0.0;
  double bow = 0.0;
  double total = 0.0;
  double valid_nll = 0.0;
  double valid_kl = 0.0;
  double valid_ppl = 0.0;
};

void write_metric_log(const std::filesystem::path& path, const std::vector<MetricRow>& rows);

struct TrainResult {
  TrainState last;
  ModelParams best;
  std::size_t best_epoch = 0;
  double best_valid = 0.0;
  std::vector<MetricRow> log;
};

/// Trains for config.epochs full passes. The returned best params minimize the
/// validation objective (KL weighted by the override when set, else 1).
TrainResult train(const ModelConfig& model, const TrainConfig& config, const Dataset& train_data,
                  const Dataset& valid_data, const std::function<void(const MetricRow&)>& on_epoch = {});

/// Continues from a saved state up to config.epochs.
TrainResult resume(TrainState state, const TrainConfig& config, const Dataset& train_data, const Dataset& valid_data,
                   const std::function<void(const MetricRow&)>& on_epoch = {});

void check_compatible(const ModelParams& params, const Dataset& data);

// ---- checkpoints -----------------------------------------------------------

struct Checkpoint {
  TrainState state;
  std::optional<TrainConfig> train;
};

void save_checkpoint(const std::filesystem::path& path, const TrainState& state, const TrainConfig* train = nullptr);
void save_model(const std::filesystem::path& path, const ModelParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tvae
