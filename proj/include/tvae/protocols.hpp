#pragma once

// Evaluation protocols: linear probes on latent features, classifiers trained
// on generated text, and the KL-weight sweep.

#include <cstdint>
#include <vector>

#include "tvae/classifiers.hpp"
#include "tvae/data.hpp"
#include "tvae/generation.hpp"
#include "tvae/model.hpp"
#include "tvae/training.hpp"

namespace tvae {

struct LabeledFeatures {
  Features x;
  std::vector<int> y;
};

struct ProtocolResult {
  double mean_accuracy = 0.0;
  std::vector<double> accuracies;  // one per seed
  std::vector<double> lambdas;     // regularization picked per seed (SVM)
};

inline const std::vector<double> kSvmLambdas = {1e-4, 1e-3, 1e-2, 1e-1};

/// For each seed: draw n_train training rows without replacement, standardize
/// on them, pick lambda by validation accuracy, report test accuracy.
ProtocolResult linear_classifier_eval(const LabeledFeatures& train, const LabeledFeatures& valid,
                                      const LabeledFeatures& test, std::size_t n_train, std::size_t seeds = 5,
                                      std::uint64_t seed = 0);

/// For each seed: generate n_per_class sentences for every label from
/// mu_p + s * eps * sigma_p (s = 2 when low_probability), train tf-idf
/// logistic regression on them, report accuracy on the real test split.
ProtocolResult conditional_generation_eval(const ModelParams& params, std::size_t n_per_class, bool low_probability,
                                           const Dataset& test, std::size_t seeds = 5, std::uint64_t seed = 0,
                                           std::size_t max_len = kMaxLength);

struct GridSpec {
  std::size_t cells = 100;
  double lo = -4.0;
  double hi = 4.0;
};

/// Average of the posterior densities of the given documents, each cell
/// holding that density's mean over the cell. Rows index y, columns x.
/// Needs latent = 2.
Matrix density_grid(const ModelParams& params, const Dataset& data, const std::vector<std::size_t>& rows,
                    const GridSpec& grid = {});

struct SweepRun {
  double weight = 0.0;
  EvalReport test;
  Matrix grid;
  std::vector<MetricRow> log;
  ModelParams params;
};

/// One standard VAE per fixed KL weight; test report plus the density grid
/// of `grid_samples` random test documents.
std::vector<SweepRun> kl_sweep(const ModelConfig& model, const TrainConfig& train, const Dataset& train_data,
                               const Dataset& valid_data, const Dataset& test_data, const std::vector<double>& weights,
                               std::size_t grid_samples = 100, const GridSpec& grid = {});

}  // namespace tvae
