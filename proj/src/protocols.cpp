#include "tvae/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tvae/errors.hpp"

namespace tvae {

namespace {

std::size_t class_count(const LabeledFeatures& a) {
  int mx = -1;
  for (int y : a.y) mx = std::max(mx, y);
  return static_cast<std::size_t>(mx + 1);
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

ProtocolResult linear_classifier_eval(const LabeledFeatures& train, const LabeledFeatures& valid,
                                      const LabeledFeatures& test, std::size_t n_train, std::size_t seeds,
                                      std::uint64_t seed) {
  if (n_train == 0 || n_train > train.x.size()) {
    throw InputError("linear_classifier_eval: n_train = " + std::to_string(n_train) + " exceeds the training split (" +
                     std::to_string(train.x.size()) + ")");
  }
  if (valid.x.empty() || test.x.empty()) throw InputError("linear_classifier_eval: empty validation or test split");
  if (seeds == 0) throw ConfigError("linear_classifier_eval: need at least one seed");
  const std::size_t classes = std::max({class_count(train), class_count(valid), class_count(test), std::size_t{2}});

  ProtocolResult result;
  for (std::size_t s = 0; s < seeds; ++s) {
    const std::uint64_t key = derive_seed(seed, static_cast<std::uint64_t>(s));
    Rng rng(derive_seed(key, "subset"));
    std::vector<std::size_t> idx(train.x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(n_train);
    LabeledFeatures sub;
    for (auto i : idx) {
      sub.x.push_back(train.x[i]);
      sub.y.push_back(train.y[i]);
    }
    Standardizer scaler;
    scaler.fit(sub.x);
    const auto xs = scaler.apply(sub.x);
    const auto xv = scaler.apply(valid.x);
    const auto xt = scaler.apply(test.x);

    double best_acc = -1.0, best_lambda = kSvmLambdas.front();
    LinearSvm best;
    for (double lambda : kSvmLambdas) {
      LinearSvm svm;
      svm.fit(xs, sub.y, classes, lambda, derive_seed(key, "svm"));
      const double acc = svm.accuracy(xv, valid.y);
      if (acc > best_acc) {
        best_acc = acc;
        best_lambda = lambda;
        best = svm;
      }
    }
    result.accuracies.push_back(best.accuracy(xt, test.y));
    result.lambdas.push_back(best_lambda);
  }
  result.mean_accuracy = mean(result.accuracies);
  return result;
}

ProtocolResult conditional_generation_eval(const ModelParams& params, std::size_t n_per_class, bool low_probability,
                                           const Dataset& test, std::size_t seeds, std::uint64_t seed,
                                           std::size_t max_len) {
  const auto& cfg = params.config;
  if (!cfg.conditional) throw ContractError("conditional generation needs a conditional checkpoint");
  if (n_per_class == 0) throw ConfigError("conditional_generation_eval: n_per_class must be positive");
  if (seeds == 0) throw ConfigError("conditional_generation_eval: need at least one seed");
  if (test.size() == 0) throw InputError("conditional_generation_eval: empty test split");
  std::vector<std::vector<int>> test_docs;
  std::vector<int> test_y;
  for (const auto& ex : test.examples) {
    if (ex.label < 0) throw InputError("conditional_generation_eval: test split is unlabeled");
    test_docs.push_back(ex.ids);
    test_y.push_back(ex.label);
  }
  const double scale = low_probability ? 2.0 : 1.0;

  ProtocolResult result;
  for (std::size_t s = 0; s < seeds; ++s) {
    const std::uint64_t key = derive_seed(seed, static_cast<std::uint64_t>(s));
    Rng rng(derive_seed(key, "generate"));
    std::vector<std::vector<int>> docs;
    std::vector<int> labels;
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      for (auto& g : sample_sentences(params, n_per_class, static_cast<int>(c), scale, rng, max_len)) {
        docs.push_back(std::move(g.ids));
        labels.push_back(g.label);
      }
    }
    TfIdf tfidf;
    tfidf.fit(docs, cfg.vocab_size);
    std::vector<SparseVector> xs, xt;
    for (const auto& d : docs) xs.push_back(tfidf.transform(d));
    for (const auto& d : test_docs) xt.push_back(tfidf.transform(d));
    LogisticRegression lr;
    lr.fit(xs, labels, cfg.classes, cfg.vocab_size);
    result.accuracies.push_back(lr.accuracy(xt, test_y));
  }
  result.mean_accuracy = mean(result.accuracies);
  return result;
}

Matrix density_grid(const ModelParams& params, const Dataset& data, const std::vector<std::size_t>& rows,
                    const GridSpec& grid) {
  if (params.config.latent != 2) throw ConfigError("density grid needs a 2-dimensional latent code");
  if (grid.cells == 0 || !(grid.hi > grid.lo)) throw ConfigError("density grid: bad grid specification");
  if (rows.empty()) throw InputError("density grid: no documents selected");
  Dataset subset;
  subset.num_classes = data.num_classes;
  for (auto r : rows) {
    if (r >= data.size()) throw InputError("density grid: document index out of range");
    subset.examples.push_back(data.examples[r]);
  }
  const auto stats = posterior_stats(params, subset);
  const double width = (grid.hi - grid.lo) / static_cast<double>(grid.cells);
  const double area = width * width;
  auto cell_masses = [&](double mu, double sd) {
    std::vector<double> m(grid.cells);
    auto cdf = [&](double x) { return 0.5 * std::erfc(-(x - mu) / (sd * std::sqrt(2.0))); };
    for (std::size_t i = 0; i < grid.cells; ++i) {
      const double a = grid.lo + width * static_cast<double>(i);
      m[i] = cdf(a + width) - cdf(a);
    }
    return m;
  };
  Matrix out(grid.cells, std::vector<double>(grid.cells, 0.0));
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t n = 0; n < rows.size(); ++n) {
    const auto mx = cell_masses(stats.mu[n][0], std::exp(0.5 * stats.log_var[n][0]));
    const auto my = cell_masses(stats.mu[n][1], std::exp(0.5 * stats.log_var[n][1]));
    for (std::size_t iy = 0; iy < grid.cells; ++iy) {
      for (std::size_t ix = 0; ix < grid.cells; ++ix) out[iy][ix] += mx[ix] * my[iy] / area * inv;
    }
  }
  return out;
}

std::vector<SweepRun> kl_sweep(const ModelConfig& model, const TrainConfig& train, const Dataset& train_data,
                               const Dataset& valid_data, const Dataset& test_data, const std::vector<double>& weights,
                               std::size_t grid_samples, const GridSpec& grid) {
  if (model.topic != TopicMode::none || model.conditional) throw ConfigError("kl sweep runs the standard VAE only");
  if (model.latent != 2) throw ConfigError("kl sweep needs latent = 2 for the density grid");
  if (weights.empty()) throw ConfigError("kl sweep needs at least one weight");
  Rng pick(derive_seed(train.seed, "grid-samples"));
  std::vector<std::size_t> rows(test_data.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), pick);
  rows.resize(std::min(grid_samples, rows.size()));

  std::vector<SweepRun> out;
  for (double w : weights) {
    TrainConfig tc = train;
    tc.kl_weight_override = w;
    auto result = tvae::train(model, tc, train_data, valid_data);
    SweepRun run;
    run.weight = w;
    run.test = evaluate(result.best, test_data);
    run.grid = density_grid(result.best, test_data, rows, grid);
    run.log = std::move(result.log);
    run.params = std::move(result.best);
    out.push_back(std::move(run));
  }
  return out;
}

}  // namespace tvae
