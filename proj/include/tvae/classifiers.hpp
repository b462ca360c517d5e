#pragma once

// Linear classifiers used by the evaluation protocols.

#include <cstdint>
#include <utility>
#include <vector>

namespace tvae {

using Features = std::vector<std::vector<double>>;

/// Crammer-Singer multiclass linear SVM, L2-regularized, trained by
/// Pegasos-style stochastic sub-gradient steps. A constant feature supplies
/// the bias.
class LinearSvm {
 public:
  LinearSvm() = default;
  void fit(const Features& x, const std::vector<int>& y, std::size_t classes, double lambda, std::uint64_t seed,
           std::size_t epochs = 30);
  int predict(const std::vector<double>& x) const;
  double accuracy(const Features& x, const std::vector<int>& y) const;

 private:
  std::size_t classes_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> w_;  // classes x (dim + 1)
};

/// Per-column standardization fitted on one matrix and applied to others.
class Standardizer {
 public:
  void fit(const Features& x);
  std::vector<double> apply(const std::vector<double>& x) const;
  Features apply(const Features& x) const;

 private:
  std::vector<double> mean_, scale_;
};

using SparseVector = std::vector<std::pair<int, double>>;

/// Raw term counts times smoothed idf, L2-normalized. Reserved ids are skipped.
class TfIdf {
 public:
  void fit(const std::vector<std::vector<int>>& docs, std::size_t vocab_size);
  SparseVector transform(const std::vector<int>& doc) const;
  std::size_t dim() const { return idf_.size(); }

 private:
  std::vector<double> idf_;
};

/// Multinomial logistic regression with an L2 penalty, full-batch gradient
/// descent on sparse inputs.
class LogisticRegression {
 public:
  void fit(const std::vector<SparseVector>& x, const std::vector<int>& y, std::size_t classes, std::size_t dim,
           double lambda = 1e-4, std::size_t iterations = 300, double lr = 1.0);
  int predict(const SparseVector& x) const;
  double accuracy(const std::vector<SparseVector>& x, const std::vector<int>& y) const;

 private:
  std::vector<double> scores(const SparseVector& x) const;
  std::size_t classes_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> w_;  // classes x dim
  std::vector<double> b_;
};

}  // namespace tvae
