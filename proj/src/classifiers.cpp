#include "tvae/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tvae/data.hpp"
#include "tvae/errors.hpp"
#include "tvae/rng.hpp"

namespace tvae {

namespace {

void check_labels(const std::vector<int>& y, std::size_t n, std::size_t classes) {
  if (y.size() != n) throw DimensionError("classifier: one label per row required");
  for (int c : y) {
    if (c < 0 || static_cast<std::size_t>(c) >= classes) throw InputError("classifier: label outside [0, classes)");
  }
}

int argmax(const std::vector<double>& s) {
  return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
}

}  // namespace

// ---- SVM --------------------------------------------------------------------

void LinearSvm::fit(const Features& x, const std::vector<int>& y, std::size_t classes, double lambda,
                    std::uint64_t seed, std::size_t epochs) {
  if (x.empty()) throw InputError("svm: empty training set");
  if (classes < 2) throw InputError("svm: need at least two classes");
  if (!(lambda > 0.0)) throw ConfigError("svm: lambda must be positive");
  check_labels(y, x.size(), classes);
  classes_ = classes;
  dim_ = x.front().size();
  const std::size_t d1 = dim_ + 1;
  w_.assign(classes * d1, 0.0);
  double w_scale = 1.0;  // w_ holds w / w_scale lazily
  Rng rng(seed);
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t t = 0;
  std::vector<double> s(classes);
  for (std::size_t e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      if (x[i].size() != dim_) throw DimensionError("svm: ragged feature matrix");
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      for (std::size_t c = 0; c < classes; ++c) {
        const double* w = &w_[c * d1];
        double acc = w[dim_];
        for (std::size_t j = 0; j < dim_; ++j) acc += w[j] * x[i][j];
        s[c] = acc * w_scale;
      }
      const auto yi = static_cast<std::size_t>(y[i]);
      std::size_t r = yi == 0 ? 1 : 0;
      for (std::size_t c = 0; c < classes; ++c) {
        if (c != yi && s[c] > s[r]) r = c;
      }
      const double shrink = 1.0 - eta * lambda;
      if (shrink <= 0.0) {
        std::fill(w_.begin(), w_.end(), 0.0);
        w_scale = 1.0;
      } else {
        w_scale *= shrink;
      }
      if (1.0 + s[r] - s[yi] > 0.0) {
        const double step = eta / w_scale;
        for (std::size_t j = 0; j < dim_; ++j) {
          w_[yi * d1 + j] += step * x[i][j];
          w_[r * d1 + j] -= step * x[i][j];
        }
        w_[yi * d1 + dim_] += step;
        w_[r * d1 + dim_] -= step;
      }
      if (w_scale < 1e-100) {
        for (auto& v : w_) v *= w_scale;
        w_scale = 1.0;
      }
    }
  }
  for (auto& v : w_) v *= w_scale;
}

int LinearSvm::predict(const std::vector<double>& x) const {
  if (x.size() != dim_) throw DimensionError("svm: feature dimension mismatch");
  std::vector<double> s(classes_);
  for (std::size_t c = 0; c < classes_; ++c) {
    const double* w = &w_[c * (dim_ + 1)];
    double acc = w[dim_];
    for (std::size_t j = 0; j < dim_; ++j) acc += w[j] * x[j];
    s[c] = acc;
  }
  return argmax(s);
}

double LinearSvm::accuracy(const Features& x, const std::vector<int>& y) const {
  if (x.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < x.size(); ++i) hit += predict(x[i]) == y[i];
  return static_cast<double>(hit) / static_cast<double>(x.size());
}

// ---- standardization --------------------------------------------------------

void Standardizer::fit(const Features& x) {
  if (x.empty()) throw InputError("standardizer: empty matrix");
  const auto d = x.front().size();
  mean_.assign(d, 0.0);
  scale_.assign(d, 0.0);
  for (const auto& r : x) {
    for (std::size_t j = 0; j < d; ++j) mean_[j] += r[j];
  }
  for (auto& m : mean_) m /= static_cast<double>(x.size());
  for (const auto& r : x) {
    for (std::size_t j = 0; j < d; ++j) scale_[j] += (r[j] - mean_[j]) * (r[j] - mean_[j]);
  }
  for (auto& s : scale_) {
    s = std::sqrt(s / static_cast<double>(x.size()));
    if (s < 1e-12) s = 1.0;
  }
}

std::vector<double> Standardizer::apply(const std::vector<double>& x) const {
  if (x.size() != mean_.size()) throw DimensionError("standardizer: dimension mismatch");
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean_[j]) / scale_[j];
  return out;
}

Features Standardizer::apply(const Features& x) const {
  Features out;
  out.reserve(x.size());
  for (const auto& r : x) out.push_back(apply(r));
  return out;
}

// ---- tf-idf -------------------------------------------------------------------

void TfIdf::fit(const std::vector<std::vector<int>>& docs, std::size_t vocab_size) {
  std::vector<double> df(vocab_size, 0.0);
  std::vector<char> seen(vocab_size, 0);
  for (const auto& d : docs) {
    std::fill(seen.begin(), seen.end(), 0);
    for (int w : d) {
      if (w < kNumReserved || static_cast<std::size_t>(w) >= vocab_size || seen[w]) continue;
      seen[w] = 1;
      df[w] += 1.0;
    }
  }
  const double n = static_cast<double>(docs.size());
  idf_.resize(vocab_size);
  for (std::size_t w = 0; w < vocab_size; ++w) idf_[w] = std::log((1.0 + n) / (1.0 + df[w])) + 1.0;
}

SparseVector TfIdf::transform(const std::vector<int>& doc) const {
  std::vector<int> ids;
  for (int w : doc) {
    if (w >= kNumReserved && static_cast<std::size_t>(w) < idf_.size()) ids.push_back(w);
  }
  std::sort(ids.begin(), ids.end());
  SparseVector out;
  for (std::size_t i = 0; i < ids.size();) {
    std::size_t j = i;
    while (j < ids.size() && ids[j] == ids[i]) ++j;
    out.emplace_back(ids[i], static_cast<double>(j - i) * idf_[ids[i]]);
    i = j;
  }
  double norm = 0.0;
  for (const auto& [w, v] : out) norm += v * v;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (auto& e : out) e.second /= norm;
  }
  return out;
}

// ---- logistic regression --------------------------------------------------------

std::vector<double> LogisticRegression::scores(const SparseVector& x) const {
  std::vector<double> s(b_);
  for (const auto& [j, v] : x) {
    if (static_cast<std::size_t>(j) >= dim_) continue;
    for (std::size_t c = 0; c < classes_; ++c) s[c] += w_[c * dim_ + j] * v;
  }
  return s;
}

void LogisticRegression::fit(const std::vector<SparseVector>& x, const std::vector<int>& y, std::size_t classes,
                             std::size_t dim, double lambda, std::size_t iterations, double lr) {
  if (x.empty()) throw InputError("logistic regression: empty training set");
  if (classes < 2) throw InputError("logistic regression: need at least two classes");
  check_labels(y, x.size(), classes);
  classes_ = classes;
  dim_ = dim;
  w_.assign(classes * dim, 0.0);
  b_.assign(classes, 0.0);
  std::vector<double> gw(w_.size()), gb(classes);
  const double inv_n = 1.0 / static_cast<double>(x.size());
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t k = 0; k < w_.size(); ++k) gw[k] = lambda * w_[k];
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto s = scores(x[i]);
      const double mx = *std::max_element(s.begin(), s.end());
      double z = 0.0;
      for (auto& v : s) z += (v = std::exp(v - mx));
      for (std::size_t c = 0; c < classes; ++c) {
        const double r = (s[c] / z - (static_cast<int>(c) == y[i] ? 1.0 : 0.0)) * inv_n;
        gb[c] += r;
        for (const auto& [j, v] : x[i]) {
          if (static_cast<std::size_t>(j) < dim) gw[c * dim + j] += r * v;
        }
      }
    }
    for (std::size_t k = 0; k < w_.size(); ++k) w_[k] -= lr * gw[k];
    for (std::size_t c = 0; c < classes; ++c) b_[c] -= lr * gb[c];
  }
}

int LogisticRegression::predict(const SparseVector& x) const { return argmax(scores(x)); }

double LogisticRegression::accuracy(const std::vector<SparseVector>& x, const std::vector<int>& y) const {
  if (x.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < x.size(); ++i) hit += predict(x[i]) == y[i];
  return static_cast<double>(hit) / static_cast<double>(x.size());
}

}  // namespace tvae
