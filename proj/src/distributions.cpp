#include "tvae/distributions.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "tvae/errors.hpp"
#include "tvae/special_functions.hpp"

namespace tvae {

using ad::Node;
using ad::Tensor;

namespace {

void require_matrix_match(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + ad::shape_str(a.shape()) + " vs " +
                         ad::shape_str(b.shape()));
  }
}

std::vector<double>& grad_of(Node* n) {
  n->ensure_grad();
  return n->grad;
}

}  // namespace

DiagGaussian DiagGaussian::from_raw(Tensor mu, Tensor raw_log_var) {
  require_matrix_match(mu, raw_log_var, "DiagGaussian");
  return {std::move(mu), ad::clamp(raw_log_var, kLogVarMin, kLogVarMax)};
}

DiagGaussian DiagGaussian::standard(std::size_t rows, std::size_t dim) {
  return {Tensor::constant({rows, dim}, 0.0), Tensor::constant({rows, dim}, 0.0)};
}

DirichletParams DirichletParams::from_log(const Tensor& log_alpha) {
  return {ad::exp(ad::clamp(log_alpha, std::log(kAlphaMin), std::log(kAlphaMax)))};
}

DirichletParams DirichletParams::from_alpha(Tensor alpha) {
  if (alpha.rank() != 2) throw DimensionError("DirichletParams: alpha must be rank 2");
  for (double a : alpha.value()) {
    if (!(a > 0.0)) throw DomainError("DirichletParams: concentrations must be positive");
  }
  return {std::move(alpha)};
}

std::vector<double> DirichletParams::mean_row(std::size_t r) const {
  const auto k = dim();
  std::vector<double> out(k);
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) total += alpha.at(r, j);
  for (std::size_t j = 0; j < k; ++j) out[j] = alpha.at(r, j) / total;
  return out;
}

Tensor gaussian_sample(const DiagGaussian& q, std::span<const double> noise) {
  if (noise.size() != q.mu.size()) throw DimensionError("gaussian_sample: noise dimension does not match");
  Tensor eps = Tensor::constant(q.mu.shape(), std::vector<double>(noise.begin(), noise.end()));
  return ad::add(q.mu, ad::mul(ad::exp(ad::scale(q.log_var, 0.5)), eps));
}

// Shared kernel for both Gaussian divergences:
//   KL_i = 1/2 sum_j [ lv_p - lv_q + (exp(lv_q) + (mu_q - mu_p)^2) * exp(-lv_p) - 1 ]
// With mu_p = lv_p = 0 every operation is exact, so KL(q || N(0, I)) through
// either entry point is bit-identical.
static Tensor kl_diag_kernel(const DiagGaussian& q, const DiagGaussian& p) {
  require_matrix_match(q.mu, p.mu, "kl_gaussian");
  require_matrix_match(q.log_var, p.log_var, "kl_gaussian");
  const auto m = q.mu.rows(), d = q.mu.cols();
  std::vector<double> out(m, 0.0);
  auto mq = q.mu.value(), lq = q.log_var.value(), mp = p.mu.value(), lp = p.log_var.value();
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t k = i * d + j;
      const double diff = mq[k] - mp[k];
      acc += lp[k] - lq[k] + (std::exp(lq[k]) + diff * diff) * std::exp(-lp[k]) - 1.0;
    }
    out[i] = 0.5 * acc;
  }
  return ad::make_result(
      {m, 1}, std::move(out), {q.mu, q.log_var, p.mu, p.log_var},
      [m, d](Node& o, std::span<Node* const> in) {
        Node* muq = in[0];
        Node* lvq = in[1];
        Node* mup = in[2];
        Node* lvp = in[3];
        for (std::size_t i = 0; i < m; ++i) {
          const double go = o.grad[i];
          for (std::size_t j = 0; j < d; ++j) {
            const std::size_t k = i * d + j;
            const double inv_vp = std::exp(-lvp->value[k]);
            const double diff = muq->value[k] - mup->value[k];
            const double vq = std::exp(lvq->value[k]);
            if (muq->requires_grad) grad_of(muq)[k] += go * diff * inv_vp;
            if (mup->requires_grad) grad_of(mup)[k] -= go * diff * inv_vp;
            if (lvq->requires_grad) grad_of(lvq)[k] += go * 0.5 * (vq * inv_vp - 1.0);
            if (lvp->requires_grad) grad_of(lvp)[k] += go * 0.5 * (1.0 - (vq + diff * diff) * inv_vp);
          }
        }
      });
}

Tensor kl_gaussian_std(const DiagGaussian& q) {
  return kl_diag_kernel(q, DiagGaussian::standard(q.rows(), q.dim()));
}

Tensor kl_gaussian_gaussian(const DiagGaussian& q, const DiagGaussian& p) { return kl_diag_kernel(q, p); }

double gaussian_log_density(std::span<const double> z, std::span<const double> mu, std::span<const double> log_var) {
  if (z.size() != mu.size() || z.size() != log_var.size()) {
    throw DimensionError("gaussian_log_density: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double diff = z[j] - mu[j];
    acc += -0.5 * (std::log(2.0 * std::numbers::pi) + log_var[j] + diff * diff * std::exp(-log_var[j]));
  }
  return acc;
}

double sample_gamma(double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw DomainError("sample_gamma: alpha must be positive");
  if (alpha < 1.0) {
    // g_alpha = g_{alpha+1} * U^{1/alpha}
    const double u = uniform_open01(rng);
    return sample_gamma(alpha + 1.0, rng) * std::pow(u, 1.0 / alpha);
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open01(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double gamma_implicit_grad(double alpha, double g) {
  if (!(g > 0.0)) return 0.0;
  const double log_pdf = special::gamma_log_pdf(alpha, g);
  if (log_pdf < -700.0) return 0.0;
  return -special::gamma_p_da(alpha, g) / std::exp(log_pdf);
}

Tensor gamma_implicit(const Tensor& alpha, std::vector<double> samples) {
  if (samples.size() != alpha.size()) throw DimensionError("gamma_implicit: sample count does not match alpha");
  for (double& s : samples) {
    // A strictly positive variate keeps downstream logs and ratios finite.
    if (!(s > 0.0)) s = std::numeric_limits<double>::min();
  }
  return ad::make_result(alpha.shape(), std::move(samples), {alpha}, [](Node& o, std::span<Node* const> in) {
    Node* a = in[0];
    if (!a->requires_grad) return;
    auto& ga = grad_of(a);
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      if (o.grad[i] == 0.0) continue;
      ga[i] += o.grad[i] * gamma_implicit_grad(a->value[i], o.value[i]);
    }
  });
}

Tensor gamma_sample_implicit(const Tensor& alpha, Rng& rng) {
  std::vector<double> g(alpha.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = sample_gamma(alpha.value()[i], rng);
  return gamma_implicit(alpha, std::move(g));
}

Tensor gamma_from_quantiles(const Tensor& alpha, std::span<const double> u) {
  if (u.size() != alpha.size()) throw DimensionError("gamma_from_quantiles: quantile count does not match alpha");
  std::vector<double> g(alpha.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = special::gamma_p_inv(alpha.value()[i], u[i]);
  return gamma_implicit(alpha, std::move(g));
}

Tensor project_to_simplex(const Tensor& t) {
  return ad::normalize_rows(ad::clamp(t, kSimplexFloor, std::numeric_limits<double>::max()));
}

Tensor dirichlet_sample(const DirichletParams& params, Rng& rng) {
  Tensor g = gamma_sample_implicit(params.alpha, rng);
  return project_to_simplex(ad::normalize_rows(g));
}

Tensor dirichlet_sample_quantiles(const DirichletParams& params, std::span<const double> u) {
  Tensor g = gamma_from_quantiles(params.alpha, u);
  return project_to_simplex(ad::normalize_rows(g));
}

Tensor kl_dirichlet(const DirichletParams& q, const DirichletParams& p) {
  require_matrix_match(q.alpha, p.alpha, "kl_dirichlet");
  const auto m = q.rows(), k = q.dim();
  std::vector<double> out(m);
  auto aq = q.alpha.value(), ap = p.alpha.value();
  for (std::size_t i = 0; i < m; ++i) {
    double sq = 0.0, sp = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      sq += aq[i * k + j];
      sp += ap[i * k + j];
    }
    const double psi_sq = special::digamma(sq);
    double acc = special::lgamma(sq) - special::lgamma(sp);
    for (std::size_t j = 0; j < k; ++j) {
      const double a = aq[i * k + j], b = ap[i * k + j];
      acc += special::lgamma(b) - special::lgamma(a) + (a - b) * (special::digamma(a) - psi_sq);
    }
    out[i] = acc;
  }
  return ad::make_result({m, 1}, std::move(out), {q.alpha, p.alpha}, [m, k](Node& o, std::span<Node* const> in) {
    Node* qa = in[0];
    Node* pa = in[1];
    for (std::size_t i = 0; i < m; ++i) {
      const double go = o.grad[i];
      double sq = 0.0, sp = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        sq += qa->value[i * k + j];
        sp += pa->value[i * k + j];
      }
      const double psi_sq = special::digamma(sq);
      const double psi_sp = special::digamma(sp);
      const double tri_sq = special::trigamma(sq);
      for (std::size_t j = 0; j < k; ++j) {
        const double a = qa->value[i * k + j], b = pa->value[i * k + j];
        if (qa->requires_grad) {
          grad_of(qa)[i * k + j] += go * ((a - b) * special::trigamma(a) - tri_sq * (sq - sp));
        }
        if (pa->requires_grad) {
          grad_of(pa)[i * k + j] += go * (special::digamma(b) - psi_sp - special::digamma(a) + psi_sq);
        }
      }
    }
  });
}

Tensor dirichlet_log_prob(const Tensor& t, const DirichletParams& params) {
  require_matrix_match(t, params.alpha, "dirichlet_log_prob");
  const auto m = t.rows(), k = t.cols();
  auto tv = t.value(), av = params.alpha.value();
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double st = 0.0, sa = 0.0, acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double ti = tv[i * k + j];
      if (!(ti >= 0.5 * kSimplexFloor)) throw DomainError("dirichlet_log_prob: t has an entry below the simplex floor");
      st += ti;
      sa += av[i * k + j];
      acc += (av[i * k + j] - 1.0) * std::log(ti) - special::lgamma(av[i * k + j]);
    }
    if (std::fabs(st - 1.0) > 1e-6) throw DomainError("dirichlet_log_prob: t does not sum to 1");
    out[i] = acc + special::lgamma(sa);
  }
  return ad::make_result({m, 1}, std::move(out), {t, params.alpha}, [m, k](Node& o, std::span<Node* const> in) {
    Node* tn = in[0];
    Node* an = in[1];
    for (std::size_t i = 0; i < m; ++i) {
      const double go = o.grad[i];
      double sa = 0.0;
      for (std::size_t j = 0; j < k; ++j) sa += an->value[i * k + j];
      const double psi_sa = special::digamma(sa);
      for (std::size_t j = 0; j < k; ++j) {
        const double a = an->value[i * k + j], ti = tn->value[i * k + j];
        if (tn->requires_grad) grad_of(tn)[i * k + j] += go * (a - 1.0) / ti;
        if (an->requires_grad) grad_of(an)[i * k + j] += go * (psi_sa - special::digamma(a) + std::log(ti));
      }
    }
  });
}

}  // namespace tvae
