#pragma once

// Built-in candidate families that turn raw data into loss columns:
// sparse-mean multivariate normals with identity covariance, and univariate
// Gaussian mixtures fitted by MAP expectation-maximization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <variant>
#include <vector>

#include "lad/data.hpp"
#include "lad/errors.hpp"
#include "lad/linalg.hpp"
#include "lad/parallel.hpp"
#include "lad/rng.hpp"

namespace lad {

inline constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

// --- Sparse multivariate normal means ---------------------------------------

/// Mean vector free on `support`, zero elsewhere; identity covariance.
struct MvnSupportModel {
  std::vector<std::size_t> support;  // 0-based free coordinates
  std::size_t p = 0;

  std::size_t dim() const { return support.size(); }

  bool is_free(std::size_t j) const { return std::find(support.begin(), support.end(), j) != support.end(); }

  void validate() const {
    for (std::size_t j : support)
      if (j >= p) throw ValidationError("support index outside the ambient dimension");
  }
};

/// True mean of the seven-model sparse normal scenario.
inline Vector table1_theta0() {
  Vector theta(6);
  theta << 1.0, 1.0, 0.5, 0.5, 0.4, 0.0;
  return theta;
}

/// The seven nested/overlapping supports of the sparse normal scenario.
inline std::vector<MvnSupportModel> table1_models() {
  return {
      {{0, 3}, 6},
      {{0, 1}, 6},
      {{0, 1, 4}, 6},
      {{0, 1, 3}, 6},
      {{0, 1, 2}, 6},
      {{0, 1, 2, 3, 4}, 6},
      {{0, 1, 2, 3, 4, 5}, 6},
  };
}

/// Complexities and dims |J_k| for a list of support models.
inline ModelMeta mvn_meta(const std::vector<MvnSupportModel>& models) {
  ModelMeta meta;
  for (std::size_t k = 0; k < models.size(); ++k) {
    meta.model_names.push_back("model_" + std::to_string(k + 1));
    meta.complexity.push_back(static_cast<double>(models[k].dim()));
    meta.dims.push_back(static_cast<double>(models[k].dim()));
  }
  return meta;
}

struct MvnFit {
  Vector theta_hat;
  Vector losses;  // per-observation negative log-likelihood
  std::size_t d = 0;
};

inline MvnFit mvn_fit_and_loss(const Matrix& data, const MvnSupportModel& model) {
  if (data.rows() == 0) throw SizeError("mvn fit needs data");
  if (static_cast<std::size_t>(data.cols()) != model.p) throw SizeError("data width does not match model dimension");
  model.validate();
  const Vector xbar = data.colwise().mean().transpose();
  MvnFit fit;
  fit.theta_hat = Vector::Zero(data.cols());
  for (std::size_t j : model.support) fit.theta_hat(static_cast<Eigen::Index>(j)) = xbar(static_cast<Eigen::Index>(j));
  const double constant = 0.5 * static_cast<double>(model.p) * kLog2Pi;
  fit.losses = constant + 0.5 * (data.rowwise() - fit.theta_hat.transpose()).rowwise().squaredNorm().array();
  fit.d = model.dim();
  return fit;
}

/// Minimal KL from N(theta0, I) to the model: half the squared norm of the
/// coordinates the model forces to zero.
inline double mvn_kl_oracle(const Vector& theta0, const MvnSupportModel& model) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < theta0.size(); ++j)
    if (!model.is_free(static_cast<std::size_t>(j))) acc += theta0(j) * theta0(j);
  return 0.5 * acc;
}

/// Loss matrix with one column per support model (not bias-corrected).
inline LossMatrix mvn_loss_matrix(const Matrix& data, const std::vector<MvnSupportModel>& models) {
  Matrix z(data.rows(), static_cast<Eigen::Index>(models.size()));
  for (std::size_t k = 0; k < models.size(); ++k) z.col(static_cast<Eigen::Index>(k)) = mvn_fit_and_loss(data, models[k]).losses;
  return LossMatrix(std::move(z), mvn_meta(models).model_names);
}

// --- Univariate Gaussian mixtures -------------------------------------------

/// Normal-inverse-gamma component prior plus a flat Dirichlet on the weights.
struct GmmPrior {
  double m0 = 0.0;
  double kappa0 = 0.01;
  double s0_sq = 1.0;
  double nu0 = 10.0;

  /// m0 = mean, s0^2 = Var(x) / k^2 with the 1/n variance.
  static GmmPrior defaults(const Vector& x, std::size_t k) {
    GmmPrior prior;
    prior.m0 = x.mean();
    const double var = (x.array() - prior.m0).square().mean();
    prior.s0_sq = var / static_cast<double>(k * k);
    return prior;
  }
};

struct GmmFit {
  std::size_t k = 0;
  Vector weights;
  Vector means;
  Vector vars;
  double loglik = -std::numeric_limits<double>::infinity();    // observed log-likelihood
  double objective = -std::numeric_limits<double>::infinity();  // loglik + log prior (up to a constant)
  std::size_t iterations = 0;
  std::size_t restart = 0;

  std::size_t d() const { return 3 * k - 1; }

  double log_density(double x) const {
    double hi = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(k);
    for (std::size_t j = 0; j < k; ++j) {
      const auto ej = static_cast<Eigen::Index>(j);
      if (weights(ej) <= 0.0) {
        terms[j] = -std::numeric_limits<double>::infinity();
        continue;
      }
      const double dx = x - means(ej);
      terms[j] = std::log(weights(ej)) - 0.5 * (kLog2Pi + std::log(vars(ej)) + dx * dx / vars(ej));
      hi = std::max(hi, terms[j]);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - hi);
    return hi + std::log(acc);
  }

  double nll(double x) const { return -log_density(x); }
};

struct GmmResult {
  GmmFit fit;
  Vector losses;
};

namespace detail {

inline double gmm_log_prior(const GmmFit& fit, const GmmPrior& prior) {
  double acc = 0.0;
  for (std::size_t j = 0; j < fit.k; ++j) {
    const auto ej = static_cast<Eigen::Index>(j);
    const double s2 = fit.vars(ej);
    const double dm = fit.means(ej) - prior.m0;
    acc += -(0.5 * prior.nu0 + 1.5) * std::log(s2) - (prior.s0_sq + prior.kappa0 * dm * dm) / (2.0 * s2);
  }
  return acc;
}

/// E-step: fills responsibilities, returns observed log-likelihood.
inline double gmm_e_step(const Vector& x, const GmmFit& fit, Matrix& resp) {
  const auto n = x.size();
  const auto k = static_cast<Eigen::Index>(fit.k);
  double loglik = 0.0;
  Vector logs(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < k; ++j) {
      if (fit.weights(j) <= 0.0) {
        logs(j) = -std::numeric_limits<double>::infinity();
        continue;
      }
      const double dx = x(i) - fit.means(j);
      logs(j) = std::log(fit.weights(j)) - 0.5 * (kLog2Pi + std::log(fit.vars(j)) + dx * dx / fit.vars(j));
      hi = std::max(hi, logs(j));
    }
    double acc = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) acc += std::exp(logs(j) - hi);
    const double lse = hi + std::log(acc);
    loglik += lse;
    for (Eigen::Index j = 0; j < k; ++j) resp(i, j) = std::exp(logs(j) - lse);
  }
  return loglik;
}

inline void gmm_m_step(const Vector& x, const Matrix& resp, const GmmPrior& prior, GmmFit& fit) {
  const double n = static_cast<double>(x.size());
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(fit.k); ++j) {
    const double nj = resp.col(j).sum();
    const double xbar = nj > 0.0 ? resp.col(j).dot(x) / nj : prior.m0;
    const double scatter = nj > 0.0 ? (resp.col(j).array() * (x.array() - xbar).square()).sum() : 0.0;
    fit.weights(j) = nj / n;
    fit.means(j) = (prior.kappa0 * prior.m0 + nj * xbar) / (prior.kappa0 + nj);
    const double shrink = prior.kappa0 * nj / (prior.kappa0 + nj) * (xbar - prior.m0) * (xbar - prior.m0);
    fit.vars(j) = (prior.s0_sq + shrink + scatter) / (prior.nu0 + nj + 3.0);
  }
}

}  // namespace detail

struct EmOptions {
  double tolerance = 1e-8;
  std::size_t max_iterations = 500;
};

/// One MAP-EM run from a given starting point. `trace` receives the objective
/// at the start and after every iteration.
inline GmmFit gmm_em_run(const Vector& x, GmmFit init, const GmmPrior& prior, const EmOptions& options = {},
                         std::vector<double>* trace = nullptr) {
  GmmFit fit = std::move(init);
  Matrix resp(x.size(), static_cast<Eigen::Index>(fit.k));
  double loglik = detail::gmm_e_step(x, fit, resp);
  double objective = loglik + detail::gmm_log_prior(fit, prior);
  if (trace) trace->push_back(objective);
  std::size_t iter = 0;
  while (iter < options.max_iterations) {
    detail::gmm_m_step(x, resp, prior, fit);
    ++iter;
    const double next_loglik = detail::gmm_e_step(x, fit, resp);
    const double next_objective = next_loglik + detail::gmm_log_prior(fit, prior);
    if (trace) trace->push_back(next_objective);
    const double improvement = next_objective - objective;
    loglik = next_loglik;
    objective = next_objective;
    if (improvement < options.tolerance) break;
  }
  fit.loglik = loglik;
  fit.objective = objective;
  fit.iterations = iter;
  return fit;
}

/// Random start: means uniform over the 5%-95% sample quantile range,
/// variances s0^2, uniform weights.
inline GmmFit gmm_random_start(const Vector& x, std::size_t k, const GmmPrior& prior, RandomStream& rng) {
  std::vector<double> sorted(x.data(), x.data() + x.size());
  std::sort(sorted.begin(), sorted.end());
  const auto quantile = [&](double prob) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  const double lo = quantile(0.05), hi = quantile(0.95);
  GmmFit fit;
  fit.k = k;
  fit.weights = Vector::Constant(static_cast<Eigen::Index>(k), 1.0 / static_cast<double>(k));
  fit.means.resize(static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < k; ++j) fit.means(static_cast<Eigen::Index>(j)) = rng.uniform(lo, hi);
  fit.vars = Vector::Constant(static_cast<Eigen::Index>(k), prior.s0_sq);
  return fit;
}

/// Best of `restarts` MAP-EM runs by observed log-likelihood (ties: lowest
/// restart index). Restart r draws its start from stream (derive_seed(seed, k), r).
inline GmmResult gmm_fit_em(const Vector& x, std::size_t k, std::size_t restarts, std::uint64_t seed,
                            const EmOptions& options = {}) {
  const auto n = static_cast<std::size_t>(x.size());
  if (k < 1) throw ValidationError("mixture needs at least one component");
  if (k > n) throw SizeError("more mixture components (" + std::to_string(k) + ") than observations (" + std::to_string(n) + ")");
  if (restarts < 1) throw ValidationError("need at least one EM restart");
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (!std::isfinite(x(i))) throw ValidationError("non-finite observation at row " + std::to_string(i + 1));
  if (x.maxCoeff() == x.minCoeff()) throw ValidationError("degenerate data: all observations are equal");

  const GmmPrior prior = GmmPrior::defaults(x, k);
  std::vector<GmmFit> fits(restarts);
  parallel_for(restarts, [&](std::size_t r) {
    RandomStream rng(derive_seed(seed, k), r);
    fits[r] = gmm_em_run(x, gmm_random_start(x, k, prior, rng), prior, options);
    fits[r].restart = r;
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < restarts; ++r)
    if (fits[r].loglik > fits[best].loglik) best = r;

  GmmResult result;
  result.fit = fits[best];
  result.losses.resize(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) result.losses(i) = result.fit.nll(x(i));
  return result;
}

// --- Noise references -----------------------------------------------------------

enum class NoiseKind { uniform_range, standard_mvn };

/// Mean loss of a deliberately signal-free reference model.
inline double noise_reference(const Matrix& data, NoiseKind kind) {
  if (data.rows() == 0) throw SizeError("noise reference needs data");
  switch (kind) {
    case NoiseKind::uniform_range: {
      if (data.cols() != 1) throw ValidationError("uniform-range noise reference needs univariate data");
      const double range = data.maxCoeff() - data.minCoeff();
      if (!(range > 0.0)) throw ValidationError("uniform-range noise reference needs max > min");
      return std::log(range);
    }
    case NoiseKind::standard_mvn: {
      const double constant = 0.5 * static_cast<double>(data.cols()) * kLog2Pi;
      std::vector<double> losses(static_cast<std::size_t>(data.rows()));
      for (Eigen::Index i = 0; i < data.rows(); ++i) losses[static_cast<std::size_t>(i)] = constant + 0.5 * data.row(i).squaredNorm();
      return pairwise_mean(losses);
    }
  }
  return 0.0;
}

// --- Data-generating processes ----------------------------------------------------

struct MvnDgp {
  Vector theta0;
};

struct GmmDgp {
  Vector weights;
  Vector means;
  Vector vars;
};

struct DgpSpec {
  std::variant<MvnDgp, GmmDgp> kind;
  std::uint64_t seed = 0;
  std::size_t n = 0;
};

/// n rows; row i reads stream (seed, i). MVN rows are theta0 + N(0, I); GMM
/// rows pick a component then add scaled normal noise.
inline Matrix simulate_dgp(const DgpSpec& spec) {
  if (const auto* mvn = std::get_if<MvnDgp>(&spec.kind)) {
    const auto p = mvn->theta0.size();
    Matrix out(static_cast<Eigen::Index>(spec.n), p);
    parallel_for(spec.n, [&](std::size_t i) {
      RandomStream rng(spec.seed, i);
      for (Eigen::Index j = 0; j < p; ++j) out(static_cast<Eigen::Index>(i), j) = mvn->theta0(j) + rng.normal();
    });
    return out;
  }
  const auto& gmm = std::get<GmmDgp>(spec.kind);
  if (gmm.weights.size() != gmm.means.size() || gmm.vars.size() != gmm.means.size() || gmm.means.size() == 0)
    throw ValidationError("mixture DGP arrays must be nonempty and equal length");
  if ((gmm.vars.array() <= 0.0).any() || (gmm.weights.array() < 0.0).any() || std::abs(gmm.weights.sum() - 1.0) > 1e-10)
    throw ValidationError("mixture DGP needs positive variances and simplex weights");
  Matrix out(static_cast<Eigen::Index>(spec.n), 1);
  parallel_for(spec.n, [&](std::size_t i) {
    RandomStream rng(spec.seed, i);
    const auto j = static_cast<Eigen::Index>(rng.categorical(gmm.weights));
    out(static_cast<Eigen::Index>(i), 0) = gmm.means(j) + std::sqrt(gmm.vars(j)) * rng.normal();
  });
  return out;
}

/// Density of a mixture DGP, used for quadrature oracles.
inline double gmm_dgp_log_density(const GmmDgp& gmm, double x) {
  GmmFit fit;
  fit.k = static_cast<std::size_t>(gmm.means.size());
  fit.weights = gmm.weights;
  fit.means = gmm.means;
  fit.vars = gmm.vars;
  return fit.log_density(x);
}

}  // namespace lad
