#pragma once

// Reference selection rules: information criteria, the closed-form coarsened
// (power) posterior for sparse normal means, and Evanno's delta-k heuristic.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "lad/errors.hpp"
#include "lad/linalg.hpp"
#include "lad/models.hpp"

namespace lad {

enum class InfoCriterion { aic, bic };

/// One-hot weight on the model with the smallest criterion (lowest index wins ties).
inline Vector ic_weights(const Vector& total_nll, const Vector& dims, std::size_t n, InfoCriterion kind) {
  if (n < 1) throw ValidationError("information criteria need n >= 1");
  if (total_nll.size() != dims.size() || total_nll.size() == 0) throw SizeError("criterion inputs differ in length");
  const double per_dim = kind == InfoCriterion::aic ? 2.0 : std::log(static_cast<double>(n));
  Eigen::Index best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < total_nll.size(); ++k) {
    const double score = 2.0 * total_nll(k) + per_dim * dims(k);
    if (score < best_score) {
      best_score = score;
      best = k;
    }
  }
  Vector w = Vector::Zero(total_nll.size());
  w(best) = 1.0;
  return w;
}

/// Power-posterior settings. alpha = +infinity gives the standard posterior.
struct CPostConfig {
  double alpha = std::numeric_limits<double>::infinity();
  double kappa0 = 1.0;
  std::vector<Vector> theta0_prior;  // per model, on the free coordinates; empty means zeros

  void validate() const {
    if (!(alpha > 0.0)) throw ValidationError("c-posterior alpha must be positive");
    if (!(kappa0 > 0.0)) throw ValidationError("c-posterior kappa0 must be positive");
  }
};

/// Log marginal power likelihood of each support model, up to a shared constant.
inline Vector cpost_log_marginals(const Matrix& data, const std::vector<MvnSupportModel>& models, const CPostConfig& cfg) {
  cfg.validate();
  if (data.rows() == 0) throw SizeError("c-posterior needs data");
  const double n = static_cast<double>(data.rows());
  const double zeta = std::isinf(cfg.alpha) ? 1.0 : cfg.alpha / (cfg.alpha + n);
  const double eff = zeta * n;
  const Vector xbar = data.colwise().mean().transpose();
  Vector out(static_cast<Eigen::Index>(models.size()));
  for (std::size_t k = 0; k < models.size(); ++k) {
    const auto& model = models[k];
    model.validate();
    double fitted = 0.0, excluded = 0.0;
    std::size_t slot = 0;
    for (Eigen::Index j = 0; j < xbar.size(); ++j) {
      if (model.is_free(static_cast<std::size_t>(j))) {
        double prior_mean = 0.0;
        if (k < cfg.theta0_prior.size() && cfg.theta0_prior[k].size() > 0) prior_mean = cfg.theta0_prior[k](static_cast<Eigen::Index>(slot));
        ++slot;
        fitted += (xbar(j) - prior_mean) * (xbar(j) - prior_mean);
      } else {
        excluded += xbar(j) * xbar(j);
      }
    }
    const double d = static_cast<double>(model.dim());
    out(static_cast<Eigen::Index>(k)) = 0.5 * d * std::log(cfg.kappa0 / (cfg.kappa0 + eff)) -
                                        cfg.kappa0 * eff / (2.0 * (cfg.kappa0 + eff)) * fitted - 0.5 * eff * excluded;
  }
  return out;
}

/// Posterior model probabilities under a uniform model prior.
inline Vector cpost_weights(const Vector& log_marginals) {
  if (log_marginals.size() == 0) throw SizeError("no models");
  if (!log_marginals.allFinite()) throw ValidationError("log marginals must be finite");
  const double hi = log_marginals.maxCoeff();
  Vector w = (log_marginals.array() - hi).exp();
  return w / w.sum();
}

struct EvannoResult {
  Vector means;        // mean L(k) over runs
  Vector first_diffs;  // mean L(k) - mean L(k-1); NaN at k = 1
  Vector delta_k;      // NaN at both endpoints; +inf where the sd is zero
  std::vector<bool> zero_sd;
};

/// Evanno's delta-k: mean |L(k+1) - 2L(k) + L(k-1)| over runs divided by the
/// across-run sd of L(k). Rows are runs, columns k = 1..K.
inline EvannoResult evanno_delta_k(const Matrix& scores) {
  if (scores.rows() < 2) throw SizeError("delta-k needs at least two runs");
  if (scores.cols() < 3) throw SizeError("delta-k needs at least three values of k");
  const auto runs = scores.rows();
  const auto K = scores.cols();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EvannoResult out;
  out.means = scores.colwise().mean().transpose();
  out.first_diffs = Vector::Constant(K, nan);
  for (Eigen::Index k = 1; k < K; ++k) out.first_diffs(k) = out.means(k) - out.means(k - 1);
  out.delta_k = Vector::Constant(K, nan);
  out.zero_sd.assign(static_cast<std::size_t>(K), false);
  for (Eigen::Index k = 1; k + 1 < K; ++k) {
    const double second = (scores.col(k + 1) - 2.0 * scores.col(k) + scores.col(k - 1)).cwiseAbs().mean();
    const double sd = std::sqrt((scores.col(k).array() - out.means(k)).square().sum() / static_cast<double>(runs - 1));
    if (sd == 0.0) {
      out.zero_sd[static_cast<std::size_t>(k)] = true;
      out.delta_k(k) = second == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
      out.delta_k(k) = second / sd;
    }
  }
  return out;
}

}  // namespace lad
