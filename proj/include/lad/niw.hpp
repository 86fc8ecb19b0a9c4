#pragma once

// Conjugate Normal-Inverse-Wishart inference on the mean loss vector, plus the
// per-coordinate normal-inverse-gamma variant with matched hyperparameters.

#include <cmath>
#include <cstdint>
#include <vector>

#include "lad/data.hpp"
#include "lad/errors.hpp"
#include "lad/linalg.hpp"
#include "lad/parallel.hpp"
#include "lad/rng.hpp"

namespace lad {

/// Parameters (mu, lambda, psi, nu) of NIW(mu, Sigma): Sigma ~ IW(psi, nu),
/// mu | Sigma ~ N(mu, Sigma / lambda).
struct NiwState {
  Vector mu;
  double lambda = 1.0;
  Matrix psi;
  double nu = 1.0;

  std::size_t K() const { return static_cast<std::size_t>(mu.size()); }

  void validate() const {
    const auto k = static_cast<double>(K());
    if (psi.rows() != mu.size() || psi.cols() != mu.size()) throw SizeError("NIW psi has wrong dimensions");
    if (!(lambda > 0.0)) throw ValidationError("NIW lambda must be positive");
    if (!(nu > k - 1.0)) throw ValidationError("NIW nu must exceed K - 1");
    if (!is_symmetric(psi)) throw ValidationError("NIW psi must be symmetric");
    cholesky_lower(psi);
  }
};

/// Weakly informative default: mu = 0, lambda = 0.01, psi = I, nu = K + 2.
inline NiwState default_prior(std::size_t k) {
  if (k < 1) throw ValidationError("default_prior requires K >= 1");
  const auto dim = static_cast<Eigen::Index>(k);
  return NiwState{Vector::Zero(dim), 0.01, Matrix::Identity(dim, dim), static_cast<double>(k) + 2.0};
}

inline NiwState niw_update(const NiwState& prior, const LossSummary& summary) {
  if (summary.n == 0) return prior;
  if (static_cast<std::size_t>(summary.mean.size()) != prior.K() || summary.cov.rows() != summary.mean.size())
    throw SizeError("NIW prior dimension does not match summary");
  const double n = static_cast<double>(summary.n);
  NiwState post;
  post.lambda = prior.lambda + n;
  post.mu = (prior.lambda * prior.mu + n * summary.mean) / post.lambda;
  const Vector diff = summary.mean - prior.mu;
  post.psi = symmetrize(prior.psi + n * summary.cov + (prior.lambda * n / post.lambda) * diff * diff.transpose());
  post.nu = prior.nu + n;
  return post;
}

enum class CovarianceVariant { full, diagonal };

struct PosteriorDraws {
  Matrix mus;                  // T x K
  std::vector<Matrix> sigmas;  // empty in compact mode
  std::uint64_t seed = 0;
  CovarianceVariant variant = CovarianceVariant::full;

  std::size_t T() const { return static_cast<std::size_t>(mus.rows()); }
  std::size_t K() const { return static_cast<std::size_t>(mus.cols()); }
};

enum class DrawStorage { compact, full };

/// One Wishart(nu, V) draw given the lower Cholesky factor of V (Bartlett).
inline Matrix sample_wishart_from_factor(const Matrix& scale_factor, double nu, RandomStream& rng) {
  const Eigen::Index k = scale_factor.rows();
  Matrix bartlett = Matrix::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    bartlett(i, i) = std::sqrt(rng.chi_square(nu - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) bartlett(i, j) = rng.normal();
  }
  const Matrix la = scale_factor * bartlett.triangularView<Eigen::Lower>();
  return symmetrize(la * la.transpose());
}

inline Matrix sample_wishart(const Matrix& scale, double nu, RandomStream& rng) {
  if (!(nu > static_cast<double>(scale.rows()) - 1.0)) throw ValidationError("Wishart dof must exceed K - 1");
  return sample_wishart_from_factor(cholesky_lower(scale), nu, rng);
}

/// T draws of (mu, Sigma) from the NIW posterior. Draw t reads only the
/// stream (seed, t), so results are independent of the thread schedule.
inline PosteriorDraws sample_posterior(const NiwState& post, std::size_t T, std::uint64_t seed,
                                       DrawStorage storage = DrawStorage::compact) {
  if (T < 1) throw ValidationError("draw count must be at least 1");
  post.validate();
  const auto k = static_cast<Eigen::Index>(post.K());
  // V = psi^{-1}; its lower factor is taken from the Cholesky of V itself.
  const Matrix wishart_factor = cholesky_lower(spd_inverse(post.psi));

  PosteriorDraws draws;
  draws.seed = seed;
  draws.variant = CovarianceVariant::full;
  draws.mus.resize(static_cast<Eigen::Index>(T), k);
  if (storage == DrawStorage::full) draws.sigmas.resize(T);

  parallel_for(T, [&](std::size_t t) {
    RandomStream rng(seed, t);
    const Matrix w = sample_wishart_from_factor(wishart_factor, post.nu, rng);
    const Matrix sigma = spd_inverse(w);
    const Matrix mean_factor = cholesky_lower(sigma / post.lambda);
    Vector z(k);
    for (Eigen::Index j = 0; j < k; ++j) z(j) = rng.normal();
    draws.mus.row(static_cast<Eigen::Index>(t)) = (post.mu + mean_factor * z).transpose();
    if (storage == DrawStorage::full) draws.sigmas[t] = sigma;
  });
  return draws;
}

/// Independent per-coordinate normal-inverse-gamma parameters.
struct NigState {
  Vector a;       // shape
  Vector b;       // scale
  Vector mu;      // mean
  Vector lambda;  // precision scale

  std::size_t K() const { return static_cast<std::size_t>(mu.size()); }
};

/// Matches a NIW prior: a = (nu - K + 1) / 2, b = psi_kk / 2, same mu and lambda.
inline NigState nig_match_prior(const NiwState& prior) {
  const auto k = static_cast<Eigen::Index>(prior.K());
  const double shape = (prior.nu - static_cast<double>(k) + 1.0) / 2.0;
  if (!(shape > 0.0)) throw ValidationError("diagonal prior shape (nu - K + 1) / 2 must be positive");
  NigState nig;
  nig.a = Vector::Constant(k, shape);
  nig.b = prior.psi.diagonal() / 2.0;
  for (Eigen::Index j = 0; j < k; ++j)
    if (!(nig.b(j) > 0.0)) throw ValidationError("diagonal prior scale must be positive");
  nig.mu = prior.mu;
  nig.lambda = Vector::Constant(k, prior.lambda);
  return nig;
}

inline NigState nig_update(const NigState& prior, const LossSummary& summary) {
  if (summary.n == 0) return prior;
  if (static_cast<std::size_t>(summary.mean.size()) != prior.K()) throw SizeError("NIG prior dimension does not match summary");
  const double n = static_cast<double>(summary.n);
  NigState post;
  post.lambda = prior.lambda.array() + n;
  post.mu = (prior.lambda.array() * prior.mu.array() + n * summary.mean.array()) / post.lambda.array();
  post.a = prior.a.array() + n / 2.0;
  const Vector diff = summary.mean - prior.mu;
  // sum_i (Z_ik - Zbar_k)^2 = n * S_kk under the 1/n convention.
  post.b = prior.b.array() + 0.5 * n * summary.cov.diagonal().array() +
           0.5 * (prior.lambda.array() * n / post.lambda.array()) * diff.array().square();
  return post;
}

inline PosteriorDraws sample_nig(const NigState& post, std::size_t T, std::uint64_t seed,
                                 DrawStorage storage = DrawStorage::compact) {
  if (T < 1) throw ValidationError("draw count must be at least 1");
  const auto k = static_cast<Eigen::Index>(post.K());
  PosteriorDraws draws;
  draws.seed = seed;
  draws.variant = CovarianceVariant::diagonal;
  draws.mus.resize(static_cast<Eigen::Index>(T), k);
  if (storage == DrawStorage::full) draws.sigmas.resize(T);
  parallel_for(T, [&](std::size_t t) {
    RandomStream rng(seed, t);
    Vector variances(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      variances(j) = rng.inverse_gamma(post.a(j), post.b(j));
      draws.mus(static_cast<Eigen::Index>(t), j) = post.mu(j) + std::sqrt(variances(j) / post.lambda(j)) * rng.normal();
    }
    if (storage == DrawStorage::full) draws.sigmas[t] = variances.asDiagonal();
  });
  return draws;
}

/// Diagonal-covariance posterior with hyperparameters matched to a NIW prior.
inline PosteriorDraws nig_match_update_sample(const NiwState& niw_prior, const LossSummary& summary, std::size_t T,
                                              std::uint64_t seed, DrawStorage storage = DrawStorage::compact) {
  return sample_nig(nig_update(nig_match_prior(niw_prior), summary), T, seed, storage);
}

}  // namespace lad
