#pragma once

// Tolerance-based selection over posterior draws of the mean loss vector.
//
// A model is delta-optimal when its mean loss is within delta of the best one.
// Among delta-optimal models the lowest complexity wins, and within that
// complexity class the lowest mean loss wins (the target set). The smooth
// score of model k is
//
//   w(k) = P(minimal delta-optimal complexity == c(k)) * E[exp(-alpha_n * gap_k)]
//
// where gap_k is the distance from mu_k to the best mean loss in its class.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lad/data.hpp"
#include "lad/errors.hpp"
#include "lad/linalg.hpp"
#include "lad/niw.hpp"
#include "lad/parallel.hpp"

namespace lad {

using IndexSet = std::vector<std::size_t>;

/// Groups models by exact complexity value.
class ComplexityClasses {
 public:
  explicit ComplexityClasses(std::span<const double> complexity) : class_of_(complexity.size()) {
    std::vector<double> values(complexity.begin(), complexity.end());
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    values_ = values;
    members_.resize(values_.size());
    for (std::size_t k = 0; k < complexity.size(); ++k) {
      const auto it = std::lower_bound(values_.begin(), values_.end(), complexity[k]);
      class_of_[k] = static_cast<std::size_t>(it - values_.begin());
      members_[class_of_[k]].push_back(k);
    }
  }
  explicit ComplexityClasses(const ModelMeta& meta) : ComplexityClasses(std::span<const double>(meta.complexity)) {}

  std::size_t count() const { return values_.size(); }
  std::size_t class_of(std::size_t k) const { return class_of_[k]; }
  double value(std::size_t cls) const { return values_[cls]; }
  const IndexSet& members(std::size_t cls) const { return members_[cls]; }
  std::size_t K() const { return class_of_.size(); }

 private:
  std::vector<double> values_;  // ascending
  std::vector<std::size_t> class_of_;
  std::vector<IndexSet> members_;
};

namespace detail {

template <typename Row>
double row_min(const Row& mu) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < mu.size(); ++k) best = std::min(best, mu(k));
  return best;
}

/// Class index of the minimal delta-optimal complexity for one mu vector.
template <typename Row>
std::size_t minimal_class(const Row& mu, double delta, const ComplexityClasses& classes) {
  const double threshold = row_min(mu) + delta;
  std::size_t best = classes.count();
  for (std::size_t k = 0; k < classes.K(); ++k)
    if (mu(static_cast<Eigen::Index>(k)) <= threshold) best = std::min(best, classes.class_of(k));
  return best;
}

template <typename Row>
std::vector<double> class_minima(const Row& mu, const ComplexityClasses& classes) {
  std::vector<double> minima(classes.count(), std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < classes.K(); ++k)
    minima[classes.class_of(k)] = std::min(minima[classes.class_of(k)], mu(static_cast<Eigen::Index>(k)));
  return minima;
}

inline void check_meta(const ModelMeta& meta, std::size_t k) {
  if (meta.complexity.size() != k)
    throw SizeError("meta has " + std::to_string(meta.complexity.size()) + " models, draws have " + std::to_string(k));
}

/// Column means of a T x K per-draw table with fixed-shape pairwise sums.
inline Vector column_means(const Matrix& per_draw) {
  Vector out(per_draw.cols());
  std::vector<double> column(static_cast<std::size_t>(per_draw.rows()));
  for (Eigen::Index k = 0; k < per_draw.cols(); ++k) {
    for (Eigen::Index t = 0; t < per_draw.rows(); ++t) column[static_cast<std::size_t>(t)] = per_draw(t, k);
    out(k) = pairwise_mean(column);
  }
  return out;
}

}  // namespace detail

inline IndexSet delta_optimal_set(const Vector& mu, double delta) {
  const double threshold = detail::row_min(mu) + delta;
  IndexSet out;
  for (Eigen::Index k = 0; k < mu.size(); ++k)
    if (mu(k) <= threshold) out.push_back(static_cast<std::size_t>(k));
  return out;
}

inline double minimal_complexity(const Vector& mu, double delta, const ModelMeta& meta) {
  detail::check_meta(meta, static_cast<std::size_t>(mu.size()));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k : delta_optimal_set(mu, delta)) best = std::min(best, meta.complexity[k]);
  return best;
}

/// Best minimal-complexity delta-optimal models; exact ties are all returned.
inline IndexSet target_set(const Vector& mu, double delta, const ModelMeta& meta) {
  const double c_star = minimal_complexity(mu, delta, meta);
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < mu.size(); ++k)
    if (meta.complexity[static_cast<std::size_t>(k)] == c_star) best = std::min(best, mu(k));
  IndexSet out;
  for (Eigen::Index k = 0; k < mu.size(); ++k)
    if (meta.complexity[static_cast<std::size_t>(k)] == c_star && mu(k) == best) out.push_back(static_cast<std::size_t>(k));
  return out;
}

/// Within-class soft-selection factor exp(-alpha_n * (mu_k - class min)).
inline Vector soft_scores(const Vector& mu, const ModelMeta& meta, double alpha_n) {
  if (!(alpha_n > 0.0)) throw ValidationError("alpha_n must be positive");
  detail::check_meta(meta, static_cast<std::size_t>(mu.size()));
  const ComplexityClasses classes(meta);
  const auto minima = detail::class_minima(mu, classes);
  Vector r(mu.size());
  for (Eigen::Index k = 0; k < mu.size(); ++k) {
    const double value = std::exp(-alpha_n * (mu(k) - minima[classes.class_of(static_cast<std::size_t>(k))]));
    r(k) = value < 1e-300 ? 0.0 : value;
  }
  return r;
}

/// Between-class factor, within-class factor, and their product.
struct ScoreTriple {
  Vector p_hat;
  Vector r_hat;
  Vector w_hat;
};

inline ScoreTriple slc_scores(const Matrix& mu_draws, const ModelMeta& meta, double delta, double alpha_n) {
  if (mu_draws.rows() < 1) throw ValidationError("no posterior draws");
  if (!(alpha_n > 0.0)) throw ValidationError("alpha_n must be positive");
  const auto K = static_cast<std::size_t>(mu_draws.cols());
  detail::check_meta(meta, K);
  const ComplexityClasses classes(meta);
  const auto T = static_cast<std::size_t>(mu_draws.rows());
  Matrix between(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(K));
  Matrix within(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(K));
  parallel_for(T, [&](std::size_t t) {
    const auto row = mu_draws.row(static_cast<Eigen::Index>(t));
    const std::size_t c_star = detail::minimal_class(row, delta, classes);
    const auto minima = detail::class_minima(row, classes);
    for (std::size_t k = 0; k < K; ++k) {
      const auto ek = static_cast<Eigen::Index>(k);
      const auto et = static_cast<Eigen::Index>(t);
      between(et, ek) = classes.class_of(k) == c_star ? 1.0 : 0.0;
      const double r = std::exp(-alpha_n * (row(ek) - minima[classes.class_of(k)]));
      within(et, ek) = r < 1e-300 ? 0.0 : r;
    }
  });
  ScoreTriple out{detail::column_means(between), detail::column_means(within), {}};
  out.w_hat = out.p_hat.cwiseProduct(out.r_hat);
  return out;
}

inline ScoreTriple slc_scores(const PosteriorDraws& draws, const ModelMeta& meta, double delta, double alpha_n) {
  return slc_scores(draws.mus, meta, delta, alpha_n);
}

/// As slc_scores with the within-class factor replaced by the hard-minimum
/// indicator. Exact ties split the indicator evenly so each draw contributes
/// exactly one unit per class.
inline ScoreTriple hard_scores(const Matrix& mu_draws, const ModelMeta& meta, double delta) {
  if (mu_draws.rows() < 1) throw ValidationError("no posterior draws");
  const auto K = static_cast<std::size_t>(mu_draws.cols());
  detail::check_meta(meta, K);
  const ComplexityClasses classes(meta);
  const auto T = static_cast<std::size_t>(mu_draws.rows());
  Matrix between(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(K));
  Matrix within(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(K));
  parallel_for(T, [&](std::size_t t) {
    const auto row = mu_draws.row(static_cast<Eigen::Index>(t));
    const auto et = static_cast<Eigen::Index>(t);
    const std::size_t c_star = detail::minimal_class(row, delta, classes);
    const auto minima = detail::class_minima(row, classes);
    std::vector<int> attaining(classes.count(), 0);
    for (std::size_t k = 0; k < K; ++k)
      if (row(static_cast<Eigen::Index>(k)) == minima[classes.class_of(k)]) ++attaining[classes.class_of(k)];
    for (std::size_t k = 0; k < K; ++k) {
      const auto ek = static_cast<Eigen::Index>(k);
      between(et, ek) = classes.class_of(k) == c_star ? 1.0 : 0.0;
      within(et, ek) = row(ek) == minima[classes.class_of(k)] ? 1.0 / attaining[classes.class_of(k)] : 0.0;
    }
  });
  ScoreTriple out{detail::column_means(between), detail::column_means(within), {}};
  out.w_hat = out.p_hat.cwiseProduct(out.r_hat);
  return out;
}

inline ScoreTriple hard_scores(const PosteriorDraws& draws, const ModelMeta& meta, double delta) {
  return hard_scores(draws.mus, meta, delta);
}

/// Monte Carlo estimate of P(k in target set | data).
inline Vector plugin_probabilities(const Matrix& mu_draws, const ModelMeta& meta, double delta) {
  if (mu_draws.rows() < 1) throw ValidationError("no posterior draws");
  const auto K = static_cast<std::size_t>(mu_draws.cols());
  detail::check_meta(meta, K);
  const ComplexityClasses classes(meta);
  const auto T = static_cast<std::size_t>(mu_draws.rows());
  Matrix member(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(K));
  parallel_for(T, [&](std::size_t t) {
    const auto row = mu_draws.row(static_cast<Eigen::Index>(t));
    const std::size_t c_star = detail::minimal_class(row, delta, classes);
    const auto minima = detail::class_minima(row, classes);
    for (std::size_t k = 0; k < K; ++k) {
      const auto ek = static_cast<Eigen::Index>(k);
      member(static_cast<Eigen::Index>(t), ek) =
          classes.class_of(k) == c_star && row(ek) == minima[c_star] ? 1.0 : 0.0;
    }
  });
  return detail::column_means(member);
}

inline Vector plugin_probabilities(const PosteriorDraws& draws, const ModelMeta& meta, double delta) {
  return plugin_probabilities(draws.mus, meta, delta);
}

/// tau = delta / (mu_noise - mu_min).
inline double rescale_tolerance(double delta, double mu_noise, double mu_min) {
  if (!(mu_noise > mu_min))
    throw ValidationError("noise reference mean loss must exceed the best model's mean loss");
  return delta / (mu_noise - mu_min);
}

inline double tolerance_from_tau(double tau, double mu_noise, double mu_min) {
  if (!(mu_noise > mu_min))
    throw ValidationError("noise reference mean loss must exceed the best model's mean loss");
  return tau * (mu_noise - mu_min);
}

/// Grid x K matrix of smooth scores at delta_g = tau_g * (mu_noise - mu_min),
/// with mu_min the smallest posterior-mean coordinate of the draws.
inline Matrix posterior_path(const Matrix& mu_draws, const ModelMeta& meta, const std::vector<double>& tau_grid,
                             double mu_noise, double alpha_n, std::vector<double>* deltas_out = nullptr) {
  if (mu_draws.rows() < 1) throw ValidationError("no posterior draws");
  if (!(alpha_n > 0.0)) throw ValidationError("alpha_n must be positive");
  for (std::size_t g = 0; g < tau_grid.size(); ++g) {
    if (!(tau_grid[g] >= 0.0 && tau_grid[g] <= 1.5)) throw ValidationError("tau grid values must lie in [0, 1.5]");
    if (g > 0 && !(tau_grid[g] > tau_grid[g - 1])) throw ValidationError("tau grid must be increasing");
  }
  const auto K = static_cast<std::size_t>(mu_draws.cols());
  detail::check_meta(meta, K);
  const ComplexityClasses classes(meta);
  const double mu_min = detail::row_min(detail::column_means(mu_draws));
  std::vector<double> deltas;
  for (double tau : tau_grid) deltas.push_back(tolerance_from_tau(tau, mu_noise, mu_min));

  const auto T = static_cast<std::size_t>(mu_draws.rows());
  const auto G = tau_grid.size();
  // Per draw: the minimal class at every grid delta, plus the within-class factor.
  std::vector<std::vector<std::size_t>> c_star(T, std::vector<std::size_t>(G));
  Matrix within(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(K));
  parallel_for(T, [&](std::size_t t) {
    const auto row = mu_draws.row(static_cast<Eigen::Index>(t));
    const auto minima = detail::class_minima(row, classes);
    for (std::size_t g = 0; g < G; ++g) c_star[t][g] = detail::minimal_class(row, deltas[g], classes);
    for (std::size_t k = 0; k < K; ++k) {
      const double r = std::exp(-alpha_n * (row(static_cast<Eigen::Index>(k)) - minima[classes.class_of(k)]));
      within(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = r < 1e-300 ? 0.0 : r;
    }
  });
  const Vector r_hat = detail::column_means(within);
  Matrix path(static_cast<Eigen::Index>(G), static_cast<Eigen::Index>(K));
  std::vector<double> indicator(T);
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t t = 0; t < T; ++t) indicator[t] = c_star[t][g] == classes.class_of(k) ? 1.0 : 0.0;
      path(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(k)) =
          pairwise_mean(indicator) * r_hat(static_cast<Eigen::Index>(k));
    }
  }
  if (deltas_out) *deltas_out = deltas;
  return path;
}

// --- Reports -------------------------------------------------------------------

enum class ScoreVariant { soft, hard, plugin };

inline std::string to_string(ScoreVariant v) {
  switch (v) {
    case ScoreVariant::soft: return "soft";
    case ScoreVariant::hard: return "hard";
    case ScoreVariant::plugin: return "plugin";
  }
  return "soft";
}

struct Quantiles {
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
};

/// Linear-interpolation sample quantile (R type 7) of sorted data.
inline double sorted_quantile(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline Quantiles describe(std::vector<double> values) {
  Quantiles q;
  q.mean = pairwise_mean(values);
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) sq[i] = (values[i] - q.mean) * (values[i] - q.mean);
  q.sd = values.size() > 1 ? std::sqrt(pairwise_sum(sq) / static_cast<double>(values.size() - 1)) : 0.0;
  std::sort(values.begin(), values.end());
  q.q025 = sorted_quantile(values, 0.025);
  q.q50 = sorted_quantile(values, 0.5);
  q.q975 = sorted_quantile(values, 0.975);
  return q;
}

struct ModelScore {
  std::string name;
  double complexity = 0.0;
  double dims = 0.0;
  double p_hat = 0.0;
  double r_hat = 1.0;
  double w_hat = 0.0;
  Quantiles mu;
  Quantiles gap;  // mu_k - min_j mu_j per draw
};

struct SlcReport {
  ScoreVariant variant = ScoreVariant::soft;
  double delta = 0.0;
  std::optional<double> tau;
  std::optional<double> noise_mu;
  double alpha_n = 0.0;
  std::size_t n = 0;
  std::vector<ModelScore> models;
  IndexSet selected;
  std::vector<std::string> warnings;

  Vector w_hat() const {
    Vector w(static_cast<Eigen::Index>(models.size()));
    for (std::size_t k = 0; k < models.size(); ++k) w(static_cast<Eigen::Index>(k)) = models[k].w_hat;
    return w;
  }
};

/// Models whose score exceeds omega. Empty is a valid outcome.
inline IndexSet select(const SlcReport& report, double omega) {
  if (!(omega > 0.0 && omega < 1.0)) throw ValidationError("omega must lie in (0, 1)");
  IndexSet out;
  for (std::size_t k = 0; k < report.models.size(); ++k)
    if (report.models[k].w_hat > omega) out.push_back(k);
  return out;
}

struct SelectorConfig {
  double delta = 0.0;
  double alpha_exponent = 0.45;
  std::size_t T = 1000;
  std::uint64_t seed = 0;
  double omega = 0.5;
  ScoreVariant variant = ScoreVariant::soft;
  CovarianceVariant covariance = CovarianceVariant::full;
  bool bias_correct = false;

  void validate() const {
    if (!(alpha_exponent > 0.0 && alpha_exponent < 0.5)) throw ValidationError("alpha exponent must lie in (0, 0.5)");
    if (!(delta >= 0.0)) throw ValidationError("delta must be nonnegative");
    if (!(omega > 0.0 && omega < 1.0)) throw ValidationError("omega must lie in (0, 1)");
    if (T < 1) throw ValidationError("draw count must be at least 1");
  }
};

/// Posterior over the mean loss vector, ready to be scored at any tolerance.
class LadPosterior {
 public:
  LadPosterior(const LossMatrix& z, const ModelMeta& meta, const SelectorConfig& config)
      : meta_(align_meta(meta, z)), config_(config) {
    config_.validate();
    const LossMatrix processed = config.bias_correct ? bias_correct(z, meta_) : z;
    summary_ = summarize(processed);
    n_ = processed.n();
    alpha_n_ = std::pow(static_cast<double>(n_), config.alpha_exponent);
    const NiwState prior = default_prior(processed.K());
    if (config.covariance == CovarianceVariant::full) {
      draws_ = sample_posterior(niw_update(prior, summary_), config.T, config.seed);
    } else {
      draws_ = nig_match_update_sample(prior, summary_, config.T, config.seed);
    }
    summarize_draws();
  }

  const PosteriorDraws& draws() const { return draws_; }
  const ModelMeta& meta() const { return meta_; }
  const LossSummary& summary() const { return summary_; }
  double alpha_n() const { return alpha_n_; }
  std::size_t n() const { return n_; }
  /// Smallest column mean of the processed loss matrix.
  double min_column_mean() const { return summary_.mean.minCoeff(); }

  SlcReport report(double delta, std::optional<double> noise_mu = std::nullopt) const {
    if (!(delta >= 0.0)) throw ValidationError("delta must be nonnegative");
    SlcReport rep;
    rep.variant = config_.variant;
    rep.delta = delta;
    rep.alpha_n = alpha_n_;
    rep.n = n_;
    rep.noise_mu = noise_mu;
    ScoreTriple scores;
    switch (config_.variant) {
      case ScoreVariant::soft: scores = slc_scores(draws_, meta_, delta, alpha_n_); break;
      case ScoreVariant::hard: scores = hard_scores(draws_, meta_, delta); break;
      case ScoreVariant::plugin: {
        const ScoreTriple soft = slc_scores(draws_, meta_, delta, alpha_n_);
        // Within-class factor reported as P(k in target | class is minimal).
        const Vector plugin = plugin_probabilities(draws_, meta_, delta);
        scores.p_hat = soft.p_hat;
        scores.r_hat = Vector::Zero(plugin.size());
        for (Eigen::Index k = 0; k < plugin.size(); ++k)
          if (scores.p_hat(k) > 0.0) scores.r_hat(k) = plugin(k) / scores.p_hat(k);
        scores.w_hat = scores.p_hat.cwiseProduct(scores.r_hat);
        break;
      }
    }
    for (std::size_t k = 0; k < meta_.K(); ++k) {
      const auto ek = static_cast<Eigen::Index>(k);
      ModelScore m;
      m.name = meta_.model_names.empty() ? "model_" + std::to_string(k + 1) : meta_.model_names[k];
      m.complexity = meta_.complexity[k];
      m.dims = meta_.dims[k];
      m.p_hat = scores.p_hat(ek);
      m.r_hat = scores.r_hat(ek);
      m.w_hat = scores.w_hat(ek);
      m.mu = mu_stats_[k];
      m.gap = gap_stats_[k];
      rep.models.push_back(std::move(m));
    }
    if (noise_mu && *noise_mu > min_column_mean()) {
      rep.tau = rescale_tolerance(delta, *noise_mu, min_column_mean());
      if (*rep.tau > 1.0) rep.warnings.push_back("tau > 1: tolerance admits the noise reference model");
    } else if (noise_mu) {
      rep.warnings.push_back("noise reference mean loss does not exceed the best model's; tau undefined");
    }
    for (std::size_t k = 0; k < meta_.K(); ++k) {
      if (std::abs(delta - gap_stats_[k].mean) <= 1e-9 && gap_stats_[k].mean > 0.0)
        rep.warnings.push_back("delta is within 1e-9 of the estimated gap of model '" + rep.models[k].name + "'");
    }
    rep.selected = select(rep, config_.omega);
    if (rep.selected.empty()) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < rep.models.size(); ++k)
        if (rep.models[k].w_hat > rep.models[best].w_hat) best = k;
      rep.warnings.push_back("no model exceeds omega; highest score is model '" + rep.models[best].name + "'");
    }
    return rep;
  }

 private:
  void summarize_draws() {
    const auto T = static_cast<std::size_t>(draws_.mus.rows());
    const auto K = static_cast<std::size_t>(draws_.mus.cols());
    std::vector<std::vector<double>> mus(K, std::vector<double>(T)), gaps(K, std::vector<double>(T));
    for (std::size_t t = 0; t < T; ++t) {
      const auto row = draws_.mus.row(static_cast<Eigen::Index>(t));
      const double lo = row.minCoeff();
      for (std::size_t k = 0; k < K; ++k) {
        mus[k][t] = row(static_cast<Eigen::Index>(k));
        gaps[k][t] = mus[k][t] - lo;
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      mu_stats_.push_back(describe(mus[k]));
      gap_stats_.push_back(describe(gaps[k]));
    }
  }

  ModelMeta meta_;
  SelectorConfig config_;
  LossSummary summary_;
  PosteriorDraws draws_;
  std::size_t n_ = 0;
  double alpha_n_ = 1.0;
  std::vector<Quantiles> mu_stats_;
  std::vector<Quantiles> gap_stats_;
};

/// Full workflow: optional bias correction, NIW (or diagonal) posterior,
/// scores at config.delta, optional rescaled tolerance.
inline SlcReport analyze(const LossMatrix& z, const ModelMeta& meta, const SelectorConfig& config,
                         std::optional<double> noise_mu = std::nullopt) {
  return LadPosterior(z, meta, config).report(config.delta, noise_mu);
}

}  // namespace lad
