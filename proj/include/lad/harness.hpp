#pragma once

// Replicated experiments: Brier-loss method comparison, tie uniformity of
// the hard-minimum score, and the argmin instability demonstration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lad/baselines.hpp"
#include "lad/data.hpp"
#include "lad/errors.hpp"
#include "lad/models.hpp"
#include "lad/niw.hpp"
#include "lad/parallel.hpp"
#include "lad/rng.hpp"
#include "lad/selector.hpp"

namespace lad {

/// Squared distance between a weight vector and the target-set indicator.
inline double brier_loss(const Vector& w, const IndexSet& target) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    const bool in = std::find(target.begin(), target.end(), static_cast<std::size_t>(k)) != target.end();
    const double diff = w(k) - (in ? 1.0 : 0.0);
    acc += diff * diff;
  }
  return acc;
}

// --- Methods --------------------------------------------------------------------

enum class MethodKind { lad_soft, lad_hard, lad_diag, lad_plugin, cpost, bayes, aic, bic };

struct Method {
  MethodKind kind = MethodKind::lad_soft;
  double alpha = std::numeric_limits<double>::infinity();  // cpost only

  std::string name() const {
    switch (kind) {
      case MethodKind::lad_soft: return "lad-soft";
      case MethodKind::lad_hard: return "lad-hard";
      case MethodKind::lad_diag: return "lad-diag";
      case MethodKind::lad_plugin: return "lad-plugin";
      case MethodKind::cpost: {
        std::string text = format_double(alpha);
        return "cpost:" + text;
      }
      case MethodKind::bayes: return "bayes";
      case MethodKind::aic: return "aic";
      case MethodKind::bic: return "bic";
    }
    return "?";
  }

  bool needs_closed_form() const { return kind == MethodKind::cpost || kind == MethodKind::bayes; }
};

inline const char* kMethodNames = "lad-soft, lad-hard, lad-diag, lad-plugin, cpost:ALPHA, bayes, aic, bic";

inline Method parse_method(const std::string& token) {
  if (token == "lad-soft") return {MethodKind::lad_soft};
  if (token == "lad-hard") return {MethodKind::lad_hard};
  if (token == "lad-diag") return {MethodKind::lad_diag};
  if (token == "lad-plugin") return {MethodKind::lad_plugin};
  if (token == "bayes") return {MethodKind::bayes};
  if (token == "aic") return {MethodKind::aic};
  if (token == "bic") return {MethodKind::bic};
  if (token.rfind("cpost:", 0) == 0) {
    const auto alpha = detail::parse_double(token.substr(6));
    if (!alpha || !(*alpha > 0.0)) throw UsageError("invalid c-posterior alpha in '" + token + "'");
    return {MethodKind::cpost, *alpha};
  }
  throw UsageError("unknown method '" + token + "'; valid methods: " + kMethodNames);
}

// --- Scenarios ------------------------------------------------------------------

enum class Scenario { mvn_table1, gmm4 };

/// Four-component univariate mixture used by the gmm4 scenario.
inline GmmDgp gmm4_dgp() {
  GmmDgp dgp;
  dgp.weights = (Vector(4) << 0.3, 0.2, 0.3, 0.2).finished();
  dgp.means = (Vector(4) << -4.0, -1.0, 2.0, 6.0).finished();
  dgp.vars = (Vector(4) << 1.0, 0.5, 1.0, 1.5).finished();
  return dgp;
}

struct ExperimentConfig {
  Scenario scenario = Scenario::mvn_table1;
  std::vector<std::size_t> n_grid{50, 500, 5000};
  std::vector<double> deltas{0.75, 0.26, 0.05};
  std::size_t reps = 50;
  std::vector<Method> methods;
  std::uint64_t seed = 0;
  std::size_t T = 1000;
  double alpha_exponent = 0.45;
  CPostConfig cpost;      // alpha overridden per method
  std::size_t kmax = 6;   // gmm4 only
  std::size_t restarts = 10;

  void validate() const {
    if (reps < 1) throw ValidationError("reps must be at least 1");
    if (n_grid.empty() || deltas.empty() || methods.empty()) throw ValidationError("experiment grid is empty");
    for (double d : deltas)
      if (!(d >= 0.0)) throw ValidationError("deltas must be nonnegative");
    if (!(alpha_exponent > 0.0 && alpha_exponent < 0.5)) throw ValidationError("alpha exponent must lie in (0, 0.5)");
    if (scenario == Scenario::gmm4)
      for (const auto& m : methods)
        if (m.needs_closed_form()) throw UsageError("method '" + m.name() + "' is only available for the mvn-table1 scenario");
  }
};

namespace detail {

inline double simpson(const std::function<double(double)>& f, double lo, double hi, std::size_t intervals) {
  if (intervals % 2) ++intervals;
  const double h = (hi - lo) / static_cast<double>(intervals);
  double acc = f(lo) + f(hi);
  for (std::size_t i = 1; i < intervals; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(lo + h * static_cast<double>(i));
  return acc * h / 3.0;
}

}  // namespace detail

/// Population mean losses up to the shared entropy constant (i.e. minimal KL
/// per candidate). Never estimated from replicate data.
inline Vector scenario_kl(const ExperimentConfig& cfg) {
  if (cfg.scenario == Scenario::mvn_table1) {
    const auto models = table1_models();
    Vector kl(static_cast<Eigen::Index>(models.size()));
    for (std::size_t k = 0; k < models.size(); ++k) kl(static_cast<Eigen::Index>(k)) = mvn_kl_oracle(table1_theta0(), models[k]);
    return kl;
  }
  // Mixtures with at least as many components as the truth nest it exactly;
  // smaller ones are fitted to a large fixed reference sample and scored by
  // quadrature against the true density.
  const GmmDgp truth = gmm4_dgp();
  const auto true_k = static_cast<std::size_t>(truth.means.size());
  const Matrix reference = simulate_dgp({truth, 0x5eedull, 20000});
  Vector kl = Vector::Zero(static_cast<Eigen::Index>(cfg.kmax));
  const double lo = truth.means.minCoeff() - 12.0, hi = truth.means.maxCoeff() + 12.0;
  for (std::size_t k = 1; k <= std::min(cfg.kmax, true_k - 1); ++k) {
    const GmmFit fit = gmm_fit_em(reference.col(0), k, 20, 0x5eedull).fit;
    kl(static_cast<Eigen::Index>(k - 1)) = detail::simpson(
        [&](double x) {
          const double log_f0 = gmm_dgp_log_density(truth, x);
          return std::exp(log_f0) * (log_f0 - fit.log_density(x));
        },
        lo, hi, 20000);
  }
  return kl;
}

inline ModelMeta scenario_meta(const ExperimentConfig& cfg) {
  if (cfg.scenario == Scenario::mvn_table1) return mvn_meta(table1_models());
  ModelMeta meta;
  for (std::size_t k = 1; k <= cfg.kmax; ++k) {
    meta.model_names.push_back("k" + std::to_string(k));
    meta.complexity.push_back(static_cast<double>(k));
    meta.dims.push_back(static_cast<double>(3 * k - 1));
  }
  return meta;
}

/// Raw data and uncorrected loss matrix for one replicate of a scenario.
struct ReplicateData {
  Matrix data;
  LossMatrix losses;
};

inline ReplicateData simulate_replicate(const ExperimentConfig& cfg, std::size_t n, std::uint64_t data_seed) {
  if (cfg.scenario == Scenario::mvn_table1) {
    Matrix data = simulate_dgp({MvnDgp{table1_theta0()}, data_seed, n});
    LossMatrix z = mvn_loss_matrix(data, table1_models());
    return {std::move(data), std::move(z)};
  }
  Matrix data = simulate_dgp({gmm4_dgp(), data_seed, n});
  const ModelMeta meta = scenario_meta(cfg);
  Matrix z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.kmax));
  for (std::size_t k = 1; k <= cfg.kmax; ++k)
    z.col(static_cast<Eigen::Index>(k - 1)) = gmm_fit_em(data.col(0), k, cfg.restarts, derive_seed(data_seed, 3)).losses;
  return {std::move(data), LossMatrix(std::move(z), meta.model_names)};
}

struct BrierRow {
  std::string method;
  std::size_t n = 0;
  double delta = 0.0;
  double mean = 0.0;
  double se = 0.0;
  std::size_t reps = 0;    // successful replicates
  std::size_t failed = 0;  // replicates aborted by a component error
  bool se_undefined = false;
};

struct BrierTable {
  std::vector<BrierRow> rows;
  std::vector<std::string> errors;

  const BrierRow* find(const std::string& method, std::size_t n, double delta) const {
    for (const auto& r : rows)
      if (r.method == method && r.n == n && r.delta == delta) return &r;
    return nullptr;
  }
};

/// Per-replicate weight vectors for every (method, delta).
struct ReplicateWeights {
  std::vector<std::vector<Vector>> weights;  // [method][delta]
};

inline ReplicateWeights run_methods(const ExperimentConfig& cfg, const ReplicateData& rep, const ModelMeta& meta,
                                    std::uint64_t replicate_seed) {
  const std::size_t n = rep.losses.n();
  const LossMatrix corrected = bias_correct(rep.losses, meta);
  const LossSummary summary = summarize(corrected);
  const double alpha_n = std::pow(static_cast<double>(n), cfg.alpha_exponent);
  const NiwState prior = default_prior(meta.K());

  std::optional<PosteriorDraws> full, diag;
  const auto need = [&](MethodKind kind) {
    return std::any_of(cfg.methods.begin(), cfg.methods.end(), [&](const Method& m) { return m.kind == kind; });
  };
  if (need(MethodKind::lad_soft) || need(MethodKind::lad_hard) || need(MethodKind::lad_plugin))
    full = sample_posterior(niw_update(prior, summary), cfg.T, derive_seed(replicate_seed, 1));
  if (need(MethodKind::lad_diag)) diag = nig_match_update_sample(prior, summary, cfg.T, derive_seed(replicate_seed, 2));

  const Vector total_nll = rep.losses.values().colwise().sum().transpose();
  const Vector dims = Eigen::Map<const Vector>(meta.dims.data(), static_cast<Eigen::Index>(meta.dims.size()));

  ReplicateWeights out;
  for (const auto& method : cfg.methods) {
    std::vector<Vector> per_delta;
    std::optional<Vector> delta_free;
    switch (method.kind) {
      case MethodKind::cpost:
      case MethodKind::bayes: {
        CPostConfig c = cfg.cpost;
        c.alpha = method.kind == MethodKind::bayes ? std::numeric_limits<double>::infinity() : method.alpha;
        delta_free = cpost_weights(cpost_log_marginals(rep.data, table1_models(), c));
        break;
      }
      case MethodKind::aic: delta_free = ic_weights(total_nll, dims, n, InfoCriterion::aic); break;
      case MethodKind::bic: delta_free = ic_weights(total_nll, dims, n, InfoCriterion::bic); break;
      default: break;
    }
    for (double delta : cfg.deltas) {
      if (delta_free) {
        per_delta.push_back(*delta_free);
        continue;
      }
      switch (method.kind) {
        case MethodKind::lad_soft: per_delta.push_back(slc_scores(*full, meta, delta, alpha_n).w_hat); break;
        case MethodKind::lad_hard: per_delta.push_back(hard_scores(*full, meta, delta).w_hat); break;
        case MethodKind::lad_plugin: per_delta.push_back(plugin_probabilities(*full, meta, delta)); break;
        case MethodKind::lad_diag: per_delta.push_back(slc_scores(*diag, meta, delta, alpha_n).w_hat); break;
        default: break;
      }
    }
    out.weights.push_back(std::move(per_delta));
  }
  return out;
}

/// Seed of replicate r at sample size n.
inline std::uint64_t replicate_seed(std::uint64_t seed, std::size_t n, std::size_t r) {
  return derive_seed(derive_seed(seed, n), r);
}

inline BrierTable run_comparison(const ExperimentConfig& cfg) {
  cfg.validate();
  const ModelMeta meta = scenario_meta(cfg);
  const Vector kl = scenario_kl(cfg);
  std::vector<IndexSet> targets;
  for (double delta : cfg.deltas) targets.push_back(target_set(kl, delta, meta));

  const std::size_t M = cfg.methods.size(), D = cfg.deltas.size();
  BrierTable table;
  for (std::size_t n : cfg.n_grid) {
    // losses[r][m][d]; empty when the replicate failed.
    std::vector<std::vector<std::vector<double>>> losses(cfg.reps);
    std::vector<std::string> errors(cfg.reps);
    parallel_for(cfg.reps, [&](std::size_t r) {
      try {
        const std::uint64_t seed = replicate_seed(cfg.seed, n, r);
        const ReplicateData rep = simulate_replicate(cfg, n, seed);
        const ReplicateWeights w = run_methods(cfg, rep, meta, seed);
        losses[r].assign(M, std::vector<double>(D));
        for (std::size_t m = 0; m < M; ++m)
          for (std::size_t d = 0; d < D; ++d) losses[r][m][d] = brier_loss(w.weights[m][d], targets[d]);
      } catch (const Error& e) {
        losses[r].clear();
        errors[r] = "n=" + std::to_string(n) + " replicate " + std::to_string(r) + ": " + e.what();
      }
    });
    for (const auto& e : errors)
      if (!e.empty()) table.errors.push_back(e);
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t d = 0; d < D; ++d) {
        std::vector<double> values;
        for (std::size_t r = 0; r < cfg.reps; ++r)
          if (!losses[r].empty()) values.push_back(losses[r][m][d]);
        BrierRow row;
        row.method = cfg.methods[m].name();
        row.n = n;
        row.delta = cfg.deltas[d];
        row.reps = values.size();
        row.failed = cfg.reps - values.size();
        row.mean = values.empty() ? std::numeric_limits<double>::quiet_NaN() : pairwise_mean(values);
        if (values.size() > 1) {
          std::vector<double> sq;
          for (double v : values) sq.push_back((v - row.mean) * (v - row.mean));
          row.se = std::sqrt(pairwise_sum(sq) / static_cast<double>(values.size() - 1)) /
                   std::sqrt(static_cast<double>(values.size()));
        } else {
          row.se = 0.0;
          row.se_undefined = true;
        }
        table.rows.push_back(row);
      }
    }
  }
  return table;
}

// --- Tie uniformity -----------------------------------------------------------------

/// One-sample Kolmogorov-Smirnov distance to Uniform(0, 1).
inline double ks_uniform_distance(std::vector<double> values) {
  if (values.size() < 2) throw ValidationError("KS distance needs at least two values");
  std::sort(values.begin(), values.end());
  const double m = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double u = std::clamp(values[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / m - u, u - static_cast<double>(i) / m});
  }
  return d;
}

/// Asymptotic Kolmogorov tail probability with Stephens' small-sample factor.
inline double ks_p_value(double distance, std::size_t m) {
  const double root = std::sqrt(static_cast<double>(m));
  const double lambda = (root + 0.12 + 0.11 / root) * distance;
  if (lambda < 1e-3) return 1.0;
  double acc = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    acc += (j % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * acc, 0.0, 1.0);
}

struct TieResult {
  std::vector<double> hard_first;  // hard score of the first tied model per replicate
  std::vector<double> soft_first;
  std::vector<double> soft_second;
  double ks = 0.0;
  double p_value = 1.0;
};

/// Two equal-complexity candidates with exactly equal population mean loss
/// (supports {1,2,4} and {1,2,3} of the sparse normal scenario, where the
/// dropped coordinates have equal magnitude). Replicate r uses seed (seed, r).
inline TieResult tie_uniformity_experiment(std::size_t reps, std::size_t n, std::size_t T, std::uint64_t seed,
                                           double alpha_exponent = 0.45) {
  if (reps < 2) throw ValidationError("tie experiment needs at least two replicates for a KS distance");
  const auto all = table1_models();
  const std::vector<MvnSupportModel> models{all[3], all[4]};
  const ModelMeta meta = mvn_meta(models);
  const double alpha_n = std::pow(static_cast<double>(n), alpha_exponent);
  TieResult out;
  out.hard_first.resize(reps);
  out.soft_first.resize(reps);
  out.soft_second.resize(reps);
  parallel_for(reps, [&](std::size_t r) {
    const std::uint64_t rep_seed = derive_seed(seed, r);
    const Matrix data = simulate_dgp({MvnDgp{table1_theta0()}, rep_seed, n});
    const LossMatrix z = bias_correct(mvn_loss_matrix(data, models), meta);
    const PosteriorDraws draws =
        sample_posterior(niw_update(default_prior(2), summarize(z)), T, derive_seed(rep_seed, 1));
    out.hard_first[r] = hard_scores(draws, meta, 0.0).w_hat(0);
    const ScoreTriple soft = slc_scores(draws, meta, 0.0, alpha_n);
    out.soft_first[r] = soft.w_hat(0);
    out.soft_second[r] = soft.w_hat(1);
  });
  out.ks = ks_uniform_distance(out.hard_first);
  out.p_value = ks_p_value(out.ks, reps);
  return out;
}

// --- Argmin instability -------------------------------------------------------------

inline Matrix instability_sigma0() {
  Matrix s(3, 3);
  s << 1.0, -0.99, 0.0, -0.99, 1.0, 0.0, 0.0, 0.0, 0.01;
  return s;
}

/// Draws of N(mu0, sigma0 / n); draw t reads stream (seed, t).
inline Matrix gaussian_draws(const Vector& mu0, const Matrix& sigma0, double n, std::size_t T, std::uint64_t seed) {
  const Matrix factor = cholesky_lower(sigma0 / n);
  const auto k = mu0.size();
  Matrix out(static_cast<Eigen::Index>(T), k);
  parallel_for(T, [&](std::size_t t) {
    RandomStream rng(seed, t);
    Vector z(k);
    for (Eigen::Index j = 0; j < k; ++j) z(j) = rng.normal();
    out.row(static_cast<Eigen::Index>(t)) = (mu0 + factor * z).transpose();
  });
  return out;
}

/// Frequency with which each coordinate is the minimum across T draws of
/// N(0, sigma0 / n) with equal complexities.
inline Vector argmin_instability_experiment(std::size_t T, std::uint64_t seed, const Matrix& sigma0 = instability_sigma0(),
                                            double n = 500.0) {
  const auto k = static_cast<std::size_t>(sigma0.rows());
  const Matrix draws = gaussian_draws(Vector::Zero(sigma0.rows()), sigma0, n, T, seed);
  return plugin_probabilities(draws, ModelMeta::uniform(k), 0.0);
}

}  // namespace lad
