#pragma once

// Command-line front end. Exit codes: 0 success, 2 usage or validation
// error, 3 numerical error.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lad/baselines.hpp"
#include "lad/data.hpp"
#include "lad/errors.hpp"
#include "lad/harness.hpp"
#include "lad/models.hpp"
#include "lad/niw.hpp"
#include "lad/selector.hpp"

namespace lad::cli {

inline constexpr int kSchemaVersion = 1;
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

using nlohmann::json;

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json optional_number(const std::optional<double>& v) { return v ? number_or_null(*v) : json(nullptr); }

/// Options shared by analyze, path and gmm.
struct AnalyzeOptions {
  std::vector<double> deltas;
  std::vector<double> taus;
  std::optional<double> noise_mu;
  bool bias_correct = false;
  std::size_t draws = 1000;
  std::uint64_t seed = 0;
  double alpha_exp = 0.45;
  std::string variant = "soft";
  std::string cov = "full";
  double omega = 0.5;
  std::string out = "-";
  std::string format = "json";
  std::string draws_out;

  SelectorConfig selector() const {
    SelectorConfig cfg;
    cfg.alpha_exponent = alpha_exp;
    cfg.T = draws;
    cfg.seed = seed;
    cfg.omega = omega;
    cfg.bias_correct = bias_correct;
    if (variant == "soft") cfg.variant = ScoreVariant::soft;
    else if (variant == "hard") cfg.variant = ScoreVariant::hard;
    else if (variant == "plugin") cfg.variant = ScoreVariant::plugin;
    else throw UsageError("unknown --variant '" + variant + "' (expected soft, hard or plugin)");
    if (cov == "full") cfg.covariance = CovarianceVariant::full;
    else if (cov == "diag") cfg.covariance = CovarianceVariant::diagonal;
    else throw UsageError("unknown --cov '" + cov + "' (expected full or diag)");
    return cfg;
  }
};

inline void add_analyze_flags(CLI::App* cmd, AnalyzeOptions& o, bool with_tolerances = true) {
  if (with_tolerances) {
    cmd->add_option("--delta", o.deltas, "Tolerances in nats, comma separated")->delimiter(',');
    cmd->add_option("--tau", o.taus, "Rescaled tolerances, comma separated (needs --noise-mu)")->delimiter(',');
  }
  cmd->add_option("--noise-mu", o.noise_mu, "Mean loss of the noise reference model");
  cmd->add_option("--draws", o.draws, "Posterior draws T")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--alpha-exp", o.alpha_exp, "Soft-min temperature exponent, alpha_n = n^E");
  cmd->add_option("--variant", o.variant, "soft | hard | plugin");
  cmd->add_option("--cov", o.cov, "full | diag");
  cmd->add_option("--omega", o.omega, "Selection threshold");
  cmd->add_option("--out", o.out, "Output path, - for stdout");
  cmd->add_option("--format", o.format, "json | csv");
  cmd->add_option("--draws-out", o.draws_out, "Optional CSV of posterior mu draws");
}

class Output {
 public:
  explicit Output(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (path != "-") {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw FormatError("cannot write '" + path + "'");
      stream_ = file_.get();
    }
  }
  std::ostream& stream() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

inline json report_to_json(const SlcReport& rep, const json& config) {
  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["config"] = config;
  json models = json::array();
  for (const auto& m : rep.models) {
    models.push_back({{"name", m.name},
                      {"complexity", number_or_null(m.complexity)},
                      {"dims", number_or_null(m.dims)},
                      {"p_hat", number_or_null(m.p_hat)},
                      {"r_hat", number_or_null(m.r_hat)},
                      {"w_hat", number_or_null(m.w_hat)},
                      {"mu_mean", number_or_null(m.mu.mean)},
                      {"mu_sd", number_or_null(m.mu.sd)},
                      {"mu_q025", number_or_null(m.mu.q025)},
                      {"mu_q50", number_or_null(m.mu.q50)},
                      {"mu_q975", number_or_null(m.mu.q975)},
                      {"gap_mean", number_or_null(m.gap.mean)}});
  }
  doc["per_model"] = models;
  doc["delta"] = number_or_null(rep.delta);
  doc["tau"] = optional_number(rep.tau);
  doc["noise_mu"] = optional_number(rep.noise_mu);
  json selected = json::array();
  for (std::size_t k : rep.selected) selected.push_back(rep.models[k].name);
  doc["selected"] = selected;
  doc["warnings"] = rep.warnings;
  return doc;
}

inline std::vector<std::string> report_csv_header(bool with_tau) {
  std::vector<std::string> h{"delta"};
  if (with_tau) h.push_back("tau");
  for (const char* c : {"model", "complexity", "dims", "p_hat", "r_hat", "w_hat", "mu_mean", "mu_sd", "mu_q025",
                        "mu_q50", "mu_q975", "gap_mean", "selected"})
    h.push_back(c);
  return h;
}

/// One row per (report, model); model is the 1-based column index.
inline void write_reports_csv(std::ostream& out, const std::vector<SlcReport>& reports) {
  const bool with_tau = !reports.empty() && reports.front().tau.has_value();
  std::vector<std::vector<double>> rows;
  for (const auto& rep : reports) {
    for (std::size_t k = 0; k < rep.models.size(); ++k) {
      const auto& m = rep.models[k];
      std::vector<double> row{rep.delta};
      if (with_tau) row.push_back(*rep.tau);
      const bool chosen = std::find(rep.selected.begin(), rep.selected.end(), k) != rep.selected.end();
      for (double v : {static_cast<double>(k + 1), m.complexity, m.dims, m.p_hat, m.r_hat, m.w_hat, m.mu.mean, m.mu.sd,
                       m.mu.q025, m.mu.q50, m.mu.q975, m.gap.mean, chosen ? 1.0 : 0.0})
        row.push_back(v);
      rows.push_back(std::move(row));
    }
  }
  Matrix values(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(report_csv_header(with_tau).size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  write_csv(out, values, report_csv_header(with_tau));
}

inline json config_echo(const AnalyzeOptions& o, const LadPosterior& posterior) {
  return {{"bias_correct", o.bias_correct}, {"draws", o.draws},     {"seed", o.seed},
          {"alpha_exp", o.alpha_exp},       {"alpha_n", posterior.alpha_n()},
          {"variant", o.variant},           {"cov", o.cov},         {"omega", o.omega},
          {"n", posterior.n()},             {"K", posterior.meta().K()}};
}

/// Scores a prepared posterior at every requested tolerance and writes the reports.
inline void emit_reports(const AnalyzeOptions& o, const LadPosterior& posterior, json config, std::ostream& fallback) {
  if (o.deltas.empty() == o.taus.empty()) throw UsageError("give exactly one of --delta or --tau");
  if (!o.taus.empty() && !o.noise_mu) throw UsageError("--tau requires --noise-mu");
  if (o.format != "json" && o.format != "csv") throw UsageError("unknown --format '" + o.format + "' (expected json or csv)");

  std::vector<std::pair<double, std::optional<double>>> tolerances;  // (delta, requested tau)
  for (double d : o.deltas) tolerances.emplace_back(d, std::nullopt);
  for (double t : o.taus) {
    if (!(t >= 0.0)) throw ValidationError("tau must be nonnegative");
    tolerances.emplace_back(tolerance_from_tau(t, *o.noise_mu, posterior.min_column_mean()), t);
  }
  std::vector<SlcReport> reports;
  json docs = json::array();
  for (const auto& [delta, tau] : tolerances) {
    SlcReport rep = posterior.report(delta, o.noise_mu);
    if (tau) rep.tau = *tau;
    json cfg = config;
    if (tau) cfg["tau_input"] = *tau;
    else cfg["delta_input"] = delta;
    docs.push_back(report_to_json(rep, cfg));
    reports.push_back(std::move(rep));
  }
  Output out(o.out, fallback);
  if (o.format == "json") out.stream() << docs.dump(2) << '\n';
  else write_reports_csv(out.stream(), reports);

  if (!o.draws_out.empty()) {
    std::ofstream draws(o.draws_out);
    if (!draws) throw FormatError("cannot write '" + o.draws_out + "'");
    write_csv(draws, posterior.draws().mus, posterior.meta().model_names);
  }
}

/// Parses LO:HI:STEP into an increasing grid.
inline std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) {
    const auto v = detail::parse_double(item);
    if (!v) throw UsageError("bad --tau-grid '" + spec + "' (expected LO:HI:STEP)");
    parts.push_back(*v);
  }
  if (parts.size() != 3) throw UsageError("bad --tau-grid '" + spec + "' (expected LO:HI:STEP)");
  const double lo = parts[0], hi = parts[1], step = parts[2];
  if (!(step > 0.0) || !(hi >= lo)) throw UsageError("inverted --tau-grid '" + spec + "'");
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> grid;
  for (std::size_t i = 0; i < count; ++i) grid.push_back(lo + step * static_cast<double>(i));
  return grid;
}

inline void write_path_csv(std::ostream& out, const std::vector<double>& taus, const std::vector<double>& deltas,
                           const Matrix& path, const std::vector<std::string>& names) {
  std::vector<std::string> header{"tau", "delta"};
  header.insert(header.end(), names.begin(), names.end());
  Matrix values(path.rows(), path.cols() + 2);
  for (Eigen::Index g = 0; g < path.rows(); ++g) {
    values(g, 0) = taus[static_cast<std::size_t>(g)];
    values(g, 1) = deltas[static_cast<std::size_t>(g)];
    values.row(g).tail(path.cols()) = path.row(g);
  }
  write_csv(out, values, header);
}

inline void emit_path(const AnalyzeOptions& o, const LadPosterior& posterior, const std::string& grid_spec,
                      const std::string& out_path, std::ostream& fallback) {
  if (!o.noise_mu) throw UsageError("path requires --noise-mu");
  if (o.variant != "soft") throw UsageError("path is defined for --variant soft only");
  const std::vector<double> taus = parse_grid(grid_spec);
  std::vector<double> deltas;
  const Matrix path = posterior_path(posterior.draws().mus, posterior.meta(), taus, *o.noise_mu, posterior.alpha_n(), &deltas);
  Output out(out_path, fallback);
  write_path_csv(out.stream(), taus, deltas, path, posterior.meta().model_names);
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!detail::trim(item).empty()) items.push_back(detail::trim(item));
  return items;
}

inline void write_brier_csv(std::ostream& out, const BrierTable& table) {
  out << "method,n,delta,mean,se,reps\n";
  for (const auto& r : table.rows)
    out << r.method << ',' << r.n << ',' << format_double(r.delta) << ',' << format_double(r.mean) << ','
        << format_double(r.se) << ',' << r.reps << '\n';
}

inline json brier_to_json(const BrierTable& table, const ExperimentConfig& cfg) {
  json rows = json::array();
  for (const auto& r : table.rows)
    rows.push_back({{"method", r.method}, {"n", r.n}, {"delta", r.delta}, {"mean", number_or_null(r.mean)},
                    {"se", number_or_null(r.se)}, {"reps", r.reps}, {"failed", r.failed},
                    {"se_undefined", r.se_undefined}});
  json methods = json::array();
  for (const auto& m : cfg.methods) methods.push_back(m.name());
  return {{"schema_version", kSchemaVersion},
          {"config", {{"scenario", cfg.scenario == Scenario::mvn_table1 ? "mvn-table1" : "gmm4"},
                      {"n", cfg.n_grid}, {"deltas", cfg.deltas}, {"reps", cfg.reps}, {"methods", methods},
                      {"seed", cfg.seed}, {"draws", cfg.T}, {"alpha_exp", cfg.alpha_exponent},
                      {"kappa0", cfg.cpost.kappa0}}},
          {"rows", rows},
          {"errors", table.errors}};
}

/// Entry point shared by the `lad` binary and the integration tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Likelihood-as-data robust model selection"};
  app.require_subcommand(1);

  // analyze
  AnalyzeOptions analyze_opts;
  std::string loss_path, meta_path;
  auto* analyze = app.add_subcommand("analyze", "Score candidate models from a loss matrix");
  analyze->add_option("--loss", loss_path, "Loss matrix CSV (n rows, K columns)")->required();
  analyze->add_option("--meta", meta_path, "Model metadata JSON")->required();
  analyze->add_flag("--bias-correct", analyze_opts.bias_correct, "Add d_k/(2n) to column k");
  add_analyze_flags(analyze, analyze_opts);

  // path
  AnalyzeOptions path_opts;
  std::string path_loss, path_meta, grid_spec;
  auto* path = app.add_subcommand("path", "Scores along a grid of rescaled tolerances");
  path->add_option("--loss", path_loss, "Loss matrix CSV")->required();
  path->add_option("--meta", path_meta, "Model metadata JSON")->required();
  path->add_flag("--bias-correct", path_opts.bias_correct, "Add d_k/(2n) to column k");
  path->add_option("--tau-grid", grid_spec, "LO:HI:STEP")->required();
  add_analyze_flags(path, path_opts, false);

  // simulate
  std::string scenario = "mvn-table1", methods_text, sim_out = "-", sim_json;
  std::vector<std::size_t> sim_n;
  std::vector<double> sim_deltas;
  std::size_t sim_reps = 50, sim_draws = 1000, sim_kmax = 6, sim_restarts = 10;
  std::uint64_t sim_seed = 0;
  double sim_alpha_exp = 0.45, sim_kappa0 = 1.0;
  auto* simulate = app.add_subcommand("simulate", "Brier-loss comparison of selection methods");
  simulate->add_option("--scenario", scenario, "mvn-table1 | gmm4");
  simulate->add_option("--n", sim_n, "Sample sizes, comma separated")->delimiter(',')->required();
  simulate->add_option("--reps", sim_reps, "Replicates per sample size");
  simulate->add_option("--delta", sim_deltas, "Tolerances, comma separated")->delimiter(',')->required();
  simulate->add_option("--methods", methods_text, "Methods, comma separated")->required();
  simulate->add_option("--seed", sim_seed, "Random seed");
  simulate->add_option("--draws", sim_draws, "Posterior draws T")->check(CLI::PositiveNumber);
  simulate->add_option("--alpha-exp", sim_alpha_exp, "Soft-min temperature exponent");
  simulate->add_option("--kappa0", sim_kappa0, "Prior precision for bayes/cpost");
  simulate->add_option("--kmax", sim_kmax, "Largest mixture size (gmm4)");
  simulate->add_option("--restarts", sim_restarts, "EM restarts (gmm4)");
  simulate->add_option("--out", sim_out, "Brier table CSV, - for stdout");
  simulate->add_option("--json", sim_json, "Optional JSON copy of the table");

  // gmm
  AnalyzeOptions gmm_opts;
  std::string data_path, gmm_grid, gmm_path_out = "-", losses_out;
  std::size_t kmax = 10, restarts = 50;
  auto* gmm = app.add_subcommand("gmm", "Fit mixtures k=1..kmax to univariate data and score them");
  gmm->add_option("--data", data_path, "Univariate data CSV")->required();
  gmm->add_option("--kmax", kmax, "Largest number of components")->check(CLI::PositiveNumber);
  gmm->add_option("--restarts", restarts, "EM restarts per k")->check(CLI::PositiveNumber);
  gmm->add_option("--tau-grid", gmm_grid, "Also write a posterior path over LO:HI:STEP");
  gmm->add_option("--path-out", gmm_path_out, "Path CSV destination");
  gmm->add_option("--losses-out", losses_out, "Optional CSV of the bias-corrected loss matrix");
  add_analyze_flags(gmm, gmm_opts);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << '\n';
      return kExitUsage;
    }

    if (*analyze) {
      const LossMatrix z = load_loss_matrix(loss_path, std::nullopt);
      const ModelMeta meta = load_meta(meta_path);
      if (!analyze_opts.taus.empty() && !analyze_opts.noise_mu) throw UsageError("--tau requires --noise-mu");
      const LadPosterior posterior(z, meta, analyze_opts.selector());
      json config = config_echo(analyze_opts, posterior);
      config["loss"] = loss_path;
      config["meta"] = meta_path;
      emit_reports(analyze_opts, posterior, config, out);
    } else if (*path) {
      const LossMatrix z = load_loss_matrix(path_loss, std::nullopt);
      const ModelMeta meta = load_meta(path_meta);
      parse_grid(grid_spec);
      if (!path_opts.noise_mu) throw UsageError("path requires --noise-mu");
      const LadPosterior posterior(z, meta, path_opts.selector());
      emit_path(path_opts, posterior, grid_spec, path_opts.out, out);
    } else if (*simulate) {
      ExperimentConfig cfg;
      if (scenario == "mvn-table1") cfg.scenario = Scenario::mvn_table1;
      else if (scenario == "gmm4") cfg.scenario = Scenario::gmm4;
      else throw UsageError("unknown --scenario '" + scenario + "' (expected mvn-table1 or gmm4)");
      for (const auto& token : split_list(methods_text)) cfg.methods.push_back(parse_method(token));
      cfg.n_grid = sim_n;
      cfg.deltas = sim_deltas;
      cfg.reps = sim_reps;
      cfg.seed = sim_seed;
      cfg.T = sim_draws;
      cfg.alpha_exponent = sim_alpha_exp;
      cfg.cpost.kappa0 = sim_kappa0;
      cfg.kmax = sim_kmax;
      cfg.restarts = sim_restarts;
      const BrierTable table = run_comparison(cfg);
      {
        Output o(sim_out, out);
        write_brier_csv(o.stream(), table);
      }
      if (!sim_json.empty()) {
        Output o(sim_json, out);
        o.stream() << brier_to_json(table, cfg).dump(2) << '\n';
      }
      for (const auto& e : table.errors) err << "warning: " << e << '\n';
    } else if (*gmm) {
      const CsvTable table = read_csv(data_path, std::nullopt);
      if (table.values.cols() != 1) throw ValidationError("--data must have exactly one column");
      const Vector x = table.values.col(0);
      if (kmax > static_cast<std::size_t>(x.size()))
        throw SizeError("--kmax " + std::to_string(kmax) + " exceeds the number of observations " + std::to_string(x.size()));
      Matrix z(x.size(), static_cast<Eigen::Index>(kmax));
      ModelMeta meta;
      for (std::size_t k = 1; k <= kmax; ++k) {
        z.col(static_cast<Eigen::Index>(k - 1)) = gmm_fit_em(x, k, restarts, gmm_opts.seed).losses;
        meta.model_names.push_back("k" + std::to_string(k));
        meta.complexity.push_back(static_cast<double>(k));
        meta.dims.push_back(static_cast<double>(3 * k - 1));
      }
      gmm_opts.bias_correct = true;
      gmm_opts.noise_mu = noise_reference(table.values, NoiseKind::uniform_range);
      const LossMatrix losses(std::move(z), meta.model_names);
      if (!losses_out.empty()) write_loss_matrix(losses_out, bias_correct(losses, meta));
      const LadPosterior posterior(losses, meta, gmm_opts.selector());
      json config = config_echo(gmm_opts, posterior);
      config["data"] = data_path;
      config["kmax"] = kmax;
      config["restarts"] = restarts;
      if (!gmm_opts.deltas.empty() || !gmm_opts.taus.empty()) emit_reports(gmm_opts, posterior, config, out);
      if (!gmm_grid.empty()) emit_path(gmm_opts, posterior, gmm_grid, gmm_path_out, out);
      if (gmm_opts.deltas.empty() && gmm_opts.taus.empty() && gmm_grid.empty())
        throw UsageError("gmm needs --delta, --tau or --tau-grid");
    }
    return kExitOk;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace lad::cli
