#pragma once

// The per-observation loss matrix, model metadata, and their summaries.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lad/errors.hpp"
#include "lad/linalg.hpp"

namespace lad {

struct ModelMeta;

/// Record of the overfitting shift d_k / (2n) already applied to a matrix.
struct BiasCorrection {
  std::vector<double> dims;
  std::size_t n = 0;
};

/// n x K matrix of per-observation losses in nats; column k belongs to model k.
class LossMatrix {
 public:
  LossMatrix(Matrix values, std::vector<std::string> model_names)
      : values_(std::move(values)), names_(std::move(model_names)) {
    validate();
  }

  /// Columns named model_1..model_K.
  explicit LossMatrix(Matrix values) : LossMatrix(values, default_names(values.cols())) {}

  const Matrix& values() const { return values_; }
  const std::vector<std::string>& model_names() const { return names_; }
  std::size_t n() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t K() const { return static_cast<std::size_t>(values_.cols()); }
  bool is_bias_corrected() const { return correction_.has_value(); }
  const std::optional<BiasCorrection>& bias_correction() const { return correction_; }

  static std::vector<std::string> default_names(Eigen::Index k) {
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < k; ++j) names.push_back("model_" + std::to_string(j + 1));
    return names;
  }

 private:
  friend LossMatrix bias_correct(const LossMatrix&, const ModelMeta&);

  void validate() const {
    if (values_.cols() < 1) throw SizeError("loss matrix needs at least one column");
    if (values_.rows() < 2) throw SizeError("loss matrix needs at least two rows, got " + std::to_string(values_.rows()));
    if (names_.size() != static_cast<std::size_t>(values_.cols()))
      throw SizeError("model name count does not match column count");
    std::set<std::string> seen;
    for (const auto& name : names_)
      if (!seen.insert(name).second) throw ValidationError("duplicate model name '" + name + "'");
    for (Eigen::Index i = 0; i < values_.rows(); ++i)
      for (Eigen::Index j = 0; j < values_.cols(); ++j)
        if (!std::isfinite(values_(i, j)))
          throw ValidationError("non-finite loss at row " + std::to_string(i + 1) + ", column " +
                                std::to_string(j + 1));
  }

  Matrix values_;
  std::vector<std::string> names_;
  std::optional<BiasCorrection> correction_;
};

/// Per-model complexity c(k) and parameter dimension d_k.
struct ModelMeta {
  std::vector<std::string> model_names;
  std::vector<double> complexity;
  std::vector<double> dims;

  std::size_t K() const { return complexity.size(); }

  void validate() const {
    if (complexity.empty()) throw SizeError("model metadata is empty");
    if (dims.size() != complexity.size() || (!model_names.empty() && model_names.size() != complexity.size()))
      throw SizeError("model metadata arrays have different lengths");
    for (double c : complexity)
      if (!(c >= 0.0) || !std::isfinite(c)) throw ValidationError("complexity values must be finite and nonnegative");
    for (double d : dims)
      if (!(d >= 0.0) || !std::isfinite(d) || d != std::floor(d))
        throw ValidationError("dims must be nonnegative integers");
  }

  /// Metadata with every model in its own class: c(k) = d_k = 0.
  static ModelMeta uniform(std::size_t k, double complexity_value = 0.0) {
    ModelMeta meta;
    meta.complexity.assign(k, complexity_value);
    meta.dims.assign(k, 0.0);
    return meta;
  }
};

/// Column means and 1/n-normalized covariance of a loss matrix.
struct LossSummary {
  Vector mean;
  Matrix cov;
  std::size_t n = 0;
};

inline LossSummary summarize(const LossMatrix& z) {
  const Matrix& v = z.values();
  const double n = static_cast<double>(z.n());
  LossSummary s;
  s.n = z.n();
  s.mean = v.colwise().mean().transpose();
  const Matrix centered = v.rowwise() - s.mean.transpose();
  s.cov = symmetrize(centered.transpose() * centered / n);
  if (!s.mean.allFinite() || !s.cov.allFinite()) throw NumericalError("loss summary overflowed; rescale the loss matrix");
  return s;
}

/// Adds d_k / (2n) to every entry of column k. A matrix can be corrected once.
inline LossMatrix bias_correct(const LossMatrix& z, const ModelMeta& meta) {
  if (z.is_bias_corrected()) throw ValidationError("loss matrix is already bias-corrected");
  if (meta.dims.size() != z.K()) throw SizeError("meta dims length does not match loss matrix columns");
  Matrix shifted = z.values();
  const double two_n = 2.0 * static_cast<double>(z.n());
  for (std::size_t k = 0; k < z.K(); ++k) shifted.col(static_cast<Eigen::Index>(k)).array() += meta.dims[k] / two_n;
  LossMatrix out(std::move(shifted), z.model_names());
  out.correction_ = BiasCorrection{meta.dims, z.n()};
  return out;
}

// --- CSV -------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;  // empty when the file has none
  Matrix values;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::optional<double> parse_double(const std::string& cell) {
  const std::string text = trim(cell);
  if (text.empty()) return std::nullopt;
  std::size_t used = 0;
  try {
    const double value = std::stod(text, &used);
    if (used != text.size()) return std::nullopt;
    return value;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline bool row_is_numeric(const std::vector<std::string>& cells) {
  for (const auto& c : cells)
    if (!parse_double(c)) return false;
  return true;
}

}  // namespace detail

/// Parses comma-separated numeric text. With has_header unset the first row is
/// treated as a header iff any of its cells fails to parse as a number.
inline CsvTable parse_csv(std::istream& in, std::optional<bool> has_header, const std::string& source = "<stream>") {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    rows.push_back(detail::split_csv_line(line));
  }
  CsvTable table;
  std::size_t first_data = 0;
  const bool header = has_header.value_or(!rows.empty() && !detail::row_is_numeric(rows.front()));
  if (header) {
    if (rows.empty()) throw FormatError(source + ": missing header row");
    for (const auto& c : rows.front()) table.header.push_back(detail::trim(c));
    first_data = 1;
  }
  const std::size_t width = header ? table.header.size() : (rows.empty() ? 0 : rows.front().size());
  const std::size_t n = rows.size() - first_data;
  table.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width));
  for (std::size_t r = first_data; r < rows.size(); ++r) {
    const std::size_t line_no = r + 1;
    if (rows[r].size() != width)
      throw FormatError(source + ": ragged row at line " + std::to_string(line_no) + " (" +
                        std::to_string(rows[r].size()) + " fields, expected " + std::to_string(width) + ")");
    for (std::size_t c = 0; c < width; ++c) {
      const auto value = detail::parse_double(rows[r][c]);
      if (!value || !std::isfinite(*value))
        throw ValidationError(source + ": invalid value '" + detail::trim(rows[r][c]) + "' at row " +
                              std::to_string(r - first_data + 1) + ", column " + std::to_string(c + 1));
      table.values(static_cast<Eigen::Index>(r - first_data), static_cast<Eigen::Index>(c)) = *value;
    }
  }
  return table;
}

inline CsvTable read_csv(const std::string& path, std::optional<bool> has_header) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return parse_csv(in, has_header, path);
}

inline std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

inline void write_csv(std::ostream& out, const Matrix& values, const std::vector<std::string>& header = {}) {
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  if (!header.empty()) out << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << format_double(values(i, j));
    out << '\n';
  }
}

inline LossMatrix load_loss_matrix(const std::string& path, std::optional<bool> has_header) {
  CsvTable table = read_csv(path, has_header);
  if (table.values.cols() < 1) throw SizeError(path + ": no columns");
  if (table.values.rows() < 2)
    throw SizeError(path + ": need at least two rows, got " + std::to_string(table.values.rows()));
  if (table.header.empty()) return LossMatrix(std::move(table.values));
  return LossMatrix(std::move(table.values), std::move(table.header));
}

inline void write_loss_matrix(const std::string& path, const LossMatrix& z) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path + "'");
  write_csv(out, z.values(), z.model_names());
}

// --- Meta JSON ---------------------------------------------------------------

inline ModelMeta parse_meta(const nlohmann::json& doc) {
  ModelMeta meta;
  try {
    if (doc.contains("names")) meta.model_names = doc.at("names").get<std::vector<std::string>>();
    meta.complexity = doc.at("complexity").get<std::vector<double>>();
    meta.dims = doc.contains("dims") ? doc.at("dims").get<std::vector<double>>()
                                     : std::vector<double>(meta.complexity.size(), 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("meta file: ") + e.what());
  }
  meta.validate();
  return meta;
}

inline ModelMeta load_meta(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return parse_meta(doc);
}

/// Reorders meta to the loss matrix columns: by name when both carry names,
/// by position otherwise.
inline ModelMeta align_meta(const ModelMeta& meta, const LossMatrix& z) {
  meta.validate();
  if (meta.K() != z.K())
    throw SizeError("meta describes " + std::to_string(meta.K()) + " models but loss matrix has " +
                    std::to_string(z.K()) + " columns");
  ModelMeta out;
  out.model_names = z.model_names();
  if (meta.model_names.empty()) {
    out.complexity = meta.complexity;
    out.dims = meta.dims;
    return out;
  }
  for (const auto& name : z.model_names()) {
    std::size_t found = meta.K();
    for (std::size_t j = 0; j < meta.K(); ++j)
      if (meta.model_names[j] == name) found = j;
    if (found == meta.K()) {
      // Loss file without a header: fall back to position.
      bool defaults = z.model_names() == LossMatrix::default_names(static_cast<Eigen::Index>(z.K()));
      if (!defaults) throw ValidationError("model '" + name + "' missing from meta names");
      out.model_names = meta.model_names;
      out.complexity = meta.complexity;
      out.dims = meta.dims;
      return out;
    }
    out.complexity.push_back(meta.complexity[found]);
    out.dims.push_back(meta.dims[found]);
  }
  return out;
}

}  // namespace lad
