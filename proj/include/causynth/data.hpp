#pragma once

// Tabular data model and the CSV exchange format.
//
// A Dataset is an n x (d+2) numeric table whose columns are ordered
// covariates, treatment, outcome. It is immutable once constructed and is
// validated on every construction path.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "causynth/error.hpp"
#include "causynth/rng.hpp"

namespace causynth {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ColumnKind { binary, continuous };
enum class ColumnRole { covariate, treatment, outcome };

inline std::string_view to_string(ColumnKind k) { return k == ColumnKind::binary ? "binary" : "continuous"; }

inline std::string_view to_string(ColumnRole r) {
  switch (r) {
    case ColumnRole::covariate: return "covariate";
    case ColumnRole::treatment: return "treatment";
    case ColumnRole::outcome: return "outcome";
  }
  return "?";
}

inline ColumnKind parse_column_kind(std::string_view s) {
  if (s == "binary") return ColumnKind::binary;
  if (s == "continuous") return ColumnKind::continuous;
  throw ValidationError("unknown column kind '" + std::string(s) + "'");
}

inline ColumnRole parse_column_role(std::string_view s) {
  if (s == "covariate") return ColumnRole::covariate;
  if (s == "treatment") return ColumnRole::treatment;
  if (s == "outcome") return ColumnRole::outcome;
  throw ValidationError("unknown column role '" + std::string(s) + "'");
}

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  ColumnRole role = ColumnRole::covariate;

  friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

/// Ordered column list: covariates first, then exactly one binary treatment,
/// then exactly one outcome.
class Schema {
 public:
  Schema() = default;

  static Schema make(std::vector<ColumnSpec> columns) {
    if (columns.size() < 3) throw ValidationError("schema needs at least one covariate, a treatment and an outcome");
    std::set<std::string> names;
    for (const auto& c : columns) {
      if (c.name.empty()) throw ValidationError("empty column name in schema");
      if (!names.insert(c.name).second) throw ValidationError("duplicate column name '" + c.name + "'");
    }
    const std::size_t d = columns.size() - 2;
    for (std::size_t j = 0; j < d; ++j) {
      if (columns[j].role != ColumnRole::covariate)
        throw ValidationError("column '" + columns[j].name +
                              "': covariates must precede the treatment and outcome columns");
    }
    if (columns[d].role != ColumnRole::treatment)
      throw ValidationError("second-to-last column must be the treatment, got '" + columns[d].name + "'");
    if (columns[d].kind != ColumnKind::binary)
      throw ValidationError("treatment column '" + columns[d].name + "' must be binary");
    if (columns[d + 1].role != ColumnRole::outcome)
      throw ValidationError("last column must be the outcome, got '" + columns[d + 1].name + "'");
    Schema s;
    s.columns_ = std::move(columns);
    return s;
  }

  /// Convenience: named covariates with kinds, plus treatment/outcome names.
  static Schema make(const std::vector<std::pair<std::string, ColumnKind>>& covariates,
                     std::string treatment, std::string outcome, ColumnKind outcome_kind) {
    std::vector<ColumnSpec> cols;
    for (const auto& [name, kind] : covariates) cols.push_back({name, kind, ColumnRole::covariate});
    cols.push_back({std::move(treatment), ColumnKind::binary, ColumnRole::treatment});
    cols.push_back({std::move(outcome), outcome_kind, ColumnRole::outcome});
    return make(std::move(cols));
  }

  const std::vector<ColumnSpec>& columns() const { return columns_; }
  std::size_t width() const { return columns_.size(); }
  std::size_t covariate_count() const { return columns_.size() - 2; }
  const ColumnSpec& treatment() const { return columns_[covariate_count()]; }
  const ColumnSpec& outcome() const { return columns_[covariate_count() + 1]; }
  std::vector<ColumnSpec> covariates() const { return {columns_.begin(), columns_.end() - 2}; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& c : columns_) out.push_back(c.name);
    return out;
  }

  std::vector<std::string> covariate_names() const {
    auto n = names();
    n.resize(covariate_count());
    return n;
  }

  std::vector<bool> covariate_binary_mask() const {
    std::vector<bool> mask;
    for (std::size_t j = 0; j < covariate_count(); ++j) mask.push_back(columns_[j].kind == ColumnKind::binary);
    return mask;
  }

  bool same_covariates(const Schema& other) const {
    return covariate_count() == other.covariate_count() &&
           std::equal(columns_.begin(), columns_.end() - 2, other.columns_.begin());
  }

  Schema with_outcome_kind(ColumnKind kind) const {
    auto cols = columns_;
    cols.back().kind = kind;
    return make(std::move(cols));
  }

  friend bool operator==(const Schema&, const Schema&) = default;

 private:
  std::vector<ColumnSpec> columns_;
};

inline nlohmann::json to_json(const Schema& s) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : s.columns())
    cols.push_back({{"name", c.name}, {"kind", to_string(c.kind)}, {"role", to_string(c.role)}});
  return {{"columns", cols}};
}

inline Schema schema_from_json(const nlohmann::json& j) {
  std::vector<ColumnSpec> cols;
  for (const auto& c : j.at("columns"))
    cols.push_back({c.at("name").get<std::string>(), parse_column_kind(c.at("kind").get<std::string>()),
                    parse_column_role(c.at("role").get<std::string>())});
  return Schema::make(std::move(cols));
}

namespace detail {

inline void check_binary_and_finite(const std::vector<ColumnSpec>& cols, const Matrix& values) {
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      const double v = values(i, j);
      const auto& c = cols[static_cast<std::size_t>(j)];
      if (!std::isfinite(v))
        throw ValidationError("row " + std::to_string(i + 1) + ", column '" + c.name + "': non-finite value");
      if (c.kind == ColumnKind::binary && v != 0.0 && v != 1.0) {
        std::ostringstream os;
        os << "row " << i + 1 << ", column '" << c.name << "': binary column holds " << v;
        throw ValidationError(os.str());
      }
    }
  }
}

}  // namespace detail

class Dataset {
 public:
  Dataset() = default;

  static Dataset make(Schema schema, Matrix values) {
    if (values.rows() < 1) throw ValidationError("dataset must have at least one row");
    if (static_cast<std::size_t>(values.cols()) != schema.width())
      throw ValidationError("dataset has " + std::to_string(values.cols()) + " columns, schema declares " +
                            std::to_string(schema.width()));
    detail::check_binary_and_finite(schema.columns(), values);
    Dataset ds;
    ds.schema_ = std::move(schema);
    ds.values_ = std::move(values);
    return ds;
  }

  /// Assemble from parts; `A` and `Y` are appended after the covariates.
  static Dataset make(Schema schema, const Matrix& W, const Vector& A, const Vector& Y) {
    if (W.rows() != A.size() || W.rows() != Y.size()) throw ValidationError("covariate/treatment/outcome row mismatch");
    Matrix values(W.rows(), W.cols() + 2);
    values.leftCols(W.cols()) = W;
    values.col(W.cols()) = A;
    values.col(W.cols() + 1) = Y;
    return make(std::move(schema), std::move(values));
  }

  const Schema& schema() const { return schema_; }
  const Matrix& values() const { return values_; }
  Eigen::Index n() const { return values_.rows(); }
  Eigen::Index d() const { return values_.cols() - 2; }

  auto covariates() const { return values_.leftCols(d()); }
  auto treatment() const { return values_.col(d()); }
  auto outcome() const { return values_.col(d() + 1); }

  Dataset select_rows(const std::vector<Eigen::Index>& rows) const {
    Matrix out(static_cast<Eigen::Index>(rows.size()), values_.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = values_.row(rows[i]);
    Dataset ds;
    ds.schema_ = schema_;
    ds.values_ = std::move(out);
    return ds;
  }

  /// Rows of `this` followed by rows of `other`; schemas must agree.
  Dataset append(const Dataset& other) const {
    if (!(schema_ == other.schema_)) throw ValidationError("cannot append datasets with different schemas");
    Matrix out(n() + other.n(), values_.cols());
    out.topRows(n()) = values_;
    out.bottomRows(other.n()) = other.values_;
    Dataset ds;
    ds.schema_ = schema_;
    ds.values_ = std::move(out);
    return ds;
  }

 private:
  Schema schema_;
  Matrix values_;
};

// ---------------------------------------------------------------- CSV -----

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

inline double parse_number(std::string_view field, std::size_t row, const std::string& column) {
  field = trim(field);
  double v = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (field.empty() || ec != std::errc() || ptr != last)
    throw ValidationError("row " + std::to_string(row) + ", column '" + column + "': cannot parse '" +
                          std::string(field) + "' as a number");
  return v;
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline RawTable read_raw_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  RawTable t;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("'" + path + "' is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  for (auto f : split_commas(trim(line))) t.header.emplace_back(trim(f));
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    auto fields = split_commas(trim(line));
    if (fields.size() != t.header.size())
      throw ValidationError("'" + path + "' row " + std::to_string(row) + ": expected " +
                            std::to_string(t.header.size()) + " fields, got " + std::to_string(fields.size()));
    std::vector<double> vals;
    vals.reserve(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) vals.push_back(parse_number(fields[j], row, t.header[j]));
    t.rows.push_back(std::move(vals));
  }
  return t;
}

inline Matrix to_matrix(const std::vector<std::vector<double>>& rows, std::size_t width) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

inline void check_header(const std::vector<std::string>& got, const std::vector<std::string>& want,
                         const std::string& path) {
  if (got == want) return;
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
  };
  throw ValidationError("schema mismatch in '" + path + "': header is '" + join(got) + "', expected '" + join(want) +
                        "'");
}

}  // namespace detail

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_number(double v) {
  if (v == 0.0) return "0";  // also folds -0
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline Dataset load_table(const std::string& path, const Schema& schema) {
  auto raw = detail::read_raw_csv(path);
  detail::check_header(raw.header, schema.names(), path);
  if (raw.rows.empty()) throw ValidationError("'" + path + "' has no data rows");
  return Dataset::make(schema, detail::to_matrix(raw.rows, schema.width()));
}

/// Covariate-only exchange table (e.g. an external generator's output).
inline Matrix load_covariates(const std::string& path, const std::vector<ColumnSpec>& covariates) {
  auto raw = detail::read_raw_csv(path);
  std::vector<std::string> names;
  for (const auto& c : covariates) names.push_back(c.name);
  detail::check_header(raw.header, names, path);
  if (raw.rows.empty()) throw ValidationError("'" + path + "' has no data rows");
  Matrix m = detail::to_matrix(raw.rows, covariates.size());
  detail::check_binary_and_finite(covariates, m);
  return m;
}

/// Schema from the header alone: last two columns are treatment and outcome;
/// a column is binary when every value is 0 or 1.
inline Schema infer_schema(const std::string& path) {
  auto raw = detail::read_raw_csv(path);
  if (raw.header.size() < 3) throw ValidationError("'" + path + "' needs at least three columns");
  const std::size_t w = raw.header.size();
  std::vector<ColumnSpec> cols;
  for (std::size_t j = 0; j < w; ++j) {
    bool binary = !raw.rows.empty();
    for (const auto& r : raw.rows) binary = binary && (r[j] == 0.0 || r[j] == 1.0);
    const ColumnRole role = j + 2 < w ? ColumnRole::covariate : (j + 2 == w ? ColumnRole::treatment : ColumnRole::outcome);
    cols.push_back({raw.header[j], binary ? ColumnKind::binary : ColumnKind::continuous, role});
  }
  return Schema::make(std::move(cols));
}

inline void write_matrix_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& values) {
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << format_number(values(i, j));
    out << '\n';
  }
}

inline void write_table(std::ostream& out, const Dataset& ds) { write_matrix_csv(out, ds.schema().names(), ds.values()); }

inline void write_table(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  write_table(out, ds);
}

// --------------------------------------------------------- standardizer -----

/// Per-covariate centering and scaling; binary columns pass through.
struct Standardizer {
  Vector mean;
  Vector scale;
  std::vector<bool> binary;

  static Standardizer identity(std::size_t d) {
    return {Vector::Zero(static_cast<Eigen::Index>(d)), Vector::Ones(static_cast<Eigen::Index>(d)),
            std::vector<bool>(d, false)};
  }

  Matrix apply(const Eigen::Ref<const Matrix>& W) const {
    if (W.cols() != mean.size()) throw ValidationError("standardizer width does not match covariate matrix");
    Matrix out = W;
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      if (binary[static_cast<std::size_t>(j)]) continue;
      out.col(j) = (W.col(j).array() - mean(j)) / scale(j);
    }
    return out;
  }
};

inline Standardizer fit_standardizer(const Eigen::Ref<const Matrix>& W, const std::vector<bool>& binary) {
  if (W.rows() < 1) throw ValidationError("cannot fit a standardizer on an empty matrix");
  const Eigen::Index d = W.cols();
  Standardizer s{Vector::Zero(d), Vector::Ones(d), binary};
  for (Eigen::Index j = 0; j < d; ++j) {
    if (binary[static_cast<std::size_t>(j)]) continue;
    const double m = W.col(j).mean();
    s.mean(j) = m;
    if (W.rows() > 1) {
      const double ss = (W.col(j).array() - m).square().sum();
      const double sd = std::sqrt(ss / static_cast<double>(W.rows() - 1));
      if (sd > 0.0 && std::isfinite(sd)) s.scale(j) = sd;
    }
  }
  return s;
}

inline Standardizer fit_standardizer(const Dataset& ds) {
  return fit_standardizer(ds.covariates(), ds.schema().covariate_binary_mask());
}

inline nlohmann::json to_json(const Standardizer& s) {
  return {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
          {"scale", std::vector<double>(s.scale.data(), s.scale.data() + s.scale.size())},
          {"binary", s.binary}};
}

// ------------------------------------------------------------ resampling -----

/// First `m` entries of a seeded Fisher-Yates shuffle of 0..n-1. Prefixes are
/// nested: the draw for m is a prefix of the draw for any m' > m.
inline std::vector<Eigen::Index> sample_without_replacement(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  if (m < 1 || m > n)
    throw ValidationError("subsample size " + std::to_string(m) + " outside [1, " + std::to_string(n) + "]");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng(seed);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto j = i + static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(m));
  return idx;
}

inline Dataset subsample(const Dataset& ds, Eigen::Index m, std::uint64_t seed) {
  return ds.select_rows(sample_without_replacement(ds.n(), m, seed));
}

}  // namespace causynth
