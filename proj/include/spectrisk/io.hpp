#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spectrisk/error.hpp"
#include "spectrisk/montecarlo.hpp"
#include "spectrisk/spectra.hpp"

namespace spectrisk::io {

using nlohmann::json;

namespace detail {

[[noreturn]] inline void config_error(const std::string& field, const std::string& what) {
  fail(ErrorCode::ConfigError, "field '" + field + "': " + what);
}

inline const json& require(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) config_error(ctx + key, "is required");
  return j.at(key);
}

inline double number(const json& j, const std::string& field) {
  if (!j.is_number()) config_error(field, "expected a number, got " + j.dump());
  return j.get<double>();
}

inline std::int64_t integer(const json& j, const std::string& field) {
  if (!j.is_number_integer()) config_error(field, "expected an integer, got " + j.dump());
  return j.get<std::int64_t>();
}

inline std::size_t count(const json& j, const std::string& field, std::int64_t min = 0) {
  const auto v = integer(j, field);
  if (v < min) config_error(field, "must be >= " + std::to_string(min));
  return static_cast<std::size_t>(v);
}

inline std::string text(const json& j, const std::string& field) {
  if (!j.is_string()) config_error(field, "expected a string, got " + j.dump());
  return j.get<std::string>();
}

inline double number_or(const json& j, const std::string& key, double fallback, const std::string& ctx) {
  return j.contains(key) ? number(j.at(key), ctx + key) : fallback;
}

/// Rethrows library errors raised while building a value as ConfigError
/// naming the field, keeping the original code in the message.
template <class F>
auto with_field(const std::string& field, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    config_error(field, e.what());
  }
}

}  // namespace detail

/// Spectrum from its JSON description:
/// {"type": "point_masses", "atoms": [{"t":..,"w":..}]}, {"type": "ar1", "rho":.., "nodes":..},
/// {"type": "exponential_quantiles", "count":..}, {"type": "binary_tree", "depth":..},
/// {"type": "eigenvalues", "values": [..]}.
inline SpectralDistribution parse_spectrum(const json& j, const std::string& ctx = "spectrum.") {
  using namespace detail;
  if (!j.is_object()) config_error(ctx.substr(0, ctx.size() - 1), "expected an object");
  const std::string type = text(require(j, "type", ctx), ctx + "type");
  if (type == "point_masses") {
    const auto& atoms = require(j, "atoms", ctx);
    if (!atoms.is_array() || atoms.empty()) config_error(ctx + "atoms", "expected a non-empty array");
    std::vector<Atom> out;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      const std::string f = ctx + "atoms[" + std::to_string(i) + "].";
      out.push_back({number(require(atoms[i], "t", f), f + "t"), number(require(atoms[i], "w", f), f + "w")});
    }
    return with_field(ctx + "atoms", [&] { return SpectralDistribution::point_masses(std::move(out)); });
  }
  if (type == "ar1") {
    const double rho = number(require(j, "rho", ctx), ctx + "rho");
    const std::size_t nodes = j.contains("nodes") ? count(j.at("nodes"), ctx + "nodes", 1) : kDefaultAr1Nodes;
    return with_field(ctx + "rho", [&] { return SpectralDistribution::ar1_limit(rho, nodes); });
  }
  if (type == "exponential_quantiles") {
    const std::size_t c = count(require(j, "count", ctx), ctx + "count", 1);
    return SpectralDistribution::exponential_quantiles(c);
  }
  if (type == "binary_tree") {
    const auto depth = integer(require(j, "depth", ctx), ctx + "depth");
    return with_field(ctx + "depth", [&] { return binary_tree_spectrum(static_cast<int>(depth)); });
  }
  if (type == "eigenvalues") {
    const auto& values = require(j, "values", ctx);
    if (!values.is_array() || values.empty()) config_error(ctx + "values", "expected a non-empty array");
    std::vector<double> out;
    for (std::size_t i = 0; i < values.size(); ++i) {
      out.push_back(number(values[i], ctx + "values[" + std::to_string(i) + "]"));
    }
    return with_field(ctx + "values", [&] { return SpectralDistribution::eigenvalues(std::move(out)); });
  }
  config_error(ctx + "type", "unknown spectrum type '" + type + "'");
}

inline json parse_json_text(const std::string& text, const std::string& field) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    detail::config_error(field, std::string("invalid JSON: ") + e.what());
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) detail::config_error(path, "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path);
}

/// Inline JSON if the argument starts with '{', else a path to a JSON file.
inline SpectralDistribution parse_spectrum_arg(const std::string& arg) {
  const auto first = arg.find_first_not_of(" \t\n");
  const json j = (first != std::string::npos && arg[first] == '{') ? parse_json_text(arg, "spectrum")
                                                                  : read_json_file(arg);
  return parse_spectrum(j);
}

inline json spectrum_to_json(const SpectralDistribution& h) {
  json atoms = json::array();
  for (const auto& a : h.rule()) atoms.push_back({{"t", a.t}, {"w", a.w}});
  return {{"type", "point_masses"}, {"label", h.label()}, {"atoms", atoms}};
}

/// "LO:HI:N" (log-spaced) or "LO:HI:N:lin".
inline std::vector<double> parse_lambda_grid(const std::string& spec, const std::string& field = "lambda-grid") {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
  if (parts.size() != 3 && parts.size() != 4) {
    detail::config_error(field, "expected LO:HI:N or LO:HI:N:lin, got '" + spec + "'");
  }
  auto parse = [&](const std::string& s) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) detail::config_error(field, "bad number '" + s + "'");
    return x;
  };
  const double lo = parse(parts[0]);
  const double hi = parse(parts[1]);
  const double nd = parse(parts[2]);
  const bool linear = parts.size() == 4 && parts[3] == "lin";
  if (parts.size() == 4 && !linear && parts[3] != "log") detail::config_error(field, "spacing must be 'log' or 'lin'");
  if (!(lo > 0.0 && std::isfinite(lo))) detail::config_error(field, "lambda must be positive, got LO=" + parts[0]);
  if (!(hi >= lo && std::isfinite(hi))) detail::config_error(field, "need LO <= HI");
  if (!(nd >= 1.0 && nd == std::floor(nd))) detail::config_error(field, "N must be a positive integer");
  const auto n = static_cast<std::size_t>(nd);
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double f = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    // Decimal exponents keep round values such as λ = 1 exact on decade grids.
    grid[i] = linear ? lo + f * (hi - lo) : std::pow(10.0, std::log10(lo) + f * (std::log10(hi) - std::log10(lo)));
  }
  grid.front() = lo;
  if (n > 1) grid.back() = hi;
  return grid;
}

inline mc::CovarianceModel parse_covariance(const json& j, const std::string& ctx = "covariance.") {
  using namespace detail;
  if (!j.is_object()) config_error(ctx.substr(0, ctx.size() - 1), "expected an object");
  const std::string type = text(require(j, "type", ctx), ctx + "type");
  if (type == "identity") return mc::IdentityModel{};
  if (type == "ar1") return mc::Ar1Model{number(require(j, "rho", ctx), ctx + "rho")};
  if (type == "exponential_quantiles" || type == "exponential") return mc::ExponentialModel{};
  if (type == "binary_tree") {
    return mc::BinaryTreeModel{static_cast<int>(integer(require(j, "depth", ctx), ctx + "depth"))};
  }
  if (type == "explicit") {
    const auto& rows = require(j, "matrix", ctx);
    if (!rows.is_array() || rows.empty()) config_error(ctx + "matrix", "expected a non-empty array of rows");
    const auto p = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd sigma(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
      const auto& row = rows[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != p) {
        config_error(ctx + "matrix[" + std::to_string(i) + "]", "expected " + std::to_string(p) + " entries");
      }
      for (Eigen::Index k = 0; k < p; ++k) {
        sigma(i, k) = number(row[static_cast<std::size_t>(k)], ctx + "matrix");
      }
    }
    return mc::ExplicitModel{std::move(sigma)};
  }
  config_error(ctx + "type", "unknown covariance type '" + type + "'");
}

namespace detail {

inline std::vector<double> grid_from(const json& j, bool required = true) {
  if (j.contains("lambdas")) {
    const auto& arr = j.at("lambdas");
    if (!arr.is_array() || arr.empty()) config_error("lambdas", "expected a non-empty array");
    std::vector<double> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const double l = number(arr[i], "lambdas[" + std::to_string(i) + "]");
      if (!(l > 0.0)) config_error("lambdas[" + std::to_string(i) + "]", "lambda must be positive");
      out.push_back(l);
    }
    return out;
  }
  if (j.contains("lambda_grid")) return parse_lambda_grid(text(j.at("lambda_grid"), "lambda_grid"), "lambda_grid");
  if (required) config_error("lambda_grid", "one of 'lambda_grid' or 'lambdas' is required");
  return {};
}

inline mc::SpectrumSource source_from(const json& j) {
  if (!j.contains("theory_spectrum")) return mc::SpectrumSource::Finite;
  const auto s = text(j.at("theory_spectrum"), "theory_spectrum");
  if (s == "finite") return mc::SpectrumSource::Finite;
  if (s == "limit") return mc::SpectrumSource::Limit;
  config_error("theory_spectrum", "expected 'finite' or 'limit'");
}

inline std::uint64_t seed_from(const json& j, std::optional<std::uint64_t> override_seed) {
  if (override_seed) return *override_seed;
  if (!j.contains("seed")) config_error("seed", "a seed is required (config field or --seed)");
  const auto& s = j.at("seed");
  if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
    config_error("seed", "expected a non-negative integer");
  }
  return s.get<std::uint64_t>();
}

inline void check_known(const json& j, std::initializer_list<const char*> keys) {
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (const char* key : keys) ok = ok || k == key;
    if (!ok) config_error(k, "unknown field");
  }
}

}  // namespace detail

inline mc::RidgeSimConfig parse_ridge_config(const json& j, std::optional<std::uint64_t> seed = {}) {
  using namespace detail;
  check_known(j, {"name", "covariance", "p", "gamma", "alpha2", "lambda_grid", "lambdas", "replicates", "test_size",
                  "eval", "seed", "theory_spectrum", "threads"});
  mc::RidgeSimConfig c;
  c.model = parse_covariance(require(j, "covariance", ""));
  c.p = j.contains("p") ? count(j.at("p"), "p", 2) : 0;
  c.gamma = number(require(j, "gamma", ""), "gamma");
  if (!(c.gamma > 0.0)) config_error("gamma", "must be > 0");
  c.alpha2 = number(require(j, "alpha2", ""), "alpha2");
  if (!(c.alpha2 >= 0.0)) config_error("alpha2", "must be >= 0");
  c.lambdas = grid_from(j);
  c.replicates = j.contains("replicates") ? count(j.at("replicates"), "replicates", 1) : c.replicates;
  c.test_size = j.contains("test_size") ? count(j.at("test_size"), "test_size") : 0;
  if (j.contains("eval")) {
    const auto e = text(j.at("eval"), "eval");
    if (e == "realized") c.eval = mc::RidgeEval::Realized;
    else if (e == "conditional_trace") c.eval = mc::RidgeEval::ConditionalTrace;
    else if (e == "test_set") c.eval = mc::RidgeEval::TestSet;
    else config_error("eval", "expected 'realized', 'conditional_trace' or 'test_set'");
  }
  if (c.eval == mc::RidgeEval::TestSet && c.test_size == 0) config_error("test_size", "test_set evaluation needs test_size > 0");
  c.seed = seed_from(j, seed);
  c.theory_source = source_from(j);
  if (j.contains("threads")) c.threads = static_cast<unsigned>(count(j.at("threads"), "threads"));
  with_field("p", [&] { return mc::model_dimension(c.model, c.p); });
  return c;
}

inline mc::RdaSimConfig parse_rda_config(const json& j, std::optional<std::uint64_t> seed = {}) {
  using namespace detail;
  check_known(j, {"name", "covariance", "p", "gamma", "n_plus", "n_minus", "alpha2", "target_bayes_error",
                  "calibration", "lambda_grid", "lambdas", "replicates", "test_size", "c", "pi_plus", "weight",
                  "mean_stress", "seed", "theory_spectrum", "threads"});
  mc::RdaSimConfig c;
  c.model = parse_covariance(require(j, "covariance", ""));
  c.p = j.contains("p") ? count(j.at("p"), "p", 2) : 0;
  c.gamma = number_or(j, "gamma", 1.0, "");
  if (!(c.gamma > 0.0)) config_error("gamma", "must be > 0");
  if (j.contains("n_plus") != j.contains("n_minus")) config_error("n_plus", "give both n_plus and n_minus or neither");
  if (j.contains("n_plus")) {
    c.n_plus = count(j.at("n_plus"), "n_plus", 1);
    c.n_minus = count(j.at("n_minus"), "n_minus", 1);
  }
  if (j.contains("alpha2")) c.alpha2 = number(j.at("alpha2"), "alpha2");
  if (j.contains("target_bayes_error")) c.target_bayes_error = number(j.at("target_bayes_error"), "target_bayes_error");
  if (c.alpha2 && c.target_bayes_error) config_error("alpha2", "give either alpha2 or target_bayes_error, not both");
  if (!c.alpha2 && !c.target_bayes_error) config_error("alpha2", "one of alpha2 or target_bayes_error is required");
  if (c.alpha2 && !(*c.alpha2 >= 0.0)) config_error("alpha2", "must be >= 0");
  if (c.target_bayes_error && !(*c.target_bayes_error > 0.0 && *c.target_bayes_error < 0.5)) {
    config_error("target_bayes_error", "must lie in (0, 0.5)");
  }
  if (j.contains("calibration")) {
    const auto s = text(j.at("calibration"), "calibration");
    if (s == "finite") c.calibration = mc::Calibration::Finite;
    else if (s == "asymptotic") c.calibration = mc::Calibration::Asymptotic;
    else config_error("calibration", "expected 'finite' or 'asymptotic'");
  }
  if (j.contains("weight")) {
    const auto s = text(j.at("weight"), "weight");
    if (s == "regularized") c.weight = mc::RdaWeight::Regularized;
    else if (s == "independence") c.weight = mc::RdaWeight::Independence;
    else config_error("weight", "expected 'regularized' or 'independence'");
  }
  c.lambdas = grid_from(j, c.weight == mc::RdaWeight::Regularized);
  c.replicates = j.contains("replicates") ? count(j.at("replicates"), "replicates", 1) : c.replicates;
  c.test_size = j.contains("test_size") ? count(j.at("test_size"), "test_size") : 0;
  c.c = number_or(j, "c", 0.0, "");
  if (j.contains("pi_plus")) {
    c.pi_plus = number(j.at("pi_plus"), "pi_plus");
    if (!(*c.pi_plus > 0.0 && *c.pi_plus < 1.0)) config_error("pi_plus", "must lie in (0, 1)");
  }
  if (j.contains("mean_stress")) {
    if (!j.at("mean_stress").is_boolean()) config_error("mean_stress", "expected a boolean");
    c.mean_stress = j.at("mean_stress").get<bool>();
  }
  c.seed = seed_from(j, seed);
  c.theory_source = source_from(j);
  if (j.contains("threads")) c.threads = static_cast<unsigned>(count(j.at("threads"), "threads"));
  with_field("p", [&] { return mc::model_dimension(c.model, c.p); });
  return c;
}

/// Expands a config into its runs. A top-level "runs" array holds per-run
/// overrides merged onto the remaining fields; a manifest's "config" block is
/// accepted in place of a config.
inline std::vector<json> expand_runs(json j) {
  if (j.is_object() && j.contains("manifest_version") && j.contains("config")) j = j.at("config");
  if (!j.is_object()) detail::config_error("config", "expected a JSON object");
  if (!j.contains("runs")) return {j};
  const json runs = j.at("runs");
  if (!runs.is_array() || runs.empty()) detail::config_error("runs", "expected a non-empty array");
  j.erase("runs");
  std::vector<json> out;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (!runs[i].is_object()) detail::config_error("runs[" + std::to_string(i) + "]", "expected an object");
    json merged = j;
    merged.merge_patch(runs[i]);
    if (!merged.contains("name")) merged["name"] = "run" + std::to_string(i);
    out.push_back(std::move(merged));
  }
  return out;
}

/// Run name safe for a file name.
inline std::string run_name(const json& run, std::size_t index) {
  std::string name = run.contains("name") && run.at("name").is_string() ? run.at("name").get<std::string>()
                                                                        : "run" + std::to_string(index);
  for (auto& ch : name) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
  }
  return name;
}

using mc::format_double;

/// CSV with a header row and %.17g numbers.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

  void row(const std::vector<double>& values) {
    if (values.size() != header_.size()) fail(ErrorCode::BadArgument, "CsvWriter: row width mismatch");
    rows_.push_back(values);
  }

  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < header_.size(); ++i) out += (i ? "," : "") + header_[i];
    out += "\n";
    for (const auto& r : rows_) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + format_double(r[i]);
      out += "\n";
    }
    return out;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<double>> rows_;
};

inline std::string sim_csv(const mc::SimResult& res) {
  CsvWriter w({"lambda", "empirical_mean", "standard_error", "theory", "oracle"});
  for (const auto& r : res.rows) w.row({r.lambda, r.empirical_mean, r.standard_error, r.theory, r.oracle});
  return w.str();
}

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::ConfigError, "cannot write '" + path + "'");
  out << content;
  if (!out) fail(ErrorCode::ConfigError, "write failed for '" + path + "'");
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::optional<std::size_t> column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) detail::config_error(path, "cannot open file");
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
    return out;
  };
  if (!std::getline(in, line)) detail::config_error(path, "empty CSV");
  t.header = split(line);
  for (std::size_t ln = 2; std::getline(in, line); ++ln) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size()) detail::config_error(path, "line " + std::to_string(ln) + " has wrong width");
    std::vector<double> r;
    for (const auto& c : cells) {
      char* end = nullptr;
      const double x = std::strtod(c.c_str(), &end);
      if (end == c.c_str() || *end != '\0') detail::config_error(path, "line " + std::to_string(ln) + ": bad number '" + c + "'");
      r.push_back(x);
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

struct Comparison {
  double max_gap = 0.0;
  double tolerance = 0.0;
  bool pass = true;
  std::vector<std::pair<double, double>> gaps;  // (λ, |empirical - theory|)
};

/// Picks the value column: "theory", "error", then "risk" for theory tables;
/// simulations prefer "empirical_mean" and otherwise fall back to the same
/// order, so two theory tables can be compared directly.
inline std::size_t value_column(const CsvTable& t, const std::string& path, bool sim) {
  const std::vector<std::string> order = sim ? std::vector<std::string>{"empirical_mean", "theory", "error", "risk"}
                                             : std::vector<std::string>{"theory", "error", "risk"};
  for (const auto& name : order) {
    if (auto c = t.column(name)) return *c;
  }
  detail::config_error(path, "no value column found");
}

inline Comparison compare_tables(const CsvTable& theory, const std::string& theory_path, const CsvTable& sim,
                                 const std::string& sim_path, double tolerance) {
  const auto lt = theory.column("lambda");
  const auto ls = sim.column("lambda");
  if (!lt) detail::config_error(theory_path, "missing 'lambda' column");
  if (!ls) detail::config_error(sim_path, "missing 'lambda' column");
  const std::size_t vt = value_column(theory, theory_path, false);
  const std::size_t vs = value_column(sim, sim_path, true);
  if (theory.rows.size() != sim.rows.size()) {
    fail(ErrorCode::GridMismatch, "compare: theory has " + std::to_string(theory.rows.size()) + " rows, sim has " +
                                      std::to_string(sim.rows.size()));
  }
  Comparison c;
  c.tolerance = tolerance;
  for (std::size_t i = 0; i < theory.rows.size(); ++i) {
    const double a = theory.rows[i][*lt];
    const double b = sim.rows[i][*ls];
    if (!(std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b))) && a != b) {
      fail(ErrorCode::GridMismatch, "compare: lambda grids differ at row " + std::to_string(i) + " (" +
                                        format_double(a) + " vs " + format_double(b) + ")");
    }
    const double gap = std::abs(sim.rows[i][vs] - theory.rows[i][vt]);
    c.gaps.emplace_back(a, gap);
    c.max_gap = std::max(c.max_gap, gap);
    if (!(gap <= tolerance)) c.pass = false;
  }
  return c;
}

}  // namespace spectrisk::io
