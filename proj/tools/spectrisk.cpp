// spectrisk: theory curves, simulations, and comparisons for ridge regression
// and regularized discriminant analysis under high-dimensional asymptotics.
//
// Exit codes: 0 success, 2 bad input or configuration, 3 numerical failure.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spectrisk/error.hpp"
#include "spectrisk/io.hpp"
#include "spectrisk/montecarlo.hpp"
#include "spectrisk/rda.hpp"
#include "spectrisk/ridge.hpp"

#ifndef SPECTRISK_VERSION
#define SPECTRISK_VERSION "0.0.0"
#endif

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spectrisk;

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json base_manifest(const std::string& command, json config) {
  return {{"manifest_version", 1},
          {"command", command},
          {"tool_version", SPECTRISK_VERSION},
          {"timestamp", timestamp_utc()},
          {"config", std::move(config)},
          {"outputs", json::array()}};
}

void emit(const std::string& content, const std::string& out_path, json manifest) {
  if (out_path.empty()) {
    std::cout << content;
    return;
  }
  io::write_text(out_path, content);
  manifest["outputs"].push_back(out_path);
  io::write_text(out_path + ".manifest.json", manifest.dump(2) + "\n");
}

// Caps worker threads by SPECTRISK_THREADS when set.
unsigned thread_cap(unsigned configured) {
  const char* env = std::getenv("SPECTRISK_THREADS");
  if (env == nullptr || *env == '\0') return configured;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) fail(ErrorCode::ConfigError, "SPECTRISK_THREADS must be a positive integer");
  const unsigned cap = static_cast<unsigned>(v);
  return configured == 0 ? cap : std::min(configured, cap);
}

struct TheoryArgs {
  std::string spectrum;
  double gamma = 1.0;
  double alpha2 = 1.0;
  std::string grid = "0.01:100:41";
  std::string out;
  SolverOptions solver;
};

void add_common(CLI::App* cmd, TheoryArgs& a, bool with_alpha = true, bool with_grid = true) {
  cmd->add_option("--spectrum", a.spectrum, "spectrum JSON (inline, or a file path)")->required();
  cmd->add_option("--gamma", a.gamma, "aspect ratio p/n")->required();
  if (with_alpha) cmd->add_option("--alpha2", a.alpha2, "signal strength")->required();
  if (with_grid) cmd->add_option("--lambda-grid", a.grid, "LO:HI:N, log-spaced (append :lin for linear)");
  cmd->add_option("--out", a.out, "output file (default stdout)");
  if (!with_grid) return;
  cmd->add_option("--solver-tol", a.solver.tol, "relative residual tolerance of the fixed-point solve");
  cmd->add_option("--max-iter", a.solver.max_iter, "iteration cap of the fixed-point solve");
  cmd->add_option("--fixed-point-budget", a.solver.fixed_point_budget,
                  "plain iterations tried before bracketed refinement");
}

void check_solver_flags(const SolverOptions& s) {
  if (!(s.tol > 0.0 && s.tol < 1.0)) fail(ErrorCode::ConfigError, "field '--solver-tol': must lie in (0, 1)");
  if (s.max_iter < 1) fail(ErrorCode::ConfigError, "field '--max-iter': must be >= 1");
  if (s.fixed_point_budget < 0) fail(ErrorCode::ConfigError, "field '--fixed-point-budget': must be >= 0");
}

json theory_config(const TheoryArgs& a, bool with_alpha, bool with_grid) {
  json c = {{"spectrum", a.spectrum}, {"gamma", a.gamma}};
  if (with_alpha) c["alpha2"] = a.alpha2;
  if (!with_grid) return c;
  c["lambda_grid"] = a.grid;
  c["solver"] = {{"tol", a.solver.tol}, {"max_iter", a.solver.max_iter},
                 {"fixed_point_budget", a.solver.fixed_point_budget}};
  return c;
}

void check_positive_flag(const char* flag, double x) {
  if (!(x > 0.0 && std::isfinite(x))) {
    fail(ErrorCode::ConfigError, std::string("field '") + flag + "': must be > 0");
  }
}

void run_theory_ridge(const TheoryArgs& a) {
  check_positive_flag("--gamma", a.gamma);
  check_positive_flag("--alpha2", a.alpha2);
  check_solver_flags(a.solver);
  const auto h = io::parse_spectrum_arg(a.spectrum);
  const auto grid = io::parse_lambda_grid(a.grid);
  const auto opt = ridge::optimal_risk(h, a.gamma, a.alpha2, a.solver);
  const double re = ridge::estimation_risk(h, a.gamma, a.alpha2, a.solver);
  io::CsvWriter w({"lambda", "risk", "risk_star", "lambda_star", "estimation_risk"});
  for (double l : grid) w.row({l, ridge::predictive_risk(h, a.gamma, a.alpha2, l, a.solver), opt.risk_star, opt.lambda_star, re});
  emit(w.str(), a.out, base_manifest("theory ridge", theory_config(a, true, true)));
}

struct UnequalArgs {
  std::optional<double> gamma_plus;
  std::optional<double> gamma_minus;
  double pi_plus = 0.5;
  double c = 0.0;
  std::string q_variant = "derived";
};

void run_theory_rda(const TheoryArgs& a, const UnequalArgs& u) {
  check_positive_flag("--alpha2", a.alpha2);
  check_solver_flags(a.solver);
  const auto h = io::parse_spectrum_arg(a.spectrum);
  const auto grid = io::parse_lambda_grid(a.grid);
  json config = theory_config(a, true, true);
  if (u.gamma_plus || u.gamma_minus) {
    if (!u.gamma_plus || !u.gamma_minus) {
      fail(ErrorCode::ConfigError, "field '--gamma-plus': give both --gamma-plus and --gamma-minus");
    }
    check_positive_flag("--gamma-plus", *u.gamma_plus);
    check_positive_flag("--gamma-minus", *u.gamma_minus);
    if (!(u.pi_plus > 0.0 && u.pi_plus < 1.0)) fail(ErrorCode::ConfigError, "field '--pi-plus': must lie in (0, 1)");
    if (u.q_variant != "derived" && u.q_variant != "no_gamma") {
      fail(ErrorCode::ConfigError, "field '--q-variant': expected 'derived' or 'no_gamma'");
    }
    rda::UnequalSampling us{*u.gamma_plus, *u.gamma_minus, u.pi_plus, 1.0 - u.pi_plus, u.c};
    const auto variant = u.q_variant == "derived" ? rda::QVariant::Derived : rda::QVariant::NoGamma;
    io::CsvWriter w({"lambda", "theta_plus", "theta_minus", "error"});
    for (double l : grid) {
      const auto r = rda::unequal_error(h, us, a.alpha2, l, variant, a.solver);
      w.row({l, r.theta_plus, r.theta_minus, r.error});
    }
    config.erase("gamma");
    config.update({{"gamma_plus", *u.gamma_plus}, {"gamma_minus", *u.gamma_minus}, {"pi_plus", u.pi_plus},
                   {"c", u.c}, {"q_variant", u.q_variant}});
    emit(w.str(), a.out, base_manifest("theory rda", config));
    return;
  }
  check_positive_flag("--gamma", a.gamma);
  io::CsvWriter w({"lambda", "tau", "eta", "xi", "theta", "error", "bayes_margin", "bayes_error", "cosine"});
  for (double l : grid) {
    const auto r = rda::error_report(h, a.gamma, a.alpha2, l, a.solver);
    w.row({l, r.tau, r.eta, r.xi, r.theta, r.error, r.bayes_margin, r.bayes_error, r.cosine});
  }
  emit(w.str(), a.out, base_manifest("theory rda", config));
}

void run_theory_regimes(const TheoryArgs& a) {
  check_positive_flag("--gamma", a.gamma);
  const auto h = io::parse_spectrum_arg(a.spectrum);
  const auto r = ridge::regimes(h, a.gamma);
  const json out = {{"gamma", r.gamma},
                    {"weak_slope", r.weak_slope},
                    {"regime", std::string(ridge::to_string(r.regime))},
                    {"coefficient", r.coefficient}};
  emit(out.dump(2) + "\n", a.out, base_manifest("theory regimes", theory_config(a, false, false)));
}

struct WorstArgs {
  double k1 = 1.0;
  double k2 = 1.0;
  double gamma = 0.5;
  double alpha2 = 1.0;
  std::string out;
};

void run_theory_worst(const WorstArgs& a) {
  const auto r = rda::worst_case(a.k1, a.k2, a.gamma, a.alpha2);
  json out = {{"k1", r.k1},
              {"k2", r.k2},
              {"gamma", r.gamma},
              {"alpha2", r.alpha2},
              {"ir_margin", r.ir_margin},
              {"ir_least_favorable", io::spectrum_to_json(r.ir_least_favorable)}};
  if (a.gamma < 1.0) {
    out["lda_margin"] = r.lda_margin;
    out["lda_least_favorable"] = io::spectrum_to_json(r.lda_least_favorable);
    out["ir_beats_lda"] = r.ir_beats_lda;
  } else {
    out["lda_margin"] = nullptr;  // LDA has no limit for γ >= 1
    out["lda_least_favorable"] = nullptr;
    out["ir_beats_lda"] = nullptr;
  }
  const json config = {{"k1", a.k1}, {"k2", a.k2}, {"gamma", a.gamma}, {"alpha2", a.alpha2}};
  emit(out.dump(2) + "\n", a.out, base_manifest("theory worst-case", config));
}

struct SimArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

template <class Parse, class Simulate>
void run_sim(const std::string& command, const SimArgs& a, Parse&& parse, Simulate&& simulate) {
  json config = io::read_json_file(a.config);
  if (config.is_object() && config.contains("manifest_version") && config.contains("config")) {
    config = config.at("config");
  }
  if (a.seed) config["seed"] = *a.seed;
  const auto runs = io::expand_runs(config);
  // Validate every run before any simulation starts.
  std::vector<decltype(parse(runs.front(), a.seed))> parsed;
  for (const auto& run : runs) parsed.push_back(parse(run, a.seed));
  fs::create_directories(a.out);
  json manifest = base_manifest(command, config);
  manifest["runs"] = json::array();
  const std::string stem = command == "sim ridge" ? "sim_ridge" : "sim_rda";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    auto cfg = parsed[i];
    cfg.threads = thread_cap(cfg.threads);
    const auto res = simulate(cfg);
    const std::string name = runs.size() == 1 && !runs[i].contains("name") ? stem : io::run_name(runs[i], i);
    const std::string path = (fs::path(a.out) / (name + ".csv")).string();
    io::write_text(path, io::sim_csv(res));
    manifest["outputs"].push_back(path);
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(res.config_hash));
    manifest["runs"].push_back({{"name", name},
                                {"output", path},
                                {"seed", res.seed},
                                {"config_hash", hash},
                                {"p", res.p},
                                {"n_plus", res.n_plus},
                                {"n_minus", res.n_minus},
                                {"gamma", res.gamma},
                                {"alpha2", res.alpha2}});
    std::cerr << "wrote " << path << "\n";
  }
  io::write_text((fs::path(a.out) / "manifest.json").string(), manifest.dump(2) + "\n");
}

struct CompareArgs {
  std::string theory_csv;
  std::string sim_csv;
  double tolerance = 0.02;
  std::string out;
};

void run_compare(const CompareArgs& a) {
  const auto t = io::read_csv(a.theory_csv);
  const auto s = io::read_csv(a.sim_csv);
  const auto c = io::compare_tables(t, a.theory_csv, s, a.sim_csv, a.tolerance);
  json rows = json::array();
  for (const auto& [l, g] : c.gaps) rows.push_back({{"lambda", l}, {"gap", g}});
  const json out = {{"max_gap", c.max_gap}, {"tolerance", c.tolerance}, {"pass", c.pass}, {"rows", rows}};
  const json config = {{"theory_csv", a.theory_csv}, {"sim_csv", a.sim_csv}, {"tolerance", a.tolerance}};
  emit(out.dump(2) + "\n", a.out, base_manifest("compare", config));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Limiting risks of ridge regression and regularized discriminant analysis"};
  app.set_version_flag("--version", SPECTRISK_VERSION);
  app.require_subcommand(1);

  auto* theory = app.add_subcommand("theory", "evaluate limiting formulas");
  theory->require_subcommand(1);
  TheoryArgs ridge_args, rda_args, regime_args;
  UnequalArgs unequal;
  WorstArgs worst;
  auto* t_ridge = theory->add_subcommand("ridge", "predictive risk curve; CSV");
  add_common(t_ridge, ridge_args);
  auto* t_rda = theory->add_subcommand("rda", "classification margin and error curve; CSV");
  add_common(t_rda, rda_args);
  t_rda->add_option("--gamma-plus", unequal.gamma_plus, "p/n+ (unequal sampling)");
  t_rda->add_option("--gamma-minus", unequal.gamma_minus, "p/n- (unequal sampling)");
  t_rda->add_option("--pi-plus", unequal.pi_plus, "class prior of +1 (unequal sampling)");
  t_rda->add_option("--c", unequal.c, "intercept offset (unequal sampling)");
  t_rda->add_option("--q-variant", unequal.q_variant, "derived | no_gamma");
  auto* t_reg = theory->add_subcommand("regimes", "weak and strong signal limits; JSON");
  add_common(t_reg, regime_args, false, false);
  auto* t_worst = theory->add_subcommand("worst-case", "worst-case LDA and IR margins; JSON");
  t_worst->add_option("--k1", worst.k1, "lower spectrum bound, 0 < k1 <= 1")->required();
  t_worst->add_option("--k2", worst.k2, "upper spectrum bound, k2 >= 1")->required();
  t_worst->add_option("--gamma", worst.gamma, "aspect ratio p/n");
  t_worst->add_option("--alpha2", worst.alpha2, "signal strength");
  t_worst->add_option("--out", worst.out, "output file (default stdout)");
  // In unequal mode γ follows from --gamma-plus and --gamma-minus.
  auto* rda_gamma = t_rda->get_option("--gamma");
  rda_gamma->required(false);

  auto* sim = app.add_subcommand("sim", "run Monte Carlo simulations");
  sim->require_subcommand(1);
  SimArgs sim_ridge_args, sim_rda_args;
  for (auto [name, args] : {std::pair{"ridge", &sim_ridge_args}, std::pair{"rda", &sim_rda_args}}) {
    auto* s = sim->add_subcommand(name, std::string("simulate ") + name);
    s->add_option("--config", args->config, "config or manifest JSON")->required();
    s->add_option("--seed", args->seed, "seed (overrides the config)");
    s->add_option("--out", args->out, "output directory")->required();
  }

  CompareArgs cmp;
  auto* compare = app.add_subcommand("compare", "max |empirical - theory| per lambda; JSON verdict");
  compare->add_option("--theory-csv", cmp.theory_csv, "reference CSV (theory or sim)")->required();
  compare->add_option("--sim-csv", cmp.sim_csv, "CSV checked against the reference")->required();
  compare->add_option("--tolerance", cmp.tolerance, "absolute tolerance on the max gap");
  compare->add_option("--out", cmp.out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (t_ridge->parsed()) run_theory_ridge(ridge_args);
    else if (t_rda->parsed()) {
      if (rda_gamma->count() == 0 && !unequal.gamma_plus && !unequal.gamma_minus) {
        fail(ErrorCode::ConfigError, "field '--gamma': required unless --gamma-plus and --gamma-minus are given");
      }
      run_theory_rda(rda_args, unequal);
    }
    else if (t_reg->parsed()) run_theory_regimes(regime_args);
    else if (t_worst->parsed()) run_theory_worst(worst);
    else if (sim->get_subcommand("ridge")->parsed()) {
      run_sim("sim ridge", sim_ridge_args, [](const json& j, auto seed) { return io::parse_ridge_config(j, seed); },
              [](const mc::RidgeSimConfig& c) { return mc::simulate_ridge(c); });
    } else if (sim->get_subcommand("rda")->parsed()) {
      run_sim("sim rda", sim_rda_args, [](const json& j, auto seed) { return io::parse_rda_config(j, seed); },
              [](const mc::RdaSimConfig& c) { return mc::simulate_rda(c); });
    } else if (compare->parsed()) {
      run_compare(cmp);
    }
  } catch (const Error& e) {
    std::cerr << "spectrisk: " << e.what() << "\n";
    return is_solver_failure(e.code()) ? kExitSolver : kExitConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "spectrisk: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "spectrisk: internal error: " << e.what() << "\n";
    return kExitSolver;
  }
  return 0;
}
