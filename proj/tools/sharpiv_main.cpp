#include <CLI11.hpp>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "sharpiv/covariate.hpp"
#include "sharpiv/dataset.hpp"
#include "sharpiv/dgp.hpp"
#include "sharpiv/diagnostics.hpp"
#include "sharpiv/errors.hpp"
#include "sharpiv/finite_sample.hpp"
#include "sharpiv/report.hpp"
#include "sharpiv/sharp_test.hpp"

#ifndef SHARPIV_VERSION
#define SHARPIV_VERSION "0.0.0"
#endif

namespace {

using sharpiv::json;

struct SchemaFlags {
  std::string data;
  std::string col_y = "y";
  std::string col_d = "d";
  std::vector<std::string> cols_z = {"z"};
  std::vector<std::string> cols_x;
  bool drop_missing = false;
};

struct SharpFlags {
  double alpha = 0.05;
  int boot = 800;
  int qy = 0;  // 0 = per-outcome default (2 binary, 5 continuous)
  int qp = 5;
  double eps = 1e-6;
  double eta = 1e-6;
  std::string pscore = "freq";
  std::string weights = "normal1";
  std::string normalize = "auto";
  std::vector<double> bounds = {0.0, 1.0};
  int poly_degree = 3;
  bool boot_refit_beta = false;
  std::vector<std::string> condition_on;
  int min_cell_n = 30;
  int max_cells = 50;
};

struct IoFlags {
  std::string out;  // empty = stdout
  bool emit_config = false;
};

void add_schema_flags(CLI::App* cmd, SchemaFlags& s) {
  cmd->add_option("--data", s.data, "input CSV path")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--col-y", s.col_y, "outcome column");
  cmd->add_option("--col-d", s.col_d, "decision column (0/1)");
  cmd->add_option("--col-z", s.cols_z, "instrument column(s)");
  cmd->add_option("--cols-x", s.cols_x, "covariate columns");
  cmd->add_flag("--drop-missing", s.drop_missing,
                "drop rows with missing mapped fields instead of erroring");
}

void add_sharp_flags(CLI::App* cmd, SharpFlags& f, bool with_pipeline) {
  cmd->add_option("--alpha", f.alpha, "test level");
  cmd->add_option("--boot", f.boot, "bootstrap replicates");
  cmd->add_option("--qy", f.qy, "outcome grid depth (0 = auto)");
  cmd->add_option("--qp", f.qp, "propensity grid depth");
  cmd->add_option("--eps", f.eps, "variance floor");
  cmd->add_option("--eta", f.eta, "quantile lift");
  cmd->add_option("--pscore", f.pscore, "propensity estimator")
      ->check(CLI::IsMember({"freq", "probit", "logit"}));
  cmd->add_option("--weights", f.weights, "multiplier weight distribution")
      ->check(CLI::IsMember({"normal1", "exp1", "ones"}));
  if (with_pipeline) {
    cmd->add_option("--normalize", f.normalize, "outcome normalization")
        ->check(CLI::IsMember({"auto", "none", "bounds", "range", "gauss"}));
    cmd->add_option("--bounds", f.bounds,
                    "known outcome bounds a b (with --normalize bounds)")
        ->expected(2);
    cmd->add_option("--poly-degree", f.poly_degree,
                    "propensity polynomial degree in the covariate filter");
    cmd->add_flag("--boot-refit-beta", f.boot_refit_beta,
                  "re-estimate covariate coefficients in every replicate");
    cmd->add_option("--condition-on", f.condition_on,
                    "discrete columns splitting the sample into cells");
    cmd->add_option("--min-cell-n", f.min_cell_n,
                    "cells below this size are skipped");
    cmd->add_option("--max-cells", f.max_cells, "cap on conditioning cells");
  }
}

void add_io_flags(CLI::App* cmd, IoFlags& io) {
  cmd->add_option("--out", io.out, "write output here instead of stdout");
  cmd->add_flag("--emit-config", io.emit_config,
                "print the resolved configuration and exit");
}

sharpiv::PscoreMethod parse_pscore(const std::string& s) {
  if (s == "freq") return sharpiv::PscoreMethod::Frequency;
  if (s == "probit") return sharpiv::PscoreMethod::Probit;
  return sharpiv::PscoreMethod::Logit;
}

sharpiv::WeightDist parse_weights(const std::string& s) {
  if (s == "exp1") return sharpiv::WeightDist::Exp1;
  if (s == "ones") return sharpiv::WeightDist::Ones;
  return sharpiv::WeightDist::Normal1;
}

sharpiv::NormalizeMode parse_normalize(const std::string& s) {
  if (s == "none") return sharpiv::NormalizeMode::None;
  if (s == "bounds") return sharpiv::NormalizeMode::KnownBounds;
  if (s == "range") return sharpiv::NormalizeMode::SampleRange;
  if (s == "gauss") return sharpiv::NormalizeMode::Gaussianize;
  return sharpiv::NormalizeMode::Auto;
}

/* "identity" or "interval:a,b" */
sharpiv::GFunc parse_g(const std::string& s) {
  sharpiv::GFunc g;
  if (s == "identity") return g;
  const std::string prefix = "interval:";
  if (s.rfind(prefix, 0) == 0) {
    const std::string body = s.substr(prefix.size());
    const auto comma = body.find(',');
    if (comma != std::string::npos) {
      try {
        g.kind = sharpiv::GKind::Interval;
        g.a = std::stod(body.substr(0, comma));
        g.b = std::stod(body.substr(comma + 1));
        return g;
      } catch (const std::exception&) {
      }
    }
  }
  sharpiv::fail(sharpiv::ErrorKind::Config,
                "--g must be 'identity' or 'interval:a,b', got '" + s + "'");
}

std::string g_validator(const std::string& s) {
  try {
    parse_g(s);
    return "";
  } catch (const sharpiv::Error& e) {
    return e.what();
  }
}

sharpiv::Dataset load_data(const SchemaFlags& s) {
  sharpiv::CsvSchema schema;
  schema.y_col = s.col_y;
  schema.d_col = s.col_d;
  schema.z_cols = s.cols_z;
  schema.x_cols = s.cols_x;
  schema.drop_missing = s.drop_missing;
  return sharpiv::ingest_csv(s.data, schema);
}

std::uint64_t entropy_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

void write_output(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) {
    sharpiv::fail(sharpiv::ErrorKind::Config,
                  "cannot open output file " + out);
  }
  f << text;
  if (!f.good()) {
    sharpiv::fail(sharpiv::ErrorKind::Config, "failed writing " + out);
  }
}

json meta_json(const std::string& command, int threads, double runtime_ms) {
  json meta;
  meta["tool"] = "sharpiv";
  meta["version"] = SHARPIV_VERSION;
  meta["command"] = command;
  meta["threads"] = threads;
  meta["runtime_ms"] = runtime_ms;
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  meta["timestamp"] = buf;
  return meta;
}

json schema_config(const SchemaFlags& s) {
  json j;
  j["data"] = s.data;
  j["col_y"] = s.col_y;
  j["col_d"] = s.col_d;
  j["cols_z"] = s.cols_z;
  j["cols_x"] = s.cols_x;
  j["drop_missing"] = s.drop_missing;
  return j;
}

json sharp_config_json(const sharpiv::SharpConfig& cfg) {
  json j;
  j["alpha"] = cfg.alpha;
  j["boot"] = cfg.B;
  j["qy"] = cfg.QY;
  j["qp"] = cfg.QP;
  j["eps"] = cfg.eps;
  j["eta"] = cfg.eta;
  j["pscore"] = pscore_method_name(cfg.pscore);
  j["weights"] = weight_dist_name(cfg.weights);
  j["normalize"] = normalize_mode_name(cfg.normalize);
  j["bounds"] = json::array({cfg.bounds_a, cfg.bounds_b});
  j["poly_degree"] = cfg.poly_degree;
  j["boot_refit_beta"] = cfg.boot_refit_beta;
  j["min_cell_n"] = cfg.min_cell_n;
  j["max_cells"] = cfg.max_cells;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  return j;
}

struct Timer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start)
        .count();
  }
};

int emit(const std::string& command, int threads, const Timer& timer,
         json result, const IoFlags& io) {
  write_output(io.out, sharpiv::render(sharpiv::envelope(
                           std::move(result),
                           meta_json(command, threads, timer.ms()))));
  return 0;
}

int run_test_sharp(const SchemaFlags& schema, SharpFlags& flags,
                   const IoFlags& io, bool seed_given, std::uint64_t seed,
                   int threads) {
  Timer timer;
  sharpiv::SharpConfig cfg;
  cfg.alpha = flags.alpha;
  cfg.B = flags.boot;
  cfg.QY = flags.qy;
  cfg.QP = flags.qp;
  cfg.eps = flags.eps;
  cfg.eta = flags.eta;
  cfg.pscore = parse_pscore(flags.pscore);
  cfg.weights = parse_weights(flags.weights);
  cfg.normalize = parse_normalize(flags.normalize);
  cfg.bounds_a = flags.bounds[0];
  cfg.bounds_b = flags.bounds[1];
  cfg.poly_degree = flags.poly_degree;
  cfg.boot_refit_beta = flags.boot_refit_beta;
  cfg.min_cell_n = flags.min_cell_n;
  cfg.max_cells = flags.max_cells;
  cfg.seed = seed_given ? seed : entropy_seed();
  cfg.threads = threads;

  if (io.emit_config) {
    json config = schema_config(schema);
    config["command"] = "test sharp";
    config["condition_on"] = flags.condition_on;
    config.update(sharp_config_json(cfg));
    write_output(io.out, sharpiv::render(config));
    return 0;
  }

  const sharpiv::Dataset ds = load_data(schema);
  json result;
  if (!flags.condition_on.empty()) {
    result = sharpiv::to_json(
        sharpiv::run_conditional_sharp_test(ds, cfg, flags.condition_on));
  } else if (ds.kx() > 0) {
    result = sharpiv::to_json(sharpiv::run_adjusted_sharp_test(ds, cfg));
  } else {
    result = sharpiv::to_json(sharpiv::run_sharp_test(ds, cfg));
  }
  return emit("test sharp", threads, timer, std::move(result), io);
}

int run_test_finite(const SchemaFlags& schema, double alpha,
                    std::int64_t b_sim, const IoFlags& io, bool seed_given,
                    std::uint64_t seed, int threads) {
  Timer timer;
  sharpiv::FiniteConfig cfg;
  cfg.alpha = alpha;
  cfg.b_sim = b_sim;
  cfg.seed = seed_given ? seed : entropy_seed();
  cfg.threads = threads;

  if (io.emit_config) {
    json config = schema_config(schema);
    config["command"] = "test finite";
    config["alpha"] = cfg.alpha;
    config["bsim"] = cfg.b_sim;
    config["seed"] = cfg.seed;
    config["threads"] = cfg.threads;
    write_output(io.out, sharpiv::render(config));
    return 0;
  }

  const sharpiv::Dataset ds = load_data(schema);
  return emit("test finite", threads, timer,
              sharpiv::to_json(sharpiv::run_finite_sample_test(ds, cfg)), io);
}

int run_simulate(sharpiv::McConfig mc, const std::string& command,
                 const SharpFlags& flags, const std::string& test_name,
                 double binarize, std::int64_t b_sim, const IoFlags& io) {
  Timer timer;
  mc.test = test_name == "finite" ? sharpiv::TestKind::Finite
                                  : sharpiv::TestKind::Sharp;
  mc.sharp.alpha = flags.alpha;
  mc.sharp.B = flags.boot;
  mc.sharp.QY = flags.qy;
  mc.sharp.QP = flags.qp;
  mc.sharp.eps = flags.eps;
  mc.sharp.eta = flags.eta;
  mc.sharp.pscore = parse_pscore(flags.pscore);
  mc.sharp.weights = parse_weights(flags.weights);
  mc.finite.alpha = flags.alpha;
  mc.finite.b_sim = b_sim;
  mc.binarize = binarize;

  if (io.emit_config) {
    json config;
    config["command"] = command;
    if (mc.dgp == sharpiv::DgpKind::FllBinary) {
      config["J"] = mc.fll.J;
      config["n"] = mc.fll.n;
      config["pa"] = mc.fll.p_a;
      config["pn"] = mc.fll.p_n;
      config["lambda"] = mc.fll.lambda;
    } else {
      config["L"] = mc.gaussian.L;
      config["n"] = mc.gaussian.n;
      config["delta1"] = mc.gaussian.delta1;
      config["delta2"] = mc.gaussian.delta2;
      config["delta3"] = mc.gaussian.delta3;
      config["beta1"] = mc.gaussian.beta1;
      config["beta0"] = mc.gaussian.beta0;
      config["equal_counts"] = mc.gaussian.equal_judge_counts;
    }
    config["test"] = test_name;
    config["reps"] = mc.reps;
    config["seed"] = mc.seed;
    config["threads"] = mc.threads;
    config["binarize"] = mc.binarize;
    config["bsim"] = mc.finite.b_sim;
    json sharp = sharp_config_json(mc.sharp);
    sharp.erase("seed");
    sharp.erase("threads");
    config["sharp"] = std::move(sharp);
    write_output(io.out, sharpiv::render(config));
    return 0;
  }

  return emit(command, mc.threads, timer,
              sharpiv::to_json(sharpiv::run_monte_carlo(mc)), io);
}

int run_diagnose_curves(const SchemaFlags& schema, const std::string& pscore,
                        const std::string& g_spec, int bins,
                        const IoFlags& io) {
  const sharpiv::Dataset ds = load_data(schema);
  const sharpiv::PscoreMethod method = parse_pscore(pscore);
  const sharpiv::PropensityFit fit =
      method == sharpiv::PscoreMethod::Frequency
          ? sharpiv::fit_frequency(ds)
          : sharpiv::fit_mle(ds, method);
  const sharpiv::MomentCurve curve =
      sharpiv::moment_curves(ds, fit, parse_g(g_spec), bins);
  write_output(io.out, sharpiv::curve_csv(curve));
  return 0;
}

int run_diagnose_slopes(const SchemaFlags& schema, const std::string& pscore,
                        const std::string& g_spec, int bins,
                        const std::string& variant, double k, double g_lo,
                        double g_hi, const IoFlags& io) {
  const sharpiv::Dataset ds = load_data(schema);
  const sharpiv::PscoreMethod method = parse_pscore(pscore);
  const sharpiv::PropensityFit fit =
      method == sharpiv::PscoreMethod::Frequency
          ? sharpiv::fit_frequency(ds)
          : sharpiv::fit_mle(ds, method);
  sharpiv::SlopeOptions opt;
  opt.variant = variant == "yd"     ? sharpiv::SlopeVariant::YD
                : variant == "y1md" ? sharpiv::SlopeVariant::Y1mD
                                    : sharpiv::SlopeVariant::Y;
  opt.k = k;
  opt.g_lo = g_lo;
  opt.g_hi = g_hi;
  opt.bins = bins;
  const std::vector<sharpiv::SlopeRow> rows =
      sharpiv::slope_bounds(ds, fit, parse_g(g_spec), opt);
  write_output(io.out, sharpiv::slopes_csv(rows));
  return 0;
}

int run_diagnose_wald(const SchemaFlags& schema, const std::string& pscore,
                      double u, double l, const std::vector<double>& pair,
                      const std::string& g_spec, const IoFlags& io,
                      int threads) {
  Timer timer;
  const sharpiv::Dataset ds = load_data(schema);
  const sharpiv::PscoreMethod method = parse_pscore(pscore);
  const sharpiv::PropensityFit fit =
      method == sharpiv::PscoreMethod::Frequency
          ? sharpiv::fit_frequency(ds)
          : sharpiv::fit_mle(ds, method);
  json result;
  if (pair.empty()) {
    const sharpiv::WaldCheck check = sharpiv::wald_bound_check(ds, fit, u, l);
    result["kind"] = "wald_bound";
    result["wald"] = check.wald;
    result["bound"] = check.bound;
    result["within_bound"] = check.within;
  } else {
    const double value = sharpiv::conditional_wald(ds, fit, pair[0], pair[1],
                                                   parse_g(g_spec));
    result["kind"] = "conditional_wald";
    result["p"] = pair[0];
    result["p_prime"] = pair[1];
    result["value"] = value;
  }
  return emit("diagnose wald", threads, timer, std::move(result), io);
}

}  // namespace

int main(int argc, char** argv) {
  bool json_errors = false;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--json-errors") json_errors = true;
  }

  CLI::App app{"Specification tests for judge-leniency instrument designs"};
  app.set_version_flag("--version",
                       std::string("sharpiv ") + SHARPIV_VERSION + " (" +
                           __VERSION__ + ")");
  bool json_errors_flag = false;
  app.add_flag("--json-errors", json_errors_flag,
               "emit errors as JSON on stderr");
  app.require_subcommand(1);

  // test sharp | test finite
  CLI::App* test = app.add_subcommand("test", "run a specification test");
  test->require_subcommand(1);

  SchemaFlags ts_schema;
  SharpFlags ts_flags;
  IoFlags ts_io;
  std::uint64_t ts_seed = 0;
  int ts_threads = 0;
  CLI::App* test_sharp =
      test->add_subcommand("sharp", "asymptotic cube-moment test");
  add_schema_flags(test_sharp, ts_schema);
  add_sharp_flags(test_sharp, ts_flags, true);
  CLI::Option* ts_seed_opt = test_sharp->add_option(
      "--seed", ts_seed, "RNG seed (drawn and recorded when omitted)");
  test_sharp->add_option("--threads", ts_threads, "worker threads (0 = all)");
  add_io_flags(test_sharp, ts_io);

  SchemaFlags tf_schema;
  IoFlags tf_io;
  double tf_alpha = 0.05;
  std::int64_t tf_bsim = 1'000'000;
  std::uint64_t tf_seed = 0;
  int tf_threads = 0;
  CLI::App* test_finite =
      test->add_subcommand("finite", "exact pairwise small-sample test");
  add_schema_flags(test_finite, tf_schema);
  test_finite->add_option("--alpha", tf_alpha, "test level");
  test_finite->add_option("--bsim", tf_bsim,
                          "simulation draws behind each interval width");
  CLI::Option* tf_seed_opt = test_finite->add_option(
      "--seed", tf_seed, "RNG seed (drawn and recorded when omitted)");
  test_finite->add_option("--threads", tf_threads, "worker threads (0 = all)");
  add_io_flags(test_finite, tf_io);

  // simulate fll | simulate gaussian
  CLI::App* simulate =
      app.add_subcommand("simulate", "Monte Carlo over a synthetic design");
  simulate->require_subcommand(1);

  sharpiv::McConfig sf_mc;
  sf_mc.dgp = sharpiv::DgpKind::FllBinary;
  SharpFlags sf_flags;
  IoFlags sf_io;
  std::string sf_test = "sharp";
  double sf_binarize = 0.5;
  std::int64_t sf_bsim = 1'000'000;
  CLI::App* sim_fll =
      simulate->add_subcommand("fll", "binary design with linear leniencies");
  sim_fll->add_option("--reps", sf_mc.reps, "replications");
  sim_fll->add_option("--seed", sf_mc.seed, "master seed")->required();
  sim_fll->add_option("--J", sf_mc.fll.J, "judges");
  sim_fll->add_option("--n", sf_mc.fll.n, "cases per replication");
  sim_fll->add_option("--pa", sf_mc.fll.p_a, "always-taker mass");
  sim_fll->add_option("--pn", sf_mc.fll.p_n, "never-taker mass");
  sim_fll->add_option("--lambda", sf_mc.fll.lambda,
                      "non-complier outcome slope");
  sim_fll->add_option("--test", sf_test, "which test to run")
      ->check(CLI::IsMember({"sharp", "finite"}));
  sim_fll->add_option("--binarize", sf_binarize,
                      "threshold for the exact test on continuous outcomes");
  sim_fll->add_option("--bsim", sf_bsim, "width simulation draws");
  CLI::Option* sf_pscore_opt = nullptr;
  {
    add_sharp_flags(sim_fll, sf_flags, false);
    sf_pscore_opt = sim_fll->get_option("--pscore");
  }
  sim_fll->add_option("--threads", sf_mc.threads, "worker threads (0 = all)");
  add_io_flags(sim_fll, sf_io);

  sharpiv::McConfig sg_mc;
  sg_mc.dgp = sharpiv::DgpKind::GaussianContinuous;
  SharpFlags sg_flags;
  sg_flags.pscore = "probit";
  IoFlags sg_io;
  std::string sg_test = "sharp";
  double sg_binarize = 0.5;
  std::int64_t sg_bsim = 1'000'000;
  CLI::App* sim_gauss = simulate->add_subcommand(
      "gaussian", "latent-Gaussian design with violation dials");
  sim_gauss->add_option("--reps", sg_mc.reps, "replications");
  sim_gauss->add_option("--seed", sg_mc.seed, "master seed")->required();
  sim_gauss->add_option("--L", sg_mc.gaussian.L, "instrument quantile cells");
  sim_gauss->add_option("--n", sg_mc.gaussian.n, "cases per replication");
  sim_gauss->add_option("--delta1", sg_mc.gaussian.delta1,
                        "independence violation");
  sim_gauss->add_option("--delta2", sg_mc.gaussian.delta2,
                        "monotonicity violation");
  sim_gauss->add_option("--delta3", sg_mc.gaussian.delta3,
                        "exclusion violation");
  sim_gauss->add_option("--beta1", sg_mc.gaussian.beta1,
                        "treated covariate coefficient");
  sim_gauss->add_option("--beta0", sg_mc.gaussian.beta0,
                        "untreated covariate coefficient");
  sim_gauss->add_flag("--equal-counts", sg_mc.gaussian.equal_judge_counts,
                      "assign exactly n/(L-1) cases per judge");
  sim_gauss->add_option("--test", sg_test, "which test to run")
      ->check(CLI::IsMember({"sharp", "finite"}));
  sim_gauss->add_option("--binarize", sg_binarize,
                        "threshold for the exact test");
  sim_gauss->add_option("--bsim", sg_bsim, "width simulation draws");
  add_sharp_flags(sim_gauss, sg_flags, false);
  sim_gauss->add_option("--threads", sg_mc.threads,
                        "worker threads (0 = all)");
  add_io_flags(sim_gauss, sg_io);

  // diagnose curves | slopes | wald
  CLI::App* diagnose =
      app.add_subcommand("diagnose", "descriptive moment diagnostics");
  diagnose->require_subcommand(1);

  SchemaFlags dc_schema;
  IoFlags dc_io;
  std::string dc_pscore = "freq";
  std::string dc_g = "identity";
  int dc_bins = 10;
  CLI::App* diag_curves = diagnose->add_subcommand(
      "curves", "conditional moment curves per propensity cell (CSV)");
  add_schema_flags(diag_curves, dc_schema);
  diag_curves->add_option("--pscore", dc_pscore, "propensity estimator")
      ->check(CLI::IsMember({"freq", "probit", "logit"}));
  diag_curves->add_option("--g", dc_g, "outcome transform")
      ->check(g_validator);
  diag_curves->add_option("--bins", dc_bins,
                          "quantile cells for continuous propensities");
  add_io_flags(diag_curves, dc_io);

  SchemaFlags dsl_schema;
  IoFlags dsl_io;
  std::string dsl_pscore = "freq";
  std::string dsl_g = "identity";
  std::string dsl_variant = "y";
  int dsl_bins = 10;
  double dsl_k = std::numeric_limits<double>::infinity();
  double dsl_glo = 0.0, dsl_ghi = 1.0;
  CLI::App* diag_slopes = diagnose->add_subcommand(
      "slopes", "support-pair slopes against their admissible band (CSV)");
  add_schema_flags(diag_slopes, dsl_schema);
  diag_slopes->add_option("--pscore", dsl_pscore, "propensity estimator")
      ->check(CLI::IsMember({"freq", "probit", "logit"}));
  diag_slopes->add_option("--g", dsl_g, "outcome transform")
      ->check(g_validator);
  diag_slopes->add_option("--variant", dsl_variant, "conditional mean")
      ->check(CLI::IsMember({"y", "yd", "y1md"}));
  diag_slopes->add_option("--bins", dsl_bins, "quantile cells");
  diag_slopes->add_option("--K", dsl_k, "slope bound for the y variant");
  diag_slopes->add_option("--g-lo", dsl_glo, "lower bound of g(Y)");
  diag_slopes->add_option("--g-hi", dsl_ghi, "upper bound of g(Y)");
  add_io_flags(diag_slopes, dsl_io);

  SchemaFlags dw_schema;
  IoFlags dw_io;
  std::string dw_pscore = "freq";
  std::string dw_g = "identity";
  double dw_u = 1.0, dw_l = 0.0;
  std::vector<double> dw_pair;
  int dw_threads = 0;
  CLI::App* diag_wald = diagnose->add_subcommand(
      "wald", "2SLS estimand against the outcome-support bound");
  add_schema_flags(diag_wald, dw_schema);
  diag_wald->add_option("--pscore", dw_pscore, "propensity estimator")
      ->check(CLI::IsMember({"freq", "probit", "logit"}));
  diag_wald->add_option("--U", dw_u, "outcome upper bound");
  diag_wald->add_option("--L", dw_l, "outcome lower bound");
  diag_wald
      ->add_option("--pair", dw_pair,
                   "two propensity values: report the conditional difference "
                   "quotient instead")
      ->expected(2);
  diag_wald->add_option("--g", dw_g, "outcome transform")->check(g_validator);
  add_io_flags(diag_wald, dw_io);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (json_errors) {
      std::cerr << sharpiv::render(sharpiv::error_json("usage", e.what()));
    } else {
      app.exit(e);
    }
    return 2;
  }
  json_errors = json_errors || json_errors_flag;

  try {
    if (test->parsed()) {
      if (test_sharp->parsed()) {
        return run_test_sharp(ts_schema, ts_flags, ts_io,
                              ts_seed_opt->count() > 0, ts_seed, ts_threads);
      }
      return run_test_finite(tf_schema, tf_alpha, tf_bsim, tf_io,
                             tf_seed_opt->count() > 0, tf_seed, tf_threads);
    }
    if (simulate->parsed()) {
      if (sim_fll->parsed()) {
        /* the binary design defaults to the cell-share propensity */
        if (sf_pscore_opt->count() == 0) sf_flags.pscore = "freq";
        return run_simulate(sf_mc, "simulate fll", sf_flags, sf_test,
                            sf_binarize, sf_bsim, sf_io);
      }
      return run_simulate(sg_mc, "simulate gaussian", sg_flags, sg_test,
                          sg_binarize, sg_bsim, sg_io);
    }
    if (diag_curves->parsed()) {
      return run_diagnose_curves(dc_schema, dc_pscore, dc_g, dc_bins, dc_io);
    }
    if (diag_slopes->parsed()) {
      return run_diagnose_slopes(dsl_schema, dsl_pscore, dsl_g, dsl_bins,
                                 dsl_variant, dsl_k, dsl_glo, dsl_ghi,
                                 dsl_io);
    }
    if (diag_wald->parsed()) {
      return run_diagnose_wald(dw_schema, dw_pscore, dw_u, dw_l, dw_pair,
                               dw_g, dw_io, dw_threads);
    }
    std::cerr << "no subcommand selected\n";
    return 2;
  } catch (const sharpiv::Error& e) {
    if (json_errors) {
      std::cerr << sharpiv::render(sharpiv::error_json(e));
    } else {
      std::cerr << "error (" << e.kind_name() << "): " << e.what() << "\n";
    }
    return 1;
  } catch (const std::exception& e) {
    if (json_errors) {
      std::cerr << sharpiv::render(sharpiv::error_json("internal", e.what()));
    } else {
      std::cerr << "error (internal): " << e.what() << "\n";
    }
    return 1;
  }
}
