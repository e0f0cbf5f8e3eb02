// Command-line front end: simulation, fitting, covariance adjustment,
// ellipse rendering, the Monte Carlo experiment harness, the two-series
// volatility pipeline, the network depth study, and CSV ingestion.
//
// Exit codes: 0 success, 1 numerical failure, 2 usage or input-format error.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nadjust/nadjust.hpp"

namespace {

using nadjust::Mat;
using nadjust::Vec;

Vec parse_num_list(const std::string& raw, const char* flag) {
  Vec out;
  std::size_t start = 0;
  while (start <= raw.size()) {
    const std::size_t pos = raw.find(',', start);
    const std::string item = raw.substr(start, pos == std::string::npos ? pos : pos - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw nadjust::ParseError(std::string(flag) + ": expected a comma-separated number list");
    }
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

Mat square_from_flat(const Vec& flat, const char* flag) {
  const auto k = static_cast<std::size_t>(std::lround(std::sqrt(double(flat.size()))));
  if (k * k != flat.size())
    throw nadjust::ParseError(std::string(flag) + ": length must be a perfect square (row-major)");
  Mat m(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) m(i, j) = flat[i * k + j];
  return m;
}

nlohmann::json mat_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < m.cols; ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

void print_json(const nlohmann::json& j) { std::printf("%s\n", j.dump(2).c_str()); }

void print_bundle(const nadjust::ReportBundle& b) {
  std::printf("report: %s\n", b.json_path.c_str());
  for (const auto& p : b.csv_paths) std::printf("table: %s\n", p.c_str());
  for (const auto& p : b.svg_paths) std::printf("figure: %s\n", p.c_str());
  std::printf("log: %s\n", b.log_path.c_str());
}

void require_readable(const std::string& path) {
  if (!std::filesystem::exists(path)) throw nadjust::IoError("missing input file: " + path);
}

// --- subcommand option bags -------------------------------------------------

struct SimulateOpts {
  std::string model = "expreg";
  std::size_t n = 1000, T = 1000;
  std::uint64_t seed = 1;
  std::string out = ".";
  double b0 = 0.5, b1 = -0.3, b2 = 0.8;
  double omega = 0.1, a = 0.05, b = 0.90;
};

struct FitOpts {
  std::string model = "expreg";
  std::string data;
  double omega = 0.1;
  bool log_transform = false, demean = false;
};

struct AdjustOpts {
  std::string v_theta, d1, v_alpha;
  std::size_t n = 0, m = 0;
};

struct EllipseOpts {
  std::string cov, center;
  double level = 0.9;
  std::string out = ".";
};

struct CoverageOpts {
  std::string experiment = "expreg";
  std::string config;
  std::size_t reps = 0;
  std::uint64_t seed = 1;
  bool seed_set = false;
  std::size_t n = 0, m = 0, T = 0, workers = 0;
  double level = 0.0;
  std::string rel_errors, depths;
  bool paper_quantile = false;
  std::string out = "out";
};

struct PipelineOpts {
  std::string data, nuisance;
  std::optional<double> omega, v_omega;
  double level = 0.90;
  bool paper_quantile = false;
  bool log_transform = false, demean = false;
  std::string out = "out";
};

struct NnOpts {
  std::string depths = "2,4";
  std::uint64_t seed = 1;
  double level = 0.90;
  bool paper_quantile = false;
  std::string out = "out";
  std::string train_images, train_labels, test_images, test_labels;
};

struct IngestOpts {
  std::string data;
  std::string format = "series";
  bool log_transform = false, demean = false;
  std::string out = ".";
};

// --- runners -----------------------------------------------------------------

int run_simulate(const SimulateOpts& o) {
  std::filesystem::create_directories(o.out);
  nadjust::RngStream rng(o.seed, 0);
  nlohmann::json j;
  if (o.model == "expreg") {
    const nadjust::ExpRegParams p{o.b0, o.b1, o.b2};
    const nadjust::ExpRegData d = nadjust::expreg_simulate(p, o.n, {}, rng);
    const std::string path = o.out + "/expreg.csv";
    nadjust::save_expreg_csv(path, d);
    j = {{"model", "expreg"}, {"rows", d.n()}, {"path", path}};
  } else if (o.model == "garch") {
    const nadjust::GarchParams p{o.omega, o.a, o.b};
    const nadjust::ReturnSeries s = nadjust::garch_simulate(p, o.T, 500, rng);
    const std::string path = o.out + "/garch.csv";
    nadjust::save_series_csv(path, s);
    j = {{"model", "garch"}, {"rows", s.y.size()}, {"path", path}};
  } else {
    throw nadjust::ParseError("--model must be expreg or garch");
  }
  print_json(j);
  return 0;
}

int run_fit(const FitOpts& o) {
  require_readable(o.data);
  nlohmann::json j;
  if (o.model == "expreg") {
    const nadjust::ExpRegData d = nadjust::load_expreg_csv(o.data);
    const nadjust::ExpRegFit fit = nadjust::expreg_fit(d, {0, 1, 2}, {});
    if (!fit.converged) throw nadjust::NoConvergence("fit: estimator did not converge");
    j = {{"model", "expreg"},
         {"b0", fit.params.b0},
         {"b1", fit.params.b1},
         {"b2", fit.params.b2},
         {"iterations", fit.iters}};
  } else if (o.model == "garch") {
    nadjust::SeriesOptions so;
    so.log_transform = o.log_transform;
    so.demean = o.demean;
    const nadjust::ReturnSeries s = nadjust::load_series_csv(o.data, so);
    const nadjust::GarchPrimaryFit fit = nadjust::garch_fit_primary(s, o.omega);
    j = {{"model", "garch"},
         {"omega", o.omega},
         {"a", fit.a},
         {"b", fit.b},
         {"v_theta_over_n", mat_json(fit.v_theta_over_n)},
         {"boundary_solution", fit.boundary_solution}};
  } else {
    throw nadjust::ParseError("--model must be expreg or garch");
  }
  print_json(j);
  return 0;
}

int run_adjust(const AdjustOpts& o) {
  const Mat v_theta = square_from_flat(parse_num_list(o.v_theta, "--v-theta"), "--v-theta");
  const Mat v_alpha = square_from_flat(parse_num_list(o.v_alpha, "--v-alpha"), "--v-alpha");
  const Vec d1_flat = parse_num_list(o.d1, "--d1");
  if (d1_flat.size() != v_theta.rows * v_alpha.rows)
    throw nadjust::ParseError("--d1: length must equal dim(v-theta) x dim(v-alpha), row-major");
  Mat d1(v_theta.rows, v_alpha.rows);
  for (std::size_t i = 0; i < d1.rows; ++i)
    for (std::size_t j = 0; j < d1.cols; ++j) d1(i, j) = d1_flat[i * d1.cols + j];
  const nadjust::CovariancePair pair =
      nadjust::adjusted_covariance(v_theta, {d1}, v_alpha, o.n, o.m);
  nlohmann::json j;
  j["unadjusted"] = mat_json(pair.unadjusted);
  j["adjusted"] = mat_json(pair.adjusted);
  j["noise_term"] = mat_json(pair.adjusted - pair.unadjusted);
  j["clipped"] = pair.clipped;
  print_json(j);
  return 0;
}

int run_ellipse(const EllipseOpts& o) {
  const Vec center = parse_num_list(o.center, "--center");
  if (center.size() != 2) throw nadjust::ParseError("--center: expected two numbers");
  const Mat cov = square_from_flat(parse_num_list(o.cov, "--cov"), "--cov");
  const nadjust::EllipseSpec e = nadjust::confidence_ellipse(center, cov, o.level);
  std::filesystem::create_directories(o.out);
  nadjust::SvgFigure fig;
  fig.title = "Confidence ellipse";
  fig.ellipses.push_back({e, "region", "#1f77b4", false});
  fig.markers.push_back({center[0], center[1], "center", "#000000", true});
  const std::string path = o.out + "/ellipse.svg";
  nadjust::emit_svg(path, fig);
  nlohmann::json j;
  j["center"] = e.center;
  j["cov"] = mat_json(e.cov);
  j["level"] = e.level;
  j["radius2"] = e.radius2;
  j["area"] = nadjust::ellipse_area(e);
  j["figure"] = path;
  print_json(j);
  return 0;
}

nadjust::ExperimentConfig coverage_config(const CoverageOpts& o) {
  nadjust::ExperimentConfig cfg;
  if (!o.config.empty()) {
    require_readable(o.config);
    cfg = nadjust::load_config_file(o.config);
  }
  // flags override the config file
  if (o.experiment == "expreg")
    cfg.experiment = "expreg-coverage";
  else if (o.experiment == "garch")
    cfg.experiment = "garch-cases";
  else if (o.experiment == "nn")
    cfg.experiment = "nn-depth";
  else if (!o.experiment.empty())
    cfg.experiment = o.experiment;  // accept full names too
  if (o.reps > 0) cfg.replications = o.reps;
  if (o.seed_set) cfg.master_seed = o.seed;
  if (o.n > 0) cfg.n = o.n;
  if (o.m > 0) cfg.m = o.m;
  if (o.T > 0) cfg.T = o.T;
  if (o.level > 0.0) cfg.level = o.level;
  if (o.workers > 0) cfg.workers = o.workers;
  if (!o.rel_errors.empty()) cfg.rel_errors = parse_num_list(o.rel_errors, "--rel-errors");
  if (!o.depths.empty()) {
    cfg.depths.clear();
    for (double d : parse_num_list(o.depths, "--depths"))
      cfg.depths.push_back(static_cast<std::size_t>(std::lround(d)));
  }
  if (o.paper_quantile) cfg.compat_quantile = true;
  cfg.validate();
  return cfg;
}

int run_coverage(const CoverageOpts& o) {
  const nadjust::ExperimentConfig cfg = coverage_config(o);
  nadjust::ReportBundle bundle;
  if (cfg.experiment == "expreg-coverage")
    bundle = nadjust::emit_expreg_report(nadjust::run_expreg_coverage(cfg), o.out);
  else if (cfg.experiment == "garch-cases")
    bundle = nadjust::emit_garch_report(nadjust::run_garch_cases(cfg), o.out);
  else
    bundle = nadjust::emit_nn_report(nadjust::run_nn_depth_study(cfg), o.out);
  print_bundle(bundle);
  return 0;
}

int run_pipeline(const PipelineOpts& o) {
  require_readable(o.data);
  nadjust::SeriesOptions so;
  so.log_transform = o.log_transform;
  so.demean = o.demean;
  const nadjust::ReturnSeries primary{nadjust::load_series_csv(o.data, so)};
  nadjust::ReturnSeries nuisance;
  const bool stipulated = o.omega.has_value() && o.v_omega.has_value();
  if (!stipulated) {
    if (o.nuisance.empty())
      throw nadjust::ParseError("either --nuisance FILE or both --omega and --v-omega required");
    require_readable(o.nuisance);
    nuisance = nadjust::load_series_csv(o.nuisance, so);
  }
  nadjust::GarchPipelineOptions po;
  po.level = o.level;
  po.compat_quantile = o.paper_quantile;
  po.omega_override = o.omega;
  po.v_omega_override = o.v_omega;
  const nadjust::GarchPipelineResult res = nadjust::garch_adjusted_pipeline(primary, nuisance, po);

  std::filesystem::create_directories(o.out);
  nadjust::SvgFigure fig;
  char title[80];
  std::snprintf(title, sizeof(title), "GARCH persistence: %.0f%% confidence ellipses",
                100.0 * o.level);
  fig.title = title;
  fig.x_label = "a";
  fig.y_label = "b";
  fig.ellipses.push_back({res.adjusted, "adjusted", "#1f77b4", false});
  fig.ellipses.push_back({res.unadjusted, "unadjusted", "#d62728", true});
  fig.markers.push_back({res.a_hat, res.b_hat, "estimate", "#000000", true});
  const std::string svg_path = o.out + "/garch_ellipses.svg";
  nadjust::emit_svg(svg_path, fig);

  nlohmann::json j;
  j["a"] = res.a_hat;
  j["b"] = res.b_hat;
  j["omega"] = res.omega_used;
  j["v_omega_over_m"] = res.v_omega_over_m;
  j["omega_fit_ran"] = res.omega_fit_ran;
  j["boundary_solution"] = res.boundary_solution;
  j["unadjusted_cov"] = mat_json(res.pair.unadjusted);
  j["adjusted_cov"] = mat_json(res.pair.adjusted);
  j["area_adjusted"] = nadjust::ellipse_area(res.adjusted);
  j["area_unadjusted"] = nadjust::ellipse_area(res.unadjusted);
  j["area_ratio"] = nadjust::ellipse_area(res.adjusted) / nadjust::ellipse_area(res.unadjusted);
  j["figure"] = svg_path;
  print_json(j);
  return 0;
}

int run_nn_study(const NnOpts& o) {
  nadjust::ExperimentConfig cfg;
  cfg.experiment = "nn-depth";
  cfg.master_seed = o.seed;
  cfg.level = o.level;
  cfg.compat_quantile = o.paper_quantile;
  cfg.depths.clear();
  for (double d : parse_num_list(o.depths, "--depths"))
    cfg.depths.push_back(static_cast<std::size_t>(std::lround(d)));
  if (!o.train_images.empty()) cfg.train_images = o.train_images;
  if (!o.train_labels.empty()) cfg.train_labels = o.train_labels;
  if (!o.test_images.empty()) cfg.test_images = o.test_images;
  if (!o.test_labels.empty()) cfg.test_labels = o.test_labels;
  cfg.validate();
  require_readable(cfg.train_images);
  require_readable(cfg.train_labels);
  require_readable(cfg.test_images);
  require_readable(cfg.test_labels);
  print_bundle(nadjust::emit_nn_report(nadjust::run_nn_depth_study(cfg), o.out));
  return 0;
}

int run_ingest(const IngestOpts& o) {
  require_readable(o.data);
  std::filesystem::create_directories(o.out);
  nlohmann::json j;
  if (o.format == "series") {
    nadjust::SeriesOptions so;
    so.log_transform = o.log_transform;
    so.demean = o.demean;
    const nadjust::ReturnSeries v = nadjust::load_series_csv(o.data, so);
    const std::string path = o.out + "/processed.csv";
    nadjust::save_series_csv(path, v);
    double mean = 0.0;
    for (double x : v.y) mean += x;
    mean /= v.y.empty() ? 1.0 : double(v.y.size());
    j = {{"format", "series"}, {"rows", v.y.size()}, {"mean", mean}, {"path", path}};
  } else if (o.format == "expreg") {
    if (o.log_transform || o.demean)
      throw nadjust::ParseError("--log/--demean apply to series input only");
    const nadjust::ExpRegData d = nadjust::load_expreg_csv(o.data);
    const std::string path = o.out + "/processed.csv";
    nadjust::save_expreg_csv(path, d);
    j = {{"format", "expreg"}, {"rows", d.n()}, {"path", path}};
  } else {
    throw nadjust::ParseError("--format must be series or expreg");
  }
  print_json(j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nuisance-adjusted confidence regions for two-sample estimation"};
  app.require_subcommand(1);

  SimulateOpts sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  c_sim->add_option("--model", sim.model, "expreg or garch")->capture_default_str();
  c_sim->add_option("--n", sim.n, "rows (expreg)")->capture_default_str();
  c_sim->add_option("--T", sim.T, "series length (garch)")->capture_default_str();
  c_sim->add_option("--seed", sim.seed, "RNG seed")->capture_default_str();
  c_sim->add_option("--out", sim.out, "output directory")->capture_default_str();
  c_sim->add_option("--b0", sim.b0, "expreg intercept")->capture_default_str();
  c_sim->add_option("--b1", sim.b1, "expreg nuisance slope")->capture_default_str();
  c_sim->add_option("--b2", sim.b2, "expreg primary slope")->capture_default_str();
  c_sim->add_option("--omega", sim.omega, "garch intercept")->capture_default_str();
  c_sim->add_option("--a", sim.a, "garch innovation weight")->capture_default_str();
  c_sim->add_option("--b", sim.b, "garch persistence weight")->capture_default_str();

  FitOpts fit;
  CLI::App* c_fit = app.add_subcommand("fit", "fit a model to a CSV dataset");
  c_fit->add_option("--model", fit.model, "expreg or garch")->capture_default_str();
  c_fit->add_option("--data", fit.data, "input CSV")->required();
  c_fit->add_option("--omega", fit.omega, "garch: externally supplied intercept")
      ->capture_default_str();
  c_fit->add_flag("--log", fit.log_transform, "series: log-transform values");
  c_fit->add_flag("--demean", fit.demean, "series: subtract the mean");

  AdjustOpts adj;
  CLI::App* c_adj = app.add_subcommand("adjust", "combine covariances with the sensitivity matrix");
  c_adj->add_option("--v-theta", adj.v_theta, "primary covariance / n, row-major")->required();
  c_adj->add_option("--d1", adj.d1, "sensitivity matrix, row-major")->required();
  c_adj->add_option("--v-alpha", adj.v_alpha, "nuisance covariance / m, row-major")->required();
  c_adj->add_option("--n", adj.n, "primary sample size (bookkeeping)");
  c_adj->add_option("--m", adj.m, "nuisance sample size (bookkeeping)");

  EllipseOpts ell;
  CLI::App* c_ell = app.add_subcommand("ellipse", "confidence ellipse from a 2x2 covariance");
  c_ell->add_option("--cov", ell.cov, "2x2 covariance, row-major")->required();
  c_ell->add_option("--center", ell.center, "ellipse center x,y")->required();
  c_ell->add_option("--level", ell.level, "confidence level")
      ->check(CLI::Range(1e-6, 1.0 - 1e-6))
      ->capture_default_str();
  c_ell->add_option("--out", ell.out, "output directory")->capture_default_str();

  CoverageOpts cov;
  CLI::App* c_cov = app.add_subcommand("coverage", "run a Monte Carlo experiment");
  c_cov->add_option("--experiment", cov.experiment, "expreg, garch, or nn")->capture_default_str();
  c_cov->add_option("--config", cov.config, "config file (flags win over file values)");
  c_cov->add_option("--reps", cov.reps, "replications (0 = experiment default)");
  c_cov->add_option("--seed", cov.seed, "master seed")->each([&cov](const std::string&) {
    cov.seed_set = true;
  });
  c_cov->add_option("--n", cov.n, "primary sample size");
  c_cov->add_option("--m", cov.m, "nuisance sample size");
  c_cov->add_option("--T", cov.T, "series length");
  c_cov->add_option("--level", cov.level, "confidence level")->check(CLI::Range(1e-6, 1.0 - 1e-6));
  c_cov->add_option("--rel-errors", cov.rel_errors, "garch: relative intercept errors, e.g. 0.05,0.30");
  c_cov->add_option("--depths", cov.depths, "nn: hidden-layer counts, e.g. 2,4");
  c_cov->add_option("--workers", cov.workers, "worker threads (capped by NUISANCE_ADJUST_WORKERS)");
  c_cov->add_flag("--paper-quantile", cov.paper_quantile,
                  "normal-quantile calibration for interval half-widths");
  c_cov->add_option("--out", cov.out, "output directory")->capture_default_str();

  PipelineOpts pipe;
  CLI::App* c_pipe = app.add_subcommand("garch-pipeline", "two-series adjusted volatility regions");
  c_pipe->add_option("--data", pipe.data, "primary series CSV")->required();
  c_pipe->add_option("--nuisance", pipe.nuisance, "independent series CSV for the intercept");
  double omega_val = 0.0, v_omega_val = 0.0;
  CLI::Option* o_om = c_pipe->add_option("--omega", omega_val, "stipulated intercept estimate");
  CLI::Option* o_vm = c_pipe->add_option("--v-omega", v_omega_val, "stipulated Var(intercept)/m");
  c_pipe->add_option("--level", pipe.level, "confidence level")
      ->check(CLI::Range(1e-6, 1.0 - 1e-6))
      ->capture_default_str();
  c_pipe->add_flag("--paper-quantile", pipe.paper_quantile,
                   "normal-quantile calibration for interval half-widths");
  c_pipe->add_flag("--log", pipe.log_transform, "log-transform both series");
  c_pipe->add_flag("--demean", pipe.demean, "subtract each series mean");
  c_pipe->add_option("--out", pipe.out, "output directory")->capture_default_str();

  NnOpts nn;
  CLI::App* c_nn = app.add_subcommand("nn-study", "network depth study on the digits data");
  c_nn->add_option("--depths", nn.depths, "hidden-layer counts")->capture_default_str();
  c_nn->add_option("--seed", nn.seed, "master seed")->capture_default_str();
  c_nn->add_option("--level", nn.level, "confidence level")
      ->check(CLI::Range(1e-6, 1.0 - 1e-6))
      ->capture_default_str();
  c_nn->add_flag("--paper-quantile", nn.paper_quantile,
                 "normal-quantile calibration for interval half-widths");
  c_nn->add_option("--train-images", nn.train_images, "IDX image file for training");
  c_nn->add_option("--train-labels", nn.train_labels, "IDX label file for training");
  c_nn->add_option("--test-images", nn.test_images, "IDX image file for evaluation");
  c_nn->add_option("--test-labels", nn.test_labels, "IDX label file for evaluation");
  c_nn->add_option("--out", nn.out, "output directory")->capture_default_str();

  IngestOpts ing;
  CLI::App* c_ing = app.add_subcommand("ingest", "parse, validate, and transform a CSV");
  c_ing->add_option("--data", ing.data, "input CSV")->required();
  c_ing->add_option("--format", ing.format, "series or expreg")->capture_default_str();
  c_ing->add_flag("--log", ing.log_transform, "log-transform values (must be positive)");
  c_ing->add_flag("--demean", ing.demean, "subtract the mean");
  c_ing->add_option("--out", ing.out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }

  try {
    if (*c_sim) return run_simulate(sim);
    if (*c_fit) return run_fit(fit);
    if (*c_adj) return run_adjust(adj);
    if (*c_ell) return run_ellipse(ell);
    if (*c_cov) return run_coverage(cov);
    if (*c_pipe) {
      if (o_om->count() > 0) pipe.omega = omega_val;
      if (o_vm->count() > 0) pipe.v_omega = v_omega_val;
      return run_pipeline(pipe);
    }
    if (*c_nn) return run_nn_study(nn);
    if (*c_ing) return run_ingest(ing);
  } catch (const nadjust::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const nadjust::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const nadjust::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
