#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "nadjust/csv.hpp"
#include "nadjust/expreg.hpp"
#include "nadjust/garch.hpp"
#include "nadjust/idx.hpp"
#include "nadjust/mlp.hpp"
#include "nadjust/svg.hpp"

namespace nadjust {

inline constexpr int kReportSchemaVersion = 1;

struct ExperimentConfig {
  std::string experiment = "expreg-coverage";  // expreg-coverage | garch-cases | nn-depth
  std::size_t replications = 0;                // 0 = experiment default (500 expreg, 200 garch)
  std::uint64_t master_seed = 1;
  std::size_t n = 1000;  // primary sample size (regression study)
  std::size_t m = 50;    // nuisance sample size (regression study)
  std::size_t T = 1000;  // series length per sample (volatility study)
  double level = 0.90;
  std::vector<double> rel_errors{0.05, 0.30};
  std::vector<std::size_t> depths{2, 4};
  bool compat_quantile = false;
  std::size_t workers = 1;
  std::string train_images = "data/digits/train-images-idx3-ubyte";
  std::string train_labels = "data/digits/train-labels-idx1-ubyte";
  std::string test_images = "data/digits/t10k-images-idx3-ubyte";
  std::string test_labels = "data/digits/t10k-labels-idx1-ubyte";

  void validate() const {
    if (experiment != "expreg-coverage" && experiment != "garch-cases" && experiment != "nn-depth")
      throw InvalidParams("ExperimentConfig: unknown experiment \"" + experiment + "\"");
    if (!(level > 0.0 && level < 1.0))
      throw InvalidParams("ExperimentConfig: level must be in (0,1)");
    if (n < 1 || m < 1 || T < 1) throw InvalidParams("ExperimentConfig: sample sizes must be >= 1");
    for (double r : rel_errors)
      if (r < 0.0) throw InvalidParams("ExperimentConfig: rel_errors must be >= 0");
    for (std::size_t d : depths)
      if (d < 1) throw InvalidParams("ExperimentConfig: depths must be >= 1");
  }

  std::size_t resolved_replications() const {
    if (replications > 0) return replications;
    return experiment == "garch-cases" ? 200 : 500;
  }
};

// Applies one key/value pair from a config file or flag onto the config.
// List values use bracketed comma-separated form, e.g. [0.05, 0.30].
inline void apply_config_kv(ExperimentConfig& cfg, const std::string& key, const std::string& raw,
                            long line_no) {
  auto strip = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t");
    s = s.substr(b, e - b + 1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
  };
  const std::string value = strip(raw);
  auto as_count = [&](const std::string& s) -> std::size_t {
    try {
      std::size_t pos = 0;
      if (!s.empty() && s.front() == '-') throw std::invalid_argument(s);  // stoull would wrap
      const unsigned long long v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ParseError("expected a non-negative integer for " + key, line_no);
    }
  };
  auto as_real = [&](const std::string& s) -> double {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ParseError("expected a number for " + key, line_no);
    }
  };
  auto as_list = [&](const std::string& s) {
    if (s.size() < 2 || s.front() != '[' || s.back() != ']')
      throw ParseError("expected a bracketed list for " + key, line_no);
    std::vector<std::string> items;
    const std::string body = s.substr(1, s.size() - 2);
    std::size_t start = 0;
    while (start <= body.size()) {
      const std::size_t pos = body.find(',', start);
      items.push_back(strip(body.substr(start, pos == std::string::npos ? pos : pos - start)));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    while (!items.empty() && items.back().empty()) items.pop_back();
    return items;
  };

  if (key == "experiment") {
    cfg.experiment = value;
  } else if (key == "replications") {
    cfg.replications = as_count(value);
  } else if (key == "master_seed") {
    cfg.master_seed = as_count(value);
  } else if (key == "n") {
    cfg.n = as_count(value);
  } else if (key == "m") {
    cfg.m = as_count(value);
  } else if (key == "T") {
    cfg.T = as_count(value);
  } else if (key == "level") {
    cfg.level = as_real(value);
  } else if (key == "rel_errors") {
    cfg.rel_errors.clear();
    for (const std::string& it : as_list(value)) cfg.rel_errors.push_back(as_real(it));
  } else if (key == "depths") {
    cfg.depths.clear();
    for (const std::string& it : as_list(value)) cfg.depths.push_back(as_count(it));
  } else if (key == "compat_quantile") {
    if (value == "true")
      cfg.compat_quantile = true;
    else if (value == "false")
      cfg.compat_quantile = false;
    else
      throw ParseError("expected true/false for " + key, line_no);
  } else if (key == "workers") {
    cfg.workers = as_count(value);
  } else if (key == "train_images") {
    cfg.train_images = value;
  } else if (key == "train_labels") {
    cfg.train_labels = value;
  } else if (key == "test_images") {
    cfg.test_images = value;
  } else if (key == "test_labels") {
    cfg.test_labels = value;
  } else {
    throw ParseError("unknown config key \"" + key + "\"", line_no);
  }
}

// Minimal TOML-style config file: one key = value per line, # comments,
// quoted strings, bracketed lists. Flags applied afterwards win.
inline ExperimentConfig load_config_file(const std::string& path, ExperimentConfig cfg = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
    std::string key = line.substr(0, eq);
    const auto kb = key.find_first_not_of(" \t");
    if (kb == std::string::npos) throw ParseError("empty key", line_no);
    const auto ke = key.find_last_not_of(" \t");
    key = key.substr(kb, ke - kb + 1);
    apply_config_kv(cfg, key, line.substr(eq + 1), line_no);
  }
  return cfg;
}

// Worker count: the config asks, the environment caps.
inline std::size_t harness_workers(const ExperimentConfig& cfg) {
  std::size_t w = cfg.workers == 0 ? 1 : cfg.workers;
  if (const char* env = std::getenv("NUISANCE_ADJUST_WORKERS")) {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    if (end != env && cap > 0) w = std::min<std::size_t>(w, cap);
  }
  return w;
}

inline std::string error_kind(const Error& e) {
  if (dynamic_cast<const NoConvergence*>(&e)) return "NoConvergence";
  if (dynamic_cast<const SingularMatrix*>(&e)) return "SingularMatrix";
  if (dynamic_cast<const NonFiniteEvaluation*>(&e)) return "NonFiniteEvaluation";
  if (dynamic_cast<const DimensionMismatch*>(&e)) return "DimensionMismatch";
  if (dynamic_cast<const InvalidParams*>(&e)) return "InvalidParams";
  if (dynamic_cast<const InvalidData*>(&e)) return "InvalidData";
  if (dynamic_cast<const NegativeVariance*>(&e)) return "NegativeVariance";
  if (dynamic_cast<const InsufficientGroups*>(&e)) return "InsufficientGroups";
  if (dynamic_cast<const DivergenceDetected*>(&e)) return "DivergenceDetected";
  if (dynamic_cast<const AccuracyNotReached*>(&e)) return "AccuracyNotReached";
  if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
  if (dynamic_cast<const NonPositiveUnderLog*>(&e)) return "NonPositiveUnderLog";
  if (dynamic_cast<const IoError*>(&e)) return "IoError";
  return "Error";
}

// Excluded-replication ledger: counts by error kind plus a capped sample of
// messages. Downstream thresholds only apply while exclusions stay under 2%
// of attempts.
struct FailureLog {
  std::size_t attempted = 0;
  std::size_t count = 0;
  std::map<std::string, std::size_t> kinds;
  std::vector<std::string> samples;

  void record(const std::string& kind, const std::string& what) {
    ++count;
    ++kinds[kind];
    if (samples.size() < 20) samples.push_back(kind + ": " + what);
  }

  bool cap_exceeded() const { return attempted > 0 && 50 * count > attempted; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["attempted"] = attempted;
    j["count"] = count;
    j["cap_exceeded"] = cap_exceeded();
    j["kinds"] = kinds;
    j["samples"] = samples;
    return j;
  }
};

// Runs fn(k) for k in [0, reps) on up to `workers` threads. Every
// replication writes only to its own slot, so results are identical to the
// sequential order no matter how work is scheduled.
template <typename Fn>
inline void run_replications(std::size_t reps, std::size_t workers, Fn&& fn) {
  if (workers <= 1 || reps <= 1) {
    for (std::size_t k = 0; k < reps; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const std::size_t nw = std::min(workers, reps);
  pool.reserve(nw);
  for (std::size_t w = 0; w < nw; ++w)
    pool.emplace_back([&]() {
      for (std::size_t k = next.fetch_add(1); k < reps; k = next.fetch_add(1)) fn(k);
    });
  for (std::thread& t : pool) t.join();
}

// Fixed truths behind the simulation studies.
inline ExpRegParams expreg_truth() { return {0.5, -0.3, 0.8}; }
inline GarchParams garch_truth() { return {0.1, 0.05, 0.90}; }

namespace detail {

inline nlohmann::json config_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["experiment"] = cfg.experiment;
  j["replications"] = cfg.resolved_replications();
  j["master_seed"] = cfg.master_seed;
  j["n"] = cfg.n;
  j["m"] = cfg.m;
  j["T"] = cfg.T;
  j["level"] = cfg.level;
  j["rel_errors"] = cfg.rel_errors;
  j["depths"] = cfg.depths;
  j["compat_quantile"] = cfg.compat_quantile;
  j["workers"] = cfg.workers;
  j["train_images"] = cfg.train_images;
  j["train_labels"] = cfg.train_labels;
  j["test_images"] = cfg.test_images;
  j["test_labels"] = cfg.test_labels;
  return j;
}

inline nlohmann::json mat_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < m.cols; ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline double median_of(Vec v) {
  if (v.empty()) throw InvalidData("median of empty vector");
  std::sort(v.begin(), v.end());
  const std::size_t c = v.size();
  return 0.5 * (v[(c - 1) / 2] + v[c / 2]);
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out << content;
  if (!out) throw IoError("failed writing file: " + path);
}

}  // namespace detail

struct ReportBundle {
  std::string json_path;
  std::vector<std::string> csv_paths;
  std::vector<std::string> svg_paths;
  std::string log_path;
};

// ---------------------------------------------------------------------------
// exponential-regression coverage study

struct ScenarioCount {
  std::string name;
  std::size_t contained = 0;
  std::size_t total = 0;
  double area_sum = 0.0;

  double ratio() const { return total == 0 ? 0.0 : double(contained) / double(total); }
  double mean_area() const { return total == 0 ? 0.0 : area_sum / double(total); }
};

struct CoverageSummary {
  std::array<ScenarioCount, 4> scenarios;
  ExperimentConfig config;
  FailureLog failures;
  double wall_ms = 0.0;
  std::size_t median_rep = 0;      // replication whose plugin estimate sits at median distance
  double median_distance = 0.0;
};

namespace detail {

struct ExpregRepOutcome {
  bool ok = false;
  std::array<bool, 4> contained{};
  std::array<double, 4> area{};
  double dist = 0.0;
  std::string err_kind, err_what;
};

// One replication: fresh primary/nuisance datasets from streams derived
// purely from (master_seed, k), the four scenario regions, containment of
// the true primary pair.
inline ExpregRepOutcome expreg_one_rep(const ExperimentConfig& cfg, std::size_t k,
                                       ExpRegScenarios* keep = nullptr) {
  ExpregRepOutcome out;
  const ExpRegParams truth = expreg_truth();
  const Vec truth2{truth.b0, truth.b2};
  try {
    RngStream rng_a(cfg.master_seed, 2 * k);
    RngStream rng_b(cfg.master_seed, 2 * k + 1);
    const ExpRegData a = expreg_simulate(truth, cfg.n, {}, rng_a);
    const ExpRegData b = expreg_simulate(truth, cfg.m, {}, rng_b);
    const ExpRegScenarios sc = expreg_scenarios(a, b);
    const std::array<std::pair<const Vec*, const Mat*>, 4> regions{{
        {&sc.theta_plugin, &sc.pair.unadjusted},
        {&sc.theta_plugin, &sc.pair.adjusted},
        {&sc.theta_joint, &sc.cov_joint},
        {&sc.theta_pooled, &sc.cov_pooled},
    }};
    for (std::size_t i = 0; i < 4; ++i) {
      const EllipseSpec e = confidence_ellipse(*regions[i].first, *regions[i].second, cfg.level);
      out.contained[i] = ellipse_contains(e, truth2);
      out.area[i] = ellipse_area(e);
    }
    out.dist = std::hypot(sc.theta_plugin[0] - truth2[0], sc.theta_plugin[1] - truth2[1]);
    if (keep) *keep = sc;
    out.ok = true;
  } catch (const Error& e) {
    out.err_kind = error_kind(e);
    out.err_what = e.what();
  }
  return out;
}

}  // namespace detail

inline CoverageSummary run_expreg_coverage(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.experiment != "expreg-coverage")
    throw InvalidParams("run_expreg_coverage: config is for " + cfg.experiment);
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t reps = cfg.resolved_replications();
  CoverageSummary sum;
  sum.config = cfg;
  sum.scenarios = {ScenarioCount{"plugin-unadjusted"}, ScenarioCount{"plugin-adjusted"},
                   ScenarioCount{"joint-primary"}, ScenarioCount{"pooled"}};
  std::vector<detail::ExpregRepOutcome> slots(reps);
  run_replications(reps, harness_workers(cfg),
                   [&](std::size_t k) { slots[k] = detail::expreg_one_rep(cfg, k); });
  sum.failures.attempted = reps;
  std::vector<std::pair<double, std::size_t>> dists;
  for (std::size_t k = 0; k < reps; ++k) {
    const auto& s = slots[k];
    if (!s.ok) {
      sum.failures.record(s.err_kind, s.err_what);
      continue;
    }
    for (std::size_t i = 0; i < 4; ++i) {
      sum.scenarios[i].total += 1;
      sum.scenarios[i].contained += s.contained[i] ? 1 : 0;
      sum.scenarios[i].area_sum += s.area[i];
    }
    dists.emplace_back(s.dist, k);
  }
  if (!dists.empty()) {
    std::sort(dists.begin(), dists.end());
    const auto& med = dists[(dists.size() - 1) / 2];
    sum.median_distance = med.first;
    sum.median_rep = med.second;
  }
  sum.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return sum;
}

inline nlohmann::json expreg_report_json(const CoverageSummary& sum) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["experiment"] = "expreg-coverage";
  j["config"] = detail::config_json(sum.config);
  j["failures"] = sum.failures.to_json();
  nlohmann::json scen = nlohmann::json::array();
  for (const ScenarioCount& s : sum.scenarios) {
    nlohmann::json e;
    e["name"] = s.name;
    e["contained"] = s.contained;
    e["total"] = s.total;
    e["coverage"] = s.ratio();
    e["mean_ellipse_area"] = s.mean_area();
    scen.push_back(std::move(e));
  }
  const ExpRegParams truth = expreg_truth();
  j["results"]["scenarios"] = std::move(scen);
  j["results"]["median_replication"] = {{"index", sum.median_rep},
                                        {"distance", sum.median_distance}};
  j["results"]["truth"] = {{"b0", truth.b0}, {"b1", truth.b1}, {"b2", truth.b2},
                           {"rho", CovariateLaw{}.rho}};
  j["timing"]["wall_ms"] = sum.wall_ms;
  return j;
}

inline ReportBundle emit_expreg_report(const CoverageSummary& sum, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  ReportBundle bundle;
  bundle.json_path = out_dir + "/report.json";
  detail::write_text_file(bundle.json_path, expreg_report_json(sum).dump(2) + "\n");

  std::string csv = "scenario,contained,total,coverage,mean_ellipse_area\n";
  for (const ScenarioCount& s : sum.scenarios)
    csv += s.name + "," + std::to_string(s.contained) + "," + std::to_string(s.total) + "," +
           detail::format_double(s.ratio()) + "," + detail::format_double(s.mean_area()) + "\n";
  const std::string csv_path = out_dir + "/summary.csv";
  detail::write_text_file(csv_path, csv);
  bundle.csv_paths.push_back(csv_path);

  // illustrative figure: the replication whose plugin estimate sits at the
  // median distance from the truth
  ExpRegScenarios sc;
  const detail::ExpregRepOutcome rep = detail::expreg_one_rep(sum.config, sum.median_rep, &sc);
  if (rep.ok) {
    const ExpRegParams truth = expreg_truth();
    SvgFigure fig;
    char title[96];
    std::snprintf(title, sizeof(title), "Exponential regression: %.0f%% confidence ellipses",
                  100.0 * sum.config.level);
    fig.title = title;
    fig.x_label = "b0";
    fig.y_label = "b2";
    fig.ellipses.push_back({confidence_ellipse(sc.theta_plugin, sc.pair.adjusted, sum.config.level),
                            "plugin adjusted", "#1f77b4", false});
    fig.ellipses.push_back({confidence_ellipse(sc.theta_pooled, sc.cov_pooled, sum.config.level),
                            "pooled fit", "#ff7f0e", true});
    fig.ellipses.push_back({confidence_ellipse(sc.theta_joint, sc.cov_joint, sum.config.level),
                            "joint fit", "#2ca02c", true});
    fig.ellipses.push_back({confidence_ellipse(sc.theta_plugin, sc.pair.unadjusted, sum.config.level),
                            "plugin unadjusted", "#7f7f7f", false});
    fig.markers.push_back({truth.b0, truth.b2, "truth", "#000000", true});
    fig.markers.push_back({sc.theta_plugin[0], sc.theta_plugin[1], "plugin estimate", "#1f77b4", false});
    const std::string svg_path = out_dir + "/expreg_ellipses.svg";
    emit_svg(svg_path, fig);
    bundle.svg_paths.push_back(svg_path);
  }

  std::string log = "experiment: expreg-coverage\n";
  log += "replications: " + std::to_string(sum.config.resolved_replications()) + "\n";
  log += "failures: " + std::to_string(sum.failures.count) +
         (sum.failures.cap_exceeded() ? " (exclusion cap exceeded)\n" : "\n");
  for (const std::string& s : sum.failures.samples) log += "  " + s + "\n";
  log += "wall_ms: " + detail::format_double(sum.wall_ms) + "\n";
  bundle.log_path = out_dir + "/run.log";
  detail::write_text_file(bundle.log_path, log);
  return bundle;
}

// ---------------------------------------------------------------------------
// GARCH relative-error case studies

struct GarchCase {
  double rel_error = 0.0;
  double omega_hat = 0.0;
  double v_omega_over_m = 0.0;
  double a_hat = 0.0, b_hat = 0.0;
  bool boundary_solution = false;
  EllipseSpec adjusted, unadjusted;  // illustrative pair from replication 0
  double area_ratio = 0.0;
  bool truth_in_adjusted = false, truth_in_unadjusted = false;
  // coverage mode (replications >= 2)
  bool has_coverage = false;
  std::size_t cov_adjusted = 0, cov_unadjusted = 0, cov_total = 0;
};

struct GarchCasesResult {
  std::vector<GarchCase> cases;
  ExperimentConfig config;
  FailureLog failures;
  double wall_ms = 0.0;
};

namespace detail {

struct GarchRepOutcome {
  bool ok = false;
  bool in_adjusted = false, in_unadjusted = false;
  GarchPipelineResult pipe;
  std::string err_kind, err_what;
};

inline GarchRepOutcome garch_one_rep(const ExperimentConfig& cfg, std::size_t case_index,
                                     double rel_error, std::size_t k) {
  GarchRepOutcome out;
  const GarchParams truth = garch_truth();
  try {
    // streams are pure functions of (master_seed, case, k)
    const std::uint64_t base = (std::uint64_t(case_index) << 32) + 2 * k;
    RngStream rng1(cfg.master_seed, base);
    RngStream rng2(cfg.master_seed, base + 1);
    const ReturnSeries y1 = garch_simulate(truth, cfg.T, 500, rng1);
    const ReturnSeries y2 = garch_simulate(truth, cfg.T, 500, rng2);
    GarchPipelineOptions opts;
    opts.level = cfg.level;
    // the case studies stipulate the external intercept and its error scale
    opts.omega_override = (1.0 - rel_error) * truth.omega;
    opts.v_omega_override = (rel_error * truth.omega) * (rel_error * truth.omega);
    out.pipe = garch_adjusted_pipeline(y1, y2, opts);
    const Vec truth_ab{truth.a, truth.b};
    out.in_adjusted = ellipse_contains(out.pipe.adjusted, truth_ab);
    out.in_unadjusted = ellipse_contains(out.pipe.unadjusted, truth_ab);
    out.ok = true;
  } catch (const Error& e) {
    out.err_kind = error_kind(e);
    out.err_what = e.what();
  }
  return out;
}

}  // namespace detail

inline GarchCasesResult run_garch_cases(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.experiment != "garch-cases")
    throw InvalidParams("run_garch_cases: config is for " + cfg.experiment);
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t reps = cfg.resolved_replications();
  GarchCasesResult res;
  res.config = cfg;
  for (std::size_t ci = 0; ci < cfg.rel_errors.size(); ++ci) {
    const double r = cfg.rel_errors[ci];
    GarchCase c;
    c.rel_error = r;
    std::vector<detail::GarchRepOutcome> slots(reps);
    run_replications(reps, harness_workers(cfg), [&](std::size_t k) {
      slots[k] = detail::garch_one_rep(cfg, ci, r, k);
    });
    res.failures.attempted += reps;
    bool have_illustrative = false;
    for (std::size_t k = 0; k < reps; ++k) {
      const auto& s = slots[k];
      if (!s.ok) {
        res.failures.record(s.err_kind, s.err_what);
        continue;
      }
      if (!have_illustrative) {
        // first successful replication doubles as the figure sample
        have_illustrative = true;
        c.omega_hat = s.pipe.omega_used;
        c.v_omega_over_m = s.pipe.v_omega_over_m;
        c.a_hat = s.pipe.a_hat;
        c.b_hat = s.pipe.b_hat;
        c.boundary_solution = s.pipe.boundary_solution;
        c.adjusted = s.pipe.adjusted;
        c.unadjusted = s.pipe.unadjusted;
        c.area_ratio = ellipse_area(s.pipe.adjusted) / ellipse_area(s.pipe.unadjusted);
        c.truth_in_adjusted = s.in_adjusted;
        c.truth_in_unadjusted = s.in_unadjusted;
      }
      if (reps >= 2) {
        c.has_coverage = true;
        c.cov_total += 1;
        c.cov_adjusted += s.in_adjusted ? 1 : 0;
        c.cov_unadjusted += s.in_unadjusted ? 1 : 0;
      }
    }
    if (!have_illustrative)
      throw NoConvergence("run_garch_cases: every replication failed at rel_error " +
                          detail::format_double(r));
    res.cases.push_back(std::move(c));
  }
  res.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

inline nlohmann::json garch_report_json(const GarchCasesResult& res) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["experiment"] = "garch-cases";
  j["config"] = detail::config_json(res.config);
  j["failures"] = res.failures.to_json();
  const GarchParams truth = garch_truth();
  j["results"]["truth"] = {{"omega", truth.omega}, {"a", truth.a}, {"b", truth.b}};
  nlohmann::json cases = nlohmann::json::array();
  for (const GarchCase& c : res.cases) {
    nlohmann::json e;
    e["rel_error"] = c.rel_error;
    e["omega_hat"] = c.omega_hat;
    e["v_omega_over_m"] = c.v_omega_over_m;
    e["a_hat"] = c.a_hat;
    e["b_hat"] = c.b_hat;
    e["boundary_solution"] = c.boundary_solution;
    e["area_adjusted"] = ellipse_area(c.adjusted);
    e["area_unadjusted"] = ellipse_area(c.unadjusted);
    e["area_ratio"] = c.area_ratio;
    e["truth_in_adjusted"] = c.truth_in_adjusted;
    e["truth_in_unadjusted"] = c.truth_in_unadjusted;
    e["ellipse_adjusted"] = {{"center", c.adjusted.center},
                             {"cov", detail::mat_json(c.adjusted.cov)},
                             {"radius2", c.adjusted.radius2}};
    e["ellipse_unadjusted"] = {{"center", c.unadjusted.center},
                               {"cov", detail::mat_json(c.unadjusted.cov)},
                               {"radius2", c.unadjusted.radius2}};
    if (c.has_coverage) {
      e["coverage"] = {{"total", c.cov_total},
                       {"adjusted_contained", c.cov_adjusted},
                       {"unadjusted_contained", c.cov_unadjusted},
                       {"adjusted_ratio", c.cov_total ? double(c.cov_adjusted) / c.cov_total : 0.0},
                       {"unadjusted_ratio", c.cov_total ? double(c.cov_unadjusted) / c.cov_total : 0.0}};
    }
    cases.push_back(std::move(e));
  }
  j["results"]["cases"] = std::move(cases);
  j["timing"]["wall_ms"] = res.wall_ms;
  return j;
}

inline ReportBundle emit_garch_report(const GarchCasesResult& res, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  ReportBundle bundle;
  bundle.json_path = out_dir + "/report.json";
  detail::write_text_file(bundle.json_path, garch_report_json(res).dump(2) + "\n");

  std::string csv = "rel_error,area_ratio,adjusted_coverage,unadjusted_coverage\n";
  for (const GarchCase& c : res.cases) {
    csv += detail::format_double(c.rel_error) + "," + detail::format_double(c.area_ratio) + ",";
    if (c.has_coverage && c.cov_total > 0)
      csv += detail::format_double(double(c.cov_adjusted) / c.cov_total) + "," +
             detail::format_double(double(c.cov_unadjusted) / c.cov_total);
    else
      csv += ",";
    csv += "\n";
  }
  const std::string csv_path = out_dir + "/summary.csv";
  detail::write_text_file(csv_path, csv);
  bundle.csv_paths.push_back(csv_path);

  const GarchParams truth = garch_truth();
  for (const GarchCase& c : res.cases) {
    SvgFigure fig;
    char title[96];
    std::snprintf(title, sizeof(title), "GARCH intercept error %.0f%%: %.0f%% confidence ellipses",
                  100.0 * c.rel_error, 100.0 * res.config.level);
    fig.title = title;
    fig.x_label = "a";
    fig.y_label = "b";
    fig.ellipses.push_back({c.adjusted, "adjusted", "#1f77b4", false});
    fig.ellipses.push_back({c.unadjusted, "unadjusted", "#d62728", true});
    fig.markers.push_back({truth.a, truth.b, "truth", "#000000", true});
    fig.markers.push_back({c.a_hat, c.b_hat, "estimate", "#1f77b4", false});
    char name[64];
    std::snprintf(name, sizeof(name), "/garch_case_%dpct.svg", int(std::lround(100.0 * c.rel_error)));
    const std::string svg_path = out_dir + name;
    emit_svg(svg_path, fig);
    bundle.svg_paths.push_back(svg_path);
  }

  std::string log = "experiment: garch-cases\n";
  log += "replications: " + std::to_string(res.config.resolved_replications()) + "\n";
  log += "failures: " + std::to_string(res.failures.count) +
         (res.failures.cap_exceeded() ? " (exclusion cap exceeded)\n" : "\n");
  for (const std::string& s : res.failures.samples) log += "  " + s + "\n";
  log += "wall_ms: " + detail::format_double(res.wall_ms) + "\n";
  bundle.log_path = out_dir + "/run.log";
  detail::write_text_file(bundle.log_path, log);
  return bundle;
}

// ---------------------------------------------------------------------------
// network depth study

struct NnClassRow {
  int label = 0;
  double mu_hat = 0.0;
  double un_lo = 0.0, un_hi = 0.0;
  double adj_lo = 0.0, adj_hi = 0.0;
  double widening = 0.0;  // adjusted halfwidth / unadjusted halfwidth - 1
};

struct NnRun {
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  bool accuracy_reached = false;
  double trace_inflation = 0.0;  // trace(adjusted)/trace(unadjusted) - 1
  double widening_median = 0.0;
  bool contained_all = false;
  std::vector<NnClassRow> classes;
};

struct NnDepthBlock {
  std::size_t depth = 0;
  std::vector<NnRun> runs;
  double pooled_widening_median = 0.0;
  bool all_contained = false;
  // sample two-coordinate weight ellipse from the first seed's run
  Vec sample_center;
  EllipseSpec sample_adjusted, sample_unadjusted;
};

struct NnStudyResult {
  std::vector<NnDepthBlock> depths;
  std::vector<std::uint64_t> seeds;
  ExperimentConfig config;
  FailureLog failures;
  double wall_ms = 0.0;
  bool depth_ordering_evaluated = false;
  bool depth_ordering_holds = false;  // pooled median widening: depth 2 > depth 4
};

inline constexpr double kNnAccuracyFloor = 0.90;
inline constexpr std::size_t kNnSeedCount = 5;
inline constexpr std::size_t kNnGroupCount = 6;
inline constexpr double kNnTau2 = 0.01;

// The full per-net analysis protocol: train on the training set, then draw
// every inference statistic from held-out data — information matrix, bias
// cross-derivatives, group refits for the bias posterior, and the per-class
// prediction intervals.
inline NnRun nn_run_single(const ExperimentConfig& cfg, std::size_t depth, std::uint64_t seed,
                           const Dataset& train, const Dataset& test, CovariancePair* keep_cov,
                           NetParams* keep_params) {
  MlpSpec spec;
  spec.layer_sizes.push_back(train.x.at(0).size());
  for (std::size_t k = 0; k < depth; ++k) spec.layer_sizes.push_back(16);
  spec.layer_sizes.push_back(train.y.at(0).size());

  TrainHyper hyper;
  hyper.seed = seed;
  const TrainResult tr = mlp_train(spec, mlp_init(spec, seed), train, hyper);

  NnRun run;
  run.seed = seed;
  run.accuracy = mlp_accuracy(spec, tr.params, test);
  run.accuracy_reached = run.accuracy >= kNnAccuracyFloor;

  const Mat fim = weight_fim(spec, tr.params, test);
  const Mat cross = cross_jacobian_bias(spec, tr.params, test);
  const SensitivityMatrix d1 = weight_bias_sensitivity(fim, cross);

  std::vector<std::size_t> idx(test.size());
  std::iota(idx.begin(), idx.end(), 0);
  RngStream group_rng(seed, 0x67727570ULL);
  group_rng.shuffle(idx);
  const std::size_t group_size = test.size() / kNnGroupCount;
  std::vector<Dataset> groups;
  for (std::size_t g = 0; g < kNnGroupCount; ++g) {
    Dataset d;
    for (std::size_t j = 0; j < group_size; ++j) {
      const std::size_t i = idx[g * group_size + j];
      d.x.push_back(test.x[i]);
      d.y.push_back(test.y[i]);
      d.labels.push_back(test.labels[i]);
    }
    groups.push_back(std::move(d));
  }
  const BiasPosterior post = bias_posterior(spec, tr.params, groups, kNnTau2);
  const CovariancePair cov = adjusted_weight_cov(fim, d1, post, test.size());
  run.trace_inflation = trace(cov.adjusted) / trace(cov.unadjusted) - 1.0;

  const PredictionBands bands =
      prediction_ci(spec, tr.params, cov, test, cfg.level, false, cfg.compat_quantile);
  run.contained_all = true;
  Vec widen;
  for (std::size_t c = 0; c < bands.adjusted.per_class.size(); ++c) {
    const ClassInterval& a = bands.adjusted.per_class[c];
    const ClassInterval& u = bands.unadjusted.per_class[c];
    NnClassRow row;
    row.label = int(c);
    row.mu_hat = a.mu_hat;
    row.adj_lo = a.lower;
    row.adj_hi = a.upper;
    row.un_lo = u.lower;
    row.un_hi = u.upper;
    const double hw_u = 0.5 * (u.upper - u.lower), hw_a = 0.5 * (a.upper - a.lower);
    row.widening = hw_u > 0.0 ? hw_a / hw_u - 1.0 : 0.0;
    if (a.lower > u.lower + 1e-15 || a.upper < u.upper - 1e-15) run.contained_all = false;
    widen.push_back(row.widening);
    run.classes.push_back(row);
  }
  run.widening_median = detail::median_of(widen);

  if (keep_cov) *keep_cov = cov;
  if (keep_params) *keep_params = tr.params;
  return run;
}

inline NnStudyResult run_nn_depth_study(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.experiment != "nn-depth")
    throw InvalidParams("run_nn_depth_study: config is for " + cfg.experiment);
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset train = load_idx_dataset(cfg.train_images, cfg.train_labels);
  const Dataset test = load_idx_dataset(cfg.test_images, cfg.test_labels);

  NnStudyResult res;
  res.config = cfg;
  for (std::size_t s = 0; s < kNnSeedCount; ++s) res.seeds.push_back(cfg.master_seed + s);

  for (std::size_t depth : cfg.depths) {
    NnDepthBlock block;
    block.depth = depth;
    Vec medians;
    for (std::size_t s = 0; s < res.seeds.size(); ++s) {
      res.failures.attempted += 1;
      CovariancePair cov;
      NetParams params;
      const bool keep = s == 0;
      try {
        NnRun run = nn_run_single(cfg, depth, res.seeds[s], train, test,
                                  keep ? &cov : nullptr, keep ? &params : nullptr);
        if (!run.accuracy_reached)
          res.failures.record("AccuracyNotReached",
                              "depth " + std::to_string(depth) + " seed " +
                                  std::to_string(res.seeds[s]) + " test accuracy " +
                                  detail::format_double(run.accuracy));
        medians.push_back(run.widening_median);
        block.runs.push_back(std::move(run));
        if (keep) {
          // two-coordinate slice of the weight covariance for the figure
          MlpSpec spec;
          spec.layer_sizes.push_back(train.x.at(0).size());
          for (std::size_t k = 0; k < depth; ++k) spec.layer_sizes.push_back(16);
          spec.layer_sizes.push_back(train.y.at(0).size());
          const Mat& w = params.weights[spec.scope_start()];
          block.sample_center = {w(0, 0), w(0, 1)};
          Mat a2(2, 2), u2(2, 2);
          for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j) {
              a2(i, j) = cov.adjusted(i, j);
              u2(i, j) = cov.unadjusted(i, j);
            }
          block.sample_adjusted = confidence_ellipse(block.sample_center, a2, cfg.level);
          block.sample_unadjusted = confidence_ellipse(block.sample_center, u2, cfg.level);
        }
      } catch (const Error& e) {
        res.failures.record(error_kind(e), e.what());
      }
    }
    block.all_contained = !block.runs.empty();
    for (const NnRun& r : block.runs)
      if (!r.contained_all) block.all_contained = false;
    if (!medians.empty()) block.pooled_widening_median = detail::median_of(medians);
    res.depths.push_back(std::move(block));
  }

  const NnDepthBlock* d2 = nullptr;
  const NnDepthBlock* d4 = nullptr;
  for (const NnDepthBlock& b : res.depths) {
    if (b.depth == 2) d2 = &b;
    if (b.depth == 4) d4 = &b;
  }
  if (d2 && d4 && !d2->runs.empty() && !d4->runs.empty()) {
    res.depth_ordering_evaluated = true;
    res.depth_ordering_holds = d2->pooled_widening_median > d4->pooled_widening_median;
  }
  res.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

inline nlohmann::json nn_report_json(const NnStudyResult& res) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["experiment"] = "nn-depth";
  j["config"] = detail::config_json(res.config);
  j["failures"] = res.failures.to_json();
  j["results"]["seeds"] = res.seeds;
  nlohmann::json depths = nlohmann::json::array();
  for (const NnDepthBlock& b : res.depths) {
    nlohmann::json d;
    d["depth"] = b.depth;
    d["pooled_widening_median"] = b.pooled_widening_median;
    d["all_contained"] = b.all_contained;
    if (!b.sample_center.empty()) {
      d["weight_ellipse"] = {{"center", b.sample_center},
                             {"adjusted_cov", detail::mat_json(b.sample_adjusted.cov)},
                             {"unadjusted_cov", detail::mat_json(b.sample_unadjusted.cov)},
                             {"radius2", b.sample_adjusted.radius2}};
    }
    nlohmann::json runs = nlohmann::json::array();
    for (const NnRun& r : b.runs) {
      nlohmann::json e;
      e["seed"] = r.seed;
      e["accuracy"] = r.accuracy;
      e["accuracy_reached"] = r.accuracy_reached;
      e["trace_inflation"] = r.trace_inflation;
      e["widening_median"] = r.widening_median;
      e["contained_all"] = r.contained_all;
      nlohmann::json classes = nlohmann::json::array();
      for (const NnClassRow& c : r.classes) {
        classes.push_back({{"class", c.label},
                           {"mu_hat", c.mu_hat},
                           {"unadjusted", {c.un_lo, c.un_hi}},
                           {"adjusted", {c.adj_lo, c.adj_hi}},
                           {"widening", c.widening}});
      }
      e["classes"] = std::move(classes);
      runs.push_back(std::move(e));
    }
    d["runs"] = std::move(runs);
    depths.push_back(std::move(d));
  }
  j["results"]["depths"] = std::move(depths);
  j["results"]["depth_ordering_evaluated"] = res.depth_ordering_evaluated;
  j["results"]["depth_ordering_holds"] = res.depth_ordering_holds;
  j["timing"]["wall_ms"] = res.wall_ms;
  return j;
}

inline ReportBundle emit_nn_report(const NnStudyResult& res, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  ReportBundle bundle;
  bundle.json_path = out_dir + "/report.json";
  detail::write_text_file(bundle.json_path, nn_report_json(res).dump(2) + "\n");

  std::string csv = "depth,seed,class,mu_hat,unadjusted_lo,unadjusted_hi,adjusted_lo,adjusted_hi,widening\n";
  for (const NnDepthBlock& b : res.depths)
    for (const NnRun& r : b.runs)
      for (const NnClassRow& c : r.classes)
        csv += std::to_string(b.depth) + "," + std::to_string(r.seed) + "," +
               std::to_string(c.label) + "," + detail::format_double(c.mu_hat) + "," +
               detail::format_double(c.un_lo) + "," + detail::format_double(c.un_hi) + "," +
               detail::format_double(c.adj_lo) + "," + detail::format_double(c.adj_hi) + "," +
               detail::format_double(c.widening) + "\n";
  const std::string csv_path = out_dir + "/summary.csv";
  detail::write_text_file(csv_path, csv);
  bundle.csv_paths.push_back(csv_path);

  for (const NnDepthBlock& b : res.depths) {
    if (b.sample_center.empty()) continue;
    SvgFigure fig;
    char title[96];
    std::snprintf(title, sizeof(title), "Depth-%zu net: %.0f%% region for two weights", b.depth,
                  100.0 * res.config.level);
    fig.title = title;
    fig.x_label = "w1";
    fig.y_label = "w2";
    fig.ellipses.push_back({b.sample_adjusted, "adjusted", "#1f77b4", false});
    fig.ellipses.push_back({b.sample_unadjusted, "unadjusted", "#d62728", true});
    fig.markers.push_back({b.sample_center[0], b.sample_center[1], "estimate", "#000000", true});
    const std::string svg_path = out_dir + "/nn_weight_ellipse_depth" + std::to_string(b.depth) + ".svg";
    emit_svg(svg_path, fig);
    bundle.svg_paths.push_back(svg_path);
  }

  std::string log = "experiment: nn-depth\n";
  log += "failures: " + std::to_string(res.failures.count) + "\n";
  for (const std::string& s : res.failures.samples) log += "  " + s + "\n";
  log += "wall_ms: " + detail::format_double(res.wall_ms) + "\n";
  bundle.log_path = out_dir + "/run.log";
  detail::write_text_file(bundle.log_path, log);
  return bundle;
}

}  // namespace nadjust
