// End-to-end checks for the command-line front end.  Takes the binary path as
// argv[1], runs each subcommand against scratch files, and verifies exit
// codes, JSON output, and emitted artifacts.  Exits with the failure count.

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void check(bool ok, const std::string& what) {
  std::printf("%s %s\n", ok ? "[ok]  " : "[FAIL]", what.c_str());
  if (!ok) ++g_failures;
}

struct RunResult {
  int exit_code = -1;
  std::string out;  // stdout
  std::string err;  // stderr
};

RunResult run(const std::string& bin, const std::string& args) {
  const fs::path err_path = fs::temp_directory_path() / "nadjust_cli_stderr.txt";
  const std::string cmd = "\"" + bin + "\" " + args + " 2>" + err_path.string();
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::size_t got = std::fread(buf, 1, sizeof(buf), pipe)) r.out.append(buf, got);
  const int status = ::pclose(pipe);
  if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
  std::ifstream ein(err_path);
  std::stringstream ss;
  ss << ein.rdbuf();
  r.err = ss.str();
  return r;
}

nlohmann::json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

nlohmann::json without_timing(nlohmann::json j) {
  j.erase("timing");
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: cli_checks <path-to-nadjust-binary>\n");
    return 99;
  }
  const std::string bin = argv[1];
  const fs::path work = fs::temp_directory_path() / "nadjust_cli_work";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string w = work.string();

  // --- simulate then fit round trip ------------------------------------------
  {
    RunResult r = run(bin, "simulate --model expreg --n 2000 --seed 3 --out " + w);
    check(r.exit_code == 0, "simulate expreg exits 0");
    check(fs::exists(work / "expreg.csv"), "simulate writes expreg.csv");

    r = run(bin, "fit --model expreg --data " + w + "/expreg.csv");
    check(r.exit_code == 0, "fit expreg exits 0");
    const nlohmann::json j = nlohmann::json::parse(r.out, nullptr, false);
    check(!j.is_discarded() && j.contains("b0"), "fit output is JSON with estimates");
    if (j.contains("b0"))
      check(std::abs(j["b0"].get<double>() - 0.5) < 0.2, "fit recovers the intercept roughly");
  }

  {
    RunResult r = run(bin, "simulate --model garch --T 400 --seed 4 --out " + w);
    check(r.exit_code == 0, "simulate garch exits 0");
    r = run(bin, "fit --model garch --data " + w + "/garch.csv --omega 0.1");
    check(r.exit_code == 0, "fit garch exits 0");
  }

  // --- adjust: hand-checkable covariance combination --------------------------
  {
    RunResult r = run(bin, "adjust --v-theta 1,0,0,1 --d1 1,0 --v-alpha 0.5 --n 10 --m 5");
    check(r.exit_code == 0, "adjust exits 0");
    const nlohmann::json j = nlohmann::json::parse(r.out, nullptr, false);
    bool ok = !j.is_discarded();
    if (ok) {
      const auto& adj = j["adjusted"];
      ok = std::abs(adj[0][0].get<double>() - 1.5) < 1e-12 &&
           std::abs(adj[0][1].get<double>()) < 1e-12 &&
           std::abs(adj[1][1].get<double>() - 1.0) < 1e-12;
    }
    check(ok, "adjust output matches the hand calculation");
  }

  // --- ellipse: the 90% two-dof radius ----------------------------------------
  {
    RunResult r = run(bin, "ellipse --cov 1,0,0,1 --center 0,0 --level 0.9 --out " + w);
    check(r.exit_code == 0, "ellipse exits 0");
    check(r.out.find("4.60517") != std::string::npos, "ellipse reports the 90% radius^2");
    check(fs::exists(work / "ellipse.svg"), "ellipse writes an SVG");

    r = run(bin, "ellipse --cov 1,2,3 --center 0,0");
    check(r.exit_code == 2, "non-square covariance exits 2");
  }

  // --- error paths -------------------------------------------------------------
  {
    RunResult r = run(bin, "fit --model expreg --data " + w + "/does_not_exist.csv");
    check(r.exit_code == 2, "missing input exits 2");
    check(r.err.find("does_not_exist.csv") != std::string::npos, "missing input names the path");

    r = run(bin, "frobnicate");
    check(r.exit_code == 2, "unknown subcommand exits 2");

    r = run(bin, "ellipse --cov 1,0,0,1 --center 0,0 --level 1.5");
    check(r.exit_code == 2, "out-of-range level exits 2");
  }

  // --- coverage: determinism across identical invocations ----------------------
  {
    const std::string a = w + "/covA", b = w + "/covB";
    RunResult r = run(bin, "coverage --experiment expreg --reps 50 --seed 7 --out " + a);
    check(r.exit_code == 0, "coverage run A exits 0");
    r = run(bin, "coverage --experiment expreg --reps 50 --seed 7 --out " + b);
    check(r.exit_code == 0, "coverage run B exits 0");
    const bool both = fs::exists(a + "/report.json") && fs::exists(b + "/report.json");
    check(both, "coverage writes report.json");
    if (both) {
      const nlohmann::json ja = without_timing(read_json_file(a + "/report.json"));
      const nlohmann::json jb = without_timing(read_json_file(b + "/report.json"));
      check(ja.dump() == jb.dump(), "identical seeds give identical reports (sans timing)");
      check(ja["config"]["master_seed"] == 7, "report echoes the seed");
    }
    check(fs::exists(a + "/summary.csv"), "coverage writes summary.csv");
    check(fs::exists(a + "/run.log"), "coverage writes run.log");
  }

  // --- garch pipeline with a stipulated nuisance --------------------------------
  {
    RunResult r = run(bin, "garch-pipeline --data " + w +
                              "/garch.csv --omega 0.1 --v-omega 0.0 --out " + w + "/pipe");
    check(r.exit_code == 0, "pipeline with exact nuisance exits 0");
    const nlohmann::json j = nlohmann::json::parse(r.out, nullptr, false);
    bool ok = !j.is_discarded() && j.contains("area_ratio");
    if (ok) ok = std::abs(j["area_ratio"].get<double>() - 1.0) < 1e-9;
    check(ok, "zero nuisance variance leaves the region unchanged");
    check(fs::exists(work / "pipe" / "garch_ellipses.svg"), "pipeline writes the figure");

    r = run(bin, "garch-pipeline --data " + w + "/garch.csv");
    check(r.exit_code == 2, "pipeline without a nuisance source exits 2");
  }

  std::printf("cli checks: %d failure(s)\n", g_failures);
  return g_failures;
}
