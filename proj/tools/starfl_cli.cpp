// starfl: run scenarios, regenerate figure grids and run the verification suites.
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "starfl/scenario.hpp"
#include "starfl/verify.hpp"

namespace fs = std::filesystem;
using namespace starfl;

namespace {

struct Common {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out_dir = "out";
  std::string scheme;
  int threads = 0;
};

void add_common(CLI::App* app, Common& c, bool scheme) {
  app->add_option("--config", c.config, "JSON scenario config (defaults when omitted)");
  app->add_option("--seed", c.seeds, "Seed(s); repeat to sweep. Overrides run.seeds");
  app->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
  app->add_option("--threads", c.threads, "Worker threads (0 uses run.threads)");
  if (scheme)
    app->add_option("--scheme", c.scheme,
                    "proposed | noise_free | conventional_ris | random_star_ris | equal_power | all");
}

ScenarioConfig resolve(const Common& c) {
  ScenarioConfig cfg = c.config.empty() ? ScenarioConfig{} : load_config(c.config);
  if (!c.seeds.empty()) cfg.seeds = c.seeds;
  if (!c.scheme.empty()) cfg.scheme = c.scheme;
  if (c.threads > 0) cfg.threads = c.threads;
  cfg.validate();
  return cfg;
}

void print_groups(const GridOutput& g) {
  for (const auto& s : g.groups)
    std::printf("%-10s %-18s runs=%d final_gap_median=%.6g mean_rate_median=%.6g\n",
                s.variant.c_str(), s.scheme.c_str(), s.runs, s.final_gap_median,
                s.mean_rate_median);
}

int cmd_run(const Common& c) {
  ScenarioConfig cfg = resolve(c);
  std::vector<Scheme> schemes;
  if (cfg.scheme == "all")
    schemes = all_schemes();
  else
    schemes.push_back(parse_scheme(cfg.scheme));
  std::vector<GridCell> cells;
  for (Scheme s : schemes)
    for (auto seed : cfg.seeds) cells.push_back({"base", cfg, s, seed});
  fs::create_directories(c.out_dir);
  write_atomic(fs::path(c.out_dir) / "config.json", config_to_json(cfg));
  GridOutput g = run_grid(cells, c.out_dir, cfg.threads);
  print_groups(g);
  return 0;
}

int cmd_figure(const std::string& name, const Common& c) {
  ScenarioConfig cfg = resolve(c);
  std::vector<GridCell> cells = figure_cells(name, cfg);
  fs::path dir = fs::path(c.out_dir) / name;
  fs::create_directories(dir);
  write_atomic(dir / "config.json", config_to_json(cfg));
  GridOutput g = run_grid(cells, dir, cfg.threads);
  print_groups(g);
  return 0;
}

int cmd_verify(std::vector<std::string> suites, const std::string& out_dir, int threads) {
  if (suites.size() == 1 && suites[0] == "all") suites = verify_suite_names();
  VerifyOptions vo;
  if (threads > 0) vo.threads = threads;
  std::vector<Check> checks;
  for (const auto& s : suites) {
    auto cs = run_suite(s, vo);
    checks.insert(checks.end(), cs.begin(), cs.end());
  }
  int failed = 0;
  for (const auto& ch : checks) {
    std::printf("%s  C%-2d %-11s %-40s measured=%-12.6g tol=%-10.3g %s\n", ch.pass ? "PASS" : "FAIL",
                ch.criterion, ch.suite.c_str(), ch.name.c_str(), ch.measured, ch.tolerance,
                ch.detail.c_str());
    failed += !ch.pass;
  }
  std::printf("%zu checks, %d failed\n", checks.size(), failed);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_atomic(fs::path(out_dir) / "verify_report.json", report_json(checks));
    write_atomic(fs::path(out_dir) / "verify_report.csv", report_csv(checks));
  }
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STAR-RIS NOMA / over-the-air FL simulator"};
  app.require_subcommand(1);

  Common run_opts;
  auto* run = app.add_subcommand("run", "Run one scenario over its seeds");
  add_common(run, run_opts, true);

  Common fig_opts;
  std::string fig_name;
  auto* fig = app.add_subcommand("figure", "Regenerate the scheme/sweep grid of a figure");
  fig->add_option("name", fig_name, "gap_schemes | gap_vs_M | obstacle | rate_vs_location | rate_vs_M")
      ->required();
  add_common(fig, fig_opts, false);

  std::vector<std::string> suites;
  std::string verify_out;
  int verify_threads = 0;
  auto* ver = app.add_subcommand("verify", "Run verification suites (none selected: empty report)");
  ver->add_option("suites", suites, "identities | gradients | bounds | solvers | endtoend | all");
  ver->add_option("--out-dir", verify_out, "Directory for verify_report.json / .csv");
  ver->add_option("--threads", verify_threads, "Worker threads for grid checks");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run_opts);
    if (*fig) return cmd_figure(fig_name, fig_opts);
    if (*ver) return cmd_verify(suites, verify_out, verify_threads);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
