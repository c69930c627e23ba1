#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "starfl/scenario.hpp"
#include "starfl/verify.hpp"

using namespace starfl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ScenarioConfig small_config() {
  ScenarioConfig c;
  c.M = 4;
  c.rounds = 10;
  c.alloc.L_a = 2;
  return c;
}

}  // namespace

TEST_SUITE("bench_cli") {

TEST_CASE("defaults follow the simulation section") {
  ScenarioConfig c;
  CHECK(c.N == 3);
  CHECK(c.K == 3);
  CHECK(c.M == 20);
  CHECK(c.peak_power_dbm == 23.0);
  CHECK(c.avg_power_dbm == 20.0);
  CHECK(c.noise_dbm == -80.0);
  CHECK(c.min_rate_bps_hz == 1.0);
  CHECK(c.mse_tolerance == 0.01);
  CHECK(c.rate.lambda == 1e-4);
  CHECK(c.rounds == 200);
  CHECK(c.user_radius_m == 5.0);
  CHECK(c.channel_params().varsigma0 == doctest::Approx(1e-3));
  CHECK(c.channel_params().sigma2 == doctest::Approx(1e-11));
}

TEST_CASE("config parsing reports the field path") {
  CHECK_THROWS_WITH_AS(parse_config(R"({"channel": {"noise_dbmm": -80}})"),
                       doctest::Contains("config.channel.noise_dbmm: unknown field"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"network": {"num_elements": "20"}})"),
                       doctest::Contains("config.network.num_elements"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"network": {"bs_position_m": [0, 1]}})"),
                       doctest::Contains("bs_position_m"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"run": {"scheme": "best"}})"),
                       doctest::Contains("valid: proposed"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config round trip") {
  ScenarioConfig c;
  c.M = 12;
  c.blocked = true;
  c.seeds = {3, 4};
  c.horizon = HorizonMode::Causal;
  c.alloc.noma_weight = 0.5;
  ScenarioConfig d = parse_config(config_to_json(c));
  CHECK(config_to_json(d) == config_to_json(c));
  CHECK(d.M == 12);
  CHECK(d.blocked);
  CHECK(d.seeds == std::vector<std::uint64_t>{3, 4});
}

TEST_CASE("the shipped default config equals the built-in defaults") {
  fs::path p = fs::path(STARFL_SOURCE_DIR) / "configs" / "default.json";
  REQUIRE(fs::exists(p));
  CHECK(config_to_json(load_config(p)) == config_to_json(ScenarioConfig{}));
}

TEST_CASE("network roles follow channel strength") {
  ScenarioConfig c;
  Network net = build_network(c, 2);
  const auto& r0 = net.rounds[0];
  auto strength = [&](int u) {
    return std::norm(r0.h[u]) + cascade_vector(r0.r_bar, r0.r[u]).squaredNorm();
  };
  for (int n = 0; n + 1 < c.N; ++n) CHECK(strength(n) >= strength(n + 1));
  for (int k = c.N; k < c.N + c.K; ++k) CHECK(strength(c.N - 1) >= strength(k));
  CHECK(net.rounds.size() == static_cast<size_t>(c.rounds));
  CHECK(net.rounds[7].h == net.rounds[0].h);
}

TEST_CASE("default run has one row per round and deterministic CSV") {
  ScenarioConfig c;
  RunRecord a = run_one(c, Scheme::Proposed, 1);
  CHECK(a.rows.size() == 200);
  for (const auto& r : a.rows) CHECK(r.gap >= 0.0);
  std::string csv = run_csv(a);
  CHECK(csv.rfind("t,gap,bound,mse,sum_rate,", 0) == 0);
  CHECK(csv.find('\r') == std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 201);
  RunRecord b = run_one(c, Scheme::Proposed, 1);
  CHECK(run_csv(b) == csv);
}

TEST_CASE("CSV round trip keeps full precision") {
  RunRecord r = run_one(small_config(), Scheme::EqualPower, 3);
  fs::path dir = fs::temp_directory_path() / "starfl_csv_rt";
  fs::create_directories(dir);
  write_atomic(dir / "r.csv", run_csv(r));
  auto rows = read_run_csv(dir / "r.csv");
  REQUIRE(rows.size() == r.rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].gap == r.rows[i].gap);
    CHECK(rows[i].sum_rate == r.rows[i].sum_rate);
    CHECK(rows[i].power_w == r.rows[i].power_w);
  }
  fs::remove_all(dir);
}

TEST_CASE("grid summary is recomputable from the per-run files") {
  ScenarioConfig c = small_config();
  c.seeds = {1, 2, 3};
  std::vector<GridCell> cells;
  for (auto s : c.seeds) cells.push_back({"base", c, Scheme::EqualPower, s});
  fs::path dir = fs::temp_directory_path() / "starfl_grid";
  fs::remove_all(dir);
  GridOutput g = run_grid(cells, dir, 2);
  REQUIRE(g.groups.size() == 1);
  std::vector<double> finals;
  for (auto s : c.seeds) {
    fs::path f = dir / ("base__equal_power__seed" + std::to_string(s) + ".csv");
    REQUIRE(fs::exists(f));
    CHECK(fs::exists(fs::path(f).replace_extension(".meta.json")));
    finals.push_back(read_run_csv(f).back().gap);
  }
  CHECK(g.groups[0].final_gap_median == quantile(finals, 0.5));
  CHECK(fs::exists(dir / "summary.csv"));
  CHECK(slurp(dir / "groups.csv") == groups_csv(g.groups));
  fs::remove_all(dir);
}

TEST_CASE("figure grids") {
  ScenarioConfig c;
  c.seeds = {1, 2};
  CHECK(figure_cells("gap_schemes", c).size() == 10);
  auto gm = figure_cells("gap_vs_M", c);
  CHECK(gm.size() == 8);
  CHECK(gm.front().cfg.M == 0);
  auto loc = figure_cells("rate_vs_location", c);
  CHECK(loc.size() == 18);
  CHECK(loc.front().cfg.ris_position[1] == 40.0);
  CHECK(loc.back().cfg.ris_position[1] == 60.0);
  CHECK(figure_cells("rate_vs_M", c).size() == 30);
  CHECK(figure_cells("obstacle", c).size() == 4);
  CHECK_THROWS_WITH(figure_cells("fig9", c), doctest::Contains("valid: gap_schemes"));
}

TEST_CASE("quantile") {
  CHECK(quantile({3, 1, 2}, 0.5) == 2.0);
  CHECK(quantile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
  CHECK(quantile({5}, 0.9) == 5.0);
}

TEST_CASE("verify: suites, empty selection and stable CSV") {
  CHECK_THROWS_WITH(run_suite("nope"), doctest::Contains("valid: identities"));
  CHECK(report_csv({}) == "suite,name,criterion,measured,tolerance,pass\n");
  auto j = nlohmann::json::parse(report_json({}));
  CHECK(j["total"] == 0);
  auto a = run_suite("gradients"), b = run_suite("gradients");
  CHECK(report_csv(a) == report_csv(b));
  for (const auto& c : a) CHECK(c.pass);
}

}  // TEST_SUITE
