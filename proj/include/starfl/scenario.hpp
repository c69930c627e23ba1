#pragma once

#include <filesystem>
#include <string>

#include "starfl/airfl.hpp"
#include "starfl/opt_alloc.hpp"
#include "starfl/topology_channel.hpp"

namespace starfl {

enum class HorizonMode { Oracle, Causal };

// Everything a run needs. Physical quantities are kept in the config units
// (dB, dBm, m) and converted by the accessors.
struct ScenarioConfig {
  // network
  int N = 3, K = 3, M = 20;
  Point3 bs_position{0.0, 0.0, 0.0};
  Point3 ris_position{0.0, 50.0, 0.0};
  Point3 user_center{0.0, 50.0, 0.0};
  double user_radius_m = 5.0;
  double user_min_radius_m = 1.0;
  // channel
  double ref_path_loss_db = -30.0;
  double path_loss_exponent = 2.2;
  double rician_factor = 2.0;
  double noise_dbm = -80.0;
  double element_spacing_ratio = 0.5;
  bool blocked = false;
  bool block_fading = true;
  // Receive scaling 1 / sqrt(eta), eta = L(d_ref) * 1 mW. d_ref = 0 uses the
  // BS to user-center distance.
  double normalization_distance_m = 0.0;
  // power and constraints
  double peak_power_dbm = 23.0;
  double avg_power_dbm = 20.0;
  double min_rate_bps_hz = 1.0;
  double mse_tolerance = 0.01;
  bool enforce_order = true;
  // learning
  int rounds = 200;
  LearningRate rate;
  TaskOptions task;
  // optimizer
  int window_rounds = 5;
  HorizonMode horizon = HorizonMode::Oracle;
  AllocOptions alloc;
  // run grid
  std::string scheme = "proposed";
  std::vector<std::uint64_t> seeds{1};
  int threads = 1;

  ChannelParams channel_params() const;
  void validate() const;
};

// Parses a JSON config. Unknown or mistyped fields raise ConfigError naming
// the field path.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
ScenarioConfig load_config(const std::filesystem::path& path);
ScenarioConfig parse_config(const std::string& text, const std::string& origin = "config");
std::string config_to_json(const ScenarioConfig& cfg);

// Deterministic network and channels of one seed.
struct Network {
  Topology topo;
  double aod = 0.0;
  double eta = 1.0;                        // receive normalization
  std::vector<ChannelRealization> rounds;  // per training round, normalized
  std::vector<int> relabel;                // new index -> sampled index (first N are NOMA)
};
Network build_network(const ScenarioConfig& cfg, std::uint64_t seed);

// Optimization window [t0, t0 + len) of a network.
Instance make_instance(const ScenarioConfig& cfg, const Network& net, const LearningTask& task,
                       int t0, int len);

BoundConstants bound_constants(const ScenarioConfig& cfg, const LearningTask& task, double sigma2);

struct RoundRow {
  int t = 0;
  double gap = 0.0;
  double bound = 0.0;
  double mse = 0.0;
  double sum_rate = 0.0;
  std::vector<double> power_w;  // per user p^2
  bool order_ok = true, qos_ok = true, mse_ok = true, power_ok = true;
};

struct RunRecord {
  std::string variant;
  std::string scheme;
  std::uint64_t seed = 0;
  std::vector<RoundRow> rows;
  double upsilon_window = 0.0;  // optimized objective of the first window
  std::vector<double> upsilon_trace;
  double wall_seconds = 0.0;
};

RunRecord run_one(const ScenarioConfig& cfg, Scheme scheme, std::uint64_t seed,
                  const std::string& variant = "base");

// CSV with one row per training round; 17 significant digits, LF endings.
std::string run_csv(const RunRecord& r);
std::vector<RoundRow> read_run_csv(const std::filesystem::path& p);

struct GridCell {
  std::string variant;
  ScenarioConfig cfg;
  Scheme scheme;
  std::uint64_t seed;
};

struct GroupStats {
  std::string variant, scheme;
  int runs = 0;
  double final_gap_median = 0, final_gap_q25 = 0, final_gap_q75 = 0;
  double mean_rate_median = 0, mean_rate_q25 = 0, mean_rate_q75 = 0;
};

struct GridOutput {
  std::vector<RunRecord> runs;
  std::vector<GroupStats> groups;
};

// Runs every cell (in a worker pool of `threads`) and, when out_dir is not
// empty, writes one CSV per run, summary.csv (per round, median and IQR
// across seeds) and groups.csv.
GridOutput run_grid(const std::vector<GridCell>& cells, const std::filesystem::path& out_dir,
                    int threads);

std::string summary_csv(const std::vector<RunRecord>& runs);
std::string groups_csv(const std::vector<GroupStats>& g);
std::vector<GroupStats> group_stats(const std::vector<RunRecord>& runs);

const std::vector<std::string>& figure_names();
std::vector<GridCell> figure_cells(const std::string& name, const ScenarioConfig& base);

// Writes to a temporary sibling and renames into place.
void write_atomic(const std::filesystem::path& p, const std::string& content);

// Type-7 quantile of an unsorted sample.
double quantile(std::vector<double> v, double q);

}  // namespace starfl
