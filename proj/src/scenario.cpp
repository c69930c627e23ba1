#include "starfl/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <limits>
#include <thread>

#include "json.hpp"

namespace starfl {

using json = nlohmann::json;

ChannelParams ScenarioConfig::channel_params() const {
  ChannelParams p;
  p.varsigma0 = db_to_linear(ref_path_loss_db);
  p.alpha = path_loss_exponent;
  p.kappa = rician_factor;
  p.sigma2 = dbm_to_watt(noise_dbm);
  p.element_spacing_ratio = element_spacing_ratio;
  return p;
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (N < 0) fail("network.num_noma must be >= 0");
  if (K < 1) fail("network.num_airfl must be >= 1");
  if (M < 0) fail("network.num_elements must be >= 0");
  if (!(user_radius_m > user_min_radius_m) || user_min_radius_m < 0)
    fail("network.user_radius_m must exceed network.user_min_radius_m >= 0");
  if (rounds < 1) fail("learning.rounds must be >= 1");
  if (window_rounds < 1) fail("optimizer.window_rounds must be >= 1");
  if (!(mse_tolerance > 0)) fail("constraints.mse_tolerance must be > 0");
  if (min_rate_bps_hz < 0) fail("constraints.min_rate_bps_hz must be >= 0");
  if (avg_power_dbm > peak_power_dbm) fail("power.avg_power_dbm must not exceed power.peak_power_dbm");
  if (seeds.empty()) fail("run.seeds must not be empty");
  if (threads < 1) fail("run.threads must be >= 1");
  parse_scheme(scheme);
  channel_params().validate();
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key()))
        throw ConfigError(path_ + "." + it.key() + ": unknown field");
  }
  bool has(const std::string& k) const { return j_.contains(k); }
  std::string at(const std::string& k) const { return path_ + "." + k; }

  void num(const std::string& k, double& out) {
    if (!take(k)) return;
    if (!j_[k].is_number()) throw ConfigError(at(k) + ": expected a number");
    out = j_[k].get<double>();
  }
  void integer(const std::string& k, int& out) {
    if (!take(k)) return;
    if (!j_[k].is_number_integer()) throw ConfigError(at(k) + ": expected an integer");
    out = j_[k].get<int>();
  }
  void boolean(const std::string& k, bool& out) {
    if (!take(k)) return;
    if (!j_[k].is_boolean()) throw ConfigError(at(k) + ": expected true or false");
    out = j_[k].get<bool>();
  }
  void str(const std::string& k, std::string& out) {
    if (!take(k)) return;
    if (!j_[k].is_string()) throw ConfigError(at(k) + ": expected a string");
    out = j_[k].get<std::string>();
  }
  void point(const std::string& k, Point3& out) {
    if (!take(k)) return;
    const json& v = j_[k];
    if (!v.is_array() || v.size() != 3) throw ConfigError(at(k) + ": expected [x, y, z]");
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number()) throw ConfigError(at(k) + "[" + std::to_string(i) + "]: expected a number");
      out[i] = v[i].get<double>();
    }
  }
  void seeds(const std::string& k, std::vector<std::uint64_t>& out) {
    if (!take(k)) return;
    const json& v = j_[k];
    if (!v.is_array()) throw ConfigError(at(k) + ": expected an array of seeds");
    out.clear();
    for (size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_unsigned() && !(v[i].is_number_integer() && v[i].get<long long>() >= 0))
        throw ConfigError(at(k) + "[" + std::to_string(i) + "]: expected a non-negative integer");
      out.push_back(v[i].get<std::uint64_t>());
    }
  }
  const json* section(const std::string& k) {
    if (!take(k)) return nullptr;
    return &j_[k];
  }

 private:
  bool take(const std::string& k) {
    if (!j_.contains(k)) return false;
    used_.insert(k);
    return true;
  }
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace

ScenarioConfig parse_config(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  ScenarioConfig c;
  {
    Reader root(j, "config");
    if (const json* s = root.section("network")) {
      Reader r(*s, "config.network");
      r.integer("num_noma", c.N);
      r.integer("num_airfl", c.K);
      r.integer("num_elements", c.M);
      r.point("bs_position_m", c.bs_position);
      r.point("ris_position_m", c.ris_position);
      r.point("user_center_m", c.user_center);
      r.num("user_radius_m", c.user_radius_m);
      r.num("user_min_radius_m", c.user_min_radius_m);
    }
    if (const json* s = root.section("channel")) {
      Reader r(*s, "config.channel");
      r.num("ref_path_loss_db", c.ref_path_loss_db);
      r.num("path_loss_exponent", c.path_loss_exponent);
      r.num("rician_factor", c.rician_factor);
      r.num("noise_dbm", c.noise_dbm);
      r.num("element_spacing_ratio", c.element_spacing_ratio);
      r.boolean("blocked", c.blocked);
      r.boolean("block_fading", c.block_fading);
      r.num("normalization_distance_m", c.normalization_distance_m);
    }
    if (const json* s = root.section("power")) {
      Reader r(*s, "config.power");
      r.num("peak_power_dbm", c.peak_power_dbm);
      r.num("avg_power_dbm", c.avg_power_dbm);
    }
    if (const json* s = root.section("constraints")) {
      Reader r(*s, "config.constraints");
      r.num("min_rate_bps_hz", c.min_rate_bps_hz);
      r.num("mse_tolerance", c.mse_tolerance);
      r.boolean("enforce_order", c.enforce_order);
    }
    if (const json* s = root.section("learning")) {
      Reader r(*s, "config.learning");
      r.integer("rounds", c.rounds);
      r.num("step_size", c.rate.lambda);
      r.boolean("diminishing", c.rate.diminishing);
      r.num("Gamma", c.rate.Gamma);
      r.num("nu", c.rate.nu);
      r.integer("samples_per_round", c.task.samples_per_round);
      r.integer("num_train", c.task.num_train);
      r.integer("num_test", c.task.num_test);
      r.num("label_noise", c.task.noise_scale);
      r.boolean("non_iid", c.task.non_iid);
      r.integer("pilot_batches", c.task.pilot_batches);
      r.num("delta_inflation", c.task.delta_inflation);
    }
    if (const json* s = root.section("optimizer")) {
      Reader r(*s, "config.optimizer");
      auto& a = c.alloc;
      r.integer("window_rounds", c.window_rounds);
      std::string mode = "oracle";
      r.str("horizon", mode);
      if (mode == "oracle") c.horizon = HorizonMode::Oracle;
      else if (mode == "causal") c.horizon = HorizonMode::Causal;
      else throw ConfigError(r.at("horizon") + ": expected \"oracle\" or \"causal\"");
      r.num("eps1", a.eps1);
      r.integer("L1", a.L1);
      r.boolean("ratio_test", a.ratio_test);
      r.num("chi0", a.chi0);
      r.num("varrho", a.varrho);
      r.num("eps_p", a.eps_p);
      r.num("eps_c", a.eps_c);
      r.integer("L2", a.L2);
      r.integer("max_penalty_stages", a.max_penalty_stages);
      r.integer("N_rand", a.N_rand);
      r.num("rank_tol", a.rank_tol);
      r.num("noma_weight", a.noma_weight);
      r.integer("L_a", a.L_a);
      r.num("rel_tol", a.rel_tol);
      r.num("sdp_tol", a.sdp.tol);
      r.integer("sdp_max_iter", a.sdp.max_iter);
    }
    if (const json* s = root.section("run")) {
      Reader r(*s, "config.run");
      r.str("scheme", c.scheme);
      r.seeds("seeds", c.seeds);
      r.integer("threads", c.threads);
    }
  }
  c.task.num_users = c.K;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config.run.scheme: ") + e.what());
  }
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string config_to_json(const ScenarioConfig& c) {
  auto pt = [](const Point3& p) { return json::array({p[0], p[1], p[2]}); };
  json j;
  j["network"] = {{"num_noma", c.N},
                  {"num_airfl", c.K},
                  {"num_elements", c.M},
                  {"bs_position_m", pt(c.bs_position)},
                  {"ris_position_m", pt(c.ris_position)},
                  {"user_center_m", pt(c.user_center)},
                  {"user_radius_m", c.user_radius_m},
                  {"user_min_radius_m", c.user_min_radius_m}};
  j["channel"] = {{"ref_path_loss_db", c.ref_path_loss_db},
                  {"path_loss_exponent", c.path_loss_exponent},
                  {"rician_factor", c.rician_factor},
                  {"noise_dbm", c.noise_dbm},
                  {"element_spacing_ratio", c.element_spacing_ratio},
                  {"blocked", c.blocked},
                  {"block_fading", c.block_fading},
                  {"normalization_distance_m", c.normalization_distance_m}};
  j["power"] = {{"peak_power_dbm", c.peak_power_dbm}, {"avg_power_dbm", c.avg_power_dbm}};
  j["constraints"] = {{"min_rate_bps_hz", c.min_rate_bps_hz},
                      {"mse_tolerance", c.mse_tolerance},
                      {"enforce_order", c.enforce_order}};
  j["learning"] = {{"rounds", c.rounds},
                   {"step_size", c.rate.lambda},
                   {"diminishing", c.rate.diminishing},
                   {"Gamma", c.rate.Gamma},
                   {"nu", c.rate.nu},
                   {"samples_per_round", c.task.samples_per_round},
                   {"num_train", c.task.num_train},
                   {"num_test", c.task.num_test},
                   {"label_noise", c.task.noise_scale},
                   {"non_iid", c.task.non_iid},
                   {"pilot_batches", c.task.pilot_batches},
                   {"delta_inflation", c.task.delta_inflation}};
  const auto& a = c.alloc;
  j["optimizer"] = {{"window_rounds", c.window_rounds},
                    {"horizon", c.horizon == HorizonMode::Oracle ? "oracle" : "causal"},
                    {"eps1", a.eps1},
                    {"L1", a.L1},
                    {"ratio_test", a.ratio_test},
                    {"chi0", a.chi0},
                    {"varrho", a.varrho},
                    {"eps_p", a.eps_p},
                    {"eps_c", a.eps_c},
                    {"L2", a.L2},
                    {"max_penalty_stages", a.max_penalty_stages},
                    {"N_rand", a.N_rand},
                    {"rank_tol", a.rank_tol},
                    {"noma_weight", a.noma_weight},
                    {"L_a", a.L_a},
                    {"rel_tol", a.rel_tol},
                    {"sdp_tol", a.sdp.tol},
                    {"sdp_max_iter", a.sdp.max_iter}};
  j["run"] = {{"scheme", c.scheme}, {"seeds", c.seeds}, {"threads", c.threads}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Network and instances

namespace {

constexpr std::uint64_t kTagTopology = 0x70;
constexpr std::uint64_t kTagAoD = 0x71;
constexpr std::uint64_t kTagChannels = 0x72;
constexpr std::uint64_t kTagTrain = 0x73;
constexpr std::uint64_t kTagAlloc = 0x74;

std::uint64_t mix(std::uint64_t seed, std::uint64_t tag) {
  Rng r = substream(seed, tag);
  return r();
}

}  // namespace

Network build_network(const ScenarioConfig& cfg, std::uint64_t seed) {
  const ChannelParams params = cfg.channel_params();
  Network net;
  Rng trng = substream(seed, kTagTopology);
  net.topo = make_topology(cfg.N, cfg.K, cfg.bs_position, cfg.user_center, cfg.user_radius_m,
                           cfg.user_min_radius_m, trng);
  net.topo.ris_position = cfg.ris_position;
  for (int u = 0; u < net.topo.num_users(); ++u)
    net.topo.side_assignment[u] = side_of(net.topo, net.topo.user_positions[u]);
  Rng arng = substream(seed, kTagAoD);
  net.aod = runiform(arng, 0.0, 2.0 * kPi);

  double dref = cfg.normalization_distance_m > 0
                    ? cfg.normalization_distance_m
                    : distance(cfg.bs_position, cfg.user_center);
  net.eta = path_loss(dref, params) * 1e-3;
  const double s = 1.0 / std::sqrt(net.eta);

  FadingOptions fo{cfg.blocked, cfg.block_fading};
  const std::uint64_t cseed = mix(seed, kTagChannels);
  for (int t = 0; t < cfg.rounds; ++t) {
    if (cfg.block_fading && t > 0) {
      ChannelRealization c = net.rounds[0];
      c.round_index = t;
      net.rounds.push_back(c);
      continue;
    }
    ChannelRealization c = sample_realization(net.topo, params, cfg.M, net.aod, fo, cseed, t);
    for (auto& h : c.h) h *= s;
    c.r_bar *= s;
    net.rounds.push_back(std::move(c));
  }

  // Roles follow channel strength in the first round: the N strongest users
  // (direct plus cascade power, ties by index) serve as NOMA users in
  // decreasing order, the rest as AirFL users in index order.
  const int U = cfg.N + cfg.K;
  const auto& c0 = net.rounds[0];
  std::vector<double> key(U);
  for (int u = 0; u < U; ++u) {
    double k = std::norm(c0.h[u]);
    if (cfg.M > 0) k += cascade_vector(c0.r_bar, c0.r[u]).squaredNorm();
    key[u] = k;
  }
  std::vector<int> by_strength(U);
  std::iota(by_strength.begin(), by_strength.end(), 0);
  std::stable_sort(by_strength.begin(), by_strength.end(),
                   [&](int a, int b) { return key[a] > key[b]; });
  net.relabel.assign(by_strength.begin(), by_strength.begin() + cfg.N);
  std::vector<int> rest(by_strength.begin() + cfg.N, by_strength.end());
  std::sort(rest.begin(), rest.end());
  net.relabel.insert(net.relabel.end(), rest.begin(), rest.end());
  auto permute = [&](auto& v) {
    auto old = v;
    for (int u = 0; u < U; ++u) v[u] = old[net.relabel[u]];
  };
  permute(net.topo.user_positions);
  permute(net.topo.side_assignment);
  for (auto& c : net.rounds) {
    permute(c.h);
    permute(c.r);
  }
  return net;
}

BoundConstants bound_constants(const ScenarioConfig& cfg, const LearningTask& task, double sigma2) {
  BoundConstants bc;
  bc.mu = task.mu_strong;
  bc.L = task.L_smooth;
  bc.lambda = cfg.rate.lambda;
  bc.delta_norm_sq = task.delta.squaredNorm();
  bc.Q = task.Q;
  bc.sigma2 = sigma2;
  bc.K = cfg.K;
  return bc;
}

Instance make_instance(const ScenarioConfig& cfg, const Network& net, const LearningTask& task,
                       int t0, int len) {
  Instance inst;
  inst.N = cfg.N;
  inst.K = cfg.K;
  inst.M = cfg.M;
  inst.T = len;
  inst.side = net.topo.side_assignment;
  const int U = inst.U();
  for (int i = 0; i < len; ++i) {
    const auto& c = net.rounds.at(t0 + i);
    inst.h.push_back(c.h);
    std::vector<CVec> R;
    for (int u = 0; u < U; ++u) R.push_back(cfg.M > 0 ? cascade_vector(c.r_bar, c.r[u]) : CVec());
    inst.R.push_back(std::move(R));
  }
  inst.sigma2 = cfg.channel_params().sigma2 / net.eta;
  inst.P_peak = Vec::Constant(U, dbm_to_watt(cfg.peak_power_dbm));
  inst.P_avg = Vec::Constant(U, dbm_to_watt(cfg.avg_power_dbm));
  inst.zeta = std::pow(2.0, cfg.min_rate_bps_hz) - 1.0;
  inst.eps0 = cfg.mse_tolerance;
  inst.bc = bound_constants(cfg, task, inst.sigma2);
  inst.initial_gap = task.gap(Vec::Zero(task.Q));
  inst.enforce_order = cfg.enforce_order;
  inst.validate();
  return inst;
}

// ---------------------------------------------------------------------------
// Runs

RunRecord run_one(const ScenarioConfig& cfg, Scheme scheme, std::uint64_t seed,
                  const std::string& variant) {
  auto clock0 = std::chrono::steady_clock::now();
  cfg.validate();
  RunRecord rec;
  rec.variant = variant;
  rec.scheme = scheme_name(scheme);
  rec.seed = seed;

  TaskOptions to = cfg.task;
  to.num_users = cfg.K;
  to.seed = seed;
  LearningTask task = make_synthetic_task(to);
  Network net = build_network(cfg, seed);
  const int T = cfg.rounds, K = cfg.K, N = cfg.N, U = N + K;
  const double sigma2 = cfg.channel_params().sigma2 / net.eta;

  std::vector<std::vector<double>> eff(T, std::vector<double>(K));
  std::vector<RoundRow> rows(T);
  bool noise_free = false;
  bool first_window = true;

  auto fill = [&](const Instance& inst, const SchemeResult& sr, int slot, int t) {
    Evaluation ev = evaluate(inst, sr.cfg, sr.schedule);
    RoundRow& row = rows[t];
    row.t = t + 1;
    row.sum_rate = ev.sum_rate[slot];
    row.order_ok = ev.order_ok[slot];
    row.qos_ok = ev.qos_ok[slot];
    row.mse_ok = sr.noise_free || ev.mse_ok[slot];
    row.power_ok = ev.peak_ok && ev.avg_ok;
    row.power_w.resize(U);
    for (int u = 0; u < U; ++u) row.power_w[u] = sr.schedule.p[u][slot] * sr.schedule.p[u][slot];
    for (int k = 0; k < K; ++k) eff[t][k] = sr.noise_free ? 1.0 : ev.effective[slot][k];
    noise_free = sr.noise_free;
    if (first_window) {
      rec.upsilon_window = ev.gap.upsilon;
      rec.upsilon_trace = sr.upsilon_trace;
      first_window = false;
    }
  };
  auto alloc_for = [&](int t0) {
    AllocOptions a = cfg.alloc;
    a.seed = mix(seed, kTagAlloc ^ (static_cast<std::uint64_t>(t0) << 16));
    return a;
  };

  if (cfg.horizon == HorizonMode::Oracle) {
    const int W = std::min(cfg.window_rounds, T);
    if (cfg.block_fading) {
      // Identical channels in every round: optimize one window and repeat it.
      Instance inst = make_instance(cfg, net, task, 0, W);
      SchemeResult sr = run_baseline(scheme, inst, alloc_for(0));
      for (int t = 0; t < T; ++t) fill(inst, sr, t % W, t);
    } else {
      for (int t0 = 0; t0 < T; t0 += W) {
        const int len = std::min(W, T - t0);
        Instance inst = make_instance(cfg, net, task, t0, len);
        SchemeResult sr = run_baseline(scheme, inst, alloc_for(t0));
        for (int i = 0; i < len; ++i) fill(inst, sr, i, t0 + i);
      }
    }
  } else {
    // Causal: one round at a time; the average budget left over the
    // remaining rounds becomes this round's average budget.
    std::vector<double> spent(U, 0.0);
    for (int t = 0; t < T; ++t) {
      Instance inst = make_instance(cfg, net, task, t, 1);
      for (int u = 0; u < U; ++u) {
        double left = (T * inst.P_avg[u] - spent[u]) / (T - t);
        inst.P_avg[u] = std::clamp(left, 0.0, inst.P_peak[u]);
      }
      SchemeResult sr = run_baseline(scheme, inst, alloc_for(t));
      fill(inst, sr, 0, t);
      for (int u = 0; u < U; ++u) spent[u] += rows[t].power_w[u];
    }
  }

  const double train_sigma2 = noise_free ? 0.0 : sigma2;
  TrainOptions topt;
  topt.rate = cfg.rate;
  LearningRun run = train(task, eff, train_sigma2, mix(seed, kTagTrain), topt);

  BoundConstants bc = bound_constants(cfg, task, train_sigma2);
  const double gap0 = task.gap(Vec::Zero(task.Q));
  std::vector<double> bound;
  if (cfg.rate.diminishing) {
    double prev = gap0;
    for (int t = 0; t < T; ++t) {
      try {
        prev = diminishing_gap(t + 1, cfg.rate.Gamma, cfg.rate.nu, bc, eff[t], prev).bound;
      } catch (const std::exception&) {
        prev = std::numeric_limits<double>::quiet_NaN();
      }
      bound.push_back(prev);
    }
  } else {
    GapTerms gt = gap_terms(eff, bc, gap0);
    bound = upsilon_partial(gt.lambda3, gt.lambda4, gap0);
  }
  for (int t = 0; t < T; ++t) {
    rows[t].gap = run.gap_trace[t];
    rows[t].mse = run.mse_trace[t];
    rows[t].bound = bound[t];
  }
  rec.rows = std::move(rows);
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
  return rec;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char d) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == d) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string run_csv(const RunRecord& r) {
  std::string s = "t,gap,bound,mse,sum_rate";
  const int U = r.rows.empty() ? 0 : static_cast<int>(r.rows[0].power_w.size());
  for (int u = 0; u < U; ++u) s += ",power_w_" + std::to_string(u);
  s += ",order_ok,qos_ok,mse_ok,power_ok\n";
  for (const auto& row : r.rows) {
    s += std::to_string(row.t) + "," + fmt(row.gap) + "," + fmt(row.bound) + "," + fmt(row.mse) +
         "," + fmt(row.sum_rate);
    for (double p : row.power_w) s += "," + fmt(p);
    s += std::string(",") + (row.order_ok ? "1" : "0") + "," + (row.qos_ok ? "1" : "0") + "," +
         (row.mse_ok ? "1" : "0") + "," + (row.power_ok ? "1" : "0") + "\n";
  }
  return s;
}

std::vector<RoundRow> read_run_csv(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error(p.string() + ": cannot open");
  std::string line;
  std::getline(in, line);
  auto head = split(line, ',');
  const int U = static_cast<int>(head.size()) - 9;
  if (U < 0) throw std::runtime_error(p.string() + ": bad header");
  std::vector<RoundRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != head.size()) throw std::runtime_error(p.string() + ": ragged row");
    RoundRow r;
    r.t = std::stoi(f[0]);
    r.gap = std::stod(f[1]);
    r.bound = std::stod(f[2]);
    r.mse = std::stod(f[3]);
    r.sum_rate = std::stod(f[4]);
    for (int u = 0; u < U; ++u) r.power_w.push_back(std::stod(f[5 + u]));
    r.order_ok = f[5 + U] == "1";
    r.qos_ok = f[6 + U] == "1";
    r.mse_ok = f[7 + U] == "1";
    r.power_ok = f[8 + U] == "1";
    rows.push_back(r);
  }
  return rows;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  double h = (static_cast<double>(v.size()) - 1.0) * q;
  size_t lo = static_cast<size_t>(std::floor(h));
  size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

namespace {

// Runs grouped by (variant, scheme) in order of first appearance.
std::vector<std::vector<const RunRecord*>> groups_of(const std::vector<RunRecord>& runs) {
  std::vector<std::pair<std::string, std::string>> keys;
  std::vector<std::vector<const RunRecord*>> out;
  for (const auto& r : runs) {
    auto key = std::make_pair(r.variant, r.scheme);
    auto it = std::find(keys.begin(), keys.end(), key);
    if (it == keys.end()) {
      keys.push_back(key);
      out.emplace_back();
      it = keys.end() - 1;
    }
    out[it - keys.begin()].push_back(&r);
  }
  return out;
}

}  // namespace

std::string summary_csv(const std::vector<RunRecord>& runs) {
  std::string s =
      "variant,scheme,t,runs,gap_median,gap_q25,gap_q75,bound_median,mse_median,sum_rate_median,"
      "sum_rate_q25,sum_rate_q75\n";
  for (const auto& g : groups_of(runs)) {
    size_t T = g[0]->rows.size();
    for (const auto* r : g) T = std::min(T, r->rows.size());
    for (size_t t = 0; t < T; ++t) {
      std::vector<double> gap, bound, mse, rate;
      for (const auto* r : g) {
        gap.push_back(r->rows[t].gap);
        bound.push_back(r->rows[t].bound);
        mse.push_back(r->rows[t].mse);
        rate.push_back(r->rows[t].sum_rate);
      }
      s += g[0]->variant + "," + g[0]->scheme + "," + std::to_string(t + 1) + "," +
           std::to_string(g.size()) + "," + fmt(quantile(gap, 0.5)) + "," +
           fmt(quantile(gap, 0.25)) + "," + fmt(quantile(gap, 0.75)) + "," +
           fmt(quantile(bound, 0.5)) + "," + fmt(quantile(mse, 0.5)) + "," +
           fmt(quantile(rate, 0.5)) + "," + fmt(quantile(rate, 0.25)) + "," +
           fmt(quantile(rate, 0.75)) + "\n";
    }
  }
  return s;
}

std::vector<GroupStats> group_stats(const std::vector<RunRecord>& runs) {
  std::vector<GroupStats> out;
  for (const auto& g : groups_of(runs)) {
    GroupStats st;
    st.variant = g[0]->variant;
    st.scheme = g[0]->scheme;
    st.runs = static_cast<int>(g.size());
    std::vector<double> fin, rate;
    for (const auto* r : g) {
      fin.push_back(r->rows.back().gap);
      double s = 0.0;
      for (const auto& row : r->rows) s += row.sum_rate;
      rate.push_back(s / r->rows.size());
    }
    st.final_gap_median = quantile(fin, 0.5);
    st.final_gap_q25 = quantile(fin, 0.25);
    st.final_gap_q75 = quantile(fin, 0.75);
    st.mean_rate_median = quantile(rate, 0.5);
    st.mean_rate_q25 = quantile(rate, 0.25);
    st.mean_rate_q75 = quantile(rate, 0.75);
    out.push_back(st);
  }
  return out;
}

std::string groups_csv(const std::vector<GroupStats>& gs) {
  std::string s =
      "variant,scheme,runs,final_gap_median,final_gap_q25,final_gap_q75,mean_sum_rate_median,"
      "mean_sum_rate_q25,mean_sum_rate_q75\n";
  for (const auto& g : gs)
    s += g.variant + "," + g.scheme + "," + std::to_string(g.runs) + "," + fmt(g.final_gap_median) +
         "," + fmt(g.final_gap_q25) + "," + fmt(g.final_gap_q75) + "," + fmt(g.mean_rate_median) +
         "," + fmt(g.mean_rate_q25) + "," + fmt(g.mean_rate_q75) + "\n";
  return s;
}

void write_atomic(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::filesystem::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot write");
    out << content;
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, p);
}

GridOutput run_grid(const std::vector<GridCell>& cells, const std::filesystem::path& out_dir,
                    int threads) {
  GridOutput out;
  out.runs.resize(cells.size());
  std::atomic<size_t> next{0};
  std::mutex err_mu;
  std::string first_error;
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const auto& c = cells[i];
      try {
        out.runs[i] = run_one(c.cfg, c.scheme, c.seed, c.variant);
        if (!out_dir.empty()) {
          std::string stem = c.variant + "__" + scheme_name(c.scheme) + "__seed" + std::to_string(c.seed);
          write_atomic(out_dir / (stem + ".csv"), run_csv(out.runs[i]));
          json meta = {{"variant", c.variant},
                       {"scheme", scheme_name(c.scheme)},
                       {"seed", c.seed},
                       {"rows", out.runs[i].rows.size()},
                       {"upsilon_window", out.runs[i].upsilon_window},
                       {"wall_seconds", out.runs[i].wall_seconds}};
          write_atomic(out_dir / (stem + ".meta.json"), meta.dump(2) + "\n");
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (first_error.empty())
          first_error = c.variant + "/" + scheme_name(c.scheme) + "/seed " + std::to_string(c.seed) +
                        ": " + e.what();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(cells.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (!first_error.empty()) throw std::runtime_error(first_error);
  out.groups = group_stats(out.runs);
  if (!out_dir.empty()) {
    write_atomic(out_dir / "summary.csv", summary_csv(out.runs));
    write_atomic(out_dir / "groups.csv", groups_csv(out.groups));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Figure grids

const std::vector<std::string>& figure_names() {
  static const std::vector<std::string> names{"gap_schemes", "gap_vs_M", "obstacle",
                                              "rate_vs_location", "rate_vs_M"};
  return names;
}

std::vector<GridCell> figure_cells(const std::string& name, const ScenarioConfig& base) {
  std::vector<GridCell> cells;
  auto add = [&](const std::string& variant, const ScenarioConfig& c, Scheme s) {
    for (auto seed : c.seeds) cells.push_back({variant, c, s, seed});
  };
  const std::vector<Scheme> ris_schemes{Scheme::Proposed, Scheme::ConventionalRis,
                                        Scheme::RandomStarRis};
  if (name == "gap_schemes") {
    for (Scheme s : all_schemes()) add("base", base, s);
  } else if (name == "gap_vs_M") {
    for (int M : {0, 10, 20, 30}) {
      ScenarioConfig c = base;
      c.M = M;
      add("M" + std::to_string(M), c, Scheme::Proposed);
    }
  } else if (name == "obstacle") {
    for (bool b : {false, true}) {
      ScenarioConfig c = base;
      c.blocked = b;
      add(b ? "blocked" : "clear", c, Scheme::Proposed);
    }
  } else if (name == "rate_vs_location") {
    for (double y : {40.0, 50.0, 60.0}) {
      ScenarioConfig c = base;
      c.ris_position[1] = y;
      for (Scheme s : ris_schemes) add("yRIS" + std::to_string(static_cast<int>(y)), c, s);
    }
  } else if (name == "rate_vs_M") {
    for (int M : {10, 15, 20, 25, 30}) {
      ScenarioConfig c = base;
      c.M = M;
      for (Scheme s : ris_schemes) add("M" + std::to_string(M), c, s);
    }
  } else {
    std::string valid;
    for (const auto& n : figure_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown figure '" + name + "'; valid: " + valid);
  }
  return cells;
}

}  // namespace starfl
