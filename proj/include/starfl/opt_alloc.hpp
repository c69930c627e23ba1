#pragma once

#include <string>

#include "starfl/convergence.hpp"
#include "starfl/convex_kernels.hpp"
#include "starfl/ssp_signal.hpp"
#include "starfl/star_ris.hpp"

namespace starfl {

// One optimization window of T rounds with channels known in advance. All
// powers are in watts; channels are divided by sqrt(eta) (receive
// normalization), so |h|^2 p^2 and sigma2 are in units of eta.
struct Instance {
  int N = 0, K = 0, M = 0, T = 1;
  std::vector<Side> side;             // per user, NOMA first
  std::vector<std::vector<cd>> h;     // [t][u]
  std::vector<std::vector<CVec>> R;   // [t][u] cascade vectors diag(r_bar^H) r_u
  double sigma2 = 0.0;
  Vec P_peak, P_avg;                  // per user
  double zeta = 1.0;                  // 2^Rmin - 1
  double eps0 = 0.01;
  BoundConstants bc;                  // bc.sigma2 equals sigma2
  double initial_gap = 1.0;
  bool enforce_order = true;

  int U() const { return N + K; }
  void validate() const;
};

struct AllocOptions {
  // Power step (trust-region SCA)
  double eps1 = 1e-3;
  int L1 = 30;
  bool ratio_test = false;
  // Configuration step (penalty SDR)
  double chi0 = 1e-2;
  double varrho = 10.0;
  double eps_p = 1e-4;
  double eps_c = 1e-3;
  int L2 = 30;
  int max_penalty_stages = 8;
  int N_rand = 200;
  double rank_tol = 1e-4;
  // Weight of the NOMA-gain tie-break term in the configuration step,
  // relative to the magnitude of the gap objective's linear terms.
  double noma_weight = 1.0;
  // Score rounded configurations after rescaling the AirFL amplitudes back to
  // the effective gains they had before the configuration step.
  bool restore_gains = true;
  // Alternating loop
  int L_a = 10;
  double rel_tol = 1e-4;
  SdpOptions sdp{1e-6, 1000, 1.0, 1.6};
  QcqpOptions qcqp;
  std::uint64_t seed = 1;
};

using RoundConfigs = std::vector<StarRisConfig>;

struct Evaluation {
  std::vector<std::vector<cd>> hbar;          // [t][u]
  std::vector<std::vector<double>> gains;      // [t][u] |hbar|^2
  std::vector<std::vector<double>> effective;  // [t][k] |hbar_k| p_k
  GapTerms gap;
  std::vector<double> upsilon_partial;
  std::vector<double> sum_rate;
  std::vector<double> mse;
  std::vector<char> order_ok, qos_ok, mse_ok;
  bool peak_ok = true, avg_ok = true;
  bool lambda3_ok = true;  // every Lambda3 in [0, 1)

  bool feasible(bool with_order) const;
};

std::vector<cd> combined_channels(const Instance& inst, const StarRisConfig& cfg, int t);

Evaluation evaluate(const Instance& inst, const RoundConfigs& cfg, const PowerSchedule& ps);

PowerSchedule equal_power(const Instance& inst);
RoundConfigs replicate(const StarRisConfig& c, int T);

struct PowerResult {
  PowerSchedule schedule;
  double upsilon = 0.0;
  std::vector<double> upsilon_iter;  // true gap after each accepted iterate
  std::vector<double> radius;
  int iterations = 0;
  bool feasible = false;
  std::string binding;  // set when infeasible
};

// Trust-region SCA on the AirFL powers followed by a NOMA
// power pass that maximizes the received NOMA power under the QoS chain.
PowerResult sca_power(const Instance& inst, const RoundConfigs& cfg, const PowerSchedule& start,
                      const AllocOptions& opt);

// Best NOMA powers for fixed AirFL powers and configuration. Returns false
// when the QoS chain cannot be met.
bool noma_power_pass(const Instance& inst, const RoundConfigs& cfg, PowerSchedule& ps,
                     const AllocOptions& opt);

enum class RisMode { Full, FixedBeta, FixedPhase };

struct RisResult {
  RoundConfigs cfg;
  PowerSchedule schedule;  // input powers, AirFL part rescaled when restore_gains
  bool ok = false;
  double upsilon = 0.0;
  double violation = 0.0;  // max beta (1 - beta) before rounding
  std::vector<double> eig_ratio;  // per round, worst side
  int randomized_rounds = 0;
  int sdp_solves = 0;
  int penalty_stages = 0;
  bool order_dropped = false;
  std::vector<Vec> relaxed_beta;  // per round
  std::string message;
};

struct RisModeSpec {
  RisMode mode = RisMode::Full;
  Vec fixed_beta;         // FixedBeta
  Vec fixed_theta, fixed_phi;  // FixedPhase
};

// Penalty-based SDR with Gaussian randomization.
RisResult penalty_sdr_ris(const Instance& inst, const PowerSchedule& ps, const RoundConfigs& start,
                          const AllocOptions& opt, const RisModeSpec& spec = {});

struct AltResult {
  PowerSchedule schedule;
  RoundConfigs cfg;
  std::vector<double> upsilon_trace;  // after each outer round
  double upsilon_start = 0.0;         // at the (possibly infeasible) initial point
  int outer_rounds = 0;
  int rejected_ris = 0;
  int rejected_power = 0;
  bool order_dropped = false;
};

AltResult alternate(const Instance& inst, const RoundConfigs& cfg0, const PowerSchedule& ps0,
                    const AllocOptions& opt, const RisModeSpec& spec = {});

enum class Scheme { Proposed, NoiseFree, ConventionalRis, RandomStarRis, EqualPower };

const char* scheme_name(Scheme s);
Scheme parse_scheme(const std::string& name);
std::vector<Scheme> all_schemes();

struct SchemeResult {
  PowerSchedule schedule;
  RoundConfigs cfg;
  std::vector<double> upsilon_trace;
  bool noise_free = false;  // train with aligned unit gains and zero noise
};

SchemeResult run_baseline(Scheme kind, const Instance& inst, const AllocOptions& opt);

}  // namespace starfl
