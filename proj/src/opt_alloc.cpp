#include "starfl/opt_alloc.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace starfl {

namespace {

constexpr double kFeasTol = 1e-7;
constexpr double kInf = std::numeric_limits<double>::infinity();
// Relative weight of one bps/Hz of NOMA rate against the gap objective when
// scoring rounded configurations.
constexpr double kTieBreak = 1e-9;

int side_index(Side s) { return s == Side::Reflect ? 0 : 1; }

}  // namespace

void Instance::validate() const {
  if (N < 0 || K < 1 || M < 0 || T < 1) throw std::invalid_argument("Instance: bad sizes");
  if (static_cast<int>(side.size()) != U()) throw std::invalid_argument("Instance: side size");
  if (static_cast<int>(h.size()) != T || static_cast<int>(R.size()) != T)
    throw std::invalid_argument("Instance: channel rounds");
  for (int t = 0; t < T; ++t) {
    if (static_cast<int>(h[t].size()) != U() || static_cast<int>(R[t].size()) != U())
      throw std::invalid_argument("Instance: channel users");
    for (const auto& r : R[t])
      if (r.size() != M) throw std::invalid_argument("Instance: cascade length");
  }
  if (P_peak.size() != U() || P_avg.size() != U())
    throw std::invalid_argument("Instance: budgets");
  if (bc.K != K) throw std::invalid_argument("Instance: bound constants K");
}

bool Evaluation::feasible(bool with_order) const {
  for (size_t t = 0; t < qos_ok.size(); ++t) {
    if (!qos_ok[t] || !mse_ok[t]) return false;
    if (with_order && !order_ok[t]) return false;
  }
  return peak_ok && avg_ok;
}

std::vector<cd> combined_channels(const Instance& inst, const StarRisConfig& cfg, int t) {
  std::vector<cd> out(inst.U());
  if (inst.M == 0) {
    for (int u = 0; u < inst.U(); ++u) out[u] = inst.h[t][u];
    return out;
  }
  CVec q[2] = {config_vector(cfg, Side::Reflect), config_vector(cfg, Side::Transmit)};
  for (int u = 0; u < inst.U(); ++u)
    out[u] = inst.h[t][u] + q[side_index(inst.side[u])].dot(inst.R[t][u]);
  return out;
}

RoundConfigs replicate(const StarRisConfig& c, int T) { return RoundConfigs(T, c); }

PowerSchedule equal_power(const Instance& inst) {
  PowerSchedule ps;
  ps.P_peak.assign(inst.P_peak.data(), inst.P_peak.data() + inst.U());
  ps.P_avg.assign(inst.P_avg.data(), inst.P_avg.data() + inst.U());
  ps.p.assign(inst.U(), std::vector<double>(inst.T));
  for (int u = 0; u < inst.U(); ++u)
    for (int t = 0; t < inst.T; ++t) ps.p[u][t] = std::sqrt(inst.P_avg[u]);
  return ps;
}

Evaluation evaluate(const Instance& inst, const RoundConfigs& cfg, const PowerSchedule& ps) {
  const int T = inst.T, N = inst.N, K = inst.K, U = inst.U();
  if (static_cast<int>(cfg.size()) != T) throw std::invalid_argument("evaluate: one config per round");
  Evaluation ev;
  ev.hbar.resize(T);
  ev.gains.assign(T, std::vector<double>(U));
  ev.effective.assign(T, std::vector<double>(K));
  for (int t = 0; t < T; ++t) {
    ev.hbar[t] = combined_channels(inst, cfg[t], t);
    std::vector<double> pw(U);
    for (int u = 0; u < U; ++u) {
      ev.gains[t][u] = std::norm(ev.hbar[t][u]);
      pw[u] = ps.p[u][t];
    }
    for (int k = 0; k < K; ++k) ev.effective[t][k] = std::abs(ev.hbar[t][N + k]) * pw[N + k];
    ev.order_ok.push_back(decoding_order_ok(ev.gains[t], N, K));
    bool qos = true;
    double rate = 0.0;
    for (int n = 0; n < N; ++n) {
      double g = sinr(n, ev.gains[t], pw, N, inst.sigma2);
      if (g < inst.zeta * (1.0 - kFeasTol)) qos = false;
      rate += std::log2(1.0 + g);
    }
    ev.qos_ok.push_back(qos);
    ev.sum_rate.push_back(rate);
    double mse = aggregation_mse(ev.effective[t], inst.sigma2, K);
    ev.mse.push_back(mse);
    ev.mse_ok.push_back(mse <= inst.eps0 * (1.0 + kFeasTol));
  }
  ev.peak_ok = ps.peak_ok(kFeasTol);
  ev.avg_ok = ps.average_ok(kFeasTol);
  ev.gap = gap_terms(ev.effective, inst.bc, inst.initial_gap);
  ev.upsilon_partial = upsilon_partial(ev.gap.lambda3, ev.gap.lambda4, inst.initial_gap);
  for (double l : ev.gap.lambda3)
    if (!(l >= 0.0 && l < 1.0)) ev.lambda3_ok = false;
  return ev;
}

namespace {

// Normalized violation used to rank infeasible iterates.
double violation(const Instance& inst, const Evaluation& ev, const PowerSchedule& ps, bool order) {
  double v = 0.0;
  const int N = inst.N;
  for (int t = 0; t < inst.T; ++t) {
    std::vector<double> pw(inst.U());
    for (int u = 0; u < inst.U(); ++u) pw[u] = ps.p[u][t];
    for (int n = 0; n < N; ++n) {
      double g = sinr(n, ev.gains[t], pw, N, inst.sigma2);
      v = std::max(v, (inst.zeta - g) / inst.zeta);
    }
    v = std::max(v, (ev.mse[t] - inst.eps0) / inst.eps0);
    if (order) {
      auto bad = decoding_order_violation(ev.gains[t], N, inst.K);
      if (bad.first >= 0) {
        double a = ev.gains[t][bad.first], b = ev.gains[t][bad.second];
        v = std::max(v, (b - a) / std::max(b, 1e-300));
      }
    }
  }
  return std::max(v, 0.0);
}

struct Merit {
  double viol;
  double ups;
};

// Lexicographic comparison with a small tolerance on the violation.
bool no_worse(const Merit& a, const Merit& b) {
  const double tol = 1e-6;
  if (a.viol <= tol && b.viol <= tol) return a.ups <= b.ups + 1e-12 * std::abs(b.ups);
  if (a.viol <= tol) return true;
  if (b.viol <= tol) return false;
  return a.viol <= b.viol;
}

Merit merit_of(const Instance& inst, const RoundConfigs& cfg, const PowerSchedule& ps, bool order) {
  Evaluation ev = evaluate(inst, cfg, ps);
  return {violation(inst, ev, ps, order), ev.gap.upsilon};
}

}  // namespace

bool noma_power_pass(const Instance& inst, const RoundConfigs& cfg, PowerSchedule& ps,
                     const AllocOptions& opt) {
  const int N = inst.N, T = inst.T, K = inst.K;
  if (N == 0) return true;
  Evaluation ev = evaluate(inst, cfg, ps);
  // The NOMA sum rate of a round telescopes to log2(1 + S_t / (A_t + sigma2))
  // with S_t the received NOMA power and A_t the AirFL power, so the pass
  // maximizes the worst round's S_t / (A_t + sigma2).
  const int D = N * T + 1;
  const int tau = N * T;
  auto var = [&](int t, int n) { return t * N + n; };
  QcqpProblem prob;
  prob.objective = Vec::Zero(D);
  prob.objective[tau] = -1.0;
  prob.lo = Vec::Zero(D);
  prob.hi = Vec(D);
  for (int t = 0; t < T; ++t)
    for (int n = 0; n < N; ++n) prob.hi[var(t, n)] = inst.P_peak[n];
  prob.lo[tau] = 0.0;
  prob.hi[tau] = kInf;
  for (int t = 0; t < T; ++t) {
    double airfl = 0.0;
    for (int k = 0; k < K; ++k) airfl += ev.gains[t][N + k] * ps.p[N + k][t] * ps.p[N + k][t];
    for (int n = 0; n < N; ++n) {
      QuadConstraint q;
      q.b = Vec::Zero(D);
      q.b[var(t, n)] = -ev.gains[t][n];
      for (int m = n + 1; m < N; ++m) q.b[var(t, m)] = inst.zeta * ev.gains[t][m];
      q.c = inst.zeta * (airfl + inst.sigma2);
      prob.quad_constraints.push_back(q);
    }
    QuadConstraint q;
    q.b = Vec::Zero(D);
    for (int n = 0; n < N; ++n) q.b[var(t, n)] = -ev.gains[t][n] / (airfl + inst.sigma2);
    q.b[tau] = 1.0;
    prob.quad_constraints.push_back(q);
  }
  for (int n = 0; n < N; ++n) {
    QuadConstraint q;
    q.b = Vec::Zero(D);
    for (int t = 0; t < T; ++t) q.b[var(t, n)] = 1.0;
    q.c = -T * inst.P_avg[n];
    prob.quad_constraints.push_back(q);
  }
  QcqpResult r = solve_qcqp(prob, opt.qcqp);
  if (r.status == SolveStatus::Infeasible) return false;
  for (int t = 0; t < T; ++t)
    for (int n = 0; n < N; ++n) ps.p[n][t] = std::sqrt(std::max(r.x[var(t, n)], 0.0));
  return true;
}

namespace {

// Best-effort schedule when the power subproblem has no feasible point:
// AirFL users invert their channels up to the peak budget.
PowerSchedule inversion_schedule(const Instance& inst, const Evaluation& ev, const PowerSchedule& base) {
  PowerSchedule ps = base;
  for (int t = 0; t < inst.T; ++t)
    for (int k = 0; k < inst.K; ++k) {
      const int u = inst.N + k;
      double a = std::abs(ev.hbar[t][u]);
      double p = a > 0 ? 1.0 / a : kInf;
      ps.p[u][t] = std::min(p, std::sqrt(std::min(inst.P_peak[u], inst.P_avg[u])));
    }
  return ps;
}

}  // namespace

PowerResult sca_power(const Instance& inst, const RoundConfigs& cfg, const PowerSchedule& start,
                      const AllocOptions& opt) {
  inst.validate();
  const int T = inst.T, N = inst.N, K = inst.K, U = inst.U();
  Evaluation ev0 = evaluate(inst, cfg, start);
  std::vector<std::vector<double>> amp(T, std::vector<double>(U));
  for (int t = 0; t < T; ++t)
    for (int u = 0; u < U; ++u) amp[t][u] = std::abs(ev0.hbar[t][u]);

  const int per = 2 * U + K;
  const int D = T * per + 1;
  auto pv = [&](int t, int u) { return t * per + u; };
  auto rv = [&](int t, int u) { return t * per + U + u; };
  auto ev_ = [&](int t, int k) { return t * per + 2 * U + k; };
  const int tau = T * per;

  // Constraints that do not depend on the linearization point.
  std::vector<QuadConstraint> fixed_cons;
  auto affine = [&]() {
    QuadConstraint q;
    q.b = Vec::Zero(D);
    return q;
  };
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u < U; ++u) {
      // rho >= p^2
      QuadConstraint q = affine();
      q.A = Mat::Zero(D, D);
      q.A(pv(t, u), pv(t, u)) = 1.0;
      q.b[rv(t, u)] = -1.0;
      fixed_cons.push_back(q);
    }
    for (int k = 0; k < K; ++k) {
      // eta >= (a p - 1)^2
      const int u = N + k;
      const double a = amp[t][u];
      QuadConstraint q = affine();
      q.A = Mat::Zero(D, D);
      q.A(pv(t, u), pv(t, u)) = a * a;
      q.b[pv(t, u)] = -2.0 * a;
      q.b[ev_(t, k)] = -1.0;
      q.c = 1.0;
      fixed_cons.push_back(q);
    }
    for (int n = 0; n < N; ++n) {
      // zeta (sum_{u>n} g_u rho_u + sigma2) - g_n rho_n <= 0
      QuadConstraint q = affine();
      q.b[rv(t, n)] = -amp[t][n] * amp[t][n];
      for (int u = n + 1; u < U; ++u) q.b[rv(t, u)] = inst.zeta * amp[t][u] * amp[t][u];
      q.c = inst.zeta * inst.sigma2;
      fixed_cons.push_back(q);
    }
    QuadConstraint mse = affine();
    for (int k = 0; k < K; ++k) mse.b[ev_(t, k)] = 1.0;
    mse.c = inst.sigma2 - inst.eps0 * K * K;
    fixed_cons.push_back(mse);
  }
  for (int u = 0; u < U; ++u) {
    QuadConstraint q = affine();
    for (int t = 0; t < T; ++t) q.b[rv(t, u)] = 1.0;
    q.c = -T * inst.P_avg[u];
    fixed_cons.push_back(q);
  }

  auto airfl_powers = [&](const PowerSchedule& ps) {
    std::vector<std::vector<double>> p(T, std::vector<double>(K));
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < K; ++k) p[t][k] = ps.p[N + k][t];
    return p;
  };
  std::vector<std::vector<double>> gains_k(T, std::vector<double>(K));
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < K; ++k) gains_k[t][k] = amp[t][N + k];

  PowerResult res;
  PowerSchedule cur = start;
  bool have_best = false;
  PowerSchedule best = start;
  double best_ups = kInf;
  {
    Evaluation e = evaluate(inst, cfg, start);
    if (e.feasible(false)) {
      have_best = true;
      best_ups = e.gap.upsilon;
    }
  }

  double r = 1.0;
  for (int it = 0; it < opt.L1; ++it) {
    auto p_air = airfl_powers(cur);
    GapTerms gt = gap_terms([&] {
      std::vector<std::vector<double>> eff(T, std::vector<double>(K));
      for (int t = 0; t < T; ++t)
        for (int k = 0; k < K; ++k) eff[t][k] = gains_k[t][k] * p_air[t][k];
      return eff;
    }(), inst.bc, inst.initial_gap);

    QcqpProblem prob;
    prob.objective = Vec::Zero(D);
    prob.objective[tau] = 1.0;
    prob.quad_constraints = fixed_cons;
    QuadConstraint lin = affine();
    double offset = gt.upsilon;
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < K; ++k) {
        double g = grad_upsilon_power(gains_k, p_air, inst.bc, inst.initial_gap, t, k);
        lin.b[pv(t, N + k)] = g;
        offset -= g * p_air[t][k];
      }
    lin.b[tau] = -1.0;
    lin.c = offset;
    prob.quad_constraints.push_back(lin);

    prob.lo = Vec::Constant(D, -kInf);
    prob.hi = Vec::Constant(D, kInf);
    for (int t = 0; t < T; ++t) {
      for (int u = 0; u < U; ++u) {
        const double pl = cur.p[u][t];
        const double pmax = std::sqrt(inst.P_peak[u]);
        prob.lo[pv(t, u)] = std::max(0.0, pl - r);
        prob.hi[pv(t, u)] = std::min(pmax, pl + r);
        if (prob.lo[pv(t, u)] > prob.hi[pv(t, u)]) prob.lo[pv(t, u)] = prob.hi[pv(t, u)];
        prob.lo[rv(t, u)] = 0.0;
        prob.hi[rv(t, u)] = inst.P_peak[u];
      }
      for (int k = 0; k < K; ++k) {
        prob.lo[ev_(t, k)] = 0.0;
        prob.hi[ev_(t, k)] = inst.eps0 * K * K;
      }
    }
    Vec x0 = Vec::Zero(D);
    for (int t = 0; t < T; ++t) {
      for (int u = 0; u < U; ++u) {
        x0[pv(t, u)] = std::clamp(cur.p[u][t], prob.lo[pv(t, u)], prob.hi[pv(t, u)]);
        x0[rv(t, u)] = std::min(x0[pv(t, u)] * x0[pv(t, u)] * 1.01 + 1e-12, inst.P_peak[u]);
      }
      for (int k = 0; k < K; ++k) {
        double d = amp[t][N + k] * x0[pv(t, N + k)] - 1.0;
        x0[ev_(t, k)] = std::min(d * d * 1.01 + 1e-12, inst.eps0 * K * K);
      }
    }
    x0[tau] = gt.upsilon + 1.0;

    QcqpResult sol = solve_qcqp(prob, opt.qcqp, x0);
    if (sol.status == SolveStatus::Infeasible) {
      if (it == 0 && !have_best) {
        // Identify which family blocks feasibility.
        auto feasible_without = [&](bool drop_qos, bool drop_mse) {
          QcqpProblem p2 = prob;
          p2.quad_constraints.clear();
          for (const auto& q : prob.quad_constraints) {
            bool is_qos = false, is_mse = false;
            if (!q.A.size()) {
              bool touches_rho = false, touches_eta = false;
              for (int t = 0; t < T; ++t) {
                for (int u = 0; u < U; ++u) touches_rho |= q.b[rv(t, u)] < 0;
                for (int k = 0; k < K; ++k) touches_eta |= q.b[ev_(t, k)] > 0;
              }
              is_qos = touches_rho;
              is_mse = touches_eta && q.b[tau] == 0.0;
            }
            if ((drop_qos && is_qos) || (drop_mse && is_mse)) continue;
            p2.quad_constraints.push_back(q);
          }
          if (drop_mse)
            for (int t = 0; t < T; ++t)
              for (int k = 0; k < K; ++k) p2.hi[ev_(t, k)] = kInf;
          return solve_qcqp(p2, opt.qcqp).status != SolveStatus::Infeasible;
        };
        if (feasible_without(true, false)) res.binding = "qos";
        else if (feasible_without(false, true)) res.binding = "mse";
        else res.binding = "qos+mse";
        res.feasible = false;
        res.schedule = inversion_schedule(inst, ev0, start);
        noma_power_pass(inst, cfg, res.schedule, opt);
        res.upsilon = evaluate(inst, cfg, res.schedule).gap.upsilon;
        return res;
      }
      break;
    }
    PowerSchedule cand = cur;
    for (int t = 0; t < T; ++t) {
      for (int k = 0; k < K; ++k) cand.p[N + k][t] = std::max(sol.x[pv(t, N + k)], 0.0);
      for (int n = 0; n < N; ++n) cand.p[n][t] = std::sqrt(std::max(sol.x[rv(t, n)], 0.0));
    }
    Evaluation ec = evaluate(inst, cfg, cand);
    bool feas = ec.feasible(false);
    bool accept = true;
    if (opt.ratio_test) {
      Evaluation ecur = evaluate(inst, cfg, cur);
      accept = feas && (!ecur.feasible(false) || ec.gap.upsilon <= ecur.gap.upsilon);
    }
    if (accept) cur = cand;
    if (feas && ec.gap.upsilon < best_ups) {
      best = cand;
      best_ups = ec.gap.upsilon;
      have_best = true;
    }
    res.upsilon_iter.push_back(have_best ? best_ups : ec.gap.upsilon);
    r /= 2.0;
    res.radius.push_back(r);
    res.iterations = it + 1;
    if (r <= opt.eps1) break;
  }
  if (!have_best) {
    res.feasible = false;
    res.binding = "iterates";
    res.schedule = cur;
    res.upsilon = evaluate(inst, cfg, cur).gap.upsilon;
    return res;
  }
  res.schedule = best;
  noma_power_pass(inst, cfg, res.schedule, opt);
  Evaluation ef = evaluate(inst, cfg, res.schedule);
  res.feasible = ef.feasible(false);
  res.upsilon = ef.gap.upsilon;
  return res;
}

// ---------------------------------------------------------------------------
// Configuration step: penalty-based SDR

namespace {

struct RoundLift {
  // Per AirFL user and per user respectively.
  std::vector<CMat> R_check, R_bar, R_hat;
  std::vector<double> hcheck2, hring2, hhat2;
  std::vector<CMat> R_tilde;
  std::vector<double> h2;
};

RoundLift lift_round(const Instance& inst, const PowerSchedule& ps, const std::vector<cd>& hbar, int t) {
  RoundLift L;
  const auto& bc = inst.bc;
  for (int k = 0; k < inst.K; ++k) {
    const int u = inst.N + k;
    double mag = ps.p[u][t];
    cd pc = std::abs(hbar[u]) > 0 ? mag * std::conj(hbar[u]) / std::abs(hbar[u]) : cd(mag, 0.0);
    GapLift g = lift_gap_terms(inst.R[t][u], pc, inst.h[t][u], bc.mu, bc.L, bc.lambda, bc.K);
    MseLift m = lift_mse(inst.R[t][u], pc, inst.h[t][u]);
    L.R_check.push_back(g.R_check);
    L.R_bar.push_back(g.R_bar);
    L.R_hat.push_back(m.R_hat);
    L.hcheck2.push_back(std::norm(g.h_check));
    L.hring2.push_back(std::norm(g.h_ring));
    L.hhat2.push_back(std::norm(m.h_hat));
  }
  for (int u = 0; u < inst.U(); ++u) {
    L.R_tilde.push_back(lift_block(inst.R[t][u], inst.h[t][u]));
    L.h2.push_back(std::norm(inst.h[t][u]));
  }
  return L;
}

double tr(const CMat& A, const CMat& Q) { return trace_product(A, Q).real(); }

// Lambda3, Lambda4 of round t in trace form at lifted blocks Q.
std::pair<double, double> lambdas_trace(const Instance& inst, const RoundLift& L, const CMat* Q) {
  const auto& c = inst.bc;
  const double K2 = static_cast<double>(c.K) * c.K;
  const double b = c.mu * c.L * c.lambda * c.lambda / K2;
  const double e = c.L * c.lambda * c.lambda * c.delta_norm_sq / (2.0 * K2);
  const double cst = c.K / (c.L * c.lambda);
  double l3 = 1.0, s4 = 0.0;
  for (int k = 0; k < inst.K; ++k) {
    const CMat& Qs = Q[side_index(inst.side[inst.N + k])];
    l3 += b * (tr(L.R_check[k], Qs) + L.hcheck2[k] - cst * cst);
    s4 += tr(L.R_bar[k], Qs) + L.hring2[k];
  }
  double l4 = e * s4 + c.L * c.Q * c.lambda * c.lambda * c.sigma2 / (2.0 * K2);
  return {l3, l4};
}

CMat mask_of(const Vec& angles, bool conj_phase) {
  const int M = static_cast<int>(angles.size());
  CVec u(M + 1);
  for (int m = 0; m < M; ++m) u[m] = std::polar(1.0, conj_phase ? -angles[m] : angles[m]);
  u[M] = 1.0;
  return u * u.adjoint();
}

struct BuildFlags {
  bool order = true;
  bool qos_mse = true;
};

struct RoundSdp {
  SdpProblem prob;
  CMat cost_ups[2];  // gap-objective part of the cost (no tie-break term)
};

RoundSdp build_round_sdp(const Instance& inst, const PowerSchedule& ps, const RoundLift& L, int t,
                         double dl3, double dl4, double chi, const Vec& beta_lin,
                         const BuildFlags& fl, const RisModeSpec& spec, const AllocOptions& opt,
                         const CMat* masks) {
  const int M = inst.M, n = M + 1, N = inst.N, K = inst.K, U = inst.U();
  const auto& c = inst.bc;
  const double K2 = static_cast<double>(c.K) * c.K;
  const double b = c.mu * c.L * c.lambda * c.lambda / K2;
  const double e = c.L * c.lambda * c.lambda * c.delta_norm_sq / (2.0 * K2);
  RoundSdp rs;
  SdpProblem& p = rs.prob;
  p.n = n;
  p.link = {DiagLink::Beta, DiagLink::OneMinusBeta};
  CMat C[2] = {CMat::Zero(n, n), CMat::Zero(n, n)};
  for (int k = 0; k < K; ++k) {
    int s = side_index(inst.side[N + k]);
    C[s] += dl3 * b * L.R_check[k] + dl4 * e * L.R_bar[k];
  }
  rs.cost_ups[0] = C[0];
  rs.cost_ups[1] = C[1];
  if (opt.noma_weight > 0 && N > 0) {
    double cmag = std::max(C[0].cwiseAbs().maxCoeff(), C[1].cwiseAbs().maxCoeff());
    double gmag = 0.0;
    for (int u = 0; u < N; ++u) gmag = std::max(gmag, L.R_tilde[u].cwiseAbs().maxCoeff());
    if (cmag > 0 && gmag > 0)
      for (int u = 0; u < N; ++u)
        C[side_index(inst.side[u])] -= opt.noma_weight * (cmag / gmag) * L.R_tilde[u];
  }
  p.C = {C[0], C[1]};
  p.c_beta = Vec(M);
  for (int m = 0; m < M; ++m) p.c_beta[m] = chi * (1.0 - 2.0 * beta_lin[m]);

  auto blocks = [&]() { return std::vector<CMat>{CMat::Zero(n, n), CMat::Zero(n, n)}; };
  auto gain_into = [&](std::vector<CMat>& A, int u, double w) {
    A[side_index(inst.side[u])] += w * L.R_tilde[u];
  };
  if (fl.order && N > 0) {
    for (int m = 0; m + 1 < N; ++m) {
      SdpTraceIneq in;
      in.A = blocks();
      gain_into(in.A, m + 1, 1.0);
      gain_into(in.A, m, -1.0);
      in.rhs = L.h2[m] - L.h2[m + 1];
      p.ineqs.push_back(in);
    }
    for (int k = 0; k < K; ++k) {
      SdpTraceIneq in;
      in.A = blocks();
      gain_into(in.A, N + k, 1.0);
      gain_into(in.A, N - 1, -1.0);
      in.rhs = L.h2[N - 1] - L.h2[N + k];
      p.ineqs.push_back(in);
    }
  }
  if (fl.qos_mse) {
    for (int m = 0; m < N; ++m) {
      SdpTraceIneq in;
      in.A = blocks();
      const double pn2 = ps.p[m][t] * ps.p[m][t];
      double rhs = pn2 * L.h2[m] - inst.zeta * inst.sigma2;
      gain_into(in.A, m, -pn2);
      for (int u = m + 1; u < U; ++u) {
        const double pu2 = ps.p[u][t] * ps.p[u][t];
        gain_into(in.A, u, inst.zeta * pu2);
        rhs -= inst.zeta * pu2 * L.h2[u];
      }
      in.rhs = rhs;
      p.ineqs.push_back(in);
    }
    SdpTraceIneq in;
    in.A = blocks();
    double rhs = inst.eps0 * K * K - inst.sigma2;
    for (int k = 0; k < K; ++k) {
      in.A[side_index(inst.side[N + k])] += L.R_hat[k];
      rhs -= L.hhat2[k];
    }
    in.rhs = rhs;
    p.ineqs.push_back(in);
  }
  if (spec.mode == RisMode::FixedBeta) {
    p.beta_lo = spec.fixed_beta;
    p.beta_hi = spec.fixed_beta;
  }
  if (masks) {
    // Q = U o B: tr(A Q) = tr((A o U^T) B).
    for (int s = 0; s < 2; ++s) {
      CMat Ut = masks[s].transpose();
      p.C[s] = p.C[s].cwiseProduct(Ut);
      rs.cost_ups[s] = rs.cost_ups[s].cwiseProduct(Ut);
      for (auto& in : p.ineqs) in.A[s] = in.A[s].cwiseProduct(Ut);
    }
  }
  return rs;
}

// Rescales AirFL amplitudes so that every effective gain returns to its
// target under the new configuration (capped at the peak budget).
PowerSchedule restore_effective(const Instance& inst, const RoundConfigs& cfg, const PowerSchedule& ps,
                                const std::vector<std::vector<double>>& target) {
  PowerSchedule out = ps;
  for (int t = 0; t < inst.T; ++t) {
    auto hb = combined_channels(inst, cfg[t], t);
    for (int k = 0; k < inst.K; ++k) {
      const int u = inst.N + k;
      double a = std::abs(hb[u]);
      if (a > 0) out.p[u][t] = std::min(target[t][k] / a, std::sqrt(inst.P_peak[u]));
    }
  }
  return out;
}

double max_binary_violation(const std::vector<Vec>& beta) {
  double v = 0.0;
  for (const auto& b : beta)
    for (int m = 0; m < b.size(); ++m) v = std::max(v, b[m] * (1.0 - b[m]));
  return v;
}

}  // namespace

RisResult penalty_sdr_ris(const Instance& inst, const PowerSchedule& ps, const RoundConfigs& start,
                          const AllocOptions& opt, const RisModeSpec& spec) {
  inst.validate();
  const int T = inst.T, M = inst.M;
  RisResult res;
  res.cfg = start;
  res.schedule = ps;
  if (M == 0) {
    res.ok = true;
    res.upsilon = evaluate(inst, start, ps).gap.upsilon;
    return res;
  }
  Evaluation ev0 = evaluate(inst, start, ps);
  std::vector<RoundLift> lifts;
  for (int t = 0; t < T; ++t) lifts.push_back(lift_round(inst, ps, ev0.hbar[t], t));

  const bool fixed_phase = spec.mode == RisMode::FixedPhase;
  CMat masks[2];
  if (fixed_phase) {
    masks[0] = mask_of(spec.fixed_theta, true);
    masks[1] = mask_of(spec.fixed_phi, true);
  }
  // Lifted iterates: Q (or B under fixed phases) per round and side.
  std::vector<std::array<CMat, 2>> Q(T);
  std::vector<Vec> beta(T);
  for (int t = 0; t < T; ++t) {
    StarRisConfig c = start[t];
    if (spec.mode == RisMode::FixedBeta) c.beta = spec.fixed_beta;
    beta[t] = c.beta;
    for (int s = 0; s < 2; ++s) {
      Side sd = s == 0 ? Side::Reflect : Side::Transmit;
      if (fixed_phase) {
        CVec bv = side_beta(c, sd).cast<cd>();
        Q[t][s] = lift_q(bv);
      } else {
        Q[t][s] = lift_q(config_vector(c, sd));
      }
    }
  }
  auto full_Q = [&](int t, int s) -> CMat {
    return fixed_phase ? CMat(Q[t][s].cwiseProduct(masks[s])) : Q[t][s];
  };

  std::vector<BuildFlags> flags(T, BuildFlags{inst.enforce_order, true});
  std::vector<SdpIterate> warm(T);
  std::vector<char> have_warm(T, 0);
  double chi = opt.chi0;
  double psi_prev = kInf;
  for (int stage = 0; stage < opt.max_penalty_stages; ++stage) {
    res.penalty_stages = stage + 1;
    psi_prev = kInf;
    for (int inner = 0; inner < opt.L2; ++inner) {
      std::vector<double> l3(T), l4(T);
      for (int t = 0; t < T; ++t) {
        CMat Qf[2] = {full_Q(t, 0), full_Q(t, 1)};
        auto lam = lambdas_trace(inst, lifts[t], Qf);
        l3[t] = lam.first;
        l4[t] = lam.second;
      }
      const double ups_lin = upsilon(l3, l4, inst.initial_gap);
      double psi = ups_lin;
      for (int t = 0; t < T; ++t) {
        double d3 = dupsilon_dl3(l3, l4, inst.initial_gap, t);
        double d4 = dupsilon_dl4(l3, t);
        SdpResult sr;
        RoundSdp rs;
        for (int attempt = 0; attempt < 3; ++attempt) {
          rs = build_round_sdp(inst, ps, lifts[t], t, d3, d4, chi, beta[t], flags[t], spec, opt,
                               fixed_phase ? masks : nullptr);
          sr = solve_sdp(rs.prob, opt.sdp, have_warm[t] ? &warm[t] : nullptr);
          ++res.sdp_solves;
          if (sr.status != SolveStatus::Infeasible) break;
          // Relax in order: decoding order first, then the QoS/MSE rows.
          have_warm[t] = 0;
          if (flags[t].order) {
            flags[t].order = false;
            res.order_dropped = true;
          } else if (flags[t].qos_mse) {
            flags[t].qos_mse = false;
            res.message += "round " + std::to_string(t + 1) + ": QoS/MSE rows dropped; ";
          } else {
            break;
          }
        }
        warm[t] = sr.state;
        have_warm[t] = 1;
        for (int s = 0; s < 2; ++s) {
          CMat dQ = sr.Q[s] - Q[t][s];
          psi += tr(rs.cost_ups[s], dQ);
        }
        for (int m = 0; m < M; ++m)
          psi += chi * (sr.beta[m] * (1.0 - 2.0 * beta[t][m]) + beta[t][m] * beta[t][m]);
        Q[t][0] = sr.Q[0];
        Q[t][1] = sr.Q[1];
        beta[t] = sr.beta;
      }
      if (std::abs(psi - psi_prev) <= opt.eps_p) break;
      psi_prev = psi;
    }
    res.violation = max_binary_violation(beta);
    if (res.violation <= opt.eps_c) break;
    chi *= opt.varrho;
  }
  res.relaxed_beta = beta;

  // Rank-one extraction or randomization, round by round. Rounds are
  // committed in order, so later rounds are scored against the earlier
  // choices.
  const std::vector<std::vector<double>> target = ev0.effective;
  const PowerSchedule& cur_ps = ps;
  res.ok = true;
  res.eig_ratio.assign(T, 0.0);
  RoundConfigs out = start;
  for (int t = 0; t < T; ++t) {
    CMat QR = full_Q(t, 0), QT = full_Q(t, 1);
    QR = 0.5 * (QR + QR.adjoint()).eval();
    QT = 0.5 * (QT + QT.adjoint()).eval();
    res.eig_ratio[t] = std::max(eigen_ratio(QR), eigen_ratio(QT));
    auto finish = [&](StarRisConfig c) {
      if (spec.mode == RisMode::FixedBeta) c.beta = spec.fixed_beta;
      if (fixed_phase) {
        c.theta = spec.fixed_theta;
        c.phi = spec.fixed_phi;
      }
      for (int m = 0; m < M; ++m) {
        if (c.beta[m] == 0.0) c.theta[m] = out[t].theta[m];
        if (c.beta[m] == 1.0) c.phi[m] = out[t].phi[m];
      }
      return c;
    };
    auto eval_cand = [&](const StarRisConfig& c0) -> std::optional<double> {
      StarRisConfig c = finish(c0);
      RoundConfigs trial = out;
      trial[t] = c;
      PowerSchedule pt = opt.restore_gains ? restore_effective(inst, trial, cur_ps, target) : cur_ps;
      Evaluation e = evaluate(inst, trial, pt);
      if (flags[t].qos_mse && (!e.qos_ok[t] || !e.mse_ok[t])) return std::nullopt;
      if (flags[t].order && !e.order_ok[t]) return std::nullopt;
      if (!e.peak_ok || !e.avg_ok) return std::nullopt;
      double score = e.gap.upsilon;
      if (opt.noma_weight > 0)
        score -= opt.noma_weight * kTieBreak * std::abs(score) * e.sum_rate[t];
      return score;
    };
    if (res.eig_ratio[t] <= opt.rank_tol) {
      StarRisConfig c = finish(round_config(extract_q(QR), extract_q(QT)));
      if (eval_cand(c)) {
        out[t] = c;
        continue;
      }
    }
    Rng rng = substream(opt.seed, 0x5A4D0000ULL + t);
    RandomizationResult rr = gaussian_randomization(QR, QT, opt.N_rand, rng, eval_cand);
    ++res.randomized_rounds;
    if (rr.ok) {
      out[t] = finish(rr.config);
    } else {
      res.ok = false;
      res.message += "round " + std::to_string(t + 1) + ": no feasible randomized candidate; ";
    }
  }
  res.cfg = out;
  res.schedule = opt.restore_gains ? restore_effective(inst, out, cur_ps, target) : cur_ps;
  Evaluation fin = evaluate(inst, out, res.schedule);
  if (!fin.peak_ok || !fin.avg_ok) res.schedule = cur_ps;
  res.upsilon = evaluate(inst, out, res.schedule).gap.upsilon;
  return res;
}

// ---------------------------------------------------------------------------

AltResult alternate(const Instance& inst, const RoundConfigs& cfg0, const PowerSchedule& ps0,
                    const AllocOptions& opt, const RisModeSpec& spec) {
  AltResult res;
  res.cfg = cfg0;
  res.schedule = ps0;
  const bool order = inst.enforce_order;
  res.upsilon_start = evaluate(inst, cfg0, ps0).gap.upsilon;
  Merit cur = merit_of(inst, res.cfg, res.schedule, false);
  double prev = kInf;
  for (int l = 0; l < opt.L_a; ++l) {
    res.outer_rounds = l + 1;
    // Step 1: power allocation.
    PowerResult pr = sca_power(inst, res.cfg, res.schedule, opt);
    Merit mp = merit_of(inst, res.cfg, pr.schedule, false);
    if (no_worse(mp, cur)) {
      res.schedule = pr.schedule;
      cur = mp;
    } else {
      ++res.rejected_power;
    }
    // Step 2: configuration.
    RisResult rr = penalty_sdr_ris(inst, res.schedule, res.cfg, opt, spec);
    res.order_dropped |= rr.order_dropped;
    PowerSchedule cand_ps = rr.schedule;
    noma_power_pass(inst, rr.cfg, cand_ps, opt);
    Merit mr = merit_of(inst, rr.cfg, cand_ps, false);
    bool ord_new = true, ord_old = true;
    if (order) {
      Evaluation en = evaluate(inst, rr.cfg, cand_ps);
      Evaluation eo = evaluate(inst, res.cfg, res.schedule);
      for (int t = 0; t < inst.T; ++t) {
        ord_new &= static_cast<bool>(en.order_ok[t]);
        ord_old &= static_cast<bool>(eo.order_ok[t]);
      }
    }
    // A configuration that breaks a previously satisfied decoding order is
    // never accepted.
    if (no_worse(mr, cur) && (ord_new || !ord_old)) {
      res.cfg = rr.cfg;
      res.schedule = cand_ps;
      cur = mr;
    } else {
      ++res.rejected_ris;
    }
    res.upsilon_trace.push_back(cur.ups);
    if (prev < kInf && prev - cur.ups < opt.rel_tol * std::abs(prev)) break;
    prev = cur.ups;
  }
  return res;
}

const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Proposed: return "proposed";
    case Scheme::NoiseFree: return "noise_free";
    case Scheme::ConventionalRis: return "conventional_ris";
    case Scheme::RandomStarRis: return "random_star_ris";
    case Scheme::EqualPower: return "equal_power";
  }
  return "unknown";
}

std::vector<Scheme> all_schemes() {
  return {Scheme::Proposed, Scheme::NoiseFree, Scheme::ConventionalRis, Scheme::RandomStarRis,
          Scheme::EqualPower};
}

Scheme parse_scheme(const std::string& name) {
  for (Scheme s : all_schemes())
    if (name == scheme_name(s)) return s;
  std::string valid;
  for (Scheme s : all_schemes()) valid += std::string(valid.empty() ? "" : ", ") + scheme_name(s);
  throw std::invalid_argument("unknown scheme '" + name + "'; valid: " + valid);
}

SchemeResult run_baseline(Scheme kind, const Instance& inst, const AllocOptions& opt) {
  Rng rng = substream(opt.seed, 0xC0F16ULL);
  StarRisConfig c0 = StarRisConfig::random(inst.M, rng);
  PowerSchedule eq = equal_power(inst);
  SchemeResult out;
  switch (kind) {
    case Scheme::Proposed: {
      AltResult a = alternate(inst, replicate(c0, inst.T), eq, opt);
      out.schedule = a.schedule;
      out.cfg = a.cfg;
      out.upsilon_trace = a.upsilon_trace;
      break;
    }
    case Scheme::NoiseFree: {
      out.cfg = replicate(c0, inst.T);
      out.schedule = eq;
      Evaluation ev = evaluate(inst, out.cfg, eq);
      out.schedule = inversion_schedule(inst, ev, eq);
      noma_power_pass(inst, out.cfg, out.schedule, opt);
      out.noise_free = true;
      Instance ideal = inst;
      ideal.bc.sigma2 = 0.0;
      std::vector<std::vector<double>> ones(inst.T, std::vector<double>(inst.K, 1.0));
      out.upsilon_trace = {gap_terms(ones, ideal.bc, inst.initial_gap).upsilon};
      break;
    }
    case Scheme::ConventionalRis: {
      RisModeSpec spec;
      spec.mode = RisMode::FixedBeta;
      spec.fixed_beta = Vec::Zero(inst.M);
      for (int m = 0; m < inst.M / 2; ++m) spec.fixed_beta[m] = 1.0;
      StarRisConfig c = c0;
      c.beta = spec.fixed_beta;
      AltResult a = alternate(inst, replicate(c, inst.T), eq, opt, spec);
      out.schedule = a.schedule;
      out.cfg = a.cfg;
      out.upsilon_trace = a.upsilon_trace;
      break;
    }
    case Scheme::RandomStarRis: {
      RisModeSpec spec;
      spec.mode = RisMode::FixedPhase;
      spec.fixed_theta = c0.theta;
      spec.fixed_phi = c0.phi;
      AltResult a = alternate(inst, replicate(c0, inst.T), eq, opt, spec);
      out.schedule = a.schedule;
      out.cfg = a.cfg;
      out.upsilon_trace = a.upsilon_trace;
      break;
    }
    case Scheme::EqualPower: {
      RisResult r = penalty_sdr_ris(inst, eq, replicate(c0, inst.T), opt);
      RoundConfigs cfg = replicate(c0, inst.T);
      double u0 = evaluate(inst, cfg, eq).gap.upsilon;
      out.cfg = r.upsilon <= u0 ? r.cfg : cfg;
      out.schedule = eq;
      out.upsilon_trace = {std::min(r.upsilon, u0)};
      break;
    }
  }
  return out;
}

}  // namespace starfl
