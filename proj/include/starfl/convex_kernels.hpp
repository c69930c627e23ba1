#pragma once

#include <optional>

#include "starfl/common.hpp"

namespace starfl {

enum class SolveStatus { Optimal, Infeasible, MaxIter };

const char* to_string(SolveStatus s);

// x^T A x + b^T x + c <= 0. A may be left empty for an affine constraint.
struct QuadConstraint {
  Mat A;
  Vec b;
  double c = 0.0;
};

struct QcqpProblem {
  Vec objective;
  std::vector<QuadConstraint> quad_constraints;
  Vec lo;  // use -inf / +inf for free variables
  Vec hi;
  int dim() const { return static_cast<int>(objective.size()); }
};

struct QcqpResult {
  Vec x;
  SolveStatus status = SolveStatus::MaxIter;
  double objective = 0.0;
  double max_violation = 0.0;  // phase-1 residual when Infeasible
  int newton_steps = 0;
};

struct QcqpOptions {
  double tol = 1e-8;
  int max_iter = 200;  // Newton steps per barrier stage
  double mu = 10.0;    // barrier growth per stage
};

QcqpResult solve_qcqp(const QcqpProblem& prob, const QcqpOptions& opt = {},
                      const std::optional<Vec>& x0 = std::nullopt);

// Value of constraint i at x.
double eval_constraint(const QuadConstraint& c, const Vec& x);

// Nearest PSD matrix in Frobenius norm. Throws if the input is not
// symmetric (Hermitian) to 1e-10 relative.
Mat psd_project(const Mat& A);
CMat psd_project(const CMat& A);

// Real symmetric embedding [[X, -Y], [Y, X]] of X + iY and its inverse.
Mat real_embed(const CMat& H);
CMat real_unembed(const Mat& E);

enum class DiagLink { Beta, OneMinusBeta };

// sum_b tr(A_b Q_b) + a^T beta <= rhs. An empty A_b means a zero block.
struct SdpTraceIneq {
  std::vector<CMat> A;
  Vec a;
  double rhs = 0.0;
};

// minimize sum_b tr(C_b Q_b) + c_beta^T beta over Hermitian PSD blocks of
// size n = M + 1 with Diag(Q_b)[0..M-1] tied to beta (or 1 - beta),
// Q_b(M, M) = 1 and beta in [0, 1]^M.
struct SdpProblem {
  int n = 0;
  std::vector<CMat> C;
  std::vector<DiagLink> link;
  Vec c_beta;
  std::vector<SdpTraceIneq> ineqs;
  Vec beta_lo, beta_hi;  // optional tighter box inside [0, 1]
  int num_blocks() const { return static_cast<int>(C.size()); }
  int M() const { return n - 1; }
};

struct SdpIterate {
  Vec z;  // solver-space primal (cone side)
  Vec u;  // scaled dual
  double rho = 1.0;
};

struct SdpResult {
  std::vector<CMat> Q;
  Vec beta;
  SolveStatus status = SolveStatus::MaxIter;
  double objective = 0.0;
  double primal_residual = 0.0;  // max constraint violation in problem units (row-scaled)
  double dual_residual = 0.0;
  double min_eig = 0.0;
  int iterations = 0;
  SdpIterate state;
};

struct SdpOptions {
  double tol = 1e-6;
  int max_iter = 5000;
  double rho = 1.0;
  double over_relax = 1.6;
};

SdpResult solve_sdp(const SdpProblem& prob, const SdpOptions& opt = {},
                    const SdpIterate* warm = nullptr);

// Objective and max violation of a candidate (Q, beta) against prob.
double sdp_objective(const SdpProblem& prob, const std::vector<CMat>& Q, const Vec& beta);
double sdp_violation(const SdpProblem& prob, const std::vector<CMat>& Q, const Vec& beta);

}  // namespace starfl
