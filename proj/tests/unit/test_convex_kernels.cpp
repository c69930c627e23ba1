#include "doctest.h"
#include "starfl/convex_kernels.hpp"

using namespace starfl;

TEST_SUITE("convex_kernels") {

TEST_CASE("QCQP trivial cases") {
  QcqpProblem p;
  p.objective = Vec::Ones(1);
  p.lo = Vec::Constant(1, -std::numeric_limits<double>::infinity());
  p.hi = Vec::Constant(1, std::numeric_limits<double>::infinity());
  p.quad_constraints.push_back({Mat::Identity(1, 1), Vec::Zero(1), -1.0});
  QcqpResult r = solve_qcqp(p);
  CHECK(r.status == SolveStatus::Optimal);
  CHECK(std::abs(r.x[0] + 1.0) <= 1e-6);

  QcqpProblem b;
  b.objective = Vec::Constant(1, -1.0);
  b.lo = Vec::Zero(1);
  b.hi = Vec::Ones(1);
  CHECK(std::abs(solve_qcqp(b).x[0] - 1.0) <= 1e-6);
}

TEST_CASE("QCQP against a fine grid on a disc-box instance") {
  // min x + 2y s.t. x^2 + y^2 <= 1, y >= -0.5: optimum on the arc.
  QcqpProblem p;
  p.objective = Vec(2);
  p.objective << 1.0, 2.0;
  p.lo = Vec::Constant(2, -2.0);
  p.hi = Vec::Constant(2, 2.0);
  p.lo[1] = -0.5;
  p.quad_constraints.push_back({Mat::Identity(2, 2), Vec::Zero(2), -1.0});
  QcqpResult r = solve_qcqp(p);
  double best = 1e9;
  for (int i = 0; i <= 4000; ++i) {
    double a = 2 * kPi * i / 4000.0;
    double x = std::cos(a), y = std::sin(a);
    if (y >= -0.5) best = std::min(best, x + 2 * y);
  }
  best = std::min(best, -std::sqrt(0.75) - 1.0);
  CHECK(std::abs(r.objective - best) <= 1e-3);
}

TEST_CASE("QCQP reports infeasibility") {
  QcqpProblem p;
  p.objective = Vec::Ones(1);
  p.lo = Vec::Constant(1, 2.0);
  p.hi = Vec::Constant(1, 3.0);
  p.quad_constraints.push_back({Mat::Identity(1, 1), Vec::Zero(1), -1.0});
  CHECK(solve_qcqp(p).status == SolveStatus::Infeasible);
}

TEST_CASE("PSD projection") {
  Mat A(2, 2);
  A << 1, 0, 0, -1;
  Mat P = psd_project(A);
  CHECK(P(0, 0) == doctest::Approx(1.0));
  CHECK(std::abs(P(1, 1)) < 1e-15);
  A << 2, 0, 0, -3;
  CHECK((psd_project(A) - Mat(Vec(Eigen::Vector2d(2, 0)).asDiagonal())).norm() < 1e-12);

  Mat B = Mat::Random(5, 5);
  Mat S = B * B.transpose();
  CHECK((psd_project(S) - S).norm() <= 1e-12 * S.norm());

  // 2 x 2 closed form: clip the eigenvalues of a symmetric matrix.
  Mat C(2, 2);
  C << 0.3, 1.1, 1.1, -0.4;
  double tr = C.trace(), det = C.determinant();
  double l1 = tr / 2 + std::sqrt(tr * tr / 4 - det);
  Vec v(2);
  v << C(0, 1), l1 - C(0, 0);
  v.normalize();
  Mat expect = l1 * v * v.transpose();
  CHECK((psd_project(C) - expect).norm() < 1e-12);

  Mat N(2, 2);
  N << 1, 2, 0, 1;
  CHECK_THROWS(psd_project(N));
}

TEST_CASE("complex projection agrees with the real embedding route") {
  CMat X = CMat::Random(4, 4);
  CMat H = 0.5 * (X + X.adjoint());
  CMat direct = psd_project(H);
  CMat viaembed = real_unembed(psd_project(real_embed(H)));
  CHECK((direct - viaembed).norm() < 1e-10);
  CHECK((real_unembed(real_embed(H)) - H).norm() == 0.0);
}

TEST_CASE("SDP: trace minimization with unit diagonal") {
  SdpProblem p;
  p.n = 2;
  p.C = {CMat::Identity(2, 2)};
  p.link = {DiagLink::Beta};
  p.c_beta = Vec::Zero(1);
  p.beta_lo = Vec::Ones(1);
  p.beta_hi = Vec::Ones(1);
  SdpOptions o;
  o.tol = 1e-8;
  o.max_iter = 20000;
  SdpResult r = solve_sdp(p, o);
  CHECK(r.status == SolveStatus::Optimal);
  CHECK(r.objective == doctest::Approx(2.0).epsilon(1e-5));
  CHECK((r.Q[0] - CMat::Identity(2, 2)).norm() < 1e-3);
  CHECK(sdp_violation(p, r.Q, r.beta) < 1e-5);
}

TEST_CASE("SDP: infeasible trace constraint") {
  SdpProblem p;
  p.n = 2;
  p.C = {CMat::Zero(2, 2)};
  p.link = {DiagLink::Beta};
  p.c_beta = Vec::Zero(1);
  // tr(I Q) = beta + 1 <= 0.5 is impossible for beta >= 0.
  p.ineqs.push_back({{CMat::Identity(2, 2)}, Vec(), 0.5});
  CHECK(solve_sdp(p).status == SolveStatus::Infeasible);
}

TEST_CASE("SDP: deterministic and warm-startable") {
  SdpProblem p;
  p.n = 3;
  CMat A = CMat::Random(3, 3);
  p.C = {0.5 * (A + A.adjoint())};
  p.link = {DiagLink::Beta};
  p.c_beta = Vec::Constant(2, 0.1);
  SdpResult a = solve_sdp(p), b = solve_sdp(p);
  CHECK(a.objective == b.objective);
  CHECK(a.state.z == b.state.z);
  SdpResult w = solve_sdp(p, {}, &a.state);
  CHECK(w.iterations <= a.iterations);
  CHECK(std::abs(w.objective - a.objective) < 1e-4);
}

}  // TEST_SUITE
