#include "doctest.h"
#include "starfl/airfl.hpp"
#include "starfl/convergence.hpp"

using namespace starfl;

TEST_SUITE("convergence") {

TEST_CASE("contraction term") {
  CHECK(lambda3({0, 0, 0}, 1.0, 1.0, 0.1, 3) == 1.0);
  CHECK(lambda3({1.0}, 1.0, 1.0, 0.1, 1) == doctest::Approx(0.81).epsilon(1e-14));
  // K = 1: below one for any step inside (0, 2 / (L x)).
  for (double lam : {0.01, 0.5, 1.2, 1.9})
    CHECK(lambda3({1.0}, 0.7, 1.0, lam, 1) < 1.0);
}

TEST_CASE("additive term") {
  CHECK(lambda4({0, 0}, 1.3, 0.1, 2, 5.0, 10, 0.2) ==
        doctest::Approx(1.3 * 10 * 0.01 * 0.2 / 8.0).epsilon(1e-14));
  CHECK(lambda4({1.2, 0.8}, 1.3, 0.1, 2, 0.0, 10, 0.0) == 0.0);
  // Literal re-evaluation.
  const double L = 1.7, lam = 0.03, d2 = 2.5, s2 = 0.4;
  const int K = 3, Q = 10;
  std::vector<double> x{0.9, 1.4, 0.2};
  double lit = 0.0;
  for (double v : x) lit += L * lam * lam / (2.0 * K * K) * v * v * d2;
  lit += L * Q * lam * lam * s2 / (2.0 * K * K);
  CHECK(std::abs(lambda4(x, L, lam, K, d2, Q, s2) - lit) <= 1e-12);
}

TEST_CASE("optimality gap composition") {
  CHECK(upsilon({0.5}, {0.2}, 3.0) == doctest::Approx(1.7));
  CHECK(upsilon({0, 0, 0}, {1, 2, 3}, 9.0) == 3.0);
  std::vector<double> l3{0.9, 0.7, 0.8}, l4{0.1, 0.3, 0.2};
  const double g0 = 4.0;
  double brute = l3[0] * l3[1] * l3[2] * g0 + l3[1] * l3[2] * l4[0] + l3[2] * l4[1] + l4[2];
  CHECK(std::abs(upsilon(l3, l4, g0) - brute) <= 1e-12);
  auto part = upsilon_partial(l3, l4, g0);
  CHECK(part.size() == 3);
  CHECK(part[0] == doctest::Approx(0.9 * 4.0 + 0.1));
  CHECK(part.back() == upsilon(l3, l4, g0));
  CHECK_THROWS(upsilon({}, {}, 1.0));
}

TEST_CASE("one-round bound") {
  BoundConstants c;
  c.mu = 1.0;
  c.L = 2.0;
  c.lambda = 0.1;
  c.delta_norm_sq = 3.0;
  c.K = 2;
  c.sigma2 = 0.0;
  CHECK(one_round_bound(5.0, 4.0, {0.0, 0.0}, c) == 5.0);
  // Aligned gains with ideal statistics: descent-lemma form. The curvature
  // term is summed per user, so it carries L lambda^2 / (2K).
  c.delta_norm_sq = 0.0;
  CHECK(one_round_bound(5.0, 4.0, {1.0, 1.0}, c) ==
        doctest::Approx(5.0 - (0.1 - 2.0 * 0.01 / (2.0 * 2.0)) * 4.0));
}

TEST_CASE("diminishing-step bound") {
  BoundConstants c;
  c.mu = 1.0;
  c.L = 1.0;
  c.K = 2;
  c.Q = 10;
  c.sigma2 = 0.0;
  c.delta_norm_sq = 0.0;
  DiminishingStep d = diminishing_gap(1, 2.0, 1.0, c, {1.0, 1.0}, 3.0);
  CHECK(d.Q_tilde == 0.0);
  CHECK(d.xi == doctest::Approx(2.0 * 3.0));
  CHECK(d.bound == doctest::Approx(6.0 / 3.0));
  CHECK(d.lambda_t == doctest::Approx(1.0));
  CHECK_THROWS(diminishing_gap(1, 0.5, 1.0, c, {1.0, 1.0}, 3.0));
  CHECK_THROWS_AS(diminishing_gap(1, 2.0, 1.0, c, {0.1, 0.1}, 3.0), std::domain_error);

  // The chained bound times (t + 1 + nu) is a non-increasing envelope.
  c.sigma2 = 0.3;
  c.delta_norm_sq = 1.0;
  double prev = 10.0, env = 1e300;
  for (int t = 1; t <= 200; ++t) {
    DiminishingStep s = diminishing_gap(t, 2.0, 1.0, c, {1.0, 1.0}, prev);
    CHECK(s.xi <= env * (1 + 1e-12));
    env = s.xi;
    prev = s.bound;
  }
}

TEST_CASE("aggregation-error bound") {
  BoundConstants c;
  c.mu = 0.5;
  c.L = 1.0;
  c.lambda = 0.2;
  c.delta_norm_sq = 0.0;
  ErrorBoundInputs in{{0, 0, 0}, {0, 0, 0}};
  CHECK(aggregation_error_bound(in, c, 2.0) == doctest::Approx(std::pow(0.9, 3) * 2.0));
  c.lambda = 0.5;
  CHECK_THROWS(aggregation_error_bound(in, c, 2.0));

  // An unbiased noisy channel on the regression task stays under the bound.
  TaskOptions o;
  o.num_users = 3;
  LearningTask task = make_synthetic_task(o);
  c.mu = task.mu_strong;
  c.L = task.L_smooth;
  c.lambda = 0.3;
  c.delta_norm_sq = task.delta.squaredNorm();
  c.K = 3;
  c.Q = task.Q;
  const int T = 15;
  const double s2 = 0.6;
  ErrorBoundInputs e;
  e.bias_sq.assign(T, 0.0);
  e.grad_mse.assign(T, task.Q * s2 / 9.0);
  const double bound = aggregation_error_bound(e, c, task.gap(Vec::Zero(task.Q)));
  std::vector<std::vector<double>> eff(T, {1.0, 1.0, 1.0});
  TrainOptions topt;
  topt.rate.lambda = c.lambda;
  double s = 0, sq = 0;
  const int R = 100;
  for (int r = 1; r <= R; ++r) {
    double g = train(task, eff, s2, r, topt).gap_trace.back();
    s += g;
    sq += g * g;
  }
  double mean = s / R, se = std::sqrt((sq / R - mean * mean) / (R - 1));
  CHECK(mean <= bound + 3 * se);
}

TEST_CASE("power derivative of the gap bound") {
  BoundConstants c;
  c.mu = 0.8;
  c.L = 1.2;
  c.lambda = 0.05;
  c.delta_norm_sq = 2.0;
  c.sigma2 = 0.1;
  c.K = 2;
  std::vector<std::vector<double>> g{{1.5, 0.7}}, p{{0.0, 0.0}};
  // T = 1: derivative (dLambda3/dp) gap0 + dLambda4/dp.
  const double h = 1e-6;
  auto ups = [&](double pk) {
    std::vector<double> x{g[0][0] * pk, 0.0};
    return lambda3(x, c.mu, c.L, c.lambda, 2) * 3.0 +
           lambda4(x, c.L, c.lambda, 2, c.delta_norm_sq, c.Q, c.sigma2);
  };
  p[0][0] = 0.4;
  double fd = (ups(0.4 + h) - ups(0.4 - h)) / (2 * h);
  CHECK(grad_upsilon_power(g, p, c, 3.0, 0, 0) == doctest::Approx(fd).epsilon(1e-6));
  p[0][0] = 1e-9;
  CHECK(grad_upsilon_power(g, p, c, 3.0, 0, 0) < 0.0);
}

TEST_CASE("lambda coefficients") {
  std::vector<double> l3{0.9, 0.8, 0.7}, l4{0.1, 0.2, 0.3};
  CHECK(dupsilon_dl4(l3, 2) == 1.0);  // empty product
  CHECK(dupsilon_dl4(l3, 0) == doctest::Approx(0.8 * 0.7));
  // dUpsilon/dLambda3^(1) = (later products) * gap0, no history term.
  CHECK(dupsilon_dl3(l3, l4, 5.0, 0) == doctest::Approx(0.8 * 0.7 * 5.0));
  CHECK(dupsilon_dl3(l3, l4, 5.0, 1) == doctest::Approx(0.7 * (0.9 * 5.0 + 0.1)));
}

TEST_CASE("matrix derivative: zero deviation bound removes the R_bar term") {
  BoundConstants c;
  c.mu = 1.0;
  c.L = 1.0;
  c.lambda = 0.1;
  c.K = 1;
  c.delta_norm_sq = 0.0;
  CMat Rc = CMat::Identity(3, 3), Rb = CMat::Constant(3, 3, cd(5, 1));
  CMat G1 = grad_upsilon_Q(Rc, Rb, {0.9}, {0.1}, c, 2.0, 0);
  CMat G2 = grad_upsilon_Q(Rc, CMat::Zero(3, 3), {0.9}, {0.1}, c, 2.0, 0);
  CHECK((G1 - G2).norm() == 0.0);
}

}  // TEST_SUITE
