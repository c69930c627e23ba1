#include "doctest.h"
#include "starfl/airfl.hpp"

using namespace starfl;

namespace {

const LearningTask& task3() {
  static const LearningTask t = [] {
    TaskOptions o;
    o.num_users = 3;
    o.seed = 5;
    return make_synthetic_task(o);
  }();
  return t;
}

}  // namespace

TEST_SUITE("airfl") {

TEST_CASE("synthetic task constants") {
  const LearningTask& t = task3();
  CHECK(t.Q == 10);
  CHECK(t.samples_per_round == 50);
  for (int i = 0; i < 10; ++i) CHECK(t.c_true[i] == i + 1);
  CHECK(t.mu_strong > 0);
  CHECK(t.L_smooth >= t.mu_strong);
  CHECK(t.gap(t.w_star) == 0.0);
  CHECK(t.full_gradient(t.w_star).norm() < 1e-10);
  CHECK(t.delta.minCoeff() > 0);
}

TEST_CASE("noise-free labels: c is the minimizer with zero loss") {
  TaskOptions o;
  o.noise_scale = 0.0;
  o.num_train = 3000;
  o.num_test = 100;
  LearningTask t = make_synthetic_task(o);
  CHECK((t.w_star - t.c_true).norm() < 1e-9);
  CHECK(t.F_star < 1e-20);
  CHECK(local_gradient(t, 0, t.c_true, 0, 1).norm() < 1e-10);
}

TEST_CASE("local gradient: closed form and unbiasedness") {
  const LearningTask& t = task3();
  Vec w = Vec::LinSpaced(10, -1.0, 1.0);
  auto idx = batch_indices(t, 1, 4, 77);
  Mat A = Mat::Zero(10, 10);
  Vec b = Vec::Zero(10);
  for (int i : idx) {
    A += t.X.row(i).transpose() * t.X.row(i);
    b += t.X.row(i).transpose() * t.y[i];
  }
  A /= double(idx.size());
  b /= double(idx.size());
  CHECK((local_gradient(t, 1, w, 4, 77) - (A * w - b)).norm() <= 1e-12 * (1 + b.norm()));

  // Batches are drawn without replacement.
  std::vector<int> s = idx;
  std::sort(s.begin(), s.end());
  CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());

  const int R = 3000;
  Vec mean = Vec::Zero(10), sq = Vec::Zero(10);
  for (int r = 0; r < R; ++r)
    for (int k = 0; k < t.K; ++k) {
      Vec g = local_gradient(t, k, w, r, 9);
      mean += g;
      sq += g.cwiseProduct(g);
    }
  const double n = double(R) * t.K;
  mean /= n;
  Vec se = ((sq / n - mean.cwiseProduct(mean)) / n).cwiseSqrt();
  Vec full = t.full_gradient(w);
  for (int i = 0; i < 10; ++i) CHECK(std::abs(mean[i] - full[i]) <= 3.5 * se[i]);
}

TEST_CASE("identical full-batch data gives identical gradients") {
  TaskOptions o;
  o.num_users = 2;
  o.num_train = 100;
  o.samples_per_round = 50;
  o.num_test = 10;
  LearningTask t = make_synthetic_task(o);
  // Full batch on each user's partition; give both users the same partition.
  t.user_indices[1] = t.user_indices[0];
  Vec w = Vec::Ones(10);
  CHECK((local_gradient(t, 0, w, 0, 1) - local_gradient(t, 1, w, 3, 8)).norm() < 1e-12);
}

TEST_CASE("global update") {
  Rng rng(1);
  Vec w = Vec::Ones(4);
  std::vector<Vec> g{Vec::Constant(4, 1.0), Vec::Constant(4, 3.0)};
  Vec a = noisy_global_update(w, g, {1.0, 1.0}, 0.0, 0.5, rng);
  CHECK((a - (w - 0.5 * Vec::Constant(4, 2.0))).norm() < 1e-15);
  Vec z = noisy_global_update(w, g, {0.0, 0.0}, 0.0, 0.5, rng);
  CHECK((z - w).norm() == 0.0);
  CHECK_THROWS(noisy_global_update(w, g, {1.0}, 0.0, 0.5, rng));
}

TEST_CASE("aggregated gradient error over noise draws") {
  Rng rng(2);
  const int Q = 6;
  std::vector<Vec> g{Vec::LinSpaced(Q, 0.5, 2.0), Vec::LinSpaced(Q, -1.0, 1.0), Vec::Ones(Q)};
  std::vector<double> x{1.2, 0.7, 1.0};
  const double s2 = 0.4, K = 3.0;
  Vec bias = Vec::Zero(Q);
  for (int k = 0; k < 3; ++k) bias += (x[k] - 1.0) * g[k];
  const double expect = (bias.squaredNorm() + Q * s2) / (K * K);
  Vec gmean = (g[0] + g[1] + g[2]) / K;
  const int draws = 100000;
  double acc = 0.0;
  Vec w = Vec::Zero(Q);
  for (int d = 0; d < draws; ++d) {
    Vec ghat = -noisy_global_update(w, g, x, s2, 1.0, rng);
    acc += (ghat - gmean).squaredNorm();
  }
  CHECK(acc / draws == doctest::Approx(expect).epsilon(0.01));
}

TEST_CASE("aligned noise-free training converges") {
  const LearningTask& t = task3();
  const int T = 200;
  std::vector<std::vector<double>> eff(T, std::vector<double>(3, 1.0));
  TrainOptions o;
  o.rate.lambda = 1.0 / t.L_smooth;  // inside the stability cap for x = 1
  LearningRun r = train(t, eff, 0.0, 3, o);
  CHECK(r.rounds() == T);
  CHECK(r.gap_trace.back() / r.gap_trace.front() < 1e-3);
  for (double m : r.mse_trace) CHECK(m == 0.0);
}

TEST_CASE("default learning rate and horizon") {
  LearningRate lr;
  CHECK(lr.lambda == 1e-4);
  CHECK(lr.at(7) == 1e-4);
  lr.diminishing = true;
  lr.Gamma = 2.0;
  lr.nu = 1.0;
  CHECK(lr.at(3) == doctest::Approx(0.5));
}

TEST_CASE("diminishing steps give an O(1/t) scaled gap") {
  const LearningTask& t = task3();
  const int T = 200;
  std::vector<std::vector<double>> eff(T, std::vector<double>(3, 1.0));
  TrainOptions o;
  o.rate.diminishing = true;
  o.rate.Gamma = 2.0 / t.mu_strong;
  o.rate.nu = 1.0;
  double first = 0.0, second = 0.0;
  for (int s = 1; s <= 10; ++s) {
    LearningRun r = train(t, eff, 0.05, s, o);
    for (int i = 0; i < T; ++i) {
      double v = r.gap_trace[i] * (i + 2 + o.rate.nu);
      double& slot = i < T / 2 ? first : second;
      slot = std::max(slot, v);
    }
  }
  CHECK(second <= first);
}

TEST_CASE("training rejects infeasible allocations") {
  const LearningTask& t = task3();
  std::vector<std::vector<double>> eff{{1.0, -0.1, 1.0}};
  CHECK_THROWS_AS(train(t, eff, 0.0, 1, TrainOptions{}), std::domain_error);
  std::vector<std::vector<double>> wrong{{1.0, 1.0}};
  CHECK_THROWS_AS(train(t, wrong, 0.0, 1, TrainOptions{}), std::invalid_argument);
}

TEST_CASE("run is deterministic") {
  const LearningTask& t = task3();
  std::vector<std::vector<double>> eff(20, std::vector<double>{1.1, 0.9, 1.0});
  TrainOptions o;
  o.rate.lambda = 0.05;
  auto a = train(t, eff, 0.3, 12, o), b = train(t, eff, 0.3, 12, o);
  CHECK(a.gap_trace == b.gap_trace);
}

}  // TEST_SUITE
