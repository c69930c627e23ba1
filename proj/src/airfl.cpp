#include "starfl/airfl.hpp"

#include <algorithm>
#include <numeric>

#include "starfl/ssp_signal.hpp"

namespace starfl {

namespace {

constexpr std::uint64_t kTagData = 0xA1;
constexpr std::uint64_t kTagPartition = 0xA2;
constexpr std::uint64_t kTagBatch = 0xB0000000ULL;
constexpr std::uint64_t kTagNoise = 0xC0000000ULL;
constexpr std::uint64_t kTagPilot = 0xD0000000ULL;

}  // namespace

double LearningTask::gap(const Vec& w) const {
  Vec d = w - w_star;
  return std::max(0.5 * d.dot(hessian * d), 0.0);
}

double LearningTask::loss(const Vec& w) const { return F_star + gap(w); }

Vec LearningTask::full_gradient(const Vec& w) const { return hessian * w - linear; }

double LearningTask::test_loss(const Vec& w) const {
  Vec r = y_test - X_test * w;
  return 0.5 * r.squaredNorm() / std::max<Eigen::Index>(r.size(), 1);
}

LearningTask make_synthetic_task(const TaskOptions& opt) {
  if (opt.num_users < 1) throw std::invalid_argument("make_synthetic_task: K must be >= 1");
  if (opt.samples_per_round < 1 || opt.num_train < opt.num_users * opt.samples_per_round)
    throw std::invalid_argument("make_synthetic_task: not enough samples per user");
  LearningTask t;
  t.Q = 10;
  t.K = opt.num_users;
  t.samples_per_round = opt.samples_per_round;
  t.seed = opt.seed;
  t.c_true = Vec::LinSpaced(t.Q, 1.0, static_cast<double>(t.Q));

  Rng rng = substream(opt.seed, kTagData);
  auto draw = [&](int n, Mat& X, Vec& y) {
    X = Mat(n, t.Q);
    y = Vec(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < t.Q; ++j) X(i, j) = rnormal(rng);
      y[i] = X.row(i).dot(t.c_true) + opt.noise_scale * rnormal(rng);
    }
  };
  draw(opt.num_train, t.X, t.y);
  draw(opt.num_test, t.X_test, t.y_test);

  const int n = opt.num_train;
  t.hessian = t.X.transpose() * t.X / n;
  t.linear = t.X.transpose() * t.y / n;
  t.w_star = t.hessian.ldlt().solve(t.linear);
  Vec r = t.y - t.X * t.w_star;
  t.F_star = 0.5 * r.squaredNorm() / n;
  Eigen::SelfAdjointEigenSolver<Mat> es(t.hessian);
  t.mu_strong = es.eigenvalues()[0];
  t.L_smooth = es.eigenvalues()[t.Q - 1];

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (opt.non_iid) {
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return t.y[a] < t.y[b]; });
  } else {
    Rng prng = substream(opt.seed, kTagPartition);
    std::shuffle(order.begin(), order.end(), prng);
  }
  t.user_indices.assign(t.K, {});
  const int per = n / t.K;
  for (int k = 0; k < t.K; ++k)
    t.user_indices[k].assign(order.begin() + k * per, order.begin() + (k + 1) * per);

  t.delta = estimate_delta(t, Vec::Zero(t.Q), opt.pilot_batches, opt.delta_inflation, opt.seed);
  return t;
}

std::vector<int> batch_indices(const LearningTask& task, int k, int round, std::uint64_t batch_seed) {
  const auto& pool = task.user_indices.at(k);
  const int B = task.samples_per_round;
  Rng rng = substream(batch_seed, kTagBatch ^ (static_cast<std::uint64_t>(round) << 8) ^
                                      static_cast<std::uint64_t>(k));
  // Partial Fisher-Yates over positions; sampling without replacement.
  std::vector<int> pos(pool.size());
  std::iota(pos.begin(), pos.end(), 0);
  std::vector<int> out(B);
  for (int i = 0; i < B; ++i) {
    std::uniform_int_distribution<int> pick(i, static_cast<int>(pos.size()) - 1);
    int j = pick(rng);
    std::swap(pos[i], pos[j]);
    out[i] = pool[pos[i]];
  }
  return out;
}

Vec local_gradient(const LearningTask& task, int k, const Vec& w, int round,
                   std::uint64_t batch_seed) {
  auto idx = batch_indices(task, k, round, batch_seed);
  Vec g = Vec::Zero(task.Q);
  for (int i : idx) {
    double res = task.X.row(i).dot(w) - task.y[i];
    g += res * task.X.row(i).transpose();
  }
  return g / static_cast<double>(idx.size());
}

Vec noisy_global_update(const Vec& w, const std::vector<Vec>& local_grads,
                        const std::vector<double>& effective, double sigma2, double lambda_t,
                        Rng& rng) {
  if (local_grads.size() != effective.size() || local_grads.empty())
    throw std::invalid_argument("noisy_global_update: need one effective gain per gradient");
  const int Q = static_cast<int>(w.size());
  const double K = static_cast<double>(local_grads.size());
  Vec s = Vec::Zero(Q);
  for (size_t k = 0; k < local_grads.size(); ++k) s += effective[k] * local_grads[k];
  const double sd = std::sqrt(sigma2);
  for (int i = 0; i < Q; ++i) s[i] += sd * rnormal(rng);
  return w - lambda_t * (s / K);
}

Vec estimate_delta(const LearningTask& task, const Vec& w, int batches, double inflation,
                   std::uint64_t seed) {
  Vec g = task.full_gradient(w);
  Vec dev = Vec::Zero(task.Q);
  for (int b = 0; b < batches; ++b) {
    const int k = b % task.K;
    Vec gk = local_gradient(task, k, w, b, seed ^ kTagPilot);
    dev = dev.cwiseMax((gk - g).cwiseAbs());
  }
  return inflation * dev;
}

LearningRun train(const LearningTask& task, const std::vector<std::vector<double>>& effective,
                  double sigma2, std::uint64_t run_seed, const TrainOptions& opt) {
  const int T = static_cast<int>(effective.size());
  if (T < 1) throw std::invalid_argument("train: need at least one round");
  LearningRun run;
  Vec w = opt.w0.size() ? opt.w0 : Vec(Vec::Zero(task.Q));
  run.initial_gap = task.gap(w);
  Rng noise = substream(run_seed, kTagNoise);
  std::vector<Vec> grads(task.K);
  for (int t = 0; t < T; ++t) {
    const auto& eff = effective[t];
    if (static_cast<int>(eff.size()) != task.K)
      throw std::invalid_argument("train: round " + std::to_string(t + 1) +
                                  " has the wrong number of effective gains");
    for (double x : eff)
      if (!std::isfinite(x) || x < 0)
        throw std::domain_error("train: infeasible allocation in round " + std::to_string(t + 1));
    double lam = opt.rate.at(t + 1);
    if (opt.rate.diminishing && opt.clamp_to_cap) {
      double s1 = 0, s2 = 0;
      for (double x : eff) {
        s1 += x;
        s2 += x * x;
      }
      const double K = task.K;
      double cap = s2 > 0 ? (2 * K * s1 - K * K) / (task.L_smooth * s2) : 0.0;
      if (cap > 0) lam = std::min(lam, cap);
    }
    for (int k = 0; k < task.K; ++k) grads[k] = local_gradient(task, k, w, t, run_seed);
    w = noisy_global_update(w, grads, eff, sigma2, lam, noise);
    run.w_trace.push_back(w);
    run.gap_trace.push_back(task.gap(w));
    run.mse_trace.push_back(aggregation_mse(eff, sigma2, task.K));
    run.lambda_trace.push_back(lam);
  }
  return run;
}

}  // namespace starfl
