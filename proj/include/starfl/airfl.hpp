#pragma once

#include "starfl/common.hpp"

namespace starfl {

struct TaskOptions {
  int num_users = 3;
  int samples_per_round = 50;
  int num_train = 30000;
  int num_test = 10000;
  double noise_scale = 0.5;  // y = c^T x + noise_scale * n0
  bool non_iid = false;      // label-sorted partition
  int pilot_batches = 1000;
  double delta_inflation = 1.1;
  std::uint64_t seed = 1;
};

// Linear regression with mean-squared loss F(w) = (1/2n) sum (y - x^T w)^2.
struct LearningTask {
  int Q = 10;
  int K = 1;
  int samples_per_round = 50;
  std::uint64_t seed = 1;
  Vec c_true;
  Mat X;  // training inputs, one row per sample
  Vec y;
  Mat X_test;
  Vec y_test;
  std::vector<std::vector<int>> user_indices;

  Mat hessian;  // X^T X / n
  Vec linear;   // X^T y / n
  Vec w_star;
  double F_star = 0.0;
  double L_smooth = 0.0;
  double mu_strong = 0.0;
  Vec delta;

  double loss(const Vec& w) const;
  // F(w) - F*, evaluated as (1/2)(w - w*)^T H (w - w*) so it is never negative.
  double gap(const Vec& w) const;
  Vec full_gradient(const Vec& w) const;
  double test_loss(const Vec& w) const;
};

LearningTask make_synthetic_task(const TaskOptions& opt);

// Gradient of user k's loss on the round's mini-batch (drawn without
// replacement from that user's partition with a stream fixed by batch_seed).
Vec local_gradient(const LearningTask& task, int k, const Vec& w, int round,
                   std::uint64_t batch_seed);

// Indices of the mini-batch used by local_gradient.
std::vector<int> batch_indices(const LearningTask& task, int k, int round, std::uint64_t batch_seed);

// ghat = (1/K)(sum_k x_k g_k + z), z ~ N(0, sigma2 I); returns w - lambda ghat.
Vec noisy_global_update(const Vec& w, const std::vector<Vec>& local_grads,
                        const std::vector<double>& effective, double sigma2, double lambda_t,
                        Rng& rng);

// Pilot estimate of the per-coordinate deviation bound at w.
Vec estimate_delta(const LearningTask& task, const Vec& w, int batches, double inflation,
                   std::uint64_t seed);

struct LearningRate {
  bool diminishing = false;
  double lambda = 1e-4;
  double Gamma = 2.0;
  double nu = 1.0;
  double at(int t) const { return diminishing ? Gamma / (t + nu) : lambda; }
};

struct LearningRun {
  std::vector<Vec> w_trace;      // w^(t+1) after round t
  std::vector<double> gap_trace;  // F(w^(t+1)) - F*
  std::vector<double> mse_trace;
  std::vector<double> lambda_trace;
  double initial_gap = 0.0;
  int rounds() const { return static_cast<int>(gap_trace.size()); }
};

struct TrainOptions {
  LearningRate rate;
  // Clamp diminishing steps to (2K sum x - K^2)/(L sum x^2) when positive.
  bool clamp_to_cap = true;
  Vec w0;  // defaults to zero
};

// effective[t][k]: real effective gains of the AirFL users in round t.
// sigma2: receiver noise (same units as the effective gains).
LearningRun train(const LearningTask& task, const std::vector<std::vector<double>>& effective,
                  double sigma2, std::uint64_t run_seed, const TrainOptions& opt);

}  // namespace starfl
