#pragma once

#include "starfl/common.hpp"

namespace starfl {

struct PowerSchedule {
  // p[u][t]: transmit amplitude of user u in round t (magnitude; AirFL users
  // additionally rotate by the conjugate channel phase).
  std::vector<std::vector<double>> p;
  std::vector<double> P_peak;
  std::vector<double> P_avg;

  int num_users() const { return static_cast<int>(p.size()); }
  int rounds() const { return p.empty() ? 0 : static_cast<int>(p[0].size()); }
  bool peak_ok(double tol = 1e-9) const;
  bool average_ok(double tol = 1e-9) const;
};

struct SinrReport {
  std::vector<double> gamma;
  std::vector<double> rate;
  double sum_rate = 0.0;
};

// gains ordered by user index: N NOMA users first, then K AirFL users.
bool decoding_order_ok(const std::vector<double>& gains, int N, int K);

// First violating pair (i, j) with gains[i] < gains[j] where i must not be
// weaker than j; (-1, -1) when the order holds.
std::pair<int, int> decoding_order_violation(const std::vector<double>& gains, int N, int K);

double sinr(int n, const std::vector<double>& gains, const std::vector<double>& powers, int N,
            double sigma2);

SinrReport sinr_report(const std::vector<double>& gains, const std::vector<double>& powers, int N,
                       double sigma2);

double aggregation_mse(const std::vector<double>& effective, double sigma2, int K);

struct DecodingOrderError : std::runtime_error {
  int first, second;
  DecodingOrderError(int a, int b);
};

struct RoundOutput {
  std::vector<cd> noma_decoded;
  cd residual;  // y after perfect cancellation of every NOMA signal
  cd average;   // residual / K
};

// channels: combined complex channel per user. powers: magnitudes.
RoundOutput simulate_round(const std::vector<cd>& channels, const std::vector<double>& powers,
                           int N, const std::vector<cd>& symbols, double sigma2, Rng& rng);

}  // namespace starfl
