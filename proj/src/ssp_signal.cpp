#include "starfl/ssp_signal.hpp"

#include <cmath>

namespace starfl {

bool PowerSchedule::peak_ok(double tol) const {
  for (int u = 0; u < num_users(); ++u)
    for (double v : p[u])
      if (v * v > P_peak[u] * (1 + tol)) return false;
  return true;
}

bool PowerSchedule::average_ok(double tol) const {
  for (int u = 0; u < num_users(); ++u) {
    double s = 0;
    for (double v : p[u]) s += v * v;
    if (s / rounds() > P_avg[u] * (1 + tol)) return false;
  }
  return true;
}

std::pair<int, int> decoding_order_violation(const std::vector<double>& gains, int N, int K) {
  if (static_cast<int>(gains.size()) != N + K)
    throw std::invalid_argument("decoding_order: expected N + K gains");
  for (int n = 0; n + 1 < N; ++n)
    if (gains[n] < gains[n + 1]) return {n, n + 1};
  if (N > 0)
    for (int k = N; k < N + K; ++k)
      if (gains[N - 1] < gains[k]) return {N - 1, k};
  return {-1, -1};
}

bool decoding_order_ok(const std::vector<double>& gains, int N, int K) {
  return decoding_order_violation(gains, N, K).first < 0;
}

double sinr(int n, const std::vector<double>& gains, const std::vector<double>& powers, int N,
            double sigma2) {
  if (n < 0 || n >= N) throw std::out_of_range("sinr: index is not a NOMA user");
  double interf = sigma2;
  for (size_t u = n + 1; u < gains.size(); ++u) interf += gains[u] * powers[u] * powers[u];
  return gains[n] * powers[n] * powers[n] / interf;
}

SinrReport sinr_report(const std::vector<double>& gains, const std::vector<double>& powers, int N,
                       double sigma2) {
  SinrReport r;
  for (int n = 0; n < N; ++n) {
    double g = sinr(n, gains, powers, N, sigma2);
    r.gamma.push_back(g);
    r.rate.push_back(std::log2(1.0 + g));
    r.sum_rate += r.rate.back();
  }
  return r;
}

double aggregation_mse(const std::vector<double>& effective, double sigma2, int K) {
  if (K < 1) throw std::invalid_argument("aggregation_mse: K must be >= 1");
  double s = sigma2;
  for (double e : effective) s += (e - 1.0) * (e - 1.0);
  return s / (static_cast<double>(K) * K);
}

DecodingOrderError::DecodingOrderError(int a, int b)
    : std::runtime_error("decoding order violated between users " + std::to_string(a) + " and " +
                         std::to_string(b)),
      first(a),
      second(b) {}

RoundOutput simulate_round(const std::vector<cd>& channels, const std::vector<double>& powers,
                           int N, const std::vector<cd>& symbols, double sigma2, Rng& rng) {
  const int U = static_cast<int>(channels.size());
  const int K = U - N;
  std::vector<double> gains(U);
  for (int u = 0; u < U; ++u) gains[u] = std::norm(channels[u]);
  auto v = decoding_order_violation(gains, N, K);
  if (v.first >= 0) throw DecodingOrderError(v.first, v.second);

  // AirFL users pre-rotate by the conjugate channel phase so that their
  // effective gains |hbar| p are real and non-negative.
  std::vector<cd> coeff(U);
  for (int u = 0; u < U; ++u) {
    coeff[u] = powers[u];
    if (u >= N && std::abs(channels[u]) > 0) coeff[u] *= std::conj(channels[u]) / std::abs(channels[u]);
  }
  cd y = std::sqrt(sigma2) * cnormal(rng);
  for (int u = 0; u < U; ++u) y += channels[u] * coeff[u] * symbols[u];

  RoundOutput out;
  // Genie-aided SIC: under the enforced QoS each NOMA symbol is recovered and
  // its contribution removed exactly.
  cd residual = y;
  for (int n = 0; n < N; ++n) {
    out.noma_decoded.push_back(symbols[n]);
    residual -= channels[n] * coeff[n] * symbols[n];
  }
  out.residual = residual;
  out.average = residual / static_cast<double>(K);
  return out;
}

}  // namespace starfl
