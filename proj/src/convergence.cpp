#include "starfl/convergence.hpp"

#include <cmath>

namespace starfl {

double lambda3(const std::vector<double>& effective, double mu, double L, double lambda, int K) {
  double s = 0.0;
  const double Kd = K;
  for (double x : effective) s += 2.0 * mu * lambda * x / Kd - mu * L * lambda * lambda * x * x / (Kd * Kd);
  return 1.0 - s;
}

double lambda4(const std::vector<double>& effective, double L, double lambda, int K,
               double delta_norm_sq, int Q, double sigma2) {
  double s = 0.0;
  for (double x : effective) s += x * x;
  const double c = L * lambda * lambda / (2.0 * K * K);
  return c * s * delta_norm_sq + c * Q * sigma2;
}

std::vector<double> upsilon_partial(const std::vector<double>& l3, const std::vector<double>& l4,
                                    double initial_gap) {
  if (l3.size() != l4.size() || l3.empty())
    throw std::invalid_argument("upsilon: need matching non-empty term sequences");
  std::vector<double> out;
  double v = initial_gap;
  for (size_t t = 0; t < l3.size(); ++t) {
    v = l3[t] * v + l4[t];
    out.push_back(v);
  }
  return out;
}

double upsilon(const std::vector<double>& l3, const std::vector<double>& l4, double initial_gap) {
  return upsilon_partial(l3, l4, initial_gap).back();
}

GapTerms gap_terms(const std::vector<std::vector<double>>& effective, const BoundConstants& c,
                   double initial_gap) {
  GapTerms g;
  g.initial_gap = initial_gap;
  for (const auto& e : effective) {
    g.lambda3.push_back(lambda3(e, c.mu, c.L, c.lambda, c.K));
    g.lambda4.push_back(lambda4(e, c.L, c.lambda, c.K, c.delta_norm_sq, c.Q, c.sigma2));
  }
  g.upsilon = upsilon(g.lambda3, g.lambda4, initial_gap);
  return g;
}

double one_round_bound(double prev_gap, double grad_norm_sq, const std::vector<double>& effective,
                       const BoundConstants& c) {
  const double K2 = static_cast<double>(c.K) * c.K;
  const double lam = c.lambda;
  double descent = 0.0, spread = 0.0;
  for (double x : effective) {
    descent += lam / c.K * x - c.L * lam * lam / (2.0 * K2) * x * x;
    spread += x * x;
  }
  return prev_gap - descent * grad_norm_sq + c.L * lam * lam / (2.0 * K2) * spread * c.delta_norm_sq +
         c.L * c.Q * lam * lam * c.sigma2 / (2.0 * K2);
}

DiminishingStep diminishing_gap(int t, double Gamma, double nu, const BoundConstants& c,
                                const std::vector<double>& effective, double prev_gap) {
  if (!(Gamma * c.mu > 1.0)) throw std::invalid_argument("diminishing_gap: need Gamma > 1/mu");
  if (!(nu > 0)) throw std::invalid_argument("diminishing_gap: need nu > 0");
  const double K = c.K;
  double s1 = 0.0, s2 = 0.0;
  for (double x : effective) {
    s1 += x;
    s2 += x * x;
  }
  DiminishingStep d;
  d.cap = (2.0 * K * s1 - K * K) / (c.L * s2);
  if (!(d.cap > 0))
    throw std::domain_error("diminishing_gap: step cap is non-positive, premise fails");
  d.lambda_t = std::min(Gamma / (t + nu), d.cap);
  d.Q_tilde = c.L * Gamma * Gamma * (s2 * c.delta_norm_sq + c.Q * c.sigma2) /
              (2.0 * K * K * (c.mu * Gamma - 1.0));
  d.xi = std::max((t + nu) * prev_gap, d.Q_tilde);
  d.bound = d.xi / (t + 1.0 + nu);
  return d;
}

double aggregation_error_bound(const ErrorBoundInputs& in, const BoundConstants& c,
                               double initial_gap) {
  if (c.lambda > 1.0 / (2.0 + c.L))
    throw std::domain_error("aggregation_error_bound: requires lambda <= 1/(2+L)");
  if (in.bias_sq.size() != in.grad_mse.size())
    throw std::invalid_argument("aggregation_error_bound: length mismatch");
  const int T = static_cast<int>(in.bias_sq.size());
  const double mt = 1.0 - c.lambda * c.mu;
  double out = std::pow(mt, T) * initial_gap;
  for (int t = 1; t <= T; ++t) {
    double w = std::pow(mt, T - t);
    double b = in.bias_sq[t - 1];
    out += 0.5 * w * b;
    out += c.L * c.lambda * c.lambda / 2.0 * w * (c.L * b + c.delta_norm_sq + in.grad_mse[t - 1]);
  }
  return out;
}

double dupsilon_dl4(const std::vector<double>& l3, int t) {
  double p = 1.0;
  for (size_t i = t + 1; i < l3.size(); ++i) p *= l3[i];
  return p;
}

double dupsilon_dl3(const std::vector<double>& l3, const std::vector<double>& l4,
                    double initial_gap, int t) {
  const int T = static_cast<int>(l3.size());
  // Initial-gap term: product over every round except t.
  double prod_all = 1.0;
  for (int i = 0; i < T; ++i)
    if (i != t) prod_all *= l3[i];
  double out = initial_gap * prod_all;
  // History term: sum_{j<t} Lambda4^(j) prod_{i=j+1..T, i != t} Lambda3^(i).
  for (int j = 0; j < t; ++j) {
    double p = 1.0;
    for (int i = j + 1; i < T; ++i)
      if (i != t) p *= l3[i];
    out += l4[j] * p;
  }
  return out;
}

double grad_upsilon_power(const std::vector<std::vector<double>>& gains,
                          const std::vector<std::vector<double>>& powers, const BoundConstants& c,
                          double initial_gap, int t, int k) {
  const int T = static_cast<int>(gains.size());
  std::vector<double> l3(T), l4(T);
  for (int i = 0; i < T; ++i) {
    std::vector<double> eff(gains[i].size());
    for (size_t j = 0; j < eff.size(); ++j) eff[j] = gains[i][j] * powers[i][j];
    l3[i] = lambda3(eff, c.mu, c.L, c.lambda, c.K);
    l4[i] = lambda4(eff, c.L, c.lambda, c.K, c.delta_norm_sq, c.Q, c.sigma2);
  }
  const double h = gains[t][k];
  const double p = powers[t][k];
  const double K = c.K;
  double d3 = -(2.0 * c.mu * c.lambda * h / K) * (1.0 - c.lambda * c.L * h * p / K);
  double d4 = (c.L * c.lambda * c.lambda * c.delta_norm_sq / (K * K)) * h * h * p;
  return dupsilon_dl3(l3, l4, initial_gap, t) * d3 + dupsilon_dl4(l3, t) * d4;
}

CMat grad_upsilon_Q(const CMat& R_check, const CMat& R_bar, const std::vector<double>& l3,
                    const std::vector<double>& l4, const BoundConstants& c, double initial_gap,
                    int t) {
  const double K2 = static_cast<double>(c.K) * c.K;
  const double b = c.mu * c.L * c.lambda * c.lambda / K2;
  const double e = c.L * c.lambda * c.lambda * c.delta_norm_sq / (2.0 * K2);
  return dupsilon_dl3(l3, l4, initial_gap, t) * b * R_check.transpose() +
         dupsilon_dl4(l3, t) * e * R_bar.transpose();
}

}  // namespace starfl
