#pragma once

#include "starfl/common.hpp"

namespace starfl {

// Learning constants entering every bound.
struct BoundConstants {
  double mu = 1.0;
  double L = 1.0;
  double lambda = 1e-4;
  double delta_norm_sq = 0.0;  // ||delta||_2^2
  int Q = 10;
  double sigma2 = 0.0;
  int K = 1;
};

struct GapTerms {
  std::vector<double> lambda3;
  std::vector<double> lambda4;
  double upsilon = 0.0;
  double initial_gap = 0.0;
};

// Effective gains are the real products hbar_k p_k of the AirFL users.
double lambda3(const std::vector<double>& effective, double mu, double L, double lambda, int K);
double lambda4(const std::vector<double>& effective, double L, double lambda, int K,
               double delta_norm_sq, int Q, double sigma2);

double upsilon(const std::vector<double>& l3, const std::vector<double>& l4, double initial_gap);

// Bound after each round t = 1..T (the last entry equals upsilon).
std::vector<double> upsilon_partial(const std::vector<double>& l3, const std::vector<double>& l4,
                                    double initial_gap);

// effective[t][k] for t = 1..T.
GapTerms gap_terms(const std::vector<std::vector<double>>& effective, const BoundConstants& c,
                   double initial_gap);

double one_round_bound(double prev_gap, double grad_norm_sq, const std::vector<double>& effective,
                       const BoundConstants& c);

struct DiminishingStep {
  double lambda_t;
  double cap;
  double Q_tilde;
  double xi;
  double bound;
};

DiminishingStep diminishing_gap(int t, double Gamma, double nu, const BoundConstants& c,
                                const std::vector<double>& effective, double prev_gap);

struct ErrorBoundInputs {
  std::vector<double> bias_sq;
  std::vector<double> grad_mse;
};

double aggregation_error_bound(const ErrorBoundInputs& in, const BoundConstants& c,
                               double initial_gap);

// dUpsilon / dp_u^(t) for AirFL user k (0-based round t).
double grad_upsilon_power(const std::vector<std::vector<double>>& gains,
                          const std::vector<std::vector<double>>& powers, const BoundConstants& c,
                          double initial_gap, int t, int k);

// dUpsilon / dQ_k^(t) given the lifted matrices of that user/round; l3, l4
// are the per-round terms at the linearization point.
CMat grad_upsilon_Q(const CMat& R_check, const CMat& R_bar, const std::vector<double>& l3,
                    const std::vector<double>& l4, const BoundConstants& c, double initial_gap,
                    int t);

// Coefficients dUpsilon/dLambda3^(t) and dUpsilon/dLambda4^(t).
double dupsilon_dl3(const std::vector<double>& l3, const std::vector<double>& l4,
                    double initial_gap, int t);
double dupsilon_dl4(const std::vector<double>& l3, int t);

}  // namespace starfl
