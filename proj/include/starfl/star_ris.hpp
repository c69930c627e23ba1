#pragma once

#include <functional>
#include <optional>

#include "starfl/common.hpp"

namespace starfl {

struct StarRisConfig {
  Vec beta;   // 1 = reflect, 0 = transmit
  Vec theta;  // reflection phases
  Vec phi;    // transmission phases

  int M() const { return static_cast<int>(beta.size()); }
  void validate() const;
  static StarRisConfig random(int M, Rng& rng);
};

CMat side_matrix(const StarRisConfig& cfg, Side side);

// q_u carries conjugated phases: q_m = beta_m e^{-j theta_m} on the reflect
// side, so that r_bar^H Theta r = q^H R with R = diag(r_bar^H) r.
CVec config_vector(const StarRisConfig& cfg, Side side);

// Per-side mode vector: beta on the reflect side, 1 - beta on the other.
Vec side_beta(const StarRisConfig& cfg, Side side);

// Cascaded coefficient vector R_u = diag(r_bar^H) r_u.
CVec cascade_vector(const CVec& r_bar, const CVec& r_u);

// Builds [[R R^H, R s^*], [s R^H, 0]] used by every lifting below.
CMat lift_block(const CVec& R, cd s);

// q_bar q_bar^H with q_bar = [q; 1].
CMat lift_q(const CVec& q);

struct GainLift {
  CMat R_tilde;
  CMat Q;
  double gain;
};

GainLift lift_gain(const CVec& q, cd h, const CVec& R);

// Returns tr(A Q) for Hermitian A, Q without forming the product.
cd trace_product(const CMat& A, const CMat& Q);

struct MseLift {
  CMat R_hat;
  cd h_hat;
};

// Lifted MSE term: |hbar p - 1|^2 = tr(R_hat Q) + |h_hat|^2.
MseLift lift_mse(const CVec& R, cd p, cd h);

struct GapLift {
  CMat R_check;
  CMat R_bar;
  cd h_check;
  cd h_ring;
};

// Lifted contraction/additive terms. p carries the phase that makes the
// effective gain real at the linearization point.
GapLift lift_gap_terms(const CVec& R, cd p, cd h, double mu, double L, double lambda, int K);

struct RandomizationResult {
  bool ok = false;
  StarRisConfig config;
  double objective = 0.0;
  int feasible_draws = 0;
};

// |lambda_2| / lambda_1 of a PSD matrix (0 for a 1 x 1 matrix).
double eigen_ratio(const CMat& Q);

// Extracts q from a lifted matrix: normalize the last coordinate to 1 using
// the principal eigenvector.
CVec extract_q(const CMat& Q);

// Projects a pair of per-side vectors onto the mode-switching set: element m
// goes to the side with the larger magnitude (0.5 threshold on |q_R|^2 when
// both sides are known), phases taken from the chosen side.
StarRisConfig round_config(const CVec& q_reflect, const CVec& q_transmit);

// Gaussian randomization over a pair of per-side lifted matrices. The
// evaluator returns the objective of a feasible candidate or nullopt.
RandomizationResult gaussian_randomization(
    const CMat& Q_reflect, const CMat& Q_transmit, int num_samples, Rng& rng,
    const std::function<std::optional<double>(const StarRisConfig&)>& evaluate);

}  // namespace starfl
