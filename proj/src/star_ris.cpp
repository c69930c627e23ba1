#include "starfl/star_ris.hpp"

#include <cmath>

namespace starfl {

void StarRisConfig::validate() const {
  if (theta.size() != beta.size() || phi.size() != beta.size())
    throw std::invalid_argument("StarRisConfig: length mismatch");
  for (int m = 0; m < M(); ++m) {
    if (beta[m] != 0.0 && beta[m] != 1.0)
      throw std::invalid_argument("StarRisConfig: beta must be binary");
    if (theta[m] < 0 || theta[m] >= 2 * kPi || phi[m] < 0 || phi[m] >= 2 * kPi)
      throw std::invalid_argument("StarRisConfig: angle outside [0, 2pi)");
  }
}

StarRisConfig StarRisConfig::random(int M, Rng& rng) {
  StarRisConfig c;
  c.beta = Vec(M);
  c.theta = Vec(M);
  c.phi = Vec(M);
  for (int m = 0; m < M; ++m) {
    c.beta[m] = runiform(rng) < 0.5 ? 1.0 : 0.0;
    c.theta[m] = wrap_angle(runiform(rng, 0.0, 2 * kPi));
    c.phi[m] = wrap_angle(runiform(rng, 0.0, 2 * kPi));
  }
  return c;
}

Vec side_beta(const StarRisConfig& cfg, Side side) {
  return side == Side::Reflect ? cfg.beta : Vec(Vec::Ones(cfg.M()) - cfg.beta);
}

CMat side_matrix(const StarRisConfig& cfg, Side side) {
  const int M = cfg.M();
  CMat T = CMat::Zero(M, M);
  Vec b = side_beta(cfg, side);
  const Vec& ang = side == Side::Reflect ? cfg.theta : cfg.phi;
  for (int m = 0; m < M; ++m) T(m, m) = b[m] * std::polar(1.0, ang[m]);
  return T;
}

CVec config_vector(const StarRisConfig& cfg, Side side) {
  const int M = cfg.M();
  CVec q(M);
  Vec b = side_beta(cfg, side);
  const Vec& ang = side == Side::Reflect ? cfg.theta : cfg.phi;
  for (int m = 0; m < M; ++m) q[m] = b[m] * std::polar(1.0, -ang[m]);
  return q;
}

CVec cascade_vector(const CVec& r_bar, const CVec& r_u) {
  if (r_bar.size() != r_u.size()) throw std::invalid_argument("cascade_vector: size mismatch");
  return r_bar.conjugate().cwiseProduct(r_u);
}

CMat lift_block(const CVec& R, cd s) {
  const int M = static_cast<int>(R.size());
  CMat B = CMat::Zero(M + 1, M + 1);
  B.topLeftCorner(M, M) = R * R.adjoint();
  B.topRightCorner(M, 1) = R * std::conj(s);
  B.bottomLeftCorner(1, M) = s * R.adjoint();
  return B;
}

CMat lift_q(const CVec& q) {
  const int M = static_cast<int>(q.size());
  CVec qb(M + 1);
  qb.head(M) = q;
  qb[M] = 1.0;
  return qb * qb.adjoint();
}

cd trace_product(const CMat& A, const CMat& Q) {
  // tr(A Q) = sum_ij A_ij Q_ji
  return (A.cwiseProduct(Q.transpose())).sum();
}

GainLift lift_gain(const CVec& q, cd h, const CVec& R) {
  if (q.size() != R.size()) throw std::invalid_argument("lift_gain: size mismatch");
  GainLift g;
  g.R_tilde = lift_block(R, h);
  g.Q = lift_q(q);
  g.gain = trace_product(g.R_tilde, g.Q).real() + std::norm(h);
  return g;
}

MseLift lift_mse(const CVec& R, cd p, cd h) {
  MseLift m;
  m.h_hat = h * p - 1.0;
  m.R_hat = lift_block(R * p, m.h_hat);
  return m;
}

GapLift lift_gap_terms(const CVec& R, cd p, cd h, double mu, double L, double lambda, int K) {
  if (!(mu > 0 && L > 0 && lambda > 0 && K > 0))
    throw std::invalid_argument("lift_gap_terms: constants must be positive");
  GapLift g;
  g.h_ring = h * p;
  // a / (2b) with a = 2 mu lambda / K and b = mu L lambda^2 / K^2.
  g.h_check = g.h_ring - static_cast<double>(K) / (L * lambda);
  CVec Rr = R * p;
  g.R_check = lift_block(Rr, g.h_check);
  g.R_bar = lift_block(Rr, g.h_ring);
  return g;
}

double eigen_ratio(const CMat& Q) {
  Eigen::SelfAdjointEigenSolver<CMat> es(Q);
  const Vec& ev = es.eigenvalues();
  const int n = static_cast<int>(ev.size());
  if (n < 2) return 0.0;
  double l1 = ev[n - 1];
  if (l1 <= 0) return 1.0;
  return std::abs(ev[n - 2]) / l1;
}

CVec extract_q(const CMat& Q) {
  Eigen::SelfAdjointEigenSolver<CMat> es(Q);
  const int n = static_cast<int>(Q.rows());
  double l1 = std::max(es.eigenvalues()[n - 1], 0.0);
  CVec v = std::sqrt(l1) * es.eigenvectors().col(n - 1);
  cd last = v[n - 1];
  if (std::abs(last) < 1e-12) return CVec::Zero(n - 1);
  // Dividing by the last coordinate fixes the global phase and sets it to 1.
  CVec q = v.head(n - 1) / last;
  return q;
}

StarRisConfig round_config(const CVec& qr, const CVec& qt) {
  const int M = static_cast<int>(qr.size());
  StarRisConfig c;
  c.beta = Vec(M);
  c.theta = Vec::Zero(M);
  c.phi = Vec::Zero(M);
  for (int m = 0; m < M; ++m) {
    double ar = std::norm(qr[m]);
    double at = std::norm(qt[m]);
    double share = (ar + at) > 0 ? ar / (ar + at) : 0.5;
    c.beta[m] = share >= 0.5 ? 1.0 : 0.0;
    // q carries conjugated phases.
    c.theta[m] = ar > 0 ? wrap_angle(-std::arg(qr[m])) : 0.0;
    c.phi[m] = at > 0 ? wrap_angle(-std::arg(qt[m])) : 0.0;
  }
  return c;
}

namespace {

CMat sqrt_psd(const CMat& Q) {
  Eigen::SelfAdjointEigenSolver<CMat> es(Q);
  Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

CVec normalize_last(const CVec& v) {
  const int n = static_cast<int>(v.size());
  cd last = v[n - 1];
  if (std::abs(last) < 1e-300) return CVec::Zero(n - 1);
  return v.head(n - 1) / last;
}

}  // namespace

RandomizationResult gaussian_randomization(
    const CMat& Q_reflect, const CMat& Q_transmit, int num_samples, Rng& rng,
    const std::function<std::optional<double>(const StarRisConfig&)>& evaluate) {
  RandomizationResult best;
  auto consider = [&](const StarRisConfig& c) {
    auto obj = evaluate(c);
    if (!obj) return;
    ++best.feasible_draws;
    if (!best.ok || *obj < best.objective) {
      best.ok = true;
      best.objective = *obj;
      best.config = c;
    }
  };
  // Deterministic principal-eigenvector candidate first.
  consider(round_config(extract_q(Q_reflect), extract_q(Q_transmit)));
  CMat Sr = sqrt_psd(Q_reflect);
  CMat St = sqrt_psd(Q_transmit);
  const int n = static_cast<int>(Q_reflect.rows());
  for (int s = 0; s < num_samples; ++s) {
    CVec zr(n), zt(n);
    for (int i = 0; i < n; ++i) zr[i] = cnormal(rng);
    for (int i = 0; i < n; ++i) zt[i] = cnormal(rng);
    consider(round_config(normalize_last(Sr * zr), normalize_last(St * zt)));
  }
  return best;
}

}  // namespace starfl
