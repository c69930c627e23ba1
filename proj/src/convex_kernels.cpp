#include "starfl/convex_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace starfl {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::MaxIter: return "max_iter";
  }
  return "unknown";
}

double eval_constraint(const QuadConstraint& c, const Vec& x) {
  double v = c.c;
  if (c.b.size()) v += c.b.dot(x);
  if (c.A.size()) v += x.dot(c.A * x);
  return v;
}

namespace {

// Constraint restricted to the variables it touches.
struct Compact {
  std::vector<int> idx;
  Mat A;  // empty when affine
  Vec b;
  double c = 0.0;

  double value(const Vec& x) const {
    double v = c;
    Vec xs(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) xs[i] = x[idx[i]];
    v += b.dot(xs);
    if (A.size()) v += xs.dot(A * xs);
    return v;
  }
};

Compact compact(const QuadConstraint& q, int n) {
  std::vector<char> used(n, 0);
  if (q.b.size())
    for (int i = 0; i < n; ++i)
      if (q.b[i] != 0.0) used[i] = 1;
  if (q.A.size())
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (q.A(i, j) != 0.0) used[i] = used[j] = 1;
  Compact c;
  for (int i = 0; i < n; ++i)
    if (used[i]) c.idx.push_back(i);
  const int k = static_cast<int>(c.idx.size());
  c.b = Vec::Zero(k);
  for (int i = 0; i < k; ++i) c.b[i] = q.b.size() ? q.b[c.idx[i]] : 0.0;
  if (q.A.size()) {
    c.A = Mat(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) c.A(i, j) = 0.5 * (q.A(c.idx[i], c.idx[j]) + q.A(c.idx[j], c.idx[i]));
  }
  c.c = q.c;
  // Barrier steps are scale invariant; phase 1 is not, so normalize.
  double s = std::abs(c.c);
  if (c.b.size()) s = std::max(s, c.b.cwiseAbs().maxCoeff());
  if (c.A.size()) s = std::max(s, c.A.cwiseAbs().maxCoeff());
  if (s > 0) {
    c.b /= s;
    if (c.A.size()) c.A /= s;
    c.c /= s;
  }
  return c;
}

struct Barrier {
  std::vector<Compact> cons;
  Vec cost;
  int n = 0;

  double max_value(const Vec& x) const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& c : cons) m = std::max(m, c.value(x));
    return m;
  }

  // t c^T x - sum log(-f_i); +inf outside the domain.
  double merit(const Vec& x, double t) const {
    double v = t * cost.dot(x);
    for (const auto& c : cons) {
      double f = c.value(x);
      if (!(f < 0)) return std::numeric_limits<double>::infinity();
      v -= std::log(-f);
    }
    return v;
  }

  // Newton centering; returns steps taken.
  int center(Vec& x, double t, int max_steps) const {
    int steps = 0;
    Vec g(n);
    Mat H(n, n);
    for (; steps < max_steps; ++steps) {
      g = t * cost;
      H.setZero();
      for (const auto& c : cons) {
        const int k = static_cast<int>(c.idx.size());
        Vec xs(k);
        for (int i = 0; i < k; ++i) xs[i] = x[c.idx[i]];
        double f = c.c + c.b.dot(xs);
        Vec gi = c.b;
        if (c.A.size()) {
          Vec Ax = c.A * xs;
          f += xs.dot(Ax);
          gi += 2.0 * Ax;
        }
        const double inv = -1.0 / f;
        for (int i = 0; i < k; ++i) g[c.idx[i]] += inv * gi[i];
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) {
            double h = inv * inv * gi[i] * gi[j];
            if (c.A.size()) h += 2.0 * inv * c.A(i, j);
            H(c.idx[i], c.idx[j]) += h;
          }
      }
      const double reg = 1e-14 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
      H.diagonal().array() += reg;
      Eigen::LDLT<Mat> ldlt(H);
      Vec dx = -ldlt.solve(g);
      const double dec = -g.dot(dx);
      if (!(dec > 0) || dec / 2.0 <= 1e-12) break;
      double step = 1.0;
      const double m0 = merit(x, t);
      while (step > 1e-16) {
        Vec xn = x + step * dx;
        double mn = merit(xn, t);
        if (mn <= m0 - 0.25 * step * dec) {
          x = xn;
          break;
        }
        step *= 0.5;
      }
      if (step <= 1e-16) break;
    }
    return steps;
  }
};

Vec initial_point(const Vec& lo, const Vec& hi) {
  const int n = static_cast<int>(lo.size());
  Vec x(n);
  for (int i = 0; i < n; ++i) {
    bool fl = std::isfinite(lo[i]), fh = std::isfinite(hi[i]);
    if (fl && fh) x[i] = 0.5 * (lo[i] + hi[i]);
    else if (fl) x[i] = lo[i] + 1.0;
    else if (fh) x[i] = hi[i] - 1.0;
    else x[i] = 0.0;
  }
  return x;
}

}  // namespace

QcqpResult solve_qcqp(const QcqpProblem& prob, const QcqpOptions& opt, const std::optional<Vec>& x0) {
  const int n = prob.dim();
  if (prob.lo.size() != n || prob.hi.size() != n)
    throw std::invalid_argument("solve_qcqp: box size mismatch");
  for (int i = 0; i < n; ++i)
    if (prob.lo[i] > prob.hi[i]) throw std::invalid_argument("solve_qcqp: box with lo > hi");

  std::vector<QuadConstraint> all = prob.quad_constraints;
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(prob.lo[i])) {
      QuadConstraint q;
      q.b = Vec::Zero(n);
      q.b[i] = -1.0;
      q.c = prob.lo[i];
      all.push_back(q);
    }
    if (std::isfinite(prob.hi[i])) {
      QuadConstraint q;
      q.b = Vec::Zero(n);
      q.b[i] = 1.0;
      q.c = -prob.hi[i];
      all.push_back(q);
    }
  }

  QcqpResult res;
  Barrier bar;
  bar.n = n;
  for (const auto& q : all) {
    Compact c = compact(q, n);
    if (c.idx.empty()) {
      if (c.c > 0) {
        res.status = SolveStatus::Infeasible;
        res.max_violation = c.c;
        res.x = Vec::Zero(n);
        return res;
      }
      continue;
    }
    bar.cons.push_back(std::move(c));
  }
  const int m = static_cast<int>(bar.cons.size());

  Vec x = x0 ? *x0 : initial_point(prob.lo, prob.hi);
  if (x.size() != n) throw std::invalid_argument("solve_qcqp: initial point size mismatch");

  // Phase 1: minimize s subject to f_i(x) <= s, with s >= -1 to keep it bounded.
  if (m > 0 && !(bar.max_value(x) < -1e-12)) {
    Barrier p1;
    p1.n = n + 1;
    p1.cost = Vec::Zero(n + 1);
    p1.cost[n] = 1.0;
    for (const auto& c : bar.cons) {
      Compact a = c;
      a.idx.push_back(n);
      a.b.conservativeResize(a.b.size() + 1);
      a.b[a.b.size() - 1] = -1.0;
      if (a.A.size()) {
        const int k = static_cast<int>(a.A.rows());
        a.A.conservativeResize(k + 1, k + 1);
        a.A.row(k).setZero();
        a.A.col(k).setZero();
      }
      p1.cons.push_back(std::move(a));
    }
    Compact floor;
    floor.idx = {n};
    floor.b = Vec::Constant(1, -1.0);
    floor.c = -1.0;
    p1.cons.push_back(floor);
    Vec y(n + 1);
    y.head(n) = x;
    y[n] = std::max(bar.max_value(x), 0.0) + 1.0;
    double t = 1.0;
    bool found = false;
    for (int stage = 0; stage < 60; ++stage) {
      res.newton_steps += p1.center(y, t, opt.max_iter);
      if (y[n] < 0 && bar.max_value(y.head(n)) < 0) {
        found = true;
        break;
      }
      const double lower = y[n] - (m + 1) / t;
      if (lower > 0 || (m + 1) / t < 1e-14) break;
      t *= opt.mu;
    }
    if (!found) {
      res.status = SolveStatus::Infeasible;
      res.max_violation = std::max(bar.max_value(y.head(n)), 0.0);
      res.x = y.head(n);
      res.objective = prob.objective.dot(res.x);
      return res;
    }
    x = y.head(n);
  }

  double scale = prob.objective.cwiseAbs().maxCoeff();
  bar.cost = scale > 0 ? Vec(prob.objective / scale) : Vec(Vec::Zero(n));
  if (m == 0) {
    // Box-free, constraint-free: linear objective is unbounded unless zero.
    res.x = x;
    res.status = scale > 0 ? SolveStatus::MaxIter : SolveStatus::Optimal;
    res.objective = prob.objective.dot(x);
    return res;
  }
  double t = 1.0;
  res.status = SolveStatus::MaxIter;
  for (int stage = 0; stage < 80; ++stage) {
    int s = bar.center(x, t, opt.max_iter);
    res.newton_steps += s;
    if (m / t <= opt.tol * std::max(1.0, std::abs(bar.cost.dot(x)))) {
      res.status = s < opt.max_iter ? SolveStatus::Optimal : SolveStatus::MaxIter;
      break;
    }
    t *= opt.mu;
  }
  res.x = x;
  res.objective = prob.objective.dot(x);
  double viol = 0.0;
  for (const auto& q : prob.quad_constraints) viol = std::max(viol, eval_constraint(q, x));
  res.max_violation = viol;
  return res;
}

namespace {

void check_symmetric(double asym, double scale) {
  if (asym > 1e-10 * std::max(1.0, scale))
    throw std::invalid_argument("psd_project: input is not symmetric/Hermitian");
}

}  // namespace

Mat psd_project(const Mat& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("psd_project: matrix not square");
  check_symmetric((A - A.transpose()).cwiseAbs().maxCoeff(), A.cwiseAbs().maxCoeff());
  Mat S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  Vec ev = es.eigenvalues().cwiseMax(0.0);
  Mat out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

Mat real_embed(const CMat& H) {
  const int n = static_cast<int>(H.rows());
  Mat E(2 * n, 2 * n);
  E.topLeftCorner(n, n) = H.real();
  E.bottomRightCorner(n, n) = H.real();
  E.topRightCorner(n, n) = -H.imag();
  E.bottomLeftCorner(n, n) = H.imag();
  return E;
}

CMat real_unembed(const Mat& E) {
  const int n = static_cast<int>(E.rows()) / 2;
  Mat re = 0.5 * (E.topLeftCorner(n, n) + E.bottomRightCorner(n, n));
  Mat im = 0.5 * (E.bottomLeftCorner(n, n) - E.topRightCorner(n, n));
  CMat H(n, n);
  H.real() = re;
  H.imag() = im;
  return H;
}

namespace {

CMat hermitian_psd_part(const CMat& H) {
  Eigen::SelfAdjointEigenSolver<CMat> es(H);
  Vec ev = es.eigenvalues().cwiseMax(0.0);
  const CMat& V = es.eigenvectors();
  CMat out = V * ev.asDiagonal() * V.adjoint();
  return 0.5 * (out + out.adjoint());
}

}  // namespace

CMat psd_project(const CMat& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("psd_project: matrix not square");
  check_symmetric((A - A.adjoint()).cwiseAbs().maxCoeff(), A.cwiseAbs().maxCoeff());
  return hermitian_psd_part(0.5 * (A + A.adjoint()));
}

namespace {

// Isometric vectorization of an n x n Hermitian matrix: n real diagonal
// entries followed by sqrt(2) Re and sqrt(2) Im of each strict upper entry,
// so that svec(A) . svec(B) = tr(A B).
constexpr double kSqrt2 = 1.41421356237309504880;

void svec_into(const CMat& H, double* out) {
  const int n = static_cast<int>(H.rows());
  int k = 0;
  for (int i = 0; i < n; ++i) out[k++] = H(i, i).real();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      out[k++] = kSqrt2 * H(i, j).real();
      out[k++] = kSqrt2 * H(i, j).imag();
    }
}

CMat smat(const double* v, int n) {
  CMat H(n, n);
  int k = 0;
  for (int i = 0; i < n; ++i) H(i, i) = v[k++];
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double re = v[k++] / kSqrt2;
      double im = v[k++] / kSqrt2;
      H(i, j) = cd(re, im);
      H(j, i) = cd(re, -im);
    }
  return H;
}

// For tr(A Q) with Hermitian A the inner product uses conj on the upper
// entries: tr(A Q) = sum A_ii Q_ii + 2 sum_{i<j} Re(A_ij conj(Q_ij)).
void svec_cost_into(const CMat& A, double* out) {
  CMat H = 0.5 * (A + A.adjoint());
  svec_into(H, out);
}

struct Layout {
  int n, M, nb, m_in;
  int blk;  // n*n
  int beta_off() const { return nb * blk; }
  int slack_off() const { return nb * blk + M; }
  int dim() const { return nb * blk + M + m_in; }
};

}  // namespace

double sdp_objective(const SdpProblem& p, const std::vector<CMat>& Q, const Vec& beta) {
  double v = p.c_beta.size() ? p.c_beta.dot(beta) : 0.0;
  for (int b = 0; b < p.num_blocks(); ++b)
    if (p.C[b].size()) v += (p.C[b].cwiseProduct(Q[b].transpose())).sum().real();
  return v;
}

double sdp_violation(const SdpProblem& p, const std::vector<CMat>& Q, const Vec& beta) {
  double v = 0.0;
  const int M = p.M();
  for (int b = 0; b < p.num_blocks(); ++b) {
    for (int m = 0; m < M; ++m) {
      double target = p.link[b] == DiagLink::Beta ? beta[m] : 1.0 - beta[m];
      v = std::max(v, std::abs(Q[b](m, m).real() - target));
    }
    v = std::max(v, std::abs(Q[b](M, M).real() - 1.0));
  }
  for (const auto& in : p.ineqs) {
    double lhs = in.a.size() ? in.a.dot(beta) : 0.0;
    for (int b = 0; b < p.num_blocks(); ++b)
      if (b < static_cast<int>(in.A.size()) && in.A[b].size())
        lhs += (in.A[b].cwiseProduct(Q[b].transpose())).sum().real();
    double scale = std::abs(in.rhs);
    for (int b = 0; b < static_cast<int>(in.A.size()); ++b)
      if (in.A[b].size()) scale = std::max(scale, in.A[b].cwiseAbs().maxCoeff());
    if (in.a.size()) scale = std::max(scale, in.a.cwiseAbs().maxCoeff());
    v = std::max(v, (lhs - in.rhs) / std::max(scale, 1e-300));
  }
  return v;
}

SdpResult solve_sdp(const SdpProblem& p, const SdpOptions& opt, const SdpIterate* warm) {
  const int nb = p.num_blocks();
  if (nb < 1 || p.n < 1) throw std::invalid_argument("solve_sdp: empty problem");
  if (static_cast<int>(p.link.size()) != nb) throw std::invalid_argument("solve_sdp: link size");
  Layout L{p.n, p.M(), nb, static_cast<int>(p.ineqs.size()), p.n * p.n};
  const int D = L.dim();
  const int n_eq = nb * L.M + nb;
  const int rows = n_eq + L.m_in;

  // Affine system A x = b with unit-norm rows (slacks get unit coefficient
  // after the row is normalized).
  Mat A = Mat::Zero(rows, D);
  Vec rhs = Vec::Zero(rows);
  int r = 0;
  for (int b = 0; b < nb; ++b) {
    for (int m = 0; m < L.M; ++m) {
      A(r, b * L.blk + m) = 1.0;
      if (p.link[b] == DiagLink::Beta) {
        A(r, L.beta_off() + m) = -1.0;
      } else {
        A(r, L.beta_off() + m) = 1.0;
        rhs[r] = 1.0;
      }
      ++r;
    }
    A(r, b * L.blk + L.M) = 1.0;
    rhs[r] = 1.0;
    ++r;
  }
  std::vector<double> buf(L.blk);
  for (int i = 0; i < L.m_in; ++i, ++r) {
    const auto& in = p.ineqs[i];
    for (int b = 0; b < nb; ++b)
      if (b < static_cast<int>(in.A.size()) && in.A[b].size()) {
        svec_cost_into(in.A[b], buf.data());
        for (int k = 0; k < L.blk; ++k) A(r, b * L.blk + k) = buf[k];
      }
    if (in.a.size()) A.row(r).segment(L.beta_off(), L.M) = in.a.transpose();
    rhs[r] = in.rhs;
    double nr = A.row(r).norm();
    if (nr > 0) {
      A.row(r) /= nr;
      rhs[r] /= nr;
    }
    A(r, L.slack_off() + i) = 1.0;
  }
  for (int k = 0; k < n_eq; ++k) {
    double nr = A.row(k).norm();
    A.row(k) /= nr;
    rhs[k] /= nr;
  }
  Eigen::LDLT<Mat> aat((A * A.transpose()).eval());

  Vec c = Vec::Zero(D);
  for (int b = 0; b < nb; ++b)
    if (p.C[b].size()) {
      svec_cost_into(p.C[b], buf.data());
      for (int k = 0; k < L.blk; ++k) c[b * L.blk + k] = buf[k];
    }
  if (p.c_beta.size()) c.segment(L.beta_off(), L.M) = p.c_beta;
  const double cscale = c.cwiseAbs().maxCoeff();
  if (cscale > 0) c /= cscale;

  Vec blo = p.beta_lo.size() == L.M ? p.beta_lo : Vec(Vec::Zero(L.M));
  Vec bhi = p.beta_hi.size() == L.M ? p.beta_hi : Vec(Vec::Ones(L.M));
  auto project_cone = [&](const Vec& v) {
    Vec z = v;
    for (int b = 0; b < nb; ++b) {
      CMat H = smat(v.data() + b * L.blk, L.n);
      CMat P = hermitian_psd_part(H);
      svec_into(P, z.data() + b * L.blk);
    }
    for (int m = 0; m < L.M; ++m) z[L.beta_off() + m] = std::clamp(v[L.beta_off() + m], blo[m], bhi[m]);
    for (int i = 0; i < L.m_in; ++i) z[L.slack_off() + i] = std::max(v[L.slack_off() + i], 0.0);
    return z;
  };

  Vec z = Vec::Zero(D), u = Vec::Zero(D);
  double rho = opt.rho;
  if (warm && warm->z.size() == D && warm->u.size() == D) {
    z = warm->z;
    u = warm->u;
    rho = warm->rho;
  } else {
    for (int b = 0; b < nb; ++b) z[b * L.blk + L.M] = 1.0;
  }

  SdpResult res;
  res.status = SolveStatus::MaxIter;
  Vec x(D), xh(D), zprev(D);
  double rp = 0, rd = 0;
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    Vec w = z - u - c / rho;
    x = w - A.transpose() * aat.solve(A * w - rhs);
    xh = opt.over_relax * x + (1.0 - opt.over_relax) * z;
    zprev = z;
    z = project_cone(xh + u);
    u += xh - z;
    rp = (x - z).cwiseAbs().maxCoeff();
    rd = rho * (z - zprev).cwiseAbs().maxCoeff();
    double sp = opt.tol * (1.0 + std::max(x.cwiseAbs().maxCoeff(), z.cwiseAbs().maxCoeff()));
    double sd = opt.tol * (1.0 + rho * u.cwiseAbs().maxCoeff());
    if (rp <= sp && rd <= sd) {
      res.status = SolveStatus::Optimal;
      ++it;
      break;
    }
    // Residual balancing on the scaled residuals.
    if (it % 25 == 24) {
      double ratio = std::sqrt((rp / sp) / std::max(rd / sd, 1e-300));
      if (ratio > 2.0 || ratio < 0.5) {
        ratio = std::clamp(ratio, 1e-6 / rho, 1e6 / rho);
        rho *= ratio;
        u /= ratio;
      }
    }
    // A growing scaled dual with a stalled primal residual certifies
    // (numerically) that the affine set misses the cone.
    if (it >= 300 && rp > 1e-3 && rho * u.cwiseAbs().maxCoeff() > 1e4) {
      ++it;
      break;
    }
  }
  res.iterations = it;
  res.primal_residual = rp;
  res.dual_residual = rd;
  res.Q.resize(nb);
  res.min_eig = std::numeric_limits<double>::infinity();
  for (int b = 0; b < nb; ++b) {
    res.Q[b] = smat(z.data() + b * L.blk, L.n);
    Eigen::SelfAdjointEigenSolver<CMat> es(res.Q[b], Eigen::EigenvaluesOnly);
    res.min_eig = std::min(res.min_eig, es.eigenvalues()[0]);
  }
  res.beta = z.segment(L.beta_off(), L.M);
  res.objective = sdp_objective(p, res.Q, res.beta);
  if (res.status != SolveStatus::Optimal && rp > 1e-3) res.status = SolveStatus::Infeasible;
  res.state = {z, u, rho};
  return res;
}

}  // namespace starfl
