#include "starfl/topology_channel.hpp"

#include <cmath>

namespace starfl {

double distance(const Point3& a, const Point3& b) {
  double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

int Topology::num_noma() const {
  int n = 0;
  for (auto r : user_role) n += (r == Role::Noma);
  return n;
}

int Topology::num_airfl() const { return num_users() - num_noma(); }

Side side_of(const Topology& topo, const Point3& user) {
  double axis[3], rel[3];
  for (int i = 0; i < 3; ++i) {
    axis[i] = topo.bs_position[i] - topo.ris_position[i];
    rel[i] = user[i] - topo.ris_position[i];
  }
  double dot = axis[0] * rel[0] + axis[1] * rel[1] + axis[2] * rel[2];
  return dot >= 0.0 ? Side::Reflect : Side::Transmit;
}

Topology make_topology(int N, int K, const Point3& bs, const Point3& ris, double radius,
                       double r_min, Rng& rng) {
  if (N < 0 || K < 1) throw std::invalid_argument("make_topology: need N >= 0 and K >= 1");
  if (!(radius > r_min) || r_min < 0) throw std::invalid_argument("make_topology: bad radius");
  Topology t;
  t.bs_position = bs;
  t.ris_position = ris;
  for (int u = 0; u < N + K; ++u) {
    // Uniform over the annulus area.
    double a = runiform(rng, r_min * r_min, radius * radius);
    double rr = std::sqrt(a);
    double ang = runiform(rng, 0.0, 2.0 * kPi);
    Point3 p{ris[0] + rr * std::cos(ang), ris[1] + rr * std::sin(ang), ris[2]};
    t.user_positions.push_back(p);
    t.user_role.push_back(u < N ? Role::Noma : Role::AirFL);
  }
  for (const auto& p : t.user_positions) t.side_assignment.push_back(side_of(t, p));
  return t;
}

void ChannelParams::validate() const {
  if (!(varsigma0 > 0)) throw std::invalid_argument("ChannelParams: varsigma0 must be > 0");
  if (!(alpha > 0)) throw std::invalid_argument("ChannelParams: alpha must be > 0");
  if (!(kappa >= 0)) throw std::invalid_argument("ChannelParams: kappa must be >= 0");
  if (!(sigma2 > 0)) throw std::invalid_argument("ChannelParams: sigma2 must be > 0");
}

double path_loss(double d, const ChannelParams& params) {
  if (!(d > 0)) throw std::domain_error("path_loss: distance must be positive");
  return params.varsigma0 * std::pow(d, -params.alpha);
}

CVec los_steering(int M, double aod, double spacing_ratio) {
  if (M < 1) throw std::invalid_argument("los_steering: M must be >= 1");
  CVec a(M);
  double step = 2.0 * kPi * spacing_ratio * std::sin(aod);
  for (int m = 0; m < M; ++m) a[m] = std::polar(1.0, step * m);
  return a;
}

CVec sample_bs_ris(const ChannelParams& params, double d0, int M, double aod, Rng& rng) {
  double L = path_loss(d0, params);
  CVec los = los_steering(M, aod, params.element_spacing_ratio);
  CVec out(M);
  if (std::isinf(params.kappa)) return std::sqrt(L) * los;
  double scale = std::sqrt(L / (params.kappa + 1.0));
  double sk = std::sqrt(params.kappa);
  for (int m = 0; m < M; ++m) out[m] = scale * (sk * los[m] + cnormal(rng));
  return out;
}

UserLinks sample_user_links(const Topology& topo, const ChannelParams& params, int M,
                            std::uint64_t seed, std::uint64_t round) {
  UserLinks out;
  const int U = topo.num_users();
  for (int u = 0; u < U; ++u) {
    const auto& pos = topo.user_positions[u];
    double Ld = path_loss(distance(pos, topo.bs_position), params);
    double Lr = path_loss(distance(pos, topo.ris_position), params);
    std::uint64_t utag = (round << 20) ^ (static_cast<std::uint64_t>(u) << 12);
    Rng rd = substream(seed, utag ^ 0xD1u);
    out.h.push_back(std::sqrt(Ld) * cnormal(rd));
    CVec r(M);
    for (int m = 0; m < M; ++m) {
      Rng re = substream(seed, utag ^ (0x100000000ull + static_cast<std::uint64_t>(m)));
      r[m] = std::sqrt(Lr) * cnormal(re);
    }
    out.r.push_back(std::move(r));
  }
  return out;
}

ChannelRealization sample_realization(const Topology& topo, const ChannelParams& params, int M,
                                      double aod, const FadingOptions& opts, std::uint64_t seed,
                                      int round) {
  std::uint64_t draw_round = opts.block_fading ? 0u : static_cast<std::uint64_t>(round);
  ChannelRealization c;
  c.round_index = round;
  double d0 = distance(topo.bs_position, topo.ris_position);
  // BS-RIS scattering entries use per-element substreams as well.
  c.r_bar = CVec(M);
  {
    double L = path_loss(d0, params);
    CVec los = los_steering(std::max(M, 1), aod, params.element_spacing_ratio);
    double scale = std::sqrt(L / (params.kappa + 1.0));
    double sk = std::sqrt(params.kappa);
    for (int m = 0; m < M; ++m) {
      Rng rm = substream(seed, (draw_round << 20) ^ (0x200000000ull + static_cast<std::uint64_t>(m)));
      c.r_bar[m] = scale * (sk * los[m] + cnormal(rm));
    }
  }
  UserLinks links = sample_user_links(topo, params, M, seed, draw_round);
  c.h = std::move(links.h);
  c.r = std::move(links.r);
  if (opts.blocked)
    for (auto& h : c.h) h = 0.0;
  return c;
}

cd combined_channel(cd h_u, const CVec& r_bar, const CMat& theta, const CVec& r_u) {
  if (theta.rows() != r_bar.size() || theta.cols() != r_u.size())
    throw std::invalid_argument("combined_channel: dimension mismatch");
  if (r_bar.size() == 0) return h_u;
  return h_u + (r_bar.adjoint() * theta * r_u)(0, 0);
}

}  // namespace starfl
