#pragma once

#include <array>

#include "starfl/common.hpp"

namespace starfl {

using Point3 = std::array<double, 3>;

double distance(const Point3& a, const Point3& b);

struct Topology {
  Point3 bs_position{0.0, 0.0, 0.0};
  Point3 ris_position{0.0, 50.0, 0.0};
  // Users are ordered NOMA first (decoding order), then AirFL.
  std::vector<Point3> user_positions;
  std::vector<Side> side_assignment;
  std::vector<Role> user_role;

  int num_users() const { return static_cast<int>(user_positions.size()); }
  int num_noma() const;
  int num_airfl() const;
  // Index in user_positions of the k-th AirFL user.
  int airfl_index(int k) const { return num_noma() + k; }
};

// The RIS plane is orthogonal to the BS-RIS axis. Users on the BS half-space
// are served by reflection, the others by transmission.
Side side_of(const Topology& topo, const Point3& user);

// Draws N NOMA and K AirFL users uniformly over an annulus [r_min, radius]
// centered at the RIS in the z = 0 plane.
Topology make_topology(int N, int K, const Point3& bs, const Point3& ris, double radius,
                       double r_min, Rng& rng);

struct ChannelParams {
  double varsigma0 = 1e-3;
  double alpha = 2.2;
  double kappa = 2.0;
  double sigma2 = 1e-11;
  double element_spacing_ratio = 0.5;

  void validate() const;
};

struct ChannelRealization {
  std::vector<cd> h;       // direct BS-user links
  std::vector<CVec> r;     // RIS-user links, length M each
  CVec r_bar;              // BS-RIS link
  int round_index = 0;

  int M() const { return static_cast<int>(r_bar.size()); }
  int num_users() const { return static_cast<int>(h.size()); }
};

double path_loss(double d, const ChannelParams& params);

CVec los_steering(int M, double aod, double spacing_ratio);

CVec sample_bs_ris(const ChannelParams& params, double d0, int M, double aod, Rng& rng);

struct UserLinks {
  std::vector<cd> h;
  std::vector<CVec> r;
};

// Element m of every user's RIS link is drawn from its own substream so that
// realizations for a smaller M are prefixes of those for a larger M.
UserLinks sample_user_links(const Topology& topo, const ChannelParams& params, int M,
                            std::uint64_t seed, std::uint64_t round);

struct FadingOptions {
  bool blocked = false;      // zero all direct links
  bool block_fading = true;  // hold one realization for every round
};

ChannelRealization sample_realization(const Topology& topo, const ChannelParams& params, int M,
                                      double aod, const FadingOptions& opts, std::uint64_t seed,
                                      int round);

cd combined_channel(cd h_u, const CVec& r_bar, const CMat& theta, const CVec& r_u);

}  // namespace starfl
