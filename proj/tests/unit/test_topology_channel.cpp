#include "doctest.h"
#include "starfl/topology_channel.hpp"

using namespace starfl;

TEST_SUITE("topology_channel") {

TEST_CASE("path loss at the reference distance equals the reference loss") {
  ChannelParams p;
  for (double a : {2.0, 2.2, 3.5}) {
    p.alpha = a;
    CHECK(path_loss(1.0, p) == doctest::Approx(p.varsigma0).epsilon(1e-15));
  }
}

TEST_CASE("path loss at 10 m") {
  ChannelParams p;
  p.varsigma0 = 1e-3;
  p.alpha = 2.2;
  CHECK(path_loss(10.0, p) == doctest::Approx(1e-3 * std::pow(10.0, -2.2)).epsilon(1e-14));
  CHECK(path_loss(10.0, p) == doctest::Approx(6.3096e-6).epsilon(1e-4));
  CHECK_THROWS_AS(path_loss(0.0, p), std::domain_error);
}

TEST_CASE("default channel constants") {
  ChannelParams p;
  CHECK(10.0 * std::log10(p.varsigma0) == doctest::Approx(-30.0));
  CHECK(p.alpha == 2.2);
  CHECK(p.kappa == 2.0);
  CHECK(p.element_spacing_ratio == 0.5);
}

TEST_CASE("steering vector") {
  CVec a = los_steering(6, 0.0, 0.5);
  for (int m = 0; m < 6; ++m) CHECK(std::abs(a[m] - cd(1.0, 0.0)) < 1e-15);
  CVec b = los_steering(2, kPi / 2, 0.5);
  CHECK(std::abs(b[0] - cd(1.0, 0.0)) < 1e-15);
  CHECK(std::abs(b[1] - cd(-1.0, 0.0)) < 1e-12);
}

TEST_CASE("BS-RIS link: LoS limit and mean power") {
  ChannelParams p;
  const double d0 = 50.0, L = path_loss(d0, p);
  p.kappa = std::numeric_limits<double>::infinity();
  Rng rng(1);
  CVec los = sample_bs_ris(p, d0, 8, 0.3, rng);
  CHECK((los - std::sqrt(L) * los_steering(8, 0.3, 0.5)).norm() < 1e-15);
  p.kappa = 1e12;
  CVec near = sample_bs_ris(p, d0, 8, 0.3, rng);
  CHECK((near - std::sqrt(L) * los_steering(8, 0.3, 0.5)).norm() < 1e-5 * std::sqrt(L));

  p.kappa = 2.0;
  double acc = 0.0;
  const int draws = 10000, M = 100;
  for (int d = 0; d < draws; ++d) acc += sample_bs_ris(p, d0, M, 0.7, rng).squaredNorm();
  CHECK(acc / (double(draws) * M) == doctest::Approx(L).epsilon(0.01));
}

TEST_CASE("user links: determinism and mean power") {
  ChannelParams p;
  Rng rng(3);
  Topology topo = make_topology(3, 3, {0, 0, 0}, {0, 50, 0}, 5.0, 1.0, rng);
  UserLinks a = sample_user_links(topo, p, 4, 9, 2);
  UserLinks b = sample_user_links(topo, p, 4, 9, 2);
  for (int u = 0; u < topo.num_users(); ++u) {
    CHECK(a.h[u] == b.h[u]);
    CHECK(a.r[u] == b.r[u]);
  }
  // Prefix property across M.
  UserLinks c = sample_user_links(topo, p, 2, 9, 2);
  CHECK(c.r[0][1] == a.r[0][1]);

  double acc = 0.0;
  const int rounds = 100000;
  for (int t = 0; t < rounds; ++t) {
    UserLinks l = sample_user_links(topo, p, 0, 5, t);
    for (int u = 0; u < topo.num_users(); ++u)
      acc += std::norm(l.h[u]) / path_loss(distance(topo.user_positions[u], topo.bs_position), p);
  }
  CHECK(acc / (double(rounds) * topo.num_users()) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("topology: users on the annulus around the RIS, sides by half-space") {
  Rng rng(4);
  Topology topo = make_topology(3, 3, {0, 0, 0}, {0, 50, 0}, 5.0, 1.0, rng);
  CHECK(topo.num_noma() == 3);
  CHECK(topo.num_airfl() == 3);
  for (int u = 0; u < topo.num_users(); ++u) {
    double r = distance(topo.user_positions[u], topo.ris_position);
    CHECK(r <= 5.0 + 1e-12);
    CHECK(r >= 1.0 - 1e-12);
    Side expect = topo.user_positions[u][1] <= 50.0 ? Side::Reflect : Side::Transmit;
    CHECK(topo.side_assignment[u] == expect);
  }
  CHECK_THROWS(make_topology(1, 0, {0, 0, 0}, {0, 50, 0}, 5.0, 1.0, rng));
}

TEST_CASE("combined channel") {
  const int M = 3;
  CVec rb = CVec::Ones(M), r = CVec::Ones(M);
  CHECK(combined_channel(cd(0.3, 0.1), rb, CMat::Zero(M, M), r) == cd(0.3, 0.1));
  CVec one = CVec::Ones(1);
  CHECK(std::abs(combined_channel(0.0, one, CMat::Identity(1, 1), one) - 1.0) < 1e-15);
  CHECK_THROWS(combined_channel(0.0, rb, CMat::Zero(2, 2), r));
}

TEST_CASE("block fading holds one realization; blocked zeroes direct links") {
  ChannelParams p;
  Rng rng(5);
  Topology topo = make_topology(2, 2, {0, 0, 0}, {0, 50, 0}, 5.0, 1.0, rng);
  FadingOptions fo;
  auto r0 = sample_realization(topo, p, 4, 0.2, fo, 11, 0);
  auto r7 = sample_realization(topo, p, 4, 0.2, fo, 11, 7);
  CHECK(r0.h == r7.h);
  CHECK(r0.r_bar == r7.r_bar);
  fo.block_fading = false;
  auto s7 = sample_realization(topo, p, 4, 0.2, fo, 11, 7);
  CHECK(s7.h != r0.h);
  fo.blocked = true;
  auto b = sample_realization(topo, p, 4, 0.2, fo, 11, 7);
  for (cd h : b.h) CHECK(h == cd(0.0, 0.0));
  CHECK(b.r[0] == s7.r[0]);
}

}  // TEST_SUITE
