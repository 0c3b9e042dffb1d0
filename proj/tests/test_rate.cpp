#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "stars/model.hpp"
#include "stars/rate.hpp"

using namespace stars;
using stars::testing::random_cscg;
using stars::testing::random_unit_modulus;

namespace {

SystemConfig rate_config(int n_v, int n_h, int n_pe, int m_rx) {
  SystemConfig cfg;
  cfg.m_tx = 4;
  cfg.m_rx = m_rx;
  cfg.n_users = 2;
  cfg.n_phase1_users = 1;
  cfg.n_vertical = n_v;
  cfg.n_horizontal = n_h;
  cfg.n_elements = n_v * n_h;
  cfg.n_pe = n_pe;
  cfg.user_distance_m = {20.0, 10.0};
  return cfg;
}

VectorXcd matched_filter(const VectorXcd& eff) {
  return VectorXcd(eff.conjugate() / eff.norm());
}

}  // namespace

TEST_CASE("single user with matched filter hits the closed-form SNR rate") {
  SystemConfig cfg = rate_config(2, 3, 4, 3);
  const ChannelSet cs = synthesize_channels(cfg, 5);
  const Partition part = Partition::of(cfg.n_pe, cfg.n_elements);
  std::mt19937_64 rng(1);
  const VectorXcd u = random_unit_modulus(rng, cfg.n_elements);
  VectorXd pe_mask = VectorXd::Zero(cfg.n_elements);
  pe_mask.head(cfg.n_pe).setOnes();

  const VectorXcd eff = effective_channel(cs.h_user[0], cs.g_rx, u, pe_mask);
  VectorXd powers = VectorXd::Zero(2);
  powers[0] = 0.02;
  const auto rates = instantaneous_rate(Phase::kReflection, cfg, cs, part, u,
                                        powers, {matched_filter(eff)});
  const double expect =
      0.5 * std::log2(1.0 + powers[0] * eff.squaredNorm() / cfg.noise_power);
  CHECK(rates[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("orthogonal co-users with nulling combiners see no interference") {
  SystemConfig cfg = rate_config(2, 2, 2, 2);
  cfg.n_users = 2;
  cfg.n_phase1_users = 2;  // both users in phase I
  ChannelSet cs = synthesize_channels(cfg, 6);
  // Hand-built orthogonal instance: user 1 couples to element 0 only,
  // user 2 to element 1 only; G maps them onto orthogonal BS antennas.
  cs.g_rx = MatrixXcd::Zero(4, 2);
  cs.g_rx(0, 0) = 1.0;
  cs.g_rx(1, 1) = 1.0;
  cs.h_user[0] = VectorXcd::Zero(4);
  cs.h_user[0][0] = 2.0;
  cs.h_user[1] = VectorXcd::Zero(4);
  cs.h_user[1][1] = 3.0;
  const VectorXcd u = VectorXcd::Ones(4);
  VectorXd powers = VectorXd::Constant(2, 0.1);
  std::vector<VectorXcd> combiners = {VectorXcd::Zero(2), VectorXcd::Zero(2)};
  combiners[0][0] = 1.0;
  combiners[1][1] = 1.0;
  const Partition part = Partition::of(2, 4);

  const auto both = instantaneous_rate(Phase::kReflection, cfg, cs, part, u,
                                       powers, combiners);
  const double single =
      0.5 * std::log2(1.0 + powers[0] * 4.0 / cfg.noise_power);
  CHECK(both[0] == doctest::Approx(single).epsilon(1e-12));
}

TEST_CASE("zero power means zero rate, zero combiner is rejected") {
  SystemConfig cfg = rate_config(2, 3, 4, 3);
  const ChannelSet cs = synthesize_channels(cfg, 7);
  const Partition part = Partition::of(cfg.n_pe, cfg.n_elements);
  const VectorXcd u = VectorXcd::Ones(cfg.n_elements);
  VectorXd powers = VectorXd::Zero(2);
  VectorXcd v = VectorXcd::Zero(cfg.m_rx);
  v[0] = 1.0;
  const auto rates =
      instantaneous_rate(Phase::kReflection, cfg, cs, part, u, powers, {v});
  CHECK(rates[0] == 0.0);
  CHECK_THROWS_AS(instantaneous_rate(Phase::kReflection, cfg, cs, part, u,
                                     powers, {VectorXcd::Zero(cfg.m_rx)}),
                  std::invalid_argument);
}

TEST_CASE("ergodic approximation: pure scattering at identity surface") {
  SystemConfig cfg = rate_config(2, 5, 6, 4);
  cfg.rician_kappa = 0.0;
  const ChannelSet cs = synthesize_channels(cfg, 8);
  const MatrixXd mask = weight_mask_from_partition(cfg.n_elements, cfg.n_pe);
  const MatrixXcd u_id = MatrixXcd::Identity(cfg.n_elements, cfg.n_elements);
  const double p_k = 0.05;
  const double got = ergodic_rate_approx(cfg, cs, 0, u_id, mask, p_k);
  const double l2 = cs.pl_h_user[0] * cs.pl_h_user[0] * cs.pl_g_rx * cs.pl_g_rx;
  const double expect =
      0.5 * std::log2(1.0 + p_k * l2 * cfg.m_rx * cfg.n_pe / cfg.noise_power);
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("ergodic bracket at identity surface is Mr N1 (kappa+1)^2") {
  for (double kappa : {0.5, 1.0, 5.0}) {
    SystemConfig cfg = rate_config(2, 5, 6, 4);
    cfg.rician_kappa = kappa;
    const ChannelSet cs = synthesize_channels(cfg, 9);
    const MatrixXd mask = weight_mask_from_partition(cfg.n_elements, cfg.n_pe);
    const MatrixXcd q = ergodic_bracket_coeff(cs.los_h_user[0], cs.los_g_rx,
                                              kappa, mask);
    const double bracket = q.real().trace();  // Tr(Q I)
    CHECK(bracket == doctest::Approx(cfg.m_rx * cfg.n_pe * (kappa + 1) *
                                     (kappa + 1))
                         .epsilon(1e-10));
    // Rate at U = I is kappa-independent.
    const double rate = ergodic_rate_approx(
        cfg, cs, 0, MatrixXcd::Identity(cfg.n_elements, cfg.n_elements), mask,
        0.05);
    const double l2 = cs.pl_h_user[0] * cs.pl_h_user[0] * cs.pl_g_rx * cs.pl_g_rx;
    CHECK(rate == doctest::Approx(0.5 * std::log2(1.0 + 0.05 * l2 * cfg.m_rx *
                                                            cfg.n_pe /
                                                            cfg.noise_power))
                      .epsilon(1e-10));
  }
}

TEST_CASE("approximation tracks the Monte Carlo ergodic rate") {
  SystemConfig cfg = rate_config(4, 5, 12, 4);
  cfg.rician_kappa = 5.0;
  const ChannelSet cs = synthesize_channels(cfg, 10);
  const Partition part = Partition::of(cfg.n_pe, cfg.n_elements);
  std::mt19937_64 rng(2);
  const VectorXcd u = random_unit_modulus(rng, cfg.n_elements);
  const MatrixXd mask = weight_mask_from_partition(cfg.n_elements, cfg.n_pe);
  const double p_k = 0.03;
  const double approx =
      ergodic_rate_approx(cfg, cs, 0, SurfaceState::lift(u), mask, p_k);
  const McEstimate mc = ergodic_rate_mc(cfg, cs, 0, part, u, p_k, 4000, 77);
  CHECK(std::abs(approx - mc.mean) <= 0.05 * mc.mean);
}

TEST_CASE("Monte Carlo collapses onto the deterministic rate as kappa grows") {
  SystemConfig cfg = rate_config(2, 5, 8, 3);
  cfg.rician_kappa = 1e9;
  const ChannelSet cs = synthesize_channels(cfg, 11);
  const Partition part = Partition::of(cfg.n_pe, cfg.n_elements);
  const VectorXcd u = VectorXcd::Ones(cfg.n_elements);
  const double p_k = 0.02;
  const McEstimate mc = ergodic_rate_mc(cfg, cs, 0, part, u, p_k, 500, 3);
  VectorXd pe_mask = VectorXd::Zero(cfg.n_elements);
  pe_mask.head(cfg.n_pe).setOnes();
  const VectorXcd eff = effective_channel(
      VectorXcd(cs.pl_h_user[0] * cs.los_h_user[0]),
      MatrixXcd(cs.pl_g_rx * cs.los_g_rx), u, pe_mask);
  const double det_rate =
      0.5 * std::log2(1.0 + p_k * eff.squaredNorm() / cfg.noise_power);
  CHECK(std::abs(mc.mean - det_rate) <= std::max(mc.ci_halfwidth, 1e-6));
  // P = 0 has exactly zero rate and zero spread.
  const McEstimate zero = ergodic_rate_mc(cfg, cs, 0, part, u, 0.0, 500, 3);
  CHECK(zero.mean == 0.0);
  CHECK(zero.ci_halfwidth == 0.0);
}

TEST_CASE("matched filter dominates random unit-norm combiners") {
  SystemConfig cfg = rate_config(2, 3, 4, 4);
  const ChannelSet cs = synthesize_channels(cfg, 12);
  const Partition part = Partition::of(cfg.n_pe, cfg.n_elements);
  std::mt19937_64 rng(3);
  const VectorXcd u = random_unit_modulus(rng, cfg.n_elements);
  VectorXd pe_mask = VectorXd::Zero(cfg.n_elements);
  pe_mask.head(cfg.n_pe).setOnes();
  const VectorXcd eff = effective_channel(cs.h_user[0], cs.g_rx, u, pe_mask);
  VectorXd powers = VectorXd::Constant(2, 0.02);
  const double best = instantaneous_rate(Phase::kReflection, cfg, cs, part, u,
                                         powers, {matched_filter(eff)})[0];
  for (int t = 0; t < 100; ++t) {
    VectorXcd v = random_cscg(rng, cfg.m_rx, 1);
    v /= v.norm();
    const double r = instantaneous_rate(Phase::kReflection, cfg, cs, part, u,
                                        powers, {v})[0];
    CHECK(r <= best + 1e-12);
  }
}

TEST_CASE("ergodic approximation is nondecreasing in the PE count at U = I") {
  SystemConfig cfg = rate_config(4, 5, 10, 4);
  const ChannelSet cs = synthesize_channels(cfg, 13);
  const MatrixXcd u_id = MatrixXcd::Identity(cfg.n_elements, cfg.n_elements);
  double prev = 0.0;
  for (int n_pe = 2; n_pe <= cfg.n_elements - 1; n_pe += 2) {
    const MatrixXd mask = weight_mask_from_partition(cfg.n_elements, n_pe);
    const double r = ergodic_rate_approx(cfg, cs, 0, u_id, mask, 0.05);
    CHECK(r >= prev - 1e-12);
    prev = r;
  }
}

TEST_CASE("QoS coefficient tables reproduce the direct SINR terms") {
  SystemConfig cfg = rate_config(2, 4, 5, 3);
  const ChannelSet cs = synthesize_channels(cfg, 14);
  std::mt19937_64 rng(4);
  const VectorXcd u = random_unit_modulus(rng, cfg.n_elements);
  VectorXcd v = random_cscg(rng, cfg.m_rx, 1);
  v /= v.norm();
  const MatrixXcd u_lift = SurfaceState::lift(u);
  const MatrixXcd v_lift = v * v.adjoint();

  SUBCASE("fixed partition, all three routes agree") {
    const MatrixXd mask = weight_mask_from_partition(cfg.n_elements, cfg.n_pe);
    VectorXd pe_mask = VectorXd::Zero(cfg.n_elements);
    pe_mask.head(cfg.n_pe).setOnes();
    const VectorXcd eff = effective_channel(cs.h_user[1], cs.g_rx, u, pe_mask);
    const double direct = std::norm((eff.transpose() * v)(0));
    const double via_fn = sinr_power_term(cs.h_user[1], cs.g_rx, u, v, mask);
    const double via_u = qos_u_coeff(cs.h_user[1], cs.g_rx, v_lift, mask)
                             .cwiseProduct(u_lift.conjugate())
                             .sum()
                             .real();
    const double via_v = qos_v_coeff(cs.h_user[1], cs.g_rx, u_lift, mask)
                             .cwiseProduct(v_lift.conjugate())
                             .sum()
                             .real();
    CHECK(via_fn == doctest::Approx(direct).epsilon(1e-10));
    CHECK(via_u == doctest::Approx(direct).epsilon(1e-10));
    CHECK(via_v == doctest::Approx(direct).epsilon(1e-10));
  }

  SUBCASE("one-hot weights reduce to the fixed partition") {
    for (int n_pe : {1, 3, cfg.n_elements - 1}) {
      VectorXd p = VectorXd::Zero(cfg.n_elements - 1);
      p[n_pe - 1] = 1.0;
      const MatrixXd w_mask = weight_mask_from_weights(p);
      const MatrixXd f_mask = weight_mask_from_partition(cfg.n_elements, n_pe);
      CHECK((w_mask - f_mask).norm() == 0.0);
    }
  }

  SUBCASE("p-table matches per-partition direct evaluation") {
    const VectorXd table = qos_p_table(cs.h_user[0], cs.g_rx, v_lift, u_lift);
    for (int n_pe = 1; n_pe <= cfg.n_elements - 1; ++n_pe) {
      const MatrixXd mask = weight_mask_from_partition(cfg.n_elements, n_pe);
      const double direct = sinr_power_term(cs.h_user[0], cs.g_rx, u, v, mask);
      CHECK(table[n_pe - 1] == doctest::Approx(direct).epsilon(1e-10));
    }
  }
}

TEST_CASE("SINR target constant") {
  CHECK(sinr_target_from_rate(0.5) == doctest::Approx(1.0));
  CHECK(sinr_target_from_rate(0.0) == doctest::Approx(0.0));
}
