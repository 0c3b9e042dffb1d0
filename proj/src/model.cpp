#include "stars/model.hpp"

#include <cmath>
#include <random>

namespace stars {

void SystemConfig::validate() const {
  if (m_tx < 1 || m_rx < 1) throw std::invalid_argument("antenna counts must be >= 1");
  if (n_users < 1) throw std::invalid_argument("need at least one user");
  if (n_phase1_users < 1 || n_phase1_users > n_users)
    throw std::invalid_argument("K1 must satisfy 1 <= K1 <= K");
  if (n_vertical < 1 || n_horizontal < 1 || n_elements != n_vertical * n_horizontal)
    throw std::invalid_argument("N must equal N_v * N_h with positive factors");
  if (n_pe < 1 || n_pe > n_elements - 1)
    throw std::invalid_argument("PE count must satisfy 1 <= N1 <= N-1");
  if (n_frames < 1) throw std::invalid_argument("frame count must be >= 1");
  if (!(noise_power > 0.0)) throw std::invalid_argument("noise power must be positive");
  if (!(ref_path_loss > 0.0)) throw std::invalid_argument("reference path loss must be positive");
  if (!(rician_kappa >= 0.0)) throw std::invalid_argument("Rician factor must be >= 0");
  if (!(p_user_max > 0.0) || !(p_bs_max > 0.0))
    throw std::invalid_argument("power budgets must be positive");
  if (qos_rate < 0.0) throw std::invalid_argument("QoS rate must be >= 0");
  if (static_cast<int>(user_distance_m.size()) != n_users)
    throw std::invalid_argument("need one distance per user");
  for (double d : user_distance_m)
    if (!(d > 0.0)) throw std::invalid_argument("user distances must be positive");
  if (!(target_distance_m > 0.0) || !(bs_distance_m > 0.0))
    throw std::invalid_argument("distances must be positive");
  for (const auto& a : target_angles) a.validate();
}

double path_loss_amplitude(double l0, double distance_m, double exponent) {
  return std::sqrt(l0 * std::pow(distance_m, -exponent));
}

VectorXcd steering(const Angles& angles, int n_vertical, int n_horizontal) {
  angles.validate();
  if (n_vertical < 1 || n_horizontal < 1)
    throw std::invalid_argument("steering: element grid must be positive");
  const int n = n_vertical * n_horizontal;
  const double sin_az = std::sin(angles.azimuth);
  const double cos_el = std::cos(angles.elevation);
  const double sin_el = std::sin(angles.elevation);
  VectorXcd eps(n);
  for (int i = 0; i < n; ++i) {
    const int nbar = i / n_horizontal;         // i = n-1 (0-based)
    const int col = i - n_horizontal * nbar;   // n-1-Nh*nbar
    const double phase = kPi * (nbar * cos_el * sin_az + col * sin_el);
    eps[i] = std::polar(1.0, phase);
  }
  return eps;
}

VectorXcd steering_derivative(const Angles& angles, int n_vertical,
                              int n_horizontal, AngleAxis wrt) {
  const VectorXcd eps = steering(angles, n_vertical, n_horizontal);
  const int n = n_vertical * n_horizontal;
  const double sin_az = std::sin(angles.azimuth);
  const double cos_az = std::cos(angles.azimuth);
  const double cos_el = std::cos(angles.elevation);
  const double sin_el = std::sin(angles.elevation);
  VectorXcd d(n);
  for (int i = 0; i < n; ++i) {
    const int nbar = i / n_horizontal;
    const int col = i - n_horizontal * nbar;
    double rate;
    if (wrt == AngleAxis::kAzimuth) {
      rate = kPi * nbar * cos_el * cos_az;
    } else {
      rate = kPi * (-nbar * sin_el * sin_az + col * cos_el);
    }
    d[i] = eps[i] * cplx(0.0, rate);
  }
  return d;
}

VectorXcd bs_ula_steering(int n_antennas, double bearing_rad) {
  if (n_antennas < 1) throw std::invalid_argument("ULA size must be >= 1");
  VectorXcd a(n_antennas);
  for (int m = 0; m < n_antennas; ++m)
    a[m] = std::polar(1.0, kPi * m * std::sin(bearing_rad));
  return a;
}

namespace {

// Complex standard-normal matrix with unit per-entry variance, filled in a
// fixed row-major order so realizations are reproducible across platforms
// that share the mt19937_64/normal_distribution implementation.
MatrixXcd draw_cscg(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  MatrixXcd x(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double re = gauss(rng);
      const double im = gauss(rng);
      x(r, c) = cplx(re * inv_sqrt2, im * inv_sqrt2);
    }
  return x;
}

MatrixXcd rician_mix(double kappa, double pl, const MatrixXcd& los,
                     const MatrixXcd& nlos) {
  const double los_w = std::sqrt(kappa / (1.0 + kappa));
  const double nlos_w = std::sqrt(1.0 / (1.0 + kappa));
  return pl * (los_w * los + nlos_w * nlos);
}

}  // namespace

ChannelSet synthesize_channels(const SystemConfig& config, std::uint64_t seed) {
  config.validate();
  const int n = config.n_elements;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  ChannelSet cs;
  cs.n_vertical = config.n_vertical;
  cs.n_horizontal = config.n_horizontal;

  // User placement on the d_k circle: reflection-side users in (0, pi),
  // transmission-side users in (pi, 2 pi).
  cs.user_azimuth.resize(config.n_users);
  for (int k = 0; k < config.n_users; ++k) {
    const bool reflect_side = k < config.n_phase1_users;
    const double lo = reflect_side ? 0.0 : kPi;
    cs.user_azimuth[k] = lo + unif(rng) * kPi;
  }

  // BS sits in the surface's x-y plane; bearings from the layout geometry.
  const Angles surf_to_bs{deg2rad(225.0), 0.0};
  const VectorXcd eps_bs = steering(surf_to_bs, config.n_vertical, config.n_horizontal);
  const VectorXcd ula_rx = bs_ula_steering(config.m_rx, deg2rad(45.0));
  const VectorXcd ula_tx = bs_ula_steering(config.m_tx, deg2rad(45.0));

  cs.los_g_rx = eps_bs * ula_rx.transpose();
  cs.los_g_tx = eps_bs * ula_tx.transpose();
  cs.pl_g_rx = path_loss_amplitude(config.ref_path_loss, config.bs_distance_m,
                                   config.pl_exp_comm);
  cs.pl_g_tx = cs.pl_g_rx;

  cs.g_rx = rician_mix(config.rician_kappa, cs.pl_g_rx, cs.los_g_rx,
                       draw_cscg(rng, n, config.m_rx));
  cs.g_tx = rician_mix(config.rician_kappa, cs.pl_g_tx, cs.los_g_tx,
                       draw_cscg(rng, n, config.m_tx));

  cs.h_user.resize(config.n_users);
  cs.los_h_user.resize(config.n_users);
  cs.pl_h_user.resize(config.n_users);
  for (int k = 0; k < config.n_users; ++k) {
    const Angles user_dir{cs.user_azimuth[k], 0.0};
    cs.los_h_user[k] = steering(user_dir, config.n_vertical, config.n_horizontal);
    cs.pl_h_user[k] = path_loss_amplitude(
        config.ref_path_loss, config.user_distance_m[k], config.pl_exp_comm);
    cs.h_user[k] = rician_mix(config.rician_kappa, cs.pl_h_user[k],
                              cs.los_h_user[k], draw_cscg(rng, n, 1));
  }

  for (int t = 0; t < 2; ++t) {
    cs.target[t].angles = config.target_angles[t];
    if (config.target_rcs[t].has_value()) {
      cs.target[t].rcs = *config.target_rcs[t];
    } else {
      cs.target[t].rcs = cplx(config.ref_path_loss *
                                  std::pow(config.target_distance_m,
                                           -config.pl_exp_sense),
                              0.0);
    }
  }
  return cs;
}

}  // namespace stars
