#pragma once

#include <array>
#include <complex>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace stars {

using cplx = std::complex<double>;
using Eigen::Matrix2d;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }
inline double dbm2watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watt2dbm(double w) { return 10.0 * std::log10(w) + 30.0; }
inline double db2lin(double db) { return std::pow(10.0, db / 10.0); }

/// The surface alternates between reflection (phase I) and transmission
/// (phase II) sub-frames under the time-switching protocol.
enum class Phase { kReflection = 0, kTransmission = 1 };

inline int phase_index(Phase p) { return p == Phase::kReflection ? 0 : 1; }
inline const char* phase_name(Phase p) {
  return p == Phase::kReflection ? "R" : "T";
}

/// Azimuth/elevation pair, radians.
struct Angles {
  double azimuth = 0.0;
  double elevation = 0.0;

  void validate() const {
    if (!std::isfinite(azimuth) || !std::isfinite(elevation))
      throw std::invalid_argument("angles must be finite");
    if (std::abs(elevation) >= kPi / 2.0)
      throw std::invalid_argument("elevation must lie strictly inside (-pi/2, pi/2)");
  }
};

/// Full scenario description. All powers are linear watts, distances meters,
/// angles radians; unit conversions happen at the config-file boundary only.
struct SystemConfig {
  int m_tx = 4;            // BS transmit antennas
  int m_rx = 4;            // BS receive antennas
  int n_users = 2;         // total users K
  int n_phase1_users = 1;  // users served during reflection, K1
  int n_elements = 20;     // total surface elements N = n_vertical * n_horizontal
  int n_vertical = 5;
  int n_horizontal = 4;
  int n_pe = 15;           // passive elements N1; sensors N2 = N - N1
  int n_frames = 10;       // sample frames per phase T

  double noise_power = dbm2watt(-115.0);  // sigma^2
  double ref_path_loss = db2lin(-30.0);   // L0 at 1 m, linear power gain
  double pl_exp_comm = 2.2;
  double pl_exp_sense = 2.5;
  double rician_kappa = 1.0;

  double p_user_max = dbm2watt(15.0);
  double p_bs_max = dbm2watt(30.0);
  double qos_rate = 1.0;  // bits/s/Hz

  std::vector<double> user_distance_m = {20.0, 20.0};
  double target_distance_m = 10.0;
  double bs_distance_m = 50.0;
  std::array<Angles, 2> target_angles = {
      Angles{deg2rad(342.0), deg2rad(30.0)}, Angles{deg2rad(18.0), deg2rad(30.0)}};
  // Reflection coefficient per target; unset -> round-trip path-loss magnitude
  // with unit phase.
  std::array<std::optional<cplx>, 2> target_rcs;

  int n_sensors() const { return n_elements - n_pe; }
  int users_in_phase(Phase p) const {
    return p == Phase::kReflection ? n_phase1_users : n_users - n_phase1_users;
  }
  /// Global indices of the users served in a phase (phase I: 0..K1-1).
  std::vector<int> phase_users(Phase p) const {
    std::vector<int> ids;
    const int lo = p == Phase::kReflection ? 0 : n_phase1_users;
    const int hi = p == Phase::kReflection ? n_phase1_users : n_users;
    for (int k = lo; k < hi; ++k) ids.push_back(k);
    return ids;
  }

  void validate() const;
};

/// Target parameters for one phase: 2-D direction and complex reflection
/// coefficient (RCS and round-trip attenuation combined).
struct TargetParams {
  Angles angles;
  cplx rcs{0.0, 0.0};
};

/// One realization of all communication channels plus the deterministic LoS
/// parts, path-loss amplitudes and the per-phase target parameters. All
/// channel matrices use the extended N-element convention; the PE/sensor
/// split is applied downstream through selection masks.
struct ChannelSet {
  MatrixXcd g_rx;                   // N x M_r, surface -> BS receive array
  MatrixXcd g_tx;                   // N x M_t, BS transmit array -> surface
  std::vector<VectorXcd> h_user;    // K vectors of length N, user -> surface

  MatrixXcd los_g_rx;
  MatrixXcd los_g_tx;
  std::vector<VectorXcd> los_h_user;

  double pl_g_rx = 0.0;             // L_r
  double pl_g_tx = 0.0;             // L_t
  std::vector<double> pl_h_user;    // L_{k,S}

  std::vector<double> user_azimuth; // drawn placement on the d_k circle, rad
  std::array<TargetParams, 2> target;

  int n_vertical = 0;
  int n_horizontal = 0;

  int n_elements() const { return static_cast<int>(g_rx.rows()); }
  const TargetParams& target_of(Phase p) const { return target[phase_index(p)]; }
};

}  // namespace stars
