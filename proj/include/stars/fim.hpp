#pragma once

#include <array>

#include "stars/model.hpp"
#include "stars/types.hpp"

namespace stars {

/// PE/sensor split of the surface. The selection masks are A = diag[I_N1, 0]
/// for PEs and B = I - A for sensors.
struct Partition {
  int n_pe = 0;
  int n_sensor = 0;

  int n_total() const { return n_pe + n_sensor; }
  static Partition of(int n_pe, int n_total) {
    if (n_pe < 1 || n_pe > n_total - 1)
      throw std::invalid_argument("partition needs 1 <= N1 <= N-1");
    return Partition{n_pe, n_total - n_pe};
  }
};

/// Reflection/transmission coefficient vectors; entries |u[n]| <= 1.
struct SurfaceState {
  VectorXcd u_reflect;
  VectorXcd u_transmit;

  const VectorXcd& of(Phase p) const {
    return p == Phase::kReflection ? u_reflect : u_transmit;
  }
  VectorXcd& of(Phase p) { return p == Phase::kReflection ? u_reflect : u_transmit; }
  static MatrixXcd lift(const VectorXcd& u) { return u * u.adjoint(); }
};

/// Probing covariances per phase and per-user uplink powers.
struct ProbingDesign {
  std::array<MatrixXcd, 2> r_probe;  // M_t x M_t, Hermitian PSD
  VectorXd user_power;               // watts, global user indexing

  const MatrixXcd& r_of(Phase p) const { return r_probe[phase_index(p)]; }
  MatrixXcd& r_of(Phase p) { return r_probe[phase_index(p)]; }
};

/// Blocks of the repartitioned 4x4 FIM over (azimuth, elevation, Re a, Im a).
struct FimBlocks {
  Matrix2d j_psi_psi = Matrix2d::Zero();
  Matrix2d j_psi_alpha = Matrix2d::Zero();
  double j_alpha_alpha = 0.0;  // times I2

  Eigen::Matrix4d assemble() const;
};

struct CrbValue {
  Matrix2d matrix = Matrix2d::Zero();
  double trace_rad2 = 0.0;
  double root_deg = 0.0;
};

/// Thrown when the Schur complement of the FIM is singular (degenerate
/// waveform or surface: the angles cannot be estimated).
struct UnidentifiableError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Steering vector, its angle derivatives and the symmetric outer-product
/// factors entering every FIM expression.
struct SteeringDerivs {
  VectorXcd eps;
  VectorXcd d_az;
  VectorXcd d_el;
  MatrixXcd c_alpha;  // eps eps^T
  MatrixXcd c_az;     // d_az eps^T + eps d_az^T
  MatrixXcd c_el;
};

SteeringDerivs make_steering_derivs(const Angles& angles, int n_vertical,
                                    int n_horizontal);

/// Covariance of the equivalent probing signal leaving the PEs: phase I adds
/// the user-signal part sum_k P_k h_k h_k^H to G_t R_s G_t^H.
MatrixXcd probing_covariance(Phase phase, const ChannelSet& channels,
                             const ProbingDesign& design, int n_phase1_users);

/// Extended-form FIM: selection masks of `partition` applied to the full-N
/// steering factors, surface coefficients and probing covariance.
FimBlocks fim_extended(const SteeringDerivs& sd, cplx alpha,
                       const Partition& partition, const VectorXcd& u,
                       const MatrixXcd& r_x, int n_frames, double sigma2);

/// Fixed-partition FIM built from the physical N1/N2-dimensional steering
/// slices; numerically identical to `fim_extended` for every partition.
FimBlocks fim_fixed_partition(const SteeringDerivs& sd, cplx alpha,
                              const Partition& partition, const VectorXcd& u,
                              const MatrixXcd& r_x, int n_frames, double sigma2);

CrbValue crb_from_fim(const FimBlocks& blocks);

/// Identifiers for the independent FIM entries (psi-psi upper triangle,
/// psi-alpha full, alpha-alpha scalar).
enum FimEntry : int {
  kPP00 = 0, kPP01, kPP11,
  kPA00, kPA01, kPA10, kPA11,
  kAA,
  kFimEntryCount
};

FimBlocks blocks_from_entries(const std::array<double, kFimEntryCount>& e);

/// FIM entries as real-linear functionals of the lifted surface matrix U:
/// entry = Re Tr(K * U). Restricted to the leading `dim` elements when the
/// surface variable covers only the PE block.
struct FimUCoeffs {
  std::array<MatrixXcd, kFimEntryCount> k;
  int dim = 0;
  FimBlocks evaluate(const MatrixXcd& u_lifted) const;
};

FimUCoeffs build_fim_u_coeffs(const SteeringDerivs& sd, cplx alpha,
                              const Partition& partition, const MatrixXcd& r_x,
                              int n_frames, double sigma2, int dim);

/// FIM entries as real-linear functionals of (per-user powers, R_s):
/// entry = sum_k p_coeff[k] * P_k + Re Tr(r_coeff * R_s).
struct FimWaveformCoeffs {
  std::array<VectorXd, kFimEntryCount> p_coeff;   // per phase user
  std::array<MatrixXcd, kFimEntryCount> r_coeff;  // M_t x M_t
  std::vector<int> user_ids;                      // global indices, phase order
  FimBlocks evaluate(const VectorXd& phase_powers, const MatrixXcd& r_probe) const;
};

/// `u_lifted` may be any Hermitian PSD surface matrix (rank-one for a
/// physical coefficient vector); the lifted form is what the alternating
/// solvers hold fixed.
FimWaveformCoeffs build_fim_waveform_coeffs(const SteeringDerivs& sd, cplx alpha,
                                            const Partition& partition,
                                            const MatrixXcd& u_lifted,
                                            const ChannelSet& channels,
                                            Phase phase, int n_phase1_users,
                                            int n_frames, double sigma2);

/// FIM entries as weighted sums over candidate partitions: entry =
/// sum_n p_n * table[n-1][entry], built from the constant matrices
/// F_{n,v} = C_v A_n - A_n C_v A_n.
struct FimPartitionWeightCoeffs {
  std::vector<std::array<double, kFimEntryCount>> table;  // n = 1 .. N-1
  FimBlocks evaluate(const VectorXd& weights) const;
};

FimPartitionWeightCoeffs build_fim_partition_weight_coeffs(
    const SteeringDerivs& sd, cplx alpha, const VectorXcd& u,
    const MatrixXcd& r_x, int n_frames, double sigma2);

}  // namespace stars
