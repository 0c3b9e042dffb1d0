#pragma once

#include "stars/fim.hpp"
#include "stars/types.hpp"

namespace stars {

/// gamma_t = 2^{2 R} - 1; the 1/2 pre-log of the time-switching protocol
/// moves the rate target into the SINR domain.
inline double sinr_target_from_rate(double rate_bps_hz) {
  return std::pow(2.0, 2.0 * rate_bps_hz) - 1.0;
}

struct RateReport {
  std::vector<int> user_ids;          // global indices, phase order
  std::vector<double> instantaneous;  // bits/s/Hz
  std::vector<double> ergodic_approx;
  std::vector<double> ergodic_mc;
  std::vector<double> ergodic_mc_halfwidth;
};

/// PE-weight mask: entry (a,b) is the total weight of candidate partitions
/// whose PE block covers both elements. A fixed partition is the 0/1 case.
MatrixXd weight_mask_from_partition(int n, int n_pe);
MatrixXd weight_mask_from_weights(const VectorXd& p);

/// Effective uplink channel row r with signal amplitude r^T v for combiner v:
/// r = G_r^T (conj(h) .* u .* diag-mask).
VectorXcd effective_channel(const VectorXcd& h, const MatrixXcd& g_rx,
                            const VectorXcd& u, const VectorXd& pe_mask);

/// |h^H Theta A G v|^2 summed over the weighted partitions.
double sinr_power_term(const VectorXcd& h, const MatrixXcd& g_rx,
                       const VectorXcd& u, const VectorXcd& v,
                       const MatrixXd& weight_mask);

/// Per-user achievable rates with interference restricted to same-phase
/// co-users.
std::vector<double> instantaneous_rate(Phase phase, const SystemConfig& config,
                                       const ChannelSet& channels,
                                       const Partition& partition,
                                       const VectorXcd& u,
                                       const VectorXd& user_power,
                                       const std::vector<VectorXcd>& combiners);

/// Hermitian Q with bracket(U) = Re Tr(Q U): the closed-form ergodic-rate
/// bracket as an affine functional of the lifted surface matrix.
MatrixXcd ergodic_bracket_coeff(const VectorXcd& los_h, const MatrixXcd& los_g,
                                double kappa, const MatrixXd& weight_mask);

double ergodic_rate_approx_from_bracket(double p_k, double pl_h, double pl_g,
                                        double kappa, double sigma2,
                                        double bracket);

/// Closed-form approximated ergodic rate for one user at a lifted surface U.
double ergodic_rate_approx(const SystemConfig& config, const ChannelSet& channels,
                           int user, const MatrixXcd& u_lifted,
                           const MatrixXd& weight_mask, double p_k);

struct McEstimate {
  double mean = 0.0;
  double ci_halfwidth = 0.0;  // 95%, normal approximation
};

/// Monte Carlo ergodic rate with the matched-filter combiner, fresh NLoS
/// draws per sample; reproducible by seed.
McEstimate ergodic_rate_mc(const SystemConfig& config, const ChannelSet& channels,
                           int user, const Partition& partition,
                           const VectorXcd& u, double p_k, int n_draws,
                           std::uint64_t seed);

/// Coefficient tables for the instantaneous QoS constraint
///   P_k X_kk >= gamma (sum_j P_j X_kj + sigma^2),
/// affine in whichever block is currently free.
MatrixXcd qos_u_coeff(const VectorXcd& h_j, const MatrixXcd& g_rx,
                      const MatrixXcd& v_k, const MatrixXd& weight_mask);
MatrixXcd qos_v_coeff(const VectorXcd& h_j, const MatrixXcd& g_rx,
                      const MatrixXcd& u_lifted, const MatrixXd& weight_mask);
VectorXd qos_p_table(const VectorXcd& h_j, const MatrixXcd& g_rx,
                     const MatrixXcd& v_k, const MatrixXcd& u_lifted);

}  // namespace stars
