#include "stars/rate.hpp"

#include <random>

namespace stars {

namespace {

double half_log2_1p(double snr) { return 0.5 * std::log2(1.0 + snr); }

MatrixXcd draw_cscg(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  MatrixXcd x(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      x(r, c) = cplx(gauss(rng) * inv_sqrt2, gauss(rng) * inv_sqrt2);
  return x;
}

}  // namespace

MatrixXd weight_mask_from_partition(int n, int n_pe) {
  MatrixXd w = MatrixXd::Zero(n, n);
  w.topLeftCorner(n_pe, n_pe).setOnes();
  return w;
}

MatrixXd weight_mask_from_weights(const VectorXd& p) {
  const int n = static_cast<int>(p.size()) + 1;
  // Entry (a,b) collects the weight of partitions with PE count > max(a,b).
  VectorXd suffix(n);  // suffix[k] = sum of p_m for m >= k+1 (PE count m)
  suffix[n - 1] = 0.0;
  for (int k = n - 2; k >= 0; --k) suffix[k] = suffix[k + 1] + p[k];
  MatrixXd w(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) w(a, b) = suffix[std::max(a, b)];
  return w;
}

VectorXcd effective_channel(const VectorXcd& h, const MatrixXcd& g_rx,
                            const VectorXcd& u, const VectorXd& pe_mask) {
  const VectorXcd t =
      h.conjugate().cwiseProduct(u).cwiseProduct(pe_mask.cast<cplx>());
  return g_rx.transpose() * t;
}

double sinr_power_term(const VectorXcd& h, const MatrixXcd& g_rx,
                       const VectorXcd& u, const VectorXcd& v,
                       const MatrixXd& weight_mask) {
  // sum_n p_n |h^H Theta A_n G v|^2, evaluated per distinct mask level.
  const int n = static_cast<int>(h.size());
  const VectorXcd gv = g_rx * v;
  const VectorXcd terms = h.conjugate().cwiseProduct(u).cwiseProduct(gv);
  // weight_mask diagonal is the suffix-weight profile; reconstruct the
  // per-partition weights from its steps.
  double acc = 0.0;
  cplx partial = 0.0;
  for (int k = 0; k < n; ++k) {
    partial += terms[k];
    const double w_here = weight_mask(k, k) - (k + 1 < n ? weight_mask(k + 1, k + 1) : 0.0);
    if (w_here != 0.0) acc += w_here * std::norm(partial);
  }
  return acc;
}

std::vector<double> instantaneous_rate(Phase phase, const SystemConfig& config,
                                       const ChannelSet& channels,
                                       const Partition& partition,
                                       const VectorXcd& u,
                                       const VectorXd& user_power,
                                       const std::vector<VectorXcd>& combiners) {
  const std::vector<int> users = config.phase_users(phase);
  if (combiners.size() != users.size())
    throw std::invalid_argument("one combiner per phase user required");
  VectorXd pe_mask = VectorXd::Zero(partition.n_total());
  pe_mask.head(partition.n_pe).setOnes();

  std::vector<VectorXcd> eff(users.size());
  for (std::size_t i = 0; i < users.size(); ++i)
    eff[i] = effective_channel(channels.h_user[users[i]], channels.g_rx, u, pe_mask);

  std::vector<double> rates(users.size());
  for (std::size_t i = 0; i < users.size(); ++i) {
    const VectorXcd& v = combiners[i];
    if (v.norm() < 1e-12) throw std::invalid_argument("zero-norm combiner");
    const double sig =
        user_power[users[i]] * std::norm((eff[i].transpose() * v)(0));
    double interf = 0.0;
    for (std::size_t j = 0; j < users.size(); ++j) {
      if (j == i) continue;
      interf += user_power[users[j]] * std::norm((eff[j].transpose() * v)(0));
    }
    rates[i] = half_log2_1p(sig / (interf + config.noise_power * v.squaredNorm()));
  }
  return rates;
}

MatrixXcd ergodic_bracket_coeff(const VectorXcd& los_h, const MatrixXcd& los_g,
                                double kappa, const MatrixXd& weight_mask) {
  const int n = static_cast<int>(los_h.size());
  const int m_rx = static_cast<int>(los_g.cols());
  const MatrixXcd cascade = los_h.conjugate().asDiagonal() * los_g;  // H = diag(h^H) G
  MatrixXcd q = kappa * kappa *
                (cascade * cascade.adjoint()).conjugate().cwiseProduct(
                    weight_mask.cast<cplx>());
  VectorXd diag_terms =
      kappa * los_g.cwiseAbs2().rowwise().sum() +
      (kappa * m_rx) * los_h.cwiseAbs2() + m_rx * VectorXd::Ones(n);
  q += diag_terms.cwiseProduct(weight_mask.diagonal()).asDiagonal().toDenseMatrix().cast<cplx>();
  return q;
}

double ergodic_rate_approx_from_bracket(double p_k, double pl_h, double pl_g,
                                        double kappa, double sigma2,
                                        double bracket) {
  const double gain = p_k * pl_h * pl_h * pl_g * pl_g /
                      (sigma2 * (1.0 + kappa) * (1.0 + kappa));
  return half_log2_1p(gain * bracket);
}

double ergodic_rate_approx(const SystemConfig& config, const ChannelSet& channels,
                           int user, const MatrixXcd& u_lifted,
                           const MatrixXd& weight_mask, double p_k) {
  const MatrixXcd q = ergodic_bracket_coeff(
      channels.los_h_user[user], channels.los_g_rx, config.rician_kappa,
      weight_mask);
  const double bracket = q.cwiseProduct(u_lifted.conjugate()).sum().real();
  return ergodic_rate_approx_from_bracket(p_k, channels.pl_h_user[user],
                                          channels.pl_g_rx, config.rician_kappa,
                                          config.noise_power, bracket);
}

McEstimate ergodic_rate_mc(const SystemConfig& config, const ChannelSet& channels,
                           int user, const Partition& partition,
                           const VectorXcd& u, double p_k, int n_draws,
                           std::uint64_t seed) {
  if (n_draws < 100) throw std::invalid_argument("need at least 100 draws");
  const int n = channels.n_elements();
  const int m_rx = static_cast<int>(channels.g_rx.cols());
  const double kappa = config.rician_kappa;
  const double los_w = std::sqrt(kappa / (1.0 + kappa));
  const double nlos_w = std::sqrt(1.0 / (1.0 + kappa));
  VectorXd pe_mask = VectorXd::Zero(n);
  pe_mask.head(partition.n_pe).setOnes();

  std::mt19937_64 rng(seed);
  double sum = 0.0, sum_sq = 0.0;
  for (int d = 0; d < n_draws; ++d) {
    const MatrixXcd g = channels.pl_g_rx *
                        (los_w * channels.los_g_rx + nlos_w * draw_cscg(rng, n, m_rx));
    const VectorXcd h =
        channels.pl_h_user[user] *
        (los_w * channels.los_h_user[user] + nlos_w * draw_cscg(rng, n, 1));
    const VectorXcd eff = effective_channel(h, g, u, pe_mask);
    const double rate = half_log2_1p(p_k * eff.squaredNorm() / config.noise_power);
    sum += rate;
    sum_sq += rate * rate;
  }
  McEstimate est;
  est.mean = sum / n_draws;
  const double var =
      std::max(0.0, sum_sq / n_draws - est.mean * est.mean) * n_draws / (n_draws - 1.0);
  est.ci_halfwidth = 1.96 * std::sqrt(var / n_draws);
  return est;
}

MatrixXcd qos_u_coeff(const VectorXcd& h_j, const MatrixXcd& g_rx,
                      const MatrixXcd& v_k, const MatrixXd& weight_mask) {
  const MatrixXcd cascade = h_j.conjugate().asDiagonal() * g_rx;
  return (cascade * v_k * cascade.adjoint())
      .conjugate()
      .cwiseProduct(weight_mask.cast<cplx>());
}

MatrixXcd qos_v_coeff(const VectorXcd& h_j, const MatrixXcd& g_rx,
                      const MatrixXcd& u_lifted, const MatrixXd& weight_mask) {
  const MatrixXcd cascade = h_j.conjugate().asDiagonal() * g_rx;
  const MatrixXcd masked_ut =
      u_lifted.transpose().cwiseProduct(weight_mask.cast<cplx>());
  return cascade.adjoint() * masked_ut * cascade;
}

VectorXd qos_p_table(const VectorXcd& h_j, const MatrixXcd& g_rx,
                     const MatrixXcd& v_k, const MatrixXcd& u_lifted) {
  const int n = static_cast<int>(h_j.size());
  const MatrixXcd cascade = h_j.conjugate().asDiagonal() * g_rx;
  const MatrixXcd m0 = (cascade * v_k * cascade.adjoint()).conjugate();
  VectorXd table(n - 1);
  for (int np = 1; np <= n - 1; ++np)
    table[np - 1] =
        (m0.topLeftCorner(np, np) * u_lifted.topLeftCorner(np, np))
            .trace()
            .real();
  return table;
}

}  // namespace stars
