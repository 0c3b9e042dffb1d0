#include "stars/fim.hpp"

#include <cmath>

namespace stars {

namespace {

constexpr double kPsdTol = 1e-9;

void check_hermitian_psd(const MatrixXcd& r, const char* what) {
  const double scale = std::max(1.0, r.norm());
  if ((r - r.adjoint()).norm() > kPsdTol * scale)
    throw std::invalid_argument(std::string(what) + ": matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(r, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -kPsdTol * scale)
    throw std::invalid_argument(std::string(what) + ": matrix is not PSD");
}

// B C A: keep sensor rows, PE columns.
MatrixXcd mask_sensor_pe(const MatrixXcd& c, const Partition& part) {
  MatrixXcd d = MatrixXcd::Zero(c.rows(), c.cols());
  d.bottomLeftCorner(part.n_sensor, part.n_pe) =
      c.bottomLeftCorner(part.n_sensor, part.n_pe);
  return d;
}

// Raw complex traces T(h,v) = Tr(D_v W D_h^H) for h,v in {az, el, alpha}.
struct RawTraces {
  cplx pp[2][2];
  cplx pa[2];  // (h, alpha)
  cplx aa;
};

std::array<double, kFimEntryCount> assemble_entries(const RawTraces& t,
                                                    cplx alpha, int n_frames,
                                                    double sigma2) {
  const double s = 2.0 * n_frames / sigma2;
  const double a2 = std::norm(alpha);
  const cplx ac = std::conj(alpha);
  const cplx jac = cplx(0.0, 1.0) * ac;
  std::array<double, kFimEntryCount> e{};
  e[kPP00] = s * a2 * t.pp[0][0].real();
  e[kPP01] = s * a2 * t.pp[0][1].real();
  e[kPP11] = s * a2 * t.pp[1][1].real();
  e[kPA00] = s * (ac * t.pa[0]).real();
  e[kPA01] = s * (jac * t.pa[0]).real();
  e[kPA10] = s * (ac * t.pa[1]).real();
  e[kPA11] = s * (jac * t.pa[1]).real();
  e[kAA] = s * t.aa.real();
  return e;
}

}  // namespace

Eigen::Matrix4d FimBlocks::assemble() const {
  Eigen::Matrix4d f = Eigen::Matrix4d::Zero();
  f.topLeftCorner<2, 2>() = j_psi_psi;
  f.topRightCorner<2, 2>() = j_psi_alpha;
  f.bottomLeftCorner<2, 2>() = j_psi_alpha.transpose();
  f.bottomRightCorner<2, 2>() = j_alpha_alpha * Matrix2d::Identity();
  return f;
}

FimBlocks blocks_from_entries(const std::array<double, kFimEntryCount>& e) {
  FimBlocks b;
  b.j_psi_psi << e[kPP00], e[kPP01], e[kPP01], e[kPP11];
  b.j_psi_alpha << e[kPA00], e[kPA01], e[kPA10], e[kPA11];
  b.j_alpha_alpha = e[kAA];
  return b;
}

SteeringDerivs make_steering_derivs(const Angles& angles, int n_vertical,
                                    int n_horizontal) {
  SteeringDerivs sd;
  sd.eps = steering(angles, n_vertical, n_horizontal);
  sd.d_az = steering_derivative(angles, n_vertical, n_horizontal, AngleAxis::kAzimuth);
  sd.d_el = steering_derivative(angles, n_vertical, n_horizontal, AngleAxis::kElevation);
  sd.c_alpha = sd.eps * sd.eps.transpose();
  sd.c_az = sd.d_az * sd.eps.transpose() + sd.eps * sd.d_az.transpose();
  sd.c_el = sd.d_el * sd.eps.transpose() + sd.eps * sd.d_el.transpose();
  return sd;
}

MatrixXcd probing_covariance(Phase phase, const ChannelSet& channels,
                             const ProbingDesign& design, int n_phase1_users) {
  const int n = channels.n_elements();
  const MatrixXcd& r_s = design.r_of(phase);
  if (r_s.rows() != channels.g_tx.cols() || r_s.cols() != channels.g_tx.cols())
    throw std::invalid_argument("probing covariance dimension mismatch");
  MatrixXcd r = channels.g_tx * r_s * channels.g_tx.adjoint();
  if (phase == Phase::kReflection) {
    if (n_phase1_users < 1)
      throw std::invalid_argument("phase I requires at least one user channel");
    for (int k = 0; k < n_phase1_users; ++k) {
      if (channels.h_user[k].size() != n)
        throw std::invalid_argument("user channel dimension mismatch");
      r += design.user_power[k] * channels.h_user[k] * channels.h_user[k].adjoint();
    }
  }
  return r;
}

FimBlocks fim_extended(const SteeringDerivs& sd, cplx alpha,
                       const Partition& partition, const VectorXcd& u,
                       const MatrixXcd& r_x, int n_frames, double sigma2) {
  const int n = static_cast<int>(sd.eps.size());
  if (partition.n_total() != n || u.size() != n || r_x.rows() != n || r_x.cols() != n)
    throw std::invalid_argument("fim_extended: dimension mismatch");
  check_hermitian_psd(r_x, "fim_extended R_x");

  const MatrixXcd w = r_x.cwiseProduct(u * u.adjoint());  // Theta R Theta^H
  const MatrixXcd d_az = mask_sensor_pe(sd.c_az, partition);
  const MatrixXcd d_el = mask_sensor_pe(sd.c_el, partition);
  const MatrixXcd d_al = mask_sensor_pe(sd.c_alpha, partition);

  auto tr = [&](const MatrixXcd& dv, const MatrixXcd& dh) {
    return (dv * w * dh.adjoint()).trace();
  };
  RawTraces t;
  t.pp[0][0] = tr(d_az, d_az);
  t.pp[0][1] = tr(d_el, d_az);  // T(h=az, v=el): left factor carries v
  t.pp[1][1] = tr(d_el, d_el);
  t.pp[1][0] = t.pp[0][1];
  t.pa[0] = tr(d_al, d_az);
  t.pa[1] = tr(d_al, d_el);
  t.aa = tr(d_al, d_al);
  return blocks_from_entries(assemble_entries(t, alpha, n_frames, sigma2));
}

FimBlocks fim_fixed_partition(const SteeringDerivs& sd, cplx alpha,
                              const Partition& partition, const VectorXcd& u,
                              const MatrixXcd& r_x, int n_frames,
                              double sigma2) {
  const int n = static_cast<int>(sd.eps.size());
  if (partition.n_total() != n || u.size() != n || r_x.rows() != n || r_x.cols() != n)
    throw std::invalid_argument("fim_fixed_partition: dimension mismatch");
  const int n1 = partition.n_pe;
  const int n2 = partition.n_sensor;

  const VectorXcd a = sd.eps.head(n1);
  const VectorXcd b = sd.eps.tail(n2);
  const VectorXcd up = u.head(n1);
  const MatrixXcd w =
      r_x.topLeftCorner(n1, n1).cwiseProduct(up * up.adjoint());

  auto qdot = [&](const VectorXcd& d) {
    return MatrixXcd(d.tail(n2) * a.transpose() + b * d.head(n1).transpose());
  };
  const MatrixXcd q_az = qdot(sd.d_az);
  const MatrixXcd q_el = qdot(sd.d_el);
  const MatrixXcd q = b * a.transpose();

  auto tr = [&](const MatrixXcd& qv, const MatrixXcd& qh) {
    return (qv * w * qh.adjoint()).trace();
  };
  RawTraces t;
  t.pp[0][0] = tr(q_az, q_az);
  t.pp[0][1] = tr(q_el, q_az);
  t.pp[1][1] = tr(q_el, q_el);
  t.pp[1][0] = t.pp[0][1];
  t.pa[0] = tr(q, q_az);
  t.pa[1] = tr(q, q_el);
  t.aa = tr(q, q);
  return blocks_from_entries(assemble_entries(t, alpha, n_frames, sigma2));
}

CrbValue crb_from_fim(const FimBlocks& blocks) {
  Matrix2d schur;
  const double jaa = blocks.j_alpha_alpha;
  const double cross = blocks.j_psi_alpha.norm();
  if (jaa <= 0.0) {
    if (cross > 0.0)
      throw UnidentifiableError("alpha information vanished with nonzero coupling");
    schur = blocks.j_psi_psi;
  } else {
    schur = blocks.j_psi_psi -
            blocks.j_psi_alpha * blocks.j_psi_alpha.transpose() / jaa;
  }
  Eigen::SelfAdjointEigenSolver<Matrix2d> eig(schur);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(1);
  if (!(lo > 0.0) || hi / lo > 1e12)
    throw UnidentifiableError("FIM Schur complement is singular");
  CrbValue crb;
  crb.matrix = eig.eigenvectors() *
               eig.eigenvalues().cwiseInverse().asDiagonal() *
               eig.eigenvectors().transpose();
  crb.trace_rad2 = crb.matrix.trace();
  crb.root_deg = rad2deg(std::sqrt(crb.trace_rad2));
  return crb;
}

namespace {

struct Prefactors {
  std::array<cplx, kFimEntryCount> gamma;
  // Which (h, v) trace each entry consumes: 0=az,1=el,2=alpha.
  std::array<std::pair<int, int>, kFimEntryCount> hv;
};

Prefactors make_prefactors(cplx alpha, int n_frames, double sigma2) {
  const double s = 2.0 * n_frames / sigma2;
  const cplx ac = std::conj(alpha);
  const cplx jac = cplx(0.0, 1.0) * ac;
  Prefactors p;
  p.gamma = {s * std::norm(alpha), s * std::norm(alpha), s * std::norm(alpha),
             s * ac, s * jac, s * ac, s * jac, cplx(s, 0.0)};
  p.hv = {{{0, 0}, {0, 1}, {1, 1}, {0, 2}, {0, 2}, {1, 2}, {1, 2}, {2, 2}}};
  return p;
}

}  // namespace

FimBlocks FimUCoeffs::evaluate(const MatrixXcd& u_lifted) const {
  std::array<double, kFimEntryCount> e{};
  for (int i = 0; i < kFimEntryCount; ++i)
    e[i] = k[i].cwiseProduct(u_lifted.conjugate()).sum().real();
  return blocks_from_entries(e);
}

FimUCoeffs build_fim_u_coeffs(const SteeringDerivs& sd, cplx alpha,
                              const Partition& partition, const MatrixXcd& r_x,
                              int n_frames, double sigma2, int dim) {
  const int n = static_cast<int>(sd.eps.size());
  if (dim < partition.n_pe || dim > n)
    throw std::invalid_argument("u-coefficient restriction must cover the PE block");
  const MatrixXcd d_az = mask_sensor_pe(sd.c_az, partition);
  const MatrixXcd d_el = mask_sensor_pe(sd.c_el, partition);
  const MatrixXcd d_al = mask_sensor_pe(sd.c_alpha, partition);
  const MatrixXcd* d[3] = {&d_az, &d_el, &d_al};

  const Prefactors pf = make_prefactors(alpha, n_frames, sigma2);
  const MatrixXcd r_conj = r_x.conjugate();
  FimUCoeffs uc;
  uc.dim = dim;
  for (int i = 0; i < kFimEntryCount; ++i) {
    const auto [h, v] = pf.hv[i];
    // Tr(D_v W D_h^H) = Tr((A C_h^H B C_v A) (R .* U)) = Tr(K U)
    const MatrixXcd x = d[h]->adjoint() * (*d[v]);
    uc.k[i] = (pf.gamma[i] * x.cwiseProduct(r_conj)).topLeftCorner(dim, dim);
  }
  return uc;
}

FimBlocks FimWaveformCoeffs::evaluate(const VectorXd& phase_powers,
                                      const MatrixXcd& r_probe) const {
  std::array<double, kFimEntryCount> e{};
  for (int i = 0; i < kFimEntryCount; ++i) {
    e[i] = p_coeff[i].dot(phase_powers) +
           r_coeff[i].cwiseProduct(r_probe.conjugate()).sum().real();
  }
  return blocks_from_entries(e);
}

FimWaveformCoeffs build_fim_waveform_coeffs(const SteeringDerivs& sd, cplx alpha,
                                            const Partition& partition,
                                            const MatrixXcd& u_lifted,
                                            const ChannelSet& channels,
                                            Phase phase, int n_phase1_users,
                                            int n_frames, double sigma2) {
  const MatrixXcd d_az = mask_sensor_pe(sd.c_az, partition);
  const MatrixXcd d_el = mask_sensor_pe(sd.c_el, partition);
  const MatrixXcd d_al = mask_sensor_pe(sd.c_alpha, partition);
  const MatrixXcd* d[3] = {&d_az, &d_el, &d_al};

  FimWaveformCoeffs wc;
  if (phase == Phase::kReflection)
    for (int k = 0; k < n_phase1_users; ++k) wc.user_ids.push_back(k);

  const Prefactors pf = make_prefactors(alpha, n_frames, sigma2);
  const MatrixXcd uu = u_lifted.conjugate();  // Theta^H (.) Theta, lifted
  for (int i = 0; i < kFimEntryCount; ++i) {
    const auto [h, v] = pf.hv[i];
    const MatrixXcd z = (d[h]->adjoint() * (*d[v])).cwiseProduct(uu);
    wc.r_coeff[i] = pf.gamma[i] * (channels.g_tx.adjoint() * z * channels.g_tx);
    wc.p_coeff[i] = VectorXd::Zero(static_cast<int>(wc.user_ids.size()));
    for (std::size_t j = 0; j < wc.user_ids.size(); ++j) {
      const VectorXcd& hk = channels.h_user[wc.user_ids[j]];
      wc.p_coeff[i][static_cast<int>(j)] =
          (pf.gamma[i] * (hk.adjoint() * z * hk)(0)).real();
    }
  }
  return wc;
}

FimBlocks FimPartitionWeightCoeffs::evaluate(const VectorXd& weights) const {
  if (weights.size() != static_cast<Eigen::Index>(table.size()))
    throw std::invalid_argument("weight vector length mismatch");
  std::array<double, kFimEntryCount> e{};
  for (std::size_t n = 0; n < table.size(); ++n)
    for (int i = 0; i < kFimEntryCount; ++i)
      e[i] += weights[static_cast<int>(n)] * table[n][i];
  return blocks_from_entries(e);
}

FimPartitionWeightCoeffs build_fim_partition_weight_coeffs(
    const SteeringDerivs& sd, cplx alpha, const VectorXcd& u,
    const MatrixXcd& r_x, int n_frames, double sigma2) {
  const int n = static_cast<int>(sd.eps.size());
  const MatrixXcd w = r_x.cwiseProduct(u * u.adjoint());
  const MatrixXcd* c[3] = {&sd.c_az, &sd.c_el, &sd.c_alpha};
  const Prefactors pf = make_prefactors(alpha, n_frames, sigma2);

  FimPartitionWeightCoeffs pw;
  pw.table.resize(n - 1);
  for (int np = 1; np <= n - 1; ++np) {
    // F_{n,h} = C_h A_n - A_n C_h A_n, per the printed constant-matrix form.
    MatrixXcd f[3];
    for (int h = 0; h < 3; ++h) {
      MatrixXcd ca = MatrixXcd::Zero(n, n);
      ca.leftCols(np) = c[h]->leftCols(np);
      MatrixXcd aca = MatrixXcd::Zero(n, n);
      aca.topLeftCorner(np, np) = ca.topLeftCorner(np, np);
      f[h] = ca - aca;
    }
    for (int i = 0; i < kFimEntryCount; ++i) {
      const auto [h, v] = pf.hv[i];
      const cplx t = (f[v] * w * f[h].adjoint()).trace();
      pw.table[np - 1][i] = (pf.gamma[i] * t).real();
    }
  }
  return pw;
}

}  // namespace stars
