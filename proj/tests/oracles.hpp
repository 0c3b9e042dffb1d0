// Test-side oracles, independent of the library implementation paths they
// check. Shared between the unit suites and the acceptance binary.
#pragma once

#include <random>

#include "stars/conic.hpp"
#include "stars/fim.hpp"
#include "stars/model.hpp"

namespace stars::testing {

inline MatrixXcd random_cscg(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXcd x(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double re = g(rng), im = g(rng);
      x(r, c) = cplx(re, im) / std::sqrt(2.0);
    }
  return x;
}

inline VectorXcd random_unit_modulus(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 2.0 * kPi);
  VectorXcd v(n);
  for (int i = 0; i < n; ++i) v[i] = std::polar(1.0, u(rng));
  return v;
}

inline MatrixXcd random_hermitian_psd(std::mt19937_64& rng, int n, int rank) {
  MatrixXcd b = random_cscg(rng, n, rank);
  return b * b.adjoint();
}

/// Fisher information by central finite differences of the echo mean
/// q(varsigma) = vec(alpha * B eps eps^T A Theta X); the brute-force
/// construction the analytic engine must reproduce.
inline Eigen::Matrix4d fim_finite_difference(const Angles& angles, cplx alpha,
                                             int n_pe, int n_vertical,
                                             int n_horizontal,
                                             const VectorXcd& u,
                                             const MatrixXcd& x, double sigma2,
                                             double step = 1e-6) {
  const int n = n_vertical * n_horizontal;
  const int t = static_cast<int>(x.cols());
  auto q_of = [&](double az, double el, double re_a, double im_a) {
    const VectorXcd eps = steering({az, el}, n_vertical, n_horizontal);
    MatrixXcd h = cplx(re_a, im_a) * (eps * eps.transpose());
    h.topRows(n_pe).setZero();        // B mask
    h.rightCols(n - n_pe).setZero();  // A mask
    const MatrixXcd y = h * u.asDiagonal() * x;
    return VectorXcd(Eigen::Map<const VectorXcd>(y.data(), n * t));
  };
  const double p[4] = {angles.azimuth, angles.elevation, alpha.real(), alpha.imag()};
  std::vector<VectorXcd> dq(4);
  for (int i = 0; i < 4; ++i) {
    double hi[4], lo[4];
    for (int k = 0; k < 4; ++k) hi[k] = lo[k] = p[k];
    hi[i] += step;
    lo[i] -= step;
    dq[i] = (q_of(hi[0], hi[1], hi[2], hi[3]) - q_of(lo[0], lo[1], lo[2], lo[3])) /
            (2.0 * step);
  }
  Eigen::Matrix4d f;
  for (int h = 0; h < 4; ++h)
    for (int v = 0; v < 4; ++v)
      f(h, v) = 2.0 / sigma2 * (dq[h].adjoint() * dq[v])(0).real();
  return f;
}

/// Random SDP with a prescribed complementary primal/dual pair, so the
/// optimal objective is known exactly by construction.
struct KktInstance {
  conic::LoweredProblem problem;
  double optimal_objective = 0.0;
};

inline KktInstance make_kkt_instance(std::mt19937_64& rng, int n_vars = 6,
                                     int n_blocks = 2, bool with_equality = true) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> dims(2, 5);
  conic::LoweredProblem p;
  p.n_scalars = n_vars;
  VectorXd zstar(n_vars);
  for (int i = 0; i < n_vars; ++i) zstar[i] = g(rng);

  VectorXd c = VectorXd::Zero(n_vars);
  for (int bl = 0; bl < n_blocks; ++bl) {
    const int d = dims(rng);
    std::vector<MatrixXd> f(n_vars);
    for (int i = 0; i < n_vars; ++i) {
      MatrixXd a(d, d);
      for (int r = 0; r < d; ++r)
        for (int col = 0; col < d; ++col) a(r, col) = g(rng);
      f[i] = 0.5 * (a + a.transpose());
    }
    f[0] = MatrixXd::Identity(d, d);  // guarantees strictly feasible points
    // Complementary pair: S* and Y* supported on orthogonal eigenspaces.
    MatrixXd q(d, d);
    for (int r = 0; r < d; ++r)
      for (int col = 0; col < d; ++col) q(r, col) = g(rng);
    const MatrixXd orth = Eigen::HouseholderQR<MatrixXd>(q).householderQ();
    const int rank_s = std::max(1, d / 2);
    VectorXd ds = VectorXd::Zero(d), dy = VectorXd::Zero(d);
    std::uniform_real_distribution<double> pos(0.5, 2.0);
    for (int i = 0; i < rank_s; ++i) ds[i] = pos(rng);
    for (int i = rank_s; i < d; ++i) dy[i] = pos(rng);
    const MatrixXd s_star = orth * ds.asDiagonal() * orth.transpose();
    const MatrixXd y_star = orth * dy.asDiagonal() * orth.transpose();

    conic::LoweredProblem::Block blk;
    blk.dim = d;
    MatrixXd f0 = s_star;
    for (int i = 0; i < n_vars; ++i) {
      f0 -= zstar[i] * f[i];
      for (int r = 0; r < d; ++r)
        for (int col = 0; col < d; ++col)
          if (f[i](r, col) != 0.0) blk.coeff[i].push_back({r, col, f[i](r, col)});
      c[i] += f[i].cwiseProduct(y_star).sum();
    }
    for (int r = 0; r < d; ++r)
      for (int col = 0; col < d; ++col)
        if (f0(r, col) != 0.0) blk.f0.push_back({r, col, f0(r, col)});
    p.blocks.push_back(std::move(blk));
  }

  if (with_equality) {
    MatrixXd gm(1, n_vars);
    for (int i = 0; i < n_vars; ++i) gm(0, i) = g(rng);
    const double nustar = g(rng);
    c += gm.transpose() * nustar;
    p.eq_g = gm;
    p.eq_h = gm * zstar;
  } else {
    p.eq_g = MatrixXd::Zero(0, n_vars);
    p.eq_h = VectorXd::Zero(0);
  }

  p.c = c;
  KktInstance inst;
  inst.optimal_objective = c.dot(zstar);
  inst.problem = std::move(p);
  return inst;
}

}  // namespace stars::testing
