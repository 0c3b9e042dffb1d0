#include "stars/conic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <cstdlib>
#include <cstdio>

namespace stars::conic {

const char* status_name(Status s) {
  switch (s) {
    case Status::kOptimal: return "optimal";
    case Status::kInfeasible: return "infeasible";
    case Status::kUnbounded: return "unbounded";
    case Status::kMaxIter: return "max_iter";
  }
  return "?";
}

LinExpr& LinExpr::operator+=(const LinExpr& o) {
  constant_ += o.constant_;
  for (const auto& [id, v] : o.scalars_) scalars_[id] += v;
  for (const auto& [b, k] : o.traces_) {
    auto it = traces_.find(b);
    if (it == traces_.end())
      traces_.emplace(b, k);
    else
      it->second += k;
  }
  return *this;
}

LinExpr& LinExpr::operator-=(const LinExpr& o) {
  LinExpr neg = o;
  neg *= -1.0;
  return *this += neg;
}

LinExpr& LinExpr::operator*=(double s) {
  constant_ *= s;
  for (auto& [id, v] : scalars_) v *= s;
  for (auto& [b, k] : traces_) k *= s;
  return *this;
}

MatrixXd complex_to_real_embedding(const MatrixXcd& h) {
  const Eigen::Index n = h.rows();
  if (h.cols() != n) throw std::invalid_argument("embedding: square matrix required");
  if ((h - h.adjoint()).norm() > 1e-10 * std::max(1.0, h.norm()))
    throw std::invalid_argument("embedding: matrix is not Hermitian");
  MatrixXd e(2 * n, 2 * n);
  e.topLeftCorner(n, n) = h.real();
  e.bottomRightCorner(n, n) = h.real();
  e.topRightCorner(n, n) = -h.imag();
  e.bottomLeftCorner(n, n) = h.imag();
  return e;
}

// ---------------------------------------------------------------------------
// Problem assembly
// ---------------------------------------------------------------------------

int Problem::add_psd_block(int n, BlockKind kind) {
  if (n < 1) throw std::invalid_argument("block size must be >= 1");
  MatVar mv{kind, n, z_count_};
  z_count_ += kind == BlockKind::kRealSym ? n * (n + 1) / 2 : n * n;
  mat_vars_.push_back(mv);
  return static_cast<int>(mat_vars_.size()) - 1;
}

int Problem::add_scalar(VarKind kind) {
  scalar_kinds_.push_back(kind);
  scalar_z_.push_back(z_count_++);
  return static_cast<int>(scalar_kinds_.size()) - 1;
}

LinExpr Problem::tr(int block, const MatrixXcd& k) const {
  const MatVar& mv = mat_vars_.at(block);
  if (k.rows() != mv.n || k.cols() != mv.n)
    throw std::invalid_argument("trace coefficient dimension mismatch");
  LinExpr e;
  e.traces_.emplace(block, k);
  return e;
}

LinExpr Problem::entry_re(int block, int i, int j) const {
  const MatVar& mv = mat_vars_.at(block);
  MatrixXcd k = MatrixXcd::Zero(mv.n, mv.n);
  k(j, i) = 1.0;  // Tr(E_ji X) = X_ij
  return tr(block, k);
}

LinExpr Problem::entry_im(int block, int i, int j) const {
  const MatVar& mv = mat_vars_.at(block);
  MatrixXcd k = MatrixXcd::Zero(mv.n, mv.n);
  k(j, i) = cplx(0.0, -1.0);  // Re Tr(-j E_ji X) = Im X_ij
  return tr(block, k);
}

LinExpr Problem::var(int scalar_id) const {
  LinExpr e;
  e.scalars_[scalar_id] = 1.0;
  return e;
}

void Problem::add_eq_zero(const LinExpr& e) { eqs_.push_back(e); }
void Problem::add_ge_zero(const LinExpr& e) { ineqs_.push_back(e); }

int Problem::add_lmi(int dim) {
  Lmi l;
  l.dim = dim;
  l.upper.resize(dim * (dim + 1) / 2);
  lmis_.push_back(std::move(l));
  return static_cast<int>(lmis_.size()) - 1;
}

void Problem::lmi_set(int lmi, int i, int j, const LinExpr& e) {
  Lmi& l = lmis_.at(lmi);
  if (i > j) std::swap(i, j);
  l.upper.at(j * (j + 1) / 2 + i) = e;
}

namespace {

// z index of a matrix-variable entry; Hermitian columns hold interleaved
// (re, im) pairs followed by the diagonal slot.
int z_index_real_sym(int offset, int i, int j) {  // i <= j
  return offset + j * (j + 1) / 2 + i;
}
int z_index_herm(int offset, int i, int j, bool imag) {  // i <= j
  const int col = offset + j * j;
  if (i == j) return col + 2 * j;
  return col + 2 * i + (imag ? 1 : 0);
}

}  // namespace

void Problem::accumulate(const LinExpr& e, double weight,
                         std::map<int, double>& out, double& constant) const {
  constant += weight * e.constant_;
  for (const auto& [id, v] : e.scalars_) out[scalar_z_.at(id)] += weight * v;
  for (const auto& [b, k] : e.traces_) {
    const MatVar& mv = mat_vars_.at(b);
    const MatrixXcd h = 0.5 * (k + k.adjoint());
    for (int j = 0; j < mv.n; ++j) {
      for (int i = 0; i <= j; ++i) {
        if (mv.kind == BlockKind::kRealSym) {
          const double c = i == j ? h(i, i).real() : 2.0 * h(i, j).real();
          if (c != 0.0) out[z_index_real_sym(mv.z_offset, i, j)] += weight * c;
        } else {
          if (i == j) {
            const double c = h(i, i).real();
            if (c != 0.0) out[z_index_herm(mv.z_offset, i, i, false)] += weight * c;
          } else {
            const double cr = 2.0 * h(i, j).real();
            const double ci = 2.0 * h(i, j).imag();
            if (cr != 0.0) out[z_index_herm(mv.z_offset, i, j, false)] += weight * cr;
            if (ci != 0.0) out[z_index_herm(mv.z_offset, i, j, true)] += weight * ci;
          }
        }
      }
    }
  }
}

LoweredProblem Problem::lower() const {
  LoweredProblem p;
  p.n_scalars = z_count_;
  p.c = VectorXd::Zero(z_count_);
  {
    std::map<int, double> obj;
    double c0 = 0.0;
    accumulate(objective_, 1.0, obj, c0);
    p.obj_constant = c0;
    for (const auto& [zi, v] : obj) p.c[zi] = v;
  }

  using Triplet = LoweredProblem::Triplet;

  // Variable PSD cones.
  for (const MatVar& mv : mat_vars_) {
    LoweredProblem::Block blk;
    if (mv.kind == BlockKind::kRealSym) {
      blk.dim = mv.n;
      for (int j = 0; j < mv.n; ++j)
        for (int i = 0; i <= j; ++i) {
          auto& tris = blk.coeff[z_index_real_sym(mv.z_offset, i, j)];
          if (i == j) {
            tris.push_back({i, i, 1.0});
          } else {
            tris.push_back({i, j, 1.0});
            tris.push_back({j, i, 1.0});
          }
        }
    } else {
      const int n = mv.n;
      blk.dim = 2 * n;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i <= j; ++i) {
          if (i == j) {
            auto& tris = blk.coeff[z_index_herm(mv.z_offset, i, i, false)];
            tris.push_back({i, i, 1.0});
            tris.push_back({n + i, n + i, 1.0});
          } else {
            auto& re = blk.coeff[z_index_herm(mv.z_offset, i, j, false)];
            re.push_back({i, j, 1.0});
            re.push_back({j, i, 1.0});
            re.push_back({n + i, n + j, 1.0});
            re.push_back({n + j, n + i, 1.0});
            auto& im = blk.coeff[z_index_herm(mv.z_offset, i, j, true)];
            im.push_back({i, n + j, -1.0});
            im.push_back({n + j, i, -1.0});
            im.push_back({j, n + i, 1.0});
            im.push_back({n + i, j, 1.0});
          }
        }
    }
    p.blocks.push_back(std::move(blk));
  }

  // Declared LMIs.
  for (const Lmi& l : lmis_) {
    LoweredProblem::Block blk;
    blk.dim = l.dim;
    for (int j = 0; j < l.dim; ++j)
      for (int i = 0; i <= j; ++i) {
        const LinExpr& e = l.upper[j * (j + 1) / 2 + i];
        std::map<int, double> coeffs;
        double c0 = 0.0;
        accumulate(e, 1.0, coeffs, c0);
        auto push = [&](std::vector<Triplet>& tris, double v) {
          if (v == 0.0) return;
          tris.push_back({i, j, v});
          if (i != j) tris.push_back({j, i, v});
        };
        push(blk.f0, c0);
        for (const auto& [zi, v] : coeffs) push(blk.coeff[zi], v);
      }
    p.blocks.push_back(std::move(blk));
  }

  // Inequalities and nonnegative scalars as 1x1 cones.
  auto add_row_block = [&](const std::map<int, double>& coeffs, double c0) {
    LoweredProblem::Block blk;
    blk.dim = 1;
    if (c0 != 0.0) blk.f0.push_back({0, 0, c0});
    for (const auto& [zi, v] : coeffs)
      if (v != 0.0) blk.coeff[zi].push_back({0, 0, v});
    p.blocks.push_back(std::move(blk));
  };
  for (const LinExpr& e : ineqs_) {
    std::map<int, double> coeffs;
    double c0 = 0.0;
    accumulate(e, 1.0, coeffs, c0);
    add_row_block(coeffs, c0);
  }
  for (std::size_t s = 0; s < scalar_kinds_.size(); ++s) {
    if (scalar_kinds_[s] == VarKind::kNonneg)
      add_row_block({{scalar_z_[s], 1.0}}, 0.0);
  }

  // Equalities.
  const int n_eq = static_cast<int>(eqs_.size());
  p.eq_g = MatrixXd::Zero(n_eq, z_count_);
  p.eq_h = VectorXd::Zero(n_eq);
  for (int r = 0; r < n_eq; ++r) {
    std::map<int, double> coeffs;
    double c0 = 0.0;
    accumulate(eqs_[r], 1.0, coeffs, c0);
    for (const auto& [zi, v] : coeffs) p.eq_g(r, zi) = v;
    p.eq_h[r] = -c0;
  }

  if (guess_.size() == z_count_) p.solution = guess_;
  return p;
}

SolveReport Problem::solve(const SolveOptions& opts) {
  LoweredProblem p = lower();
  SolveReport rep = conic::solve(p, opts);
  solution_ = p.solution;
  return rep;
}

MatrixXcd Problem::block_value(int block) const {
  const MatVar& mv = mat_vars_.at(block);
  if (solution_.size() != z_count_)
    throw std::runtime_error("no solution available");
  MatrixXcd x(mv.n, mv.n);
  for (int j = 0; j < mv.n; ++j)
    for (int i = 0; i <= j; ++i) {
      cplx v;
      if (mv.kind == BlockKind::kRealSym) {
        v = solution_[z_index_real_sym(mv.z_offset, i, j)];
      } else if (i == j) {
        v = solution_[z_index_herm(mv.z_offset, i, i, false)];
      } else {
        v = cplx(solution_[z_index_herm(mv.z_offset, i, j, false)],
                 solution_[z_index_herm(mv.z_offset, i, j, true)]);
      }
      x(i, j) = v;
      x(j, i) = std::conj(v);
    }
  return x;
}

double Problem::scalar_value(int scalar_id) const {
  if (solution_.size() != z_count_)
    throw std::runtime_error("no solution available");
  return solution_[scalar_z_.at(scalar_id)];
}

// ---------------------------------------------------------------------------
// Interior-point core: primal-dual path following with NT scaling per block
// and a dense KKT solve.
//
//   min c^T z   s.t.  S = F0 + A(z) >= 0,   G z = h
//   dual:  max -Tr(F0 Y) + h^T nu  s.t.  A*(Y) + G^T nu = c,  Y >= 0
// ---------------------------------------------------------------------------

namespace {

struct CoreBlock {
  int dim = 0;
  MatrixXd f0;
  std::vector<int> vars;
  std::vector<std::vector<LoweredProblem::Triplet>> tris;
};

MatrixXd dense_from_triplets(int dim,
                             const std::vector<LoweredProblem::Triplet>& tris) {
  MatrixXd f = MatrixXd::Zero(dim, dim);
  for (const auto& t : tris) f(t.r, t.c) += t.v;
  return f;
}

// Largest step in (0, 1] keeping S + a * dS positive definite.
double max_step(const MatrixXd& s, const MatrixXd& ds) {
  Eigen::LLT<MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) return 0.0;
  const MatrixXd l = llt.matrixL();
  MatrixXd t = l.triangularView<Eigen::Lower>().solve(ds);
  t = l.triangularView<Eigen::Lower>().solve(t.transpose()).transpose();
  t = 0.5 * (t + t.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(t, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  if (lmin >= -1e-14) return 1.0;
  return std::min(1.0, -1.0 / lmin);
}

}  // namespace

SolveReport solve(LoweredProblem& p, const SolveOptions& opts) {
  SolveReport rep;
  const int m = p.n_scalars;
  const int n_eq = static_cast<int>(p.eq_g.rows());

  // Objective, block and equality-row scaling to O(1) coefficients.
  double s_obj = p.c.size() > 0 ? p.c.cwiseAbs().maxCoeff() : 0.0;
  if (s_obj < 1e-12) s_obj = 1.0;
  const VectorXd c = p.c / s_obj;

  std::vector<CoreBlock> blocks;
  blocks.reserve(p.blocks.size());
  for (const auto& b : p.blocks) {
    CoreBlock cb;
    cb.dim = b.dim;
    double scale = 0.0;
    for (const auto& t : b.f0) scale = std::max(scale, std::abs(t.v));
    for (const auto& [zi, tris] : b.coeff)
      for (const auto& t : tris) scale = std::max(scale, std::abs(t.v));
    if (scale <= 0.0) scale = 1.0;
    cb.f0 = dense_from_triplets(b.dim, b.f0) / scale;
    for (const auto& [zi, tris] : b.coeff) {
      cb.vars.push_back(zi);
      auto scaled = tris;
      for (auto& t : scaled) t.v /= scale;
      cb.tris.push_back(std::move(scaled));
    }
    blocks.push_back(std::move(cb));
  }

  MatrixXd eq_g = p.eq_g;
  VectorXd eq_h = p.eq_h;
  for (int r = 0; r < n_eq; ++r) {
    double scale =
        std::max(eq_g.cols() > 0 ? eq_g.row(r).cwiseAbs().maxCoeff() : 0.0,
                 std::abs(eq_h[r]));
    if (scale <= 0.0) scale = 1.0;
    eq_g.row(r) /= scale;
    eq_h[r] /= scale;
  }

  int n_tot = 0;
  for (const auto& b : blocks) n_tot += b.dim;
  if (m == 0) {
    rep.status = Status::kOptimal;
    rep.objective = rep.dual_objective = p.obj_constant;
    rep.message = "empty problem";
    p.solution = VectorXd::Zero(0);
    p.eq_duals = VectorXd::Zero(n_eq);
    return rep;
  }

  const int n_blk = static_cast<int>(blocks.size());
  VectorXd z = VectorXd::Zero(m);
  if (p.solution.size() == m && p.solution.allFinite()) z = p.solution;
  VectorXd nu = VectorXd::Zero(n_eq);
  std::vector<MatrixXd> s_mat(n_blk), y_mat(n_blk);

  auto affine_value = [&](const CoreBlock& b, const VectorXd& zz) {
    MatrixXd f = b.f0;
    for (std::size_t v = 0; v < b.vars.size(); ++v) {
      const double w = zz[b.vars[v]];
      if (w == 0.0) continue;
      for (const auto& t : b.tris[v]) f(t.r, t.c) += w * t.v;
    }
    return f;
  };

  // Balanced cold start: identical complementarity scale across blocks.
  for (int l = 0; l < n_blk; ++l) {
    const double beta = 1.0 + blocks[l].f0.norm() / std::sqrt(blocks[l].dim);
    s_mat[l] = beta * MatrixXd::Identity(blocks[l].dim, blocks[l].dim);
    y_mat[l] = MatrixXd::Identity(blocks[l].dim, blocks[l].dim);
  }

  std::vector<MatrixXd> r_p(n_blk), w_inv(n_blk), y_invs(n_blk);
  double best_merit = std::numeric_limits<double>::infinity();
  int best_merit_iter = 0;
  const double tol = opts.tol;

  for (int iter = 0;; ++iter) {
    // Residuals and convergence metrics.
    double prim_res = 0.0;
    for (int l = 0; l < n_blk; ++l) {
      r_p[l] = affine_value(blocks[l], z) - s_mat[l];
      prim_res = std::max(prim_res, r_p[l].norm() / (1.0 + blocks[l].f0.norm()));
    }
    VectorXd r_g = VectorXd::Zero(n_eq);
    if (n_eq > 0) {
      r_g = eq_h - eq_g * z;
      prim_res = std::max(prim_res, r_g.cwiseAbs().maxCoeff() /
                                        (1.0 + eq_h.cwiseAbs().maxCoeff()));
    }
    VectorXd r_d = c;
    double dual_f0_term = 0.0;
    for (int l = 0; l < n_blk; ++l) {
      const CoreBlock& b = blocks[l];
      for (std::size_t v = 0; v < b.vars.size(); ++v) {
        double acc = 0.0;
        for (const auto& t : b.tris[v]) acc += t.v * y_mat[l](t.r, t.c);
        r_d[b.vars[v]] -= acc;
      }
      dual_f0_term += b.f0.cwiseProduct(y_mat[l]).sum();
    }
    if (n_eq > 0) r_d -= eq_g.transpose() * nu;
    const double dual_res = r_d.cwiseAbs().maxCoeff() / (1.0 + c.cwiseAbs().maxCoeff());

    const double pobj = c.dot(z);
    const double dobj = -dual_f0_term + (n_eq > 0 ? eq_h.dot(nu) : 0.0);
    const double rel_gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));

    double mu = 0.0;
    for (int l = 0; l < n_blk; ++l)
      mu += s_mat[l].cwiseProduct(y_mat[l]).sum();
    mu /= n_tot;

    rep.iterations = iter;
    rep.objective = s_obj * pobj + p.obj_constant;
    rep.dual_objective = s_obj * dobj + p.obj_constant;
    rep.primal_residual = prim_res;
    rep.dual_residual = dual_res;
    rep.rel_gap = rel_gap;
    rep.mu_trace.push_back(mu);

    const double merit = std::max({prim_res, dual_res, rel_gap});
    if (merit < best_merit * 0.99) {
      best_merit = merit;
      best_merit_iter = iter;
    }

    if (prim_res < tol && dual_res < tol && rel_gap < tol) {
      rep.status = Status::kOptimal;
      break;
    }
    if (dobj > 1e9 && dual_res < 1e-4) {
      rep.status = Status::kInfeasible;
      rep.message = "dual objective diverging: primal infeasible";
      break;
    }
    if (pobj < -1e9 && prim_res < 1e-4) {
      rep.status = Status::kUnbounded;
      rep.message = "primal objective diverging: problem unbounded below";
      break;
    }
    if (iter - best_merit_iter >= opts.stall_window && rel_gap > 1e3 * tol) {
      if (pobj < -1e5 && std::abs(pobj) > 10.0 * std::abs(dobj)) {
        rep.status = Status::kUnbounded;
        rep.message = "objective decreasing along an improving ray";
      } else {
        rep.status = Status::kInfeasible;
        rep.message = "residual stagnation; problem judged infeasible or ill-posed";
      }
      break;
    }
    if (iter >= opts.max_iter) {
      rep.status = Status::kMaxIter;
      rep.message = "iteration limit reached";
      break;
    }

    // NT scaling point per block: W = Ls M^{-1/2} Ls^T with M = Ls^T Y Ls.
    // R with W = R R^T and the scaled point lambda = R^T Y R are kept for
    // the Mehrotra corrector.
    bool scaling_ok = true;
    std::vector<MatrixXd> r_fac(n_blk), r_fac_inv(n_blk), lam(n_blk);
    for (int l = 0; l < n_blk; ++l) {
      Eigen::LLT<MatrixXd> llt(s_mat[l]);
      if (llt.info() != Eigen::Success) { scaling_ok = false; break; }
      const MatrixXd ls = llt.matrixL();
      const MatrixXd mnt = ls.transpose() * y_mat[l] * ls;
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (mnt + mnt.transpose()));
      if (eig.eigenvalues().minCoeff() <= 0.0) { scaling_ok = false; break; }
      const VectorXd d = eig.eigenvalues();
      const MatrixXd msqrt = eig.eigenvectors() * d.cwiseSqrt().asDiagonal() *
                             eig.eigenvectors().transpose();
      const MatrixXd linv = ls.triangularView<Eigen::Lower>().solve(
          MatrixXd::Identity(blocks[l].dim, blocks[l].dim));
      w_inv[l] = linv.transpose() * msqrt * linv;
      w_inv[l] = 0.5 * (w_inv[l] + w_inv[l].transpose());
      r_fac[l] = ls * eig.eigenvectors() *
                 d.array().pow(-0.25).matrix().asDiagonal();
      r_fac_inv[l] = d.array().pow(0.25).matrix().asDiagonal() *
                     eig.eigenvectors().transpose() * linv;
      lam[l] = r_fac[l].transpose() * y_mat[l] * r_fac[l];
      lam[l] = 0.5 * (lam[l] + lam[l].transpose());
      Eigen::LLT<MatrixXd> ylt(y_mat[l]);
      if (ylt.info() != Eigen::Success) { scaling_ok = false; break; }
      y_invs[l] = ylt.solve(MatrixXd::Identity(blocks[l].dim, blocks[l].dim));
      y_invs[l] = 0.5 * (y_invs[l] + y_invs[l].transpose());
    }
    if (!scaling_ok) {
      // The iterate sits at the numerical floor of the cone; classify by the
      // metrics it reached.
      if (prim_res < 10.0 * tol && dual_res < 10.0 * tol && rel_gap < 20.0 * tol) {
        rep.status = Status::kOptimal;
        rep.message = "terminated at numerical precision floor";
      } else {
        rep.status = Status::kMaxIter;
        rep.message = "numerical breakdown in NT scaling";
      }
      break;
    }

    // Schur matrix M_ij = sum_l Tr(F_i W^-1 F_j W^-1).
    MatrixXd schur = MatrixXd::Zero(m, m);
    for (int l = 0; l < n_blk; ++l) {
      const CoreBlock& b = blocks[l];
      const MatrixXd& wi = w_inv[l];
      for (std::size_t vi = 0; vi < b.vars.size(); ++vi) {
        MatrixXd ti = MatrixXd::Zero(b.dim, b.dim);
        for (const auto& t : b.tris[vi])
          ti.noalias() += t.v * (wi.col(t.r) * wi.row(t.c));
        for (std::size_t vj = vi; vj < b.vars.size(); ++vj) {
          double acc = 0.0;
          for (const auto& t : b.tris[vj]) acc += t.v * ti(t.r, t.c);
          schur(b.vars[vi], b.vars[vj]) += acc;
        }
      }
    }
    schur = schur.selfadjointView<Eigen::Upper>();
    // Proportional regularization: absolute shifts scaled to the row would
    // swamp the direction once W^-1 grows near convergence.
    schur.diagonal().array() += 1e-14 * (schur.diagonal().array().abs() + 1.0);

    const int kdim = m + n_eq;
    MatrixXd kkt = MatrixXd::Zero(kdim, kdim);
    kkt.topLeftCorner(m, m) = schur;
    if (n_eq > 0) {
      kkt.topRightCorner(m, n_eq) = eq_g.transpose();
      kkt.bottomLeftCorner(n_eq, m) = eq_g;
      kkt.bottomRightCorner(n_eq, n_eq).diagonal().array() -= 1e-14;
    }
    Eigen::PartialPivLU<MatrixXd> lu(kkt);

    // Direction for a given centering target; returns (dz, dnu, dS, dY).
    auto direction = [&](double sigma_mu, const std::vector<MatrixXd>* corr,
                         std::vector<MatrixXd>& ds, std::vector<MatrixXd>& dy,
                         VectorXd& dz, VectorXd& dnu) {
      VectorXd rhs = VectorXd::Zero(kdim);
      std::vector<MatrixXd> dm(n_blk);
      for (int l = 0; l < n_blk; ++l) {
        const CoreBlock& b = blocks[l];
        MatrixXd dc = -s_mat[l];
        if (sigma_mu > 0.0) dc += sigma_mu * y_invs[l];
        if (corr != nullptr) dc -= (*corr)[l];
        dm[l] = dc - r_p[l];
        const MatrixXd e = w_inv[l] * dm[l] * w_inv[l];
        for (std::size_t v = 0; v < b.vars.size(); ++v) {
          double acc = 0.0;
          for (const auto& t : b.tris[v]) acc += t.v * e(t.r, t.c);
          rhs[b.vars[v]] += acc;
        }
      }
      rhs.head(m) -= r_d;  // rhs1 = A*(Winv (Dc - rp) Winv) - r_d
      if (n_eq > 0) rhs.tail(n_eq) = r_g;
      VectorXd sol = lu.solve(rhs);
      for (int refine = 0; refine < 2; ++refine) {
        const VectorXd resid = rhs - kkt * sol;
        sol += lu.solve(resid);
      }
      dz = sol.head(m);
      dnu = n_eq > 0 ? VectorXd(-sol.tail(n_eq)) : VectorXd::Zero(0);
      ds.resize(n_blk);
      dy.resize(n_blk);
      for (int l = 0; l < n_blk; ++l) {
        const CoreBlock& b = blocks[l];
        MatrixXd az = MatrixXd::Zero(b.dim, b.dim);
        for (std::size_t v = 0; v < b.vars.size(); ++v) {
          const double w = dz[b.vars[v]];
          if (w == 0.0) continue;
          for (const auto& t : b.tris[v]) az(t.r, t.c) += w * t.v;
        }
        ds[l] = az + r_p[l];
        dy[l] = w_inv[l] * (dm[l] - az) * w_inv[l];
        dy[l] = 0.5 * (dy[l] + dy[l].transpose());
        ds[l] = 0.5 * (ds[l] + ds[l].transpose());
      }
    };

    std::vector<MatrixXd> ds, dy;
    VectorXd dz, dnu;

    // A common primal/dual step keeps the complementarity gap monotone
    // along the NT direction (to first order).
    auto boundary_step = [&](const std::vector<MatrixXd>& dss,
                             const std::vector<MatrixXd>& dys) {
      double a = 1.0;
      for (int l = 0; l < n_blk; ++l) {
        a = std::min(a, max_step(s_mat[l], dss[l]));
        a = std::min(a, max_step(y_mat[l], dys[l]));
      }
      return a;
    };

    // Predictor (sigma = 0) fixes the centering weight.
    direction(0.0, nullptr, ds, dy, dz, dnu);
    const double a_aff = 0.98 * boundary_step(ds, dy);
    double mu_aff = 0.0;
    for (int l = 0; l < n_blk; ++l)
      mu_aff +=
          (s_mat[l] + a_aff * ds[l]).cwiseProduct(y_mat[l] + a_aff * dy[l]).sum();
    mu_aff = std::max(mu_aff / n_tot, 0.0);
    double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3.0);
    sigma = std::clamp(sigma, 1e-6, 0.99);

    // Mehrotra second-order term, evaluated in the scaled space where the
    // centrality map is lambda -> lambda o lambda. Scaled by the square of
    // the achievable affine step, which is the size of the quadratic error
    // actually incurred.
    const double corr_weight = std::min(1.0, a_aff * a_aff);
    std::vector<MatrixXd> corr(n_blk);
    for (int l = 0; l < n_blk; ++l) {
      const MatrixXd sa = r_fac_inv[l] * ds[l] * r_fac_inv[l].transpose();
      const MatrixXd ya = r_fac[l].transpose() * dy[l] * r_fac[l];
      const MatrixXd prod = 0.5 * (sa * ya + ya * sa);
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(lam[l]);
      const VectorXd d = eig.eigenvalues();
      MatrixXd ct = eig.eigenvectors().transpose() * prod * eig.eigenvectors();
      for (int r = 0; r < ct.rows(); ++r)
        for (int c2 = 0; c2 < ct.cols(); ++c2) ct(r, c2) *= 2.0 / (d[r] + d[c2]);
      const MatrixXd x = eig.eigenvectors() * ct * eig.eigenvectors().transpose();
      corr[l] = corr_weight * (r_fac[l] * x * r_fac[l].transpose());
      corr[l] = 0.5 * (corr[l] + corr[l].transpose());
    }

    // Absolute slack covers roundoff in the trace sums once mu is many
    // orders below its starting value.
    const double mu_slack = 1e-9 * mu + 1e-12 * rep.mu_trace.front();
    auto guarded_step = [&](const std::vector<MatrixXd>& dss,
                            const std::vector<MatrixXd>& dys) {
      double a = std::min(1.0, 0.98 * boundary_step(dss, dys));
      for (int guard = 0; guard < 60; ++guard) {
        double mu_new = 0.0;
        for (int l = 0; l < n_blk; ++l)
          mu_new +=
              (s_mat[l] + a * dss[l]).cwiseProduct(y_mat[l] + a * dys[l]).sum();
        mu_new /= n_tot;
        if (mu_new <= mu + mu_slack) break;
        a *= 0.7;
      }
      return a;
    };

    // Corrected direction; fall back to the plain centering direction when
    // the corrector does not help.
    direction(sigma * mu, &corr, ds, dy, dz, dnu);
    double alpha = guarded_step(ds, dy);
    if (alpha < std::max(0.05, 0.5 * a_aff)) {
      std::vector<MatrixXd> ds2, dy2;
      VectorXd dz2, dnu2;
      direction(sigma * mu, nullptr, ds2, dy2, dz2, dnu2);
      const double alpha2 = guarded_step(ds2, dy2);
      if (alpha2 > alpha) {
        ds = std::move(ds2);
        dy = std::move(dy2);
        dz = std::move(dz2);
        dnu = std::move(dnu2);
        alpha = alpha2;
      }
    }

    if (std::getenv("STARS_CONIC_TRACE") != nullptr) {
      // Residuals of the three Newton equations at the corrector direction.
      VectorXd nd = -r_d;
      for (int l = 0; l < n_blk; ++l) {
        const CoreBlock& b = blocks[l];
        for (std::size_t v = 0; v < b.vars.size(); ++v) {
          double acc = 0.0;
          for (const auto& t : b.tris[v]) acc += t.v * dy[l](t.r, t.c);
          nd[b.vars[v]] += acc;
        }
      }
      if (n_eq > 0) nd += eq_g.transpose() * dnu;
      double cent_err = 0.0;
      for (int l = 0; l < n_blk; ++l) {
        const MatrixXd w = w_inv[l].inverse();
        const MatrixXd dc = sigma * mu * y_invs[l] - s_mat[l];
        cent_err = std::max(cent_err,
                            (ds[l] + w * dy[l] * w - dc).norm() / (1.0 + dc.norm()));
      }
      std::ostringstream msg;
      msg << "iter " << iter << " mu " << mu << " sigma " << sigma << " alpha "
          << alpha << " aff " << a_aff << " pres " << prim_res << " dres "
          << dual_res << " gap " << rel_gap << " nd " << nd.cwiseAbs().maxCoeff()
          << " cent " << cent_err;
      std::fputs((msg.str() + "\n").c_str(), stderr);
    }

    z += alpha * dz;
    if (n_eq > 0) nu += alpha * dnu;
    for (int l = 0; l < n_blk; ++l) {
      s_mat[l] += alpha * ds[l];
      y_mat[l] += alpha * dy[l];
      s_mat[l] = 0.5 * (s_mat[l] + s_mat[l].transpose());
      y_mat[l] = 0.5 * (y_mat[l] + y_mat[l].transpose());
    }
  }

  p.solution = z;
  p.eq_duals = nu;
  return rep;
}

// ---------------------------------------------------------------------------
// Self-describing dump / load of the canonical form
// ---------------------------------------------------------------------------

void dump(const LoweredProblem& p, std::ostream& os) {
  os << "starsim-conic-v1\n";
  os << std::setprecision(17);
  os << "scalars " << p.n_scalars << "\n";
  os << "objective_constant " << p.obj_constant << "\n";
  os << "objective";
  for (int i = 0; i < p.c.size(); ++i) os << " " << p.c[i];
  os << "\n";
  os << "blocks " << p.blocks.size() << "\n";
  for (const auto& b : p.blocks) {
    os << "block " << b.dim << " " << b.f0.size() << " " << b.coeff.size() << "\n";
    for (const auto& t : b.f0) os << t.r << " " << t.c << " " << t.v << "\n";
    for (const auto& [zi, tris] : b.coeff) {
      os << "var " << zi << " " << tris.size() << "\n";
      for (const auto& t : tris) os << t.r << " " << t.c << " " << t.v << "\n";
    }
  }
  os << "equalities " << p.eq_g.rows() << "\n";
  for (int r = 0; r < p.eq_g.rows(); ++r) {
    os << p.eq_h[r];
    for (int i = 0; i < p.eq_g.cols(); ++i) os << " " << p.eq_g(r, i);
    os << "\n";
  }
  os << "end\n";
}

LoweredProblem load_problem(std::istream& is) {
  LoweredProblem p;
  std::string tok;
  is >> tok;
  if (tok != "starsim-conic-v1") throw std::runtime_error("bad problem header");
  auto expect = [&](const char* what) {
    is >> tok;
    if (tok != what) throw std::runtime_error(std::string("expected ") + what);
  };
  expect("scalars");
  is >> p.n_scalars;
  expect("objective_constant");
  is >> p.obj_constant;
  expect("objective");
  p.c = VectorXd::Zero(p.n_scalars);
  for (int i = 0; i < p.n_scalars; ++i) is >> p.c[i];
  expect("blocks");
  std::size_t n_blocks = 0;
  is >> n_blocks;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    expect("block");
    LoweredProblem::Block blk;
    std::size_t nnz0 = 0, nvars = 0;
    is >> blk.dim >> nnz0 >> nvars;
    for (std::size_t t = 0; t < nnz0; ++t) {
      LoweredProblem::Triplet tr;
      is >> tr.r >> tr.c >> tr.v;
      blk.f0.push_back(tr);
    }
    for (std::size_t v = 0; v < nvars; ++v) {
      expect("var");
      int zi = 0;
      std::size_t nnz = 0;
      is >> zi >> nnz;
      auto& tris = blk.coeff[zi];
      for (std::size_t t = 0; t < nnz; ++t) {
        LoweredProblem::Triplet tr;
        is >> tr.r >> tr.c >> tr.v;
        tris.push_back(tr);
      }
    }
    p.blocks.push_back(std::move(blk));
  }
  expect("equalities");
  int n_eq = 0;
  is >> n_eq;
  p.eq_g = MatrixXd::Zero(n_eq, p.n_scalars);
  p.eq_h = VectorXd::Zero(n_eq);
  for (int r = 0; r < n_eq; ++r) {
    is >> p.eq_h[r];
    for (int i = 0; i < p.n_scalars; ++i) is >> p.eq_g(r, i);
  }
  expect("end");
  if (!is) throw std::runtime_error("truncated problem file");
  return p;
}

// ---------------------------------------------------------------------------
// Fragments
// ---------------------------------------------------------------------------

int SymFreeVar::id_of(int i, int j) const {
  if (i > j) std::swap(i, j);
  return ids.at(j * (j + 1) / 2 + i);
}

SymFreeVar add_sym_free(Problem& p, int dim) {
  SymFreeVar v;
  v.dim = dim;
  for (int j = 0; j < dim; ++j)
    for (int i = 0; i <= j; ++i) v.ids.push_back(p.add_scalar(VarKind::kFree));
  return v;
}

TraceInverseEpigraph add_trace_inverse_epigraph(
    Problem& p, const std::vector<std::vector<LinExpr>>& e_entries) {
  const int d = static_cast<int>(e_entries.size());
  if (d < 1) throw std::invalid_argument("epigraph dimension must be >= 1");
  TraceInverseEpigraph frag;
  frag.w = add_sym_free(p, d);
  const int lmi = p.add_lmi(2 * d);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i <= j; ++i) {
      p.lmi_set(lmi, i, j, p.var(frag.w.id_of(i, j)));
      p.lmi_set(lmi, d + i, d + j, e_entries[i][j]);
    }
    p.lmi_set(lmi, j, d + j, LinExpr(1.0));
  }
  for (int i = 0; i < d; ++i) frag.trace_w += p.var(frag.w.id_of(i, i));
  return frag;
}

}  // namespace stars::conic
