#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "stars/types.hpp"

namespace stars::conic {

enum class BlockKind { kRealSym, kHermitian };
enum class VarKind { kNonneg, kFree };
enum class Status { kOptimal, kInfeasible, kUnbounded, kMaxIter };

const char* status_name(Status s);

struct SolveOptions {
  double tol = 1e-7;
  int max_iter = 200;
  int stall_window = 20;
};

struct SolveReport {
  Status status = Status::kMaxIter;
  double objective = 0.0;
  double dual_objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double rel_gap = 0.0;
  int iterations = 0;
  std::vector<double> mu_trace;  // complementarity gap per accepted iteration
  std::string message;

  bool ok() const { return status == Status::kOptimal; }
};

/// Real-linear expression over the problem variables:
///   constant + sum_i coeff_i * scalar_i + sum_b Re Tr(K_b * X_b).
class LinExpr {
 public:
  LinExpr() = default;
  LinExpr(double c) : constant_(c) {}  // NOLINT: implicit by design

  double constant_ = 0.0;
  std::map<int, double> scalars_;
  std::map<int, MatrixXcd> traces_;

  LinExpr& operator+=(const LinExpr& o);
  LinExpr& operator-=(const LinExpr& o);
  LinExpr& operator*=(double s);
  friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
  friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
  friend LinExpr operator*(LinExpr a, double s) { return a *= s; }
  friend LinExpr operator*(double s, LinExpr a) { return a *= s; }
  friend LinExpr operator-(LinExpr a) { return a *= -1.0; }
};

/// Canonical dense form consumed by the interior-point core:
///   min c^T z  s.t.  F0_l + sum_i z_i F_i_l  >= 0  (each block l),  G z = h.
struct LoweredProblem {
  struct Triplet {
    int r = 0, c = 0;
    double v = 0.0;
  };
  struct Block {
    int dim = 0;
    std::vector<Triplet> f0;
    std::map<int, std::vector<Triplet>> coeff;  // z index -> symmetric triplets
  };
  int n_scalars = 0;
  double obj_constant = 0.0;
  VectorXd c;
  std::vector<Block> blocks;
  MatrixXd eq_g;  // p x m
  VectorXd eq_h;  // p

  VectorXd solution;       // filled by solve()
  VectorXd eq_duals;       // filled by solve()
};

SolveReport solve(LoweredProblem& p, const SolveOptions& opts = {});
void dump(const LoweredProblem& p, std::ostream& os);
LoweredProblem load_problem(std::istream& is);

/// [Re H, -Im H; Im H, Re H]; PSD iff H is, eigenvalues doubled in
/// multiplicity. Rejects non-Hermitian input.
MatrixXd complex_to_real_embedding(const MatrixXcd& h);

/// Small dense SDP assembled from PSD matrix blocks, scalar variables,
/// linear (in)equalities and real symmetric LMI constraints.
class Problem {
 public:
  int add_psd_block(int n, BlockKind kind);
  int add_scalar(VarKind kind);

  LinExpr tr(int block, const MatrixXcd& k) const;  // Re Tr(K X_block)
  LinExpr entry_re(int block, int i, int j) const;
  LinExpr entry_im(int block, int i, int j) const;
  LinExpr var(int scalar_id) const;

  void add_eq_zero(const LinExpr& e);
  void add_ge_zero(const LinExpr& e);

  /// Real symmetric LMI block; unset entries default to zero.
  int add_lmi(int dim);
  void lmi_set(int lmi, int i, int j, const LinExpr& e);

  void minimize(const LinExpr& e) { objective_ = e; }

  SolveReport solve(const SolveOptions& opts = {});

  /// Warm start for the scalar vector (optional, size must match).
  void set_initial_guess(const VectorXd& z) { guess_ = z; }

  MatrixXcd block_value(int block) const;
  double scalar_value(int scalar_id) const;

  LoweredProblem lower() const;

  int scalar_count() const { return static_cast<int>(scalar_kinds_.size()); }

 private:
  struct MatVar {
    BlockKind kind;
    int n;
    int z_offset;  // z indices assigned at registration
  };
  struct Lmi {
    int dim;
    std::vector<LinExpr> upper;  // (i <= j) col-major
  };
  int z_count_ = 0;
  std::vector<MatVar> mat_vars_;
  std::vector<VarKind> scalar_kinds_;
  std::vector<int> scalar_z_;
  std::vector<LinExpr> eqs_;
  std::vector<LinExpr> ineqs_;
  std::vector<Lmi> lmis_;
  LinExpr objective_;
  VectorXd guess_;
  VectorXd solution_;

  void accumulate(const LinExpr& e, double weight,
                  std::map<int, double>& out, double& constant) const;
};

/// Symmetric matrix of free scalars (used for epigraph variables that are
/// kept PSD by a surrounding LMI rather than their own cone).
struct SymFreeVar {
  int dim = 0;
  std::vector<int> ids;  // (i <= j) col-major
  int id_of(int i, int j) const;
};
SymFreeVar add_sym_free(Problem& p, int dim);

/// Epigraph of Tr(E^{-1}): free W with [W, I; I, E] >= 0; at optimality
/// W = E^{-1} when E > 0. `e_entries[i][j]` supplies the affine E map.
struct TraceInverseEpigraph {
  SymFreeVar w;
  LinExpr trace_w;
};
TraceInverseEpigraph add_trace_inverse_epigraph(
    Problem& p, const std::vector<std::vector<LinExpr>>& e_entries);

}  // namespace stars::conic
