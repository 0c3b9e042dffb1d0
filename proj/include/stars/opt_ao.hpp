#pragma once

#include "stars/conic.hpp"
#include "stars/fim.hpp"
#include "stars/rate.hpp"

namespace stars {

/// QoS cannot be met even at full uplink power.
struct QosInfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScaSchedule {
  double rho0 = 1e-2;       // initial penalty factor rho_1
  double shrink = 3.0;      // c_1 > 1, applied per round
  double rho_floor = 1e-8;
  double rank_tol = 1e-6;   // eps_1 exit: Tr(U) - sigma_max(U)
  int max_rounds = 25;
  int stagnation_rounds = 10;
};

struct AoOptions {
  double crb_tol = 1e-5;  // eps_2 on the CRB trace between outer iterations
  int max_iter = 30;
  ScaSchedule sca;
  conic::SolveOptions solver;
};

/// Matched uplink combiner (h^H Theta A G_r)^H / ||.||.
VectorXcd optimal_combiner(const ChannelSet& channels, const Partition& partition,
                           const VectorXcd& u, int user);

/// Uniform feasible starting point: isotropic probing at the BS budget and
/// full uplink power.
ProbingDesign isotropic_design(const SystemConfig& config);

/// U0 = identity restricted to the PE block (lifted-matrix form).
MatrixXcd initial_surface_lifted(int n, int n_pe);

/// CRB trace re-evaluated exactly at a full iterate.
CrbValue crb_at(Phase phase, const SystemConfig& config, const ChannelSet& channels,
                const Partition& partition, const ProbingDesign& design,
                const MatrixXcd& u_lifted);

struct WaveformSolution {
  MatrixXcd r_probe;      // M_t x M_t, PSD
  VectorXd phase_power;   // per phase user, watts
  double crb_trace = 0.0;
  conic::SolveReport report;
};

/// Problem (20): waveform and uplink power at a fixed surface, ergodic QoS.
WaveformSolution solve_waveform_power(Phase phase, const SystemConfig& config,
                                      const ChannelSet& channels,
                                      const Partition& partition,
                                      const MatrixXcd& u_lifted,
                                      const conic::SolveOptions& solver = {});

struct SurfaceSolution {
  VectorXcd u;            // extracted rank-one coefficients
  MatrixXcd u_lifted;     // last relaxed iterate
  double crb_trace = 0.0; // exact, at the extracted u
  double rank_residual = 0.0;
  int rounds = 0;
  bool stagnated = false;
};

/// Problem (23) + the rank-one SCA loop at fixed waveform/power.
SurfaceSolution solve_surface_sca(Phase phase, const SystemConfig& config,
                                  const ChannelSet& channels,
                                  const Partition& partition,
                                  const ProbingDesign& design,
                                  const ScaSchedule& sched = {},
                                  const conic::SolveOptions& solver = {});

struct AoIterate {
  double crb_after_waveform = 0.0;  // g(R^l, P^l, U^{l-1})
  double crb_after_surface = 0.0;   // g(R^l, P^l, U^l)
};

struct AoResult {
  std::vector<AoIterate> trajectory;
  ProbingDesign design;
  VectorXcd u;
  double crb_trace = 0.0;
  double root_crb_deg = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Algorithm "alternate waveform and surface until the CRB trace settles".
AoResult run_ao(Phase phase, const SystemConfig& config, const ChannelSet& channels,
                const Partition& partition, const AoOptions& options = {});

/// Closed-form phase alignment for a single receive antenna: u_n =
/// exp(j(angle(h_hat[n]) - angle(g_hat[n]))), unit amplitude.
VectorXcd closed_form_coefficients_mr1(const ChannelSet& channels, int user);

struct MaxSensorResult {
  std::array<int, 2> per_phase{0, 0};
  int overall = 0;
  std::array<double, 2> n1_min_real{0.0, 0.0};
};

/// Closed-form maximum sensor deployment for M_r = 1 (two-user setup); the
/// kappa = 0 limit uses the linear root of the quadratic.
MaxSensorResult max_sensor_count(const SystemConfig& config);

}  // namespace stars
