#pragma once
// Convex-integration perturbation step: backward transport maps and forward
// tracer flows, the pulled-back stress, Mikado amplitudes and correctors,
// and the four error terms of the new Reynolds stress.

#include <memory>

#include "wildflow/glue.hpp"
#include "wildflow/mikado.hpp"

namespace wildflow {

// Co-integrated pair of exact-solution pieces covering one perturbation
// window, with cubic-Hermite access between solver knots.
class PieceStream {
 public:
  PieceStream(const PieceFn& value, const PieceFn& rhs, long prev_id, long next_id,
              double t_start, double piece_dt, double nu, double gamma);

  void advance_to(double t);  // monotone in |t - t_start| direction of travel
  Field piece(long id, double t) const;
  Field piece_rhs(long id, double t) const;
  long prev_id() const { return prev_id_; }
  long next_id() const { return next_id_; }

 private:
  struct Knot {
    double t;
    Field v, f;  // state and equation right-hand side
  };
  struct Lane {
    long id;
    std::unique_ptr<FnsSolver> solver;
    std::vector<Knot> knots;  // recent window, pruned as time advances
  };
  Lane lanes_[2];
  long prev_id_ = -1, next_id_ = -1;
  double dir_ = 0.0;
  double piece_dt_;
  const Lane& lane_of(long id) const;
  Field eval(const Lane& lane, double t, bool want_rhs) const;
};

struct FlowSample {
  double t = 0.0;
  Field disp;      // displacement: Phi(t,x) = x + disp(x) (componentwise, periodic)
  Field grad_phi;  // tensor2, (grad Phi)_{ac} = d_a Phi^c
};

struct FlowPair {
  long window = -1;
  double t_center = 0.0, t_lo = 0.0, t_hi = 0.0;
  std::vector<FlowSample> samples;          // at the requested checkpoint times
  double inverse_consistency = 0.0;         // sup |Phi(t, X(t,x)) - x|
  double jacobian_dev = 0.0;                // sup |det grad Phi - 1|
  double grad_phi_dev = 0.0;                // sup |grad Phi - Id|
  int index_of(double t) const;
};

struct SweepConfig {
  double nu = 1e-3, gamma = 0.3;  // equation parameters of the pieces
  double piece_dt = 2e-3;       // solver step for the window pieces
  int transport_steps = 24;     // RK4 steps per unit window span
  int tracers = 64;             // particles for the inverse-consistency check
  bool strict_resolution = true;  // enforce n >= 8 lambda K
  bool fd_oracle = true;          // run the finite-difference residual oracle
  double holder_alpha = 0.4;
};

// One perturbation window: flows, amplitudes, perturbation, stress terms.
struct StressSample {
  double t = 0.0;
  double rho = 0.0, drho = 0.0;
  double rbar_sup = 0.0;
  double w_sup = 0.0, wo_sup = 0.0, wc_sup = 0.0;
  double div_w_rel = 0.0;       // ||div w||_0 / ||w||_1
  double wc_over_wo = 0.0;
  double eig_lo = 0.0, eig_hi = 0.0;  // spectrum range of the Lagrangian stress
  double sym_residual = 0.0;
  double o3_residual = 0.0;     // interior-product term, should vanish
  double k0_cancel = 0.0;       // oscillation zero-mode cancellation residual
  double r_osc = 0.0, r_trans = 0.0, r_nash = 0.0, r_dis = 0.0, r_total = 0.0;
  double fnsr_residual = -1.0;  // FD oracle; -1 when not run
  double vnew_minus_vbar_sup = 0.0;
  double vnew_minus_vbar_grad_sup = 0.0;
  Field vnew_field;             // vbar + w at this time
  Field rtot_field;             // assembled R_{q+1}
  Field vbar_field;
};

struct WindowReport {
  long window = -1;
  FlowPair flow;
  std::vector<StressSample> samples;
  double transported_phase_residual = 0.0;  // == flow.inverse_consistency
  double amplitude_decay_c = 0.0;           // sup ||b_k|| |k|^{2d}
};

// Runs the full perturbation machinery across window i of the partition,
// sampling at the given times (all inside [t_i - eps_tau, t_i + 2 eps_tau]).
// lambda_next must be a positive integer (phase periodicity); throws when the
// grid cannot hold 8 lambda K points per axis under strict resolution.
WindowReport sweep_window(const TimePartition& part, const PieceFn& value,
                          const PieceFn& rhs, const Grid& grid,
                          const MikadoTable& table, long window,
                          double delta_next, long lambda_next,
                          const std::vector<double>& sample_times,
                          const SweepConfig& cfg);

// Pulled-back stress field grad Phi (Id - Rbar/delta) grad Phi^T with its
// pointwise symmetry/spectrum diagnostics. Throws when a point leaves the
// admissible matrix ball.
struct LagrangianStress {
  Field value;  // tensor2
  double sym_residual = 0.0;
  double eig_lo = 1.0, eig_hi = 1.0;
};
LagrangianStress lagrangian_stress(const Field& rbar, const Field& grad_phi,
                                   double delta_next);

// rho_i cutoff: 1 on [t_i, t_i + eps_tau], supported in
// [t_i - eps_tau, t_i + 2 eps_tau], ramps of width eps_tau on both sides
struct WindowCutoff {
  double t_i = 0.0, eps_tau = 0.0;
  double value(double t) const;
  double deriv(double t) const;
};

struct IterationConfig {
  SweepConfig sweep;
  long lambda_next = 2;
  double delta_next = 0.0;        // <= 0: choose 2.5 max ||Rbar||_0
  int samples_per_window = 5;
  double ell = 0.0;               // mollification length (0: schedule value)
};

struct IterationReport {
  double delta_next = 0.0;
  double r_next_sup = 0.0;        // max ||R_{q+1}||_0 over window samples
  double r_cur_sup = 0.0;         // max ||R_q||_0 over the ramp support
  double stress_ratio = 0.0;
  double deviation_sup = 0.0;     // ||v_{q+1} - v_q||_0 over samples
  double deviation_c1 = 0.0;      // lambda^{-1} ||v_{q+1} - v_q||_1
  double measured_m = 0.0;        // the (17)-type constant
  double good_set_deviation = 0.0;  // max |v_{q+1} - v_q| over good times
  bool books_nested = false;
  double measure_ratio = 0.0;     // |B_{q+1}| / (eps_q |B_q|)
  std::vector<WindowReport> windows;
  IntervalBook book_next;
};

// One full iteration step at surrogate scale: mollify, glue, perturb every
// window, and account the bad set. The inductive hypotheses at level q are
// checked numerically before the step runs.
IterationReport iteration_step(const InitialData& init, const Schedule& s,
                               const IntervalBook& book, int q,
                               const MikadoTable& table, const Grid& grid,
                               const IterationConfig& cfg);

}  // namespace wildflow
