#pragma once
// Spectral solver and residual machinery for the dissipation-power Navier-
// Stokes equations with a Reynolds stress source: local smooth solutions,
// stress recovery, initial glued data, time rescaling, mollified pairs.

#include <functional>
#include <optional>

#include "wildflow/calculus.hpp"
#include "wildflow/cutoffs.hpp"
#include "wildflow/field.hpp"

namespace wildflow {

using Forcing = std::function<Field(double)>;

// Single-step pseudo-spectral integrator: classical RK4 with the exact
// integrating factor exp(-nu (2 pi |k|)^{2 gamma} t) for the dissipation and
// Leray projection at every stage. State stays band-limited to the 2/3 rule.
class FnsSolver {
 public:
  FnsSolver(const Field& u0, double nu, double gamma, Forcing forcing = nullptr);

  void step(double dt);  // throws on CFL violation or blow-up (10x growth)
  Field velocity() const;
  Field rhs() const;  // exact dv/dt at the current state
  double time() const { return t_; }
  double sup0() const { return sup0_; }
  double nu() const { return nu_; }
  double gamma() const { return gamma_; }

 private:
  Grid grid_;
  double nu_, gamma_, t_;
  double sup0_;
  double guard_ref_ = 0.0;
  double f_scale_ = 0.0;
  Forcing forcing_;
  std::vector<cplx_vec> modes_;  // solenoidal velocity modes
  // cached integrating factors for the current dt
  double cached_dt_ = -1.0;
  std::vector<double> e_half_, e_full_;

  std::vector<cplx_vec> nonlinear(const std::vector<cplx_vec>& m, double t) const;
  void refresh_factors(double dt);
};

struct Trajectory {
  Grid grid;
  double nu = 1.0, gamma = 0.5;
  double t0 = 0.0, dt = 0.0;
  std::vector<Field> states;  // saved every dt from t0

  int size() const { return static_cast<int>(states.size()); }
  double t_end() const { return t0 + dt * (size() - 1); }
  // cubic Hermite evaluation between saved states, slopes from the equation
  Field at_time(double t) const;
  Field rhs_of(const Field& v) const;  // dv/dt via the equation
};

// Integrates the equations from u0 over [t0, t0+horizon], saving every
// save_every steps. Enforces horizon <= horizon_c / ||u0||_{1+alpha} when
// enforce_horizon is set (the local-existence window; alpha fixed at 0.4).
Trajectory solve_fns(const Field& u0, double nu, double gamma, double t0,
                     double horizon, double dt, int save_every = 1,
                     Forcing forcing = nullptr, double horizon_c = 0.1,
                     bool enforce_horizon = true);

// Momentum residual of a saved trajectory: r = dv/dt + nu (-Delta)^gamma v
// + div(v (x) v) + grad p with the Leray pressure, time derivative by
// 4th-order finite differences; R = antidivergence(r). Throws when fewer
// than 5 states are available.
struct StressTrajectory {
  std::vector<Field> R;
  std::vector<double> residual_sup;  // ||div R - r||_0 per time (identity check)
};
StressTrajectory residual_stress(const Trajectory& tr,
                                 const Forcing* forcing = nullptr);

struct FnsrPair {
  Field v;
  Field R;
  double t = 0.0;
};

// fNSR residual of a pair at one time: needs dv/dt supplied (exact or FD)
double fnsr_residual_sup(const Field& v, const Field& dvdt, const Field& R,
                         double nu, double gamma);

// Glued initial data from two exact solutions: v0 = eta V1 + (1-eta) V2,
// R0 = eta' RV(V1 - V2) - eta(1-eta)(V1-V2) (x) (V1-V2). The cutoff must
// ramp inside [T/3, 2T/5]; the mean of V1 - V2 must vanish at all times.
struct InitialData {
  Trajectory V1, V2;
  SmoothRamp ramp;  // eta = 1 - ramp.value
  double eta(double t) const { return 1.0 - ramp.value(t); }
  double eta_deriv(double t) const { return -ramp.deriv(t); }
  FnsrPair pair_at(double t) const;
  Field v_at(double t) const;
  Field dvdt_at(double t) const;   // exact through the equations and eta'
  Field dRdt_at(double t) const;   // exact time derivative of R0
};

InitialData make_initial_data(Trajectory V1, Trajectory V2, double ramp_lo,
                              double ramp_hi, double T);

// v^zeta(t,x) = zeta v(zeta t, x), R^zeta = zeta^2 R(zeta t, x)
FnsrPair time_rescale(const FnsrPair& p, double zeta);

// Mollified pair: v_ell = psi_ell * v, R_ell = psi_ell*R + v_ell (x) v_ell
// - psi_ell*(v (x) v)
struct MollifiedPair {
  Field v;
  Field R;
  double commutator_sup = 0.0;  // ||v_ell (x) v_ell - psi*(v (x) v)||_0
};
MollifiedPair mollify_pair(const Field& v, const Field& R, double ell);

}  // namespace wildflow
