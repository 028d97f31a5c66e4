#pragma once
// Orchestration shared by the command-line tool and the acceptance suite:
// surrogate-run construction, the operator identity suite, and the Mikado
// property suite.

#include <memory>

#include "wildflow/config.hpp"
#include "wildflow/perturb.hpp"

namespace wildflow {

struct SurrogateRun {
  Grid grid;
  ExponentSet e;
  Schedule sched;
  IntervalBook book0;
  std::shared_ptr<InitialData> init;
  double ell = 0.0;
};

// Builds the level-0 surrogate state from a config. Recognized keys (all with
// defaults): grid, seed, amp, nu, gamma, T, lambda0, lambda1, delta0, delta1,
// eps0, eps1, tau0, tau1, ell0, ell1, ramp_lo, ramp_hi, v_dt, v_save.
SurrogateRun make_surrogate_run(const Config& cfg);

struct ResidualRow {
  std::string id;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Hodge/antidivergence/Biot-Savart/P1-symmetry identities on random
// band-limited fields.
std::vector<ResidualRow> operators_suite(int n, int d, int nfields,
                                         unsigned long seed);

// Mikado properties: pipe structure, second moments, orthogonality,
// corrector identity.
std::vector<ResidualRow> mikado_suite(int nmatrices, unsigned long seed);

}  // namespace wildflow
