#pragma once
// Shared surrogate fixture for the gluing and perturbation tests: one bad
// interval, a short run of local solutions, and piece accessors.

#include <map>
#include <memory>

#include "wildflow/glue.hpp"

namespace wftest {

using namespace wildflow;

struct SurrogateFixture {
  Grid g;
  ExponentSet e;
  Schedule sched;
  IntervalBook book0;
  TimePartition part;
  std::unique_ptr<InitialData> init;
  double ell = 0.0;
  std::map<long, Trajectory> locals;

  PieceFn value_fn() const {
    return [this](long piece, double t) {
      if (piece < 0) return init->v_at(t);
      return locals.at(piece).at_time(t);
    };
  }
  PieceFn rhs_fn() const {
    return [this](long piece, double t) {
      if (piece < 0) return init->dvdt_at(t);
      const Trajectory& tr = locals.at(piece);
      return tr.rhs_of(tr.at_time(t));
    };
  }
  std::function<Field(double)> vell_fn() const {
    return [this](double t) {
      Field v = mollify(init->v_at(t), ell);
      v.t = t;
      return v;
    };
  }
};

// n: grid size; amp: velocity scale of the two background solutions
inline SurrogateFixture make_surrogate(int n, double amp = 0.02,
                                       unsigned long seed = 1000,
                                       double local_dt = 1e-3,
                                       int local_save = 5) {
  SurrogateFixture fx;
  fx.g = Grid{3, n};
  fx.e.beta = 0.2;
  fx.e.gamma = 0.3;
  fx.e.b = 1.01;
  fx.e.sigma = 5.91e-4;
  fx.e.alpha = 1e-4;
  fx.e.T = 1.0;
  fx.e.nu = 1e-3;
  fx.e.set_a(16.0);

  // two-level surrogate schedule: tau_0 = T/30 (divisibility m = 2) so the
  // eta ramp fits inside the saturated-bad region; the second row only
  // supplies the next-level schedule quantities
  std::vector<long> lambda = {32, 256};
  std::vector<double> delta = {std::pow(32.0, -0.4), std::pow(256.0, -0.4)};
  std::vector<double> eps = {0.25, 0.2};
  std::vector<double> ell = {4.0 / n, 2.0 / n};
  std::vector<double> tau_raw = {0.0624, 0.0118};
  fx.sched = surrogate_schedule(fx.e, lambda, delta, eps, tau_raw, ell);
  fx.ell = ell[0];

  fx.book0 = initial_bad_set(fx.sched);
  fx.part = build_partition(fx.book0, fx.sched, 0);

  Field a0 = random_band_field(fx.g, Rank::vector, 2, seed, true);
  Field b0 = random_band_field(fx.g, Rank::vector, 2, seed + 1, true);
  for (auto& c : a0.comp)
    for (auto& v : c) v *= amp;
  for (auto& c : b0.comp)
    for (auto& v : c) v *= amp;
  Trajectory V1 = solve_fns(a0, fx.e.nu, fx.e.gamma, 0.0, 1.0, 2e-3, 10,
                            nullptr, 0.1, false);
  Trajectory V2 = solve_fns(b0, fx.e.nu, fx.e.gamma, 0.0, 1.0, 2e-3, 10,
                            nullptr, 0.1, false);
  fx.init = std::make_unique<InitialData>(
      make_initial_data(std::move(V1), std::move(V2), 0.385, 0.397, fx.e.T));

  for (long j : fx.part.jstar)
    fx.locals.emplace(j, solve_local(*fx.init, fx.part, j, fx.ell, local_dt,
                                     local_save, 0.25));
  return fx;
}

}  // namespace wftest
