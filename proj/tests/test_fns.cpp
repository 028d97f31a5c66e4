#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "wildflow/fns.hpp"

using namespace wildflow;

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

Field sample_vec(const Grid& g, const std::function<void(const double*, double*)>& fn) {
  Field f = Field::zeros(g, Rank::vector);
  std::vector<int> idx(g.d, 0);
  double x[4], v[4];
  for (std::size_t flat = 0; flat < g.points(); ++flat) {
    for (int ax = 0; ax < g.d; ++ax) x[ax] = static_cast<double>(idx[ax]) / g.n;
    fn(x, v);
    for (int c = 0; c < g.d; ++c) f.comp[c][flat] = v[c];
    for (int ax = g.d - 1; ax >= 0; --ax) {
      if (++idx[ax] < g.n) break;
      idx[ax] = 0;
    }
  }
  return f;
}

double field_gap(const Field& a, const Field& b) {
  double m = 0.0;
  for (int c = 0; c < a.ncomp(); ++c)
    for (std::size_t i = 0; i < a.comp[c].size(); ++i)
      m = std::max(m, std::abs(a.comp[c][i] - b.comp[c][i]));
  return m;
}

}  // namespace

TEST_CASE("solver: zero initial data stays zero") {
  Grid g{3, 16};
  Field u0 = Field::zeros(g, Rank::vector);
  Trajectory tr = solve_fns(u0, 1e-3, 0.3, 0.0, 0.01, 1e-3, 1, nullptr, 0.1, false);
  for (const auto& s : tr.states) CHECK(s.max_abs() < 1e-15);
}

TEST_CASE("solver: shear mode decays with the closed-form rate") {
  Grid g{3, 32};
  double A = 0.05, nu = 1.0, gamma = 0.35;
  Field u0 = sample_vec(g, [&](const double* x, double* v) {
    v[0] = A * std::sin(kTwoPi * x[1]);
    v[1] = v[2] = 0.0;
  });
  double T = 0.02, dt = 5e-4;
  Trajectory tr = solve_fns(u0, nu, gamma, 0.0, T, dt, 4, nullptr, 0.5, false);
  double rate = nu * std::pow(4.0 * std::numbers::pi * std::numbers::pi, gamma);
  double err = 0.0;
  for (const auto& s : tr.states) {
    Field expect = sample_vec(g, [&](const double* x, double* v) {
      v[0] = A * std::exp(-rate * s.t) * std::sin(kTwoPi * x[1]);
      v[1] = v[2] = 0.0;
    });
    err = std::max(err, field_gap(s, expect));
  }
  CHECK(err < 1e-8);
}

TEST_CASE("solver: random small data satisfies the residual oracle") {
  Grid g{3, 32};
  Field u0 = random_band_field(g, Rank::vector, 5, 2026, true);
  for (auto& c : u0.comp)
    for (auto& v : c) v *= 0.05;
  Trajectory tr = solve_fns(u0, 1e-2, 0.4, 0.0, 0.02, 5e-4, 4, nullptr, 0.5, false);
  StressTrajectory st = residual_stress(tr);
  double worst_R = 0.0;
  for (std::size_t i = 0; i < st.R.size(); ++i) {
    worst_R = std::max(worst_R, st.R[i].max_abs());
    CHECK(st.residual_sup[i] < 1e-10);  // div R reproduces the residual
  }
  CHECK(worst_R < 1e-6);  // the trajectory solves the equations
}

TEST_CASE("solver: horizon precondition and blow-up guard") {
  Grid g{3, 16};
  Field u0 = random_band_field(g, Rank::vector, 3, 7, true);
  // horizon far beyond c/||u0||_{1+alpha} is rejected
  CHECK_THROWS_AS(solve_fns(u0, 1e-3, 0.3, 0.0, 1e6, 1e-3), std::invalid_argument);
  // CFL: huge dt against an O(1) field
  CHECK_THROWS_AS(solve_fns(u0, 1e-3, 0.3, 0.0, 1.0, 0.5, 1, nullptr, 0.1, false),
                  std::runtime_error);
}

TEST_CASE("solver: forced trajectory recovers the forcing in the stress") {
  Grid g{3, 32};
  Field f = random_band_field(g, Rank::vector, 3, 55, true);
  for (auto& c : f.comp)
    for (auto& v : c) v *= 0.01;
  Forcing forcing = [f](double) { return f; };
  Field u0 = Field::zeros(g, Rank::vector);
  Trajectory tr = solve_fns(u0, 1e-2, 0.4, 0.0, 0.02, 5e-4, 4, forcing, 0.5, false);
  // residual computed without the forcing: div R = f - mean f
  StressTrajectory st = residual_stress(tr);
  Field divR = derive(st.R[st.R.size() / 2], DeriveOp::div);
  double err = 0.0;
  for (int c = 0; c < 3; ++c) {
    double mean = f.mean(c);
    for (std::size_t p = 0; p < divR.comp[c].size(); ++p)
      err = std::max(err, std::abs(divR.comp[c][p] - (f.comp[c][p] - mean)));
  }
  CHECK(err < 1e-6);
}

TEST_CASE("solver: time-convergence order at least 3.5") {
  Grid g{3, 16};
  Field u0 = random_band_field(g, Rank::vector, 3, 11, true);
  for (auto& c : u0.comp)
    for (auto& v : c) v *= 0.3;
  double T = 0.04;
  auto run = [&](double dt) {
    FnsSolver s(u0, 0.05, 0.4);
    long n = std::lround(T / dt);
    for (long i = 0; i < n; ++i) s.step(dt);
    return s.velocity();
  };
  Field a = run(T / 8), b = run(T / 16), c = run(T / 32);
  double e1 = field_gap(a, b), e2 = field_gap(b, c);
  double order = std::log2(e1 / e2);
  CHECK(order >= 3.5);
}

TEST_CASE("solver: energy never increases without forcing") {
  Grid g{3, 32};
  Field u0 = random_band_field(g, Rank::vector, 6, 13, true);
  for (auto& c : u0.comp)
    for (auto& v : c) v *= 0.2;
  Trajectory tr = solve_fns(u0, 0.05, 0.45, 0.0, 0.05, 1e-3, 5, nullptr, 0.5, false);
  for (int i = 1; i < tr.size(); ++i)
    CHECK(tr.states[i].l2() <= tr.states[i - 1].l2() * (1.0 + 1e-12));
}

TEST_CASE("rescale: identity at zeta = 1 and exact sup scaling") {
  Grid g{3, 16};
  FnsrPair p;
  p.v = random_band_field(g, Rank::vector, 4, 17, true);
  p.R = random_band_field(g, Rank::tensor2, 4, 18);
  p.t = 0.25;
  FnsrPair same = time_rescale(p, 1.0);
  CHECK(field_gap(same.v, p.v) == 0.0);
  CHECK(same.t == p.t);

  double zeta = 0.37;
  FnsrPair r = time_rescale(p, zeta);
  CHECK(r.v.max_abs() == doctest::Approx(zeta * p.v.max_abs()).epsilon(1e-15));
  CHECK(r.R.max_abs() == doctest::Approx(zeta * zeta * p.R.max_abs()).epsilon(1e-15));

  // group action: zeta1 then zeta2 equals zeta1 zeta2
  FnsrPair two = time_rescale(time_rescale(p, 0.5), 0.6);
  FnsrPair one = time_rescale(p, 0.3);
  CHECK(field_gap(two.v, one.v) < 1e-15);
  CHECK(field_gap(two.R, one.R) < 1e-15);
  CHECK(two.t == doctest::Approx(one.t).epsilon(1e-14));
}

TEST_CASE("rescale: the rescaled pair solves the rescaled equations") {
  Grid g{3, 32};
  double nu = 1.0, gamma = 0.3, T = 1.0;
  Field a0 = random_band_field(g, Rank::vector, 2, 21, true);
  Field b0 = random_band_field(g, Rank::vector, 2, 22, true);
  for (auto& c : a0.comp)
    for (auto& v : c) v *= 0.04;
  for (auto& c : b0.comp)
    for (auto& v : c) v *= 0.04;
  Trajectory V1 = solve_fns(a0, nu, gamma, 0.0, 0.45, 2e-3, 25, nullptr, 0.1, false);
  Trajectory V2 = solve_fns(b0, nu, gamma, 0.0, 0.45, 2e-3, 25, nullptr, 0.1, false);
  InitialData init = make_initial_data(std::move(V1), std::move(V2), 0.35, 0.395, T);

  double t = 0.37;  // inside the ramp, R nonzero
  FnsrPair p = init.pair_at(t);
  Field dvdt = init.dvdt_at(t);
  double base = fnsr_residual_sup(p.v, dvdt, p.R, nu, gamma);
  CHECK(base < 1e-6);

  double zeta = 0.5;
  FnsrPair rp = time_rescale(p, zeta);
  Field dvdt_r = dvdt;  // dv^zeta/dt (t/zeta) = zeta^2 dv/dt (t)
  for (auto& c : dvdt_r.comp)
    for (auto& v : c) v *= zeta * zeta;
  double resc = fnsr_residual_sup(rp.v, dvdt_r, rp.R, zeta * nu, gamma);
  CHECK(resc < zeta * zeta * base + 1e-9);
}

TEST_CASE("initial pair: identical solutions give v0 = V1 and zero stress") {
  Grid g{3, 16};
  double T = 1.0;
  Field a0 = random_band_field(g, Rank::vector, 2, 31, true);
  for (auto& c : a0.comp)
    for (auto& v : c) v *= 0.05;
  Trajectory V1 = solve_fns(a0, 1e-2, 0.3, 0.0, 0.45, 5e-3, 10, nullptr, 0.1, false);
  Trajectory V2 = V1;
  InitialData init = make_initial_data(std::move(V1), std::move(V2), 0.35, 0.39, T);
  FnsrPair p = init.pair_at(0.37);
  CHECK(p.R.max_abs() < 1e-14);
}

TEST_CASE("initial pair: cutoff saturation before the ramp") {
  Grid g{3, 16};
  double T = 1.0;
  Field a0 = random_band_field(g, Rank::vector, 2, 41, true);
  Field b0 = random_band_field(g, Rank::vector, 2, 42, true);
  for (auto& c : a0.comp)
    for (auto& v : c) v *= 0.05;
  for (auto& c : b0.comp)
    for (auto& v : c) v *= 0.05;
  Trajectory V1 = solve_fns(a0, 1e-2, 0.3, 0.0, 0.45, 5e-3, 10, nullptr, 0.1, false);
  Trajectory V2 = solve_fns(b0, 1e-2, 0.3, 0.0, 0.45, 5e-3, 10, nullptr, 0.1, false);
  InitialData init = make_initial_data(std::move(V1), std::move(V2), 0.35, 0.39, T);
  double t = 0.2;  // eta = 1 here
  FnsrPair p = init.pair_at(t);
  CHECK(p.R.max_abs() == 0.0);
  CHECK(field_gap(p.v, init.V1.at_time(t)) == 0.0);
}

TEST_CASE("initial pair: nonzero mean difference is rejected") {
  Grid g{3, 16};
  Field a0 = random_band_field(g, Rank::vector, 2, 51, true);
  Field b0 = a0;
  for (auto& v : b0.comp[0]) v += 0.1;  // constant drift in one component
  for (auto& c : a0.comp)
    for (auto& v : c) v *= 0.05;
  for (auto& c : b0.comp)
    for (auto& v : c) v *= 0.05;
  Trajectory V1 = solve_fns(a0, 1e-2, 0.3, 0.0, 0.45, 5e-3, 10, nullptr, 0.1, false);
  Trajectory V2 = solve_fns(b0, 1e-2, 0.3, 0.0, 0.45, 5e-3, 10, nullptr, 0.1, false);
  CHECK_THROWS_AS(make_initial_data(std::move(V1), std::move(V2), 0.35, 0.39, 1.0),
                  std::invalid_argument);
}

TEST_CASE("initial pair: generic pair satisfies the fNSR residual oracle") {
  Grid g{3, 32};
  double nu = 1e-2, gamma = 0.3, T = 1.0;
  Field a0 = random_band_field(g, Rank::vector, 2, 61, true);
  Field b0 = random_band_field(g, Rank::vector, 2, 62, true);
  for (auto& c : a0.comp)
    for (auto& v : c) v *= 0.05;
  for (auto& c : b0.comp)
    for (auto& v : c) v *= 0.05;
  Trajectory V1 = solve_fns(a0, nu, gamma, 0.0, 0.45, 2e-3, 5, nullptr, 0.1, false);
  Trajectory V2 = solve_fns(b0, nu, gamma, 0.0, 0.45, 2e-3, 5, nullptr, 0.1, false);
  InitialData init = make_initial_data(std::move(V1), std::move(V2), 0.35, 0.395, T);
  for (double t : {0.1, 0.355, 0.37, 0.39, 0.42}) {
    FnsrPair p = init.pair_at(t);
    double resid = fnsr_residual_sup(p.v, init.dvdt_at(t), p.R, nu, gamma);
    CHECK(resid < 1e-6);
  }
}

TEST_CASE("mollified pair: solves the equations and tracks the commutator") {
  Grid g{3, 32};
  double nu = 1e-2, gamma = 0.3, T = 1.0;
  // band-limit <= n/6 so every product below stays exactly representable
  Field a0 = random_band_field(g, Rank::vector, 2, 71, true);
  Field b0 = random_band_field(g, Rank::vector, 2, 72, true);
  for (auto& c : a0.comp)
    for (auto& v : c) v *= 0.05;
  for (auto& c : b0.comp)
    for (auto& v : c) v *= 0.05;
  Trajectory V1 = solve_fns(a0, nu, gamma, 0.0, 0.45, 2e-3, 5, nullptr, 0.1, false);
  Trajectory V2 = solve_fns(b0, nu, gamma, 0.0, 0.45, 2e-3, 5, nullptr, 0.1, false);
  InitialData init = make_initial_data(std::move(V1), std::move(V2), 0.35, 0.395, T);
  double t = 0.37;
  FnsrPair p = init.pair_at(t);

  double ell = 2.0 / g.n;
  MollifiedPair mp = mollify_pair(p.v, p.R, ell);
  // the mollified pair solves the system: d/dt (psi * v) = psi * dv/dt
  Field dvdt_m = mollify(init.dvdt_at(t), ell);
  double resid = fnsr_residual_sup(mp.v, dvdt_m, mp.R, nu, gamma);
  CHECK(resid < 1e-8);

  // commutator shrinks quadratically with ell on band-limited fields
  MollifiedPair coarse = mollify_pair(p.v, p.R, 4.0 * ell);
  CHECK(mp.commutator_sup < coarse.commutator_sup);
}

TEST_CASE("mollified pair: single-mode commutator matches the closed form") {
  Grid g{3, 32};
  double A = 0.3, ell = 0.11;
  const int kmode = 2;
  Field v = Field::zeros(g, Rank::vector);
  std::vector<int> idx(3, 0);
  for (std::size_t flat = 0; flat < g.points(); ++flat) {
    double x1 = static_cast<double>(idx[1]) / g.n;
    v.comp[0][flat] = A * std::cos(kTwoPi * kmode * x1);
    for (int ax = 2; ax >= 0; --ax) {
      if (++idx[ax] < g.n) break;
      idx[ax] = 0;
    }
  }
  Field R = Field::zeros(g, Rank::tensor2);
  MollifiedPair mp = mollify_pair(v, R, ell);
  double p1 = mollifier_profile(ell * kmode), p2 = mollifier_profile(2.0 * ell * kmode);
  // commutator_11 = A^2/2 [ (p1^2 - 1) + (p1^2 - p2) cos(2 k x) ]
  double expect_sup = 0.5 * A * A *
                      (std::abs(p1 * p1 - 1.0) + std::abs(p1 * p1 - p2));
  CHECK(mp.commutator_sup == doctest::Approx(expect_sup).epsilon(1e-10));
}

TEST_CASE("solver: holder persistence for N in {1,2} on a short trajectory") {
  Grid g{3, 32};
  Field u0 = random_band_field(g, Rank::vector, 4, 81, true);
  for (auto& c : u0.comp)
    for (auto& v : c) v *= 0.1;
  Trajectory tr = solve_fns(u0, 1e-2, 0.35, 0.0, 0.03, 1e-3, 10, nullptr, 0.5, false);
  for (int N : {1, 2}) {
    double n0 = holder_norm(tr.states.front(), N, 0.4).value;
    for (const auto& s : tr.states) {
      double nt = holder_norm(s, N, 0.4).value;
      CHECK(nt <= 2.0 * n0);  // uniform constant, no inflation
    }
  }
}
