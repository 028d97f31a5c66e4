#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support_surrogate.hpp"
#include "wildflow/perturb.hpp"

using namespace wildflow;
using wftest::SurrogateFixture;

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

const SurrogateFixture& fx() {
  static SurrogateFixture f = wftest::make_surrogate(32);
  return f;
}

const MikadoTable& table3() {
  static MikadoTable t = tabulate_fourier(build_direction_set(3), 4, 8);
  return t;
}

SweepConfig test_cfg() {
  SweepConfig cfg;
  cfg.nu = 1e-3;
  cfg.gamma = 0.3;
  cfg.strict_resolution = false;  // n=32 test grid, spec gate needs 8 lambda K
  cfg.tracers = 27;
  return cfg;
}

}  // namespace

TEST_CASE("flows: zero velocity gives the identity map") {
  const auto& f = fx();
  long i = f.part.jset[1];
  Grid g{3, 16};
  PieceFn zval = [&](long, double t) {
    Field z = Field::zeros(g, Rank::vector, t);
    return z;
  };
  PieceFn zrhs = zval;
  double t_i = f.part.t_of(i), et = f.part.eps_tau;
  WindowReport wr = sweep_window(f.part, zval, zrhs, g, table3(), i, 1.0, 2,
                                 {t_i - 0.5 * et, t_i + 0.5 * et}, test_cfg());
  CHECK(wr.flow.inverse_consistency < 1e-12);
  CHECK(wr.flow.grad_phi_dev < 1e-12);
  CHECK(wr.flow.jacobian_dev < 1e-12);
  for (const auto& fs : wr.flow.samples) CHECK(fs.disp.max_abs() < 1e-12);
}

TEST_CASE("flows: constant velocity translates, Phi(t,x) = x - c (t - t_i)") {
  const auto& f = fx();
  long i = f.part.jset[1];
  Grid g{3, 16};
  const double cvec[3] = {0.3, -0.2, 0.11};
  PieceFn cval = [&](long, double t) {
    Field z = Field::zeros(g, Rank::vector, t);
    for (int c = 0; c < 3; ++c)
      for (auto& v : z.comp[c]) v = cvec[c];
    return z;
  };
  PieceFn crhs = [&](long, double t) { return Field::zeros(g, Rank::vector, t); };
  double t_i = f.part.t_of(i), et = f.part.eps_tau;
  double ts = t_i + 1.5 * et;
  WindowReport wr = sweep_window(f.part, cval, crhs, g, table3(), i, 1.0, 2,
                                 {ts}, test_cfg());
  const auto& fs = wr.flow.samples.front();
  for (int c = 0; c < 3; ++c) {
    double want = -cvec[c] * (ts - t_i);
    for (double v : fs.disp.comp[c]) CHECK(v == doctest::Approx(want).epsilon(1e-8));
  }
  CHECK(wr.flow.inverse_consistency < 1e-9);
}

TEST_CASE("flows: tracer round trip on the surrogate field within 1e-6") {
  const auto& f = fx();
  long i = f.part.jset[1];
  double t_i = f.part.t_of(i), et = f.part.eps_tau;
  WindowReport wr = sweep_window(f.part, f.value_fn(), f.rhs_fn(), f.g, table3(),
                                 i, 1.0, 2, {t_i - et, t_i + 2.0 * et}, test_cfg());
  CHECK(wr.flow.inverse_consistency < 1e-6);
  CHECK(wr.flow.jacobian_dev < 1e-6);
  CHECK(wr.flow.grad_phi_dev < 0.1);  // surrogate analogue of the near-identity bound
}

TEST_CASE("lagrangian stress: identity cases") {
  Grid g{3, 16};
  Field rbar = Field::zeros(g, Rank::tensor2);
  Field gp = Field::zeros(g, Rank::tensor2);
  for (int a = 0; a < 3; ++a)
    for (auto& v : gp.at(a, a)) v = 1.0;
  auto LS = lagrangian_stress(rbar, gp, 0.5);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      double want = a == b ? 1.0 : 0.0;
      for (double v : LS.value.at(a, b)) CHECK(v == doctest::Approx(want).epsilon(1e-14));
    }

  // small symmetric stress with the identity map: Id - R/delta exactly
  Field rb = random_band_field(g, Rank::tensor2, 2, 5);
  for (int a = 0; a < 3; ++a)
    for (int b = a; b < 3; ++b)
      for (std::size_t p = 0; p < rb.comp[0].size(); ++p) {
        double sym = 0.5 * (rb.at(a, b)[p] + rb.at(b, a)[p]) * 0.05;
        rb.at(a, b)[p] = sym;
        rb.at(b, a)[p] = sym;
      }
  double delta = 1.0;
  auto LS2 = lagrangian_stress(rb, gp, delta);
  CHECK(LS2.sym_residual < 1e-12);
  CHECK(LS2.eig_lo > 0.5);
  CHECK(LS2.eig_hi < 1.5);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (std::size_t p = 0; p < rb.comp[0].size(); ++p) {
        double want = (a == b ? 1.0 : 0.0) - rb.at(a, b)[p];
        CHECK(LS2.value.at(a, b)[p] == doctest::Approx(want).epsilon(1e-13));
      }
}

TEST_CASE("lagrangian stress: excursion outside the ball is rejected") {
  Grid g{3, 8};
  Field rbar = Field::zeros(g, Rank::tensor2);
  for (auto& v : rbar.at(0, 0)) v = 1.0;  // R/delta = 2 Id_00: way outside
  Field gp = Field::zeros(g, Rank::tensor2);
  for (int a = 0; a < 3; ++a)
    for (auto& v : gp.at(a, a)) v = 1.0;
  CHECK_THROWS_AS(lagrangian_stress(rbar, gp, 0.5), std::runtime_error);
}

TEST_CASE("frozen coefficients: divergence-free table field and exact moment") {
  const MikadoTable& t = table3();
  Grid g{3, 64};
  long lambda = 2;
  double delta = 0.09;
  // w = sqrt(delta) W_table(Id, lambda x), assembled directly from the table
  std::vector<double> Id(9, 0.0);
  Id[0] = Id[4] = Id[8] = 1.0;
  Field w = Field::zeros(g, Rank::vector);
  std::vector<int> idx(3, 0);
  for (std::size_t flat = 0; flat < g.points(); ++flat) {
    double x[3];
    for (int ax = 0; ax < 3; ++ax) x[ax] = static_cast<double>(idx[ax]) / g.n;
    for (std::size_t m = 0; m < t.modes.size(); ++m) {
      cplx a[3];
      t.a_k(static_cast<int>(m), Id.data(), a);
      double ph = 0.0;
      for (int ax = 0; ax < 3; ++ax)
        ph += kTwoPi * lambda * t.modes[m].k[ax] * x[ax];
      cplx e(std::cos(ph), std::sin(ph));
      for (int c = 0; c < 3; ++c)
        w.comp[c][flat] += std::sqrt(delta) * (a[c] * e).real();
    }
    for (int ax = 2; ax >= 0; --ax) {
      if (++idx[ax] < g.n) break;
      idx[ax] = 0;
    }
  }
  // divergence-free to spectral accuracy
  double w1 = std::max(w.max_abs(), derive(w, DeriveOp::grad).max_abs());
  CHECK(divergence_sup(w) <= 1e-10 * w1);
  // oscillation zero mode: mean(w (x) w) = delta Id within 1e-8
  Field ww = multiply(w, w, ProductPattern::outer);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      double want = a == b ? delta : 0.0;
      CHECK(std::abs(ww.mean(a * 3 + b) - want) < 1e-8);
    }
}

namespace {
double frob_sup(const Field& t) {
  double worst = 0.0;
  for (std::size_t p = 0; p < t.comp[0].size(); ++p) {
    double fr = 0.0;
    for (int c = 0; c < t.ncomp(); ++c) fr += t.comp[c][p] * t.comp[c][p];
    worst = std::max(worst, std::sqrt(fr));
  }
  return worst;
}
double auto_delta(const wftest::SurrogateFixture& f, long i) {
  double rb = 0.0;
  for (double frac : {0.25, 0.5, 0.75}) {
    GluedSample gs = glue_sample(f.part, f.part.t_of(i) + frac * f.part.eps_tau,
                                 f.value_fn(), f.rhs_fn());
    rb = std::max(rb, frob_sup(gs.rbar));
  }
  return rb > 0.0 ? 2.5 * rb : 1e-6;
}
}  // namespace

TEST_CASE("sweep: structural checks on one surrogate window") {
  const auto& f = fx();
  long i = f.part.jset[1];
  double t_i = f.part.t_of(i), et = f.part.eps_tau;
  std::vector<double> times = {t_i - et, t_i - 0.5 * et, t_i + 0.25 * et,
                               t_i + 0.5 * et, t_i + 1.5 * et, t_i + 2.0 * et};
  WindowReport wr = sweep_window(f.part, f.value_fn(), f.rhs_fn(), f.g, table3(),
                                 i, auto_delta(f, i), 2, times, test_cfg());
  REQUIRE(wr.samples.size() == times.size());

  for (const auto& ss : wr.samples) {
    // support: w vanishes where rho does (window edges)
    if (std::abs(ss.t - (t_i - et)) < 1e-12 || std::abs(ss.t - (t_i + 2 * et)) < 1e-12) {
      CHECK(ss.rho == 0.0);
      CHECK(ss.w_sup == 0.0);
      continue;
    }
    CHECK(ss.w_sup > 0.0);
    CHECK(ss.div_w_rel < 1e-8);
    CHECK(ss.sym_residual < 1e-12);
    CHECK(ss.eig_lo > 0.5);
    CHECK(ss.eig_hi < 1.5);
    CHECK(ss.o3_residual < 1e-10);
  }
  // rho saturates on the overlap
  for (const auto& ss : wr.samples)
    if (ss.t > t_i - 1e-12 && ss.t < t_i + et + 1e-12) CHECK(ss.rho == 1.0);
  CHECK(wr.transported_phase_residual < 1e-6);
  CHECK(wr.amplitude_decay_c > 0.0);
}

TEST_CASE("sweep: corrector stays below the paper-scale bound") {
  const auto& f = fx();
  long i = f.part.jset[1];
  double t_i = f.part.t_of(i), et = f.part.eps_tau;
  WindowReport wr = sweep_window(f.part, f.value_fn(), f.rhs_fn(), f.g, table3(),
                                 i, auto_delta(f, i), 2, {t_i + 0.5 * et}, test_cfg());
  const auto& ss = wr.samples.front();
  // ||w_c|| / ||w_o|| <= C / (lambda ell) with C <= 10 at surrogate scale
  double bound = 10.0 / (2.0 * f.ell);
  CHECK(ss.wc_over_wo > 0.0);
  CHECK(ss.wc_over_wo < bound);
}

TEST_CASE("sweep: rejects bad arguments") {
  const auto& f = fx();
  long i = f.part.jset[1];
  double t_i = f.part.t_of(i);
  SweepConfig strict = test_cfg();
  strict.strict_resolution = true;  // 8 lambda K = 64 > n = 32
  CHECK_THROWS_AS(sweep_window(f.part, f.value_fn(), f.rhs_fn(), f.g, table3(), i,
                               0.05, 2, {t_i}, strict),
                  std::invalid_argument);
  CHECK_THROWS_AS(sweep_window(f.part, f.value_fn(), f.rhs_fn(), f.g, table3(), i,
                               0.05, 0, {t_i}, test_cfg()),
                  std::invalid_argument);
  CHECK_THROWS_AS(sweep_window(f.part, f.value_fn(), f.rhs_fn(), f.g, table3(), i,
                               -1.0, 2, {t_i}, test_cfg()),
                  std::invalid_argument);
}

TEST_CASE("iteration: zero stress and empty bad set leave the solution untouched") {
  const auto& f = fx();
  // identical background solutions: R_0 vanishes identically
  Trajectory V1 = f.init->V1;
  Trajectory V2 = f.init->V1;
  InitialData same = make_initial_data(std::move(V1), std::move(V2),
                                       f.init->ramp.lo, f.init->ramp.hi, f.e.T);
  IntervalBook empty;
  empty.q = 0;
  IterationConfig cfg;
  cfg.sweep = test_cfg();
  cfg.lambda_next = 2;
  cfg.ell = f.ell;
  // nothing to glue and nothing to perturb
  IterationReport rep = iteration_step(same, f.sched, empty, 0, table3(), f.g, cfg);
  CHECK(rep.windows.empty());
  CHECK(rep.r_next_sup == 0.0);
  CHECK(rep.deviation_sup == 0.0);
  CHECK(rep.good_set_deviation == 0.0);
}

TEST_CASE("iteration: one full surrogate step") {
  const auto& f = fx();
  IterationConfig cfg;
  cfg.sweep = test_cfg();
  cfg.lambda_next = 2;
  cfg.samples_per_window = 3;
  cfg.ell = f.ell;
  IterationReport rep = iteration_step(*f.init, f.sched, f.book0, 0, table3(), f.g, cfg);

  CHECK(rep.windows.size() == f.part.jset.size());
  CHECK(rep.delta_next > 0.0);
  CHECK(rep.r_cur_sup > 0.0);
  CHECK(rep.r_next_sup > 0.0);
  CHECK(std::isfinite(rep.stress_ratio));
  CHECK(rep.measured_m > 0.0);
  CHECK(rep.good_set_deviation == 0.0);  // bit-exact preservation off the bad set
  CHECK(rep.books_nested);
  CHECK(rep.measure_ratio <= 1.0 + 1e-12);
  for (const auto& wr : rep.windows) {
    CHECK(wr.transported_phase_residual < 1e-6);
    for (const auto& ss : wr.samples) {
      if (ss.fnsr_residual >= 0.0) CHECK(ss.fnsr_residual < 1e-5);
      if (ss.rho > 0.0) CHECK(ss.div_w_rel < 1e-8);
    }
  }
}
