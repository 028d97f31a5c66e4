#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "wildflow/schedule.hpp"

using namespace wildflow;

namespace {

ExponentSet acceptance_set() {
  ExponentSet e;
  e.beta = 0.2;
  e.gamma = 0.3;
  e.b = 1.01;
  e.sigma = 5.91e-4;
  e.alpha = 1e-4;
  e.set_log_a(2.4e4);
  return e;
}

// hand-built ledger-style schedule that bypasses admissibility (for probing
// check_ledger on out-of-range exponents)
Schedule raw_schedule(const ExponentSet& e, int q_max) {
  Schedule s;
  s.e = e;
  s.rows.push_back({});
  s.rows[0].q = -1;
  s.rows[0].log_lambda = e.log_a / e.b;
  s.rows[0].log_delta = -2 * e.beta * s.rows[0].log_lambda;
  s.rows[0].log_eps = 0.0;
  s.rows[0].log_tau = std::log(e.T / 15.0);
  s.rows[0].log_ell = s.rows[0].log_tau;
  for (int q = 0; q <= q_max; ++q) {
    ScheduleRow r;
    r.q = q;
    r.log_lambda = log_lambda_value(e.log_a, e.b, q);
    r.log_delta = -2 * e.beta * r.log_lambda;
    r.log_eps = -e.sigma * r.log_lambda;
    r.log_tau = -0.5 * r.log_delta - (1 + 3 * e.alpha) * r.log_lambda;
    double lam1 = log_lambda_value(e.log_a, e.b, q + 1);
    r.log_ell = -e.beta * lam1 + (e.beta - 1 - 0.5 * e.sigma - 1.5 * e.alpha) * r.log_lambda;
    s.rows.push_back(r);
  }
  return s;
}

}  // namespace

TEST_CASE("validate_exponents rejects beta above one third") {
  ExponentSet e = acceptance_set();
  e.beta = 0.4;
  auto r = validate_exponents(e);
  CHECK_FALSE(r.pass);
  bool found = false;
  for (const auto& c : r.checks)
    if (c.id == "beta_lt_third") { found = true; CHECK(c.margin < 0); }
  CHECK(found);
}

TEST_CASE("validate_exponents accepts the documented admissible point") {
  ExponentSet e;
  e.beta = 0.2;
  e.gamma = 0.3;
  e.b = 1.01;
  e.sigma = 0.001;
  e.alpha = 1e-5;
  e.set_a(16.0);
  CHECK(validate_exponents(e).pass);
}

TEST_CASE("validate_exponents rejects beta + 2 gamma >= 1") {
  ExponentSet e = acceptance_set();
  e.gamma = 0.45;
  auto r = validate_exponents(e);
  CHECK_FALSE(r.pass);
  for (const auto& c : r.checks)
    if (c.id == "beta_2gamma_lt_1") CHECK(c.margin == doctest::Approx(-0.1));
}

TEST_CASE("validate_exponents names non-finite fields") {
  ExponentSet e = acceptance_set();
  e.sigma = std::nan("");
  CHECK_THROWS_WITH_AS(validate_exponents(e),
                       "non-finite exponent field: sigma", std::invalid_argument);
}

TEST_CASE("frequency recursion: a=2 b=2 gives lambda_3 = 256") {
  // raw recursion value (the pair (a,b)=(2,2) is outside the admissible set)
  double ll = log_lambda_value(std::log(2.0), 2.0, 3);
  CHECK(std::exp(ll) == doctest::Approx(256.0).epsilon(1e-14));
}

TEST_CASE("delta from lambda: beta=1/4, lambda=16 gives 0.25") {
  double log_delta = -2.0 * 0.25 * std::log(16.0);
  CHECK(std::exp(log_delta) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("log lambda recursion is exact in log space") {
  ExponentSet e = acceptance_set();
  Schedule s = compute_schedule(e, 40);
  for (int q = 0; q < 40; ++q) {
    double expect = e.b * s.row(q).log_lambda;
    CHECK(s.row(q + 1).log_lambda == doctest::Approx(expect).epsilon(1e-15));
    // independent recomputation
    CHECK(s.row(q).log_lambda ==
          doctest::Approx(std::pow(e.b, q) * e.log_a).epsilon(1e-15));
  }
  // q=-1 row pins 5 eps tau = T/3
  CHECK(5.0 * std::exp(s.row(-1).log_eps + s.row(-1).log_tau) ==
        doctest::Approx(e.T / 3.0).epsilon(1e-14));
}

TEST_CASE("compute_schedule flags overflow of the exponent range") {
  ExponentSet e = acceptance_set();
  e.b = 1.3;
  e.sigma = 1e-4;  // keep admissible under the new b
  CHECK_THROWS_AS(compute_schedule(e, 3000), std::overflow_error);
}

TEST_CASE("ledger certifies the acceptance exponents for q <= 40") {
  Schedule s = compute_schedule(acceptance_set(), 42);
  LedgerReport rep = check_ledger(s);
  CHECK(rep.certified);
  CHECK(rep.monotone);
  CHECK(rep.min_margin >= std::log(10.0));
}

TEST_CASE("ledger needs the q = -1 row") {
  Schedule s = compute_schedule(acceptance_set(), 5);
  s.rows.erase(s.rows.begin());
  for (auto& r : s.rows) {}  // rows now start at q=0
  CHECK_THROWS_AS(check_ledger(s), std::invalid_argument);
}

TEST_CASE("sigma above the bound drives the stress-size margin negative") {
  ExponentSet e = acceptance_set();
  e.sigma = 2.0 * sigma_sup(e);  // violates the overlap-exponent bound
  Schedule s = raw_schedule(e, 30);
  LedgerReport rep = check_ledger(s, 0.0);
  double worst = 1e300;
  int worst_q = -1;
  for (const auto& r : rep.rows)
    if (r.ineq == "27_stress_conv" && r.q > 20 && r.log_margin < worst) {
      worst = r.log_margin;
      worst_q = r.q;
    }
  CHECK(worst_q > 20);
  CHECK(worst < 0.0);
}

TEST_CASE("gamma=0 keeps the dissipative margin trivially positive") {
  ExponentSet e = acceptance_set();
  e.gamma = 0.0;
  Schedule s = raw_schedule(e, 20);
  LedgerReport rep = check_ledger(s, 0.0);
  for (const auto& r : rep.rows)
    if (r.ineq == "26_dissipative") CHECK(r.log_margin > 0.0);
}

TEST_CASE("empirical a0 exists and certifies") {
  ExponentSet e = acceptance_set();
  double la0 = empirical_log_a0(e, 40);
  CHECK(la0 < 1e6);
  e.set_log_a(la0 * 1.0000001);
  CHECK(check_ledger(compute_schedule(e, 42)).certified);
  e.set_log_a(la0 * 0.98);
  CHECK_FALSE(check_ledger(compute_schedule(e, 42)).certified);
}

TEST_CASE("dimension bound formula and limits") {
  ExponentSet e = acceptance_set();
  auto db = dimension_bound(e);
  CHECK(db.target == doctest::Approx((1.0 + e.beta) / (2.0 * (1.0 - e.beta))));
  CHECK(db.value > db.target);

  // beta -> 0 limit: target 1/2
  ExponentSet e0 = e;
  e0.beta = 1e-9;
  e0.sigma = 1e-7;
  CHECK(dimension_bound(e0).target == doctest::Approx(0.5).epsilon(1e-6));

  // beta -> 1/3 limit: target 1
  ExponentSet e1 = e;
  e1.beta = 1.0 / 3.0 - 1e-6;
  e1.gamma = 0.1;
  e1.b = 1.0 + 1e-7;      // 1 - beta - 2 b beta > 0 needs b - 1 -> 0 jointly
  e1.sigma = 1e-13;
  CHECK(dimension_bound(e1).target == doctest::Approx(1.0).epsilon(1e-5));

  // extreme corner approaches the target within 1e-2
  ExponentSet ex = e;
  ex.b = 1.001;
  ex.alpha = 1e-8;
  ex.sigma = 0.999 * sigma_sup(ex);
  auto dbx = dimension_bound(ex);
  CHECK(std::abs(dbx.value - 0.75) < 1e-2);
}

TEST_CASE("dimension bound guards b = 1") {
  ExponentSet e = acceptance_set();
  e.b = 1.0;
  CHECK_THROWS_AS(dimension_bound(e), std::invalid_argument);
}

TEST_CASE("beta1 window endpoints and chain") {
  ExponentSet e = acceptance_set();
  e.b = 1.01;
  e.sigma = 0.0008;
  auto w = beta1_window(e);
  CHECK(w.lo == doctest::Approx(0.2));
  CHECK(w.hi == doctest::Approx(0.28));
  CHECK(w.hi < (1.0 - 0.202) / 2.01 + 1e-12);
  CHECK(w.hi < 0.5 * (1.0 - e.beta));

  // sigma -> 0 collapses the window onto beta
  e.sigma = 1e-12;
  auto w0 = beta1_window(e);
  CHECK(w0.hi - w0.lo == doctest::Approx(1e-10).epsilon(1.0));
}

TEST_CASE("beta1 window upper endpoint below (1-beta)/2 over random admissible sets") {
  std::mt19937_64 rng(7);
  auto unif = [&rng](double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) / 9007199254740992.0);
  };
  int tried = 0;
  while (tried < 1000) {
    ExponentSet e;
    e.beta = unif(0.01, 0.33);
    e.gamma = unif(0.01, 0.495 * (1.0 - e.beta));
    e.b = 1.0 + unif(0.001, 0.08);
    double sup = sigma_sup(e);
    if (sup <= 0) continue;
    e.sigma = unif(0.05, 0.95) * sup;
    e.alpha = unif(1e-8, 1e-4);
    e.set_log_a(unif(1e3, 1e5));
    if (!validate_exponents(e).pass) continue;
    ++tried;
    auto w = beta1_window(e);
    CHECK(w.hi < 0.5 * (1.0 - e.beta));
    CHECK(w.hi > w.lo);
  }
}

TEST_CASE("bad set evolution: counts, nesting, contraction") {
  ExponentSet e = acceptance_set();
  // surrogate scale so intervals are enumerable
  std::vector<long> lambda = {16, 128, 1024};
  std::vector<double> delta = {std::pow(16.0, -0.4), std::pow(128.0, -0.4),
                               std::pow(1024.0, -0.4)};
  std::vector<double> eps = {0.25, 0.2, 0.15};
  std::vector<double> ell = {0.1, 0.05, 0.02};
  std::vector<double> tau_raw = {0.109, 0.0206, 0.00388};
  Schedule s = surrogate_schedule(e, lambda, delta, eps, tau_raw, ell);

  IntervalBook b0 = initial_bad_set(s);
  CHECK(b0.intervals.size() == 1);
  CHECK(b0.intervals[0].length() == doctest::Approx(e.T / 3.0));

  EvolveStats st;
  IntervalBook b1 = evolve_bad_set(b0, s, 0, &st);
  // count scale: one bookkeeping window per 5 tau_0 of bad measure
  double tau0 = std::exp(s.row(0).log_tau);
  CHECK(st.j_book_count == doctest::Approx((e.T / 3.0) / (5 * tau0)).epsilon(0.35));
  CHECK(st.j_fine_count >= 4 * st.j_book_count);

  double eps0 = std::exp(s.row(0).log_eps);
  CHECK(b1.measure() <= eps0 * b0.measure() + 1e-12);
  double want_len = 5.0 * eps0 * tau0;
  for (const auto& iv : b1.intervals) {
    CHECK(iv.length() == doctest::Approx(want_len).epsilon(1e-12));
    CHECK(iv.lo >= b0.intervals[0].lo - 1e-12);
    CHECK(iv.hi <= b0.intervals[0].hi + 1e-12);
  }

  IntervalBook b2 = evolve_bad_set(b1, s, 1, &st);
  CHECK(b2.measure() <= std::exp(s.row(1).log_eps) * b1.measure() + 1e-12);
  // nesting: every level-2 interval sits inside a level-1 interval
  for (const auto& iv : b2.intervals) {
    bool inside = false;
    for (const auto& up : b1.intervals)
      inside = inside || (iv.lo >= up.lo - 1e-12 && iv.hi <= up.hi + 1e-12);
    CHECK(inside);
  }
}

TEST_CASE("bad set evolution: degenerate short interval gives empty book") {
  ExponentSet e = acceptance_set();
  std::vector<long> lambda = {16};
  std::vector<double> delta = {std::pow(16.0, -0.4)};
  std::vector<double> eps = {0.25};
  std::vector<double> ell = {0.1};
  std::vector<double> tau_raw = {0.109};
  Schedule s = surrogate_schedule(e, lambda, delta, eps, tau_raw, ell);
  IntervalBook tiny;
  tiny.q = 0;
  double et = std::exp(s.row(0).log_eps + s.row(0).log_tau);
  tiny.intervals.push_back({0.5, 0.5 + 4.0 * et});  // shorter than 5 eps tau
  IntervalBook nxt = evolve_bad_set(tiny, s, 0);
  CHECK(nxt.empty_flag);
  CHECK(nxt.intervals.empty());
}

TEST_CASE("box dimension: static interval estimates toward 1") {
  ExponentSet e;
  e.beta = 0.2; e.gamma = 0.3; e.b = 1.1; e.sigma = 0.012; e.alpha = 1e-4;
  e.set_log_a(3.5);  // moderate scales so box counts stay representable
  Schedule s = compute_schedule(e, 32);
  std::vector<IntervalBook> books;
  for (int q = 1; q <= 28; ++q) {
    IntervalBook b;
    b.q = q;
    b.intervals.push_back({0.3, 0.7});
    books.push_back(b);
  }
  auto tr = box_dimension_estimate(books, s);
  CHECK(tr.estimate.back() > 0.96);
  CHECK(tr.estimate.back() <= 1.0 + 1e-9);
  // increasing toward 1
  CHECK(tr.estimate.back() > tr.estimate.front());
}

TEST_CASE("box dimension trajectory matches the closed form at q=25") {
  ExponentSet e;
  e.beta = 0.2;
  e.gamma = 0.3;
  e.b = 1.1;
  e.sigma = 0.012;
  e.alpha = 1e-4;
  e.set_log_a(2.4e4);
  REQUIRE(validate_exponents(e).pass);
  Schedule s = compute_schedule(e, 30);
  std::vector<IntervalBook> books;
  IntervalBook b = initial_bad_set(s);
  b.log_mode = true;  // asymptotic track
  for (int q = 0; q <= 26; ++q) {
    b = evolve_bad_set(b, s, q);
    books.push_back(b);
  }
  auto tr = box_dimension_estimate(books, s);
  double D = dimension_bound(e).value;
  double at25 = 0.0;
  for (std::size_t i = 0; i < tr.q.size(); ++i)
    if (tr.q[i] == 26) at25 = tr.estimate[i];  // book level 26 = step q=25
  CHECK(std::abs(at25 - D) / D < 0.02);
  // trajectory approaches D from above
  CHECK(tr.estimate.front() > tr.estimate.back());
  CHECK(tr.estimate.back() > D);
}

TEST_CASE("evolved counts track the closed form within a constant") {
  ExponentSet e;
  e.beta = 0.2; e.gamma = 0.3; e.b = 1.1; e.sigma = 0.012; e.alpha = 1e-4;
  e.set_log_a(2.4e4);
  Schedule s = compute_schedule(e, 28);
  IntervalBook b = initial_bad_set(s);
  b.log_mode = true;
  for (int q = 0; q <= 25; ++q) b = evolve_bad_set(b, s, q);
  // closed form: ln(tau_25^{-1} prod_{i<=24} eps_i)
  double closed = -s.row(25).log_tau;
  for (int i = 0; i <= 24; ++i) closed += s.row(i).log_eps;
  CHECK(std::abs(b.log_count - closed) < 5.0);  // constant factor in log space
}

TEST_CASE("surrogate schedule rejects C_q outside its band") {
  ExponentSet e = acceptance_set();
  std::vector<long> lambda = {8};
  std::vector<double> delta = {0.5};
  std::vector<double> eps = {0.25};
  std::vector<double> ell = {0.1};
  std::vector<double> tau_raw = {1.0};  // far above the formula value
  CHECK_THROWS_AS(surrogate_schedule(e, lambda, delta, eps, tau_raw, ell),
                  std::invalid_argument);
}
