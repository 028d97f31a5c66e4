#include "wildflow/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace wildflow {

namespace {

void require_finite(double v, const char* name) {
  if (!std::isfinite(v))
    throw std::invalid_argument(std::string("non-finite exponent field: ") + name);
}

constexpr double kMaxLog = 1e300;  // guard for b^q ln a

}  // namespace

double sigma_sup(const ExponentSet& e) {
  return (e.b - 1.0) * (1.0 - e.beta - 2.0 * e.b * e.beta) / (e.b + 1.0);
}

AdmissibilityReport validate_exponents(const ExponentSet& e) {
  require_finite(e.beta, "beta");
  require_finite(e.gamma, "gamma");
  require_finite(e.b, "b");
  require_finite(e.sigma, "sigma");
  require_finite(e.alpha, "alpha");
  require_finite(e.log_a, "log_a");
  require_finite(e.T, "T");
  require_finite(e.nu, "nu");

  AdmissibilityReport r;
  auto add = [&r](const std::string& id, double margin) {
    r.checks.push_back({id, margin, margin > 0.0});
  };
  add("beta_pos", e.beta);
  add("beta_lt_third", 1.0 / 3.0 - e.beta);
  add("gamma_pos", e.gamma);
  add("beta_2gamma_lt_1", 1.0 - e.beta - 2.0 * e.gamma);
  add("b_gt_1", e.b - 1.0);
  add("sigma_pos", e.sigma);
  add("sigma_bound", sigma_sup(e) - e.sigma);
  add("alpha_pos", e.alpha);
  add("a_ge_2", e.log_a - std::log(2.0));
  add("d_ge_3", static_cast<double>(e.d) - 3.0 + 0.5);
  add("T_ge_1", e.T - 1.0 + 1e-15);
  add("nu_pos", e.nu);
  add("nu_le_1", 1.0 - e.nu + 1e-15);
  r.pass = std::all_of(r.checks.begin(), r.checks.end(),
                       [](const ConstraintCheck& c) { return c.pass; });
  return r;
}

const ScheduleRow& Schedule::row(int q) const {
  int idx = q + 1;
  if (idx < 0 || idx >= static_cast<int>(rows.size()))
    throw std::out_of_range("schedule row q=" + std::to_string(q) + " not computed");
  return rows[idx];
}

namespace {

double log_ell_from(const ExponentSet& e, double log_lambda_q, double log_lambda_q1) {
  // ell_q = delta_{q+1}^{1/2} / (lambda_q^{1+sigma/2+3alpha/2} delta_q^{1/2})
  double log_delta_q = -2.0 * e.beta * log_lambda_q;
  double log_delta_q1 = -2.0 * e.beta * log_lambda_q1;
  return 0.5 * log_delta_q1 - (1.0 + 0.5 * e.sigma + 1.5 * e.alpha) * log_lambda_q -
         0.5 * log_delta_q;
}

ScheduleRow minus1_row(const ExponentSet& e) {
  ScheduleRow r;
  r.q = -1;
  r.log_lambda = e.log_a / e.b;  // natural extension of lambda_q = a^{b^q}
  r.log_delta = -2.0 * e.beta * r.log_lambda;
  r.log_eps = 0.0;                  // eps_{-1} = 1
  r.log_tau = std::log(e.T / 15.0); // 5 eps_{-1} tau_{-1} = T/3
  r.log_ell = r.log_tau;            // ell_{-1} undefined by the recursion; defaulted
  r.c_q = 1.0;
  return r;
}

}  // namespace

double log_lambda_value(double log_a, double b, int q) {
  return std::pow(b, static_cast<double>(q)) * log_a;
}

Schedule compute_schedule(const ExponentSet& e, int q_max) {
  auto adm = validate_exponents(e);
  if (!adm.pass) {
    std::string bad;
    for (const auto& c : adm.checks)
      if (!c.pass) bad += (bad.empty() ? "" : ", ") + c.id;
    throw std::invalid_argument("inadmissible exponent set: " + bad);
  }
  if (q_max < 1) throw std::invalid_argument("q_max must be >= 1");

  double top = std::pow(e.b, static_cast<double>(q_max)) * e.log_a;
  if (!(top < kMaxLog))
    throw std::overflow_error("b^q_max * ln(a) exceeds representable log range");

  Schedule s;
  s.e = e;
  s.mode = ScheduleMode::ledger;
  s.rows.push_back(minus1_row(e));
  for (int q = 0; q <= q_max; ++q) {
    ScheduleRow r;
    r.q = q;
    r.log_lambda = log_lambda_value(e.log_a, e.b, q);
    r.log_delta = -2.0 * e.beta * r.log_lambda;
    r.log_eps = -e.sigma * r.log_lambda;
    r.log_tau = -0.5 * r.log_delta - (1.0 + 3.0 * e.alpha) * r.log_lambda;  // C_q = 1
    double log_lambda_next = log_lambda_value(e.log_a, e.b, q + 1);
    r.log_ell = log_ell_from(e, r.log_lambda, log_lambda_next);
    r.c_q = 1.0;
    const ScheduleRow& prev = s.rows.back();
    r.log_m = prev.log_eps + prev.log_tau - r.log_tau;
    r.ceil_slack = std::exp(-std::min(r.log_lambda, 700.0));
    s.rows.push_back(r);
  }
  return s;
}

Schedule surrogate_schedule(const ExponentSet& e,
                            const std::vector<long>& lambda,
                            const std::vector<double>& delta,
                            const std::vector<double>& eps,
                            const std::vector<double>& tau_raw,
                            const std::vector<double>& ell) {
  std::size_t nq = lambda.size();
  if (delta.size() != nq || eps.size() != nq || tau_raw.size() != nq || ell.size() != nq)
    throw std::invalid_argument("surrogate parameter vectors must share length");
  if (nq < 1) throw std::invalid_argument("surrogate schedule needs q >= 0 entries");

  Schedule s;
  s.e = e;
  s.mode = ScheduleMode::surrogate;
  s.rows.push_back(minus1_row(e));
  double eps_prev = 1.0, tau_prev = e.T / 15.0;
  for (std::size_t i = 0; i < nq; ++i) {
    if (lambda[i] < 2) throw std::invalid_argument("surrogate lambda must be >= 2");
    ScheduleRow r;
    r.q = static_cast<int>(i);
    r.ceiling_applied = true;
    r.log_lambda = std::log(static_cast<double>(lambda[i]));
    r.log_delta = std::log(delta[i]);
    r.log_eps = std::log(eps[i]);
    // adjust tau downward to the nearest value with eps_{q-1} tau_{q-1}/tau_q integer
    double target = eps_prev * tau_prev;
    long m = static_cast<long>(std::ceil(target / tau_raw[i] - 1e-12));
    if (m < 1) m = 1;
    double tau = target / static_cast<double>(m);
    double tau_formula = std::exp(-0.5 * r.log_delta - (1.0 + 3.0 * e.alpha) * r.log_lambda);
    r.c_q = tau / tau_formula;
    if (r.c_q < 0.5 || r.c_q > 2.0)
      throw std::invalid_argument("surrogate C_q = " + std::to_string(r.c_q) +
                                  " outside [1/2,2] at q=" + std::to_string(i) +
                                  "; choose tau nearer the formula value");
    r.log_tau = std::log(tau);
    r.log_ell = std::log(ell[i]);
    r.log_m = std::log(static_cast<double>(m));
    s.rows.push_back(r);
    eps_prev = eps[i];
    tau_prev = tau;
  }
  return s;
}

namespace {

struct LedgerCtx {
  const Schedule& s;
  double L(int q) const { return s.row(q).log_lambda; }
  double d(int q) const { return s.row(q).log_delta; }
  double eps(int q) const { return s.row(q).log_eps; }
  double t(int q) const { return s.row(q).log_tau; }
  double l(int q) const { return s.row(q).log_ell; }
};

}  // namespace

LedgerReport check_ledger(const Schedule& s, double gate) {
  if (s.rows.empty() || s.rows.front().q != -1)
    throw std::invalid_argument("schedule missing q = -1 row");
  int qm = s.q_max();
  if (qm < 2) throw std::invalid_argument("check_ledger needs q_max >= 2");

  const ExponentSet& e = s.e;
  LedgerCtx c{s};

  // high-N inequality: smallest N with a positive, growing margin coefficient
  int n_high = 0;
  for (int N = 2; N < 4000; ++N) {
    double coef = (N + 10.0 * e.alpha) *
                      (e.beta - 1.0 - 0.5 * e.sigma - 1.5 * e.alpha - e.b * e.beta) +
                  (N - 1.0 - 10.0 * e.alpha) * e.b;
    if (coef > 1e-9) { n_high = N; break; }
  }
  if (n_high == 0) throw std::runtime_error("no admissible N for the high-N inequality");

  LedgerReport rep;
  rep.gate = gate;
  rep.n_high = n_high;

  auto push = [&rep](int q, const std::string& id, double m) {
    rep.rows.push_back({q, id, m});
  };

  for (int q = 0; q <= qm - 2; ++q) {
    double a = e.alpha;
    push(q, "20_time_length",
         -(0.5 * c.eps(q) + c.t(q) + 0.5 * c.d(q + 1) - c.l(q)));
    push(q, "21a_freq_low", -c.l(q) - c.L(q));
    push(q, "21b_freq_mid", c.L(q + 1) + c.l(q));
    push(q, "21c_freq_high", 1.5 * c.L(q) - c.L(q + 1));
    push(q, "22_good_bad",
         (c.eps(q) + c.t(q) + c.d(q + 1)) -
             (0.5 * c.d(q - 1) + c.L(q - 1) + (2.0 - 2.0 * a) * c.l(q)));
    push(q, "24a_overlap", -c.eps(q));
    push(q, "24b_step_prev", (c.eps(q - 1) + c.t(q - 1)) - c.t(q));
    push(q, "26_dissipative", -c.t(q) + (a + 2.0 * e.gamma) * c.l(q));
    push(q, "27_stress_conv",
         (c.eps(q + 1) + c.d(q + 2) - 4.0 * a * c.L(q + 1)) -
             (-c.eps(q) + 0.5 * c.d(q + 1) + 0.5 * c.d(q) +
              (-1.0 + 10.0 * a) * c.L(q + 1) + (1.0 + 10.0 * a) * c.L(q)));
    push(q, "28_stress_diss",
         (c.eps(q + 1) + c.d(q + 2) - 4.0 * a * c.L(q + 1)) -
             (0.5 * c.d(q + 1) + (-1.0 + 2.0 * e.gamma + 10.0 * a) * c.L(q + 1)));
    push(q, "37_local_horizon",
         (2.0 * a * c.l(q) - 0.5 * c.d(q) - c.L(q)) - c.t(q));
    push(q, "74_high_n",
         (n_high + 10.0 * a) * c.l(q) + (n_high - 1.0 - 10.0 * a) * c.L(q + 1));
  }
  // special case: tau_0 << 1/15 (<= T/15 since T >= 1)
  push(0, "25_tau0_special", -std::log(15.0) - c.t(0));

  rep.min_margin = std::numeric_limits<double>::infinity();
  for (const auto& r : rep.rows) {
    if (r.log_margin < rep.min_margin) {
      rep.min_margin = r.log_margin;
      rep.min_margin_ineq = r.ineq + "@q=" + std::to_string(r.q);
    }
  }
  rep.certified = rep.min_margin >= gate;

  // eventual monotonicity: each sequence nondecreasing from q = 1 on
  std::map<std::string, std::map<int, double>> by_id;
  for (const auto& r : rep.rows) by_id[r.ineq][r.q] = r.log_margin;
  for (const auto& [id, seq] : by_id) {
    double prev = -std::numeric_limits<double>::infinity();
    for (const auto& [q, m] : seq) {
      if (q >= 1 && q - 1 >= 1 && seq.count(q - 1) && m + 1e-9 < prev) rep.monotone = false;
      if (q >= 1) prev = m;
    }
  }
  return rep;
}

double empirical_log_a0(const ExponentSet& e, int q_max, double gate) {
  ExponentSet probe = e;
  auto min_margin = [&](double log_a) {
    probe.set_log_a(log_a);
    Schedule s = compute_schedule(probe, q_max);
    return check_ledger(s, gate).min_margin;
  };
  double lo = std::log(2.0) + 1e-9, hi = 1e8;
  if (min_margin(hi) < gate)
    throw std::runtime_error("no a_0 below exp(1e8) certifies this exponent set");
  if (min_margin(lo) >= gate) return lo;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (min_margin(mid) >= gate ? hi : lo) = mid;
    if (hi - lo < 1e-6 * hi) break;
  }
  return hi;
}

DimensionBound dimension_bound(const ExponentSet& e) {
  if (!(e.b > 1.0)) throw std::invalid_argument("dimension_bound requires b > 1");
  auto adm = validate_exponents(e);
  if (!adm.pass) throw std::invalid_argument("dimension_bound requires admissible exponents");
  DimensionBound db;
  db.value = 1.0 - e.sigma * e.b /
                       ((e.b - 1.0) * (1.0 + 3.0 * e.alpha + e.sigma - e.beta));
  db.target = (1.0 + e.beta) / (2.0 * (1.0 - e.beta));
  if (!(db.value > db.target))
    throw std::runtime_error("dimension bound fell below the limiting target");
  return db;
}

Beta1Window beta1_window(const ExponentSet& e) {
  auto adm = validate_exponents(e);
  if (!adm.pass) throw std::invalid_argument("beta1_window requires admissible exponents");
  double upper_raw = e.beta + e.sigma / (e.b - 1.0);
  double cap = 0.5 * (1.0 - e.beta);
  double mid = (1.0 - e.b * e.beta) / (e.b + 1.0);
  if (!(upper_raw < mid && mid < cap))
    throw std::runtime_error("beta1 chain beta+sigma/(b-1) < (1-b beta)/(b+1) < (1-beta)/2 failed");
  Beta1Window w;
  w.lo = e.beta;
  w.hi = std::min(upper_raw, cap);
  if (!(w.hi > w.lo)) throw std::runtime_error("empty beta1 window");
  return w;
}

double IntervalBook::measure() const {
  if (log_mode) return std::exp(log_measure);
  double m = 0.0;
  for (const auto& iv : intervals) m += iv.length();
  return m;
}

IntervalBook initial_bad_set(const Schedule& s) {
  IntervalBook b;
  b.q = 0;
  double T = s.e.T;
  b.intervals.push_back({T / 3.0, 2.0 * T / 3.0});
  double len = 5.0 * std::exp(s.row(-1).log_eps + s.row(-1).log_tau);
  b.log_length = std::log(len);
  b.log_count = 0.0;
  b.log_measure = b.log_length;
  return b;
}

IntervalBook evolve_bad_set(const IntervalBook& book, const Schedule& s, int q,
                            EvolveStats* stats) {
  const ScheduleRow& r = s.row(q);
  const ScheduleRow& rp = s.row(q - 1);

  IntervalBook next;
  next.q = q + 1;

  if (book.log_mode) {
    // asymptotic track: one retained window per eps_{q-1}tau_{q-1}/tau_q grid
    // cells, each of length 5 eps_q tau_q
    next.log_mode = true;
    next.log_count = book.log_count + r.log_m;
    next.log_length = std::log(5.0) + r.log_eps + r.log_tau;
    next.log_measure = next.log_count + next.log_length;
    next.empty_flag = book.empty_flag;
    return next;
  }

  double tau = std::exp(r.log_tau);
  double eps_tau = std::exp(r.log_eps + r.log_tau);
  double m_real = std::exp(rp.log_eps + rp.log_tau - r.log_tau);
  long m = std::lround(m_real);
  if (std::abs(m_real - static_cast<double>(m)) > 1e-6 * std::max(1.0, m_real))
    throw std::runtime_error(
        "divisibility eps_{q-1}tau_{q-1}/tau_q = " + std::to_string(m_real) +
        " is not an integer; C_q = " + std::to_string(r.c_q) + " at q = " +
        std::to_string(q));

  EvolveStats st;
  const double slack = 1e-9 * tau;
  for (const auto& iv : book.intervals) {
    // fine grid indices whose window fits inside this interval
    long j_lo = static_cast<long>(std::ceil((iv.lo + 2.0 * eps_tau - slack) / tau));
    long j_hi = static_cast<long>(std::floor((iv.hi - 3.0 * eps_tau + slack) / tau));
    if (j_hi < j_lo) continue;
    long nfine = j_hi - j_lo + 1;
    st.j_fine_count += nfine;
    st.j_star_count += nfine - 1;
    for (long j = j_lo; j <= j_hi; j += 5) {
      double t = static_cast<double>(j) * tau;
      next.intervals.push_back({t - 2.0 * eps_tau, t + 3.0 * eps_tau});
      ++st.j_book_count;
    }
  }
  next.empty_flag = next.intervals.empty();
  if (!next.empty_flag) {
    next.log_count = std::log(static_cast<double>(next.intervals.size()));
    next.log_length = std::log(5.0 * eps_tau);
    next.log_measure = std::log(next.measure());
  }
  st.measure_ratio = book.measure() > 0.0 ? next.measure() / book.measure() : 0.0;
  if (stats) *stats = st;
  return next;
}

DimensionTrajectory box_dimension_estimate(const std::vector<IntervalBook>& books,
                                           const Schedule& s) {
  if (books.size() < 3)
    throw std::invalid_argument("box_dimension_estimate needs >= 3 levels");
  DimensionTrajectory tr;
  for (const auto& b : books) {
    if (b.q < 1) continue;  // needs the q-1 scale row
    // the book produced at step q-1 lives at the box scale eps_{q-1} tau_{q-1}
    const ScheduleRow& rp = s.row(b.q - 1);
    double log_scale = rp.log_eps + rp.log_tau;
    double log_boxcount;
    if (b.log_mode) {
      log_boxcount = b.log_count + std::log(5.0);  // every interval spans 5 boxes
    } else if (b.intervals.empty()) {
      tr.q.push_back(b.q);
      tr.estimate.push_back(0.0);
      tr.empty_flag = true;
      continue;
    } else {
      double scale = std::exp(log_scale);
      double cnt = 0.0;
      for (const auto& iv : b.intervals)
        cnt += std::max(1.0, std::ceil(iv.length() / scale - 1e-9));
      log_boxcount = std::log(cnt);
    }
    tr.q.push_back(b.q);
    tr.estimate.push_back(-log_boxcount / log_scale);
  }
  return tr;
}

}  // namespace wildflow
