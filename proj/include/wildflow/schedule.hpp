#pragma once
// Iteration schedule in log space: parameter recursions, inequality ledger,
// bad-set interval bookkeeping and singular-set dimension estimates.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace wildflow {

// The scheme's exponents. All dimensionless except T (time horizon) and nu.
struct ExponentSet {
  double beta = 0.2;    // Hoelder exponent, in (0, 1/3)
  double gamma = 0.3;   // dissipation power, beta + 2*gamma < 1
  double b = 1.01;      // super-exponential rate, > 1
  double sigma = 5e-4;  // overlap exponent, > 0, below the (b,beta) bound
  double alpha = 1e-4;  // slack exponent, > 0 small
  double a = 16.0;      // base frequency, >= 2 (only ln(a) enters the ledger)
  double log_a = std::log(16.0);  // ln(a); may exceed what `a` can represent
  int d = 3;            // spatial dimension, >= 3
  double T = 1.0;       // horizon, >= 1
  double nu = 1.0;      // dissipation coefficient, in (0,1]

  void set_a(double value) { a = value; log_a = std::log(value); }
  void set_log_a(double la) { log_a = la; a = std::exp(la); }
};

struct ConstraintCheck {
  std::string id;
  double margin = 0.0;  // signed; pass iff > 0
  bool pass = false;
};

struct AdmissibilityReport {
  std::vector<ConstraintCheck> checks;
  bool pass = false;
};

// Admissibility of the exponent set: beta < 1/3, beta + 2*gamma < 1, b > 1,
// sigma below (b-1)(1-beta-2b beta)/(b+1), alpha > 0, a >= 2, d >= 3, T >= 1,
// nu in (0,1]. Throws std::invalid_argument naming the field on non-finite
// input.
AdmissibilityReport validate_exponents(const ExponentSet& e);

// Upper bound sigma must stay below, (b-1)(1-beta-2b*beta)/(b+1).
double sigma_sup(const ExponentSet& e);

enum class ScheduleMode { ledger, surrogate };

struct ScheduleRow {
  int q = 0;
  double log_lambda = 0.0;  // ln lambda_q (pre-ceiling in ledger mode)
  double log_delta = 0.0;   // ln delta_q = -2 beta ln lambda_q
  double log_eps = 0.0;     // ln eps_q  = -sigma ln lambda_q
  double log_tau = 0.0;     // ln tau_q  (includes ln C_q)
  double log_ell = 0.0;     // ln ell_q
  double c_q = 1.0;         // slack factor in [1/2, 2]
  double log_m = 0.0;       // ln( eps_{q-1} tau_{q-1} / tau_q )
  double ceil_slack = 0.0;  // relative error of the ignored ceiling, e^{-ln lambda}
  bool ceiling_applied = false;  // surrogate mode: lambda_q is a small integer
};

struct Schedule {
  ExponentSet e;
  ScheduleMode mode = ScheduleMode::ledger;
  // rows[0] holds q = -1 (eps_{-1} = 1, tau_{-1} = T/15 so that
  // 5 eps_{-1} tau_{-1} = T/3).
  std::vector<ScheduleRow> rows;
  bool ell_minus1_defaulted = true;  // ell_{-1} not defined by the recursion

  int q_max() const { return static_cast<int>(rows.size()) - 2; }
  const ScheduleRow& row(int q) const;
};

// ln lambda_q = b^q ln(a), the pre-ceiling frequency recursion
double log_lambda_value(double log_a, double b, int q);

// Log-space schedule for q in [-1, q_max]. Ledger mode keeps C_q = 1 and
// records the ceiling correction as slack. Throws on inadmissible exponents,
// q_max < 1, or log-space overflow (b^q_max ln a beyond double range).
Schedule compute_schedule(const ExponentSet& e, int q_max);

// Surrogate schedule from hand-chosen small parameters. lambda entries are
// integers; tau_q is adjusted downward so eps_{q-1} tau_{q-1}/tau_q is a
// positive integer, with the resulting C_q required to stay in [1/2, 2].
// vectors are indexed from q = 0; eps/tau for q = -1 come from (1, T/15).
Schedule surrogate_schedule(const ExponentSet& e,
                            const std::vector<long>& lambda,
                            const std::vector<double>& delta,
                            const std::vector<double>& eps,
                            const std::vector<double>& tau_raw,
                            const std::vector<double>& ell);

struct MarginRow {
  int q = 0;
  std::string ineq;
  double log_margin = 0.0;
};

struct LedgerReport {
  std::vector<MarginRow> rows;
  double gate = 0.0;        // required margin (default ln 10)
  int n_high = 0;           // the N chosen for the high-N inequality
  bool certified = false;   // all margins >= gate
  bool monotone = true;     // every margin sequence nondecreasing for q >= 1
  double min_margin = 0.0;
  std::string min_margin_ineq;
};

// Evaluates every ledger inequality at each q in [0, q_max-2] from the
// schedule rows. The asymptotic "<<" relations are certified as
// log-margin >= gate. Throws if the q = -1 row is missing.
LedgerReport check_ledger(const Schedule& s, double gate = std::log(10.0));

// Smallest ln(a) for which check_ledger certifies at the given gate and
// q_max, found by bisection (margins are increasing in ln a).
double empirical_log_a0(const ExponentSet& e, int q_max, double gate = std::log(10.0));

struct DimensionBound {
  double value = 0.0;   // 1 - sigma b / ((b-1)(1+3 alpha + sigma - beta))
  double target = 0.0;  // (1+beta) / (2(1-beta))
};

// Throws if b <= 1. value > target always; equality only in the
// (b -> 1, alpha -> 0, sigma -> sup) limit.
DimensionBound dimension_bound(const ExponentSet& e);

struct Beta1Window {
  double lo = 0.0;  // beta
  double hi = 0.0;  // min(beta + sigma/(b-1), (1-beta)/2)
};

// Admissible beta_1 interval (beta, beta + sigma/(b-1)) intersected with
// (0, (1-beta)/2). Verifies the chain
//   beta + sigma/(b-1) < (1-b beta)/(b+1) < (1-beta)/2
// and throws if the window is empty.
Beta1Window beta1_window(const ExponentSet& e);

struct Interval {
  double lo = 0.0, hi = 0.0;
  double length() const { return hi - lo; }
};

// Bad-set bookkeeping at one level. Explicit interval lists for surrogate
// scales; log-space count/measure summaries for the asymptotic ledger track
// where counts are astronomically large.
struct IntervalBook {
  int q = 0;
  bool log_mode = false;
  std::vector<Interval> intervals;  // disjoint, closed; empty in log mode
  double log_count = 0.0;           // ln(#intervals)
  double log_measure = 0.0;         // ln |B_q|
  double log_length = 0.0;          // ln of the common interval length
  bool empty_flag = false;

  double measure() const;
  std::size_t count() const { return intervals.size(); }
};

// B_0 = [T/3, 2T/3]: one interval of length 5 eps_{-1} tau_{-1}.
IntervalBook initial_bad_set(const Schedule& s);

struct EvolveStats {
  long j_fine_count = 0;    // all grid indices whose window fits inside B_q
  long j_book_count = 0;    // retained bookkeeping windows (one per 5 tau_q)
  long j_star_count = 0;    // consecutive pairs among the fine indices
  double measure_ratio = 0.0;  // |B_{q+1}| / |B_q|
};

// One bookkeeping step: selects grid times t_j = j tau_q whose window
// [t_j - 2 eps_q tau_q, t_j + 3 eps_q tau_q] lies inside B_q, retains one
// window per 5 tau_q of bad measure (the divisibility integer makes this
// an exact count of eps_{q-1} tau_{q-1} / tau_q windows per interval), and
// returns their union. Guarantees B_{q+1} subset of B_q, interval length
// exactly 5 eps_q tau_q, and |B_{q+1}| <= eps_q |B_q|.
// Throws if the divisibility ratio is not an integer (naming C_q).
IntervalBook evolve_bad_set(const IntervalBook& book, const Schedule& s, int q,
                            EvolveStats* stats = nullptr);

struct DimensionTrajectory {
  std::vector<int> q;
  std::vector<double> estimate;  // ln(count_q) / ln(1/(eps_q tau_q))
  bool empty_flag = false;
};

// Box-counting estimate per level from a sequence of books (>= 3 levels).
DimensionTrajectory box_dimension_estimate(const std::vector<IntervalBook>& books,
                                           const Schedule& s);

}  // namespace wildflow
