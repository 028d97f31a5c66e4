#pragma once
// Gluing step: time partition over the bad set, exact local solutions from
// mollified data, the glued velocity, and the overlap stresses with their
// exact time derivatives.

#include <functional>
#include <map>
#include <string>

#include "wildflow/fns.hpp"
#include "wildflow/schedule.hpp"

namespace wildflow {

struct TimePartition {
  int q = 0;
  double T = 1.0;
  double tau = 0.0;      // tau_q
  double eps_tau = 0.0;  // eps_q tau_q, the overlap length
  std::vector<long> jset;   // J: fine indices whose window fits in B_q
  std::vector<long> jstar;  // J*: j with j+1 in J (these carry local solutions)
  struct Run {
    long j0 = 0, j1 = 0;  // contiguous block of J inside one bad interval
  };
  std::vector<Run> runs;

  double t_of(long j) const { return static_cast<double>(j) * tau; }

  // glued-field structure at a time: v_bar = w_a A + w_b B with w_a + w_b = 1.
  // piece id -1 denotes v_q; otherwise the local solution index j.
  struct Blend {
    long piece_a = -1, piece_b = -1;
    double w_a = 1.0, w_b = 0.0;
    double dw_a = 0.0;   // d/dt of w_a
    double d2w_a = 0.0;
    bool in_overlap = false;
    long window = -1;    // J index i when t lies in [t_i, t_i + eps_tau]
  };
  Blend blend_at(double t) const;
  bool pure_good(double t) const;  // true when v_bar(t) == v_q(t) identically
  std::vector<long> windows() const;  // every i in J (one overlap window each)
};

// Builds J, J*, runs and the cutoff structure from the current bad set.
// Throws if the divisibility integer fails or a run is too short to glue.
TimePartition build_partition(const IntervalBook& book, const Schedule& s, int q);

struct PartitionDiagnostics {
  double unity_residual = 0.0;  // max |sum chi - 1| over dense time samples
  std::vector<double> c_n;      // measured C_N = sup|d^N chi| (eps tau)^N, N = 1..4
};
PartitionDiagnostics check_partition(const TimePartition& p, int nsamples = 20000);

// piece accessors: value/rhs of piece id at time t (id -1 = v_q)
using PieceFn = std::function<Field(long, double)>;

// Exact local solution v_j on [t_j, t_j + 2 tau] from mollified glued data.
// The horizon precondition is the surrogate form of the local-existence
// window; dt is the solver step, states saved every save_every steps.
Trajectory solve_local(const InitialData& init, const TimePartition& part, long j,
                       double ell, double dt, int save_every,
                       double horizon_c = 0.1);

struct GluedSample {
  double t = 0.0;
  Field vbar, dvbar;      // glued velocity and its exact time derivative
  Field rbar, drbar;      // overlap stress (zero outside overlaps) and d/dt
  bool in_overlap = false;
  long window = -1;
};

// Assembles the glued velocity and the glued stress at one time from the
// two active pieces. Throws if a needed piece is unavailable (coverage gap).
GluedSample glue_sample(const TimePartition& part, double t, const PieceFn& value,
                        const PieceFn& rhs);

struct GlueEstimateRow {
  std::string id;
  int n = 0;           // derivative order N
  double measured = 0.0;
  double rhs = 0.0;    // the schedule-side bound
  double ratio = 0.0;
  bool degenerate = false;
};

// Measured gluing estimates against the schedule quantities at the given
// sample times (holder exponent fixed at 0.4).
std::vector<GlueEstimateRow> gluing_diagnostics(
    const TimePartition& part, const Schedule& s, int q, const PieceFn& value,
    const PieceFn& rhs, const std::function<Field(double)>& v_ell,
    const std::vector<double>& sample_times);

}  // namespace wildflow
