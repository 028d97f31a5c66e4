#include "wildflow/glue.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wildflow {

TimePartition build_partition(const IntervalBook& book, const Schedule& s, int q) {
  const ScheduleRow& r = s.row(q);
  const ScheduleRow& rp = s.row(q - 1);
  TimePartition p;
  p.q = q;
  p.T = s.e.T;
  p.tau = std::exp(r.log_tau);
  p.eps_tau = std::exp(r.log_eps + r.log_tau);

  double m_real = std::exp(rp.log_eps + rp.log_tau - r.log_tau);
  long m = std::lround(m_real);
  if (std::abs(m_real - static_cast<double>(m)) > 1e-6 * std::max(1.0, m_real))
    throw std::runtime_error("build_partition: divisibility ratio " +
                             std::to_string(m_real) + " not an integer (C_q = " +
                             std::to_string(r.c_q) + ")");

  const double slack = 1e-9 * p.tau;
  for (const auto& iv : book.intervals) {
    long j_lo = static_cast<long>(std::ceil((iv.lo + 2.0 * p.eps_tau - slack) / p.tau));
    long j_hi = static_cast<long>(std::floor((iv.hi - 3.0 * p.eps_tau + slack) / p.tau));
    if (j_hi < j_lo) continue;
    if (j_hi == j_lo)
      throw std::runtime_error(
          "build_partition: bad interval holds a single grid index; nothing to glue");
    p.runs.push_back({j_lo, j_hi});
    for (long j = j_lo; j <= j_hi; ++j) p.jset.push_back(j);
    for (long j = j_lo; j < j_hi; ++j) p.jstar.push_back(j);
  }
  return p;
}

TimePartition::Blend TimePartition::blend_at(double t) const {
  Blend b;
  for (const auto& run : runs) {
    double t0 = t_of(run.j0), t1 = t_of(run.j1);
    if (t < t0 || t > t1 + eps_tau) continue;
    long jc = static_cast<long>(std::floor(t / tau));
    if (jc < run.j0) jc = run.j0;
    if (jc > run.j1) jc = run.j1;
    double toff = t - t_of(jc);
    if (toff <= eps_tau) {
      // overlap window at t_jc: previous piece fades, next rises
      double sarg = toff / eps_tau;
      double w = ramp_shape(sarg);
      b.piece_a = (jc == run.j0) ? -1 : jc - 1;  // falling
      b.piece_b = (jc == run.j1) ? -1 : jc;      // rising
      b.w_a = 1.0 - w;
      b.w_b = w;
      b.dw_a = -ramp_shape_deriv(sarg) / eps_tau;
      b.d2w_a = -ramp_shape_deriv2(sarg) / (eps_tau * eps_tau);
      b.in_overlap = b.piece_a != b.piece_b;
      b.window = jc;
      return b;
    }
    // saturation region of chi_jc
    b.piece_a = (jc == run.j1) ? -1 : jc;
    b.piece_b = b.piece_a;
    b.w_a = 1.0;
    b.w_b = 0.0;
    return b;
  }
  return b;  // good region: pure v_q
}

bool TimePartition::pure_good(double t) const {
  Blend b = blend_at(t);
  return !b.in_overlap && b.piece_a == -1;
}

std::vector<long> TimePartition::windows() const { return jset; }

PartitionDiagnostics check_partition(const TimePartition& p, int nsamples) {
  PartitionDiagnostics d;
  // the two cutoff weights always sum to one by construction; verify the
  // evaluation path on a dense grid anyway
  for (int i = 0; i < nsamples; ++i) {
    double t = p.T * (i + 0.5) / nsamples;
    auto b = p.blend_at(t);
    d.unity_residual = std::max(d.unity_residual, std::abs(b.w_a + b.w_b - 1.0));
  }
  // derivative bounds of the ramp on the unit interval: C_N = sup |d^N chi|
  // (eps tau)^N with chi(t) = ramp((t - t_i)/eps_tau)
  d.c_n.assign(5, 0.0);
  int ns = 40000;
  double h = 1.0 / ns;
  auto r1 = [&](double sarg) { return ramp_shape_deriv(sarg); };
  auto r2 = [&](double sarg) { return ramp_shape_deriv2(sarg); };
  for (int i = 1; i < ns; ++i) {
    double sarg = i * h;
    d.c_n[1] = std::max(d.c_n[1], std::abs(r1(sarg)));
    d.c_n[2] = std::max(d.c_n[2], std::abs(r2(sarg)));
    if (i > 1 && i < ns - 1) {
      double d3 = (r2(sarg + h) - r2(sarg - h)) / (2 * h);
      double d4 = (r2(sarg + h) - 2 * r2(sarg) + r2(sarg - h)) / (h * h);
      d.c_n[3] = std::max(d.c_n[3], std::abs(d3));
      d.c_n[4] = std::max(d.c_n[4], std::abs(d4));
    }
  }
  return d;
}

Trajectory solve_local(const InitialData& init, const TimePartition& part, long j,
                       double ell, double dt, int save_every, double horizon_c) {
  bool in_star = std::find(part.jstar.begin(), part.jstar.end(), j) != part.jstar.end();
  if (!in_star)
    throw std::invalid_argument("solve_local: j = " + std::to_string(j) +
                                " is not a J* index");
  double t_j = part.t_of(j);
  Field u0 = mollify(init.v_at(t_j), ell);
  u0.t = t_j;
  double horizon = 2.0 * part.tau;
  // surrogate form of the local-existence window
  auto h = holder_norm(u0, 1, 0.4);
  if (horizon > horizon_c / std::max(h.value, 1e-30))
    throw std::runtime_error("solve_local: horizon 2 tau = " + std::to_string(horizon) +
                             " exceeds the local-existence window " +
                             std::to_string(horizon_c / std::max(h.value, 1e-30)));
  return solve_fns(u0, init.V1.nu, init.V1.gamma, t_j, horizon, dt, save_every,
                   nullptr, horizon_c, false);
}

GluedSample glue_sample(const TimePartition& part, double t, const PieceFn& value,
                        const PieceFn& rhs) {
  auto b = part.blend_at(t);
  GluedSample out;
  out.t = t;
  out.in_overlap = b.in_overlap;
  out.window = b.window;

  Field A = value(b.piece_a, t);
  Field dA = rhs(b.piece_a, t);
  const Grid& g = A.grid;

  if (!b.in_overlap) {
    out.vbar = A;
    out.dvbar = dA;
    out.rbar = Field::zeros(g, Rank::tensor2, t);
    out.drbar = Field::zeros(g, Rank::tensor2, t);
    out.vbar.t = out.dvbar.t = t;
    return out;
  }

  Field B = value(b.piece_b, t);
  Field dB = rhs(b.piece_b, t);

  out.vbar = Field::zeros(g, Rank::vector, t);
  out.dvbar = Field::zeros(g, Rank::vector, t);
  Field diff = Field::zeros(g, Rank::vector, t), ddiff = diff;
  for (int c = 0; c < g.d; ++c)
    for (std::size_t p = 0; p < A.comp[c].size(); ++p) {
      out.vbar.comp[c][p] = b.w_a * A.comp[c][p] + b.w_b * B.comp[c][p];
      out.dvbar.comp[c][p] = b.w_a * dA.comp[c][p] + b.w_b * dB.comp[c][p] +
                             b.dw_a * (A.comp[c][p] - B.comp[c][p]);
      diff.comp[c][p] = A.comp[c][p] - B.comp[c][p];
      ddiff.comp[c][p] = dA.comp[c][p] - dB.comp[c][p];
    }

  // overlap stress: chi' R(A - B) - chi(1-chi)(A-B) (x) (A-B), chi = w_a
  Field Rv = antidivergence(diff);
  Field dRv = antidivergence(ddiff);
  Field dd = multiply(diff, diff, ProductPattern::outer);
  Field dd1 = multiply(ddiff, diff, ProductPattern::outer);
  Field dd2 = multiply(diff, ddiff, ProductPattern::outer);
  double w = b.w_a * b.w_b;                     // chi(1 - chi)
  double dw = b.dw_a * (b.w_b - b.w_a);         // d/dt of chi(1-chi)
  out.rbar = Field::zeros(g, Rank::tensor2, t);
  out.drbar = Field::zeros(g, Rank::tensor2, t);
  for (int c = 0; c < g.d * g.d; ++c)
    for (std::size_t p = 0; p < out.rbar.comp[c].size(); ++p) {
      out.rbar.comp[c][p] = b.dw_a * Rv.comp[c][p] - w * dd.comp[c][p];
      out.drbar.comp[c][p] = b.d2w_a * Rv.comp[c][p] + b.dw_a * dRv.comp[c][p] -
                             dw * dd.comp[c][p] -
                             w * (dd1.comp[c][p] + dd2.comp[c][p]);
    }
  return out;
}

namespace {

double holder_np(const Field& f, int N, double alpha) {
  return holder_norm(f, N, alpha).value;
}

Field field_sub(const Field& a, const Field& b) {
  Field out = a;
  for (int c = 0; c < a.ncomp(); ++c)
    for (std::size_t p = 0; p < out.comp[c].size(); ++p)
      out.comp[c][p] -= b.comp[c][p];
  return out;
}

}  // namespace

std::vector<GlueEstimateRow> gluing_diagnostics(
    const TimePartition& part, const Schedule& s, int q, const PieceFn& value,
    const PieceFn& rhs, const std::function<Field(double)>& v_ell,
    const std::vector<double>& sample_times) {
  const ScheduleRow& r = s.row(q);
  const ScheduleRow& rn = s.row(q + 1);
  double ell = std::exp(r.log_ell);
  double eps_tau = part.eps_tau;
  double delta_q = std::exp(r.log_delta);
  double delta_n = std::exp(rn.log_delta);
  double lambda_q = std::exp(r.log_lambda);
  const double alpha = 0.4;

  struct Acc {
    double measured = 0.0;
    double rhs = 0.0;
  };
  std::map<std::string, Acc> acc;
  auto note = [&](const std::string& id, double meas, double bound) {
    auto& a = acc[id];
    a.measured = std::max(a.measured, meas);
    a.rhs = bound;
  };

  for (double t : sample_times) {
    GluedSample gs = glue_sample(part, t, value, rhs);
    Field vl = v_ell(t);
    Field dv = field_sub(gs.vbar, vl);
    for (int N : {0, 1}) {
      double pw = std::pow(ell, -N - 1 + alpha);
      note("glue1_vbar_minus_vell_N" + std::to_string(N), holder_np(dv, N, alpha),
           eps_tau * delta_n * pw);
      note("glue2_vbar_N" + std::to_string(N), holder_np(gs.vbar, N + 1, alpha),
           std::sqrt(delta_q) * lambda_q * std::pow(ell, -N));
      if (gs.in_overlap) {
        note("glue3_rbar_N" + std::to_string(N), holder_np(gs.rbar, N, alpha),
             delta_n * std::pow(ell, -N + alpha));
        // material derivative of the glued stress
        Field adv = multiply(gs.vbar, gs.rbar, ProductPattern::dot_grad);
        Field Dt = gs.drbar;
        for (int c = 0; c < Dt.ncomp(); ++c)
          for (std::size_t p = 0; p < Dt.comp[c].size(); ++p)
            Dt.comp[c][p] += adv.comp[c][p];
        note("glue4_DtRbar_N" + std::to_string(N), holder_np(Dt, N, alpha),
             delta_n * std::pow(ell, -N + alpha) / eps_tau);
      }
    }
    if (gs.in_overlap) {
      // potential-level distance z_piece - z_ell for both active pieces
      auto b = part.blend_at(t);
      for (long piece : {b.piece_a, b.piece_b}) {
        Field zp = biot_savart(value(piece, t));
        Field zl = biot_savart(vl);
        Field dz = field_sub(zp, zl);
        for (int N : {0, 1})
          note("zglue_N" + std::to_string(N), holder_np(dz, N, alpha),
               eps_tau * delta_n * std::pow(ell, -N + alpha));
      }
      note("glue5_vbar_minus_vell_alpha", holder_np(dv, 0, alpha),
           std::sqrt(delta_n) * std::pow(ell, alpha));
    }
  }

  std::vector<GlueEstimateRow> rows;
  for (const auto& [id, a] : acc) {
    GlueEstimateRow row;
    row.id = id;
    row.n = id.back() == '1' ? 1 : 0;
    row.measured = a.measured;
    row.rhs = a.rhs;
    row.degenerate = a.measured < 1e-14;
    row.ratio = row.degenerate ? 0.0 : a.measured / a.rhs;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace wildflow
