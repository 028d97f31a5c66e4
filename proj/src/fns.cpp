#include "wildflow/fns.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace wildflow {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<cplx_vec> to_modes(const Field& f) {
  std::vector<cplx_vec> m;
  for (int c = 0; c < f.ncomp(); ++c) m.push_back(modes_of(f, c));
  return m;
}

Field from_modes(const Grid& g, Rank r, const std::vector<cplx_vec>& m, double t) {
  Field f = Field::zeros(g, r, t);
  for (int c = 0; c < f.ncomp(); ++c) f.comp[c] = fft_inverse(g, m[c]);
  return f;
}

void truncate_band(const Grid& g, std::vector<cplx_vec>& m) {
  int kc = dealias_kmax(g);
  for (auto& comp : m)
    for_each_mode(g, [&](std::size_t flat, const int* k) {
      for (int ax = 0; ax < g.d; ++ax)
        if (std::abs(k[ax]) > kc) { comp[flat] = 0.0; return; }
    });
}

void leray_modes(const Grid& g, std::vector<cplx_vec>& m) {
  for_each_mode(g, [&](std::size_t flat, const int* k) {
    double k2 = 0.0;
    for (int ax = 0; ax < g.d; ++ax) k2 += static_cast<double>(k[ax]) * k[ax];
    if (k2 < 0.5) return;
    cplx dot(0, 0);
    for (int ax = 0; ax < g.d; ++ax) dot += m[ax][flat] * static_cast<double>(k[ax]);
    for (int ax = 0; ax < g.d; ++ax) m[ax][flat] -= dot * static_cast<double>(k[ax]) / k2;
  });
}

}  // namespace

FnsSolver::FnsSolver(const Field& u0, double nu, double gamma, Forcing forcing)
    : grid_(u0.grid), nu_(nu), gamma_(gamma), t_(u0.t), forcing_(std::move(forcing)) {
  if (u0.rank != Rank::vector)
    throw std::invalid_argument("FnsSolver: initial data must be a vector field");
  modes_ = to_modes(u0);
  truncate_band(grid_, modes_);
  leray_modes(grid_, modes_);
  sup0_ = velocity().max_abs();
  guard_ref_ = sup0_;
  if (forcing_) f_scale_ = forcing_(t_).max_abs();
}

void FnsSolver::refresh_factors(double dt) {
  if (dt == cached_dt_) return;
  cached_dt_ = dt;
  std::size_t np = grid_.points();
  e_half_.assign(np, 1.0);
  e_full_.assign(np, 1.0);
  for_each_mode(grid_, [&](std::size_t flat, const int* k) {
    double k2 = 0.0;
    for (int ax = 0; ax < grid_.d; ++ax) k2 += static_cast<double>(k[ax]) * k[ax];
    if (k2 < 0.5) return;
    double lam = nu_ * std::pow(kTwoPi * kTwoPi * k2, gamma_);
    e_half_[flat] = std::exp(-0.5 * lam * dt);
    e_full_[flat] = std::exp(-lam * dt);
  });
}

std::vector<cplx_vec> FnsSolver::nonlinear(const std::vector<cplx_vec>& m,
                                           double t) const {
  const int d = grid_.d;
  std::vector<real_vec> u(d);
  for (int c = 0; c < d; ++c) u[c] = fft_inverse(grid_, m[c]);
  std::vector<cplx_vec> out(d, cplx_vec(grid_.points(), cplx(0, 0)));
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      real_vec prod(grid_.points());
      for (std::size_t p = 0; p < prod.size(); ++p) prod[p] = u[i][p] * u[j][p];
      cplx_vec ph = fft_forward(grid_, prod);
      // -(div of u (x) u)^i = -d_j (u^j u^i); the (i,j) product feeds both slots
      for_each_mode(grid_, [&](std::size_t flat, const int* k) {
        double kj = (std::abs(k[j]) == grid_.n / 2) ? 0.0 : k[j];
        double ki = (std::abs(k[i]) == grid_.n / 2) ? 0.0 : k[i];
        out[i][flat] -= cplx(0.0, kTwoPi * kj) * ph[flat];
        if (i != j) out[j][flat] -= cplx(0.0, kTwoPi * ki) * ph[flat];
      });
    }
  if (forcing_) {
    Field f = forcing_(t);
    for (int c = 0; c < d; ++c) {
      cplx_vec fm = modes_of(f, c);
      for (std::size_t p = 0; p < fm.size(); ++p) out[c][p] += fm[p];
    }
  }
  truncate_band(grid_, out);
  leray_modes(grid_, out);
  return out;
}

void FnsSolver::step(double dt) {
  const int d = grid_.d;
  double sup = velocity().max_abs();
  if (std::abs(dt) * sup > 0.5 / grid_.n)
    throw std::runtime_error("FnsSolver: CFL violation, dt max|u| n = " +
                             std::to_string(dt * sup * grid_.n));
  double ref = std::max(guard_ref_, f_scale_);
  if (ref > 0.0 && sup > 10.0 * ref)
    throw std::runtime_error("FnsSolver: blow-up guard tripped (norm grew 10x); "
                             "local-existence horizon exceeded");
  refresh_factors(dt);

  auto scale = [&](const std::vector<cplx_vec>& m, const std::vector<double>& e) {
    std::vector<cplx_vec> out = m;
    for (int c = 0; c < d; ++c)
      for (std::size_t p = 0; p < out[c].size(); ++p) out[c][p] *= e[p];
    return out;
  };
  auto axpy = [&](std::vector<cplx_vec> a, double s, const std::vector<cplx_vec>& b) {
    for (int c = 0; c < d; ++c)
      for (std::size_t p = 0; p < a[c].size(); ++p) a[c][p] += s * b[c][p];
    return a;
  };

  auto k1 = nonlinear(modes_, t_);
  auto v2 = scale(axpy(modes_, 0.5 * dt, k1), e_half_);
  auto k2 = nonlinear(v2, t_ + 0.5 * dt);
  auto v3 = axpy(scale(modes_, e_half_), 0.5 * dt, k2);
  auto k3 = nonlinear(v3, t_ + 0.5 * dt);
  auto v4 = axpy(scale(modes_, e_full_), dt, scale(k3, e_half_));
  auto k4 = nonlinear(v4, t_ + dt);

  std::vector<cplx_vec> next = scale(modes_, e_full_);
  auto k1e = scale(k1, e_full_);
  auto k2e = scale(k2, e_half_);
  auto k3e = scale(k3, e_half_);
  for (int c = 0; c < d; ++c)
    for (std::size_t p = 0; p < next[c].size(); ++p)
      next[c][p] += dt / 6.0 * (k1e[c][p] + 2.0 * (k2e[c][p] + k3e[c][p]) + k4[c][p]);
  modes_ = std::move(next);
  leray_modes(grid_, modes_);
  t_ += dt;
}

Field FnsSolver::velocity() const {
  return from_modes(grid_, Rank::vector, modes_, t_);
}

Field FnsSolver::rhs() const {
  auto n = nonlinear(modes_, t_);
  for_each_mode(grid_, [&](std::size_t flat, const int* k) {
    double k2 = 0.0;
    for (int ax = 0; ax < grid_.d; ++ax) k2 += static_cast<double>(k[ax]) * k[ax];
    if (k2 < 0.5) return;
    double lam = nu_ * std::pow(kTwoPi * kTwoPi * k2, gamma_);
    for (int c = 0; c < grid_.d; ++c) n[c][flat] -= lam * modes_[c][flat];
  });
  return from_modes(grid_, Rank::vector, n, t_);
}

Field Trajectory::rhs_of(const Field& v) const {
  FnsSolver s(v, nu, gamma);
  return s.rhs();
}

Field Trajectory::at_time(double t) const {
  double eps = 1e-9 * std::max(dt, 1e-30);
  if (t < t0 - eps || t > t_end() + eps)
    throw std::out_of_range("Trajectory::at_time: t outside the stored range");
  double x = (t - t0) / dt;
  int i = static_cast<int>(std::floor(x));
  if (i >= size() - 1) i = size() - 2;
  if (i < 0) i = 0;
  double s = x - i;
  if (std::abs(s) < 1e-12) {
    Field f = states[i];
    f.t = t;
    return f;
  }
  if (std::abs(s - 1.0) < 1e-12) {
    Field f = states[i + 1];
    f.t = t;
    return f;
  }
  Field f0 = states[i], f1 = states[i + 1];
  Field m0 = rhs_of(f0), m1 = rhs_of(f1);
  double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
  double h10 = s * (1 - s) * (1 - s);
  double h01 = s * s * (3 - 2 * s);
  double h11 = s * s * (s - 1);
  Field out = Field::zeros(grid, Rank::vector, t);
  for (int c = 0; c < grid.d; ++c)
    for (std::size_t p = 0; p < out.comp[c].size(); ++p)
      out.comp[c][p] = h00 * f0.comp[c][p] + h10 * dt * m0.comp[c][p] +
                       h01 * f1.comp[c][p] + h11 * dt * m1.comp[c][p];
  return out;
}

Trajectory solve_fns(const Field& u0, double nu, double gamma, double t0,
                     double horizon, double dt, int save_every, Forcing forcing,
                     double horizon_c, bool enforce_horizon) {
  if (dt <= 0.0 || horizon <= 0.0)
    throw std::invalid_argument("solve_fns: dt and horizon must be positive");
  if (enforce_horizon) {
    auto h = holder_norm(u0, 1, 0.4);
    if (horizon > horizon_c / std::max(h.value, 1e-30))
      throw std::invalid_argument(
          "solve_fns: horizon " + std::to_string(horizon) +
          " exceeds the local-existence window " +
          std::to_string(horizon_c / std::max(h.value, 1e-30)));
  }
  long nsteps = std::lround(horizon / dt);
  if (nsteps < 1) nsteps = 1;
  double dt_eff = horizon / static_cast<double>(nsteps);

  FnsSolver solver(u0, nu, gamma, std::move(forcing));
  Trajectory tr;
  tr.grid = u0.grid;
  tr.nu = nu;
  tr.gamma = gamma;
  tr.t0 = t0;
  tr.dt = dt_eff * save_every;
  Field first = solver.velocity();
  first.t = t0;
  tr.states.push_back(first);
  for (long s = 1; s <= nsteps; ++s) {
    solver.step(dt_eff);
    if (s % save_every == 0 || s == nsteps) {
      Field v = solver.velocity();
      v.t = t0 + dt_eff * s;
      tr.states.push_back(v);
    }
  }
  return tr;
}

double fnsr_residual_sup(const Field& v, const Field& dvdt, const Field& R,
                         double nu, double gamma) {
  Field diss = frac_laplacian(v, gamma, nu);
  Field vv = multiply(v, v, ProductPattern::outer);
  Field conv = derive(vv, DeriveOp::div);
  Field divR = derive(R, DeriveOp::div);
  Field resid = Field::zeros(v.grid, Rank::vector, v.t);
  for (int c = 0; c < v.grid.d; ++c)
    for (std::size_t p = 0; p < resid.comp[c].size(); ++p)
      resid.comp[c][p] = dvdt.comp[c][p] + diss.comp[c][p] + conv.comp[c][p] -
                         divR.comp[c][p];
  HodgeParts hp = hodge_project(resid);
  double worst = 0.0;
  for (int c = 0; c < v.grid.d; ++c)
    for (std::size_t p = 0; p < resid.comp[c].size(); ++p)
      worst = std::max(worst, std::abs(hp.p2.comp[c][p] + hp.p3.comp[c][p]));
  return worst;
}

StressTrajectory residual_stress(const Trajectory& tr, const Forcing* forcing) {
  int n = tr.size();
  if (n < 5)
    throw std::invalid_argument(
        "residual_stress: time grid under-resolved for 4th-order differentiation");
  StressTrajectory out;
  const Grid& g = tr.grid;
  auto deriv_at = [&](int i) {
    Field dv = Field::zeros(g, Rank::vector, tr.states[i].t);
    auto acc = [&](int j, double w) {
      for (int c = 0; c < g.d; ++c)
        for (std::size_t p = 0; p < dv.comp[c].size(); ++p)
          dv.comp[c][p] += w * tr.states[j].comp[c][p];
    };
    double h = tr.dt;
    if (i >= 2 && i <= n - 3) {
      acc(i - 2, 1.0 / (12 * h));
      acc(i - 1, -8.0 / (12 * h));
      acc(i + 1, 8.0 / (12 * h));
      acc(i + 2, -1.0 / (12 * h));
    } else if (i < 2) {
      acc(i, -25.0 / (12 * h));
      acc(i + 1, 48.0 / (12 * h));
      acc(i + 2, -36.0 / (12 * h));
      acc(i + 3, 16.0 / (12 * h));
      acc(i + 4, -3.0 / (12 * h));
    } else {
      acc(i, 25.0 / (12 * h));
      acc(i - 1, -48.0 / (12 * h));
      acc(i - 2, 36.0 / (12 * h));
      acc(i - 3, -16.0 / (12 * h));
      acc(i - 4, 3.0 / (12 * h));
    }
    return dv;
  };

  for (int i = 0; i < n; ++i) {
    const Field& v = tr.states[i];
    Field dvdt = deriv_at(i);
    Field diss = frac_laplacian(v, tr.gamma, tr.nu);
    Field vv = multiply(v, v, ProductPattern::outer);
    Field conv = derive(vv, DeriveOp::div);
    Field r = Field::zeros(g, Rank::vector, v.t);
    for (int c = 0; c < g.d; ++c)
      for (std::size_t p = 0; p < r.comp[c].size(); ++p)
        r.comp[c][p] = dvdt.comp[c][p] + diss.comp[c][p] + conv.comp[c][p];
    if (forcing && *forcing) {
      Field f = (*forcing)(v.t);
      for (int c = 0; c < g.d; ++c)
        for (std::size_t p = 0; p < r.comp[c].size(); ++p)
          r.comp[c][p] -= f.comp[c][p];
    }
    HodgeParts hp = hodge_project(r);
    Field rp = Field::zeros(g, Rank::vector, v.t);
    for (int c = 0; c < g.d; ++c)
      for (std::size_t p = 0; p < rp.comp[c].size(); ++p)
        rp.comp[c][p] = hp.p2.comp[c][p] + hp.p3.comp[c][p];
    Field R = antidivergence(rp);
    Field divR = derive(R, DeriveOp::div);
    double worst = 0.0;
    for (int c = 0; c < g.d; ++c) {
      double mean = rp.mean(c);
      for (std::size_t p = 0; p < divR.comp[c].size(); ++p)
        worst = std::max(worst, std::abs(divR.comp[c][p] - (rp.comp[c][p] - mean)));
    }
    out.R.push_back(std::move(R));
    out.residual_sup.push_back(worst);
  }
  return out;
}

InitialData make_initial_data(Trajectory V1, Trajectory V2, double ramp_lo,
                              double ramp_hi, double T) {
  if (!(ramp_lo >= T / 3.0 - 1e-12 && ramp_hi <= 2.0 * T / 5.0 + 1e-12 &&
        ramp_lo < ramp_hi))
    throw std::invalid_argument(
        "make_initial_data: cutoff ramp must sit inside [T/3, 2T/5]");
  if (!(V1.grid == V2.grid))
    throw std::invalid_argument("make_initial_data: grids differ");
  for (int i = 0; i < V1.size(); i += std::max(1, V1.size() / 8)) {
    Field d1 = V1.states[i];
    Field d2 = V2.at_time(d1.t);
    for (int c = 0; c < V1.grid.d; ++c)
      if (std::abs(d1.mean(c) - d2.mean(c)) > 1e-10)
        throw std::invalid_argument(
            "make_initial_data: V1 - V2 has nonzero mean at t = " +
            std::to_string(d1.t));
  }
  InitialData out{std::move(V1), std::move(V2), SmoothRamp{ramp_lo, ramp_hi}};
  return out;
}

Field InitialData::v_at(double t) const {
  double e = eta(t);
  if (e >= 1.0) return V1.at_time(t);
  if (e <= 0.0) return V2.at_time(t);
  Field v1 = V1.at_time(t), v2 = V2.at_time(t);
  Field out = Field::zeros(v1.grid, Rank::vector, t);
  for (int c = 0; c < v1.grid.d; ++c)
    for (std::size_t p = 0; p < out.comp[c].size(); ++p)
      out.comp[c][p] = e * v1.comp[c][p] + (1.0 - e) * v2.comp[c][p];
  return out;
}

FnsrPair InitialData::pair_at(double t) const {
  FnsrPair pr;
  pr.t = t;
  pr.v = v_at(t);
  double e = eta(t), de = eta_deriv(t);
  if (de == 0.0 && (e >= 1.0 || e <= 0.0)) {
    pr.R = Field::zeros(pr.v.grid, Rank::tensor2, t);
    return pr;
  }
  Field v1 = V1.at_time(t), v2 = V2.at_time(t);
  Field diff = Field::zeros(v1.grid, Rank::vector, t);
  for (int c = 0; c < v1.grid.d; ++c)
    for (std::size_t p = 0; p < diff.comp[c].size(); ++p)
      diff.comp[c][p] = v1.comp[c][p] - v2.comp[c][p];
  Field Rv = antidivergence(diff);
  Field dd = multiply(diff, diff, ProductPattern::outer);
  pr.R = Field::zeros(v1.grid, Rank::tensor2, t);
  double w = e * (1.0 - e);
  for (int c = 0; c < v1.grid.d * v1.grid.d; ++c)
    for (std::size_t p = 0; p < pr.R.comp[c].size(); ++p)
      pr.R.comp[c][p] = de * Rv.comp[c][p] - w * dd.comp[c][p];
  return pr;
}

Field InitialData::dvdt_at(double t) const {
  double e = eta(t), de = eta_deriv(t);
  Field v1 = V1.at_time(t), v2 = V2.at_time(t);
  Field r1 = V1.rhs_of(v1), r2 = V2.rhs_of(v2);
  Field out = Field::zeros(v1.grid, Rank::vector, t);
  for (int c = 0; c < v1.grid.d; ++c)
    for (std::size_t p = 0; p < out.comp[c].size(); ++p)
      out.comp[c][p] = e * r1.comp[c][p] + (1.0 - e) * r2.comp[c][p] +
                       de * (v1.comp[c][p] - v2.comp[c][p]);
  return out;
}

Field InitialData::dRdt_at(double t) const {
  const Grid& g = V1.grid;
  double e = eta(t), de = eta_deriv(t);
  double d2e = -ramp.deriv2(t);
  Field v1 = V1.at_time(t), v2 = V2.at_time(t);
  Field r1 = V1.rhs_of(v1), r2 = V2.rhs_of(v2);
  Field diff = Field::zeros(g, Rank::vector, t), ddiff = diff;
  for (int c = 0; c < g.d; ++c)
    for (std::size_t p = 0; p < diff.comp[c].size(); ++p) {
      diff.comp[c][p] = v1.comp[c][p] - v2.comp[c][p];
      ddiff.comp[c][p] = r1.comp[c][p] - r2.comp[c][p];
    }
  Field Rv = antidivergence(diff), dRv = antidivergence(ddiff);
  Field dd = multiply(diff, diff, ProductPattern::outer);
  Field dd1 = multiply(ddiff, diff, ProductPattern::outer);
  Field dd2 = multiply(diff, ddiff, ProductPattern::outer);
  double w = e * (1.0 - e), dw = de * (1.0 - 2.0 * e);
  Field out = Field::zeros(g, Rank::tensor2, t);
  for (int c = 0; c < g.d * g.d; ++c)
    for (std::size_t p = 0; p < out.comp[c].size(); ++p)
      out.comp[c][p] = d2e * Rv.comp[c][p] + de * dRv.comp[c][p] -
                       dw * dd.comp[c][p] - w * (dd1.comp[c][p] + dd2.comp[c][p]);
  return out;
}

FnsrPair time_rescale(const FnsrPair& p, double zeta) {
  if (!(zeta > 0.0)) throw std::invalid_argument("time_rescale: zeta must be positive");
  FnsrPair out;
  out.t = p.t / zeta;
  out.v = p.v;
  out.R = p.R;
  for (auto& c : out.v.comp)
    for (auto& x : c) x *= zeta;
  for (auto& c : out.R.comp)
    for (auto& x : c) x *= zeta * zeta;
  out.v.t = out.t;
  out.R.t = out.t;
  return out;
}

MollifiedPair mollify_pair(const Field& v, const Field& R, double ell) {
  MollifiedPair out;
  out.v = mollify(v, ell);
  Field Rm = mollify(R, ell);
  Field vv = multiply(v, v, ProductPattern::outer);
  Field vvm = mollify(vv, ell);
  Field vlvl = multiply(out.v, out.v, ProductPattern::outer);
  out.R = Field::zeros(v.grid, Rank::tensor2, v.t);
  for (int c = 0; c < v.grid.d * v.grid.d; ++c)
    for (std::size_t p = 0; p < out.R.comp[c].size(); ++p) {
      double comm = vlvl.comp[c][p] - vvm.comp[c][p];
      out.R.comp[c][p] = Rm.comp[c][p] + comm;
      out.commutator_sup = std::max(out.commutator_sup, std::abs(comm));
    }
  out.v.t = v.t;
  out.R.t = v.t;
  return out;
}

}  // namespace wildflow
