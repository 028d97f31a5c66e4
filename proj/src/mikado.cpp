#include "wildflow/mikado.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <stdexcept>

namespace wildflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Gauss-Legendre nodes/weights on [0,1]
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      double dp = n * (t * p1 - p0) / (t * t - 1.0);
      double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    double p0 = 1.0, p1 = t;
    for (int k = 2; k <= n; ++k) {
      double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    double dp = n * (t * p1 - p0) / (t * t - 1.0);
    x[i] = 0.5 * (t + 1.0);
    w[i] = 1.0 / ((1.0 - t * t) * dp * dp);
  }
}

double bump(double s) { return s < 1.0 ? std::exp(-1.0 / (1.0 - s * s)) : 0.0; }

double bump_deriv(double s) {
  if (s >= 1.0) return 0.0;
  double u = 1.0 - s * s;
  return bump(s) * (-2.0 * s / (u * u));
}

double sinc(double x) { return std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }

constexpr int kQuadN = 96;

// tanh-sinh nodes on (0,1); robust to the bump's endpoint singularities
void tanh_sinh(std::vector<double>& x, std::vector<double>& w) {
  x.clear();
  w.clear();
  const double h = 0.06;
  for (int i = -120; i <= 120; ++i) {
    double t = h * i;
    double sh = 0.5 * std::numbers::pi * std::sinh(t);
    double u = std::tanh(sh);                       // in (-1, 1)
    double du = 0.5 * std::numbers::pi * std::cosh(t) / std::pow(std::cosh(sh), 2);
    double xi = 0.5 * (u + 1.0);
    double wi = 0.5 * du * h;
    if (xi > 1e-17 && xi < 1.0 - 1e-17 && wi > 1e-300) {
      x.push_back(xi);
      w.push_back(wi);
    }
  }
}

double unit_sphere_area(int n) {
  if (n == 1) return 2.0;
  if (n == 2) return kTwoPi;
  if (n == 3) return 2.0 * kTwoPi;
  return 2.0 * std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0);
}

}  // namespace

double pipe_profile(double r, double rho, int dtrans) {
  double scale = std::pow(2.0, dtrans);  // zero transverse integral
  return bump(r / rho) - scale * bump(2.0 * r / rho);
}

double pipe_profile_deriv(double r, double rho, int dtrans) {
  double scale = std::pow(2.0, dtrans);
  return bump_deriv(r / rho) / rho - scale * bump_deriv(2.0 * r / rho) * 2.0 / rho;
}

namespace {

// tanh-sinh over [a,b], split externally at the profile's interior seam
template <typename F>
double quad_ts(const F& fn, double a, double b) {
  std::vector<double> x, w;
  tanh_sinh(x, w);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * fn(a + (b - a) * x[i]);
  return s * (b - a);
}

// the profile is glued from two bumps; r = rho/2 is a smoothness seam
template <typename F>
double quad_profile(const F& fn, double rho) {
  return quad_ts(fn, 0.0, 0.5 * rho) + quad_ts(fn, 0.5 * rho, rho);
}

}  // namespace

double pipe_profile_radial_ft(double kappa, double rho, int dtrans) {
  return quad_profile(
      [&](double r) {
        double f = pipe_profile(r, rho, dtrans);
        double ker = (dtrans == 2)
                         ? kTwoPi * std::cyl_bessel_j(0.0, kTwoPi * kappa * r) * r
                         : 2.0 * kTwoPi * sinc(kTwoPi * kappa * r) * r * r;
        return f * ker;
      },
      rho);
}

double pipe_profile_sq_radial_ft(double kappa, double rho, int dtrans) {
  return quad_profile(
      [&](double r) {
        double f = pipe_profile(r, rho, dtrans);
        double ker = (dtrans == 2)
                         ? kTwoPi * std::cyl_bessel_j(0.0, kTwoPi * kappa * r) * r
                         : 2.0 * kTwoPi * sinc(kTwoPi * kappa * r) * r * r;
        return f * f * ker;
      },
      rho);
}

double pipe_profile_sq_integral(double rho, int dtrans) {
  return unit_sphere_area(dtrans) *
         quad_profile(
             [&](double r) {
               double f = pipe_profile(r, rho, dtrans);
               return f * f * std::pow(r, dtrans - 1);
             },
             rho);
}

bool in_matrix_ball(const double* R, int d, double radius) {
  double s = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double v = R[i * d + j] - (i == j ? 1.0 : 0.0);
      s += v * v;
    }
  return std::sqrt(s) <= radius + 1e-12;
}

double DirectionSet::gamma2(const double* R, int j) const {
  const PipeDirection& p = dirs[j];
  auto mu = [this](double y) { return std::sqrt(y * y + mu0 * mu0); };
  switch (p.kind) {
    case PipeDirection::axis: {
      double s = R[p.ia * d + p.ia];
      for (int m = 0; m < d; ++m)
        if (m != p.ia) s -= mu(R[p.ia * d + m]);
      return s;
    }
    case PipeDirection::pair_plus:
      return mu(R[p.ia * d + p.ib]) + R[p.ia * d + p.ib];
    case PipeDirection::pair_minus:
      return mu(R[p.ia * d + p.ib]) - R[p.ia * d + p.ib];
  }
  return 0.0;
}

double DirectionSet::gamma(const double* R, int j) const {
  double g2 = gamma2(R, j);
  if (g2 <= 0.0)
    throw std::domain_error("mikado: Gamma^2 nonpositive; R outside the admissible ball");
  return std::sqrt(g2);
}

double DirectionSet::pipe_distance(int j, const double* xi, double* y_out) const {
  const PipeDirection& p = dirs[j];
  double q[4];
  double dot = 0.0;
  for (int ax = 0; ax < d; ++ax) {
    q[ax] = xi[ax] - p.shift[ax];
    dot += q[ax] * p.khat[ax];
  }
  for (int ax = 0; ax < d; ++ax) q[ax] -= dot * p.khat[ax];
  double best = 1e300;
  double ybest[4] = {0, 0, 0, 0};
  for (const auto& lam : p.lattice) {
    double s = 0.0;
    double y[4];
    for (int ax = 0; ax < d; ++ax) {
      y[ax] = q[ax] - lam[ax];
      s += y[ax] * y[ax];
    }
    if (s < best) {
      best = s;
      for (int ax = 0; ax < d; ++ax) ybest[ax] = y[ax];
    }
  }
  if (y_out)
    for (int ax = 0; ax < d; ++ax) y_out[ax] = ybest[ax];
  return std::sqrt(best);
}

double DirectionSet::psi(int j, const double* xi) const {
  double r = pipe_distance(j, xi);
  return dirs[j].amp * pipe_profile(r, r_pipe, d - 1);
}

void DirectionSet::psi_grad(int j, const double* xi, double* grad) const {
  double y[4];
  double r = pipe_distance(j, xi, y);
  for (int ax = 0; ax < d; ++ax) grad[ax] = 0.0;
  if (r < 1e-14 || r >= r_pipe) return;
  double df = dirs[j].amp * pipe_profile_deriv(r, r_pipe, d - 1);
  for (int ax = 0; ax < d; ++ax) grad[ax] = df * y[ax] / r;
}

namespace {

// distance between the periodic lines s1 + t u and s2 + t w
double line_distance(int d, const double* s1, const double* u, const double* s2,
                     const double* w) {
  double b1[4], b2[4];
  double un = 0.0;
  for (int i = 0; i < d; ++i) un += u[i] * u[i];
  un = std::sqrt(un);
  for (int i = 0; i < d; ++i) b1[i] = u[i] / un;
  double dot = 0.0;
  for (int i = 0; i < d; ++i) dot += w[i] * b1[i];
  double nn = 0.0;
  for (int i = 0; i < d; ++i) {
    b2[i] = w[i] - dot * b1[i];
    nn += b2[i] * b2[i];
  }
  bool parallel = nn < 1e-20;
  if (!parallel) {
    nn = std::sqrt(nn);
    for (int i = 0; i < d; ++i) b2[i] /= nn;
  }
  double best = 1e300;
  const int range = 2;
  std::vector<int> idx(d, -range);
  while (true) {
    double v[4];
    for (int i = 0; i < d; ++i) v[i] = s1[i] - s2[i] + idx[i];
    double d1 = 0.0, d2 = 0.0;
    for (int i = 0; i < d; ++i) d1 += v[i] * b1[i];
    if (!parallel)
      for (int i = 0; i < d; ++i) d2 += v[i] * b2[i];
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
      double r = v[i] - d1 * b1[i] - (parallel ? 0.0 : d2 * b2[i]);
      s += r * r;
    }
    best = std::min(best, s);
    int ax = d - 1;
    while (ax >= 0 && ++idx[ax] > range) idx[ax--] = -range;
    if (ax < 0) break;
  }
  return std::sqrt(best);
}

std::vector<std::array<double, 4>> transverse_lattice(int d, const double* khat) {
  std::vector<std::array<double, 4>> out;
  std::vector<int> idx(d, -3);
  while (true) {
    double dot = 0.0;
    for (int i = 0; i < d; ++i) dot += idx[i] * khat[i];
    std::array<double, 4> lam{0, 0, 0, 0};
    for (int i = 0; i < d; ++i) lam[i] = idx[i] - dot * khat[i];
    bool dup = false;
    for (const auto& o : out) {
      double s = 0.0;
      for (int i = 0; i < d; ++i) s += (o[i] - lam[i]) * (o[i] - lam[i]);
      if (s < 1e-20) { dup = true; break; }
    }
    if (!dup) out.push_back(lam);
    int ax = d - 1;
    while (ax >= 0 && ++idx[ax] > 3) idx[ax--] = -3;
    if (ax < 0) break;
  }
  return out;
}

void sphere_sample(int d, std::mt19937_64& rng, double radius, double* X) {
  auto unif = [&rng]() {
    return (static_cast<double>(rng() >> 11) + 0.5) / 9007199254740992.0;
  };
  auto gauss = [&]() {
    double u1 = unif(), u2 = unif();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  };
  double nrm = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      double v = gauss();
      X[i * d + j] = v;
      X[j * d + i] = v;
    }
  for (int i = 0; i < d * d; ++i) nrm += X[i] * X[i];
  nrm = std::sqrt(nrm);
  for (int i = 0; i < d * d; ++i) X[i] *= radius / nrm;
}

}  // namespace

DirectionSet build_direction_set(int d) {
  if (d < 3) throw std::invalid_argument("build_direction_set: requires d >= 3");
  if (d > 4) throw std::invalid_argument("build_direction_set: d > 4 unsupported at runtime");

  DirectionSet ds;
  ds.d = d;
  ds.mu0 = (d == 3) ? 0.20 : 0.14;

  for (int i = 0; i < d; ++i) {
    PipeDirection p;
    p.k.fill(0);
    p.k[i] = 1;
    p.kind = PipeDirection::axis;
    p.ia = p.ib = i;
    ds.dirs.push_back(p);
  }
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      for (int sgn : {1, -1}) {
        PipeDirection p;
        p.k.fill(0);
        p.k[i] = 1;
        p.k[j] = sgn;
        p.kind = sgn > 0 ? PipeDirection::pair_plus : PipeDirection::pair_minus;
        p.ia = i;
        p.ib = j;
        ds.dirs.push_back(p);
      }

  ds.r_pipe = 1.0 / (8.0 * ds.ndir());

  for (auto& p : ds.dirs) {
    double nn = 0.0;
    for (int i = 0; i < d; ++i) nn += static_cast<double>(p.k[i]) * p.k[i];
    p.knorm = std::sqrt(nn);
    for (int i = 0; i < d; ++i) p.khat[i] = p.k[i] / p.knorm;
    p.amp = 1.0 / std::sqrt(p.knorm * pipe_profile_sq_integral(ds.r_pipe, d - 1));
  }

  // span of {khat (x) khat} over the symmetric matrices
  int nsym = d * (d + 1) / 2;
  Eigen::MatrixXd M(nsym, ds.ndir());
  for (int j = 0; j < ds.ndir(); ++j) {
    int row = 0;
    for (int a = 0; a < d; ++a) M(row++, j) = ds.dirs[j].khat[a] * ds.dirs[j].khat[a];
    for (int a = 0; a < d; ++a)
      for (int b = a + 1; b < d; ++b)
        M(row++, j) = std::numbers::sqrt2 * ds.dirs[j].khat[a] * ds.dirs[j].khat[b];
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
  if (lu.rank() < nsym)
    throw std::runtime_error("build_direction_set: span deficiency, rank " +
                             std::to_string(lu.rank()) + " < " + std::to_string(nsym));

  // deterministic shift search on an odd sublattice
  const int grid = 16;
  std::vector<std::array<double, 4>> placed_s;
  std::vector<const PipeDirection*> placed_p;
  for (auto& p : ds.dirs) {
    double u[4];
    for (int i = 0; i < d; ++i) u[i] = p.k[i];
    bool found = false;
    std::vector<int> idx(d, 0);
    while (true) {
      std::array<double, 4> cand{0, 0, 0, 0};
      for (int i = 0; i < d; ++i) cand[i] = (2.0 * idx[i] + 1.0) / (2.0 * grid);
      bool ok = true;
      for (std::size_t q = 0; q < placed_s.size(); ++q) {
        double w[4];
        for (int i = 0; i < d; ++i) w[i] = placed_p[q]->k[i];
        if (line_distance(d, cand.data(), u, placed_s[q].data(), w) < 2.0 * ds.r_pipe) {
          ok = false;
          break;
        }
      }
      if (ok) {
        p.shift = cand;
        placed_s.push_back(cand);
        placed_p.push_back(&p);
        found = true;
        break;
      }
      int ax = d - 1;
      while (ax >= 0 && ++idx[ax] >= grid) idx[ax--] = 0;
      if (ax < 0) break;
    }
    if (!found)
      throw std::runtime_error(
          "build_direction_set: no disjoint shift found; reduce r_pipe below " +
          std::to_string(ds.r_pipe));
  }

  ds.min_line_dist = 1e300;
  for (std::size_t a = 0; a < placed_s.size(); ++a)
    for (std::size_t b = a + 1; b < placed_s.size(); ++b) {
      double ua[4], ub[4];
      for (int i = 0; i < d; ++i) {
        ua[i] = placed_p[a]->k[i];
        ub[i] = placed_p[b]->k[i];
      }
      ds.min_line_dist = std::min(
          ds.min_line_dist,
          line_distance(d, placed_s[a].data(), ua, placed_s[b].data(), ub));
    }

  for (auto& p : ds.dirs) p.lattice = transverse_lattice(d, p.khat.data());

  // Gamma positivity over the ball and the exact moment reconstruction
  std::mt19937_64 rng(2026);
  std::vector<double> R(d * d), X(d * d);
  ds.min_gamma2 = 1e300;
  for (int trial = 0; trial < 4000; ++trial) {
    double radius = (trial % 3 == 0) ? 0.5 : 0.5 * ((trial % 97) / 96.0);
    sphere_sample(d, rng, std::max(radius, 1e-6), X.data());
    for (int i = 0; i < d * d; ++i) R[i] = (i % (d + 1) == 0 ? 1.0 : 0.0) + X[i];
    double recon[16] = {0};
    for (int j = 0; j < ds.ndir(); ++j) {
      double g2 = ds.gamma2(R.data(), j);
      ds.min_gamma2 = std::min(ds.min_gamma2, g2);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          recon[a * d + b] += g2 * ds.dirs[j].khat[a] * ds.dirs[j].khat[b];
    }
    for (int i = 0; i < d * d; ++i)
      if (std::abs(recon[i] - R[i]) > 1e-12)
        throw std::runtime_error("build_direction_set: moment reconstruction failed");
  }
  if (ds.min_gamma2 <= 0.0)
    throw std::runtime_error("build_direction_set: Gamma^2 positivity failed on the ball");
  return ds;
}

void eval_mikado(const DirectionSet& ds, const double* R, const double* xi,
                 double* W_out) {
  if (!in_matrix_ball(R, ds.d))
    throw std::domain_error("eval_mikado: R outside the radius-1/2 ball around Id");
  for (int i = 0; i < ds.d; ++i) W_out[i] = 0.0;
  for (int j = 0; j < ds.ndir(); ++j) {
    double p = ds.psi(j, xi);
    if (p == 0.0) continue;
    double g = ds.gamma(R, j);
    for (int i = 0; i < ds.d; ++i) W_out[i] += g * p * ds.dirs[j].khat[i];
  }
}

void MikadoTable::a_k(int m, const double* R, cplx* out) const {
  const TableMode& tm = modes[m];
  double g = ds.gamma(R, tm.pipe);
  for (int i = 0; i < ds.d; ++i) out[i] = tm.coef * g * ds.dirs[tm.pipe].khat[i];
}

void MikadoTable::C_k(int m, const double* R, cplx* out) const {
  const TableCMode& cm = cmodes[m];
  for (int i = 0; i < ds.d * ds.d; ++i) out[i] = 0.0;
  for (const auto& [pipe, coef] : cm.terms) {
    double g2 = ds.gamma2(R, pipe);
    for (int a = 0; a < ds.d; ++a)
      for (int b = 0; b < ds.d; ++b)
        out[a * ds.d + b] += coef * g2 * ds.dirs[pipe].khat[a] * ds.dirs[pipe].khat[b];
  }
}

double MikadoTable::gamma_cheb(double g2) const {
  double t = (2.0 * g2 - cheb_lo - cheb_hi) / (cheb_hi - cheb_lo);
  double b1 = 0.0, b2 = 0.0;
  for (int i = static_cast<int>(cheb_sqrt.size()) - 1; i >= 1; --i) {
    double b0 = 2.0 * t * b1 - b2 + cheb_sqrt[i];
    b2 = b1;
    b1 = b0;
  }
  return t * b1 - b2 + cheb_sqrt[0];
}

MikadoTable tabulate_fourier(const DirectionSet& ds, int K, int m_r) {
  if (K < 4) throw std::invalid_argument("tabulate_fourier: K must be >= 4");
  if (m_r < 2) throw std::invalid_argument("tabulate_fourier: m_r must be >= 2");
  const int d = ds.d;

  // radial transforms depend only on |k|^2; cache them
  std::map<long, double> ft_cache, ft_sq_cache;
  auto ft_of = [&](long k2) {
    auto it = ft_cache.find(k2);
    if (it != ft_cache.end()) return it->second;
    double v = pipe_profile_radial_ft(std::sqrt(static_cast<double>(k2)), ds.r_pipe, d - 1);
    ft_cache[k2] = v;
    return v;
  };
  auto ft_sq_of = [&](long k2) {
    auto it = ft_sq_cache.find(k2);
    if (it != ft_sq_cache.end()) return it->second;
    double v = pipe_profile_sq_radial_ft(std::sqrt(static_cast<double>(k2)), ds.r_pipe, d - 1);
    ft_sq_cache[k2] = v;
    return v;
  };

  MikadoTable t;
  t.ds = ds;
  t.K = K;
  t.m_r = m_r;

  // candidate modes per pipe: k . k_pipe = 0, 0 < |k| <= K
  std::vector<std::vector<std::array<int, 4>>> cand(ds.ndir());
  std::vector<int> idx(d, -K);
  while (true) {
    long k2 = 0;
    for (int i = 0; i < d; ++i) k2 += static_cast<long>(idx[i]) * idx[i];
    if (k2 > 0 && k2 <= static_cast<long>(K) * K) {
      for (int j = 0; j < ds.ndir(); ++j) {
        long dot = 0;
        for (int i = 0; i < d; ++i) dot += static_cast<long>(idx[i]) * ds.dirs[j].k[i];
        if (dot == 0) {
          std::array<int, 4> kk{0, 0, 0, 0};
          for (int i = 0; i < d; ++i) kk[i] = idx[i];
          cand[j].push_back(kk);
        }
      }
    }
    int ax = d - 1;
    while (ax >= 0 && ++idx[ax] > K) idx[ax--] = -K;
    if (ax < 0) break;
  }

  // one owner per mode (balanced, deterministic, +-k consistent) so the
  // truncated pipes have disjoint spectra and the second moment stays exact
  std::map<std::array<int, 4>, std::vector<int>> owners;
  for (int j = 0; j < ds.ndir(); ++j)
    for (const auto& k : cand[j]) owners[k].push_back(j);
  std::vector<int> load(ds.ndir(), 0);
  std::map<std::array<int, 4>, int> assigned;
  for (auto& [k, js] : owners) {
    std::array<int, 4> neg{-k[0], -k[1], -k[2], -k[3]};
    auto it = assigned.find(neg);
    int pick;
    if (it != assigned.end()) {
      pick = it->second;
    } else {
      pick = js[0];
      for (int j : js)
        if (load[j] < load[pick]) pick = j;
    }
    assigned[k] = pick;
    ++load[pick];
  }

  std::vector<double> g_energy(ds.ndir(), 0.0);
  std::vector<TableMode> raw;
  for (const auto& [k, pipe] : assigned) {
    const PipeDirection& p = ds.dirs[pipe];
    long kk2 = 0;
    for (int i = 0; i < d; ++i) kk2 += static_cast<long>(k[i]) * k[i];
    double ft = ft_of(kk2);
    double phase = 0.0;
    for (int i = 0; i < d; ++i) phase -= kTwoPi * k[i] * p.shift[i];
    TableMode tm;
    tm.k = k;
    tm.pipe = pipe;
    tm.coef = p.amp * p.knorm * ft * cplx(std::cos(phase), std::sin(phase));
    g_energy[pipe] += std::norm(tm.coef);
    raw.push_back(tm);
  }
  for (int j = 0; j < ds.ndir(); ++j)
    if (g_energy[j] <= 1e-14)
      throw std::runtime_error("tabulate_fourier: pipe " + std::to_string(j) +
                               " lost all modes at K = " + std::to_string(K));
  for (auto& tm : raw) tm.coef /= std::sqrt(g_energy[tm.pipe]);
  t.modes = std::move(raw);

  // C table under the exact disjoint-pipe semantics
  std::map<std::array<int, 4>, TableCMode> cmap;
  for (int j = 0; j < ds.ndir(); ++j)
    for (const auto& k : cand[j]) {
      const PipeDirection& p = ds.dirs[j];
      long kk2 = 0;
      for (int i = 0; i < d; ++i) kk2 += static_cast<long>(k[i]) * k[i];
      double ft = ft_sq_of(kk2);
      double scale = p.amp * p.amp * p.knorm;
      double phase = 0.0;
      for (int i = 0; i < d; ++i) phase -= kTwoPi * k[i] * p.shift[i];
      auto& cm = cmap[k];
      cm.k = k;
      cm.terms.push_back({j, scale * ft * cplx(std::cos(phase), std::sin(phase))});
    }
  for (auto& [k, cm] : cmap) t.cmodes.push_back(cm);

  // decay-constant fits c_m = max |coef| |k|^m
  t.decay_c.assign(2 * d + 1, 0.0);
  for (const auto& tm : t.modes) {
    double kn = 0.0;
    for (int i = 0; i < d; ++i) kn += static_cast<double>(tm.k[i]) * tm.k[i];
    kn = std::sqrt(kn);
    for (int m = 1; m <= 2 * d; ++m)
      t.decay_c[m] = std::max(t.decay_c[m], std::abs(tm.coef) * std::pow(kn, m));
  }

  // tail estimate: coefficient mass of each pipe beyond K (transverse lattice
  // density |k_j| times the radial |F| integral), plus the renormalization
  // shift of the kept modes; all pipes contribute at a point
  const int nr = 600;
  const double rmax = 8.0 / ds.r_pipe;
  std::vector<double> absF(nr + 1);
  for (int i = 0; i <= nr; ++i)
    absF[i] = std::abs(pipe_profile_radial_ft(rmax * i / nr, ds.r_pipe, d - 1));
  auto mass_beyond = [&](double k0) {
    double acc = 0.0;
    for (int i = 0; i < nr; ++i) {
      double r0 = rmax * i / nr, r1 = rmax * (i + 1) / nr;
      if (r1 <= k0) continue;
      double meas0 = (d - 1 == 2) ? kTwoPi * r0 : 2.0 * kTwoPi * r0 * r0;
      double meas1 = (d - 1 == 2) ? kTwoPi * r1 : 2.0 * kTwoPi * r1 * r1;
      acc += 0.5 * (absF[i] * meas0 + absF[i + 1] * meas1) * (r1 - r0);
    }
    return acc;
  };
  double tail = 0.0;
  for (int j = 0; j < ds.ndir(); ++j) {
    const PipeDirection& p = ds.dirs[j];
    double kept_abs = 0.0;
    for (const auto& tm : t.modes)
      if (tm.pipe == j) kept_abs += std::abs(tm.coef) * std::sqrt(g_energy[j]);
    double missing = p.amp * p.knorm * p.knorm * mass_beyond(std::max(0.0, K - 1.0));
    double renorm = std::abs(1.0 / std::sqrt(g_energy[j]) - 1.0) * kept_abs;
    tail += missing + renorm;
  }
  t.tail_bound = 2.0 * tail + 1e-12;

  // measured residual of the truncated series against the exact pipes
  std::mt19937_64 rng(99);
  auto unif = [&rng]() {
    return (static_cast<double>(rng() >> 11) + 0.5) / 9007199254740992.0;
  };
  double resid = 0.0;
  std::vector<double> Rm(d * d, 0.0);
  for (int i = 0; i < d; ++i) Rm[i * d + i] = 1.0;
  for (int s = 0; s < 400; ++s) {
    double xi[4] = {unif(), unif(), unif(), unif()};
    double Wex[4];
    eval_mikado(ds, Rm.data(), xi, Wex);
    cplx Wk[4] = {0, 0, 0, 0};
    for (std::size_t m = 0; m < t.modes.size(); ++m) {
      cplx a[4];
      t.a_k(static_cast<int>(m), Rm.data(), a);
      double ph = 0.0;
      for (int i = 0; i < d; ++i) ph += kTwoPi * t.modes[m].k[i] * xi[i];
      cplx e(std::cos(ph), std::sin(ph));
      for (int i = 0; i < d; ++i) Wk[i] += a[i] * e;
    }
    for (int i = 0; i < d; ++i)
      resid = std::max(resid, std::abs(Wk[i].real() - Wex[i]));
  }
  t.series_residual = resid;
  if (resid > t.tail_bound)
    throw std::runtime_error("tabulate_fourier: series residual " +
                             std::to_string(resid) + " above the tail bound " +
                             std::to_string(t.tail_bound) + " at K = " +
                             std::to_string(K));

  // Chebyshev fit of sqrt on the realized Gamma^2 range (speed path only)
  double g_lo = 0.5 * ds.min_gamma2, g_hi = 0.0;
  std::vector<double> Rs(d * d);
  for (int trial = 0; trial < 500; ++trial) {
    double X[16];
    sphere_sample(d, rng, std::max(0.5 * unif(), 1e-6), X);
    for (int i = 0; i < d * d; ++i) Rs[i] = (i % (d + 1) == 0 ? 1.0 : 0.0) + X[i];
    for (int j = 0; j < ds.ndir(); ++j)
      g_hi = std::max(g_hi, ds.gamma2(Rs.data(), j));
  }
  g_hi = 1.1 * g_hi;
  int deg = m_r;
  t.cheb_lo = g_lo;
  t.cheb_hi = g_hi;
  t.cheb_sqrt.assign(deg + 1, 0.0);
  for (int i = 0; i <= deg; ++i) {
    double acc = 0.0;
    for (int n = 0; n <= deg; ++n) {
      double th = std::numbers::pi * (n + 0.5) / (deg + 1);
      double x = std::cos(th);
      double val = std::sqrt(0.5 * (x * (g_hi - g_lo) + g_lo + g_hi));
      acc += val * std::cos(i * th);
    }
    t.cheb_sqrt[i] = (i == 0 ? 1.0 : 2.0) * acc / (deg + 1);
  }
  for (int s = 0; s <= 1000; ++s) {
    double x = g_lo + (g_hi - g_lo) * s / 1000.0;
    t.cheb_max_err = std::max(t.cheb_max_err, std::abs(t.gamma_cheb(x) - std::sqrt(x)));
  }
  return t;
}

void corrector_tensor(const MikadoTable& t, int mode_index, const double* R,
                      cplx* out) {
  const int d = t.ds.d;
  const auto& k = t.modes[mode_index].k;
  double k2 = 0.0;
  for (int i = 0; i < d; ++i) k2 += static_cast<double>(k[i]) * k[i];
  if (k2 < 0.5) throw std::invalid_argument("corrector_tensor: k = 0");
  cplx a[4];
  t.a_k(mode_index, R, a);
  cplx inv = 1.0 / (cplx(0.0, kTwoPi) * k2);
  for (int p = 0; p < d; ++p)
    for (int q = 0; q < d; ++q)
      out[p * d + q] = (static_cast<double>(k[p]) * a[q] -
                        static_cast<double>(k[q]) * a[p]) * inv;
}

namespace {

constexpr char kTblMagic[4] = {'W', 'M', 'I', 'K'};
constexpr std::uint32_t kTblVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void write_mikado_table(const std::filesystem::path& path, const MikadoTable& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write mikado table: " + path.string());
  os.write(kTblMagic, 4);
  put(os, kTblVersion);
  put(os, static_cast<std::uint32_t>(t.ds.d));
  put(os, static_cast<std::uint32_t>(t.K));
  put(os, static_cast<std::uint32_t>(t.m_r));
  put(os, static_cast<std::uint32_t>(t.modes.size()));
  put(os, static_cast<std::uint32_t>(t.cmodes.size()));
  for (const auto& m : t.modes) {
    for (int i = 0; i < 4; ++i) put(os, static_cast<std::int32_t>(m.k[i]));
    put(os, static_cast<std::int32_t>(m.pipe));
    put(os, m.coef.real());
    put(os, m.coef.imag());
  }
  for (const auto& c : t.cmodes) {
    for (int i = 0; i < 4; ++i) put(os, static_cast<std::int32_t>(c.k[i]));
    put(os, static_cast<std::uint32_t>(c.terms.size()));
    for (const auto& [pipe, coef] : c.terms) {
      put(os, static_cast<std::int32_t>(pipe));
      put(os, coef.real());
      put(os, coef.imag());
    }
  }
  if (!os) throw std::runtime_error("mikado table write failed");
}

MikadoTable read_mikado_table(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read mikado table: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (std::memcmp(magic, kTblMagic, 4) != 0)
    throw std::runtime_error("bad mikado table magic");
  if (get<std::uint32_t>(is) != kTblVersion)
    throw std::runtime_error("unsupported mikado table version");
  int d = static_cast<int>(get<std::uint32_t>(is));
  MikadoTable t;
  t.ds = build_direction_set(d);
  t.K = static_cast<int>(get<std::uint32_t>(is));
  t.m_r = static_cast<int>(get<std::uint32_t>(is));
  std::uint32_t nm = get<std::uint32_t>(is), nc = get<std::uint32_t>(is);
  t.modes.resize(nm);
  for (auto& m : t.modes) {
    for (int i = 0; i < 4; ++i) m.k[i] = get<std::int32_t>(is);
    m.pipe = get<std::int32_t>(is);
    double re = get<double>(is), im = get<double>(is);
    m.coef = cplx(re, im);
  }
  t.cmodes.resize(nc);
  for (auto& c : t.cmodes) {
    for (int i = 0; i < 4; ++i) c.k[i] = get<std::int32_t>(is);
    std::uint32_t nt = get<std::uint32_t>(is);
    c.terms.resize(nt);
    for (auto& term : c.terms) {
      term.first = get<std::int32_t>(is);
      double re = get<double>(is), im = get<double>(is);
      term.second = cplx(re, im);
    }
  }
  if (!is) throw std::runtime_error("mikado table truncated");
  return t;
}

}  // namespace wildflow
