#include "wildflow/calculus.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace wildflow {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<cplx_vec> vector_modes(const Field& v) {
  std::vector<cplx_vec> m;
  for (int c = 0; c < v.ncomp(); ++c) m.push_back(modes_of(v, c));
  return m;
}

}  // namespace

Field frac_laplacian(const Field& f, double gamma, double nu, ZeroModePolicy zp) {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw std::invalid_argument("frac_laplacian: gamma must lie in (0,1]");
  const Grid& g = f.grid;
  Field out = Field::zeros(g, f.rank, f.t);
  for (int c = 0; c < f.ncomp(); ++c) {
    cplx_vec m = modes_of(f, c);
    for_each_mode(g, [&](std::size_t flat, const int* k) {
      double k2 = 0.0;
      for (int ax = 0; ax < g.d; ++ax) k2 += static_cast<double>(k[ax]) * k[ax];
      if (k2 < 0.5) {
        if (zp == ZeroModePolicy::annihilate) m[flat] = 0.0;
        else if (zp == ZeroModePolicy::error && std::abs(m[flat]) > 1e-14)
          throw std::invalid_argument("frac_laplacian: nonzero mean under error policy");
        return;
      }
      m[flat] *= nu * std::pow(kTwoPi * kTwoPi * k2, gamma);
    });
    out.comp[c] = fft_inverse(g, m);
    out.four.push_back(std::move(m));
  }
  return out;
}

Field inv_laplacian(const Field& f) {
  const Grid& g = f.grid;
  Field out = Field::zeros(g, f.rank, f.t);
  for (int c = 0; c < f.ncomp(); ++c) {
    cplx_vec m = modes_of(f, c);
    for_each_mode(g, [&](std::size_t flat, const int* k) {
      double k2 = 0.0;
      for (int ax = 0; ax < g.d; ++ax) k2 += static_cast<double>(k[ax]) * k[ax];
      if (k2 < 0.5) { m[flat] = 0.0; return; }
      m[flat] /= kTwoPi * kTwoPi * k2;
    });
    out.comp[c] = fft_inverse(g, m);
    out.four.push_back(std::move(m));
  }
  return out;
}

HodgeParts hodge_project(const Field& v) {
  if (v.rank != Rank::vector && v.rank != Rank::form1)
    throw std::invalid_argument("hodge_project: needs a vector field or 1-form");
  const Grid& g = v.grid;
  const int d = g.d;
  auto mm = vector_modes(v);
  std::vector<cplx_vec> m1(d, cplx_vec(g.points(), cplx(0, 0))), m2 = m1, m3 = m1;
  for_each_mode(g, [&](std::size_t flat, const int* k) {
    double k2 = 0.0;
    for (int ax = 0; ax < d; ++ax) k2 += static_cast<double>(k[ax]) * k[ax];
    if (k2 < 0.5) {
      for (int ax = 0; ax < d; ++ax) m3[ax][flat] = mm[ax][flat];
      return;
    }
    cplx dot(0, 0);
    for (int ax = 0; ax < d; ++ax) dot += mm[ax][flat] * static_cast<double>(k[ax]);
    for (int ax = 0; ax < d; ++ax) {
      cplx grad_part = dot * static_cast<double>(k[ax]) / k2;
      m1[ax][flat] = grad_part;
      m2[ax][flat] = mm[ax][flat] - grad_part;
    }
  });
  HodgeParts hp{Field::zeros(g, v.rank, v.t), Field::zeros(g, v.rank, v.t),
                Field::zeros(g, v.rank, v.t)};
  for (int ax = 0; ax < d; ++ax) {
    hp.p1.comp[ax] = fft_inverse(g, m1[ax]);
    hp.p2.comp[ax] = fft_inverse(g, m2[ax]);
    hp.p3.comp[ax] = fft_inverse(g, m3[ax]);
    hp.p1.four.push_back(std::move(m1[ax]));
    hp.p2.four.push_back(std::move(m2[ax]));
    hp.p3.four.push_back(std::move(m3[ax]));
  }
  return hp;
}

Field leray_project(const Field& v) {
  const Grid& g = v.grid;
  const int d = g.d;
  auto mm = vector_modes(v);
  for_each_mode(g, [&](std::size_t flat, const int* k) {
    double k2 = 0.0;
    for (int ax = 0; ax < d; ++ax) k2 += static_cast<double>(k[ax]) * k[ax];
    if (k2 < 0.5) return;  // keep the mean
    cplx dot(0, 0);
    for (int ax = 0; ax < d; ++ax) dot += mm[ax][flat] * static_cast<double>(k[ax]);
    for (int ax = 0; ax < d; ++ax) mm[ax][flat] -= dot * static_cast<double>(k[ax]) / k2;
  });
  Field out = Field::zeros(g, v.rank, v.t);
  for (int ax = 0; ax < d; ++ax) {
    out.comp[ax] = fft_inverse(g, mm[ax]);
    out.four.push_back(std::move(mm[ax]));
  }
  return out;
}

Field antidivergence(const Field& v) {
  if (v.rank != Rank::vector && v.rank != Rank::form1)
    throw std::invalid_argument("antidivergence: needs a vector field or 1-form");
  const Grid& g = v.grid;
  const int d = g.d;
  auto mm = vector_modes(v);
  std::vector<cplx_vec> out(d * d, cplx_vec(g.points(), cplx(0, 0)));
  const double cd = static_cast<double>(d - 2) / (d - 1);
  // (Rv)_ij = i [ cd xi_i xi_j (xi.v)/|xi|^4 + d_ij (xi.v)/((d-1)|xi|^2)
  //             - (xi_i v_j + xi_j v_i)/|xi|^2 ]
  for_each_mode(g, [&](std::size_t flat, const int* k) {
    double k2 = 0.0;
    for (int ax = 0; ax < d; ++ax) k2 += static_cast<double>(k[ax]) * k[ax];
    if (k2 < 0.5) return;
    double xi2 = kTwoPi * kTwoPi * k2;
    cplx a(0, 0);
    double xi[4];
    cplx vv[4];
    for (int ax = 0; ax < d; ++ax) {
      xi[ax] = kTwoPi * k[ax];
      vv[ax] = mm[ax][flat];
      a += xi[ax] * vv[ax];
    }
    cplx a4 = a * (cd / (xi2 * xi2));
    cplx a2 = a / ((d - 1) * xi2);
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        cplx val = xi[i] * xi[j] * a4 - (xi[i] * vv[j] + xi[j] * vv[i]) / xi2;
        if (i == j) val += a2;
        val = cplx(-val.imag(), val.real());  // multiply by i
        out[i * d + j][flat] = val;
        out[j * d + i][flat] = val;
      }
  });
  Field t = Field::zeros(g, Rank::tensor2, v.t);
  for (int c = 0; c < d * d; ++c) {
    t.comp[c] = fft_inverse(g, out[c]);
    t.four.push_back(std::move(out[c]));
  }
  return t;
}

Field biot_savart(const Field& v) {
  if (v.rank != Rank::vector && v.rank != Rank::form1)
    throw std::invalid_argument("biot_savart: needs a vector field");
  const Grid& g = v.grid;
  const int d = g.d;
  auto mm = vector_modes(v);
  // only the strict upper triangle is independent (antisymmetry)
  std::vector<cplx_vec> upper;
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) pairs.push_back({i, j});
  upper.assign(pairs.size(), cplx_vec(g.points(), cplx(0, 0)));
  for_each_mode(g, [&](std::size_t flat, const int* k) {
    double k2 = 0.0;
    for (int ax = 0; ax < d; ++ax) k2 += static_cast<double>(k[ax]) * k[ax];
    if (k2 < 0.5) return;
    double xi2 = kTwoPi * kTwoPi * k2;
    for (std::size_t q = 0; q < pairs.size(); ++q) {
      auto [i, j] = pairs[q];
      // z_ij = (1/xi2) * i(xi_i v_j - xi_j v_i)
      cplx val = cplx(0.0, kTwoPi * k[i]) * mm[j][flat] -
                 cplx(0.0, kTwoPi * k[j]) * mm[i][flat];
      upper[q][flat] = val / xi2;
    }
  });
  Field z = Field::zeros(g, Rank::form2, v.t);
  z.four.assign(d * d, cplx_vec(g.points(), cplx(0, 0)));
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    auto [i, j] = pairs[q];
    z.comp[i * d + j] = fft_inverse(g, upper[q]);
    for (std::size_t p = 0; p < z.comp[0].size(); ++p)
      z.comp[j * d + i][p] = -z.comp[i * d + j][p];
    for (std::size_t p = 0; p < upper[q].size(); ++p)
      z.four[j * d + i][p] = -upper[q][p];
    z.four[i * d + j] = std::move(upper[q]);
  }
  return z;
}

double divergence_sup(const Field& v) {
  return derive(v, DeriveOp::div).max_abs();
}

double p1_symmetry_residual(const Field& X, const Field& Y, double div_tol) {
  double dx = divergence_sup(X), dy = divergence_sup(Y);
  if (dx > div_tol || dy > div_tol)
    throw std::invalid_argument("p1_symmetry_residual: non-solenoidal input, |div| = " +
                                std::to_string(std::max(dx, dy)));
  Field a = multiply(X, Y, ProductPattern::dot_grad);
  Field b = multiply(Y, X, ProductPattern::dot_grad);
  HodgeParts ha = hodge_project(a), hb = hodge_project(b);
  double worst = 0.0;
  for (int c = 0; c < a.ncomp(); ++c)
    for (std::size_t m = 0; m < ha.p1.comp[c].size(); ++m)
      worst = std::max(worst, std::abs(ha.p1.comp[c][m] - hb.p1.comp[c][m]));
  return worst;
}

Field recover_pressure(const Field& v, const Field* forcing) {
  // grad p = -P1( div(v x v) - f ); p mean-zero
  Field vv = multiply(v, v, ProductPattern::outer);
  Field rhs = derive(vv, DeriveOp::div);
  if (forcing)
    for (int c = 0; c < rhs.ncomp(); ++c)
      for (std::size_t m = 0; m < rhs.comp[c].size(); ++m)
        rhs.comp[c][m] -= forcing->comp[c][m];
  const Grid& g = v.grid;
  const int d = g.d;
  auto mm = vector_modes(rhs);
  cplx_vec pm(g.points(), cplx(0, 0));
  for_each_mode(g, [&](std::size_t flat, const int* k) {
    double k2 = 0.0;
    for (int ax = 0; ax < d; ++ax) k2 += static_cast<double>(k[ax]) * k[ax];
    if (k2 < 0.5) return;
    cplx dot(0, 0);
    for (int ax = 0; ax < d; ++ax) dot += mm[ax][flat] * static_cast<double>(k[ax]);
    // i xi . rhs / xi^2, with grad p = -P1 rhs
    pm[flat] = cplx(0.0, 1.0) * dot / (kTwoPi * k2);
  });
  Field p = Field::zeros(g, Rank::scalar, v.t);
  p.comp[0] = fft_inverse(g, pm);
  return p;
}

}  // namespace wildflow
