#include "wildflow/field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace wildflow {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

int rank_components(Rank r, int d) {
  switch (r) {
    case Rank::scalar: return 1;
    case Rank::vector:
    case Rank::form1: return d;
    case Rank::tensor2:
    case Rank::form2: return d * d;
    case Rank::form3: return d * (d - 1) * (d - 2) / 6;
  }
  return 0;
}

std::string rank_name(Rank r) {
  switch (r) {
    case Rank::scalar: return "scalar";
    case Rank::vector: return "vector";
    case Rank::form1: return "form1";
    case Rank::tensor2: return "tensor2";
    case Rank::form2: return "form2";
    case Rank::form3: return "form3";
  }
  return "?";
}

std::vector<std::array<int, 3>> form3_triples(int d) {
  std::vector<std::array<int, 3>> out;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      for (int k = j + 1; k < d; ++k) out.push_back({i, j, k});
  return out;
}

Field Field::zeros(const Grid& g, Rank r, double t) {
  Field f;
  f.grid = g;
  f.rank = r;
  f.t = t;
  f.comp.assign(rank_components(r, g.d), real_vec(g.points(), 0.0));
  return f;
}

double Field::max_abs() const {
  double m = 0.0;
  for (const auto& c : comp)
    for (double v : c) m = std::max(m, std::abs(v));
  return m;
}

double Field::l2() const {
  double s = 0.0;
  for (const auto& c : comp)
    for (double v : c) s += v * v;
  return std::sqrt(s / static_cast<double>(grid.points()));
}

double Field::mean(int c) const {
  double s = 0.0;
  for (double v : comp[c]) s += v;
  return s / static_cast<double>(grid.points());
}

Field transform(const Field& f, TransformDir dir) {
  if (!is_pow2(f.grid.n))
    throw std::invalid_argument("transform: grid size must be a power of two");
  Field out = f;
  if (dir == TransformDir::to_fourier) {
    if (!f.has_physical()) throw std::invalid_argument("transform: no physical samples");
    out.four.clear();
    for (const auto& c : f.comp) out.four.push_back(fft_forward(f.grid, c));
  } else {
    if (!f.has_fourier()) throw std::invalid_argument("transform: no Fourier mirror");
    out.comp.clear();
    for (const auto& c : f.four) out.comp.push_back(fft_inverse(f.grid, c));
  }
  return out;
}

cplx_vec modes_of(const Field& f, int c) {
  if (f.has_fourier()) return f.four[c];
  return fft_forward(f.grid, f.comp[c]);
}

namespace {

// derivative multiplier along one axis; Nyquist derivative set to zero
inline double dmode(const Grid& g, int k) {
  return (std::abs(k) == g.n / 2) ? 0.0 : static_cast<double>(k);
}

cplx_vec spectral_partial(const Grid& g, const cplx_vec& modes, int axis) {
  cplx_vec out(modes.size());
  for_each_mode(g, [&](std::size_t flat, const int* k) {
    out[flat] = modes[flat] * cplx(0.0, kTwoPi * dmode(g, k[axis]));
  });
  return out;
}

real_vec partial(const Field& f, int c, int axis) {
  return fft_inverse(f.grid, spectral_partial(f.grid, modes_of(f, c), axis));
}

// all first derivatives of one component from a single forward transform
std::vector<real_vec> partials_all(const Field& f, int c) {
  cplx_vec m = modes_of(f, c);
  std::vector<real_vec> out;
  for (int ax = 0; ax < f.grid.d; ++ax)
    out.push_back(fft_inverse(f.grid, spectral_partial(f.grid, m, ax)));
  return out;
}

// all components of grad^N f as flat scalar sample arrays
std::vector<real_vec> nth_gradient(const Field& f, int N) {
  std::vector<real_vec> cur;
  for (const auto& c : f.comp) cur.push_back(c);
  Field tmp = f;
  for (int step = 0; step < N; ++step) {
    std::vector<real_vec> next;
    for (const auto& c : cur) {
      Field sc;
      sc.grid = f.grid;
      sc.rank = Rank::scalar;
      sc.comp = {c};
      for (int ax = 0; ax < f.grid.d; ++ax) next.push_back(partial(sc, 0, ax));
    }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace

namespace {
[[noreturn]] void rank_mismatch(const Field& f, const char* need) {
  throw std::invalid_argument(std::string("derive: rank mismatch, op needs ") + need +
                              ", got " + rank_name(f.rank));
}
}  // namespace

Field derive(const Field& f, DeriveOp op) {
  const Grid& g = f.grid;
  const int d = g.d;

  switch (op) {
    case DeriveOp::grad: {
      if (f.rank == Rank::scalar) {
        Field out = Field::zeros(g, Rank::vector, f.t);
        for (int ax = 0; ax < d; ++ax) out.comp[ax] = partial(f, 0, ax);
        return out;
      }
      if (f.rank == Rank::vector || f.rank == Rank::form1) {
        Field out = Field::zeros(g, Rank::tensor2, f.t);
        for (int j = 0; j < d; ++j) {
          auto dj = partials_all(f, j);  // d_i v^j for all i, one forward
          for (int i = 0; i < d; ++i) out.at(i, j) = std::move(dj[i]);
        }
        return out;
      }
      rank_mismatch(f, "scalar or vector");
    }
    case DeriveOp::div: {
      if (f.rank == Rank::vector || f.rank == Rank::form1) {
        Field out = Field::zeros(g, Rank::scalar, f.t);
        for (int ax = 0; ax < d; ++ax) {
          real_vec p = partial(f, ax, ax);
          for (std::size_t i = 0; i < p.size(); ++i) out.comp[0][i] += p[i];
        }
        return out;
      }
      if (f.rank == Rank::tensor2 || f.rank == Rank::form2) {
        Field out = Field::zeros(g, Rank::vector, f.t);
        // sum the j-th derivatives in Fourier before one inverse per row
        for (int i = 0; i < d; ++i) {
          cplx_vec acc(g.points(), cplx(0, 0));
          for (int j = 0; j < d; ++j) {
            cplx_vec m = modes_of(f, j * d + i);
            for_each_mode(g, [&](std::size_t flat, const int* k) {
              acc[flat] += m[flat] * cplx(0.0, kTwoPi * dmode(g, k[j]));
            });
          }
          out.comp[i] = fft_inverse(g, acc);
        }
        return out;
      }
      rank_mismatch(f, "vector or tensor2");
    }
    case DeriveOp::ext_d: {
      if (f.rank == Rank::scalar) {
        Field out = derive(f, DeriveOp::grad);
        out.rank = Rank::form1;
        return out;
      }
      if (f.rank == Rank::form1 || f.rank == Rank::vector) {
        Field out = Field::zeros(g, Rank::form2, f.t);
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) {
            if (i == j) continue;
            real_vec a = partial(f, j, i), b = partial(f, i, j);
            for (std::size_t m = 0; m < a.size(); ++m) out.at(i, j)[m] = a[m] - b[m];
          }
        return out;
      }
      if (f.rank == Rank::form2) {
        auto triples = form3_triples(d);
        Field out = Field::zeros(g, Rank::form3, f.t);
        for (std::size_t tix = 0; tix < triples.size(); ++tix) {
          auto [i, j, k] = triples[tix];
          real_vec a = partial(f, j * d + k, i);
          real_vec b = partial(f, i * d + k, j);
          real_vec c = partial(f, i * d + j, k);
          for (std::size_t m = 0; m < a.size(); ++m)
            out.comp[tix][m] = a[m] - b[m] + c[m];
        }
        return out;
      }
      rank_mismatch(f, "scalar or form");
    }
    case DeriveOp::codiff: {
      // delta = -Div
      if (f.rank == Rank::form1 || f.rank == Rank::vector) {
        Field out = derive(f, DeriveOp::div);
        for (auto& v : out.comp[0]) v = -v;
        return out;
      }
      if (f.rank == Rank::form2 || f.rank == Rank::tensor2) {
        Field out = derive(f, DeriveOp::div);
        out.rank = Rank::form1;
        for (auto& c : out.comp)
          for (auto& v : c) v = -v;
        return out;
      }
      rank_mismatch(f, "form1 or form2");
    }
    case DeriveOp::laplacian: {
      Field out = Field::zeros(g, f.rank, f.t);
      for (int c = 0; c < f.ncomp(); ++c) {
        cplx_vec m = modes_of(f, c);
        for_each_mode(g, [&](std::size_t flat, const int* k) {
          double k2 = 0.0;
          for (int ax = 0; ax < d; ++ax) k2 += dmode(g, k[ax]) * dmode(g, k[ax]);
          m[flat] *= -kTwoPi * kTwoPi * k2;
        });
        out.comp[c] = fft_inverse(g, m);
      }
      return out;
    }
  }
  throw std::logic_error("derive: unreachable");
}

int dealias_kmax(const Grid& g) { return g.n / 3; }

Field dealias(const Field& f) {
  const Grid& g = f.grid;
  int kc = dealias_kmax(g);
  Field out = f;
  out.four.clear();
  for (int c = 0; c < f.ncomp(); ++c) {
    cplx_vec m = modes_of(f, c);
    for_each_mode(g, [&](std::size_t flat, const int* k) {
      for (int ax = 0; ax < g.d; ++ax)
        if (std::abs(k[ax]) > kc) { m[flat] = 0.0; return; }
    });
    out.comp[c] = fft_inverse(g, m);
    out.four.push_back(std::move(m));
  }
  return out;
}

namespace {

Field pointwise_product_scalar(const Field& s, const Field& g) {
  Field out = Field::zeros(g.grid, g.rank, g.t);
  for (int c = 0; c < g.ncomp(); ++c)
    for (std::size_t i = 0; i < g.comp[c].size(); ++i)
      out.comp[c][i] = s.comp[0][i] * g.comp[c][i];
  return out;
}

}  // namespace

Field multiply(const Field& f, const Field& g, ProductPattern p) {
  if (!(f.grid == g.grid)) throw std::invalid_argument("multiply: grid mismatch");
  if (!f.has_physical() || !g.has_physical())
    throw std::invalid_argument("multiply: both fields must be physical-space");
  const Grid& gr = f.grid;
  const int d = gr.d;
  const std::size_t np = gr.points();
  Field out;

  switch (p) {
    case ProductPattern::scalar_any: {
      if (f.rank != Rank::scalar) throw std::invalid_argument("multiply: scalar_any needs scalar lhs");
      out = pointwise_product_scalar(f, g);
      break;
    }
    case ProductPattern::outer: {
      if (f.rank != Rank::vector || g.rank != Rank::vector)
        throw std::invalid_argument("multiply: outer needs two vectors");
      out = Field::zeros(gr, Rank::tensor2, f.t);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          for (std::size_t m = 0; m < np; ++m)
            out.at(i, j)[m] = f.comp[i][m] * g.comp[j][m];
      break;
    }
    case ProductPattern::dot_grad: {
      if (f.rank != Rank::vector) throw std::invalid_argument("multiply: dot_grad needs vector lhs");
      out = Field::zeros(gr, g.rank, g.t);
      for (int c = 0; c < g.ncomp(); ++c) {
        auto pd = partials_all(g, c);
        for (int ax = 0; ax < d; ++ax)
          for (std::size_t m = 0; m < np; ++m)
            out.comp[c][m] += f.comp[ax][m] * pd[ax][m];
      }
      break;
    }
    case ProductPattern::contract2: {
      if (rank_components(f.rank, d) != d * d || rank_components(g.rank, d) != d * d)
        throw std::invalid_argument("multiply: contract2 needs two rank-2 fields");
      out = Field::zeros(gr, Rank::scalar, f.t);
      for (int c = 0; c < d * d; ++c)
        for (std::size_t m = 0; m < np; ++m)
          out.comp[0][m] += f.comp[c][m] * g.comp[c][m];
      break;
    }
    case ProductPattern::interior: {
      if (f.rank != Rank::vector || g.rank != Rank::form2)
        throw std::invalid_argument("multiply: interior needs vector, form2");
      out = Field::zeros(gr, Rank::form1, f.t);
      for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i)
          for (std::size_t m = 0; m < np; ++m)
            out.comp[j][m] += f.comp[i][m] * g.at(i, j)[m];
      break;
    }
    default:
      throw std::invalid_argument("multiply: unknown pattern");
  }
  return dealias(out);
}

HolderNorm holder_norm(const Field& f, int N, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("holder_norm: alpha must lie in (0,1)");
  const Grid& g = f.grid;
  HolderNorm h;
  h.N = N;
  h.alpha = alpha;

  // ||f||_N: grid max over derivatives of order 0..N
  for (int j = 0; j <= N; ++j) {
    auto comps = nth_gradient(f, j);
    for (const auto& c : comps)
      for (double v : c) h.cn = std::max(h.cn, std::abs(v));
  }

  // seminorm: dyadic offsets along axis and diagonal lattice directions
  auto top = nth_gradient(f, N);
  std::size_t np = g.points();
  std::vector<std::size_t> stride(g.d);
  stride[g.d - 1] = 1;
  for (int ax = g.d - 2; ax >= 0; --ax)
    stride[ax] = stride[ax + 1] * static_cast<std::size_t>(g.n);

  // all sign patterns in {-1,0,1}^d up to global sign
  std::vector<std::vector<int>> dirs;
  std::vector<int> u(g.d, 0);
  int total = 1;
  for (int ax = 0; ax < g.d; ++ax) total *= 3;
  for (int code = 1; code < total; ++code) {
    int c = code;
    bool lead_pos = false, lead_seen = false;
    for (int ax = 0; ax < g.d; ++ax) {
      u[ax] = c % 3 - 1;
      c /= 3;
      if (!lead_seen && u[ax] != 0) { lead_seen = true; lead_pos = u[ax] > 0; }
    }
    if (lead_pos) dirs.push_back(u);
  }

  std::vector<int> coords(g.d);
  for (const auto& dir : dirs) {
    double un = 0.0;
    for (int ax = 0; ax < g.d; ++ax) un += static_cast<double>(dir[ax]) * dir[ax];
    un = std::sqrt(un);
    for (int p = 1; p <= g.n / 2; p *= 2) {
      double hlen = p * un / g.n;
      if (hlen > 0.75) break;
      double best = 0.0;
      for (const auto& c : top) {
        for (std::size_t i = 0; i < np; ++i) {
          std::size_t rem = i;
          std::size_t shifted = 0;
          for (int ax = 0; ax < g.d; ++ax) {
            int ci = static_cast<int>(rem / stride[ax]);
            rem %= stride[ax];
            int cj = (ci + p * dir[ax]) % g.n;
            if (cj < 0) cj += g.n;
            shifted += stride[ax] * static_cast<std::size_t>(cj);
          }
          best = std::max(best, std::abs(c[shifted] - c[i]));
        }
      }
      h.seminorm = std::max(h.seminorm, best / std::pow(hlen, alpha));
    }
  }
  h.value = h.cn + h.seminorm;
  return h;
}

double mollifier_profile(double r) {
  if (r >= 1.0) return 0.0;
  return std::exp(-r * r / (1.0 - r * r));
}

Field mollify(const Field& f, double ell) {
  const Grid& g = f.grid;
  if (!(ell > 1.0 / g.n && ell < 1.0))
    throw std::invalid_argument("mollify: ell must lie in (1/n, 1)");
  Field out = Field::zeros(g, f.rank, f.t);
  for (int c = 0; c < f.ncomp(); ++c) {
    cplx_vec m = modes_of(f, c);
    for_each_mode(g, [&](std::size_t flat, const int* k) {
      double k2 = 0.0;
      for (int ax = 0; ax < g.d; ++ax) k2 += static_cast<double>(k[ax]) * k[ax];
      m[flat] *= mollifier_profile(ell * std::sqrt(k2));
    });
    out.comp[c] = fft_inverse(g, m);
  }
  return out;
}

Field random_band_field(const Grid& g, Rank r, int kmax, unsigned long seed,
                        bool solenoidal) {
  std::mt19937_64 rng(seed);
  auto unif = [&rng]() {
    return (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  };
  auto gauss = [&]() {  // explicit Box-Muller for cross-platform determinism
    double u1 = unif(), u2 = unif();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  };

  int nc = rank_components(r, g.d);
  std::vector<cplx_vec> modes(nc, cplx_vec(g.points(), cplx(0, 0)));
  // hermitian band spectrum built directly, so the samples are real
  std::vector<std::size_t> flat_of(g.points());
  for_each_mode(g, [&](std::size_t flat, const int* k) {
    // index of the conjugate mode -k
    std::size_t cf = 0;
    for (int ax = 0; ax < g.d; ++ax) {
      int neg = (g.n - ((k[ax] % g.n) + g.n) % g.n) % g.n;
      cf = cf * static_cast<std::size_t>(g.n) + static_cast<std::size_t>(neg);
    }
    flat_of[flat] = cf;
  });
  for (int c = 0; c < nc; ++c) {
    for_each_mode(g, [&](std::size_t flat, const int* k) {
      double k2 = 0.0;
      bool nyq = false;
      for (int ax = 0; ax < g.d; ++ax) {
        k2 += static_cast<double>(k[ax]) * k[ax];
        if (std::abs(k[ax]) == g.n / 2) nyq = true;
      }
      if (k2 < 0.5 || k2 > static_cast<double>(kmax) * kmax || nyq) return;
      // fill each conjugate pair once, in a deterministic order
      if (flat_of[flat] < flat) return;
      cplx z(gauss(), gauss());
      if (flat_of[flat] == flat) z = cplx(z.real(), 0.0);
      modes[c][flat] = z;
      modes[c][flat_of[flat]] = std::conj(z);
    });
  }
  if (solenoidal && (r == Rank::vector || r == Rank::form1)) {
    for_each_mode(g, [&](std::size_t flat, const int* k) {
      double k2 = 0.0;
      for (int ax = 0; ax < g.d; ++ax) k2 += static_cast<double>(k[ax]) * k[ax];
      if (k2 < 0.5) return;
      cplx dot(0, 0);
      for (int ax = 0; ax < g.d; ++ax) dot += modes[ax][flat] * static_cast<double>(k[ax]);
      for (int ax = 0; ax < g.d; ++ax)
        modes[ax][flat] -= dot * static_cast<double>(k[ax]) / k2;
    });
  }

  Field out = Field::zeros(g, r, 0.0);
  for (int c = 0; c < nc; ++c) out.comp[c] = fft_inverse(g, modes[c]);
  double scale = out.max_abs();
  if (scale > 0) {
    double inv = 1.0 / scale;
    for (auto& c : out.comp)
      for (auto& v : c) v *= inv;
    for (auto& m : modes)
      for (auto& v : m) v *= inv;
  }
  out.four = std::move(modes);
  return out;
}

}  // namespace wildflow
