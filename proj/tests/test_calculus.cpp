#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "wildflow/calculus.hpp"

using namespace wildflow;

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

Field sample_scalar(const Grid& g, const std::function<double(const double*)>& fn) {
  Field f = Field::zeros(g, Rank::scalar);
  std::vector<int> idx(g.d, 0);
  double x[4];
  for (std::size_t flat = 0; flat < g.points(); ++flat) {
    for (int ax = 0; ax < g.d; ++ax) x[ax] = static_cast<double>(idx[ax]) / g.n;
    f.comp[0][flat] = fn(x);
    for (int ax = g.d - 1; ax >= 0; --ax) {
      if (++idx[ax] < g.n) break;
      idx[ax] = 0;
    }
  }
  return f;
}

double field_diff(const Field& a, const Field& b) {
  double m = 0.0;
  for (int c = 0; c < a.ncomp(); ++c)
    for (std::size_t i = 0; i < a.comp[c].size(); ++i)
      m = std::max(m, std::abs(a.comp[c][i] - b.comp[c][i]));
  return m;
}

}  // namespace

TEST_CASE("frac laplacian: constants map to zero") {
  Grid g{3, 16};
  Field f = sample_scalar(g, [](const double*) { return 3.0; });
  Field out = frac_laplacian(f, 0.5, 1.0);
  CHECK(out.max_abs() < 1e-13);
}

TEST_CASE("frac laplacian: sine is an eigenfunction with (4 pi^2)^gamma") {
  Grid g{3, 32};
  Field f = sample_scalar(g, [](const double* x) { return std::sin(kTwoPi * x[0]); });
  Field out = frac_laplacian(f, 0.5, 1.0);
  Field expect = sample_scalar(g, [](const double* x) { return kTwoPi * std::sin(kTwoPi * x[0]); });
  CHECK(field_diff(out, expect) < 1e-11);
}

TEST_CASE("frac laplacian: random band-limited field matches the per-mode oracle") {
  Grid g{3, 32};
  double gamma = 0.37, nu = 0.8;
  Field f = random_band_field(g, Rank::vector, 8, 21);
  Field out = frac_laplacian(f, gamma, nu);
  // oracle: scale each mode directly
  Field ff = transform(f, TransformDir::to_fourier);
  for (int c = 0; c < 3; ++c) {
    for_each_mode(g, [&](std::size_t flat, const int* k) {
      double k2 = 0.0;
      for (int ax = 0; ax < 3; ++ax) k2 += static_cast<double>(k[ax]) * k[ax];
      ff.four[c][flat] *= (k2 < 0.5) ? 0.0 : nu * std::pow(kTwoPi * kTwoPi * k2, gamma);
    });
  }
  Field oracle = transform(ff, TransformDir::to_physical);
  CHECK(field_diff(out, oracle) < 1e-13 * std::max(1.0, oracle.max_abs() / 1e-0));
}

TEST_CASE("frac laplacian: semigroup in gamma on mean-zero fields") {
  Grid g{3, 32};
  Field f = random_band_field(g, Rank::scalar, 6, 4);
  Field a = frac_laplacian(frac_laplacian(f, 0.3, 1.0), 0.45, 1.0);
  Field b = frac_laplacian(f, 0.75, 1.0);
  CHECK(field_diff(a, b) < 1e-9 * std::max(1.0, b.max_abs()));
}

TEST_CASE("hodge: pure gradient splits as (v - mean, 0, mean)") {
  Grid g{3, 32};
  Field s = random_band_field(g, Rank::scalar, 5, 31);
  Field v = derive(s, DeriveOp::grad);
  // add a constant drift
  for (std::size_t i = 0; i < v.comp[0].size(); ++i) v.comp[0][i] += 0.4;
  auto hp = hodge_project(v);
  CHECK(hp.p2.max_abs() < 1e-11);
  CHECK(hp.p3.comp[0][0] == doctest::Approx(0.4).epsilon(1e-10));
  Field sum = Field::zeros(g, Rank::vector);
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < sum.comp[c].size(); ++i)
      sum.comp[c][i] = hp.p1.comp[c][i] + hp.p2.comp[c][i] + hp.p3.comp[c][i];
  CHECK(field_diff(sum, v) < 1e-12);
}

TEST_CASE("hodge: solenoidal single mode is fixed by P2") {
  Grid g{3, 32};
  // v = cos(2 pi x2) e1 has k . vhat = 0
  Field v = Field::zeros(g, Rank::vector);
  Field c2 = sample_scalar(g, [](const double* x) { return std::cos(kTwoPi * x[1]); });
  v.comp[0] = c2.comp[0];
  auto hp = hodge_project(v);
  CHECK(field_diff(hp.p2, v) < 1e-12);
  CHECK(hp.p1.max_abs() < 1e-12);
  CHECK(hp.p3.max_abs() < 1e-12);
}

TEST_CASE("hodge: random field reconstruction and orthogonality") {
  Grid g{3, 64};
  Field v = random_band_field(g, Rank::vector, 12, 5);
  auto hp = hodge_project(v);
  Field sum = Field::zeros(g, Rank::vector);
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < sum.comp[c].size(); ++i)
      sum.comp[c][i] = hp.p1.comp[c][i] + hp.p2.comp[c][i] + hp.p3.comp[c][i];
  CHECK(field_diff(sum, v) < 1e-12);
  // pairwise L2 orthogonality
  auto inner = [&](const Field& a, const Field& b) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < a.comp[c].size(); ++i) s += a.comp[c][i] * b.comp[c][i];
    return s / static_cast<double>(g.points());
  };
  CHECK(std::abs(inner(hp.p1, hp.p2)) < 1e-12);
  CHECK(std::abs(inner(hp.p1, hp.p3)) < 1e-12);
  CHECK(std::abs(inner(hp.p2, hp.p3)) < 1e-12);
}

TEST_CASE("antidivergence: constant fields map to zero") {
  Grid g{3, 16};
  Field v = Field::zeros(g, Rank::vector);
  for (auto& x : v.comp[1]) x = 2.5;
  Field R = antidivergence(v);
  CHECK(R.max_abs() < 1e-13);
  Field dR = derive(R, DeriveOp::div);
  CHECK(dR.max_abs() < 1e-12);
}

TEST_CASE("antidivergence: single mode matches the hand-assembled kernel") {
  Grid g{3, 32};
  const int d = 3;
  // v = cos(2 pi <m, x>) e2 with m = (1, 2, 0)
  const int m[3] = {1, 2, 0};
  Field v = Field::zeros(g, Rank::vector);
  Field cs = sample_scalar(g, [&](const double* x) {
    return std::cos(kTwoPi * (m[0] * x[0] + m[1] * x[1] + m[2] * x[2]));
  });
  v.comp[1] = cs.comp[0];
  Field R = antidivergence(v);

  // oracle: assemble R_ijk symbol at the two modes +-m by hand
  double xi[3] = {kTwoPi * m[0], kTwoPi * m[1], kTwoPi * m[2]};
  double xi2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
  const int vk = 1;  // nonzero component of vhat
  Field expect = Field::zeros(g, Rank::tensor2);
  Field sn = sample_scalar(g, [&](const double* x) {
    return std::sin(kTwoPi * (m[0] * x[0] + m[1] * x[1] + m[2] * x[2]));
  });
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double sym = (d - 2.0) / (d - 1.0) * xi[i] * xi[j] * xi[vk] / (xi2 * xi2) +
                   ((i == j) ? xi[vk] / ((d - 1.0) * xi2) : 0.0) -
                   ((j == vk) ? xi[i] / xi2 : 0.0) - ((i == vk) ? xi[j] / xi2 : 0.0);
      // (R v)_ij = Re[ i sym * e^{i 2 pi <m,x>} ] = -sym sin(2 pi <m,x>)
      for (std::size_t p = 0; p < expect.at(i, j).size(); ++p)
        expect.at(i, j)[p] = -sym * sn.comp[0][p];
    }
  CHECK(field_diff(R, expect) < 1e-12);
}

TEST_CASE("antidivergence: div R v = v - mean on random fields, symmetric trace-free") {
  Grid g{3, 64};
  Field v = random_band_field(g, Rank::vector, 14, 6);
  for (auto& x : v.comp[2]) x += 0.3;  // give it a mean
  Field R = antidivergence(v);
  // symmetry and trace
  double asym = 0.0, trace = 0.0;
  for (std::size_t p = 0; p < R.comp[0].size(); ++p) {
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j)
        asym = std::max(asym, std::abs(R.at(i, j)[p] - R.at(j, i)[p]));
    double tr = R.at(0, 0)[p] + R.at(1, 1)[p] + R.at(2, 2)[p];
    trace = std::max(trace, std::abs(tr));
  }
  CHECK(asym < 1e-12);
  CHECK(trace < 1e-12);

  Field dR = derive(R, DeriveOp::div);
  Field expect = v;
  for (int c = 0; c < 3; ++c) {
    double mean = v.mean(c);
    for (auto& x : expect.comp[c]) x -= mean;
  }
  CHECK(field_diff(dR, expect) < 1e-12);
}

TEST_CASE("biot-savart: constants map to the zero 2-form") {
  Grid g{3, 16};
  Field v = Field::zeros(g, Rank::vector);
  for (auto& x : v.comp[0]) x = 1.0;
  Field z = biot_savart(v);
  CHECK(z.max_abs() < 1e-13);
}

TEST_CASE("biot-savart: sharp delta B v = P2 v and dz = 0") {
  Grid g{3, 64};
  Field v = random_band_field(g, Rank::vector, 12, 8);
  Field z = biot_savart(v);
  // antisymmetry at construction
  double asym = 0.0;
  for (std::size_t p = 0; p < z.comp[0].size(); ++p)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        asym = std::max(asym, std::abs(z.at(i, j)[p] + z.at(j, i)[p]));
  CHECK(asym < 1e-12);

  Field rec = derive(z, DeriveOp::codiff);  // sharp via component identity
  auto hp = hodge_project(v);
  CHECK(field_diff(rec, hp.p2) < 1e-12);

  // dz = 0 (z is in the image of d up to the inverse laplacian)
  Field dz = derive(z, DeriveOp::ext_d);
  CHECK(dz.max_abs() < 1e-11);

  // solenoidal single mode is recovered exactly
  Field w = random_band_field(g, Rank::vector, 6, 9, true);
  Field zw = biot_savart(w);
  Field rec2 = derive(zw, DeriveOp::codiff);
  CHECK(field_diff(rec2, w) < 1e-11);
}

TEST_CASE("p1 symmetry: zero for equal fields, small for random solenoidal pairs") {
  Grid g{3, 64};
  Field X = random_band_field(g, Rank::vector, 10, 10, true);
  CHECK(p1_symmetry_residual(X, X) < 1e-12);

  Field Y = random_band_field(g, Rank::vector, 10, 11, true);
  CHECK(p1_symmetry_residual(X, Y) < 1e-10);

  // orthogonal shear modes
  Field A = Field::zeros(g, Rank::vector), B = Field::zeros(g, Rank::vector);
  Field s2 = sample_scalar(g, [](const double* x) { return std::sin(kTwoPi * x[1]); });
  Field s3 = sample_scalar(g, [](const double* x) { return std::sin(kTwoPi * x[2]); });
  A.comp[0] = s2.comp[0];
  B.comp[1] = s3.comp[0];
  CHECK(p1_symmetry_residual(A, B) < 1e-12);

  // non-solenoidal input is rejected
  Field bad = random_band_field(g, Rank::vector, 5, 12, false);
  CHECK_THROWS_AS(p1_symmetry_residual(bad, X), std::invalid_argument);
}

TEST_CASE("multiplier operators commute pairwise on mean-zero fields") {
  Grid g{3, 32};
  Field v = random_band_field(g, Rank::vector, 8, 13, true);
  Field a = antidivergence(frac_laplacian(v, 0.4, 1.0));
  Field b = frac_laplacian(antidivergence(v), 0.4, 1.0);
  CHECK(field_diff(a, b) < 1e-11 * std::max(1.0, b.max_abs()));

  Field c = inv_laplacian(leray_project(v));
  Field d = leray_project(inv_laplacian(v));
  CHECK(field_diff(c, d) < 1e-12);
}
