#pragma once
// Grid fields on the d-torus: scalars, vectors, (2,0)-tensors and k-forms,
// with spectral transforms, calculus, dealiased products, mollification and
// discrete Hoelder norms.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "wildflow/spectral.hpp"

namespace wildflow {

enum class Rank { scalar, vector, form1, tensor2, form2, form3 };

int rank_components(Rank r, int d);
std::string rank_name(Rank r);

// lexicographic triples i<j<k for form3 component indexing
std::vector<std::array<int, 3>> form3_triples(int d);

struct Field {
  Grid grid;
  Rank rank = Rank::scalar;
  double t = 0.0;
  std::vector<real_vec> comp;  // physical samples, one vector per component
  std::vector<cplx_vec> four;  // optional Fourier mirror (empty when absent)

  int ncomp() const { return static_cast<int>(comp.empty() ? four.size() : comp.size()); }
  bool has_physical() const { return !comp.empty(); }
  bool has_fourier() const { return !four.empty(); }

  static Field zeros(const Grid& g, Rank r, double t = 0.0);

  // tensor2/form2 component accessors
  real_vec& at(int i, int j) { return comp[i * grid.d + j]; }
  const real_vec& at(int i, int j) const { return comp[i * grid.d + j]; }

  double max_abs() const;  // grid sup over all components
  double l2() const;       // discrete L2 norm (mean of squares, sqrt)
  double mean(int c = 0) const;
};

enum class TransformDir { to_fourier, to_physical };

// Attaches the missing representation (exact DFT pairing); the other side is
// preserved. Errors on non-power-of-two grids.
Field transform(const Field& f, TransformDir dir);

// modes of component c, computing on demand
cplx_vec modes_of(const Field& f, int c);

enum class DeriveOp { grad, div, ext_d, codiff, laplacian };

// Exact spectral differentiation. Conventions:
//   (grad s)_i = d_i s            (scalar -> vector)
//   (grad v)_{ij} = d_i v^j       (vector -> tensor2)
//   (div v) = d_i v^i             (vector -> scalar)
//   (div T)^i = d_j T^{ji}        (tensor2 -> vector, first index contracted)
//   ext_d: scalar->form1, form1->form2, form2->form3
//   codiff = -Div: form1->scalar, form2->form1
//   laplacian: componentwise
Field derive(const Field& f, DeriveOp op);

enum class ProductPattern {
  scalar_any,   // scalar * anything
  outer,        // v (x) w -> tensor2
  dot_grad,     // (v . grad) T, T scalar/vector/tensor2
  contract2,    // T : S -> scalar
  interior      // v -| omega (2-form) -> form1
};

// Pointwise product, 2/3-rule dealiasing applied to the result.
Field multiply(const Field& f, const Field& g, ProductPattern p);

// band-limit a field to |k_i| <= n/3 per axis (the dealiasing cut)
Field dealias(const Field& f);
int dealias_kmax(const Grid& g);

struct HolderNorm {
  int N = 0;
  double alpha = 0.0;
  double value = 0.0;      // ||f||_N + [grad^N f]_alpha
  double cn = 0.0;         // ||f||_N, grid max over derivatives up to N
  double seminorm = 0.0;   // dyadic-offset estimate of [grad^N f]_alpha
};

// ||f||_{N+alpha} with the seminorm estimated from axis offsets of dyadic
// length {1,2,4,...}/n (a lower bound of the continuum seminorm).
HolderNorm holder_norm(const Field& f, int N, double alpha);

// Spectral mollifier psi_hat(ell |k|) with psi_hat(r) = exp(-r^2/(1-r^2))
// for r < 1 and 0 otherwise. Mean preserving; requires ell in (1/n, 1).
Field mollify(const Field& f, double ell);
double mollifier_profile(double r);

// uniform random band-limited field (modes |k| <= kmax, unit-scale), solenoidal
// projection optional; deterministic in the seed
Field random_band_field(const Grid& g, Rank r, int kmax, unsigned long seed,
                        bool solenoidal = false);

}  // namespace wildflow
