#pragma once
// FFT backend on the uniform periodic grid. Forward transforms carry the 1/N
// normalization so mode values are Fourier coefficients (f == 1 gives a unit
// k = 0 mode).

#include <complex>
#include <cstddef>
#include <functional>
#include <vector>

namespace wildflow {

using cplx = std::complex<double>;
using real_vec = std::vector<double>;
using cplx_vec = std::vector<cplx>;

struct Grid {
  int d = 3;
  int n = 64;

  std::size_t points() const {
    std::size_t p = 1;
    for (int i = 0; i < d; ++i) p *= static_cast<std::size_t>(n);
    return p;
  }
  double h() const { return 1.0 / n; }
  // signed integer mode for an index along one axis
  int mode(int idx) const { return idx <= n / 2 ? idx : idx - n; }
  bool operator==(const Grid& o) const { return d == o.d && n == o.n; }
};

// power-of-two check used by the transform preconditions
bool is_pow2(int n);

cplx_vec fft_forward(const Grid& g, const real_vec& samples);
real_vec fft_inverse(const Grid& g, const cplx_vec& modes);  // real part
cplx_vec fft_forward_c(const Grid& g, const cplx_vec& samples);
cplx_vec fft_inverse_c(const Grid& g, const cplx_vec& modes);

// Calls fn(flat_index, k) for every grid mode; k points at d signed ints.
template <typename F>
void for_each_mode(const Grid& g, F&& fn) {
  int k[4] = {0, 0, 0, 0};
  const std::size_t total = g.points();
  int idx[4] = {0, 0, 0, 0};
  for (std::size_t flat = 0; flat < total; ++flat) {
    for (int ax = 0; ax < g.d; ++ax) k[ax] = g.mode(idx[ax]);
    fn(flat, k);
    for (int ax = g.d - 1; ax >= 0; --ax) {
      if (++idx[ax] < g.n) break;
      idx[ax] = 0;
    }
  }
}

// |k|^2 table over modes, same layout as mode arrays
std::vector<double> mode_k2(const Grid& g);

}  // namespace wildflow
