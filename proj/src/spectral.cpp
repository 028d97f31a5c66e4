#include "wildflow/spectral.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace wildflow {

bool is_pow2(int n) { return n >= 2 && (n & (n - 1)) == 0; }

namespace {

std::mutex g_plan_mutex;
std::map<std::tuple<int, int, int>, fftw_plan> g_plans;
std::map<std::pair<int, int>, fftw_plan> g_r2c_plans, g_c2r_plans;

std::size_t half_points(const Grid& g) {
  std::size_t p = 1;
  for (int i = 0; i + 1 < g.d; ++i) p *= static_cast<std::size_t>(g.n);
  return p * static_cast<std::size_t>(g.n / 2 + 1);
}

fftw_plan plan_r2c(const Grid& g) {
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  auto key = std::make_pair(g.d, g.n);
  auto it = g_r2c_plans.find(key);
  if (it != g_r2c_plans.end()) return it->second;
  std::vector<int> dims(g.d, g.n);
  real_vec rin(g.points());
  cplx_vec cout(half_points(g));
  fftw_plan p = fftw_plan_dft_r2c(g.d, dims.data(), rin.data(),
                                  reinterpret_cast<fftw_complex*>(cout.data()),
                                  FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!p) throw std::runtime_error("fftw r2c plan creation failed");
  g_r2c_plans.emplace(key, p);
  return p;
}

fftw_plan plan_c2r(const Grid& g) {
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  auto key = std::make_pair(g.d, g.n);
  auto it = g_c2r_plans.find(key);
  if (it != g_c2r_plans.end()) return it->second;
  std::vector<int> dims(g.d, g.n);
  real_vec rout(g.points());
  cplx_vec cin(half_points(g));
  fftw_plan p = fftw_plan_dft_c2r(g.d, dims.data(),
                                  reinterpret_cast<fftw_complex*>(cin.data()),
                                  rout.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!p) throw std::runtime_error("fftw c2r plan creation failed");
  g_c2r_plans.emplace(key, p);
  return p;
}

fftw_plan plan_for(const Grid& g, int sign) {
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  auto key = std::make_tuple(g.d, g.n, sign);
  auto it = g_plans.find(key);
  if (it != g_plans.end()) return it->second;
  std::vector<int> dims(g.d, g.n);
  cplx_vec scratch(g.points());
  fftw_plan p = fftw_plan_dft(g.d, dims.data(),
                              reinterpret_cast<fftw_complex*>(scratch.data()),
                              reinterpret_cast<fftw_complex*>(scratch.data()),
                              sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!p) throw std::runtime_error("fftw plan creation failed");
  g_plans.emplace(key, p);
  return p;
}

void execute(const Grid& g, int sign, cplx_vec& buf) {
  if (!is_pow2(g.n)) throw std::invalid_argument("grid size must be a power of two");
  if (buf.size() != g.points()) throw std::invalid_argument("fft buffer size mismatch");
  fftw_plan p = plan_for(g, sign);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(buf.data()),
                   reinterpret_cast<fftw_complex*>(buf.data()));
}

}  // namespace

cplx_vec fft_forward_c(const Grid& g, const cplx_vec& samples) {
  cplx_vec buf = samples;
  execute(g, FFTW_FORWARD, buf);
  double s = 1.0 / static_cast<double>(g.points());
  for (auto& v : buf) v *= s;
  return buf;
}

cplx_vec fft_inverse_c(const Grid& g, const cplx_vec& modes) {
  cplx_vec buf = modes;
  execute(g, FFTW_BACKWARD, buf);
  return buf;
}

cplx_vec fft_forward(const Grid& g, const real_vec& samples) {
  if (!is_pow2(g.n)) throw std::invalid_argument("grid size must be a power of two");
  if (samples.size() != g.points())
    throw std::invalid_argument("fft buffer size mismatch");
  // real transform on the half spectrum, unpacked to the full mode array
  static thread_local real_vec rin;
  static thread_local cplx_vec half;
  rin = samples;
  half.assign(half_points(g), cplx(0, 0));
  fftw_execute_dft_r2c(plan_r2c(g), rin.data(),
                       reinterpret_cast<fftw_complex*>(half.data()));
  const int n = g.n, nh = n / 2 + 1;
  const double sc = 1.0 / static_cast<double>(g.points());
  cplx_vec out(g.points());
  std::size_t rows = g.points() / static_cast<std::size_t>(n);
  // the last axis is the halved one; reconstruct conjugate partners rowwise
  std::vector<std::size_t> conj_row(rows);
  {
    // row index r encodes the leading d-1 coordinates; the conjugate row
    // negates each of them mod n
    for (std::size_t r = 0; r < rows; ++r) {
      std::size_t rem = r, cr = 0, mult = 1;
      std::size_t coords[4] = {0, 0, 0, 0};
      for (int ax = g.d - 2; ax >= 0; --ax) {
        coords[ax] = rem % static_cast<std::size_t>(n);
        rem /= static_cast<std::size_t>(n);
      }
      for (int ax = 0; ax < g.d - 1; ++ax) {
        std::size_t neg = (n - coords[ax]) % static_cast<std::size_t>(n);
        cr = cr * static_cast<std::size_t>(n) + neg;
        mult *= static_cast<std::size_t>(n);
      }
      (void)mult;
      conj_row[r] = cr;
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const cplx* hrow = half.data() + r * static_cast<std::size_t>(nh);
    cplx* orow = out.data() + r * static_cast<std::size_t>(n);
    for (int j = 0; j < nh; ++j) orow[j] = hrow[j] * sc;
    const cplx* crow = half.data() + conj_row[r] * static_cast<std::size_t>(nh);
    for (int j = nh; j < n; ++j) orow[j] = std::conj(crow[n - j]) * sc;
  }
  return out;
}

real_vec fft_inverse(const Grid& g, const cplx_vec& modes) {
  if (!is_pow2(g.n)) throw std::invalid_argument("grid size must be a power of two");
  if (modes.size() != g.points())
    throw std::invalid_argument("fft buffer size mismatch");
  // hermitian part only: pack the half spectrum and run a real inverse
  const int n = g.n, nh = n / 2 + 1;
  static thread_local cplx_vec half;
  half.assign(half_points(g), cplx(0, 0));
  std::size_t rows = g.points() / static_cast<std::size_t>(n);
  // average with the conjugate partner so non-hermitian inputs reproduce the
  // real part of the full complex inverse
  std::vector<std::size_t> conj_row(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t rem = r, cr = 0;
    std::size_t coords[4] = {0, 0, 0, 0};
    for (int ax = g.d - 2; ax >= 0; --ax) {
      coords[ax] = rem % static_cast<std::size_t>(n);
      rem /= static_cast<std::size_t>(n);
    }
    for (int ax = 0; ax < g.d - 1; ++ax)
      cr = cr * static_cast<std::size_t>(n) + (n - coords[ax]) % static_cast<std::size_t>(n);
    conj_row[r] = cr;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const cplx* mrow = modes.data() + r * static_cast<std::size_t>(n);
    const cplx* crow = modes.data() + conj_row[r] * static_cast<std::size_t>(n);
    cplx* hrow = half.data() + r * static_cast<std::size_t>(nh);
    for (int j = 0; j < nh; ++j) {
      int jn = (n - j) % n;
      hrow[j] = 0.5 * (mrow[j] + std::conj(crow[jn]));
    }
  }
  real_vec out(g.points());
  fftw_execute_dft_c2r(plan_c2r(g), reinterpret_cast<fftw_complex*>(half.data()),
                       out.data());
  return out;
}

std::vector<double> mode_k2(const Grid& g) {
  std::vector<double> out(g.points());
  for_each_mode(g, [&](std::size_t flat, const int* k) {
    double s = 0.0;
    for (int ax = 0; ax < g.d; ++ax) s += static_cast<double>(k[ax]) * k[ax];
    out[flat] = s;
  });
  return out;
}

}  // namespace wildflow
