#pragma once
// Mikado pipe flows: divergence-free fields of disjoint periodic pipes whose
// mean second moment realizes a prescribed symmetric matrix near the
// identity, plus their truncated Fourier tables for the perturbation step.

#include <array>
#include <complex>
#include <filesystem>
#include <vector>

#include "wildflow/spectral.hpp"

namespace wildflow {

struct PipeDirection {
  std::array<int, 4> k{};        // integer direction vector
  std::array<double, 4> khat{};  // unit direction
  std::array<double, 4> shift{};
  double knorm = 0.0;  // |k| = closed line length on the torus
  // coefficient kind: how Gamma^2 reads the matrix entries
  enum Kind { axis, pair_plus, pair_minus } kind = axis;
  int ia = 0, ib = 0;  // entry indices (axis: ia=ib)
  double amp = 1.0;    // profile amplitude making the torus mean of psi^2 one
  // deduplicated transverse lattice offsets for periodic distance queries
  std::vector<std::array<double, 4>> lattice;
};

struct DirectionSet {
  int d = 3;
  double mu0 = 0.2;     // off-diagonal smoothing constant of Gamma^2
  double r_pipe = 0.0;  // tube radius
  std::vector<PipeDirection> dirs;
  double min_gamma2 = 0.0;       // verified positivity margin over the ball
  double min_line_dist = 0.0;    // verified pairwise line separation

  int ndir() const { return static_cast<int>(dirs.size()); }
  // Gamma_j^2(R), smooth and positive on the Frobenius ball |R - Id| <= 1/2
  double gamma2(const double* R, int j) const;
  double gamma(const double* R, int j) const;
  // signed distance data of xi to pipe j (periodic); returns r and the
  // transverse displacement achieving it
  double pipe_distance(int j, const double* xi, double* y_out = nullptr) const;
  double psi(int j, const double* xi) const;                  // profile value
  void psi_grad(int j, const double* xi, double* grad) const; // analytic gradient
};

// membership test for N = closed Frobenius ball of radius 1/2 around Id
bool in_matrix_ball(const double* R, int d, double radius = 0.5);

// transverse bump profile and its radial Fourier transform (d-1 transverse
// dimensions); f has zero transverse integral by construction
double pipe_profile(double r, double rho, int dtrans);
double pipe_profile_deriv(double r, double rho, int dtrans);
double pipe_profile_radial_ft(double kappa, double rho, int dtrans);
double pipe_profile_sq_radial_ft(double kappa, double rho, int dtrans);
double pipe_profile_sq_integral(double rho, int dtrans);

// Builds the axis + pair direction family (d^2 directions), verifies the
// span of {khat x khat}, Gamma positivity over the ball, and searches
// deterministic shifts with pairwise line distance >= 2 r_pipe.
// Throws for d < 3, span deficiency, or failed shift search.
DirectionSet build_direction_set(int d);

// W(R, xi), exact pipe evaluation; throws if R is outside the ball.
void eval_mikado(const DirectionSet& ds, const double* R, const double* xi,
                 double* W_out);

// one Fourier mode of the velocity table: a_k(R) = coef * Gamma_{pipe}(R) * khat
struct TableMode {
  std::array<int, 4> k{};
  int pipe = 0;
  cplx coef;  // renormalized transverse FT with the shift phase
};

// one Fourier mode of the W (x) W table: C_k(R) = sum_j Gamma_j^2 phi_j(k) khat khat
struct TableCMode {
  std::array<int, 4> k{};
  std::vector<std::pair<int, cplx>> terms;  // (pipe, phi_hat with shift phase)
};

struct MikadoTable {
  DirectionSet ds;
  int K = 4;
  int m_r = 8;
  std::vector<TableMode> modes;     // all k with 0 < |k| <= K, mode-disjoint
  std::vector<TableCMode> cmodes;   // nonzero modes of W (x) W
  std::vector<double> decay_c;      // fitted constants c_m, m = 1..2d
  double series_residual = 0.0;     // measured sup |W_K - W| over samples
  double tail_bound = 0.0;          // profile-tail estimate at K
  // degree-m_r Chebyshev fit of sqrt on the Gamma^2 range (kept for speed
  // comparisons; the default evaluation path uses exact square roots)
  std::vector<double> cheb_sqrt;
  double cheb_lo = 0.0, cheb_hi = 1.0;
  double cheb_max_err = 0.0;

  int d() const { return ds.d; }
  // a_k(R) for table mode index m
  void a_k(int m, const double* R, cplx* out) const;
  // C_k(R) for table C-mode index m (d x d, symmetric)
  void C_k(int m, const double* R, cplx* out) const;
  double gamma_cheb(double g2) const;
};

// Truncated Fourier table. Mode ownership is made pairwise disjoint and the
// per-pipe coefficients renormalized so the truncated field's second moment
// reproduces R exactly. K >= 4, m_r >= 2.
MikadoTable tabulate_fourier(const DirectionSet& ds, int K, int m_r);

// k wedge a_k(R) / (i 2 pi |k|^2): antisymmetric tensor whose Div reproduces
// a_k e^{i 2 pi <k, xi>}. Throws on k = 0.
void corrector_tensor(const MikadoTable& t, int mode_index, const double* R,
                      cplx* out_dxd);

// versioned binary serialization
void write_mikado_table(const std::filesystem::path& path, const MikadoTable& t);
MikadoTable read_mikado_table(const std::filesystem::path& path);

}  // namespace wildflow
