#pragma once
// Fourier-multiplier operators and flat-torus identities: fractional
// Laplacian, inverse Laplacian, Hodge projectors, antidivergence R and the
// higher-dimensional Biot-Savart operator B.

#include "wildflow/field.hpp"

namespace wildflow {

enum class ZeroModePolicy { annihilate, identity, error };

// nu (-Delta)^gamma: mode k scaled by nu (2 pi |k|)^{2 gamma}; zero mode per
// policy (default annihilate). gamma in (0, 1].
Field frac_laplacian(const Field& f, double gamma, double nu,
                     ZeroModePolicy zp = ZeroModePolicy::annihilate);

// (-Delta)^{-1}: multiplier 1/(4 pi^2 |k|^2), zero mode annihilated.
Field inv_laplacian(const Field& f);

struct HodgeParts {
  Field p1;  // gradient part  d (-Delta)^{-1} delta
  Field p2;  // solenoidal mean-zero part  delta (-Delta)^{-1} d
  Field p3;  // harmonic (mean) part
};

// Hodge decomposition of a vector field / 1-form; p1 + p2 + p3 reproduces
// the input to roundoff.
HodgeParts hodge_project(const Field& v);
Field leray_project(const Field& v);  // p2 + p3 (divergence-free part)

// R v: symmetric trace-free (2,0)-tensor with div R v = v - mean v.
Field antidivergence(const Field& v);

// B v = (-Delta)^{-1} d flat(v): 2-form potential with sharp(delta B v) = P2 v.
Field biot_savart(const Field& v);

// || P1(X . grad Y) - P1(Y . grad X) ||_0 for divergence-free X, Y.
// Throws when an input fails the solenoidality check.
double p1_symmetry_residual(const Field& X, const Field& Y, double div_tol = 1e-8);

// pressure with zero mean from the Leray decomposition of div(v (x) v) + f
Field recover_pressure(const Field& v, const Field* forcing = nullptr);

double divergence_sup(const Field& v);  // ||div v||_0, spectral

}  // namespace wildflow
