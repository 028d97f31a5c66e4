#pragma once
// Smooth temporal ramps and cutoffs built from the integrated bump
// exp(-1/(s(1-s))), normalized to climb from 0 to 1.

namespace wildflow {

// C-infinity ramp: 0 for t <= lo, 1 for t >= hi, strictly increasing between.
struct SmoothRamp {
  double lo = 0.0, hi = 1.0;

  double value(double t) const;
  double deriv(double t) const;   // analytic first derivative
  double deriv2(double t) const;  // analytic second derivative
};

// normalized integrated bump r(s) on [0,1] and its density
double ramp_shape(double s);
double ramp_shape_deriv(double s);
double ramp_shape_deriv2(double s);

}  // namespace wildflow
