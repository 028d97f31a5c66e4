#include "wildflow/cutoffs.hpp"

#include <cmath>
#include <mutex>
#include <vector>

namespace wildflow {

namespace {

double bump01(double s) {
  if (s <= 0.0 || s >= 1.0) return 0.0;
  return std::exp(-1.0 / (s * (1.0 - s)));
}

double bump01_deriv(double s) {
  if (s <= 0.0 || s >= 1.0) return 0.0;
  double u = s * (1.0 - s);
  return bump01(s) * (1.0 - 2.0 * s) / (u * u);
}

// cumulative table of the bump integral on a fine uniform grid
struct ShapeTable {
  std::vector<double> cum;
  double norm = 1.0;
  static constexpr int kN = 1 << 15;

  ShapeTable() {
    cum.assign(kN + 1, 0.0);
    double h = 1.0 / kN;
    for (int i = 1; i <= kN; ++i) {
      // Simpson on each cell
      double a = (i - 1) * h, b = i * h;
      cum[i] = cum[i - 1] + h / 6.0 * (bump01(a) + 4.0 * bump01(0.5 * (a + b)) + bump01(b));
    }
    norm = cum[kN];
  }
};

const ShapeTable& shape_table() {
  static ShapeTable t;
  return t;
}

}  // namespace

double ramp_shape(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  const ShapeTable& t = shape_table();
  double x = s * ShapeTable::kN;
  int i = static_cast<int>(x);
  if (i >= ShapeTable::kN) i = ShapeTable::kN - 1;
  double fr = x - i;
  double h = 1.0 / ShapeTable::kN;
  double a = i * h;
  // table value at the cell start plus 5-point Gauss on the remainder
  static const double gx[5] = {0.04691007703066800, 0.23076534494715845, 0.5,
                               0.76923465505284155, 0.95308992296933200};
  static const double gw[5] = {0.11846344252809454, 0.23931433524968324,
                               0.28444444444444444, 0.23931433524968324,
                               0.11846344252809454};
  double rem = 0.0;
  for (int q = 0; q < 5; ++q) rem += gw[q] * bump01(a + fr * h * gx[q]);
  rem *= fr * h;
  return (t.cum[i] + rem) / t.norm;
}

double ramp_shape_deriv(double s) { return bump01(s) / shape_table().norm; }

double ramp_shape_deriv2(double s) { return bump01_deriv(s) / shape_table().norm; }

double SmoothRamp::value(double t) const {
  return ramp_shape((t - lo) / (hi - lo));
}

double SmoothRamp::deriv(double t) const {
  return ramp_shape_deriv((t - lo) / (hi - lo)) / (hi - lo);
}

double SmoothRamp::deriv2(double t) const {
  return ramp_shape_deriv2((t - lo) / (hi - lo)) / ((hi - lo) * (hi - lo));
}

}  // namespace wildflow
