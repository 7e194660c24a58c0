#pragma once

// Least-squares line fits and the exponential-decay model shared by the
// resolvent, moment, spectral and gronwall profiles.

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "fmlab/core.hpp"

namespace fmlab {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double slope_stderr = 0.0;
  int points = 0;
};

inline LineFit fit_line(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size())
    throw ValidationError("fit_line: size mismatch");
  const int n = static_cast<int>(xs.size());
  if (n < 2) throw NumericError("fit_line: need at least 2 points");
  double sx = 0, sy = 0;
  for (int i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx <= 0) throw NumericError("fit_line: degenerate abscissae");
  LineFit f;
  f.points = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0;
  for (int i = 0; i < n; ++i) {
    const double e = ys[i] - (f.intercept + f.slope * xs[i]);
    ssr += e * e;
  }
  f.r2 = (syy > 0) ? std::max(0.0, 1.0 - ssr / syy) : 1.0;
  f.slope_stderr = (n > 2) ? std::sqrt(ssr / ((n - 2) * sxx)) : 0.0;
  return f;
}

// Exponential envelope y ~ C exp(-mu x). Rates are per unit of the abscissa
// (physical distance where profiles are involved).
struct DecayModel {
  double prefactor = 0.0;   // C
  double rate = 0.0;        // mu
  double r2 = 0.0;
  double rate_stderr = 0.0;
  int points = 0;
  double r_min = 0.0;
  double r_max = 0.0;
};

// Fits log(y) against x after dropping entries at or below `floor`
// (protects against solver noise baselines). Throws when fewer than
// `min_points` usable samples remain.
inline DecayModel fit_exponential_decay(std::span<const double> xs,
                                        std::span<const double> ys,
                                        double floor = 0.0,
                                        int min_points = 4) {
  if (xs.size() != ys.size())
    throw ValidationError("fit_exponential_decay: size mismatch");
  std::vector<double> fx, fy;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (std::isfinite(ys[i]) && ys[i] > floor) {
      fx.push_back(xs[i]);
      fy.push_back(std::log(ys[i]));
    }
  }
  if (static_cast<int>(fx.size()) < min_points)
    throw NumericError("fit_exponential_decay: fewer than " +
                       std::to_string(min_points) + " usable points");
  LineFit lf = fit_line(fx, fy);
  DecayModel m;
  m.prefactor = std::exp(lf.intercept);
  m.rate = -lf.slope;
  m.r2 = lf.r2;
  m.rate_stderr = lf.slope_stderr;
  m.points = lf.points;
  m.r_min = *std::min_element(fx.begin(), fx.end());
  m.r_max = *std::max_element(fx.begin(), fx.end());
  return m;
}

}  // namespace fmlab
