#ifndef LRVLAB_SPECIAL_HPP
#define LRVLAB_SPECIAL_HPP

// Distribution functions used by the tests and diagnostics.
//
// The normal and chi-square(1) CDFs go through std::erf / std::erfc, which
// glibc evaluates to within a couple of ulps; that keeps every CDF here well
// inside a 1e-12 absolute error budget. The normal quantile is Wichura's
// AS241 (PPND16), accurate to about 1e-16 relative, and is the fixed map
// from uniforms to normals used by the random streams.

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/students_t.hpp>

#include "lrvlab/error.hpp"

namespace lrvlab {

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// Inverse standard normal CDF, AS241. p must lie in (0, 1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw InvalidInput("normal_quantile: p outside [0, 1]");
  }
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r +
              67265.770927008700853) * r + 45921.953931549871457) * r +
            13731.693765509461125) * r + 1971.5909503065514427) * r +
          133.14166789178437745) * r + 3.387132872796366608);
    const double den =
        (((((((r * 5226.495278852545925 + 28729.085735721942674) * r +
              39307.89580009271061) * r + 21213.794301586595867) * r +
            5394.1960214247511077) * r + 687.1870074920579083) * r +
          42.313330701600911252) * r + 1.0);
    return q * num / den;
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r +
                0.24178072517745061177) * r + 1.27045825245236838258) * r +
              3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r +
                0.0151986665636164571966) * r + 0.14810397642748007459) * r +
              0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r +
                0.0012426609473880784386) * r + 0.026532189526576123093) * r +
              0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r +
                1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
              0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

/// P(chi^2_1 <= t).
inline double chi2_1_cdf(double t) {
  if (!(t > 0.0)) return 0.0;
  return std::erf(std::sqrt(0.5 * t));
}

/// P(chi^2_1 > t), computed without cancellation.
inline double chi2_1_sf(double t) {
  if (!(t > 0.0)) return 1.0;
  return std::erfc(std::sqrt(0.5 * t));
}

inline double student_t_cdf(unsigned df, double t) {
  if (df == 0) throw InvalidInput("student_t_cdf: df must be >= 1");
  return boost::math::cdf(boost::math::students_t_distribution<double>(df), t);
}

/// p-quantile of Student's t with df degrees of freedom.
inline double student_t_quantile(unsigned df, double p) {
  if (df == 0) throw InvalidInput("student_t_quantile: df must be >= 1");
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("student_t_quantile: p outside (0, 1)");
  return boost::math::quantile(boost::math::students_t_distribution<double>(df), p);
}

}  // namespace lrvlab

#endif  // LRVLAB_SPECIAL_HPP
