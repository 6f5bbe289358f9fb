#ifndef CONELAB_NUMERICS_HPP
#define CONELAB_NUMERICS_HPP

/* Shared numeric vocabulary for the lab.
 *
 * Two parallel arithmetic routes run through most modules:
 *   - an exact route on rationals (gmp-backed) for ladder identities that
 *     must close exactly, and
 *   - a float route on long double (64-bit mantissa on x86) for everything
 *     measured, cross-checked against the exact route where both exist.
 * Big floats (mpfr) appear only where quantities leave the long double
 * exponent range (deep delta ladders).
 */

#include <boost/multiprecision/gmp.hpp>
#include <boost/multiprecision/mpfr.hpp>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace conelab {

using Rat = boost::multiprecision::mpq_rational;
using BigFloat = boost::multiprecision::mpfr_float_100;

/* Contract violation: a caller broke a documented precondition.  Distinct
 * from numeric failure so tests can assert on the category. */
struct contract_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/* A stated resource guard tripped (runaway budgets, not caller bugs). */
struct resource_guard_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw contract_error(what);
}

inline double to_double(const Rat& q) {
  /* GMP's own conversion scales numerator and denominator together, so
   * huge operands cannot overflow on the way out. */
  return q.template convert_to<double>();
}

inline double to_double(const BigFloat& x) { return static_cast<double>(x); }

inline long double to_long_double(const Rat& q) {
  /* Convert via mpfr so huge numerator/denominator pairs stay accurate. */
  BigFloat n(boost::multiprecision::numerator(q));
  BigFloat d(boost::multiprecision::denominator(q));
  return static_cast<long double>(BigFloat(n / d));
}

inline bool close(long double a, long double b, long double tol) {
  return std::fabs(static_cast<double>(a - b)) <= tol;
}

inline bool close_rel(long double a, long double b, long double tol) {
  long double scale = std::max<long double>({1.0L, std::fabs((double)a),
                                             std::fabs((double)b)});
  return std::fabs((double)(a - b)) <= tol * scale;
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace conelab

#endif
