#pragma once

#include <complex>
#include <string>
#include <vector>

#include "conelab/numerics.hpp"
#include "conelab/rng.hpp"

namespace conelab::freq {

/* Uniform square grid covering [lo, lo + n*h) in both frequency axes. */
struct GridSpec {
  int n = 0;
  double h = 0;
  double lo = 0;

  double coord(int i) const { return lo + i * h; }
  double extent() const { return n * h; }
  bool operator==(const GridSpec& o) const {
    return n == o.n && h == o.h && lo == o.lo;
  }

  /* the working window [-2.25, 2.25) with the given spacing; the window
   * covers the annulus 1 <= |xi| <= 2 with margin for smooth cutoffs */
  static GridSpec standard(double h = 1.0 / 256);
};

/* Complex samples of a frequency-side function on a GridSpec; storage is
 * row-major with index ix + n*iy. */
class AnnulusFunction {
 public:
  GridSpec grid;
  std::vector<std::complex<double>> values;

  static AnnulusFunction zeros(const GridSpec& g);
  /* exact indicator of the closed annulus 1 <= |xi| <= 2 */
  static AnnulusFunction annulus_indicator(const GridSpec& g);
  /* smooth radial plateau equal to 1 on [1 + ramp, 2 - ramp], supported in
   * the annulus */
  static AnnulusFunction smooth_annulus(const GridSpec& g, double ramp = 0.05);
  /* smooth annulus profile times a sum of `modes` random plane-wave
   * modulations; deterministic in the rng state */
  static AnnulusFunction random_smooth(const GridSpec& g, CounterRng& rng,
                                       int modes = 6, double max_shift = 8);

  std::complex<double>& at(int ix, int iy) { return values[ix + (size_t)grid.n * iy]; }
  const std::complex<double>& at(int ix, int iy) const {
    return values[ix + (size_t)grid.n * iy];
  }

  /* zero all samples outside the closed annulus [r_lo, r_hi] */
  void mask_annulus(double r_lo = 1, double r_hi = 2);
  /* multiply by exp(i (y1 xi_1 + y2 xi_2 + y3 |xi|)) */
  void modulate_phase(double y1, double y2, double y3);
  void scale(double s);
  void accumulate(const AnnulusFunction& other, std::complex<double> coeff = 1);

  /* continuum-normalized L2 norm sqrt(h^2 sum |v|^2) */
  double l2_norm() const;
  std::complex<double> integral() const;
  double max_abs() const;

  void save(const std::string& path) const;
  static AnnulusFunction load(const std::string& path);
};

}  // namespace conelab::freq
