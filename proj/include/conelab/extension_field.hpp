#pragma once

#include <complex>
#include <vector>

#include "conelab/cone_geometry.hpp"
#include "conelab/freq_grid.hpp"
#include "conelab/rng.hpp"

namespace conelab::ext {

using geometry::Ball;
using geometry::Vec3;

/* Largest grid spacing at which the oscillatory quadrature below is still
 * sampled adequately (phase advances by at most pi per grid step). */
double required_h(const Vec3& x);

/* E f(x) = h^2 sum_xi exp(i (x' . xi + x_3 |xi|)) f(xi).
 * Refuses (contract_error) when |x| is too large for the grid spacing,
 * reporting the spacing that would be required. */
std::complex<double> eval_direct(const freq::AnnulusFunction& f, const Vec3& x);

/* Values of E f on one horizontal slice x_3 = const of the dual grid. */
struct SpatialSlice {
  double x3 = 0;
  int p = 0;      // samples per axis
  double dz = 0;  // spacing
  std::vector<std::complex<double>> values;  // index kx + p*ky, DFT order

  /* kx, ky may be negative; indices wrap */
  const std::complex<double>& at(int kx, int ky) const;
  double coord(int k) const;  // signed coordinate of DFT index k
};

/* Zero-padded FFT evaluator for whole slices at once; evaluate() is
 * thread-safe after construction. */
class SliceEngine {
 public:
  explicit SliceEngine(const freq::GridSpec& g, int pad_factor = 2);
  ~SliceEngine();
  SliceEngine(const SliceEngine&) = delete;
  SliceEngine& operator=(const SliceEngine&) = delete;

  SpatialSlice evaluate(const freq::AnnulusFunction& f, double x3) const;
  int padded() const { return p_; }
  double dz() const { return dz_; }
  const freq::GridSpec& grid() const { return grid_; }

 private:
  freq::GridSpec grid_;
  int p_;
  double dz_;
  void* plan_;  // fftw_plan
};

/* || E f ||_{L^2(B)} by a Riemann sum over dual-grid points in the ball,
 * one FFT per slice (OpenMP across slices). */
double norm_l2_ball_grid(const freq::AnnulusFunction& f, const Ball& ball,
                         const SliceEngine& engine);

struct BallNormResult {
  double value = 0;        // estimated L2 norm
  double std_error = 0;    // standard error of the squared-norm estimate
  size_t evaluations = 0;  // direct evaluations spent
};

/* Stratified Monte Carlo estimate of the same norm with direct quadrature
 * at each sample point; deterministic in the rng state. */
BallNormResult norm_l2_ball_mc(const freq::AnnulusFunction& f,
                               const Ball& ball, int strata_per_axis,
                               CounterRng& rng);

/* |E 1_annulus(0)| computed at the given spacing: the Riemann count of
 * annulus grid points times h^2 */
double annulus_area_estimate(double h);

/* eliminate the leading O(h^order) error from values at h and h/2 */
double richardson(double coarse, double fine, double order);

/* max over the test points of |E f(x + y) - E g(x)| where g is f modulated
 * by the phase of the recentering map; an exact identity up to rounding */
double recenter_max_error(const freq::AnnulusFunction& f, const Vec3& y,
                          const std::vector<Vec3>& points);

/* Refuse (resource_guard_error) when a routine is about to spend more than
 * the evaluation budget. */
void guard_evaluations(size_t requested, size_t budget = 1000000000ull);

}  // namespace conelab::ext
