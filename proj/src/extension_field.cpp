#include "conelab/extension_field.hpp"

#include <fftw3.h>
#include <omp.h>

#include <cmath>
#include <cstring>
#include <mutex>
#include <sstream>

namespace conelab::ext {

double required_h(const Vec3& x) {
  /* phase gradient in xi is x' + x_3 * xi/|xi|, so |x'| + |x_3| bounds it */
  double g = std::hypot(x[0], x[1]) + std::fabs(x[2]);
  if (g == 0) return std::numeric_limits<double>::infinity();
  return kPi / g;
}

std::complex<double> eval_direct(const freq::AnnulusFunction& f,
                                 const Vec3& x) {
  double need = required_h(x);
  if (f.grid.h > need) {
    std::ostringstream msg;
    msg << "eval_direct: point too far for grid spacing h=" << f.grid.h
        << "; need h <= " << need << " (|x'| + |x_3| = " << kPi / need << ")";
    throw contract_error(msg.str());
  }
  const auto& g = f.grid;
  double sr = 0, si = 0;
#pragma omp parallel for reduction(+ : sr, si) schedule(static)
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix < g.n; ++ix) {
      const auto& v = f.at(ix, iy);
      if (v.real() == 0 && v.imag() == 0) continue;
      double x1 = g.coord(ix), x2 = g.coord(iy);
      double ph = x[0] * x1 + x[1] * x2 + x[2] * std::hypot(x1, x2);
      double c = std::cos(ph), s = std::sin(ph);
      sr += v.real() * c - v.imag() * s;
      si += v.real() * s + v.imag() * c;
    }
  }
  return std::complex<double>(sr, si) * (g.h * g.h);
}

/* ---- slice engine -------------------------------------------------------- */

const std::complex<double>& SpatialSlice::at(int kx, int ky) const {
  int ix = ((kx % p) + p) % p;
  int iy = ((ky % p) + p) % p;
  return values[ix + (size_t)p * iy];
}

double SpatialSlice::coord(int k) const {
  int i = ((k % p) + p) % p;
  return i < p / 2 ? dz * i : dz * (i - p);
}

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

SliceEngine::SliceEngine(const freq::GridSpec& g, int pad_factor) : grid_(g) {
  require(pad_factor >= 1, "SliceEngine: pad_factor must be >= 1");
  p_ = g.n * pad_factor;
  dz_ = 2 * kPi / (p_ * g.h);
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_complex* buf = fftw_alloc_complex((size_t)p_ * p_);
  require(buf != nullptr, "SliceEngine: allocation failed");
  plan_ = fftw_plan_dft_2d(p_, p_, buf, buf, FFTW_BACKWARD,
                           FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(buf);
  require(plan_ != nullptr, "SliceEngine: planning failed");
}

SliceEngine::~SliceEngine() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan((fftw_plan)plan_);
}

SpatialSlice SliceEngine::evaluate(const freq::AnnulusFunction& f,
                                   double x3) const {
  require(f.grid == grid_, "SliceEngine: grid mismatch");
  SpatialSlice out;
  out.x3 = x3;
  out.p = p_;
  out.dz = dz_;
  std::vector<std::complex<double>> buf((size_t)p_ * p_, {0, 0});
  const auto& g = grid_;
  for (int iy = 0; iy < g.n; ++iy)
    for (int ix = 0; ix < g.n; ++ix) {
      const auto& v = f.at(ix, iy);
      if (v.real() == 0 && v.imag() == 0) continue;
      double x1 = g.coord(ix), x2 = g.coord(iy);
      double ph = x3 * std::hypot(x1, x2);
      buf[ix + (size_t)p_ * iy] =
          v * std::complex<double>(std::cos(ph), std::sin(ph));
    }
  fftw_execute_dft((fftw_plan)plan_,
                   reinterpret_cast<fftw_complex*>(buf.data()),
                   reinterpret_cast<fftw_complex*>(buf.data()));
  /* post-multiply by h^2 exp(i lo (x1' + x2')) */
  out.values.resize(buf.size());
  const double h2 = g.h * g.h;
  for (int ky = 0; ky < p_; ++ky) {
    double y2 = ky < p_ / 2 ? dz_ * ky : dz_ * (ky - p_);
    for (int kx = 0; kx < p_; ++kx) {
      double y1 = kx < p_ / 2 ? dz_ * kx : dz_ * (kx - p_);
      double ph = g.lo * (y1 + y2);
      out.values[kx + (size_t)p_ * ky] =
          buf[kx + (size_t)p_ * ky] * h2 *
          std::complex<double>(std::cos(ph), std::sin(ph));
    }
  }
  return out;
}

/* ---- ball norms ---------------------------------------------------------- */

double norm_l2_ball_grid(const freq::AnnulusFunction& f, const Ball& ball,
                         const SliceEngine& engine) {
  const double dz = engine.dz();
  const int p = engine.padded();
  require(ball.radius > 0, "norm_l2_ball_grid: need positive radius");
  require(ball.radius < p / 2 * dz,
          "norm_l2_ball_grid: ball exceeds the dual-grid window");
  int k3_lo = (int)std::ceil((ball.center[2] - ball.radius) / dz);
  int k3_hi = (int)std::floor((ball.center[2] + ball.radius) / dz);
  double sum = 0;
#pragma omp parallel for reduction(+ : sum) schedule(dynamic)
  for (int k3 = k3_lo; k3 <= k3_hi; ++k3) {
    double x3 = k3 * dz;
    SpatialSlice slice = engine.evaluate(f, x3);
    double d3 = x3 - ball.center[2];
    double rho2 = ball.radius * ball.radius - d3 * d3;
    if (rho2 <= 0) continue;
    double rho = std::sqrt(rho2);
    int a_lo = (int)std::ceil((ball.center[0] - rho) / dz);
    int a_hi = (int)std::floor((ball.center[0] + rho) / dz);
    double part = 0;
    for (int ka = a_lo; ka <= a_hi; ++ka) {
      double x1 = ka * dz;
      double d1 = x1 - ball.center[0];
      double w2 = rho2 - d1 * d1;
      if (w2 < 0) continue;
      double w = std::sqrt(w2);
      int b_lo = (int)std::ceil((ball.center[1] - w) / dz);
      int b_hi = (int)std::floor((ball.center[1] + w) / dz);
      for (int kb = b_lo; kb <= b_hi; ++kb)
        part += std::norm(slice.at(ka, kb));
    }
    sum += part;
  }
  return std::sqrt(sum * dz * dz * dz);
}

BallNormResult norm_l2_ball_mc(const freq::AnnulusFunction& f,
                               const Ball& ball, int strata_per_axis,
                               CounterRng& rng) {
  require(strata_per_axis >= 1, "norm_l2_ball_mc: need at least one stratum");
  const int s = strata_per_axis;
  const double cell = 2 * ball.radius / s;
  const double cell_vol = cell * cell * cell;
  size_t active = 0;
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j)
      for (int l = 0; l < s; ++l) ++active;
  guard_evaluations(2 * active * f.values.size() / 4);

  double total = 0, var_total = 0;
  size_t evals = 0;
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j)
      for (int l = 0; l < s; ++l) {
        double vals[2];
        for (int rep = 0; rep < 2; ++rep) {
          Vec3 x{ball.center[0] - ball.radius + (i + rng.uniform()) * cell,
                 ball.center[1] - ball.radius + (j + rng.uniform()) * cell,
                 ball.center[2] - ball.radius + (l + rng.uniform()) * cell};
          double v = 0;
          if (ball.contains(x)) {
            v = std::norm(eval_direct(f, x));
            ++evals;
          }
          vals[rep] = v;
        }
        double mean = 0.5 * (vals[0] + vals[1]);
        double d = vals[0] - mean;
        total += cell_vol * mean;
        /* variance of the 2-sample mean inside one stratum */
        var_total += cell_vol * cell_vol * d * d;
      }
  BallNormResult res;
  res.value = std::sqrt(std::max(0.0, total));
  res.std_error = std::sqrt(var_total);
  res.evaluations = evals;
  return res;
}

double annulus_area_estimate(double h) {
  freq::GridSpec g = freq::GridSpec::standard(h);
  size_t count = 0;
  for (int iy = 0; iy < g.n; ++iy)
    for (int ix = 0; ix < g.n; ++ix) {
      double r = std::hypot(g.coord(ix), g.coord(iy));
      if (r >= 1 && r <= 2) ++count;
    }
  return count * h * h;
}

double richardson(double coarse, double fine, double order) {
  require(order > 0, "richardson: need positive order");
  double w = std::pow(2.0, order);
  return (w * fine - coarse) / (w - 1);
}

double recenter_max_error(const freq::AnnulusFunction& f, const Vec3& y,
                          const std::vector<Vec3>& points) {
  require(!points.empty(), "recenter_max_error: need test points");
  freq::AnnulusFunction g = f;
  g.modulate_phase(y[0], y[1], y[2]);
  double worst = 0;
  for (const Vec3& x : points) {
    std::complex<double> lhs =
        eval_direct(f, {x[0] + y[0], x[1] + y[1], x[2] + y[2]});
    std::complex<double> rhs = eval_direct(g, x);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

void guard_evaluations(size_t requested, size_t budget) {
  if (requested > budget) {
    std::ostringstream msg;
    msg << "resource guard: evaluation budget " << budget
        << " exceeded (requested " << requested << ")";
    throw resource_guard_error(msg.str());
  }
}

}  // namespace conelab::ext
