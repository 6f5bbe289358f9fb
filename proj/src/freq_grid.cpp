#include "conelab/freq_grid.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "conelab/profile.hpp"

namespace conelab::freq {

GridSpec GridSpec::standard(double h) {
  require(h > 0 && h <= 0.25, "GridSpec: spacing must lie in (0, 1/4]");
  GridSpec g;
  g.h = h;
  g.lo = -2.25;
  g.n = (int)std::llround(4.5 / h);
  require(std::fabs(g.n * h - 4.5) < 1e-12,
          "GridSpec: spacing must divide the window 4.5 evenly");
  return g;
}

AnnulusFunction AnnulusFunction::zeros(const GridSpec& g) {
  AnnulusFunction f;
  f.grid = g;
  f.values.assign((size_t)g.n * g.n, {0, 0});
  return f;
}

AnnulusFunction AnnulusFunction::annulus_indicator(const GridSpec& g) {
  AnnulusFunction f = zeros(g);
  for (int iy = 0; iy < g.n; ++iy)
    for (int ix = 0; ix < g.n; ++ix) {
      double r = std::hypot(g.coord(ix), g.coord(iy));
      if (r >= 1 && r <= 2) f.at(ix, iy) = 1;
    }
  return f;
}

AnnulusFunction AnnulusFunction::smooth_annulus(const GridSpec& g,
                                                double ramp) {
  require(ramp > 0 && ramp < 0.5, "smooth_annulus: ramp must lie in (0, 1/2)");
  AnnulusFunction f = zeros(g);
  for (int iy = 0; iy < g.n; ++iy)
    for (int ix = 0; ix < g.n; ++ix) {
      double r = std::hypot(g.coord(ix), g.coord(iy));
      f.at(ix, iy) = profile::plateau(r, 1 + ramp, 2 - ramp, ramp);
    }
  return f;
}

AnnulusFunction AnnulusFunction::random_smooth(const GridSpec& g,
                                               CounterRng& rng, int modes,
                                               double max_shift) {
  require(modes >= 1, "random_smooth: need at least one mode");
  AnnulusFunction f = smooth_annulus(g);
  std::vector<std::array<double, 2>> shifts;
  std::vector<std::complex<double>> coeffs;
  for (int m = 0; m < modes; ++m) {
    shifts.push_back({rng.uniform(-max_shift, max_shift),
                      rng.uniform(-max_shift, max_shift)});
    coeffs.push_back({rng.normal(), rng.normal()});
  }
  for (int iy = 0; iy < g.n; ++iy)
    for (int ix = 0; ix < g.n; ++ix) {
      auto& v = f.at(ix, iy);
      if (v == std::complex<double>(0, 0)) continue;
      double x1 = g.coord(ix), x2 = g.coord(iy);
      std::complex<double> s = 0;
      for (int m = 0; m < modes; ++m) {
        double ph = shifts[m][0] * x1 + shifts[m][1] * x2;
        s += coeffs[m] * std::complex<double>(std::cos(ph), std::sin(ph));
      }
      v *= s;
    }
  return f;
}

void AnnulusFunction::mask_annulus(double r_lo, double r_hi) {
  for (int iy = 0; iy < grid.n; ++iy)
    for (int ix = 0; ix < grid.n; ++ix) {
      double r = std::hypot(grid.coord(ix), grid.coord(iy));
      if (r < r_lo || r > r_hi) at(ix, iy) = 0;
    }
}

void AnnulusFunction::modulate_phase(double y1, double y2, double y3) {
  for (int iy = 0; iy < grid.n; ++iy)
    for (int ix = 0; ix < grid.n; ++ix) {
      auto& v = at(ix, iy);
      if (v == std::complex<double>(0, 0)) continue;
      double x1 = grid.coord(ix), x2 = grid.coord(iy);
      double ph = y1 * x1 + y2 * x2 + y3 * std::hypot(x1, x2);
      v *= std::complex<double>(std::cos(ph), std::sin(ph));
    }
}

void AnnulusFunction::scale(double s) {
  for (auto& v : values) v *= s;
}

void AnnulusFunction::accumulate(const AnnulusFunction& other,
                                 std::complex<double> coeff) {
  require(grid == other.grid, "accumulate: grid mismatch");
  for (size_t i = 0; i < values.size(); ++i)
    values[i] += coeff * other.values[i];
}

double AnnulusFunction::l2_norm() const {
  double s = 0;
  for (const auto& v : values) s += std::norm(v);
  return grid.h * std::sqrt(s);
}

std::complex<double> AnnulusFunction::integral() const {
  std::complex<double> s = 0;
  for (const auto& v : values) s += v;
  return s * (grid.h * grid.h);
}

double AnnulusFunction::max_abs() const {
  double m = 0;
  for (const auto& v : values) m = std::max(m, std::abs(v));
  return m;
}

namespace {
constexpr char kMagic[8] = {'C', 'O', 'N', 'E', 'G', 'R', 'D', '1'};
}

void AnnulusFunction::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "save: cannot open " + path);
  out.write(kMagic, sizeof kMagic);
  std::int64_t n = grid.n;
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&grid.h), sizeof grid.h);
  out.write(reinterpret_cast<const char*>(&grid.lo), sizeof grid.lo);
  out.write(reinterpret_cast<const char*>(values.data()),
            (std::streamsize)(values.size() * sizeof(std::complex<double>)));
  require(out.good(), "save: write failed for " + path);
}

AnnulusFunction AnnulusFunction::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "load: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  require(in.good() && std::memcmp(magic, kMagic, sizeof magic) == 0,
          "load: bad header in " + path);
  std::int64_t n = 0;
  GridSpec g;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(&g.h), sizeof g.h);
  in.read(reinterpret_cast<char*>(&g.lo), sizeof g.lo);
  require(in.good() && n > 0 && n < (1 << 20) && g.h > 0,
          "load: corrupt header in " + path);
  g.n = (int)n;
  AnnulusFunction f = zeros(g);
  in.read(reinterpret_cast<char*>(f.values.data()),
          (std::streamsize)(f.values.size() * sizeof(std::complex<double>)));
  require(in.good(), "load: truncated data in " + path);
  return f;
}

}  // namespace conelab::freq
