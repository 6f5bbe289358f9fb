#include "conelab/wave_packets.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <unordered_map>

namespace conelab::packets {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

double wrap_angle(double a) {
  a = std::fmod(a, 2 * kPi);
  if (a < 0) a += 2 * kPi;
  return a;
}

double circ_dist(double a, double b) {
  double d = std::fmod(std::fabs(a - b), 2 * kPi);
  return std::min(d, 2 * kPi - d);
}

/* directed distance between circular arcs [c1 +- h1] -> [c2 +- h2] */
double arc_directed_dist(double c1, double h1, double c2, double h2) {
  return std::max(0.0, circ_dist(c1, c2) + h1 - h2);
}
}  // namespace

struct PacketDecomposition::FftPlans {
  int P = 0;
  fftw_plan fwd = nullptr, bwd = nullptr;
  FftPlans(int p) : P(p) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_complex* buf = fftw_alloc_complex((size_t)P * P);
    require(buf != nullptr, "wave packets: fft buffer allocation failed");
    fwd = fftw_plan_dft_2d(P, P, buf, buf, FFTW_FORWARD,
                           FFTW_ESTIMATE | FFTW_UNALIGNED);
    bwd = fftw_plan_dft_2d(P, P, buf, buf, FFTW_BACKWARD,
                           FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(buf);
    require(fwd && bwd, "wave packets: fft planning failed");
  }
  ~FftPlans() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
  }
};

int PacketDecomposition::spatial_size() const {
  return grid.n * par.pad_factor;
}

double PacketDecomposition::dz() const {
  return 2 * kPi / (spatial_size() * grid.h);
}

std::vector<std::complex<double>> PacketDecomposition::spatial_from_freq(
    const AnnulusFunction& g) const {
  const int P = spatial_size();
  require(g.grid == grid, "spatial_from_freq: grid mismatch");
  std::vector<std::complex<double>> buf((size_t)P * P, {0, 0});
  for (int iy = 0; iy < grid.n; ++iy)
    for (int ix = 0; ix < grid.n; ++ix)
      buf[ix + (size_t)P * iy] = g.at(ix, iy);
  fftw_execute_dft(plans_->bwd, reinterpret_cast<fftw_complex*>(buf.data()),
                   reinterpret_cast<fftw_complex*>(buf.data()));
  const double h2 = grid.h * grid.h;
  const double step = dz();
  for (int ky = 0; ky < P; ++ky) {
    double z2 = ky < P / 2 ? step * ky : step * (ky - P);
    for (int kx = 0; kx < P; ++kx) {
      double z1 = kx < P / 2 ? step * kx : step * (kx - P);
      double ph = grid.lo * (z1 + z2);
      buf[kx + (size_t)P * ky] *=
          h2 * std::complex<double>(std::cos(ph), std::sin(ph));
    }
  }
  return buf;
}

AnnulusFunction PacketDecomposition::freq_from_spatial(
    const std::vector<std::complex<double>>& w) const {
  const int P = spatial_size();
  require((int)w.size() == P * P, "freq_from_spatial: size mismatch");
  std::vector<std::complex<double>> buf = w;
  const double step = dz();
  for (int ky = 0; ky < P; ++ky) {
    double z2 = ky < P / 2 ? step * ky : step * (ky - P);
    for (int kx = 0; kx < P; ++kx) {
      double z1 = kx < P / 2 ? step * kx : step * (kx - P);
      double ph = -grid.lo * (z1 + z2);
      buf[kx + (size_t)P * ky] *=
          std::complex<double>(std::cos(ph), std::sin(ph));
    }
  }
  fftw_execute_dft(plans_->fwd, reinterpret_cast<fftw_complex*>(buf.data()),
                   reinterpret_cast<fftw_complex*>(buf.data()));
  AnnulusFunction out = AnnulusFunction::zeros(grid);
  const double scale = 1.0 / ((double)P * P * grid.h * grid.h);
  for (int iy = 0; iy < grid.n; ++iy)
    for (int ix = 0; ix < grid.n; ++ix)
      out.at(ix, iy) = buf[ix + (size_t)P * iy] * scale;
  return out;
}

std::vector<std::complex<double>> PacketDecomposition::sector_field(
    int theta) const {
  require(theta >= 0 && theta < sector_count, "sector_field: bad index");
  AnnulusFunction g = AnnulusFunction::zeros(grid);
  for (int iy = 0; iy < grid.n; ++iy)
    for (int ix = 0; ix < grid.n; ++ix) {
      const auto& v = f.at(ix, iy);
      if (v.real() == 0 && v.imag() == 0) continue;
      double ang = std::atan2(grid.coord(iy), grid.coord(ix));
      double w = angular_->weight(theta, wrap_angle(ang));
      if (w != 0) g.at(ix, iy) = v * w;
    }
  return spatial_from_freq(g);
}

double PacketDecomposition::window(const PacketIndex& idx, double z1,
                                   double z2) const {
  double w = cube_axis_->weight(idx.vi, z1) * cube_axis_->weight(idx.vj, z2);
  if (w == 0) return 0;
  double phi = angular_->center(idx.theta);
  double t = z1 * std::cos(phi) + z2 * std::sin(phi);
  return w * plate_axis_->weight(idx.l, t);
}

namespace {
struct ActiveWindow {
  PacketIndex idx;
  double weight;
};
}  // namespace

/* dual-grid indices whose (signed, DFT-order) coordinate lies in [lo, hi] */
static std::vector<int> axis_indices(double lo, double hi, double step,
                                     int P) {
  std::vector<int> out;
  if (hi - lo >= P * step) {
    out.resize(P);
    for (int k = 0; k < P; ++k) out[k] = k;
    return out;
  }
  long m_lo = (long)std::ceil(lo / step);
  long m_hi = (long)std::floor(hi / step);
  m_lo = std::max(m_lo, -(long)P / 2);
  m_hi = std::min(m_hi, (long)P / 2 - 1);
  for (long m = m_lo; m <= m_hi; ++m)
    out.push_back((int)((m % P + P) % P));
  return out;
}

/* enumerate all packets of one sector with nonzero window at (z1, z2) */
static void active_windows(const profile::LinePartition& cube,
                           const profile::LinePartition& plate, int theta,
                           double xi1, double xi2, double z1, double z2,
                           std::vector<ActiveWindow>& out) {
  out.clear();
  auto [i_lo, i_hi] = cube.active_range(z1);
  auto [j_lo, j_hi] = cube.active_range(z2);
  double t = z1 * xi1 + z2 * xi2;
  auto [l_lo, l_hi] = plate.active_range(t);
  for (long i = i_lo; i <= i_hi; ++i) {
    double wi = cube.weight(i, z1);
    if (wi == 0) continue;
    for (long j = j_lo; j <= j_hi; ++j) {
      double wj = cube.weight(j, z2);
      if (wj == 0) continue;
      for (long l = l_lo; l <= l_hi; ++l) {
        double wl = plate.weight(l, t);
        if (wl == 0) continue;
        out.push_back(
            {PacketIndex{theta, (int)i, (int)j, (int)l}, wi * wj * wl});
      }
    }
  }
}

double required_grid_h(double r) { return 1.0 / (8 * std::sqrt(r)); }

PacketDecomposition decompose(const AnnulusFunction& f, double r, double delta,
                              const DecomposeParams& par) {
  require(r >= 4, "decompose: need r >= 4");
  require(delta >= 0 && delta < 0.25, "decompose: delta out of range");
  if (f.grid.h > required_grid_h(r) + 1e-15) {
    std::ostringstream msg;
    msg << "decompose: grid spacing h=" << f.grid.h
        << " does not resolve scale r=" << r << "; need h <= "
        << required_grid_h(r);
    throw contract_error(msg.str());
  }

  PacketDecomposition d;
  d.grid = f.grid;
  d.r = r;
  d.delta = delta;
  d.par = par;
  d.f = f;
  d.f_norm = f.l2_norm();
  d.sector_count = (int)std::ceil(2 * kPi * std::sqrt(r));
  d.angular_ = std::make_shared<profile::PeriodicPartition>(d.sector_count,
                                                            par.overlap_frac);
  d.cube_side = std::pow(r, 0.5 + delta);
  d.cube_axis_ = std::make_shared<profile::LinePartition>(d.cube_side,
                                                          par.overlap_frac);
  d.plans_ = std::make_shared<PacketDecomposition::FftPlans>(
      f.grid.n * par.pad_factor);
  d.plate_thickness =
      std::max(std::pow(r, delta / 2), par.plate_floor_cells * d.dz());
  d.plate_axis_ = std::make_shared<profile::LinePartition>(d.plate_thickness,
                                                           par.overlap_frac);

  if (d.f_norm == 0) return d;

  const int P = d.spatial_size();
  const double step = d.dz();
  const double unit = step * step / (4 * kPi * kPi);  // to frequency units
  std::vector<std::map<std::array<int, 3>, double>> per_theta(d.sector_count);

#pragma omp parallel for schedule(dynamic)
  for (int theta = 0; theta < d.sector_count; ++theta) {
    auto field = d.sector_field(theta);
    double phi = d.angular_->center(theta);
    double xi1 = std::cos(phi), xi2 = std::sin(phi);
    std::vector<ActiveWindow> act;
    auto& mine = per_theta[theta];
    for (int ky = 0; ky < P; ++ky) {
      double z2 = ky < P / 2 ? step * ky : step * (ky - P);
      for (int kx = 0; kx < P; ++kx) {
        const auto& v = field[kx + (size_t)P * ky];
        double m2 = std::norm(v);
        if (m2 == 0) continue;
        double z1 = kx < P / 2 ? step * kx : step * (kx - P);
        active_windows(*d.cube_axis_, *d.plate_axis_, theta, xi1, xi2, z1, z2,
                       act);
        for (const auto& aw : act) {
          double w2 = aw.weight * aw.weight * m2;
          if (w2 != 0)
            mine[{aw.idx.vi, aw.idx.vj, aw.idx.l}] += w2 * unit;
        }
      }
    }
  }

  double total = 0;
  for (const auto& m : per_theta)
    for (const auto& [k, v] : m) total += v;
  if (total == 0) return d;

  double dropped = 0;
  for (int theta = 0; theta < d.sector_count; ++theta) {
    for (const auto& [key, mass] : per_theta[theta]) {
      if (mass <= par.keep_rel2 * total) {
        dropped += mass;
        continue;
      }
      PacketInfo info;
      info.idx = {theta, key[0], key[1], key[2]};
      info.proxy_norm2 = mass;
      info.cube_center = {d.cube_axis_->center(key[0]),
                          d.cube_axis_->center(key[1])};
      info.plate_center = d.plate_axis_->center(key[2]);
      d.packets.push_back(info);
    }
  }
  d.dropped_rel2 = dropped / total;
  std::sort(d.packets.begin(), d.packets.end(),
            [](const PacketInfo& a, const PacketInfo& b) { return a.idx < b.idx; });
  return d;
}

void PacketDecomposition::sum_windows_into(
    const std::vector<const PacketInfo*>& subset, int theta,
    std::vector<std::complex<double>>& acc,
    const std::vector<std::complex<double>>& field) const {
  if (subset.empty()) return;
  const int P = spatial_size();
  const double step = dz();
  double phi = angular_->center(theta);
  double xi1 = std::cos(phi), xi2 = std::sin(phi);
  std::vector<PacketIndex> keys;
  keys.reserve(subset.size());
  for (const PacketInfo* p : subset) keys.push_back(p->idx);
  std::sort(keys.begin(), keys.end());
  /* restrict the scan to the union support of the member cube windows */
  const double support = cube_side * (0.5 + par.overlap_frac) + step;
  double lo1 = 1e300, hi1 = -1e300, lo2 = 1e300, hi2 = -1e300;
  for (const PacketInfo* p : subset) {
    lo1 = std::min(lo1, p->cube_center[0] - support);
    hi1 = std::max(hi1, p->cube_center[0] + support);
    lo2 = std::min(lo2, p->cube_center[1] - support);
    hi2 = std::max(hi2, p->cube_center[1] + support);
  }
  std::vector<int> xs = axis_indices(lo1, hi1, step, P);
  std::vector<int> ys = axis_indices(lo2, hi2, step, P);
  std::vector<ActiveWindow> act;
  for (int ky : ys) {
    double z2 = ky < P / 2 ? step * ky : step * (ky - P);
    for (int kx : xs) {
      const auto& v = field[kx + (size_t)P * ky];
      if (v.real() == 0 && v.imag() == 0) continue;
      double z1 = kx < P / 2 ? step * kx : step * (kx - P);
      active_windows(*cube_axis_, *plate_axis_, theta, xi1, xi2, z1, z2, act);
      double w = 0;
      for (const auto& aw : act)
        if (std::binary_search(keys.begin(), keys.end(), aw.idx))
          w += aw.weight;
      if (w != 0) acc[kx + (size_t)P * ky] += w * v;
    }
  }
}

AnnulusFunction PacketDecomposition::sum_function(
    const std::vector<PacketIndex>& subset) const {
  AnnulusFunction out = AnnulusFunction::zeros(grid);
  if (subset.empty() || f_norm == 0) return out;
  for (const PacketIndex& idx : subset)
    require(find(idx).has_value(), "sum_function: unknown packet index");
  /* group the subset by sector */
  std::vector<PacketIndex> wanted = subset;
  std::sort(wanted.begin(), wanted.end());
  std::map<int, std::vector<const PacketInfo*>> by_theta;
  for (const PacketInfo& p : packets) {
    if (std::binary_search(wanted.begin(), wanted.end(), p.idx))
      by_theta[p.idx.theta].push_back(&p);
  }
  const int P = spatial_size();
  std::vector<int> thetas;
  for (const auto& [t, v] : by_theta) thetas.push_back(t);

  const int batch = 8;
  for (size_t start = 0; start < thetas.size(); start += batch) {
    size_t stop = std::min(thetas.size(), start + batch);
    std::vector<AnnulusFunction> partial(stop - start);
#pragma omp parallel for schedule(dynamic)
    for (size_t bi = start; bi < stop; ++bi) {
      int theta = thetas[bi];
      auto field = sector_field(theta);
      std::vector<std::complex<double>> acc((size_t)P * P, {0, 0});
      sum_windows_into(by_theta[theta], theta, acc, field);
      AnnulusFunction piece = freq_from_spatial(acc);
      /* outer sector cutoff */
      for (int iy = 0; iy < grid.n; ++iy)
        for (int ix = 0; ix < grid.n; ++ix) {
          auto& v = piece.at(ix, iy);
          if (v.real() == 0 && v.imag() == 0) continue;
          double ang = wrap_angle(std::atan2(grid.coord(iy), grid.coord(ix)));
          v *= angular_->outer_cutoff(theta, ang, 2.0);
        }
      partial[bi - start] = std::move(piece);
    }
    for (auto& piece : partial) out.accumulate(piece);
  }
  return out;
}

AnnulusFunction PacketDecomposition::packet_function(
    const PacketIndex& idx) const {
  return sum_function({idx});
}

AnnulusFunction PacketDecomposition::reconstruct_all() const {
  std::vector<PacketIndex> all;
  all.reserve(packets.size());
  for (const PacketInfo& p : packets) all.push_back(p.idx);
  return sum_function(all);
}

double PacketDecomposition::reconstruction_error() const {
  if (f_norm == 0) return 0;
  AnnulusFunction rec = reconstruct_all();
  rec.accumulate(f, -1.0);
  return rec.l2_norm() / f_norm;
}

Tube PacketDecomposition::tube(const PacketIndex& idx) const {
  double phi = angular_->center(idx.theta);
  Vec2 xi{std::cos(phi), std::sin(phi)};
  Vec2 cube{cube_axis_->center(idx.vi), cube_axis_->center(idx.vj)};
  double t0 = cube[0] * xi[0] + cube[1] * xi[1];
  double shift = plate_axis_->center(idx.l) - t0;
  Tube t;
  t.sector.scale = r;
  t.sector.center_angle = phi;
  t.sector.half_width = kPi / sector_count;
  t.base.center = {cube[0] + shift * xi[0], cube[1] + shift * xi[1]};
  t.base.normal = xi;
  t.base.half_side = cube_side / 2;
  t.base.half_thickness = plate_thickness / 2;
  t.length = r;
  t.fattening = std::pow(r, delta);
  t.v_index = {idx.vi, idx.vj};
  t.l_index = idx.l;
  return t;
}

std::optional<PacketInfo> PacketDecomposition::find(
    const PacketIndex& idx) const {
  auto it = std::lower_bound(
      packets.begin(), packets.end(), idx,
      [](const PacketInfo& p, const PacketIndex& key) { return p.idx < key; });
  if (it != packets.end() && it->idx == idx) return *it;
  return std::nullopt;
}

double PacketDecomposition::restricted_norm2(const AnnulusFunction& g,
                                             double rho, int sector,
                                             double enlarge) const {
  require(g.grid == grid, "restricted_norm2: grid mismatch");
  int m = (int)std::ceil(2 * kPi * std::sqrt(rho));
  double width = 2 * kPi / m;
  double center = (sector % m + (sector < 0 ? m : 0) + 0.5) * width;
  double s = 0;
  for (int iy = 0; iy < grid.n; ++iy)
    for (int ix = 0; ix < grid.n; ++ix) {
      const auto& v = g.at(ix, iy);
      if (v.real() == 0 && v.imag() == 0) continue;
      double ang = wrap_angle(std::atan2(grid.coord(iy), grid.coord(ix)));
      if (circ_dist(ang, center) <= enlarge * width / 2)
        s += std::norm(v);
    }
  return s * grid.h * grid.h;
}

PacketDecomposition::SpectralTable PacketDecomposition::spectral_table(
    double rho, double enlarge, double min_rel2) const {
  require(rho >= 1 && rho <= r, "spectral_table: need 1 <= rho <= r");
  require(min_rel2 >= 0 && min_rel2 < 1,
          "spectral_table: need 0 <= min_rel2 < 1");
  SpectralTable tab;
  tab.rho = rho;
  tab.enlarge = enlarge;
  tab.min_rel2 = min_rel2;
  tab.rho_sectors = (int)std::ceil(2 * kPi * std::sqrt(rho));
  const double width = 2 * kPi / tab.rho_sectors;

  /* significance filter: each row costs one full-grid transform, so tiny
   * packets (the fat tail of the window lattice) are excluded; the table
   * records the proxy-mass fraction it covers */
  double total_proxy = 0;
  for (const PacketInfo& p : packets) total_proxy += p.proxy_norm2;
  const double thr = min_rel2 * total_proxy;
  double covered = 0;
  for (size_t i = 0; i < packets.size(); ++i)
    if (packets[i].proxy_norm2 >= thr) {
      tab.rows.push_back((int)i);
      covered += packets[i].proxy_norm2;
    }
  tab.covered_rel2 = total_proxy > 0 ? covered / total_proxy : 0;
  const size_t nr = tab.rows.size();
  tab.true_norm2.assign(nr, 0.0);
  tab.in_sector.assign(nr, std::vector<double>(tab.rho_sectors, 0.0));
  tab.in_enlarged.assign(nr, std::vector<double>(tab.rho_sectors, 0.0));

  /* per-frequency-point lookups, built once: angle, rho-sector, and the
   * flattened list of enlarged sectors containing the point */
  const int n = grid.n;
  const size_t n2 = (size_t)n * n;
  std::vector<double> angle(n2);
  std::vector<int> sec(n2);
  std::vector<int> enl_off(n2 + 1, 0);
  std::vector<int> enl;
  const int span = (int)std::ceil(enlarge / 2) + 1;
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      const size_t id = ix + (size_t)n * iy;
      double ang = wrap_angle(std::atan2(grid.coord(iy), grid.coord(ix)));
      angle[id] = ang;
      int s = (int)(ang / width) % tab.rho_sectors;
      sec[id] = s;
      for (int ds = -span; ds <= span; ++ds) {
        int se = ((s + ds) % tab.rho_sectors + tab.rho_sectors) %
                 tab.rho_sectors;
        double cen = (se + 0.5) * width;
        if (circ_dist(ang, cen) <= enlarge * width / 2) enl.push_back(se);
      }
      enl_off[id + 1] = (int)enl.size();
    }

  /* group rows by sector so each sector transform happens once */
  std::map<int, std::vector<size_t>> by_theta;
  for (size_t rw = 0; rw < nr; ++rw)
    by_theta[packets[tab.rows[rw]].idx.theta].push_back(rw);
  std::vector<int> thetas;
  for (const auto& [t, v] : by_theta) thetas.push_back(t);

  const int P = spatial_size();
  const double step = dz();
  const double scale = 1.0 / ((double)P * P * grid.h * grid.h);
  const double h2 = grid.h * grid.h;
  const double support = cube_side * (0.5 + par.overlap_frac) + step;

#pragma omp parallel
  {
    std::vector<std::complex<double>> acc((size_t)P * P);
    std::vector<double> cut(n2);
#pragma omp for schedule(dynamic)
    for (size_t ti = 0; ti < thetas.size(); ++ti) {
      int theta = thetas[ti];
      auto field = sector_field(theta);
      for (size_t id = 0; id < n2; ++id)
        cut[id] = angular_->outer_cutoff(theta, angle[id], 2.0);
      for (size_t rw : by_theta[theta]) {
        const PacketInfo& pk = packets[tab.rows[rw]];
        std::fill(acc.begin(), acc.end(), std::complex<double>{0, 0});
        std::vector<const PacketInfo*> one{&pk};
        sum_windows_into(one, theta, acc, field);
        /* phase only the window support, then transform in place */
        std::vector<int> xs =
            axis_indices(pk.cube_center[0] - support,
                         pk.cube_center[0] + support, step, P);
        std::vector<int> ys =
            axis_indices(pk.cube_center[1] - support,
                         pk.cube_center[1] + support, step, P);
        for (int ky : ys) {
          double z2 = ky < P / 2 ? step * ky : step * (ky - P);
          for (int kx : xs) {
            auto& v = acc[kx + (size_t)P * ky];
            if (v.real() == 0 && v.imag() == 0) continue;
            double z1 = kx < P / 2 ? step * kx : step * (kx - P);
            double ph = -grid.lo * (z1 + z2);
            v *= std::complex<double>(std::cos(ph), std::sin(ph));
          }
        }
        fftw_execute_dft(plans_->fwd,
                         reinterpret_cast<fftw_complex*>(acc.data()),
                         reinterpret_cast<fftw_complex*>(acc.data()));
        double t2 = 0;
        std::vector<double>& insec = tab.in_sector[rw];
        std::vector<double>& inenl = tab.in_enlarged[rw];
        for (int iy = 0; iy < n; ++iy)
          for (int ix = 0; ix < n; ++ix) {
            const size_t id = ix + (size_t)n * iy;
            const double c = cut[id];
            if (c == 0) continue;
            double m2 =
                std::norm(acc[ix + (size_t)P * iy]) * (scale * scale) * (c * c);
            if (m2 == 0) continue;
            t2 += m2;
            insec[sec[id]] += m2;
            for (int e = enl_off[id]; e < enl_off[id + 1]; ++e)
              inenl[enl[e]] += m2;
          }
        tab.true_norm2[rw] = t2 * h2;
        for (double& x : insec) x *= h2;
        for (double& x : inenl) x *= h2;
      }
    }
  }
  return tab;
}

/* ---- orthogonality ------------------------------------------------------ */

OrthogonalityReport orthogonality_ratio(const PacketDecomposition& d,
                                        const std::vector<PacketIndex>& subset) {
  require(!subset.empty(), "orthogonality_ratio: empty subset");
  OrthogonalityReport rep;
  AnnulusFunction sum = d.sum_function(subset);
  rep.sum_norm2 = sum.l2_norm();
  rep.sum_norm2 *= rep.sum_norm2;
  for (const PacketIndex& idx : subset) {
    double nn = d.packet_function(idx).l2_norm();
    rep.packets_norm2 += nn * nn;
  }
  if (rep.sum_norm2 == 0) {
    rep.undefined = true;
    return rep;
  }
  rep.ratio = rep.packets_norm2 / rep.sum_norm2;
  return rep;
}

LocalOrthogonalityReport local_orthogonality(
    const PacketDecomposition& d, double rho,
    const PacketDecomposition::SpectralTable* table) {
  require(rho >= 1 && rho <= d.r, "local_orthogonality: need 1 <= rho <= r");
  PacketDecomposition::SpectralTable own;
  if (table == nullptr) {
    own = d.spectral_table(rho, 4.0);
    table = &own;
  }
  require(std::fabs(table->rho - rho) <= 1e-9 * (1 + rho),
          "local_orthogonality: table built at a different rho");
  const auto& tab = *table;
  LocalOrthogonalityReport rep;
  rep.rho = rho;
  rep.covered_rel2 = tab.covered_rel2;
  rep.rows = (int)tab.rows.size();
  /* both sides are measured on the same significant-packet family */
  std::vector<PacketIndex> fam;
  fam.reserve(tab.rows.size());
  for (int i : tab.rows) fam.push_back(d.packets[i].idx);
  AnnulusFunction f_T = d.sum_function(fam);
  double best_f = 0, best_r = 0;
  double max_lhs1 = 0, max_rhs1 = 0, max_lhs2 = 0, max_rhs2 = 0;
  for (int s = 0; s < tab.rho_sectors; ++s) {
    double lhs1 = d.restricted_norm2(f_T, rho, s, 1.0);
    double rhs2 = d.restricted_norm2(f_T, rho, s, 4.0);
    double rhs1 = 0, lhs2 = 0;
    for (size_t rw = 0; rw < tab.rows.size(); ++rw) {
      rhs1 += tab.in_enlarged[rw][s];
      lhs2 += tab.in_sector[rw][s];
    }
    double floor2 = 1e-12 * d.f_norm * d.f_norm;
    if (rhs1 > floor2) best_f = std::max(best_f, lhs1 / rhs1);
    if (rhs2 > floor2) best_r = std::max(best_r, lhs2 / rhs2);
    max_lhs1 = std::max(max_lhs1, lhs1);
    max_rhs1 = std::max(max_rhs1, rhs1);
    max_lhs2 = std::max(max_lhs2, lhs2);
    max_rhs2 = std::max(max_rhs2, rhs2);
  }
  rep.c_forward = best_f;
  rep.c_reverse = best_r;
  rep.c_max_forward = max_rhs1 > 0 ? max_lhs1 / max_rhs1 : 0;
  rep.c_max_reverse = max_rhs2 > 0 ? max_lhs2 / max_rhs2 : 0;
  return rep;
}

/* ---- two-scale lift ------------------------------------------------------ */

TwoScaleLift two_scale_lift(const AnnulusFunction& g, const Vec3& y,
                            double rho, double r, const TwoScaleParams& par) {
  const double delta = 1e-10;
  require(rho <= r && rho >= std::pow(r, 0.5 + 2 * delta),
          "two_scale_lift: need r^{1/2+2delta} <= rho <= r");
  require(std::hypot(y[0], y[1]) + std::fabs(y[2]) <= 2 * r,
          "two_scale_lift: recentering point outside the working ball");

  TwoScaleLift out;
  out.y = y;
  out.coarse = decompose(g, r, delta, par.decompose);
  AnnulusFunction gt = g;
  gt.modulate_phase(y[0], y[1], y[2]);
  out.fine = decompose(gt, rho, delta, par.decompose);
  out.members.assign(out.coarse.packets.size(), {});

  const double angle_tol = par.angle_C / std::sqrt(rho);
  const double rdelta = std::pow(r, delta);
  const double coarse_hw = kPi / out.coarse.sector_count;
  const double fine_hw = kPi / out.fine.sector_count;
  const size_t nf = out.fine.packets.size();

  /* bin fine packets by (sector, cube cell) so each coarse packet only
   * scans candidates near its predicted plate position */
  const double cell = out.fine.cube_side;
  std::vector<Vec2> fine_center(nf);
  std::vector<double> fine_angle(out.fine.sector_count, 0.0);
  std::vector<char> fine_angle_set(out.fine.sector_count, 0);
  std::unordered_map<std::int64_t, std::vector<int>> bins;
  auto bin_key = [](int zeta, long ci, long cj) {
    return ((std::int64_t)zeta << 44) ^ (((ci + (1L << 20)) & 0x1FFFFFL) << 22) ^
           ((cj + (1L << 20)) & 0x1FFFFFL);
  };
  for (size_t qi = 0; qi < nf; ++qi) {
    geometry::Tube qt = out.fine.tube(out.fine.packets[qi].idx);
    fine_center[qi] = qt.base.center;
    int zeta = out.fine.packets[qi].idx.theta;
    if (!fine_angle_set[zeta]) {
      fine_angle[zeta] = qt.sector.center_angle;
      fine_angle_set[zeta] = 1;
    }
    bins[bin_key(zeta, (long)std::floor(qt.base.center[0] / cell),
                 (long)std::floor(qt.base.center[1] / cell))]
        .push_back((int)qi);
  }

  /* per (coarse sector, fine sector) admissibility and direction angles */
  const int mc = out.coarse.sector_count;
  const int mf = out.fine.sector_count;
  std::vector<std::vector<int>> adm(mc);
  std::vector<std::vector<std::pair<double, double>>> adm_angles(mc);
  for (int th = 0; th < mc; ++th) {
    geometry::Sector cs;
    cs.center_angle = out.coarse.angular().center(th);
    for (int ze = 0; ze < mf; ++ze) {
      if (!fine_angle_set[ze]) continue;
      double ddir =
          arc_directed_dist(cs.center_angle, coarse_hw, fine_angle[ze], fine_hw);
      if (ddir > angle_tol) continue;
      geometry::Sector fs;
      fs.center_angle = fine_angle[ze];
      adm[th].push_back(ze);
      adm_angles[th].emplace_back(
          geometry::angle_between(cs.L(), fs.L()) * std::sqrt(rho),
          geometry::angle_between(cs.M(), fs.M()) * std::sqrt(rho));
    }
  }

  double captured2 = 0;
  std::vector<char> seen(nf, 0);
  for (size_t ci = 0; ci < out.coarse.packets.size(); ++ci) {
    const auto& c = out.coarse.packets[ci];
    geometry::Tube ct = out.coarse.tube(c.idx);
    double phi_c = ct.sector.center_angle;
    Vec2 xi{std::cos(phi_c), std::sin(phi_c)};
    Vec2 perp{-xi[1], xi[0]};
    /* predicted plate position of the lifted packet */
    Vec2 pred{ct.base.center[0] - y[0] - y[2] * xi[0],
              ct.base.center[1] - y[1] - y[2] * xi[1]};
    double tol_par = par.plate_C * rdelta + ct.base.half_thickness +
                     out.fine.plate_thickness / 2 +
                     (out.fine.cube_side / 2) * angle_tol;
    double tol_perp = par.plate_C * rdelta + ct.base.half_side +
                      out.fine.cube_side / 2 +
                      std::fabs(y[2]) / std::sqrt(r);
    double hx = tol_par * std::fabs(xi[0]) + tol_perp * std::fabs(perp[0]);
    double hy = tol_par * std::fabs(xi[1]) + tol_perp * std::fabs(perp[1]);
    long cx0 = (long)std::floor((pred[0] - hx) / cell) - 1;
    long cx1 = (long)std::floor((pred[0] + hx) / cell) + 1;
    long cy0 = (long)std::floor((pred[1] - hy) / cell) - 1;
    long cy1 = (long)std::floor((pred[1] + hy) / cell) + 1;
    const std::vector<int>& zetas = adm[c.idx.theta];
    for (size_t zi = 0; zi < zetas.size(); ++zi) {
      int ze = zetas[zi];
      bool hit = false;
      for (long cy = cy0; cy <= cy1; ++cy)
        for (long cx = cx0; cx <= cx1; ++cx) {
          auto it = bins.find(bin_key(ze, cx, cy));
          if (it == bins.end()) continue;
          for (int qi : it->second) {
            Vec2 dc{fine_center[qi][0] - pred[0], fine_center[qi][1] - pred[1]};
            double dpar = std::fabs(dc[0] * xi[0] + dc[1] * xi[1]);
            double dperp = std::fabs(dc[0] * perp[0] + dc[1] * perp[1]);
            if (dpar > tol_par || dperp > tol_perp) continue;
            out.members[ci].push_back(qi);
            seen[qi] = 1;
            hit = true;
          }
        }
      if (hit) {
        out.worst_L_angle_units =
            std::max(out.worst_L_angle_units, adm_angles[c.idx.theta][zi].first);
        out.worst_M_angle_units =
            std::max(out.worst_M_angle_units, adm_angles[c.idx.theta][zi].second);
      }
    }
    std::sort(out.members[ci].begin(), out.members[ci].end());
  }
  std::vector<PacketIndex> uni;
  for (size_t qi = 0; qi < nf; ++qi)
    if (seen[qi]) uni.push_back(out.fine.packets[qi].idx);
  if (out.fine.f_norm > 0 && !uni.empty()) {
    AnnulusFunction cap = out.fine.sum_function(uni);
    double c2 = cap.l2_norm();
    captured2 = c2 * c2;
    out.capture_fraction = captured2 / (out.fine.f_norm * out.fine.f_norm);
  }
  return out;
}

/* ---- medium groups ------------------------------------------------------- */

MediumGrouping group_medium_tubes(const PacketDecomposition& d, const Vec3& y,
                                  double rho) {
  (void)y;  // grouping geometry is recentering-invariant at desk scale
  require(rho <= d.r && rho >= 1, "group_medium_tubes: need 1 <= rho <= r");
  MediumGrouping out;
  out.rho = rho;
  int m0 = (int)std::ceil(2 * kPi * std::sqrt(rho));
  double width = 2 * kPi / m0;
  double spacing = std::pow(d.r, 0.5 + 2 * d.delta);

  std::map<std::array<int, 3>, std::vector<int>> assign;
  for (size_t i = 0; i < d.packets.size(); ++i) {
    geometry::Tube t = d.tube(d.packets[i].idx);
    int zeta0 = (int)(wrap_angle(t.sector.center_angle) / width) % m0;
    /* nearest lattice point of the spacing grid, pulled into B(0, rho) */
    double bx = t.base.center[0], by = t.base.center[1];
    double br = std::hypot(bx, by);
    double ax = bx, ay = by;
    if (br > rho && br > 0) {
      ax = bx * rho / br;
      ay = by * rho / br;
    }
    int v0i = (int)std::llround(ax / spacing);
    int v0j = (int)std::llround(ay / spacing);
    double best = std::numeric_limits<double>::infinity();
    int bi = v0i, bj = v0j;
    for (int di = -2; di <= 2; ++di)
      for (int dj = -2; dj <= 2; ++dj) {
        int ci = v0i + di, cj = v0j + dj;
        if (std::hypot(ci * spacing, cj * spacing) > rho + spacing / 2)
          continue;
        double dd = std::hypot(ci * spacing - bx, cj * spacing - by);
        if (dd < best) {
          best = dd;
          bi = ci;
          bj = cj;
        }
      }
    if (!std::isfinite(best)) {
      bi = 0;
      bj = 0;
    }
    assign[{zeta0, bi, bj}].push_back((int)i);
  }

  size_t assigned = 0;
  for (const auto& [key, members] : assign) {
    MediumGroup g;
    g.zeta0 = key[0];
    g.v0i = key[1];
    g.v0j = key[2];
    g.members = members;
    assigned += members.size();
    std::vector<PacketIndex> idxs;
    for (int i : members) idxs.push_back(d.packets[i].idx);
    double nn = d.sum_function(idxs).l2_norm();
    g.norm2 = nn * nn;
    out.groups.push_back(std::move(g));
  }
  out.partition_exact = assigned == d.packets.size();
  if (d.f_norm > 0) {
    double s = 0;
    for (const auto& g : out.groups) s += g.norm2;
    out.ratio = s / (d.f_norm * d.f_norm);
  }
  return out;
}

/* ---- essential / tail ---------------------------------------------------- */

namespace {
/* reflection of the last coordinate, applied to a subspace basis */
std::vector<Vec3> plus_space(const std::vector<Vec3>& basis) {
  std::vector<Vec3> out;
  for (const Vec3& b : basis) out.push_back({b[0], b[1], -b[2]});
  return out;
}

std::vector<Vec3> orthogonal_complement(const std::vector<Vec3>& basis) {
  std::vector<Vec3> out;
  for (const Vec3& cand :
       {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}}) {
    Vec3 v = cand;
    for (const Vec3& b : basis)
      v = geometry::sub(v, geometry::scale(b, geometry::dot(v, b)));
    for (const Vec3& o : out)
      v = geometry::sub(v, geometry::scale(o, geometry::dot(v, o)));
    if (geometry::norm(v) > 1e-9) out.push_back(geometry::normalized(v));
    if (out.size() + basis.size() >= 3) break;
  }
  return out;
}

/* exact tangency test for a tube against an affine variety: containment of
 * the tube's corner points inside the slab plus the axis angle condition */
bool affine_tangent(const geometry::Tube& t, const Variety& Z,
                    const Ball& ball, double delta_m, double C) {
  double w = std::pow(ball.radius, 0.5 + delta_m);
  double angle_bound = C * std::pow(ball.radius, -0.5 + delta_m);
  if (geometry::angle_to_subspace(t.L(), Z.basis) > angle_bound) return false;
  Vec2 xi = t.sector.xi();
  Vec2 perp{-xi[1], xi[0]};
  double hs = t.base.half_side, ht = t.base.half_thickness;
  /* clamp the axis parameter to the doubled ball (x3 = t on the axis); the
   * distance to an affine set is convex along the axis, so corner values at
   * the clamped endpoints dominate the whole swept core */
  double t_lo = std::max(-t.length, ball.center[2] - 2 * ball.radius);
  double t_hi = std::min(t.length, ball.center[2] + 2 * ball.radius);
  if (t_lo > t_hi) return true;  // tube misses the doubled ball entirely
  for (double tt : {t_lo, t_hi}) {
    Vec3 axis = t.point_at(tt);
    for (double a : {-1.0, 1.0})
      for (double b : {-1.0, 1.0}) {
        Vec3 x{axis[0] + a * hs * perp[0] + b * ht * xi[0],
               axis[1] + a * hs * perp[1] + b * ht * xi[1], axis[2]};
        if (Z.dist(x) > w - t.fattening) return false;
      }
  }
  return true;
}
}  // namespace

EssTailSplit split_essential_tail(const PacketDecomposition& d,
                                  const Variety& Z, const Ball& b_rho,
                                  double K, const Vec3& y, double delta_m) {
  require(Z.kind == Variety::Kind::Affine,
          "split_essential_tail: only affine varieties are supported");
  require(K >= 2, "split_essential_tail: need K >= 2");
  double w = std::pow(d.r, 0.5 + delta_m);
  require(b_rho.radius > 2 * w,
          "split_essential_tail: ball radius must exceed the slab width");

  EssTailSplit out;
  out.g_ess = AnnulusFunction::zeros(d.grid);
  out.g_tail = AnnulusFunction::zeros(d.grid);

  /* V_B = tangent space of Z (uniform for an affine variety); classify by
   * the angle between its sign-flipped copy and its orthocomplement */
  std::vector<Vec3> vplus = plus_space(Z.basis);
  std::vector<Vec3> vperp = orthogonal_complement(Z.basis);
  out.split_angle = geometry::subspace_angle(vplus, vperp);
  bool essential_class = out.split_angle >= 1.0 / (K * K);

  /* cover the ball by slab-width balls and classify those near Z */
  std::vector<Ball> class_a;
  int n_a = 0, n_b = 0, n_u = 0;
  int steps = (int)std::ceil(2 * b_rho.radius / w);
  for (int i = 0; i <= steps; ++i)
    for (int j = 0; j <= steps; ++j)
      for (int l = 0; l <= steps; ++l) {
        Vec3 c{b_rho.center[0] - b_rho.radius + i * w,
               b_rho.center[1] - b_rho.radius + j * w,
               b_rho.center[2] - b_rho.radius + l * w};
        if (!b_rho.contains(c, 1.1)) continue;
        if (Z.dist(c) > 3 * w) {
          ++n_u;
          continue;
        }
        if (essential_class) {
          class_a.push_back({c, w});
          ++n_a;
        } else {
          ++n_b;
        }
      }
  out.balls_essential = n_a;
  out.balls_tail = n_b;
  out.balls_unclassified = n_u;

  MediumGrouping mg = group_medium_tubes(d, y, b_rho.radius);
  size_t assigned = 0;
  std::vector<PacketIndex> ess_idx, tail_idx;
  for (const MediumGroup& g : mg.groups) {
    bool meets_a = false;
    for (int pi : g.members) {
      geometry::Tube t = d.tube(d.packets[pi].idx);
      for (const Ball& B : class_a) {
        if (t.core_dist(B.center) <= B.radius + t.fattening) {
          meets_a = true;
          break;
        }
      }
      if (meets_a) break;
    }
    assigned += g.members.size();
    if (meets_a) {
      out.ess.push_back(g);
      for (int pi : g.members) ess_idx.push_back(d.packets[pi].idx);
    } else {
      out.tail.push_back(g);
      for (int pi : g.members) tail_idx.push_back(d.packets[pi].idx);
    }
  }
  out.partition_exact = assigned == d.packets.size();
  if (!ess_idx.empty()) out.g_ess = d.sum_function(ess_idx);
  if (!tail_idx.empty()) out.g_tail = d.sum_function(tail_idx);
  return out;
}

int tail_sector_cluster_count(const Variety& Z, const Ball& B, double r,
                              double delta_m, double K) {
  require(Z.kind == Variety::Kind::Affine,
          "tail_sector_cluster_count: affine varieties only");
  int count = (int)std::ceil(2 * kPi * std::sqrt(r));
  double hw = kPi / count;
  Ball domain{{0, 0, 0}, r};
  std::vector<double> admitted;
  for (int i = 0; i < count; ++i) {
    double phi = (i + 0.5) * 2 * hw;
    Vec2 xi{std::cos(phi), std::sin(phi)};
    /* candidate tube whose axis passes through the projection of the ball
     * center onto the variety */
    Vec3 anchor = B.center;
    if (auto p = Z.project(B.center)) anchor = *p;
    geometry::Tube t = geometry::make_tube(r, 1e-10, phi,
                                           {anchor[0] + anchor[2] * xi[0],
                                            anchor[1] + anchor[2] * xi[1]});
    if (t.core_dist(B.center) > B.radius + t.fattening) continue;
    if (affine_tangent(t, Z, domain, delta_m, 4.0)) admitted.push_back(phi);
  }
  if (admitted.empty()) return 0;
  /* greedy circular cover by arcs of width K^{-2} */
  std::sort(admitted.begin(), admitted.end());
  double arc = 1.0 / (K * K);
  int best = (int)admitted.size();
  for (size_t start = 0; start < admitted.size(); ++start) {
    int used = 0;
    double covered_to = -1;
    bool ok = true;
    for (size_t k = 0; k < admitted.size(); ++k) {
      double a = admitted[(start + k) % admitted.size()];
      double rel = wrap_angle(a - admitted[start]);
      if (used == 0 || rel > covered_to) {
        ++used;
        covered_to = rel + arc;
      }
      if (covered_to >= 2 * kPi) {
        ok = true;
        break;
      }
    }
    (void)ok;
    best = std::min(best, used);
  }
  return best;
}

EquidistributionResult equidistribution_ratio(const PacketDecomposition& d,
                                              const Variety& Z, const Vec3& b,
                                              double r, double rho,
                                              double delta_m, double K) {
  require(Z.kind == Variety::Kind::Affine,
          "equidistribution_ratio: affine varieties only");
  require(std::fabs(r - d.r) < 1e-9, "equidistribution_ratio: scale mismatch");
  EquidistributionResult res;
  res.g_norm2 = d.f_norm * d.f_norm;
  if (res.g_norm2 == 0) return res;

  Ball b_rho{{0, 0, 0}, rho};
  EssTailSplit split = split_essential_tail(d, Z, b_rho, K, {0, 0, 0}, delta_m);
  double ess_norm = split.g_ess.l2_norm();
  if (ess_norm == 0) {
    res.ratio = 0;
    return res;
  }

  /* slice the essential part at scale rho along the shifted variety */
  Variety Zb = Z;
  Zb.base = geometry::add(Zb.base, b);
  PacketDecomposition fine = decompose(split.g_ess, rho, d.delta, d.par);
  std::vector<PacketIndex> tangent;
  for (const PacketInfo& p : fine.packets) {
    geometry::Tube t = fine.tube(p.idx);
    if (Z.dim == 3 || affine_tangent(t, Zb, b_rho, delta_m, 4.0))
      tangent.push_back(p.idx);
  }
  res.tangent_packets = (int)tangent.size();
  if (!tangent.empty()) {
    double nn = fine.sum_function(tangent).l2_norm();
    res.ess_b_norm2 = nn * nn;
  }
  int m = Z.dim;
  double factor = std::pow(r / rho, -(3.0 - m) / 2.0);
  res.ratio = res.ess_b_norm2 / (factor * res.g_norm2);
  return res;
}

std::string packet_table_text(const PacketDecomposition& d) {
  std::ostringstream out;
  out << "[packet-table]\n";
  out << "scale=" << d.r << "\n";
  out << "sectors=" << d.sector_count << "\n";
  out << "count=" << d.packets.size() << "\n";
  char buf[256];
  for (const PacketInfo& p : d.packets) {
    geometry::Tube t = d.tube(p.idx);
    std::snprintf(buf, sizeof buf,
                  "packet theta=%d vi=%d vj=%d l=%d cx=%.17g cy=%.17g "
                  "phi=%.17g norm2=%.17g\n",
                  p.idx.theta, p.idx.vi, p.idx.vj, p.idx.l, t.base.center[0],
                  t.base.center[1], t.sector.center_angle, p.proxy_norm2);
    out << buf;
  }
  return out.str();
}

}  // namespace conelab::packets
