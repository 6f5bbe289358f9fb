#include "conelab/incidence_lab.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "conelab/numerics.hpp"
#include "conelab/reports.hpp"

namespace conelab::incidence {

namespace {
constexpr double kPacketDelta = 1e-10;  // tube shape parameter; counting
                                        // only cares about axis geometry
}

TubeFamily admitted_family(const Variety& Z, const Ball& B, double r,
                           const WolffParams& par) {
  require(r >= 4, "admitted_family: r too small");
  require(par.width_mult > 0, "admitted_family: width_mult must be positive");
  TubeFamily fam;
  fam.r = r;
  fam.width = par.width_mult * std::pow(r, 0.5 + par.delta_m);

  auto sectors = geometry::sector_cover(r, 3);
  fam.grid_directions = (int)sectors.size();

  /* translation grid of tube base centers in the x3 = 0 plane */
  const double step = std::pow(r, 0.5 + par.delta_m);
  const long per_axis = 2 * (long)std::ceil(2 * r / step) + 1;
  require((long)sectors.size() * per_axis * per_axis <= par.max_tubes,
          "wolff enumeration guard: direction x translation grid exceeds "
          "max_tubes");

  const double spacing = std::sqrt(r) / 4;  // axis sampling
  std::vector<char> dir_seen(sectors.size(), 0);
  std::vector<std::vector<Tube>> shard(sectors.size());
  std::vector<char> shard_flag(sectors.size(), 0);
#pragma omp parallel for schedule(dynamic)
  for (size_t si = 0; si < sectors.size(); ++si) {
    const double phi = sectors[si].center_angle;
    for (long a = -(per_axis / 2); a <= per_axis / 2; ++a)
      for (long b = -(per_axis / 2); b <= per_axis / 2; ++b) {
        geometry::Vec2 center{B.center[0] + a * step, B.center[1] + b * step};
        Tube t = geometry::make_tube(r, kPacketDelta, phi, center);
        /* (i) the axis stays inside the slab across 2B;
         * (ii) it meets the slab inside B */
        bool inside = true, meets = false;
        double w_margin = fam.width;
        for (double tt = -t.length; tt <= t.length; tt += spacing) {
          Vec3 x = t.point_at(tt);
          if (!B.contains(x, 2)) continue;
          double dd = Z.dist(x);
          if (dd > fam.width) {
            inside = false;
            break;
          }
          w_margin = std::min(w_margin, fam.width - dd);
          if (B.contains(x)) meets = true;
        }
        if (!inside || !meets) continue;
        shard[si].push_back(t);
        if (w_margin < spacing) shard_flag[si] = 1;
      }
  }
  for (size_t si = 0; si < sectors.size(); ++si) {
    if (shard[si].empty()) continue;
    dir_seen[si] = 1;
    fam.flagged = fam.flagged || shard_flag[si];
    for (Tube& t : shard[si]) {
      fam.tubes.push_back(t);
      fam.dir_index.push_back((int)si);
    }
  }

  for (size_t si = 0; si < sectors.size(); ++si)
    if (dir_seen[si]) fam.directions.push_back((int)si);
  fam.min_pairwise_angle = 0;
  if (fam.directions.size() >= 2) {
    const double unit = 2 * kPi / fam.grid_directions;
    double best = 2 * kPi;
    for (size_t i = 0; i < fam.directions.size(); ++i) {
      int gap = fam.directions[(i + 1) % fam.directions.size()] -
                fam.directions[i];
      if (gap < 0) gap += fam.grid_directions;
      best = std::min(best, gap * unit);
    }
    fam.min_pairwise_angle = best;
  }
  return fam;
}

CountReport wolff_count(const Variety& Z, const Ball& B, double r,
                        const WolffParams& par) {
  const int m = Z.dim;
  require(m >= 1 && m <= 3, "wolff_count: variety dimension out of range");
  TubeFamily fam = admitted_family(Z, B, r, par);
  CountReport rep;
  rep.tubes = (long)fam.tubes.size();
  rep.directions = (long)fam.directions.size();
  rep.m = m;
  rep.r = r;
  const int bound_m = std::min(m, 2);  // full space: trivial (n-1)-bound
  rep.bound = std::pow(r, (bound_m - 1) / 2.0);
  rep.ratio = rep.directions / rep.bound;
  rep.flagged = fam.flagged;
  std::ostringstream cfg;
  cfg << "wolff m=" << m << " r=" << reports::format_double(r)
      << " delta_m=" << reports::format_double(par.delta_m)
      << " width_mult=" << reports::format_double(par.width_mult);
  rep.config = cfg.str();
  return rep;
}

CountReport nested_count(const Multigrain& mg, const WolffParams& par) {
  const size_t L = mg.grains.size();
  require(L >= 1, "nested_count: empty multigrain");
  CountReport rep;
  rep.m = mg.grains.front().Z.dim;
  rep.r = mg.grains.front().ball.radius;

  /* admitted families per level, fine to coarse */
  std::vector<TubeFamily> fams(L);
  for (size_t i = 0; i < L; ++i) {
    WolffParams lp = par;
    if (i < mg.deltas.size()) lp.delta_m = mg.deltas[i];
    fams[i] = admitted_family(mg.grains[i].Z, mg.grains[i].ball,
                              mg.grains[i].ball.radius, lp);
    rep.flagged = rep.flagged || fams[i].flagged;
  }

  /* walk coarse to fine keeping tubes with a close predecessor */
  std::vector<char> keep(fams[L - 1].tubes.size(), 1);
  if (fams[L - 1].tubes.empty()) rep.empty_level = true;
  for (size_t lvl = L - 1; lvl-- > 0;) {
    const TubeFamily& fine = fams[lvl];
    const TubeFamily& coarse = fams[lvl + 1];
    const Ball& fine_ball = mg.grains[lvl].ball;
    const double r_fine = fine.r;
    const double angle_win = par.nest_angle_C / std::sqrt(r_fine);
    const double dist_win = par.nest_dist_C * coarse.width;
    const double spacing = std::sqrt(r_fine) / 4;
    std::vector<char> keep_fine(fine.tubes.size(), 0);
    for (size_t fi = 0; fi < fine.tubes.size(); ++fi) {
      const Tube& tf = fine.tubes[fi];
      /* axis samples inside this level's ball */
      std::vector<Vec3> pts;
      for (double tt = -tf.length; tt <= tf.length; tt += spacing) {
        Vec3 x = tf.point_at(tt);
        if (fine_ball.contains(x)) pts.push_back(x);
      }
      if (pts.empty()) continue;
      for (size_t ci = 0; ci < coarse.tubes.size() && !keep_fine[fi]; ++ci) {
        if (!keep[ci]) continue;
        const Tube& tc = coarse.tubes[ci];
        if (geometry::angle_between(tf.L(), tc.L()) > angle_win) continue;
        bool near = true;
        for (const Vec3& x : pts)
          if (tc.core_dist(x) > dist_win) {
            near = false;
            break;
          }
        if (near) keep_fine[fi] = 1;
      }
    }
    keep.swap(keep_fine);
    if (std::count(keep.begin(), keep.end(), (char)1) == 0)
      rep.empty_level = true;
  }

  std::vector<char> dir_seen(fams[0].grid_directions, 0);
  for (size_t fi = 0; fi < fams[0].tubes.size(); ++fi)
    if (keep[fi]) {
      ++rep.tubes;
      dir_seen[fams[0].dir_index[fi]] = 1;
    }
  rep.directions = std::count(dir_seen.begin(), dir_seen.end(), (char)1);

  /* bound: (prod over sub-top levels r_j^{-1/2}) * r_top^{(n-2)/2}, n = 3 */
  double bound = std::pow(mg.grains.back().ball.radius, 0.5);
  for (size_t i = 0; i + 1 < L; ++i)
    bound /= std::sqrt(mg.grains[i].ball.radius);
  rep.bound = bound;
  rep.ratio = rep.directions / rep.bound;

  std::ostringstream cfg;
  cfg << "nested levels=" << L << " dims=";
  for (size_t i = 0; i < L; ++i)
    cfg << (i ? "," : "") << mg.grains[i].Z.dim;
  cfg << " r=";
  for (size_t i = 0; i < L; ++i)
    cfg << (i ? "," : "")
        << reports::format_double(mg.grains[i].ball.radius);
  rep.config = cfg.str();
  return rep;
}

Variety light_ray(double phi) {
  const double s = 1 / std::sqrt(2.0);
  Vec3 dir{-std::cos(phi) * s, -std::sin(phi) * s, s};
  return Variety::affine_subspace({0, 0, 0}, {dir});
}

Variety cone_tangent_plane(double phi) {
  const double s = 1 / std::sqrt(2.0);
  Vec3 ruling{std::cos(phi) * s, std::sin(phi) * s, s};
  Vec3 around{-std::sin(phi), std::cos(phi), 0};
  return Variety::affine_subspace({0, 0, 0}, {ruling, around});
}

std::vector<std::string> count_csv_header() {
  return {"config_hash", "config", "r",     "m",      "tubes",
          "directions",  "bound",  "ratio", "flagged"};
}

std::uint64_t config_hash(const std::string& config) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : config) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::string> count_csv_row(const CountReport& rep) {
  std::ostringstream hash;
  hash << std::hex << config_hash(rep.config);
  return {hash.str(),
          rep.config,
          reports::format_double(rep.r),
          std::to_string(rep.m),
          std::to_string(rep.tubes),
          std::to_string(rep.directions),
          reports::format_double(rep.bound),
          reports::format_double(rep.ratio),
          rep.flagged ? "1" : "0"};
}

}  // namespace conelab::incidence
