#include "conelab/broad_norm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "conelab/extension_field.hpp"
#include "conelab/numerics.hpp"
#include "conelab/reports.hpp"
#include "conelab/rng.hpp"

namespace conelab::broad {

namespace {
double wrap_angle(double a) {
  a = std::fmod(a, 2 * kPi);
  if (a < 0) a += 2 * kPi;
  return a;
}

Vec3 long_direction(double phi) {
  /* L(theta) = (-xi, 1)/sqrt2 for xi on the unit circle */
  const double s = 1.0 / std::sqrt(2.0);
  return {-std::cos(phi) * s, -std::sin(phi) * s, s};
}

std::vector<Vec3> orthonormalize(std::vector<Vec3> vs) {
  std::vector<Vec3> out;
  for (Vec3 v : vs) {
    for (const Vec3& o : out)
      v = geometry::sub(v, geometry::scale(o, geometry::dot(v, o)));
    if (geometry::norm(v) > 1e-10) out.push_back(geometry::normalized(v));
  }
  return out;
}

double binom_count(double n, int a) {
  /* multisets of size a from n candidates: C(n + a - 1, a) */
  double c = 1;
  for (int i = 0; i < a; ++i) c *= (n + i) / (i + 1);
  return c;
}
}  // namespace

void validate(const BroadNormSpec& spec, int n) {
  require(spec.k >= 2, "broad norm: need k >= 2");
  require(spec.k <= n, "broad norm: need k <= n");
  require(spec.A >= 0, "broad norm: need A >= 0");
  require(spec.K >= 4, "broad norm: need K >= 4");
  require(spec.p > 0, "broad norm: need p > 0");
}

CapData make_caps(const AnnulusFunction& f, double K, int samples_per_cap) {
  require(K >= 4, "make_caps: need K >= 4");
  require(samples_per_cap >= 3, "make_caps: need at least 3 samples");
  CapData caps;
  caps.K = K;
  caps.count = (int)std::ceil(2 * kPi * K);
  caps.width = 2 * kPi / caps.count;
  caps.f_tau.assign(caps.count, AnnulusFunction::zeros(f.grid));

  /* exact partition: every grid point goes to the cap containing its angle,
   * plus per-fine-bin angular mass for the support-filtered directions */
  std::vector<std::vector<double>> bin_mass(
      caps.count, std::vector<double>(samples_per_cap, 0.0));
  double total_mass = 0;
  for (int iy = 0; iy < f.grid.n; ++iy)
    for (int ix = 0; ix < f.grid.n; ++ix) {
      const auto& v = f.at(ix, iy);
      if (v.real() == 0 && v.imag() == 0) continue;
      double ang = wrap_angle(std::atan2(f.grid.coord(iy), f.grid.coord(ix)));
      int tau = std::min(caps.count - 1, (int)(ang / caps.width));
      caps.f_tau[tau].at(ix, iy) = v;
      double frac = ang / caps.width - tau;
      int bin = std::min(samples_per_cap - 1, (int)(frac * samples_per_cap));
      double m = std::norm(v);
      bin_mass[tau][bin] += m;
      total_mass += m;
    }

  caps.directions.assign(caps.count, {});
  for (int tau = 0; tau < caps.count; ++tau)
    for (int b = 0; b < samples_per_cap; ++b) {
      if (bin_mass[tau][b] <= 1e-24 * total_mass) continue;
      double phi = (tau + (b + 0.5) / samples_per_cap) * caps.width;
      caps.directions[tau].push_back(long_direction(phi));
    }

  /* partition defect (exact assignment, so this measures only roundoff) */
  AnnulusFunction sum = AnnulusFunction::zeros(f.grid);
  for (const auto& ft : caps.f_tau) sum.accumulate(ft);
  sum.accumulate(f, -1.0);
  caps.partition_defect = sum.max_abs();
  return caps;
}

std::vector<Subspace> candidate_subspaces(const CapData& caps, int k,
                                          int n_random, std::uint64_t seed) {
  require(k >= 2, "candidate_subspaces: need k >= 2");
  std::vector<Subspace> out;
  for (int tau = 0; tau < caps.count; ++tau) {
    const auto& dirs = caps.directions[tau];
    if (dirs.empty()) continue;
    /* chord subspace through spread samples of the cap direction curve */
    std::vector<Vec3> span;
    for (int j = 0; j < k - 1; ++j) {
      size_t pick =
          k - 1 == 1 ? dirs.size() / 2 : (j == 0 ? 0 : dirs.size() - 1);
      span.push_back(dirs[pick]);
    }
    Subspace basis = orthonormalize(span);
    if ((int)basis.size() == k - 1) out.push_back(basis);
  }
  CounterRng rng(seed, 0x62726f6164ull);
  for (int i = 0; i < n_random; ++i) {
    std::vector<Vec3> span;
    for (int j = 0; j < k - 1; ++j)
      span.push_back({rng.normal(), rng.normal(), rng.normal()});
    Subspace basis = orthonormalize(span);
    if ((int)basis.size() == k - 1) out.push_back(basis);
  }
  require(!out.empty(), "candidate_subspaces: empty candidate set");
  return out;
}

std::vector<std::vector<char>> admissibility(
    const CapData& caps, const std::vector<Subspace>& candidates, double K) {
  const double cut = 1.0 / (K * K);
  std::vector<std::vector<char>> adm(candidates.size(),
                                     std::vector<char>(caps.count, 1));
  for (size_t c = 0; c < candidates.size(); ++c)
    for (int tau = 0; tau < caps.count; ++tau) {
      for (const Vec3& d : caps.directions[tau]) {
        if (geometry::angle_to_subspace(d, candidates[c]) < cut) {
          adm[c][tau] = 0;
          break;
        }
      }
    }
  return adm;
}

BallGrid make_ball_grid(const Ball& U, double K) {
  require(U.radius > 0, "make_ball_grid: empty region");
  BallGrid bg;
  bg.ball_radius = K * K;
  int M = (int)std::ceil(U.radius / bg.ball_radius) + 1;
  const double spacing = bg.ball_radius / 6;
  for (int i = -M; i <= M; ++i)
    for (int j = -M; j <= M; ++j)
      for (int l = -M; l <= M; ++l) {
        Vec3 c{U.center[0] + i * bg.ball_radius,
               U.center[1] + j * bg.ball_radius,
               U.center[2] + l * bg.ball_radius};
        double d = geometry::norm(geometry::sub(c, U.center));
        if (d > U.radius + bg.ball_radius) continue;
        /* grid-count weight |B cap U| / |B| */
        long inside = 0, both = 0;
        int s = 6;
        for (int a = -s; a <= s; ++a)
          for (int b = -s; b <= s; ++b)
            for (int e = -s; e <= s; ++e) {
              Vec3 x{c[0] + a * spacing, c[1] + b * spacing,
                     c[2] + e * spacing};
              if (geometry::norm(geometry::sub(x, c)) > bg.ball_radius)
                continue;
              ++inside;
              if (geometry::norm(geometry::sub(x, U.center)) <= U.radius)
                ++both;
            }
        if (both == 0) continue;
        bg.balls.push_back({c, bg.ball_radius});
        bg.weights.push_back((double)both / (double)inside);
      }
  require(!bg.balls.empty(), "make_ball_grid: no balls cover the region");
  return bg;
}

IntegralTable ball_integrals(const CapData& caps, const BallGrid& balls,
                             const std::vector<double>& ps, int mc_points,
                             std::uint64_t seed, int pad_factor) {
  require(!caps.f_tau.empty(), "ball_integrals: empty caps");
  require(!ps.empty(), "ball_integrals: no exponents requested");
  for (double p : ps) require(p > 0, "ball_integrals: need p > 0");
  const auto grid = caps.f_tau[0].grid;
  ext::guard_evaluations((size_t)balls.balls.size() * (size_t)mc_points *
                         caps.count);

  ext::SliceEngine engine(grid, pad_factor);
  const int P = engine.padded();
  const double dzv = engine.dz();
  const double half_extent = kPi / grid.h;

  /* fixed Monte-Carlo points per ball, bucketed by slice interval */
  struct Pt {
    int ball;
    int k1, k2;      // in-plane base indices (wrapped)
    double f1, f2;   // in-plane fractions
    double f3;       // fraction between slice s and s+1
  };
  long s_min = 0, s_max = 0;
  bool first = true;
  std::vector<std::pair<long, Pt>> staged;
  staged.reserve(balls.balls.size() * (size_t)mc_points);
  for (size_t bi = 0; bi < balls.balls.size(); ++bi) {
    const Ball& B = balls.balls[bi];
    require(std::fabs(B.center[0]) + B.radius < half_extent - 1 &&
                std::fabs(B.center[1]) + B.radius < half_extent - 1,
            "ball_integrals: ball exceeds the representable spatial window");
    CounterRng rng(seed, bi);
    for (int q = 0; q < mc_points; ++q) {
      Vec3 x;
      do {
        x = {B.center[0] + B.radius * rng.uniform(-1, 1),
             B.center[1] + B.radius * rng.uniform(-1, 1),
             B.center[2] + B.radius * rng.uniform(-1, 1)};
      } while (geometry::norm(geometry::sub(x, B.center)) > B.radius);
      long s = (long)std::floor(x[2] / dzv);
      double u1 = x[0] / dzv, u2 = x[1] / dzv;
      long b1 = (long)std::floor(u1), b2 = (long)std::floor(u2);
      Pt pt;
      pt.ball = (int)bi;
      pt.k1 = (int)((b1 % P + P) % P);
      pt.k2 = (int)((b2 % P + P) % P);
      pt.f1 = u1 - b1;
      pt.f2 = u2 - b2;
      pt.f3 = x[2] / dzv - s;
      staged.emplace_back(s, pt);
      if (first || s < s_min) s_min = s;
      if (first || s > s_max) s_max = s;
      first = false;
    }
  }
  std::stable_sort(staged.begin(), staged.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  IntegralTable tab;
  tab.ps = ps;
  tab.mc_points = mc_points;
  std::vector<std::vector<std::vector<double>>> acc(
      balls.balls.size(),
      std::vector<std::vector<double>>(caps.count,
                                       std::vector<double>(ps.size(), 0.0)));

  /* rolling slice pair: values for every cap at x3 = s*dzv and (s+1)*dzv */
  std::vector<std::vector<std::complex<double>>> prev(caps.count),
      cur(caps.count);
#pragma omp parallel for schedule(dynamic)
  for (int tau = 0; tau < caps.count; ++tau)
    prev[tau] = engine.evaluate(caps.f_tau[tau], s_min * dzv).values;

  size_t cursor = 0;
  for (long s = s_min; s <= s_max; ++s) {
#pragma omp parallel for schedule(dynamic)
    for (int tau = 0; tau < caps.count; ++tau)
      cur[tau] = engine.evaluate(caps.f_tau[tau], (s + 1) * dzv).values;

    size_t begin = cursor;
    while (cursor < staged.size() && staged[cursor].first == s) ++cursor;
    size_t end = cursor;
#pragma omp parallel for schedule(dynamic)
    for (int tau = 0; tau < caps.count; ++tau) {
      const auto& lo = prev[tau];
      const auto& hi = cur[tau];
      for (size_t t = begin; t < end; ++t) {
        const Pt& pt = staged[t].second;
        int k1b = (pt.k1 + 1) % P, k2b = (pt.k2 + 1) % P;
        auto pick = [&](const std::vector<std::complex<double>>& v) {
          const auto& a00 = v[pt.k1 + (size_t)P * pt.k2];
          const auto& a10 = v[k1b + (size_t)P * pt.k2];
          const auto& a01 = v[pt.k1 + (size_t)P * k2b];
          const auto& a11 = v[k1b + (size_t)P * k2b];
          return (1 - pt.f1) * (1 - pt.f2) * a00 + pt.f1 * (1 - pt.f2) * a10 +
                 (1 - pt.f1) * pt.f2 * a01 + pt.f1 * pt.f2 * a11;
        };
        std::complex<double> v =
            (1 - pt.f3) * pick(lo) + pt.f3 * pick(hi);
        double m2 = std::norm(v);
        for (size_t pi = 0; pi < ps.size(); ++pi)
          acc[pt.ball][tau][pi] +=
              m2 == 0 ? 0 : std::pow(m2, ps[pi] / 2);
      }
    }
    std::swap(prev, cur);
  }

  tab.I.assign(balls.balls.size(), {});
  for (size_t bi = 0; bi < balls.balls.size(); ++bi) {
    double vol = 4.0 / 3.0 * kPi * std::pow(balls.balls[bi].radius, 3);
    tab.I[bi].assign(caps.count, std::vector<double>(ps.size(), 0.0));
    for (int tau = 0; tau < caps.count; ++tau)
      for (size_t pi = 0; pi < ps.size(); ++pi)
        tab.I[bi][tau][pi] = vol * acc[bi][tau][pi] / mc_points;
  }
  return tab;
}

MuResult mu(const IntegralTable& table,
            const std::vector<std::vector<char>>& admissible, int ball,
            int p_index, int A, std::uint64_t seed) {
  require(ball >= 0 && ball < (int)table.I.size(), "mu: ball out of range");
  require(p_index >= 0 && p_index < (int)table.ps.size(),
          "mu: exponent out of range");
  require(A >= 0, "mu: need A >= 0");
  const int nc = (int)admissible.size();
  require(nc > 0 || A == 0, "mu: no candidate subspaces");
  const int ntau = (int)table.I[ball].size();

  auto tuple_value = [&](const std::vector<int>& tuple) {
    double best = 0;
    for (int tau = 0; tau < ntau; ++tau) {
      bool adm = true;
      for (int c : tuple)
        if (!admissible[c][tau]) {
          adm = false;
          break;
        }
      if (adm) best = std::max(best, table.I[ball][tau][p_index]);
    }
    return best;
  };

  MuResult res;
  if (A == 0) {
    res.value = tuple_value({});
    return res;
  }

  double total = binom_count(nc, A);
  res.value = std::numeric_limits<double>::infinity();
  if (total <= 1e6) {
    /* exact enumeration of multisets c_1 <= c_2 <= ... <= c_A */
    std::vector<int> tuple(A, 0);
    while (true) {
      double v = tuple_value(tuple);
      if (v < res.value) {
        res.value = v;
        res.argmin = tuple;
      }
      int pos = A - 1;
      while (pos >= 0 && tuple[pos] == nc - 1) --pos;
      if (pos < 0) break;
      int nv = tuple[pos] + 1;
      for (int q = pos; q < A; ++q) tuple[q] = nv;
    }
  } else {
    res.sampled_fallback = true;
    CounterRng rng(seed, (std::uint64_t)ball);
    const int draws = 200000;
    for (int t = 0; t < draws; ++t) {
      std::vector<int> tuple(A);
      for (int q = 0; q < A; ++q) tuple[q] = (int)rng.uniform_index(nc);
      double v = tuple_value(tuple);
      if (v < res.value) {
        res.value = v;
        res.argmin = tuple;
      }
    }
  }
  if (!std::isfinite(res.value)) res.value = 0;
  return res;
}

BroadNormLab::BroadNormLab(const AnnulusFunction& f, const Ball& region, int k,
                           double K, std::uint64_t seed, int mc_points)
    : k_(k), K_(K), seed_(seed), mc_points_(mc_points) {
  require(k >= 2 && k <= 3, "BroadNormLab: k must be 2 or 3 in R^3");
  f_norm_ = f.l2_norm();
  caps_ = make_caps(f, K);
  candidates_ = candidate_subspaces(caps_, k, 100, seed);
  admissible_ = admissibility(caps_, candidates_, K);
  balls_ = make_ball_grid(region, K);
}

int BroadNormLab::p_index(double p) {
  for (size_t i = 0; i < ps_.size(); ++i)
    if (ps_[i] == p) return (int)i;
  ps_.push_back(p);
  table_ = ball_integrals(caps_, balls_, ps_, mc_points_, seed_ + 0x1717,
                          4);
  return (int)ps_.size() - 1;
}

MuResult BroadNormLab::mu_of_ball(int ball, double p, int A) {
  int pi = p_index(p);
  return mu(table_, admissible_, ball, pi, A, seed_ + 0x2323);
}

double BroadNormLab::norm(const BroadNormSpec& spec) {
  validate(spec);
  require(spec.K == K_, "BroadNormLab: spec K differs from lab K");
  require(spec.k == k_, "BroadNormLab: spec k differs from lab k");
  if (f_norm_ == 0) return 0;
  int pi = p_index(spec.p);
  double sum = 0;
  for (size_t b = 0; b < balls_.balls.size(); ++b) {
    MuResult m = mu(table_, admissible_, (int)b, pi, spec.A, seed_ + 0x2323);
    sum += balls_.weights[b] * m.value;
  }
  return std::pow(sum, 1.0 / spec.p);
}

std::string BroadNormLab::report(const BroadNormSpec& spec) {
  double value = norm(spec);
  int pi = p_index(spec.p);
  std::ostringstream out;
  out << "[broad-norm]\n";
  out << "k=" << spec.k << "\n";
  out << "A=" << spec.A << "\n";
  out << "K=" << reports::format_double(spec.K) << "\n";
  out << "p=" << reports::format_double(spec.p) << "\n";
  out << "f_norm=" << reports::format_double(f_norm_) << "\n";
  out << "value=" << reports::format_double(value) << "\n";
  out << "caps=" << caps_.count << "\n";
  out << "candidates=" << candidates_.size() << "\n";
  out << "balls=" << balls_.balls.size() << "\n";
  char buf[256];
  for (size_t b = 0; b < balls_.balls.size(); ++b) {
    MuResult m = mu(table_, admissible_, (int)b, pi, spec.A, seed_ + 0x2323);
    std::string argmin;
    for (size_t i = 0; i < m.argmin.size(); ++i)
      argmin += (i ? ";" : "") + std::to_string(m.argmin[i]);
    std::snprintf(buf, sizeof buf,
                  "ball cx=%.17g cy=%.17g cz=%.17g weight=%.17g mu=%.17g "
                  "fallback=%d argmin=%s\n",
                  balls_.balls[b].center[0], balls_.balls[b].center[1],
                  balls_.balls[b].center[2], balls_.weights[b], m.value,
                  m.sampled_fallback ? 1 : 0, argmin.c_str());
    out << buf;
  }
  return out.str();
}

TriangleReport check_triangle(const AnnulusFunction& g,
                              const AnnulusFunction& h, const Ball& region,
                              int k, double K, double p, int A1, int A2,
                              double slack_C, std::uint64_t seed) {
  require(A1 >= 0 && A2 >= 0, "check_triangle: need A1, A2 >= 0");
  AnnulusFunction sum = g;
  sum.accumulate(h);
  BroadNormLab lab_sum(sum, region, k, K, seed);
  BroadNormLab lab_g(g, region, k, K, seed);
  BroadNormLab lab_h(h, region, k, K, seed);
  TriangleReport rep;
  rep.lhs = lab_sum.norm({k, A1 + A2, K, p});
  rep.rhs1 = lab_g.norm({k, A1, K, p});
  rep.rhs2 = lab_h.norm({k, A2, K, p});
  double rhs = rep.rhs1 + rep.rhs2;
  rep.c_measured = rhs > 0 ? rep.lhs / rhs : 0;
  rep.pass = rep.lhs <= slack_C * rhs + 1e-12;
  return rep;
}

HolderReport check_holder(const AnnulusFunction& f, const Ball& region, int k,
                          double K, double p1, double p2, int A1, int A2,
                          double alpha1, double alpha2, std::uint64_t seed) {
  if (std::fabs(alpha1 + alpha2 - 1.0) > 1e-9)
    throw contract_error("check_holder: alpha1 + alpha2 must equal 1");
  if (alpha1 < 0 || alpha2 < 0)
    throw contract_error("check_holder: interpolation weights must be >= 0");
  require(p1 > 0 && p2 > 0, "check_holder: need positive exponents");
  require(A1 >= 0 && A2 >= 0, "check_holder: need A1, A2 >= 0");
  double inv_p = alpha1 / p1 + alpha2 / p2;
  require(inv_p > 0, "check_holder: degenerate exponent relation");
  double p = 1.0 / inv_p;

  BroadNormLab lab(f, region, k, K, seed);
  HolderReport rep;
  rep.alpha1 = alpha1;
  rep.alpha2 = alpha2;
  rep.lhs = lab.norm({k, A1 + A2, K, p});
  rep.rhs1 = lab.norm({k, A1, K, p1});
  rep.rhs2 = lab.norm({k, A2, K, p2});
  rep.product = std::pow(rep.rhs1, alpha1) * std::pow(rep.rhs2, alpha2);
  rep.pass = rep.lhs <= rep.product + 1e-9 * (1 + rep.product);
  return rep;
}

VanishingReport check_vanishing(const AnnulusFunction& f, const Ball& region,
                                const BroadNormSpec& spec, double tol,
                                std::uint64_t seed) {
  validate(spec);
  VanishingReport rep;
  rep.f_norm = f.l2_norm();
  if (rep.f_norm == 0) {
    rep.pass = true;
    return rep;
  }
  BroadNormLab lab(f, region, spec.k, spec.K, seed);
  rep.bl = lab.norm(spec);
  rep.ratio = rep.bl / rep.f_norm;
  rep.pass = rep.ratio <= tol;
  return rep;
}

L2Report check_l2_bound(const AnnulusFunction& f, double r, int k, int A,
                        double K, std::uint64_t seed) {
  require(r > 0, "check_l2_bound: need r > 0");
  L2Report rep;
  rep.r = r;
  double fn = f.l2_norm();
  rep.f_norm_sq = fn * fn;
  if (fn == 0) return rep;
  BroadNormLab lab(f, {{0, 0, 0}, r}, k, K, seed);
  double bl = lab.norm({k, A, K, 2});
  rep.bl2_sq = bl * bl;
  rep.constant = rep.bl2_sq / (rep.r * rep.f_norm_sq);
  return rep;
}

}  // namespace conelab::broad
