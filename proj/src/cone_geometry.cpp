#include "conelab/cone_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace conelab::geometry {

/* ---- vector helpers ---------------------------------------------------- */

Vec3 add(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
Vec3 sub(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
Vec3 scale(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 normalized(const Vec3& a) {
  double n = norm(a);
  require(n > 0, "normalized: zero vector");
  return scale(a, 1.0 / n);
}
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}
double dot2(const Vec2& a, const Vec2& b) { return a[0] * b[0] + a[1] * b[1]; }
double norm2(const Vec2& a) { return std::sqrt(dot2(a, a)); }

namespace {
double clamp01(double x) { return std::min(1.0, std::max(-1.0, x)); }

double circ_dist(double a, double b) {
  double d = std::fmod(std::fabs(a - b), 2 * kPi);
  return std::min(d, 2 * kPi - d);
}
}  // namespace

double angle_between(const Vec3& a, const Vec3& b) {
  double na = norm(a), nb = norm(b);
  require(na > 0 && nb > 0, "angle_between: zero vector");
  return std::acos(clamp01(dot(a, b) / (na * nb)));
}

double angle_to_subspace(const Vec3& v, const std::vector<Vec3>& basis) {
  require(norm(v) > 0, "angle_to_subspace: zero vector");
  if (basis.empty()) return kPi / 2;  // the zero subspace
  Vec3 proj{0, 0, 0};
  for (const Vec3& b : basis) proj = add(proj, scale(b, dot(v, b)));
  double p = norm(proj) / norm(v);
  return std::acos(clamp01(p));
}

double subspace_angle(const std::vector<Vec3>& a_basis,
                      const std::vector<Vec3>& b_basis) {
  if (a_basis.empty() || b_basis.empty()) return kPi / 2;
  /* smallest principal angle = acos(sigma_max(A^T B)); power-iterate
   * M M^T which is at most 3x3 */
  const size_t ra = a_basis.size(), rb = b_basis.size();
  double M[3][3] = {};
  for (size_t i = 0; i < ra; ++i)
    for (size_t j = 0; j < rb; ++j) M[i][j] = dot(a_basis[i], b_basis[j]);
  double S[3][3] = {};  // M M^T
  for (size_t i = 0; i < ra; ++i)
    for (size_t j = 0; j < ra; ++j)
      for (size_t l = 0; l < rb; ++l) S[i][j] += M[i][l] * M[j][l];
  double v[3] = {1, 1, 1};
  double lambda = 0;
  for (int it = 0; it < 200; ++it) {
    double w[3] = {};
    for (size_t i = 0; i < ra; ++i)
      for (size_t j = 0; j < ra; ++j) w[i] += S[i][j] * v[j];
    double nw = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
    if (nw == 0) break;
    for (size_t i = 0; i < ra; ++i) v[i] = w[i] / nw;
    lambda = nw;
  }
  return std::acos(clamp01(std::sqrt(std::max(0.0, lambda))));
}

bool Ball::contains(const Vec3& x, double dilate) const {
  return norm(sub(x, center)) <= radius * dilate + 1e-12;
}

/* ---- sectors ----------------------------------------------------------- */

Vec2 Sector::xi() const { return {std::cos(center_angle), std::sin(center_angle)}; }
Vec3 Sector::L() const {
  Vec2 w = xi();
  return {-w[0], -w[1], 1};
}
Vec3 Sector::M() const {
  Vec2 w = xi();
  return {w[0], w[1], 1};
}

bool Sector::contains(const Vec2& freq) const {
  double rad = norm2(freq);
  if (rad < 1 - 1e-12 || rad > 2 + 1e-12) return false;
  double ang = std::atan2(freq[1], freq[0]);
  return circ_dist(ang, center_angle) <= half_width + 1e-12;
}

double Sector::angular_hausdorff(const Sector& other) const {
  /* Hausdorff distance of two arcs [c +- h]: |dc| + |h1 - h2| exactly */
  return circ_dist(center_angle, other.center_angle) +
         std::fabs(half_width - other.half_width);
}

std::vector<Vec3> Sector::direction_samples(int count) const {
  require(count >= 1, "direction_samples: need count >= 1");
  std::vector<Vec3> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    double t = count == 1 ? 0.0
                          : -1.0 + 2.0 * (double)i / (double)(count - 1);
    double phi = center_angle + t * half_width;
    out.push_back({-std::cos(phi), -std::sin(phi), 1});
  }
  return out;
}

std::vector<Sector> sector_cover(double r, int n) {
  require(r >= 4, "sector_cover: need r >= 4");
  require(n >= 3, "sector_cover: need n >= 3");
  require(n == 3, "sector_cover: only the n = 3 desk scale is implemented");
  int count = (int)std::ceil(2 * kPi * std::sqrt(r));
  double width = 2 * kPi / count;
  std::vector<Sector> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Sector s;
    s.scale = r;
    s.center_angle = (i + 0.5) * width;
    s.half_width = width / 2;
    out.push_back(s);
  }
  return out;
}

/* ---- plates and tubes --------------------------------------------------- */

double Plate::dist(const Vec2& z) const {
  Vec2 d{z[0] - center[0], z[1] - center[1]};
  double u = d[0] * normal[0] + d[1] * normal[1];
  double w = -d[0] * normal[1] + d[1] * normal[0];
  double du = std::max(0.0, std::fabs(u) - half_thickness);
  double dw = std::max(0.0, std::fabs(w) - half_side);
  return std::hypot(du, dw);
}

std::vector<Vec2> Plate::boundary_samples(int per_edge) const {
  std::vector<Vec2> out;
  Vec2 t{-normal[1], normal[0]};
  for (int i = 0; i < per_edge; ++i) {
    double s = per_edge == 1 ? 0.0 : -1.0 + 2.0 * i / (per_edge - 1);
    for (double su : {-1.0, 1.0}) {
      out.push_back({center[0] + s * half_side * t[0] +
                         su * half_thickness * normal[0],
                     center[1] + s * half_side * t[1] +
                         su * half_thickness * normal[1]});
      out.push_back({center[0] + su * half_side * t[0] +
                         s * half_thickness * normal[0],
                     center[1] + su * half_side * t[1] +
                         s * half_thickness * normal[1]});
    }
  }
  return out;
}

Vec3 Tube::center3() const { return {base.center[0], base.center[1], 0}; }

double Tube::core_dist(const Vec3& x) const {
  double t = std::min(length, std::max(-length, x[2]));
  double excess = std::fabs(x[2]) > length ? std::fabs(x[2]) - length : 0.0;
  Vec2 w = sector.xi();
  /* the axis point with third coordinate t sits at p - t xi, so the plate
   * coordinate of x is x' + t xi */
  Vec2 z{x[0] + t * w[0], x[1] + t * w[1]};
  return std::hypot(base.dist(z), excess);
}

bool Tube::contains(const Vec3& x, double dilate) const {
  Tube d = *this;
  d.base.half_side *= dilate;
  d.base.half_thickness *= dilate;
  d.length *= dilate;
  d.fattening *= dilate;
  return d.core_dist(x) <= d.fattening + 1e-12;
}

Vec3 Tube::point_at(double t) const {
  Vec2 w = sector.xi();
  return {base.center[0] - t * w[0], base.center[1] - t * w[1], t};
}

std::vector<Vec3> Tube::axis_samples(double spacing, double dilate) const {
  require(spacing > 0, "axis_samples: need positive spacing");
  std::vector<Vec3> out;
  double len = length * dilate;
  int steps = std::max(1, (int)std::ceil(2 * len / spacing));
  for (int i = 0; i <= steps; ++i)
    out.push_back(point_at(-len + 2 * len * i / steps));
  return out;
}

Tube make_tube(double r, double delta, double phi, const Vec2& center,
               double thickness_floor) {
  require(r >= 4, "make_tube: need r >= 4");
  Tube t;
  t.sector.scale = r;
  t.sector.center_angle = phi;
  t.sector.half_width = 0.5 / std::sqrt(r);
  t.base.center = center;
  t.base.normal = t.sector.xi();
  t.base.half_side = 0.5 * std::pow(r, 0.5 + delta);
  t.base.half_thickness =
      0.5 * std::max(std::pow(r, delta / 2), thickness_floor);
  t.fattening = std::pow(r, delta);
  t.length = r;
  return t;
}

/* ---- polynomials -------------------------------------------------------- */

double Polynomial::eval(const Vec3& x) const {
  double s = 0;
  for (const Term& t : terms) {
    double v = t.coef;
    for (int i = 0; i < 3; ++i)
      for (int e = 0; e < t.exps[i]; ++e) v *= x[i];
    s += v;
  }
  return s;
}

Vec3 Polynomial::grad(const Vec3& x) const {
  Vec3 g{0, 0, 0};
  for (const Term& t : terms) {
    for (int i = 0; i < 3; ++i) {
      if (t.exps[i] == 0) continue;
      double v = t.coef * t.exps[i];
      for (int j = 0; j < 3; ++j) {
        int e = t.exps[j] - (j == i ? 1 : 0);
        for (int q = 0; q < e; ++q) v *= x[j];
      }
      g[i] += v;
    }
  }
  return g;
}

int Polynomial::degree() const {
  int d = 0;
  for (const Term& t : terms)
    if (t.coef != 0) d = std::max(d, t.exps[0] + t.exps[1] + t.exps[2]);
  return d;
}

bool Polynomial::zero() const {
  for (const Term& t : terms)
    if (t.coef != 0) return false;
  return true;
}

Polynomial Polynomial::multiply(const Polynomial& other) const {
  std::map<std::array<int, 3>, double> acc;
  for (const Term& a : terms)
    for (const Term& b : other.terms) {
      std::array<int, 3> e{a.exps[0] + b.exps[0], a.exps[1] + b.exps[1],
                           a.exps[2] + b.exps[2]};
      acc[e] += a.coef * b.coef;
    }
  Polynomial out;
  for (const auto& [e, c] : acc)
    if (c != 0) out.terms.push_back({c, e});
  return out;
}

namespace {
/* multiply accumulated univariate coeffs by (b + t d)^e */
template <typename S>
void mul_binomial_power(std::vector<S>& poly, const S& b, const S& d, int e) {
  for (int q = 0; q < e; ++q) {
    std::vector<S> next(poly.size() + 1, S(0));
    for (size_t i = 0; i < poly.size(); ++i) {
      next[i] += poly[i] * b;
      next[i + 1] += poly[i] * d;
    }
    poly.swap(next);
  }
}
}  // namespace

std::vector<double> Polynomial::restrict_line(const Vec3& base,
                                              const Vec3& dir) const {
  std::vector<double> out(1, 0.0);
  for (const Term& t : terms) {
    std::vector<double> mono(1, t.coef);
    for (int i = 0; i < 3; ++i)
      mul_binomial_power(mono, base[i], dir[i], t.exps[i]);
    if (mono.size() > out.size()) out.resize(mono.size(), 0.0);
    for (size_t i = 0; i < mono.size(); ++i) out[i] += mono[i];
  }
  return out;
}

std::vector<Rat> Polynomial::restrict_line_exact(
    const std::array<Rat, 3>& base, const std::array<Rat, 3>& dir) const {
  std::vector<Rat> out(1, Rat(0));
  for (const Term& t : terms) {
    std::vector<Rat> mono(1, Rat(t.coef));
    for (int i = 0; i < 3; ++i)
      mul_binomial_power(mono, base[i], dir[i], t.exps[i]);
    if (mono.size() > out.size()) out.resize(mono.size(), Rat(0));
    for (size_t i = 0; i < mono.size(); ++i) out[i] += mono[i];
  }
  return out;
}

Polynomial Polynomial::constant(double c) {
  Polynomial p;
  p.terms.push_back({c, {0, 0, 0}});
  return p;
}

Polynomial Polynomial::affine3(const Vec3& normal, double offset) {
  Polynomial p;
  p.terms.push_back({normal[0], {1, 0, 0}});
  p.terms.push_back({normal[1], {0, 1, 0}});
  p.terms.push_back({normal[2], {0, 0, 1}});
  p.terms.push_back({-offset, {0, 0, 0}});
  return p;
}

/* ---- varieties ---------------------------------------------------------- */

int Variety::degree() const {
  if (kind == Kind::Affine) return 1;
  int d = 1;
  for (const Polynomial& p : polys) d = std::max(d, p.degree());
  return d;
}

std::optional<Vec3> Variety::project(const Vec3& x) const {
  if (kind == Kind::Affine) {
    Vec3 d = sub(x, base);
    Vec3 p = base;
    for (const Vec3& b : basis) p = add(p, scale(b, dot(d, b)));
    return p;
  }
  Vec3 y = x;
  for (int it = 0; it < 60; ++it) {
    double worst = 0;
    for (const Polynomial& p : polys) {
      double val = p.eval(y);
      Vec3 g = p.grad(y);
      double g2 = dot(g, g);
      if (g2 < 1e-18) return std::nullopt;  // singular point in the sweep
      y = sub(y, scale(g, val / g2));
      worst = std::max(worst, std::fabs(val));
    }
    if (worst < 1e-10) return y;
  }
  double worst = 0;
  for (const Polynomial& p : polys) worst = std::max(worst, std::fabs(p.eval(y)));
  if (worst < 1e-8) return y;
  return std::nullopt;
}

double Variety::dist(const Vec3& x) const {
  if (kind == Kind::Affine) {
    Vec3 d = sub(x, base);
    Vec3 in_plane{0, 0, 0};
    for (const Vec3& b : basis) in_plane = add(in_plane, scale(b, dot(d, b)));
    return norm(sub(d, in_plane));
  }
  if (auto p = project(x)) return norm(sub(x, *p));
  /* fall back to the first-order estimate when Newton stalls */
  double best = std::numeric_limits<double>::infinity();
  for (const Polynomial& p : polys) {
    double g = norm(p.grad(x));
    if (g > 1e-12) best = std::min(best, std::fabs(p.eval(x)) / g);
  }
  return best;
}

std::vector<Vec3> Variety::tangent_basis(const Vec3& x) const {
  if (kind == Kind::Affine) return basis;
  std::vector<Vec3> grads;
  for (const Polynomial& p : polys) grads.push_back(p.grad(x));
  if (grads.size() == 1) {
    Vec3 n = normalized(grads[0]);
    Vec3 h = std::fabs(n[0]) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    Vec3 t1 = normalized(cross(n, h));
    Vec3 t2 = cross(n, t1);
    return {t1, t2};
  }
  if (grads.size() == 2) {
    Vec3 t = cross(grads[0], grads[1]);
    require(norm(t) > 1e-12, "tangent_basis: gradients not transverse");
    return {normalized(t)};
  }
  return {};  // zero-dimensional
}

std::vector<Vec3> Variety::samples(const Ball& region, double spacing) const {
  require(spacing > 0, "variety samples: need positive spacing");
  std::vector<Vec3> out;
  if (kind == Kind::Affine) {
    if (basis.empty()) {
      if (region.contains(base)) out.push_back(base);
      return out;
    }
    /* grid in subspace coordinates around the projection of the center */
    Vec3 c = *project(region.center);
    std::vector<double> u0(basis.size());
    int steps = (int)std::ceil(region.radius / spacing);
    std::vector<int> idx(basis.size(), -steps);
    while (true) {
      Vec3 p = c;
      for (size_t i = 0; i < basis.size(); ++i)
        p = add(p, scale(basis[i], idx[i] * spacing));
      if (region.contains(p)) out.push_back(p);
      size_t carry = 0;
      while (carry < idx.size() && ++idx[carry] > steps) {
        idx[carry] = -steps;
        ++carry;
      }
      if (carry == idx.size()) break;
    }
    return out;
  }
  /* ambient grid + Newton projection, deduped on a half-spacing hash */
  std::map<std::array<long, 3>, Vec3> dedupe;
  int steps = (int)std::ceil(2 * region.radius / spacing);
  for (int i = 0; i <= steps; ++i)
    for (int j = 0; j <= steps; ++j)
      for (int l = 0; l <= steps; ++l) {
        Vec3 g{region.center[0] - region.radius + i * spacing,
               region.center[1] - region.radius + j * spacing,
               region.center[2] - region.radius + l * spacing};
        auto p = project(g);
        if (!p || !region.contains(*p, 1.05)) continue;
        std::array<long, 3> key{(long)std::floor((*p)[0] / (spacing / 2)),
                                (long)std::floor((*p)[1] / (spacing / 2)),
                                (long)std::floor((*p)[2] / (spacing / 2))};
        dedupe.emplace(key, *p);
      }
  for (const auto& [k, v] : dedupe) out.push_back(v);
  return out;
}

Variety Variety::full_space() {
  Variety v;
  v.kind = Kind::Affine;
  v.dim = 3;
  v.base = {0, 0, 0};
  v.basis = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  return v;
}

Variety Variety::affine_subspace(const Vec3& base,
                                 const std::vector<Vec3>& basis) {
  Variety v;
  v.kind = Kind::Affine;
  v.base = base;
  /* Gram-Schmidt; reject degenerate spans */
  for (Vec3 b : basis) {
    for (const Vec3& e : v.basis) b = sub(b, scale(e, dot(b, e)));
    require(norm(b) > 1e-12, "affine_subspace: degenerate basis");
    v.basis.push_back(normalized(b));
  }
  v.dim = (int)v.basis.size();
  return v;
}

Variety Variety::zero_set(std::vector<Polynomial> polys) {
  require(!polys.empty() && polys.size() <= 3,
          "zero_set: need 1..3 polynomials");
  for (const Polynomial& p : polys)
    require(!p.zero(), "zero_set: zero polynomial");
  Variety v;
  v.kind = Kind::ZeroSet;
  v.polys = std::move(polys);
  v.dim = 3 - (int)v.polys.size();
  return v;
}

bool Multigrain::check_nesting(int samples_per_level, CounterRng rng,
                               double slack) const {
  require(grains.size() == deltas.size(),
          "multigrain: one delta per level required");
  for (size_t i = 0; i + 1 < grains.size(); ++i) {
    const Grain& fine = grains[i];
    const Grain& coarse = grains[i + 1];
    if (fine.ball.radius > coarse.ball.radius + 1e-9) return false;
    double w_fine = std::pow(fine.ball.radius, 0.5 + deltas[i]);
    double w_coarse = std::pow(coarse.ball.radius, 0.5 + deltas[i + 1]);
    auto pts = fine.Z.samples(fine.ball, std::max(1.0, fine.ball.radius / 8));
    int checked = 0;
    for (const Vec3& p : pts) {
      if (checked >= samples_per_level) break;
      /* random point of the fine neighborhood around p */
      Vec3 off{rng.normal(), rng.normal(), rng.normal()};
      double n = norm(off);
      if (n > 0) off = scale(off, rng.uniform() * w_fine / n);
      Vec3 q = add(p, off);
      if (coarse.Z.dist(q) > w_coarse * slack) return false;
      ++checked;
    }
  }
  return true;
}

/* ---- distances ---------------------------------------------------------- */

double directed_dist(const std::vector<Vec3>& A, const std::vector<Vec3>& B) {
  require(!A.empty() && !B.empty(), "directed_dist: empty point set");
  double worst = 0;
  for (const Vec3& a : A) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& b : B) best = std::min(best, norm(sub(a, b)));
    worst = std::max(worst, best);
  }
  return worst;
}

double hausdorff_dist(const std::vector<Vec3>& A, const std::vector<Vec3>& B) {
  return std::max(directed_dist(A, B), directed_dist(B, A));
}

/* ---- tangency ----------------------------------------------------------- */

TangencyResult is_tangent_ex(const Tube& tube, const Variety& Z,
                             const Ball& ball, double delta_m, double C,
                             double tube_spacing, double variety_spacing) {
  const double r = ball.radius;
  TangencyResult res;
  res.dist_bound = std::pow(r, 0.5 + delta_m);
  res.angle_bound = C * std::pow(r, -0.5 + delta_m);
  if (tube_spacing <= 0) tube_spacing = std::max(1.0, tube.base.half_side / 2);
  if (variety_spacing <= 0) variety_spacing = std::max(1.0, std::sqrt(r) / 4);

  /* (i) every sampled tube point inside 2*ball is within the slab width;
   * sample the axis and the cross-section extremes */
  Vec2 w = tube.sector.xi();
  Vec2 t2{-w[1], w[0]};
  const double hs = tube.base.half_side + tube.fattening;
  const double ht = tube.base.half_thickness + tube.fattening;
  std::vector<Vec2> cross_offsets = {{0, 0}};
  for (double a : {-1.0, 1.0}) {
    cross_offsets.push_back({a * hs * t2[0], a * hs * t2[1]});
    cross_offsets.push_back({a * ht * w[0], a * ht * w[1]});
    for (double b : {-1.0, 1.0})
      cross_offsets.push_back({a * hs * t2[0] + b * ht * w[0],
                               a * hs * t2[1] + b * ht * w[1]});
  }
  bool inside = true;
  for (const Vec3& ax : tube.axis_samples(tube_spacing)) {
    for (const Vec2& off : cross_offsets) {
      Vec3 x{ax[0] + off[0], ax[1] + off[1], ax[2]};
      if (!ball.contains(x, 2)) continue;
      double d = Z.dist(x);
      res.worst_dist = std::max(res.worst_dist, d);
      if (d > res.dist_bound + 1e-9) inside = false;
    }
  }

  /* (ii) axis direction nearly tangent at variety points near the tube */
  auto zs = Z.samples(ball, variety_spacing);
  if (zs.empty()) {
    res.determinate = false;
    res.tangent = false;
    return res;
  }
  bool angles_ok = true;
  int near_tube = 0;
  for (const Vec3& x : zs) {
    if (tube.core_dist(x) > res.dist_bound + tube.fattening) continue;
    ++near_tube;
    auto tb = Z.tangent_basis(x);
    double ang = angle_to_subspace(tube.L(), tb);
    res.worst_angle = std::max(res.worst_angle, ang);
    if (ang > res.angle_bound + 1e-9) angles_ok = false;
  }
  if (near_tube == 0 && Z.kind == Variety::Kind::ZeroSet) {
    /* no zero samples near the tube: signal indeterminate rather than
     * vacuous truth */
    res.determinate = false;
  }
  res.tangent = inside && angles_ok;
  return res;
}

bool is_tangent(const Tube& tube, const Variety& Z, const Ball& ball,
                double delta_m) {
  TangencyResult r = is_tangent_ex(tube, Z, ball, delta_m);
  require(r.determinate, "is_tangent: indeterminate (no variety samples)");
  return r.tangent;
}

/* ---- transverse intersections ------------------------------------------ */

std::vector<Ball> transverse_intersection_clusters(const Tube& tube,
                                                   const Variety& Z,
                                                   double alpha, double C) {
  require(alpha > 0, "transverse_intersection_clusters: need alpha > 0");
  std::vector<Polynomial> polys;
  if (Z.kind == Variety::Kind::ZeroSet) {
    polys = Z.polys;
  } else {
    /* describe the affine variety by affine forms so the wedge test below
     * is uniform */
    require(Z.dim >= 1 && Z.dim <= 2,
            "transverse_intersection_clusters: affine dim must be 1 or 2");
    std::vector<Vec3> normals;
    for (const Vec3& cand : {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}}) {
      Vec3 v = cand;
      for (const Vec3& b : Z.basis) v = sub(v, scale(b, dot(v, b)));
      for (const Vec3& nprev : normals) v = sub(v, scale(nprev, dot(v, nprev)));
      if (norm(v) > 1e-9) normals.push_back(normalized(v));
      if ((int)normals.size() == 3 - Z.dim) break;
    }
    for (const Vec3& nv : normals)
      polys.push_back(Polynomial::affine3(nv, dot(nv, Z.base)));
  }
  Variety zz = Variety::zero_set(polys);

  auto wedge = [&](const Vec3& x) {
    if (polys.size() == 1) return norm(polys[0].grad(x));
    if (polys.size() == 2) return norm(cross(polys[0].grad(x), polys[1].grad(x)));
    Vec3 g0 = polys[0].grad(x), g1 = polys[1].grad(x), g2 = polys[2].grad(x);
    return std::fabs(dot(g0, cross(g1, g2)));
  };

  std::vector<Vec3> hits;
  double step = std::max(1.0, tube.fattening);
  for (const Vec3& ax : tube.axis_samples(step)) {
    auto p = zz.project(ax);
    if (!p) continue;
    if (tube.core_dist(*p) > tube.base.half_side + tube.fattening) continue;
    if (wedge(*p) <= alpha) continue;
    hits.push_back(*p);
  }

  std::vector<Ball> out;
  const double radius_cap = C * tube.length / alpha;
  std::vector<bool> used(hits.size(), false);
  for (size_t i = 0; i < hits.size(); ++i) {
    if (used[i]) continue;
    Ball b{hits[i], 0};
    for (size_t j = i; j < hits.size(); ++j) {
      if (used[j]) continue;
      double d = norm(sub(hits[j], b.center));
      if (d <= radius_cap) {
        used[j] = true;
        b.radius = std::max(b.radius, d);
      }
    }
    b.radius = std::max(b.radius, step);
    out.push_back(b);
  }
  return out;
}

/* ---- serialization ------------------------------------------------------ */

namespace {
std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}
}  // namespace

std::string to_line(const Sector& s) {
  return "sector scale=" + fmt(s.scale) + " phi=" + fmt(s.center_angle) +
         " hw=" + fmt(s.half_width);
}

std::string to_line(const Tube& t) {
  return "tube scale=" + fmt(t.sector.scale) + " phi=" +
         fmt(t.sector.center_angle) + " hw=" + fmt(t.sector.half_width) +
         " cx=" + fmt(t.base.center[0]) + " cy=" + fmt(t.base.center[1]) +
         " hs=" + fmt(t.base.half_side) + " ht=" + fmt(t.base.half_thickness) +
         " len=" + fmt(t.length) + " fat=" + fmt(t.fattening) + " vi=" +
         std::to_string(t.v_index[0]) + " vj=" + std::to_string(t.v_index[1]) +
         " l=" + std::to_string(t.l_index);
}

std::string to_line(const Variety& v) {
  std::string s;
  if (v.kind == Variety::Kind::Affine) {
    s = "variety kind=affine dim=" + std::to_string(v.dim) + " base=" +
        fmt(v.base[0]) + "," + fmt(v.base[1]) + "," + fmt(v.base[2]);
    for (const Vec3& b : v.basis)
      s += " b=" + fmt(b[0]) + "," + fmt(b[1]) + "," + fmt(b[2]);
  } else {
    s = "variety kind=zeroset dim=" + std::to_string(v.dim);
    for (const Polynomial& p : v.polys) {
      s += " poly=";
      for (size_t i = 0; i < p.terms.size(); ++i) {
        const auto& t = p.terms[i];
        if (i) s += ";";
        s += fmt(t.coef) + "," + std::to_string(t.exps[0]) + "," +
             std::to_string(t.exps[1]) + "," + std::to_string(t.exps[2]);
      }
    }
  }
  return s;
}

std::string to_line(const Grain& g) {
  return "grain center=" + fmt(g.ball.center[0]) + "," +
         fmt(g.ball.center[1]) + "," + fmt(g.ball.center[2]) + " radius=" +
         fmt(g.ball.radius) + " | " + to_line(g.Z);
}

namespace {
bool take_kv(std::istringstream& in, const std::string& key, std::string& val) {
  std::string tok;
  if (!(in >> tok)) return false;
  auto eq = tok.find('=');
  if (eq == std::string::npos || tok.substr(0, eq) != key) return false;
  val = tok.substr(eq + 1);
  return true;
}

bool parse_vec3(const std::string& s, Vec3& v) {
  return std::sscanf(s.c_str(), "%lf,%lf,%lf", &v[0], &v[1], &v[2]) == 3;
}
}  // namespace

std::optional<Sector> parse_sector(const std::string& line) {
  std::istringstream in(line);
  std::string head, a, b, c;
  if (!(in >> head) || head != "sector") return std::nullopt;
  if (!take_kv(in, "scale", a) || !take_kv(in, "phi", b) ||
      !take_kv(in, "hw", c))
    return std::nullopt;
  Sector s;
  s.scale = std::stod(a);
  s.center_angle = std::stod(b);
  s.half_width = std::stod(c);
  return s;
}

std::optional<Tube> parse_tube(const std::string& line) {
  std::istringstream in(line);
  std::string head;
  if (!(in >> head) || head != "tube") return std::nullopt;
  std::string v[12];
  const char* keys[12] = {"scale", "phi", "hw",  "cx", "cy", "hs",
                          "ht",    "len", "fat", "vi", "vj", "l"};
  for (int i = 0; i < 12; ++i)
    if (!take_kv(in, keys[i], v[i])) return std::nullopt;
  Tube t;
  t.sector.scale = std::stod(v[0]);
  t.sector.center_angle = std::stod(v[1]);
  t.sector.half_width = std::stod(v[2]);
  t.base.center = {std::stod(v[3]), std::stod(v[4])};
  t.base.normal = t.sector.xi();
  t.base.half_side = std::stod(v[5]);
  t.base.half_thickness = std::stod(v[6]);
  t.length = std::stod(v[7]);
  t.fattening = std::stod(v[8]);
  t.v_index = {std::stoi(v[9]), std::stoi(v[10])};
  t.l_index = std::stoi(v[11]);
  return t;
}

std::optional<Variety> parse_variety(const std::string& line) {
  std::istringstream in(line);
  std::string head, kind, dim;
  if (!(in >> head) || head != "variety") return std::nullopt;
  if (!take_kv(in, "kind", kind) || !take_kv(in, "dim", dim))
    return std::nullopt;
  if (kind == "affine") {
    std::string bs;
    if (!take_kv(in, "base", bs)) return std::nullopt;
    Vec3 base;
    if (!parse_vec3(bs, base)) return std::nullopt;
    std::vector<Vec3> basis;
    std::string b;
    while (take_kv(in, "b", b)) {
      Vec3 v;
      if (!parse_vec3(b, v)) return std::nullopt;
      basis.push_back(v);
    }
    if ((int)basis.size() != std::stoi(dim)) return std::nullopt;
    if (basis.empty()) {
      Variety v;
      v.kind = Variety::Kind::Affine;
      v.dim = 0;
      v.base = base;
      return v;
    }
    Variety v = Variety::affine_subspace(base, basis);
    return v;
  }
  if (kind == "zeroset") {
    std::vector<Polynomial> polys;
    std::string ps;
    while (take_kv(in, "poly", ps)) {
      Polynomial p;
      std::istringstream terms(ps);
      std::string term;
      while (std::getline(terms, term, ';')) {
        Polynomial::Term t;
        if (std::sscanf(term.c_str(), "%lf,%d,%d,%d", &t.coef, &t.exps[0],
                        &t.exps[1], &t.exps[2]) != 4)
          return std::nullopt;
        p.terms.push_back(t);
      }
      polys.push_back(p);
    }
    if (polys.empty()) return std::nullopt;
    return Variety::zero_set(std::move(polys));
  }
  return std::nullopt;
}

std::optional<Grain> parse_grain(const std::string& line) {
  auto bar = line.find(" | ");
  if (bar == std::string::npos) return std::nullopt;
  std::istringstream in(line.substr(0, bar));
  std::string head, cs, rs;
  if (!(in >> head) || head != "grain") return std::nullopt;
  if (!take_kv(in, "center", cs) || !take_kv(in, "radius", rs))
    return std::nullopt;
  Grain g;
  if (!parse_vec3(cs, g.ball.center)) return std::nullopt;
  g.ball.radius = std::stod(rs);
  auto v = parse_variety(line.substr(bar + 3));
  if (!v) return std::nullopt;
  g.Z = *v;
  return g;
}

}  // namespace conelab::geometry
