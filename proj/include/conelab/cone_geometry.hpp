#ifndef CONELAB_CONE_GEOMETRY_HPP
#define CONELAB_CONE_GEOMETRY_HPP

/* Geometry of the truncated cone over the annulus 1 <= |xi| <= 2.
 *
 * Ambient dimension is 3 at desk scale (frequency plane is 2-D), which is
 * what every concrete routine below assumes; the few places where a general
 * statement is free come out that way anyway.  Sectors are angular blocks
 * of width ~ r^{-1/2} covering the annulus, a wave packet's spatial core is
 * a plate (thin slab of a translation cube), and its tube is the plate
 * swept along the light direction L = (-xi, 1).
 *
 * All containment and tangency predicates are sample-based at documented
 * spacings; exact predicates are out of reach for general zero sets.
 */

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "conelab/numerics.hpp"
#include "conelab/rng.hpp"

namespace conelab::geometry {

using Vec2 = std::array<double, 2>;
using Vec3 = std::array<double, 3>;

/* ---- small vector helpers --------------------------------------------- */

Vec3 add(const Vec3& a, const Vec3& b);
Vec3 sub(const Vec3& a, const Vec3& b);
Vec3 scale(const Vec3& a, double s);
double dot(const Vec3& a, const Vec3& b);
double norm(const Vec3& a);
Vec3 normalized(const Vec3& a);
Vec3 cross(const Vec3& a, const Vec3& b);
double dot2(const Vec2& a, const Vec2& b);
double norm2(const Vec2& a);

/* Angle in [0, pi] between nonzero vectors. */
double angle_between(const Vec3& a, const Vec3& b);
/* Angle in [0, pi/2] between a nonzero vector and span(basis). */
double angle_to_subspace(const Vec3& v, const std::vector<Vec3>& basis);
/* Smallest principal angle between span(a_basis) and span(b_basis);
 * zero if either is trivial-dimension-overlapping. */
double subspace_angle(const std::vector<Vec3>& a_basis,
                      const std::vector<Vec3>& b_basis);

struct Ball {
  Vec3 center{0, 0, 0};
  double radius = 0;
  bool contains(const Vec3& x, double dilate = 1) const;
};

/* ---- sectors ----------------------------------------------------------- */

struct Sector {
  double scale = 0;         // the r this sector was built for
  double center_angle = 0;  // direction on S^1
  double half_width = 0;    // angular half width, ~ r^{-1/2}/2

  Vec2 xi() const;  // unit point on the central line
  Vec3 L() const;   // long (tube axis) direction (-xi, 1)
  Vec3 M() const;   // mini direction (xi, 1); <L, M> = 0 since |xi| = 1

  bool contains(const Vec2& freq) const;  // annulus & angular membership
  /* Hausdorff distance between the two angular intervals (circle metric). */
  double angular_hausdorff(const Sector& other) const;
  /* Directions L(phi) sampled across the sector, for direction-set tests. */
  std::vector<Vec3> direction_samples(int count) const;
};

/* Equal angular partition with ceil(2 pi sqrt(r)) blocks, width <= r^{-1/2}.
 * Requires r >= 4; ambient n >= 3 (only n = 3 has a concrete cover here). */
std::vector<Sector> sector_cover(double r, int n);

/* ---- plates and tubes -------------------------------------------------- */

struct Plate {
  Vec2 center{0, 0};
  Vec2 normal{1, 0};  // = xi_theta
  double half_side = 0;       // in-plane half extent (cube half side)
  double half_thickness = 0;  // along the normal

  double dist(const Vec2& z) const;  // exact distance in the plane
  std::vector<Vec2> boundary_samples(int per_edge) const;
};

struct Tube {
  Sector sector;
  Plate base;        // core plate in the x_3 = 0 plane
  double length = 0;     // axis parameter range [-length, length]
  double fattening = 0;  // neighborhood radius ~ r^delta day-to-day ~ 1
  /* lattice bookkeeping (which translation cube / plate produced it) */
  std::array<int, 2> v_index{0, 0};
  int l_index = 0;

  Vec3 L() const { return sector.L(); }
  Vec3 M() const { return sector.M(); }
  Vec3 center3() const;  // plate center embedded at x_3 = 0

  /* Distance from x to the swept core plate {p + t L : p in P, |t| <= len}. */
  double core_dist(const Vec3& x) const;
  bool contains(const Vec3& x, double dilate = 1) const;
  Vec3 point_at(double t) const;  // plate center + t L
  std::vector<Vec3> axis_samples(double spacing, double dilate = 1) const;
};

/* A free-standing tube from direction + center, with packet-scale defaults:
 * half side r^{1/2+delta}/2, thickness max(r^{delta/2}, thickness_floor),
 * fattening r^delta, length r. */
Tube make_tube(double r, double delta, double phi, const Vec2& center,
               double thickness_floor = 0);

/* ---- polynomials (shared with the partitioning module) ----------------- */

struct Polynomial {
  struct Term {
    double coef = 0;
    std::array<int, 3> exps{0, 0, 0};
  };
  int nvars = 3;
  std::vector<Term> terms;

  double eval(const Vec3& x) const;
  Vec3 grad(const Vec3& x) const;
  int degree() const;
  bool zero() const;
  Polynomial multiply(const Polynomial& other) const;

  /* coefficients c_0..c_deg of t -> P(base + t dir) */
  std::vector<double> restrict_line(const Vec3& base, const Vec3& dir) const;
  std::vector<Rat> restrict_line_exact(const std::array<Rat, 3>& base,
                                       const std::array<Rat, 3>& dir) const;

  static Polynomial constant(double c);
  static Polynomial affine3(const Vec3& normal, double offset);  // <n,x>-offset
};

/* ---- varieties, grains ------------------------------------------------- */

struct Variety {
  enum class Kind { Affine, ZeroSet };
  Kind kind = Kind::Affine;
  int dim = 0;

  /* affine: x = base + span(basis), basis orthonormal */
  Vec3 base{0, 0, 0};
  std::vector<Vec3> basis;

  /* zero set: common zeros of polys (3 - dim of them) */
  std::vector<Polynomial> polys;

  int degree() const;
  /* Distance estimate: exact for affine; Newton-projected for zero sets
   * (documented approximation). */
  double dist(const Vec3& x) const;
  /* Orthonormal tangent basis at (approximately) x on the variety. */
  std::vector<Vec3> tangent_basis(const Vec3& x) const;
  /* Sample points of the variety inside the ball at roughly the given
   * spacing; empty result means the sampler found no zero locus there. */
  std::vector<Vec3> samples(const Ball& region, double spacing) const;
  /* Newton projection of x onto the zero set (identity direction for
   * affine).  Returns nullopt if the iteration did not converge. */
  std::optional<Vec3> project(const Vec3& x) const;

  static Variety full_space();
  static Variety affine_subspace(const Vec3& base,
                                 const std::vector<Vec3>& basis);
  static Variety zero_set(std::vector<Polynomial> polys);
};

struct Grain {
  Variety Z;
  Ball ball;
};

/* Ordered coarse-to-fine tower: dim Z_i = level_dims[i], scales ascending;
 * the neighborhood of each grain should sit inside the next one's. */
struct Multigrain {
  std::vector<Grain> grains;
  std::vector<double> deltas;  // delta_{dim} used for each level's width

  bool check_nesting(int samples_per_level, CounterRng rng,
                     double slack = 1.1) const;
};

/* ---- distances --------------------------------------------------------- */

/* max_{a in A} min_{b in B} |a-b|; contract error on empty input. */
double directed_dist(const std::vector<Vec3>& A, const std::vector<Vec3>& B);
double hausdorff_dist(const std::vector<Vec3>& A, const std::vector<Vec3>& B);

/* ---- tangency ---------------------------------------------------------- */

struct TangencyResult {
  bool tangent = false;
  bool determinate = true;  // false when the variety had no samples nearby
  double worst_dist = 0;    // max dist of tube samples in 2B from Z
  double worst_angle = 0;   // max angle(L, T_x Z) over qualifying samples
  double dist_bound = 0;    // r^{1/2+delta_m}
  double angle_bound = 0;   // C r^{-1/2+delta_m}
};

/* Tangent iff (i) tube cap 2*ball stays in the r^{1/2+delta_m}-neighborhood
 * of Z and (ii) the axis direction makes angle <= C r^{-1/2+delta_m} with
 * T_x Z at sampled x in Z cap ball near the tube.  Sampling spacings:
 * tube r^{1/2+delta}/4, variety r^{1/2}/4 (config via arguments). */
TangencyResult is_tangent_ex(const Tube& tube, const Variety& Z,
                             const Ball& ball, double delta_m,
                             double C = 4.0, double tube_spacing = 0,
                             double variety_spacing = 0);
bool is_tangent(const Tube& tube, const Variety& Z, const Ball& ball,
                double delta_m);

/* ---- transverse intersections ----------------------------------------- */

/* Balls of radius <= C r alpha^{-1} covering the sampled set of variety
 * points near the tube where the gradient wedge exceeds alpha. */
std::vector<Ball> transverse_intersection_clusters(const Tube& tube,
                                                   const Variety& Z,
                                                   double alpha,
                                                   double C = 4.0);

/* ---- serialization (one object per line, fixed field order) ------------ */

std::string to_line(const Sector& s);
std::string to_line(const Tube& t);
std::string to_line(const Variety& v);
std::string to_line(const Grain& g);
std::optional<Sector> parse_sector(const std::string& line);
std::optional<Tube> parse_tube(const std::string& line);
std::optional<Variety> parse_variety(const std::string& line);
std::optional<Grain> parse_grain(const std::string& line);

}  // namespace conelab::geometry

#endif
