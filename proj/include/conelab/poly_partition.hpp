#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "conelab/cone_geometry.hpp"

namespace conelab::partition {

using geometry::Ball;
using geometry::Polynomial;
using geometry::Variety;
using geometry::Vec3;

/* Nonnegative mass on a regular grid over [-r, r]^n (n = 2 or 3); the
 * working domain is the inscribed ball.  For n = 2 everything lives in the
 * x3 = 0 plane. */
struct MassGrid {
  int n = 2;
  double r = 0;
  int size = 0;      // cells per axis
  double spacing = 0;
  std::vector<double> mass;  // ix + size*iy (+ size^2*iz for n = 3)

  double& at(int ix, int iy, int iz = 0);
  double at(int ix, int iy, int iz = 0) const;
  Vec3 center(int ix, int iy, int iz = 0) const;  // cell center
  bool in_domain(int ix, int iy, int iz = 0) const;
  double total() const;
  size_t cell_count() const;

  static MassGrid uniform(int n, double r, int size);
  /* mass concentrated in the single cell containing x */
  static MassGrid point_mass(int n, double r, int size, const Vec3& x);
  static MassGrid zeros(int n, double r, int size);
};

struct PartitionPolynomial {
  Polynomial poly;             // product of the round polynomials
  std::vector<Polynomial> rounds;
  int degree = 0;              // actual degree of the product
  int d_parameter = 0;         // requested cell-count parameter
  bool failure = false;        // search missed the ratio bound
  double achieved_ratio = 0;   // max/min over nonempty sign-class masses
  double worst_imbalance = 0;  // worst per-round relative signed mass
  bool nonsingular_ok = false; // gradient nonvanishing on sampled zeros
  long evaluations = 0;        // objective sweeps consumed
};

struct EquipartitionParams {
  double ratio_bound = 4;
  long budget_per_round = 10000;  // objective evaluations per round
  std::uint64_t seed = 1;
  double perturb = 1e-9;
};

/* Recursive approximate ham-sandwich bisection: s = floor(n log2 d) rounds,
 * one polynomial per round bisecting every current mass piece; returns the
 * product polynomial. */
PartitionPolynomial equipartition(const MassGrid& mass, int d,
                                  const EquipartitionParams& par = {});

/* Connected components of the domain minus the wall (points within w of the
 * sampled zero set), labeled deterministically. */
struct CellDecomposition {
  int n = 2;
  double r = 0;
  int size = 0;
  double spacing = 0;
  double w = 0;
  std::vector<int> labels;  // >= 0 cell id, -1 wall, -2 outside domain
  int cell_count = 0;
  bool zero_polynomial = false;  // P vanished identically on the domain
  std::vector<Vec3> zero_samples;

  int label_at(int ix, int iy, int iz = 0) const;
};
CellDecomposition cells(const Polynomial& P, double w, double r, int n,
                        int size);

/* per-cell and wall mass of a mass grid with the same geometry */
struct CellMasses {
  std::vector<double> cell_mass;
  double wall_mass = 0;
  double outside_mass = 0;
  double total = 0;
};
CellMasses cell_masses(const CellDecomposition& cd, const MassGrid& mass);

/* Tube-cell incidence for a straight segment: the certified crossing count
 * is 1 + (number of sign changes of the exact univariate restriction),
 * counted by a rational Sturm sequence; the observed count walks the grid
 * labels.  certified <= degree + 1 always. */
struct IncidenceReport {
  int certified = 0;      // sign-run bound on cells met
  int observed = 0;       // distinct labels along the walk
  int sturm_roots = 0;    // distinct roots of the restriction in (0,1)
  bool restriction_zero = false;  // segment inside the zero set
};
IncidenceReport tube_cell_incidence(const Vec3& p0, const Vec3& p1,
                                    const CellDecomposition& cd,
                                    const Polynomial& P);

/* cellular/algebraic dichotomy on a mass grid */
struct PartitionCaseResult {
  enum class Kind { Cellular, Algebraic };
  Kind kind = Kind::Cellular;
  PartitionPolynomial P;
  CellDecomposition cd;
  double total = 0;
  double cellular_mass = 0;  // over kept cells after refinement
  double wall_mass = 0;
  std::vector<int> kept_cells;
  double band_lo = 0, band_hi = 0;  // kept-cell mass band, fraction of total
  bool band_ok = false;
  /* algebraic case: best mass-capturing affine hyperplane inside Z
   * (invented plumbing; flagged) */
  Variety Y;
  bool y_flagged = false;
  double y_mass_fraction = 0;
};
PartitionCaseResult partition_case(const MassGrid& mass, int d,
                                   const Variety& Z, double w,
                                   const EquipartitionParams& par = {},
                                   double band_C = 4);

std::string partition_report_text(const PartitionCaseResult& res);

}  // namespace conelab::partition
