#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "conelab/cone_geometry.hpp"

namespace conelab::incidence {

using geometry::Ball;
using geometry::Grain;
using geometry::Multigrain;
using geometry::Tube;
using geometry::Variety;
using geometry::Vec3;

/* Counting is purely geometric (no field evaluation), so scales up to
 * r = 1024 are feasible.  Containment predicates are sampled along tube
 * axes at spacing r^{1/2}/4; a tube whose sampled pass has less than one
 * sampling step of distance margin is still counted but flagged. */
struct WolffParams {
  double delta_m = 0.1;    // slab radius w = width_mult * r^{1/2 + delta_m}
  double width_mult = 1.0; // monotonicity knob: enlarges the neighborhood
  double nest_angle_C = 2; // predecessor direction window, units r^{-1/2}
  double nest_dist_C = 2;  // predecessor distance window, units w_coarse
  long max_tubes = 40000000;  // resource guard on the enumeration grid
};

/* Direction-separated tubes trapped in the slab around a variety.  The
 * direction grid is the sector cover (spacing ~ r^{-1/2}), so pairwise
 * separation of admitted directions is exact by construction. */
struct TubeFamily {
  double r = 0;
  double width = 0;  // slab radius used
  std::uint64_t seed = 0;
  std::vector<Tube> tubes;
  std::vector<int> dir_index;        // per-tube direction grid index
  std::vector<int> directions;       // sorted distinct admitted indices
  int grid_directions = 0;           // full direction grid size
  double min_pairwise_angle = 0;     // over distinct admitted directions
  bool flagged = false;  // some admission was within sampling margin
};

TubeFamily admitted_family(const Variety& Z, const Ball& B, double r,
                           const WolffParams& par = {});

struct CountReport {
  long tubes = 0;       // #T: admitted tubes (translations included)
  long directions = 0;  // #Theta: distinct admitted directions
  double bound = 0;     // r^{(m-1)/2}, or the nested product bound
  double ratio = 0;     // directions / bound
  int m = 0;            // variety dimension (bottom level when nested)
  double r = 0;         // scale (bottom level when nested)
  std::string config;
  bool flagged = false;
  bool empty_level = false;  // nested: some level admitted no tubes
};

/* #Theta for tubes trapped near an m-dimensional variety, against the
 * r^{(m-1)/2} bound; m = n admits everything (trivial bound r^{(n-1)/2}). */
CountReport wolff_count(const Variety& Z, const Ball& B, double r,
                        const WolffParams& par = {});

/* Nested variant: walk the multigrain tower coarse-to-fine; a tube at a
 * fine level survives iff it is admitted for that level's grain and has a
 * predecessor in the coarser family close in direction (within
 * nest_angle_C * r_fine^{-1/2}) and in space (axis samples inside the fine
 * ball within nest_dist_C * w_coarse of the predecessor's core).  The
 * reported count is #Theta of the finest surviving family, against
 * (prod_{j<top} r_j^{-1/2}) * r_top^{(n-2)/2}. */
CountReport nested_count(const Multigrain& mg, const WolffParams& par = {});

/* convenience varieties for the standard configurations */
Variety light_ray(double phi);           // line through 0 along L(phi)
Variety cone_tangent_plane(double phi);  // touches the cone along ray phi;
                                         // contains direction L(phi + pi)

std::vector<std::string> count_csv_header();
std::vector<std::string> count_csv_row(const CountReport& rep);
std::uint64_t config_hash(const std::string& config);

}  // namespace conelab::incidence
