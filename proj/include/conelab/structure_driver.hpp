#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "conelab/cone_geometry.hpp"
#include "conelab/freq_grid.hpp"
#include "conelab/poly_partition.hpp"

namespace conelab::driver {

using geometry::Ball;
using geometry::Grain;
using geometry::Multigrain;
using geometry::Tube;
using geometry::Variety;
using geometry::Vec3;
using partition::MassGrid;

/* Lightweight packet view carried through the recursion: tube geometry plus
 * frequency-sector bookkeeping.  Built from a wave-packet decomposition (or
 * synthetic for mass-only runs). */
struct DriverPacket {
  Tube tube;
  double norm2 = 0;
  int theta = 0;
};

struct DriverParams {
  int n = 3;            // ambient dimension (desk scale)
  int k = 2;            // broad parameter; descending below k is flagged
  int d = 2;            // partition cell parameter
  double epsilon = 0.5; // seeds the small-parameter ladder
  double A0 = 9;        // initial cap-drop budget (divided by 3 per 'a')
  double Cbar = 10;     // constant in the C^III/C^IV recurrence
  double C_tang = 10;   // tangential-dominance slack
  int grid_size = 48;   // partition mass-grid resolution per axis
  long budget_per_round = 4000;  // equipartition search budget
  int max_steps = 24;
  int max_cells = 512;  // cell-lineage cap, largest masses kept
  int max_grains = 64;
  std::uint64_t seed = 1;
  double mass_floor_abs = 0;  // at or below: immediate termination
};

/* Small parameters from the epsilon ladder: delta = epsilon^2, the
 * dimension-indexed delta_m (rung n - m of the ladder, so higher dimension
 * means larger delta), and the tilde parameter linking dimension m+1 to m. */
struct DeltaSet {
  double delta = 0;
  std::vector<double> delta_dim;  // index m = 0..n
  std::vector<double> tilde_dim;  // index m = 0..n-1
};
DeltaSet delta_set(double epsilon, int n);

/* One piece of the current decomposition: sparse mass on the working grid,
 * the packets whose tubes meet it, and its support diameter. */
struct Piece {
  std::vector<std::pair<size_t, double>> mass;  // (flat grid index, mass)
  double total = 0;
  std::vector<int> packets;
  double diameter = 0;
};

enum class StepKind { Continue, Tiny, Tang, Atomic, Abort };

/* Iterated-partitioning state.  All coefficients are tracked in log space
 * by the exact per-branch recurrences and re-derived from the closed forms
 * after every step (1e-12 agreement asserted into recurrences_ok). */
struct Alg1State {
  /* run context (grid frame: the mass grid is centered at the origin;
   * `origin` records the world offset for packet geometry) */
  Grain grain;
  std::vector<DriverPacket> packets;
  Vec3 origin{0, 0, 0};
  MassGrid geom;  // geometry carrier; its mass field is unused
  double r0 = 0, total0 = 0, ln_r = 0;
  double delta = 0, delta_m = 0, delta_tilde = 0;

  /* recursion variables */
  int j = 0;
  std::string history;
  double rho = 0;
  double A = 0;
  long double logCI = 0, logCII = 0, logCIII = 0, logCIV = 0;
  std::vector<Piece> pieces;
  int count_c = 0, count_a = 0;

  /* diagnostics */
  bool recurrences_ok = true;
  bool mass_vanished = false;
  bool wall_clamped = false;
  int cells_per_packet_max = 0;
  int degree_max = 0;
  std::vector<Grain> tang_grains;
  std::vector<double> tang_grain_mass;
  std::vector<std::vector<int>> tang_grain_packets;
  Variety tang_Y;
  bool has_tang = false;
  std::vector<std::string> transcript;
};

Alg1State alg1_init(const Grain& grain, const MassGrid& mass,
                    const std::vector<DriverPacket>& packets,
                    const DriverParams& par);
StepKind alg1_step(Alg1State& st, const DriverParams& par);

struct Alg1Report {
  std::string history;
  std::string terminal;  // tiny | tang | atomic | incomplete | aborted
  int steps = 0;
  int count_c = 0, count_a = 0;
  double rho_final = 0, A_final = 0;
  double CI = 0, CII = 0, CIII = 0, CIV = 0;
  bool recurrences_ok = true;
  bool history_bounds_ok = true;        // history-word count bounds
  bool mass_vanished = false;
  double total0 = 0, total_final = 0;

  /* measured output properties (measured constants, not guaranteed bounds) */
  double p1_mass_fraction = 0;                      // terminal/initial mass
  double p2_norm_growth = 0, p2_reference = 0;      // sum cell norms
  double p3_max_cell_fraction = 0, p3_reference = 0;
  double p4_max_sector_fraction = 0, p4_reference = 0;
  double p5_packet_survival = 0;
  int cells_per_packet_max = 0;
  int crossing_bound = 0;  // certified degree + 1 per cellular step

  std::vector<Grain> grains;  // [tang] output family
  std::vector<double> grain_mass;
  std::vector<std::vector<int>> grain_packets;
  Variety Y;
  bool has_Y = false;
  std::vector<Piece> cells;  // [tiny]/[atomic] output pieces
  std::string transcript;
};

Alg1Report alg1_run(const Grain& grain, const MassGrid& mass,
                    const std::vector<DriverPacket>& packets,
                    const DriverParams& par);

/* ---- repeated application over descending dimension levels -------------- */

struct Alg2LevelLog {
  int level = 0;
  int members = 0;
  double tiny_mass = 0, tang_mass = 0;
  std::string branch;  // terminate | descend
  int A_count_a = 0;   // pigeonholed history keys
  int D_count_c = 0;
  double r_selected = 0;  // common scale of the selected bucket
  double D_value = 0;     // d^{#c}
};

struct Alg2Report {
  int m_final = 0;
  bool vanishing_violation = false;  // forced below the k floor
  std::vector<Alg2LevelLog> levels;
  std::vector<Alg1Report> runs;
  double p2_growth = 0, p2_reference = 0, p2_slack = 0;
  long double logM_driver = 0, logM_exponents = 0;
  bool dual_route_ok = false;  // two routes to the scale/degree factor agree
  double mass_total0 = 0, mass_final = 0;
  std::vector<Multigrain> final_family;
  std::string transcript;
};

Alg2Report alg2_run(const MassGrid& mass,
                    const std::vector<DriverPacket>& packets, double R,
                    const DriverParams& par);

/* ---- mass oracles ------------------------------------------------------- */

/* Synthetic scenario masses on [-r, r]^3.  Names: spread (uniform ball),
 * slab / plane-line (uniform slab around the plane x1 = 0), line (tube
 * around the x3 axis), generic (seeded random), vanishing (empty). */
MassGrid scenario_mass(const std::string& name, double r, int size,
                       std::uint64_t seed = 1);

/* Broad-norm mass: the per-ball mu table over B(0, R) deposited at the
 * ball centers of the K^2 cover. */
MassGrid broad_mass_grid(const freq::AnnulusFunction& f, double R, int k,
                         double K, int size, std::uint64_t seed,
                         int mc_points, double p, int A = 1);

}  // namespace conelab::driver
