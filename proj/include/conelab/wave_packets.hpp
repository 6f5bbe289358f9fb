#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "conelab/cone_geometry.hpp"
#include "conelab/freq_grid.hpp"
#include "conelab/profile.hpp"
#include "conelab/rng.hpp"

namespace conelab::packets {

using freq::AnnulusFunction;
using freq::GridSpec;
using geometry::Ball;
using geometry::Tube;
using geometry::Variety;
using geometry::Vec2;
using geometry::Vec3;

/* (sector, spatial cube, plate) index of one wave packet */
struct PacketIndex {
  int theta = 0;  // sector index in the angular cover
  int vi = 0;     // cube index along z1
  int vj = 0;     // cube index along z2
  int l = 0;      // plate index along <z, xi_theta>

  friend bool operator<(const PacketIndex& a, const PacketIndex& b) {
    if (a.theta != b.theta) return a.theta < b.theta;
    if (a.vi != b.vi) return a.vi < b.vi;
    if (a.vj != b.vj) return a.vj < b.vj;
    return a.l < b.l;
  }
  friend bool operator==(const PacketIndex& a, const PacketIndex& b) {
    return a.theta == b.theta && a.vi == b.vi && a.vj == b.vj && a.l == b.l;
  }
};

struct PacketInfo {
  PacketIndex idx;
  double proxy_norm2 = 0;  // window-weighted squared mass, frequency units
  Vec2 cube_center{0, 0};
  double plate_center = 0;  // along xi_theta
};

struct DecomposeParams {
  double keep_rel2 = 1e-20;    // drop packets below this relative sq. mass
  double overlap_frac = 0.25;  // partition-of-unity overlap
  int plate_floor_cells = 2;   // min plate thickness in dual-grid cells
  int pad_factor = 2;
};

/* Scale-r wave-packet decomposition of a frequency-side function: angular
 * sectors, spatial cubes of side r^{1/2+delta}, plates of thickness
 * ~r^{delta/2} sliced along the global <z, xi_theta> coordinate, and an
 * outer sector cutoff that is identically 1 on each sector's support so
 * that summing all packets returns f exactly up to the dropped mass. */
class PacketDecomposition {
 public:
  GridSpec grid;
  double r = 0, delta = 0;
  DecomposeParams par;
  AnnulusFunction f;
  double f_norm = 0;  // frequency-side L2 norm of f
  int sector_count = 0;
  double cube_side = 0, plate_thickness = 0;
  std::vector<PacketInfo> packets;  // kept packets, sorted by index
  double dropped_rel2 = 0;          // dropped proxy mass / total proxy mass

  const profile::PeriodicPartition& angular() const { return *angular_; }
  const profile::LinePartition& cube_axis() const { return *cube_axis_; }
  const profile::LinePartition& plate_axis() const { return *plate_axis_; }

  int spatial_size() const;  // padded dual-grid points per axis
  double dz() const;

  /* spatial transform of f * psi_theta on the padded dual grid */
  std::vector<std::complex<double>> sector_field(int theta) const;
  /* the packet function psi'_theta (eta windows * sector field)^inv */
  AnnulusFunction packet_function(const PacketIndex& idx) const;
  /* coherent sum of packet functions (grouped per sector, one transform
   * per touched sector) */
  AnnulusFunction sum_function(const std::vector<PacketIndex>& subset) const;
  AnnulusFunction reconstruct_all() const;
  double reconstruction_error() const;  // relative L2 against f

  /* geometric tube of a packet */
  Tube tube(const PacketIndex& idx) const;
  std::optional<PacketInfo> find(const PacketIndex& idx) const;

  /* per-packet true norms and frequency-sector-restricted norms against a
   * rho^{-1/2}-sector cover (and its C-times enlargement).  Rows cover the
   * significant packets only (one full-grid transform per row is needed, so
   * the fat tail of numerically tiny packets is excluded); covered_rel2
   * reports the proxy-mass fraction the rows carry. */
  struct SpectralTable {
    double rho = 0;
    double enlarge = 0;
    double min_rel2 = 0;      // row threshold, fraction of total proxy mass
    double covered_rel2 = 0;  // proxy-mass fraction carried by the rows
    int rho_sectors = 0;
    std::vector<int> rows;                        // positions into packets
    std::vector<double> true_norm2;               // [row]
    std::vector<std::vector<double>> in_sector;   // [row][rho-sector]
    std::vector<std::vector<double>> in_enlarged; // [row][rho-sector]
  };
  SpectralTable spectral_table(double rho, double enlarge = 4,
                               double min_rel2 = 3e-5) const;

  /* squared frequency-L2 norm restricted to a rho^{-1/2}-sector (by index
   * in the scale-rho cover, dilated by `enlarge`) */
  double restricted_norm2(const AnnulusFunction& g, double rho, int sector,
                          double enlarge = 1) const;

 private:
  friend PacketDecomposition decompose(const AnnulusFunction&, double, double,
                                       const DecomposeParams&);
  std::shared_ptr<profile::PeriodicPartition> angular_;
  std::shared_ptr<profile::LinePartition> cube_axis_;
  std::shared_ptr<profile::LinePartition> plate_axis_;
  struct FftPlans;
  std::shared_ptr<FftPlans> plans_;
  std::vector<std::complex<double>> spatial_from_freq(
      const AnnulusFunction& g) const;
  AnnulusFunction freq_from_spatial(
      const std::vector<std::complex<double>>& w) const;
  /* eta_v eta^l window value at a dual-grid point */
  double window(const PacketIndex& idx, double z1, double z2) const;
  void sum_windows_into(const std::vector<const PacketInfo*>& subset,
                        int theta, std::vector<std::complex<double>>& acc,
                        const std::vector<std::complex<double>>& field) const;
};

/* required grid spacing for a scale-r decomposition */
double required_grid_h(double r);

PacketDecomposition decompose(const AnnulusFunction& f, double r, double delta,
                              const DecomposeParams& par = {});

struct OrthogonalityReport {
  double ratio = 0;  // sum of packet norms^2 over norm^2 of the packet sum
  bool undefined = false;
  double sum_norm2 = 0;
  double packets_norm2 = 0;
};
OrthogonalityReport orthogonality_ratio(const PacketDecomposition& d,
                                        const std::vector<PacketIndex>& subset);

struct LocalOrthogonalityReport {
  double rho = 0;
  /* measured constants: lhs/rhs of each displayed inequality, maximized
   * over the rho^{-1/2}-sector cover (forward: sum-outside vs packetwise
   * enlarged; reverse: packetwise vs sum enlarged), plus the max-over-
   * sector forms.  Constants are measured on the significant-packet family
   * of the spectral table; covered_rel2/rows echo that family. */
  double c_forward = 0;
  double c_reverse = 0;
  double c_max_forward = 0;
  double c_max_reverse = 0;
  double covered_rel2 = 0;
  int rows = 0;
};
/* Pass a prebuilt table (same rho) to avoid recomputing it. */
LocalOrthogonalityReport local_orthogonality(
    const PacketDecomposition& d, double rho,
    const PacketDecomposition::SpectralTable* table = nullptr);

struct TwoScaleParams {
  double angle_C = 2;   // membership slack on Dist(theta, zeta)
  double plate_C = 4;   // membership slack on the plate condition, in r^delta
  DecomposeParams decompose;
};

struct TwoScaleLift {
  PacketDecomposition coarse;  // scale-r decomposition of g
  PacketDecomposition fine;    // scale-rho decomposition of the recentered g
  Vec3 y{0, 0, 0};
  /* membership: for each coarse packet (by position in coarse.packets),
   * the fine packets (by position in fine.packets) in its lifted set */
  std::vector<std::vector<int>> members;
  /* fraction of the recentered function's squared mass captured by the
   * union of all member packets */
  double capture_fraction = 0;
  /* worst angle between L/M directions over emitted pairs, in units of
   * rho^{-1/2} */
  double worst_L_angle_units = 0;
  double worst_M_angle_units = 0;
};
TwoScaleLift two_scale_lift(const AnnulusFunction& g, const Vec3& y,
                            double rho, double r,
                            const TwoScaleParams& par = {});

struct MediumGroup {
  int zeta0 = 0;            // rho^{-1/2}-sector index
  int v0i = 0, v0j = 0;     // lattice point of spacing r^{1/2+2delta}
  std::vector<int> members;  // positions in packets()
  double norm2 = 0;          // squared norm of the summed member function
};

struct MediumGrouping {
  double rho = 0;
  std::vector<MediumGroup> groups;
  bool partition_exact = false;  // every packet in exactly one group
  double ratio = 0;              // sum of group norms^2 / ||g||^2
};
MediumGrouping group_medium_tubes(const PacketDecomposition& d, const Vec3& y,
                                  double rho);

struct EssTailSplit {
  std::vector<MediumGroup> ess, tail;
  int balls_essential = 0, balls_tail = 0, balls_unclassified = 0;
  double split_angle = 0;  // angle(V^+, V-perp) of the affine variety
  bool partition_exact = false;
  AnnulusFunction g_ess, g_tail;
};
EssTailSplit split_essential_tail(const PacketDecomposition& d,
                                  const Variety& Z, const Ball& b_rho,
                                  double K, const Vec3& y, double delta_m);

/* number of K^{-2}-sectors needed to cover the tangency directions of a
 * variety through one ball (the clustering count of the tail-ball estimate) */
int tail_sector_cluster_count(const Variety& Z, const Ball& B, double r,
                              double delta_m, double K);

struct EquidistributionResult {
  double ratio = 0;       // ||g_ess_b||^2 / ((r/rho)^{-(n-m)/2} ||g||^2)
  double ess_b_norm2 = 0;
  double g_norm2 = 0;
  int tangent_packets = 0;
};
EquidistributionResult equidistribution_ratio(const PacketDecomposition& d,
                                              const Variety& Z, const Vec3& b,
                                              double r, double rho,
                                              double delta_m, double K);

/* structured-text export: one line per packet with index, geometry, norm */
std::string packet_table_text(const PacketDecomposition& d);

}  // namespace conelab::packets
