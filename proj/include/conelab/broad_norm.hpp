#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "conelab/cone_geometry.hpp"
#include "conelab/freq_grid.hpp"

namespace conelab::broad {

using freq::AnnulusFunction;
using geometry::Ball;
using geometry::Vec3;

/* Parameters of the k-broad norm BL^p_{k,A} at sector scale K^{-1} */
struct BroadNormSpec {
  int k = 3;     // excluded subspaces have dimension k-1
  int A = 1;     // number of excluded subspaces per ball
  double K = 4;  // cap scale; balls have radius K^2
  double p = 2;
};
void validate(const BroadNormSpec& spec, int n = 3);

/* K^{-1}-sector caps: an exact angular partition of f together with the
 * direction samples L(theta) of each cap restricted to the angular support
 * of f inside the cap */
struct CapData {
  double K = 0;
  int count = 0;
  double width = 0;  // angular width of one cap
  std::vector<AnnulusFunction> f_tau;
  std::vector<std::vector<Vec3>> directions;  // unit L samples per cap
  double partition_defect = 0;  // max abs deviation of sum f_tau from f
};
CapData make_caps(const AnnulusFunction& f, double K, int samples_per_cap = 33);

using Subspace = std::vector<Vec3>;  // orthonormal basis, k-1 vectors

/* candidate net for the subspace minimization: per-cap chord subspaces of
 * the direction curve plus seeded random subspaces */
std::vector<Subspace> candidate_subspaces(const CapData& caps, int k,
                                          int n_random = 100,
                                          std::uint64_t seed = 1);

/* admissible[c][tau] = 1 when every direction sample of the cap keeps an
 * angle >= K^{-2} from candidate subspace c */
std::vector<std::vector<char>> admissibility(
    const CapData& caps, const std::vector<Subspace>& candidates, double K);

/* finitely overlapping K^2-balls covering the region, with the lattice
 * anchored at the region center; weights are |B cap U| / |B| by grid count */
struct BallGrid {
  double ball_radius = 0;
  std::vector<Ball> balls;
  std::vector<double> weights;
};
BallGrid make_ball_grid(const Ball& U, double K);

/* per-(ball, cap) integrals int_B |Ef_tau|^p for each requested exponent,
 * by fixed-seed Monte-Carlo points interpolated from FFT slices */
struct IntegralTable {
  std::vector<double> ps;
  /* I[ball][tau][p_index] */
  std::vector<std::vector<std::vector<double>>> I;
  int mc_points = 0;
};
IntegralTable ball_integrals(const CapData& caps, const BallGrid& balls,
                             const std::vector<double>& ps,
                             int mc_points = 10000, std::uint64_t seed = 7,
                             int pad_factor = 4);

struct MuResult {
  double value = 0;
  bool sampled_fallback = false;  // tuple space exceeded the exact budget
  std::vector<int> argmin;        // candidate indices of the best tuple
};
/* min over A-tuples of candidates of the max over admissible caps of the
 * ball integral (upper bound on the Grassmannian min) */
MuResult mu(const IntegralTable& table,
            const std::vector<std::vector<char>>& admissible, int ball,
            int p_index, int A, std::uint64_t seed = 3);

/* Caches caps, candidates, admissibility, and integral tables for one
 * function over one region, so several (p, A) norms reuse the same data. */
class BroadNormLab {
 public:
  BroadNormLab(const AnnulusFunction& f, const Ball& region, int k, double K,
               std::uint64_t seed = 1, int mc_points = 10000);

  double norm(const BroadNormSpec& spec);
  MuResult mu_of_ball(int ball, double p, int A);
  std::string report(const BroadNormSpec& spec);

  const CapData& caps() const { return caps_; }
  const BallGrid& balls() const { return balls_; }
  const std::vector<Subspace>& candidates() const { return candidates_; }
  double f_norm() const { return f_norm_; }

 private:
  int p_index(double p);
  int k_;
  double K_;
  std::uint64_t seed_;
  int mc_points_;
  double f_norm_;
  CapData caps_;
  BallGrid balls_;
  std::vector<Subspace> candidates_;
  std::vector<std::vector<char>> admissible_;
  std::vector<double> ps_;
  IntegralTable table_;
};

struct TriangleReport {
  double lhs = 0, rhs1 = 0, rhs2 = 0;
  double c_measured = 0;  // lhs / (rhs1 + rhs2)
  bool pass = false;
};
/* ||E(g+h)||_{BL^p_{k,A1+A2}} <= C (||Eg||_{BL^p_{k,A1}} +
 * ||Eh||_{BL^p_{k,A2}}) with measured C */
TriangleReport check_triangle(const AnnulusFunction& g,
                              const AnnulusFunction& h, const Ball& region,
                              int k, double K, double p, int A1, int A2,
                              double slack_C = 4, std::uint64_t seed = 1);

struct HolderReport {
  double lhs = 0, rhs1 = 0, rhs2 = 0;
  double alpha1 = 0, alpha2 = 0;
  double product = 0;  // rhs1^alpha1 rhs2^alpha2
  bool pass = false;
};
/* ||Ef||_{BL^p_{k,A1+A2}} <= ||Ef||^{a1}_{BL^{p1}_{k,A1}} *
 * ||Ef||^{a2}_{BL^{p2}_{k,A2}}; throws contract_error when the exponent
 * relations are violated */
HolderReport check_holder(const AnnulusFunction& f, const Ball& region, int k,
                          double K, double p1, double p2, int A1, int A2,
                          double alpha1, double alpha2,
                          std::uint64_t seed = 1);

struct VanishingReport {
  double bl = 0, f_norm = 0, ratio = 0;
  bool pass = false;
};
/* broad norm of a directionally concentrated function; pass when the norm
 * is at most tol * ||f||_2 */
VanishingReport check_vanishing(const AnnulusFunction& f, const Ball& region,
                                const BroadNormSpec& spec, double tol = 1e-4,
                                std::uint64_t seed = 1);

struct L2Report {
  double bl2_sq = 0;
  double r = 0;
  double f_norm_sq = 0;
  double constant = 0;  // bl2_sq / (r * f_norm_sq)
};
/* measured constant of the standard L^2 bound for the p = 2 broad norm */
L2Report check_l2_bound(const AnnulusFunction& f, double r, int k, int A,
                        double K, std::uint64_t seed = 1);

}  // namespace conelab::broad
