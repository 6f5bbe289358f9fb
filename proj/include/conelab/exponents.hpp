#ifndef CONELAB_EXPONENTS_HPP
#define CONELAB_EXPONENTS_HPP

/* Exponent ladders and thresholds.
 *
 * Everything in this module is scale-free arithmetic: the small-parameter
 * ladder, the induction exponent ladder gamma/sigma/tau -> p_j, the broad
 * and reduction thresholds, the known comparison baselines, and the
 * asymptotic threshold optimizer.  The exact route uses rationals
 * throughout; float mirrors exist for the measuring modules.  Identities
 * that close exactly (ladder consistency, the broad-threshold closure) are
 * asserted in rationals, not to a tolerance.
 */

#include <vector>

#include "conelab/numerics.hpp"

namespace conelab::exponents {

/* ---- small-parameter ladder ------------------------------------------- */

/* delta_0 = eps^10, delta_{j+1} = delta_j^10, final collapse delta_n^10.
 * Linear-scale values leave every float exponent range within a few rungs,
 * so log10 is the primary representation; mpfr values are attached only
 * while they are representable. */
struct DeltaLadder {
  double epsilon = 0;
  int n = 0;
  std::vector<long double> log10_delta;  // rungs 0..n
  long double log10_final = 0;           // log10 of the post-ladder collapse
  std::vector<BigFloat> value;           // linear-scale rungs 0..n
  std::vector<bool> has_value;           // false once underflowed

  /* Solves (1 - dt) * (1/2 + delta_j) = 1/2 + delta_{j+1} for dt.
   * Requires rung j+1 representable.  Sandwiched between delta_j/2 and
   * 2*delta_j (asserted by tests). */
  BigFloat tilde(int j) const;

  long double rung_as_long_double(int j) const;
};

DeltaLadder delta_ladder(double epsilon, int n);

/* ---- thresholds and baselines ----------------------------------------- */

/* 2 + 12/(4n - 5 + 2(k-1) prod_{i=k}^{n-2} 2i/(2i+1)); 2 <= k <= n-2. */
Rat p_broad(int n, int k);

/* 2 + 2/(n-2) for k <= 3, 2 + 4/(2n-k-1) for k > 3; 2 <= k <= n-2. */
Rat p_reduction(int n, int k);

/* Comparison baseline: 4 at n=3, 2(3n+1)/(3n-3) for odd n > 3,
 * 6n/(3n-4) for even n > 3. */
Rat ow_baseline(int n);

struct OptimalK {
  int n = 0;
  int k_star = 0;       // smallest argmin of max(p_broad, p_reduction)
  Rat p_threshold;      // the minimized max
  Rat baseline;         // ow_baseline(n)
  bool improved = false;  // p_threshold < baseline, exact comparison
};

/* n >= 4 (otherwise no admissible k). */
OptimalK optimal_threshold(int n);

struct ImprovementSweep {
  int n_max = 0;
  int n0 = 0;  // smallest n with improvement at every n' in [n0, n_max]
  std::vector<OptimalK> rows;  // n = 4..n_max
};

ImprovementSweep improvement_sweep(int n_max);

/* ---- asymptotic threshold optimizer ----------------------------------- */

/* The two threshold families behave like 2 + c/n with c_broad(v) =
 * 6/(2 + v^{3/2}) and c_reduction(v) = 4/(2 - v) when k ~ v n.  The
 * optimal split equalizes them: 2u^3 + 3u^2 - 2 = 0 with u = sqrt(v). */
struct ThresholdOptimum {
  long double u = 0;       // sqrt(v)
  long double v = 0;
  long double lambda = 0;  // common coefficient 4/(2-v)
  int iterations = 0;
};

/* Bisection on the cubic's sign change; the closed-form radical value is
 * kept in the tests as the independent oracle. */
ThresholdOptimum optimize_threshold();

/* ---- induction exponent ladder ---------------------------------------- */

/* For 2 <= m <= n-2: weights gamma_m..gamma_n (positive, summing to 1),
 * partial sums sigma_j, clipped sums tau_j, exponents p_m..p_n, and the
 * interpolation weights alpha/beta at p = p_n.  The defect functionals
 *   X_j = (beta_{j+1}-beta_j)/2 - (1+tau_j)/2 * (1/2-1/p)
 *   Y_j = beta_{j+1}/2 - (1 + j(1-sigma_j)) * (1/2-1/p)
 * vanish identically for this ladder; the tests assert it exactly. */
struct CriticalLadder {
  int n = 0, m = 0;
  std::vector<Rat> gamma;  // gamma(j), j = m..n
  std::vector<Rat> sigma;  // sigma(j), j = m..n
  std::vector<Rat> tau;    // tau(j),   j = m..n-1
  std::vector<Rat> p;      // p(j),     j = m..n
  std::vector<Rat> alpha;  // alpha(i), i = m..n
  std::vector<Rat> beta;   // beta(i),  i = m..n

  const Rat& gamma_at(int j) const { return gamma.at(j - m); }
  const Rat& sigma_at(int j) const { return sigma.at(j - m); }
  const Rat& tau_at(int j) const { return tau.at(j - m); }
  const Rat& p_at(int j) const { return p.at(j - m); }
  const Rat& alpha_at(int i) const { return alpha.at(i - m); }
  const Rat& beta_at(int i) const { return beta.at(i - m); }

  Rat X(int j) const;  // m <= j <= n-1
  Rat Y(int j) const;  // m-1 <= j <= n-1
};

CriticalLadder critical_ladder(int n, int m);

/* Independent closed form for the partial sums:
 * sigma_j = 1/3 - (m-1) Pi_j / (3j), Pi_j = prod_{i=m}^{j} 2i/(2i+1). */
Rat sigma_closed_form(int m, int j);

/* ---- scale/degree bookkeeping factor ---------------------------------- */

/* M = D[m-1]^delta * (prod_{i=m}^{n-1} D[i])^{(n-m) delta}
 *       * prod_{i=m}^{n-1} r[i]^{(beta[i+1]-beta[i])/2}
 *                          D[i]^{(beta[i+1]-beta[m])/2}.
 * r_vec and d_vec are indexed m-1..n-1 (so size n-m+1); beta is indexed
 * m..n (size n-m+1).  Entries of r_vec/d_vec must be >= 1. */
long double log_M_factor(const std::vector<long double>& r_vec,
                         const std::vector<long double>& d_vec,
                         const std::vector<long double>& beta,
                         long double delta, int m, int n);

long double M_factor(const std::vector<long double>& r_vec,
                     const std::vector<long double>& d_vec,
                     const std::vector<long double>& beta,
                     long double delta, int m, int n);

}  // namespace conelab::exponents

#endif
