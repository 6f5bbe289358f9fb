#include "conelab/exponents.hpp"

#include <cmath>

namespace conelab::exponents {

/* ---- small-parameter ladder ------------------------------------------- */

DeltaLadder delta_ladder(double epsilon, int n) {
  require(epsilon > 0 && epsilon < 1, "delta_ladder: need 0 < epsilon < 1");
  require(n >= 3, "delta_ladder: need n >= 3");

  DeltaLadder out;
  out.epsilon = epsilon;
  out.n = n;
  const long double l10e = std::log10((long double)epsilon);
  out.log10_delta.resize(n + 1);
  out.value.resize(n + 1);
  out.has_value.assign(n + 1, false);

  BigFloat v = boost::multiprecision::pow(BigFloat(epsilon), 10);
  bool alive = true;
  for (int j = 0; j <= n; ++j) {
    /* rung j is eps^(10^(j+1)); in log10 this is exact small arithmetic */
    out.log10_delta[j] = l10e * std::pow(10.0L, (long double)(j + 1));
    if (alive) {
      out.value[j] = v;
      out.has_value[j] = (v > 0);
      alive = out.has_value[j];
      if (alive && j < n) {
        v = boost::multiprecision::pow(v, 10);
        if (v == 0) alive = false;  // underflowed mpfr's exponent range
      }
    }
  }
  out.log10_final = out.log10_delta[n] * 10.0L;
  return out;
}

BigFloat DeltaLadder::tilde(int j) const {
  require(j >= 0 && j + 1 <= n, "delta ladder tilde: rung out of range");
  require(has_value[j] && has_value[j + 1],
          "delta ladder tilde: rung underflowed, use log10 fields");
  /* (1-dt)(1/2+d_j) = 1/2+d_{j+1}  =>  dt = (d_j-d_{j+1})/(1/2+d_j) */
  return (value[j] - value[j + 1]) / (BigFloat(0.5) + value[j]);
}

long double DeltaLadder::rung_as_long_double(int j) const {
  require(j >= 0 && j <= n, "delta ladder: rung out of range");
  return std::pow(10.0L, log10_delta[j]);
}

/* ---- thresholds and baselines ----------------------------------------- */

namespace {

/* prod_{i=k}^{n-2} 2i/(2i+1); singleton at k = n-2, never empty for
 * admissible k. */
Rat direction_product(int k, int n) {
  Rat prod(1);
  for (int i = k; i <= n - 2; ++i) prod *= Rat(2 * i, 2 * i + 1);
  return prod;
}

void require_admissible(int n, int k, const char* who) {
  require(n >= 4, std::string(who) + ": need n >= 4");
  require(k >= 2 && k <= n - 2, std::string(who) + ": need 2 <= k <= n-2");
}

}  // namespace

Rat p_broad(int n, int k) {
  require_admissible(n, k, "p_broad");
  Rat denom = Rat(4 * n - 5) + Rat(2 * (k - 1)) * direction_product(k, n);
  return Rat(2) + Rat(12) / denom;
}

Rat p_reduction(int n, int k) {
  require_admissible(n, k, "p_reduction");
  if (k <= 3) return Rat(2) + Rat(2, n - 2);
  return Rat(2) + Rat(4, 2 * n - k - 1);
}

Rat ow_baseline(int n) {
  require(n >= 3, "ow_baseline: need n >= 3");
  if (n == 3) return Rat(4);
  if (n % 2 == 1) return Rat(2 * (3 * n + 1), 3 * n - 3);
  return Rat(6 * n, 3 * n - 4);
}

OptimalK optimal_threshold(int n) {
  require(n >= 4, "optimal_threshold: need n >= 4");
  OptimalK best;
  best.n = n;
  best.baseline = ow_baseline(n);
  /* Suffix products over k keep the sweep linear in n. */
  Rat prod(1);
  bool have = false;
  Rat best_val;
  int best_k = 0;
  for (int k = n - 2; k >= 2; --k) {
    prod *= Rat(2 * k, 2 * k + 1);
    Rat pb = Rat(2) + Rat(12) / (Rat(4 * n - 5) + Rat(2 * (k - 1)) * prod);
    Rat pr = p_reduction(n, k);
    Rat val = pb > pr ? pb : pr;
    /* smallest k wins ties, so <= when scanning downward */
    if (!have || val <= best_val) {
      have = true;
      best_val = val;
      best_k = k;
    }
  }
  best.k_star = best_k;
  best.p_threshold = best_val;
  best.improved = best_val < best.baseline;
  return best;
}

ImprovementSweep improvement_sweep(int n_max) {
  require(n_max >= 4, "improvement_sweep: need n_max >= 4");
  ImprovementSweep sweep;
  sweep.n_max = n_max;
  sweep.rows.reserve(n_max - 3);
  for (int n = 4; n <= n_max; ++n) sweep.rows.push_back(optimal_threshold(n));
  int n0 = 0;
  for (int i = (int)sweep.rows.size() - 1; i >= 0; --i) {
    if (!sweep.rows[i].improved) break;
    n0 = sweep.rows[i].n;
  }
  sweep.n0 = n0;  // 0 means nothing improves up to n_max
  return sweep;
}

/* ---- asymptotic threshold optimizer ----------------------------------- */

ThresholdOptimum optimize_threshold() {
  /* root of 2u^3 + 3u^2 - 2 in (0,1); monotone increasing there */
  auto cubic = [](long double u) { return 2 * u * u * u + 3 * u * u - 2; };
  long double lo = 1e-6L, hi = 1.0L - 1e-6L;
  ThresholdOptimum opt;
  for (int i = 0; i < 200; ++i) {
    long double mid = 0.5L * (lo + hi);
    (cubic(mid) < 0 ? lo : hi) = mid;
    opt.iterations = i + 1;
  }
  opt.u = 0.5L * (lo + hi);
  opt.v = opt.u * opt.u;
  opt.lambda = 4.0L / (2.0L - opt.v);
  return opt;
}

/* ---- induction exponent ladder ---------------------------------------- */

Rat sigma_closed_form(int m, int j) {
  require(m >= 2 && j >= m, "sigma_closed_form: need j >= m >= 2");
  Rat pi(1);
  for (int i = m; i <= j; ++i) pi *= Rat(2 * i, 2 * i + 1);
  return Rat(1, 3) - Rat(m - 1) * pi / (Rat(3) * j);
}

CriticalLadder critical_ladder(int n, int m) {
  require(m >= 2, "critical_ladder: need m >= 2");
  require(n >= m + 2, "critical_ladder: need n >= m + 2");

  CriticalLadder L;
  L.n = n;
  L.m = m;
  const int len = n - m + 1;
  L.gamma.assign(len, Rat(0));
  L.sigma.assign(len, Rat(0));
  L.tau.assign(len - 1, Rat(0));
  L.p.assign(len, Rat(0));
  L.alpha.assign(len, Rat(0));
  L.beta.assign(len, Rat(0));

  /* gamma_j = (m-1)/2 * 1/(j(j-1)) * prod_{i=m}^{j} 2i/(2i+1), j <= n-2 */
  Rat pi(1);
  Rat sum(0);
  for (int j = m; j <= n - 2; ++j) {
    pi *= Rat(2 * j, 2 * j + 1);
    Rat g = Rat(m - 1, 2) * Rat(1) / (Rat(j) * Rat(j - 1)) * pi;
    L.gamma[j - m] = g;
    sum += g;
    L.sigma[j - m] = sum;
  }
  /* gamma_{n-1} spends half the remaining budget over the last ordinary
   * rung; gamma_n absorbs the rest so the weights sum to 1 */
  Rat g_last = (Rat(1, 2) - sum) / Rat(n - 1);
  L.gamma[n - 1 - m] = g_last;
  sum += g_last;
  L.sigma[n - 1 - m] = sum;
  L.gamma[n - m] = Rat(1) - sum;
  L.sigma[n - m] = Rat(1);

  /* tau mirrors sigma except the top rung is clipped to zero */
  for (int j = m; j <= n - 2; ++j) L.tau[j - m] = L.sigma[j - m];
  L.tau[n - 1 - m] = Rat(0);

  /* p_j from the closure (1/2)(1/2 - 1/p_{j+1})^{-1} = 1 + j(1 - sigma_j)
   * read downward: p_{j+1} determined by sigma_j, j = m-1..n-1, with
   * sigma_{m-1} = 0.  This single formula covers the displayed ladder and
   * its top rung at once. */
  for (int j = m - 1; j <= n - 1; ++j) {
    Rat sig = (j == m - 1) ? Rat(0) : L.sigma[j - m];
    Rat rhs = Rat(1) + Rat(j) * (Rat(1) - sig);  // = (1/2)(1/2-1/p_{j+1})^{-1}
    /* 1/2 - 1/p_{j+1} = 1/(2 rhs)  =>  p_{j+1} = 2 rhs/(rhs - 1) */
    L.p[j + 1 - m] = Rat(2) * rhs / (rhs - Rat(1));
  }

  const Rat& pn = L.p[n - m];
  for (int i = m; i <= n; ++i) {
    Rat wi = Rat(1, 2) - Rat(1) / L.p_at(i);
    if (i == n) {
      L.alpha[i - m] = Rat(1);
      L.beta[i - m] = Rat(1);
    } else {
      L.alpha[i - m] = (Rat(1, 2) - Rat(1) / L.p_at(i + 1)) / wi;
      L.beta[i - m] = (Rat(1, 2) - Rat(1) / pn) / wi;
    }
  }
  return L;
}

Rat CriticalLadder::X(int j) const {
  require(j >= m && j <= n - 1, "ladder X: need m <= j <= n-1");
  Rat w = Rat(1, 2) - Rat(1) / p_at(n);
  return (beta_at(j + 1) - beta_at(j)) / Rat(2) -
         (Rat(1) + tau_at(j)) / Rat(2) * w;
}

Rat CriticalLadder::Y(int j) const {
  require(j >= m - 1 && j <= n - 1, "ladder Y: need m-1 <= j <= n-1");
  Rat w = Rat(1, 2) - Rat(1) / p_at(n);
  Rat sig = (j == m - 1) ? Rat(0) : sigma_at(j);
  return beta_at(j + 1) / Rat(2) - (Rat(1) + Rat(j) * (Rat(1) - sig)) * w;
}

/* ---- scale/degree bookkeeping factor ----------------------------------- */

long double log_M_factor(const std::vector<long double>& r_vec,
                         const std::vector<long double>& d_vec,
                         const std::vector<long double>& beta,
                         long double delta, int m, int n) {
  require(n >= m + 1 && m >= 1, "M factor: need n > m >= 1");
  const size_t len = (size_t)(n - m + 1);
  require(r_vec.size() == len && d_vec.size() == len,
          "M factor: r/D vectors must cover indices m-1..n-1");
  require(beta.size() == len, "M factor: beta must cover indices m..n");
  for (size_t i = 0; i < len; ++i)
    require(r_vec[i] >= 1 && d_vec[i] >= 1, "M factor: entries must be >= 1");

  auto r_at = [&](int i) { return r_vec[(size_t)(i - (m - 1))]; };
  auto d_at = [&](int i) { return d_vec[(size_t)(i - (m - 1))]; };
  auto beta_at = [&](int i) { return beta[(size_t)(i - m)]; };

  long double lg = delta * std::log(d_at(m - 1));
  long double sum_log_d = 0;
  for (int i = m; i <= n - 1; ++i) sum_log_d += std::log(d_at(i));
  lg += (long double)(n - m) * delta * sum_log_d;
  for (int i = m; i <= n - 1; ++i) {
    lg += (beta_at(i + 1) - beta_at(i)) / 2 * std::log(r_at(i));
    lg += (beta_at(i + 1) - beta_at(m)) / 2 * std::log(d_at(i));
  }
  return lg;
}

long double M_factor(const std::vector<long double>& r_vec,
                     const std::vector<long double>& d_vec,
                     const std::vector<long double>& beta,
                     long double delta, int m, int n) {
  /* ordinary-product route; the log route is the cross-check oracle */
  const size_t len = (size_t)(n - m + 1);
  require(r_vec.size() == len && d_vec.size() == len && beta.size() == len,
          "M factor: vector lengths must match index ranges");
  auto r_at = [&](int i) { return r_vec[(size_t)(i - (m - 1))]; };
  auto d_at = [&](int i) { return d_vec[(size_t)(i - (m - 1))]; };
  auto beta_at = [&](int i) { return beta[(size_t)(i - m)]; };

  long double prod = std::pow(d_at(m - 1), delta);
  long double all_d = 1;
  for (int i = m; i <= n - 1; ++i) all_d *= d_at(i);
  prod *= std::pow(all_d, (long double)(n - m) * delta);
  for (int i = m; i <= n - 1; ++i) {
    prod *= std::pow(r_at(i), (beta_at(i + 1) - beta_at(i)) / 2);
    prod *= std::pow(d_at(i), (beta_at(i + 1) - beta_at(m)) / 2);
  }
  return prod;
}

}  // namespace conelab::exponents
