#include "conelab/profile.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace conelab::profile {

double smooth_bump(double t) {
  if (std::fabs(t) >= 1) return 0;
  return std::exp(-1.0 / (1.0 - t * t));
}

namespace {
const std::vector<double>& step_table() {
  static const std::vector<double> table = [] {
    const int n = 16384;
    std::vector<double> cum(n + 1, 0.0);
    double prev = smooth_bump(-1.0);
    for (int i = 1; i <= n; ++i) {
      double t = -1.0 + 2.0 * i / n;
      double cur = smooth_bump(t);
      cum[i] = cum[i - 1] + 0.5 * (prev + cur);
      prev = cur;
    }
    for (int i = 0; i <= n; ++i) cum[i] /= cum[n];
    return cum;
  }();
  return table;
}
}  // namespace

double smooth_step(double t) {
  if (t <= 0) return 0;
  if (t >= 1) return 1;
  const auto& tab = step_table();
  double pos = t * (tab.size() - 1);
  size_t i = (size_t)pos;
  if (i + 1 >= tab.size()) return tab.back();
  double frac = pos - i;
  return tab[i] * (1 - frac) + tab[i + 1] * frac;
}

double plateau(double t, double a, double b, double w) {
  require(w > 0, "plateau: need positive ramp width");
  require(a <= b, "plateau: need a <= b");
  if (t <= a - w || t >= b + w) return 0;
  if (t >= a && t <= b) return 1;
  if (t < a) return smooth_step((t - (a - w)) / w);
  return smooth_step(((b + w) - t) / w);
}

/* ---- periodic partition ------------------------------------------------- */

namespace {
double circ_diff(double a, double b) {
  double d = std::fmod(a - b, 2 * kPi);
  if (d > kPi) d -= 2 * kPi;
  if (d < -kPi) d += 2 * kPi;
  return d;
}
}  // namespace

PeriodicPartition::PeriodicPartition(int count, double overlap_frac)
    : count_(count), overlap_frac_(overlap_frac) {
  require(count >= 3, "PeriodicPartition: need at least 3 blocks");
  require(overlap_frac > 0 && overlap_frac < 0.5,
          "PeriodicPartition: overlap_frac must lie in (0, 1/2)");
  width_ = 2 * kPi / count;
}

double PeriodicPartition::center(int i) const {
  return (i + 0.5) * width_;
}

double PeriodicPartition::weight(int i, double angle) const {
  require(i >= 0 && i < count_, "PeriodicPartition: block index out of range");
  const double s = width_ * (0.5 + overlap_frac_);
  double mine = smooth_bump(circ_diff(angle, center(i)) / s);
  if (mine == 0) return 0;
  double total = 0;
  for (int j : active(angle))
    total += smooth_bump(circ_diff(angle, center(j)) / s);
  return mine / total;
}

double PeriodicPartition::outer_cutoff(int i, double angle,
                                       double support_factor) const {
  require(support_factor > 1, "outer_cutoff: support_factor must exceed 1");
  const double s = width_ * (0.5 + overlap_frac_);
  double d = std::fabs(circ_diff(angle, center(i)));
  return plateau(d, 0, s, s * (support_factor - 1));
}

std::vector<int> PeriodicPartition::active(double angle) const {
  const double s = width_ * (0.5 + overlap_frac_);
  int k0 = (int)std::floor(angle / width_);
  std::vector<int> out;
  for (int k = k0 - 1; k <= k0 + 1; ++k) {
    int i = ((k % count_) + count_) % count_;
    if (std::fabs(circ_diff(angle, center(i))) < s &&
        std::find(out.begin(), out.end(), i) == out.end())
      out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/* ---- line partition ------------------------------------------------------ */

LinePartition::LinePartition(double block, double overlap_frac, double origin)
    : block_(block), overlap_frac_(overlap_frac), origin_(origin) {
  require(block > 0, "LinePartition: need positive block size");
  require(overlap_frac > 0 && overlap_frac < 0.5,
          "LinePartition: overlap_frac must lie in (0, 1/2)");
}

double LinePartition::center(long i) const {
  return origin_ + (i + 0.5) * block_;
}

long LinePartition::index_of(double t) const {
  return (long)std::floor((t - origin_) / block_);
}

double LinePartition::weight(long i, double t) const {
  const double s = block_ * (0.5 + overlap_frac_);
  double mine = smooth_bump((t - center(i)) / s);
  if (mine == 0) return 0;
  double total = 0;
  auto [lo, hi] = active_range(t);
  for (long j = lo; j <= hi; ++j)
    total += smooth_bump((t - center(j)) / s);
  return mine / total;
}

double LinePartition::outer_cutoff(long i, double t,
                                   double support_factor) const {
  require(support_factor > 1, "outer_cutoff: support_factor must exceed 1");
  const double s = block_ * (0.5 + overlap_frac_);
  double d = std::fabs(t - center(i));
  return plateau(d, 0, s, s * (support_factor - 1));
}

std::pair<long, long> LinePartition::active_range(double t) const {
  const double s = block_ * (0.5 + overlap_frac_);
  long k0 = index_of(t);
  long lo = k0 + 1, hi = k0 - 1;
  for (long k = k0 - 1; k <= k0 + 1; ++k) {
    if (std::fabs(t - center(k)) < s) {
      lo = std::min(lo, k);
      hi = std::max(hi, k);
    }
  }
  if (lo > hi) {  // can only happen from rounding exactly at a block center
    lo = hi = k0;
  }
  return {lo, hi};
}

}  // namespace conelab::profile
