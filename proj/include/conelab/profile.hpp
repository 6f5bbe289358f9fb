#pragma once

#include <utility>
#include <vector>

#include "conelab/numerics.hpp"

namespace conelab::profile {

/* The standard compactly supported bump exp(-1/(1-t^2)) on (-1,1). */
double smooth_bump(double t);

/* Monotone C-infinity ramp: 0 for t <= 0, 1 for t >= 1, normalized
 * antiderivative of the standard bump in between. */
double smooth_step(double t);

/* 1 on [a, b], 0 outside [a - w, b + w], smooth ramps in between. */
double plateau(double t, double a, double b, double w);

/* Partition of unity on the circle into `count` equal angular blocks.
 * Each weight is a normalized bump centered on its block; weights sum to 1
 * at every angle and weight i is supported within (1 + 2*overlap_frac)
 * block widths of its center. */
class PeriodicPartition {
 public:
  PeriodicPartition(int count, double overlap_frac = 0.25);

  int count() const { return count_; }
  double block_width() const { return width_; }
  double center(int i) const;
  /* weight of block i at the given angle */
  double weight(int i, double angle) const;
  /* 1 on the support of weight(i, .), supported within support_factor
   * block half-widths of the center; used as the outer cutoff that fixes
   * the block weight. */
  double outer_cutoff(int i, double angle, double support_factor = 2.0) const;
  /* indices with nonzero weight at the angle */
  std::vector<int> active(double angle) const;

 private:
  int count_;
  double width_;
  double overlap_frac_;
};

/* Partition of unity on the line into blocks [i*block, (i+1)*block) shifted
 * by origin.  Same normalized-bump construction as PeriodicPartition. */
class LinePartition {
 public:
  LinePartition(double block, double overlap_frac = 0.25, double origin = 0);

  double block() const { return block_; }
  double center(long i) const;
  long index_of(double t) const;
  double weight(long i, double t) const;
  double outer_cutoff(long i, double t, double support_factor = 2.0) const;
  /* inclusive index range with nonzero weight at t */
  std::pair<long, long> active_range(double t) const;

 private:
  double block_;
  double overlap_frac_;
  double origin_;
};

}  // namespace conelab::profile
