#include "conelab/poly_partition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "conelab/numerics.hpp"
#include "conelab/reports.hpp"
#include "conelab/rng.hpp"

namespace conelab::partition {

/* ---- MassGrid ----------------------------------------------------------- */

namespace {
size_t flat_index(const MassGrid& g, int ix, int iy, int iz) {
  return (size_t)ix + (size_t)g.size * iy + (size_t)g.size * g.size * iz;
}
}  // namespace

double& MassGrid::at(int ix, int iy, int iz) {
  return mass[flat_index(*this, ix, iy, iz)];
}
double MassGrid::at(int ix, int iy, int iz) const {
  return mass[flat_index(*this, ix, iy, iz)];
}

Vec3 MassGrid::center(int ix, int iy, int iz) const {
  double x = -r + (ix + 0.5) * spacing;
  double y = -r + (iy + 0.5) * spacing;
  double z = n == 3 ? -r + (iz + 0.5) * spacing : 0.0;
  return {x, y, z};
}

bool MassGrid::in_domain(int, int, int) const { return true; }

double MassGrid::total() const {
  return std::accumulate(mass.begin(), mass.end(), 0.0);
}

size_t MassGrid::cell_count() const {
  size_t c = (size_t)size * size;
  if (n == 3) c *= size;
  return c;
}

MassGrid MassGrid::zeros(int n, double r, int size) {
  require(n == 2 || n == 3, "MassGrid: n must be 2 or 3");
  require(r > 0 && size >= 4, "MassGrid: bad geometry");
  MassGrid g;
  g.n = n;
  g.r = r;
  g.size = size;
  g.spacing = 2 * r / size;
  g.mass.assign((size_t)size * size * (n == 3 ? size : 1), 0.0);
  return g;
}

MassGrid MassGrid::uniform(int n, double r, int size) {
  MassGrid g = zeros(n, r, size);
  std::fill(g.mass.begin(), g.mass.end(), 1.0);
  return g;
}

MassGrid MassGrid::point_mass(int n, double r, int size, const Vec3& x) {
  MassGrid g = zeros(n, r, size);
  auto clampi = [&](double v) {
    int i = (int)std::floor((v + r) / g.spacing);
    return std::min(size - 1, std::max(0, i));
  };
  g.at(clampi(x[0]), clampi(x[1]), n == 3 ? clampi(x[2]) : 0) = 1.0;
  return g;
}

/* ---- equipartition ------------------------------------------------------ */

namespace {

std::vector<std::array<int, 3>> monomials(int n, int max_deg) {
  std::vector<std::array<int, 3>> out;
  for (int total = 0; total <= max_deg; ++total)
    for (int e1 = total; e1 >= 0; --e1)
      for (int e2 = total - e1; e2 >= 0; --e2) {
        int e3 = total - e1 - e2;
        if (n == 2 && e3 != 0) continue;
        out.push_back({e1, e2, e3});
      }
  return out;
}

int monomial_count(int n, int deg) { return (int)monomials(n, deg).size(); }

int round_degree(int n, int round_index) {
  long need = (1l << (round_index - 1)) + 1;
  int m = 1;
  while (monomial_count(n, m) < need) ++m;
  return m;
}

struct ActiveCells {
  std::vector<size_t> index;   // flat index into the grid
  std::vector<Vec3> pos;       // cell centers
  std::vector<double> m;       // masses
};

double feature(const Vec3& x, const std::array<int, 3>& e) {
  double v = 1;
  for (int q = 0; q < e[0]; ++q) v *= x[0];
  for (int q = 0; q < e[1]; ++q) v *= x[1];
  for (int q = 0; q < e[2]; ++q) v *= x[2];
  return v;
}

Polynomial from_coeffs(const std::vector<double>& c,
                       const std::vector<std::array<int, 3>>& basis) {
  double top = 0;
  for (double v : c) top = std::max(top, std::fabs(v));
  Polynomial p;
  for (size_t i = 0; i < c.size(); ++i) {
    if (std::fabs(c[i]) <= 1e-15 * top) continue;
    Polynomial::Term t;
    t.coef = c[i];
    t.exps = basis[i];
    p.terms.push_back(t);
  }
  if (p.terms.empty()) p = Polynomial::constant(0);
  return p;
}

/* odd 2^k-quantile positions of the mass marginal along one axis */
std::vector<double> quantile_cuts(const ActiveCells& cells, int axis, int k,
                                  double lo, double hi, double spacing) {
  std::vector<std::pair<double, double>> marg;
  {
    std::map<long, double> agg;
    for (size_t i = 0; i < cells.m.size(); ++i) {
      if (cells.m[i] <= 0) continue;
      long bin = (long)std::floor((cells.pos[i][axis] - lo) / spacing);
      agg[bin] += cells.m[i];
    }
    for (auto& [bin, mm] : agg)
      marg.emplace_back(lo + (bin + 0.5) * spacing, mm);
  }
  double total = 0;
  for (auto& [x, mm] : marg) total += mm;
  std::vector<double> cuts;
  long pieces = 1l << k;
  for (long j = 1; j < pieces; j += 2) {
    double target = total * (double)j / (double)pieces;
    double cum = 0, cut = hi;
    for (auto& [x, mm] : marg) {
      cum += mm;
      if (cum >= target) {
        cut = x + spacing / 2;  // cell edge just past the quantile
        break;
      }
    }
    cuts.push_back(cut);
  }
  return cuts;
}

}  // namespace

PartitionPolynomial equipartition(const MassGrid& mass, int d,
                                  const EquipartitionParams& par) {
  require(d == 2 || d == 4 || d == 8, "equipartition: d must be 2, 4, or 8");
  require(mass.n == 2 || mass.n == 3, "equipartition: n must be 2 or 3");
  double total = mass.total();
  require(total > 0, "equipartition: total mass must be positive");
  for (double v : mass.mass)
    require(v >= 0, "equipartition: mass must be nonnegative");

  const int n = mass.n;
  const int s = (int)std::floor(n * std::log2((double)d) + 0.5);
  CounterRng rng(par.seed, 0x70617274ull);

  ActiveCells cells;
  {
    int zmax = n == 3 ? mass.size : 1;
    for (int iz = 0; iz < zmax; ++iz)
      for (int iy = 0; iy < mass.size; ++iy)
        for (int ix = 0; ix < mass.size; ++ix) {
          double mm = mass.at(ix, iy, iz);
          if (mm <= 0) continue;
          cells.index.push_back(flat_index(mass, ix, iy, iz));
          cells.pos.push_back(mass.center(ix, iy, iz));
          cells.m.push_back(mm);
        }
  }

  PartitionPolynomial out;
  out.d_parameter = d;
  std::vector<int> piece(cells.m.size(), 0);
  std::vector<int> axis_cuts(3, 0);
  const double target_imb =
      (std::pow(par.ratio_bound, 1.0 / s) - 1) /
      (std::pow(par.ratio_bound, 1.0 / s) + 1);

  for (int round = 1; round <= s; ++round) {
    const int deg = round_degree(n, round);
    const auto basis = monomials(n, deg);
    const int nb = (int)basis.size();
    const int npieces = 1 << (round - 1);

    /* per-cell features and per-piece mass */
    std::vector<double> feat((size_t)cells.m.size() * nb);
    for (size_t i = 0; i < cells.m.size(); ++i)
      for (int b = 0; b < nb; ++b)
        feat[i * nb + b] = feature(cells.pos[i], basis[b]);
    std::vector<double> piece_mass(npieces, 0.0);
    for (size_t i = 0; i < cells.m.size(); ++i)
      piece_mass[piece[i]] += cells.m[i];

    long evals = 0;
    auto signed_rel = [&](const std::vector<double>& c,
                          std::vector<double>& rel) {
      ++evals;
      std::vector<double> signedm(npieces, 0.0);
      for (size_t i = 0; i < cells.m.size(); ++i) {
        double q = 0;
        const double* f = &feat[i * nb];
        for (int b = 0; b < nb; ++b) q += c[b] * f[b];
        signedm[piece[i]] += q >= 0 ? cells.m[i] : -cells.m[i];
      }
      rel.assign(npieces, 0.0);
      double worst = 0;
      for (int j = 0; j < npieces; ++j) {
        rel[j] = piece_mass[j] > 0 ? signedm[j] / piece_mass[j] : 1.0;
        worst = std::max(worst, std::fabs(rel[j]));
      }
      return worst;
    };

    /* initial candidate: product of quantile hyperplanes along the least-
     * cut axis, which is exact for symmetric masses */
    int axis = 0;
    for (int a = 1; a < n; ++a)
      if (axis_cuts[a] < axis_cuts[axis]) axis = a;
    std::vector<double> best_c(nb, 0.0);
    {
      auto cuts = quantile_cuts(cells, axis, axis_cuts[axis] + 1, -mass.r,
                                mass.r, mass.spacing);
      Polynomial prod = Polynomial::constant(1);
      for (double cut : cuts) {
        Vec3 normal{0, 0, 0};
        normal[axis] = 1;
        prod = prod.multiply(Polynomial::affine3(normal, cut));
      }
      for (const auto& t : prod.terms)
        for (int b = 0; b < nb; ++b)
          if (basis[b] == t.exps) best_c[b] += t.coef;
    }
    std::vector<double> rel;
    double best_obj = signed_rel(best_c, rel);

    /* random candidates as fallback seeds */
    for (int t = 0; t < 3 && best_obj > target_imb; ++t) {
      std::vector<double> c(nb);
      for (int b = 0; b < nb; ++b) c[b] = rng.normal();
      std::vector<double> r2;
      double obj = signed_rel(c, r2);
      if (obj < best_obj) {
        best_obj = obj;
        best_c = c;
      }
    }

    /* random-direction descent with 1-D bisection on the worst piece */
    while (best_obj > target_imb && evals < par.budget_per_round) {
      int worst_piece = 0;
      for (int j = 1; j < npieces; ++j)
        if (std::fabs(rel[j]) > std::fabs(rel[worst_piece])) worst_piece = j;

      bool moved = false;
      for (int attempt = 0; attempt < 8 && !moved; ++attempt) {
        std::vector<double> dir(nb, 0.0);
        if (attempt == 0) {
          dir[0] = 1;  // constant shift first
        } else {
          for (int b = 0; b < nb; ++b) dir[b] = rng.normal();
        }
        auto h = [&](double alpha) {
          ++evals;
          double sm = 0;
          for (size_t i = 0; i < cells.m.size(); ++i) {
            if (piece[i] != worst_piece) continue;
            double q = 0;
            const double* f = &feat[i * nb];
            for (int b = 0; b < nb; ++b)
              q += (best_c[b] + alpha * dir[b]) * f[b];
            sm += q >= 0 ? cells.m[i] : -cells.m[i];
          }
          return sm;
        };
        double h0 = h(0);
        if (h0 == 0) break;
        double norm_c = 0;
        for (double v : best_c) norm_c += v * v;
        double span = 0.5 * std::sqrt(norm_c) + 0.1;
        double a0 = 0, a1 = 0;
        bool bracket = false;
        for (int grow = 0; grow < 6 && !bracket; ++grow) {
          for (double sgn : {1.0, -1.0}) {
            double a = sgn * span * (1 << grow);
            if (h(a) * h0 < 0) {
              a0 = 0;
              a1 = a;
              bracket = true;
              break;
            }
          }
        }
        if (!bracket) continue;
        for (int it = 0; it < 30; ++it) {
          double mid = (a0 + a1) / 2;
          if (h(mid) * h0 >= 0)
            a0 = mid;
          else
            a1 = mid;
        }
        std::vector<double> cand = best_c;
        for (int b = 0; b < nb; ++b) cand[b] += ((a0 + a1) / 2) * dir[b];
        std::vector<double> rel2;
        double obj = signed_rel(cand, rel2);
        if (obj < best_obj - 1e-12) {
          best_obj = obj;
          best_c = cand;
          rel = rel2;
          moved = true;
        }
      }
      if (!moved) break;
    }

    out.evaluations += evals;
    out.worst_imbalance = std::max(out.worst_imbalance, best_obj);
    axis_cuts[axis] += 1;

    Polynomial Q = from_coeffs(best_c, basis);
    out.rounds.push_back(Q);
    for (size_t i = 0; i < cells.m.size(); ++i) {
      double q = 0;
      const double* f = &feat[i * nb];
      for (int b = 0; b < nb; ++b) q += best_c[b] * f[b];
      piece[i] = piece[i] * 2 + (q >= 0 ? 1 : 0);
    }
  }

  /* final sign-class masses */
  std::vector<double> class_mass((size_t)1 << s, 0.0);
  for (size_t i = 0; i < cells.m.size(); ++i) class_mass[piece[i]] += cells.m[i];
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (double v : class_mass) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  out.achieved_ratio =
      lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
  out.failure = !(out.achieved_ratio <= par.ratio_bound);

  Polynomial prod = Polynomial::constant(1);
  for (const auto& q : out.rounds) prod = prod.multiply(q);
  /* random perturbation for non-singularity */
  double top = 0;
  for (const auto& t : prod.terms) top = std::max(top, std::fabs(t.coef));
  for (auto& t : prod.terms)
    t.coef += par.perturb * top * rng.uniform(-1, 1);
  out.poly = prod;
  out.degree = prod.degree();

  /* gradient sampling on sign-change edges */
  out.nonsingular_ok = true;
  {
    int checked = 0;
    int zmax = n == 3 ? mass.size : 1;
    double prev = 0;
    bool have_prev = false;
    for (int iz = 0; iz < zmax && checked < 500; ++iz)
      for (int iy = 0; iy < mass.size && checked < 500; ++iy) {
        have_prev = false;
        for (int ix = 0; ix < mass.size && checked < 500; ++ix) {
          Vec3 x = mass.center(ix, iy, iz);
          double v = out.poly.eval(x);
          if (have_prev && prev * v < 0) {
            ++checked;
            if (geometry::norm(out.poly.grad(x)) < 1e-12 * (top + 1))
              out.nonsingular_ok = false;
          }
          prev = v;
          have_prev = true;
        }
      }
  }
  return out;
}

/* ---- cell decomposition ------------------------------------------------- */

int CellDecomposition::label_at(int ix, int iy, int iz) const {
  return labels[(size_t)ix + (size_t)size * iy + (size_t)size * size * iz];
}

CellDecomposition cells(const Polynomial& P, double w, double r, int n,
                        int size) {
  require(n == 2 || n == 3, "cells: n must be 2 or 3");
  require(size >= 4, "cells: grid too small");
  CellDecomposition cd;
  cd.n = n;
  cd.r = r;
  cd.size = size;
  cd.spacing = 2 * r / size;
  require(w >= cd.spacing, "cells: wall width below grid resolution");
  cd.w = w;
  int zmax = n == 3 ? size : 1;
  size_t count = (size_t)size * size * zmax;
  cd.labels.assign(count, -1);

  auto center = [&](int ix, int iy, int iz) {
    return Vec3{-r + (ix + 0.5) * cd.spacing, -r + (iy + 0.5) * cd.spacing,
                n == 3 ? -r + (iz + 0.5) * cd.spacing : 0.0};
  };
  auto flat = [&](int ix, int iy, int iz) {
    return (size_t)ix + (size_t)size * iy + (size_t)size * size * iz;
  };

  std::vector<double> val(count);
  double vmax = 0;
  for (int iz = 0; iz < zmax; ++iz)
    for (int iy = 0; iy < size; ++iy)
      for (int ix = 0; ix < size; ++ix) {
        double v = P.eval(center(ix, iy, iz));
        val[flat(ix, iy, iz)] = v;
        vmax = std::max(vmax, std::fabs(v));
      }
  if (vmax == 0) {
    cd.zero_polynomial = true;
    return cd;
  }

  /* zero samples on sign-changing edges, refined by bisection */
  auto refine = [&](Vec3 a, Vec3 b) {
    double va = P.eval(a);
    for (int it = 0; it < 20; ++it) {
      Vec3 mid{(a[0] + b[0]) / 2, (a[1] + b[1]) / 2, (a[2] + b[2]) / 2};
      double vm = P.eval(mid);
      if (vm == 0) return mid;
      if (va * vm < 0)
        b = mid;
      else {
        a = mid;
        va = vm;
      }
    }
    return Vec3{(a[0] + b[0]) / 2, (a[1] + b[1]) / 2, (a[2] + b[2]) / 2};
  };
  for (int iz = 0; iz < zmax; ++iz)
    for (int iy = 0; iy < size; ++iy)
      for (int ix = 0; ix < size; ++ix) {
        double v0 = val[flat(ix, iy, iz)];
        if (ix + 1 < size) {
          double v1 = val[flat(ix + 1, iy, iz)];
          if (v0 == 0 || v0 * v1 < 0)
            cd.zero_samples.push_back(
                refine(center(ix, iy, iz), center(ix + 1, iy, iz)));
        }
        if (iy + 1 < size) {
          double v1 = val[flat(ix, iy + 1, iz)];
          if (v0 * v1 < 0)
            cd.zero_samples.push_back(
                refine(center(ix, iy, iz), center(ix, iy + 1, iz)));
        }
        if (n == 3 && iz + 1 < size) {
          double v1 = val[flat(ix, iy, iz + 1)];
          if (v0 * v1 < 0)
            cd.zero_samples.push_back(
                refine(center(ix, iy, iz), center(ix, iy, iz + 1)));
        }
      }

  /* spatial buckets of side w for wall tests */
  std::map<std::array<long, 3>, std::vector<int>> buckets;
  for (size_t i = 0; i < cd.zero_samples.size(); ++i) {
    const Vec3& z = cd.zero_samples[i];
    buckets[{(long)std::floor(z[0] / w), (long)std::floor(z[1] / w),
             (long)std::floor(z[2] / w)}]
        .push_back((int)i);
  }
  auto near_zero = [&](const Vec3& x) {
    std::array<long, 3> base{(long)std::floor(x[0] / w),
                             (long)std::floor(x[1] / w),
                             (long)std::floor(x[2] / w)};
    for (long a = -1; a <= 1; ++a)
      for (long b = -1; b <= 1; ++b)
        for (long c = -1; c <= 1; ++c) {
          auto it = buckets.find({base[0] + a, base[1] + b, base[2] + c});
          if (it == buckets.end()) continue;
          for (int i : it->second) {
            const Vec3& z = cd.zero_samples[i];
            if (geometry::norm(geometry::sub(x, z)) <= w) return true;
          }
        }
    return false;
  };

  std::vector<char> open(count, 0);
  for (int iz = 0; iz < zmax; ++iz)
    for (int iy = 0; iy < size; ++iy)
      for (int ix = 0; ix < size; ++ix)
        if (!near_zero(center(ix, iy, iz))) open[flat(ix, iy, iz)] = 1;

  /* deterministic BFS labeling, face adjacency */
  int next_label = 0;
  std::vector<size_t> queue;
  for (int iz = 0; iz < zmax; ++iz)
    for (int iy = 0; iy < size; ++iy)
      for (int ix = 0; ix < size; ++ix) {
        size_t start = flat(ix, iy, iz);
        if (!open[start] || cd.labels[start] >= 0) continue;
        int lab = next_label++;
        queue.clear();
        queue.push_back(start);
        cd.labels[start] = lab;
        while (!queue.empty()) {
          size_t cur = queue.back();
          queue.pop_back();
          int cz = (int)(cur / ((size_t)size * size));
          int cy = (int)((cur / size) % size);
          int cx = (int)(cur % size);
          const int dx[6] = {1, -1, 0, 0, 0, 0};
          const int dy[6] = {0, 0, 1, -1, 0, 0};
          const int dzs[6] = {0, 0, 0, 0, 1, -1};
          int nd = n == 3 ? 6 : 4;
          for (int q = 0; q < nd; ++q) {
            int nx = cx + dx[q], ny = cy + dy[q], nz = cz + dzs[q];
            if (nx < 0 || nx >= size || ny < 0 || ny >= size || nz < 0 ||
                nz >= zmax)
              continue;
            size_t ni = flat(nx, ny, nz);
            if (!open[ni] || cd.labels[ni] >= 0) continue;
            cd.labels[ni] = lab;
            queue.push_back(ni);
          }
        }
      }
  cd.cell_count = next_label;
  return cd;
}

CellMasses cell_masses(const CellDecomposition& cd, const MassGrid& mass) {
  require(cd.n == mass.n && cd.size == mass.size &&
              std::fabs(cd.r - mass.r) < 1e-12,
          "cell_masses: geometry mismatch");
  CellMasses cm;
  cm.cell_mass.assign(cd.cell_count, 0.0);
  int zmax = cd.n == 3 ? cd.size : 1;
  for (int iz = 0; iz < zmax; ++iz)
    for (int iy = 0; iy < cd.size; ++iy)
      for (int ix = 0; ix < cd.size; ++ix) {
        double mm = mass.at(ix, iy, iz);
        if (mm == 0) continue;
        int lab = cd.label_at(ix, iy, iz);
        cm.total += mm;
        if (lab >= 0)
          cm.cell_mass[lab] += mm;
        else if (lab == -1)
          cm.wall_mass += mm;
        else
          cm.outside_mass += mm;
      }
  return cm;
}

/* ---- exact incidence counting ------------------------------------------- */

namespace {

using RatPoly = std::vector<Rat>;  // coefficients low to high

void trim(RatPoly& p) {
  while (!p.empty() && p.back() == 0) p.pop_back();
}

RatPoly derivative(const RatPoly& p) {
  RatPoly d;
  for (size_t i = 1; i < p.size(); ++i) d.push_back(p[i] * (long)i);
  trim(d);
  return d;
}

/* remainder of a by b, b nonzero */
RatPoly remainder(RatPoly a, const RatPoly& b) {
  trim(a);
  while (a.size() >= b.size() && !a.empty()) {
    Rat q = a.back() / b.back();
    size_t shift = a.size() - b.size();
    for (size_t i = 0; i < b.size(); ++i) a[shift + i] -= q * b[i];
    trim(a);
  }
  return a;
}

Rat eval_rat(const RatPoly& p, const Rat& t) {
  Rat v = 0;
  for (size_t i = p.size(); i-- > 0;) v = v * t + p[i];
  return v;
}

int sign_of(const Rat& v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); }

int sign_variations(const std::vector<RatPoly>& seq, const Rat& t) {
  int last = 0, vars = 0;
  for (const auto& p : seq) {
    int s = sign_of(eval_rat(p, t));
    if (s == 0) continue;
    if (last != 0 && s != last) ++vars;
    last = s;
  }
  return vars;
}

/* distinct real roots of p in (0, 1] via a Sturm sequence */
int sturm_roots_01(RatPoly p) {
  trim(p);
  if (p.empty()) return 0;
  /* strip roots at t = 0 */
  size_t lead_zero = 0;
  while (lead_zero < p.size() && p[lead_zero] == 0) ++lead_zero;
  p.erase(p.begin(), p.begin() + lead_zero);
  if (p.size() <= 1) return 0;
  std::vector<RatPoly> seq{p, derivative(p)};
  while (!seq.back().empty() && seq.back().size() > 1) {
    RatPoly r = remainder(seq[seq.size() - 2], seq.back());
    for (auto& c : r) c = -c;
    trim(r);
    if (r.empty()) break;
    seq.push_back(r);
  }
  return sign_variations(seq, Rat(0)) - sign_variations(seq, Rat(1));
}

}  // namespace

IncidenceReport tube_cell_incidence(const Vec3& p0, const Vec3& p1,
                                    const CellDecomposition& cd,
                                    const Polynomial& P) {
  IncidenceReport rep;
  std::array<Rat, 3> base{Rat(p0[0]), Rat(p0[1]), Rat(p0[2])};
  std::array<Rat, 3> dir{Rat(p1[0] - p0[0]), Rat(p1[1] - p0[1]),
                         Rat(p1[2] - p0[2])};
  RatPoly restricted = P.restrict_line_exact(base, dir);
  trim(restricted);
  if (restricted.empty()) {
    rep.restriction_zero = true;
    rep.certified = 0;
  } else {
    rep.sturm_roots = sturm_roots_01(restricted);
    rep.certified = rep.sturm_roots + 1;
  }

  /* observed: walk grid labels along the segment */
  int steps = std::max(1000, 4 * cd.size);
  int last_label = -10;
  std::vector<char> seen(std::max(1, cd.cell_count), 0);
  int distinct = 0;
  for (int q = 0; q <= steps; ++q) {
    double t = (double)q / steps;
    Vec3 x{p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1]),
           p0[2] + t * (p1[2] - p0[2])};
    int ix = (int)std::floor((x[0] + cd.r) / cd.spacing);
    int iy = (int)std::floor((x[1] + cd.r) / cd.spacing);
    int iz = cd.n == 3 ? (int)std::floor((x[2] + cd.r) / cd.spacing) : 0;
    if (ix < 0 || ix >= cd.size || iy < 0 || iy >= cd.size || iz < 0 ||
        (cd.n == 3 && iz >= cd.size))
      continue;
    if (cd.n == 2) iz = 0;
    int lab = cd.label_at(ix, iy, iz);
    if (lab >= 0 && lab != last_label && !seen[lab]) {
      seen[lab] = 1;
      ++distinct;
    }
    last_label = lab;
  }
  rep.observed = distinct;
  return rep;
}

/* ---- cellular/algebraic dichotomy --------------------------------------- */

PartitionCaseResult partition_case(const MassGrid& mass, int d,
                                   const Variety& Z, double w,
                                   const EquipartitionParams& par,
                                   double band_C) {
  PartitionCaseResult res;
  res.total = mass.total();
  require(res.total > 0, "partition_case: zero mass");
  require(Z.kind == Variety::Kind::Affine,
          "partition_case: affine varieties only");

  res.P = equipartition(mass, d, par);
  res.cd = cells(res.P.poly, w, mass.r, mass.n, mass.size);
  CellMasses cm = cell_masses(res.cd, mass);

  int m = Z.dim;
  double dm = std::pow((double)d, m);
  res.band_lo = 1.0 / (band_C * dm);
  res.band_hi = band_C / dm;
  res.band_ok = true;
  double cellular = 0;
  for (int lab = 0; lab < res.cd.cell_count; ++lab) {
    double frac = cm.cell_mass[lab] / res.total;
    if (frac >= res.band_lo) {
      res.kept_cells.push_back(lab);
      cellular += cm.cell_mass[lab];
      if (frac > res.band_hi) res.band_ok = false;
    }
  }
  res.cellular_mass = cellular;
  res.wall_mass = res.total - cellular;
  res.kind = cellular >= res.total / 2 ? PartitionCaseResult::Kind::Cellular
                                       : PartitionCaseResult::Kind::Algebraic;

  if (res.kind == PartitionCaseResult::Kind::Algebraic && Z.dim >= 1) {
    /* invented plumbing: best mass-capturing affine hyperplane within Z */
    res.y_flagged = true;
    double best_mass = -1;
    int zmax = mass.n == 3 ? mass.size : 1;
    const int dirs = Z.dim >= 2 ? 18 : 1;
    for (int di = 0; di < dirs; ++di) {
      /* in-plane unit direction of the candidate hyperplane */
      Vec3 u;
      std::vector<Vec3> ybasis;
      if (Z.dim == 1) {
        u = Z.basis[0];
        ybasis = {};
      } else {
        double phi = kPi * di / dirs;
        Vec3 a = Z.basis[0], b = Z.basis[1];
        u = geometry::add(geometry::scale(a, std::cos(phi)),
                          geometry::scale(b, std::sin(phi)));
        ybasis = {u};
        if (Z.dim == 3) {
          /* hyperplanes of the full space are 2-planes: second direction
           * orthogonal to u inside Z */
          Vec3 v = geometry::sub(b, geometry::scale(u, geometry::dot(b, u)));
          if (geometry::norm(v) < 1e-9)
            v = geometry::sub(a, geometry::scale(u, geometry::dot(a, u)));
          ybasis.push_back(geometry::normalized(v));
        }
      }
      /* offset along the in-Z normal of u maximizing captured mass */
      Vec3 perp{0, 0, 0};
      if (Z.dim >= 2) {
        Vec3 a = Z.basis[0], b = Z.basis[1];
        perp = geometry::sub(
            b, geometry::scale(u, geometry::dot(b, u)));
        if (geometry::norm(perp) < 1e-9)
          perp = geometry::sub(a, geometry::scale(u, geometry::dot(a, u)));
        perp = geometry::normalized(perp);
      } else {
        perp = Z.basis[0];
      }
      std::vector<std::pair<double, double>> proj;  // coord along perp, mass
      for (int iz = 0; iz < zmax; ++iz)
        for (int iy = 0; iy < mass.size; ++iy)
          for (int ix = 0; ix < mass.size; ++ix) {
            double mm = mass.at(ix, iy, iz);
            if (mm <= 0) continue;
            Vec3 x = mass.center(ix, iy, iz);
            proj.emplace_back(
                geometry::dot(geometry::sub(x, Z.base), perp), mm);
          }
      std::sort(proj.begin(), proj.end());
      /* sliding window of width 2w */
      size_t lo = 0;
      double window = 0;
      for (size_t hi2 = 0; hi2 < proj.size(); ++hi2) {
        window += proj[hi2].second;
        while (proj[hi2].first - proj[lo].first > 2 * w)
          window -= proj[lo++].second;
        if (window > best_mass) {
          best_mass = window;
          double mid = proj[hi2].first - w;
          Vec3 ybase = geometry::add(Z.base, geometry::scale(perp, mid));
          res.Y = Variety::affine_subspace(ybase, ybasis);
        }
      }
    }
    res.y_mass_fraction = best_mass > 0 ? best_mass / res.total : 0;
  }
  return res;
}

std::string partition_report_text(const PartitionCaseResult& res) {
  std::ostringstream out;
  out << "[partition-case]\n";
  out << "kind="
      << (res.kind == PartitionCaseResult::Kind::Cellular ? "cellular"
                                                          : "algebraic")
      << "\n";
  out << "d=" << res.P.d_parameter << "\n";
  out << "degree=" << res.P.degree << "\n";
  out << "search_failure=" << (res.P.failure ? 1 : 0) << "\n";
  out << "achieved_ratio=" << reports::format_double(res.P.achieved_ratio)
      << "\n";
  out << "cells=" << res.cd.cell_count << "\n";
  out << "kept_cells=" << res.kept_cells.size() << "\n";
  out << "total=" << reports::format_double(res.total) << "\n";
  out << "cellular_mass=" << reports::format_double(res.cellular_mass) << "\n";
  out << "wall_mass=" << reports::format_double(res.wall_mass) << "\n";
  out << "band_ok=" << (res.band_ok ? 1 : 0) << "\n";
  if (res.y_flagged) {
    out << "y_invented=1\n";
    out << "y_mass_fraction=" << reports::format_double(res.y_mass_fraction)
        << "\n";
  }
  return out.str();
}

}  // namespace conelab::partition
