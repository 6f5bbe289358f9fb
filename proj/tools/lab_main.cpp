/* conelab: command-line laboratory tying the exponent tables, extension
 * field, wave packets, broad norms, partitioning, tube counting, and the
 * structure driver into reproducible experiments.
 *
 * Exit codes: 0 = all checks pass, 1 = some check failed, 2 = usage or
 * contract/resource error.  Reports are byte-identical for identical
 * (config, seed): no timestamps, sorted JSON keys, shortest round-trip
 * doubles. */

#include <CLI11.hpp>
#include <json.hpp>

#include <complex>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "conelab/broad_norm.hpp"
#include "conelab/cone_geometry.hpp"
#include "conelab/exponents.hpp"
#include "conelab/extension_field.hpp"
#include "conelab/freq_grid.hpp"
#include "conelab/incidence_lab.hpp"
#include "conelab/numerics.hpp"
#include "conelab/poly_partition.hpp"
#include "conelab/reports.hpp"
#include "conelab/rng.hpp"
#include "conelab/structure_driver.hpp"
#include "conelab/wave_packets.hpp"

namespace {

using conelab::CounterRng;
using conelab::Rat;
using conelab::kPi;
namespace reports = conelab::reports;
namespace geometry = conelab::geometry;
namespace freq = conelab::freq;
namespace ext = conelab::ext;
namespace packets = conelab::packets;
namespace broad = conelab::broad;
namespace partition = conelab::partition;
namespace incidence = conelab::incidence;
namespace driver = conelab::driver;
namespace exponents = conelab::exponents;

std::string fmt(double x) { return reports::format_double(x); }

std::string rat_str(const Rat& q) {
  std::ostringstream os;
  os << q;
  return os.str();
}

/* ---- config overlay: JSON file values fill options not set on the CLI -- */
struct ConfigOverlay {
  nlohmann::json j;
  bool loaded = false;

  void load(const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    conelab::require(in.good(), "config file not readable: " + path);
    in >> j;
    conelab::require(j.is_object(), "config file must hold a JSON object");
    loaded = true;
  }
  template <class T>
  void get(const CLI::Option* opt, const std::string& key, T& var) const {
    if (!loaded) return;
    if (opt != nullptr && opt->count() > 0) return; /* flags win */
    if (j.contains(key)) var = j.at(key).get<T>();
  }
};

/* ---- uniform check/report bundle ---------------------------------------- */
struct Bundle {
  std::string tool;
  std::string out_dir;
  reports::CsvWriter checks{{"claim", "context", "measured", "bound",
                             "verdict"}};
  reports::JsonSummary summary;
  std::ostringstream log;
  int n_checks = 0, n_failed = 0;
  bool quiet_checks = false;

  explicit Bundle(const std::string& t) : tool(t), summary("conelab-" + t) {}

  bool check(const std::string& claim, const std::string& context,
             double measured, const std::string& bound, bool ok) {
    ++n_checks;
    if (!ok) ++n_failed;
    checks.row({claim, context, fmt(measured), bound, ok ? "pass" : "FAIL"});
    std::ostringstream line;
    line << "check " << claim << (context.empty() ? "" : " [" + context + "]")
         << " measured=" << fmt(measured) << " bound=" << bound
         << " verdict=" << (ok ? "pass" : "FAIL");
    log << line.str() << "\n";
    if (!quiet_checks) std::cout << line.str() << "\n";
    return ok;
  }

  int finish(const reports::CsvWriter* data = nullptr) {
    summary.data()["checks_total"] = n_checks;
    summary.data()["checks_failed"] = n_failed;
    if (!out_dir.empty()) {
      std::filesystem::create_directories(out_dir);
      auto p = [&](const std::string& name) {
        return (std::filesystem::path(out_dir) / (tool + name)).string();
      };
      checks.save(p("_checks.csv"));
      if (data != nullptr) data->save(p("_data.csv"));
      summary.save(p("_summary.json"));
      reports::write_text_file(p(".log"), log.str());
    }
    std::cout << tool << ": " << (n_checks - n_failed) << "/" << n_checks
              << " checks passed\n";
    return n_failed == 0 ? 0 : 1;
  }
};

freq::AnnulusFunction random_f(double h, CounterRng rng) {
  return freq::AnnulusFunction::random_smooth(freq::GridSpec::standard(h),
                                              rng);
}

double snapped_h(double r) {
  /* largest 1/integer spacing meeting the scale-r sampling requirement */
  double need = packets::required_grid_h(r);
  return 1.0 / std::ceil(1.0 / need - 1e-12);
}

std::vector<packets::PacketIndex> all_indices(
    const packets::PacketDecomposition& d) {
  std::vector<packets::PacketIndex> v;
  for (const auto& p : d.packets) v.push_back(p.idx);
  return v;
}

/* ======================= exponents ====================================== */

struct ExponentsOpts {
  int n = 0, k = 0, n_max = 0;
  std::string out, config;
};

int run_exponents(const ExponentsOpts& o) {
  Bundle b("exponents");
  b.out_dir = o.out;
  reports::CsvWriter data({"quantity", "n", "k", "value", "exact", "note"});

  const bool pair_mode = o.n > 0 || o.k > 0;
  const bool sweep_mode = o.n_max > 0;
  if (!pair_mode && !sweep_mode)
    throw conelab::contract_error(
        "exponents: give --n with --k, or --n-max (empty range)");

  if (pair_mode) {
    conelab::require(o.n >= 4 && o.k >= 2 && o.k <= o.n - 2,
                     "exponents: need n >= 4 and 2 <= k <= n-2");
    Rat pb = exponents::p_broad(o.n, o.k);
    Rat pr = exponents::p_reduction(o.n, o.k);
    data.row({"p_broad", std::to_string(o.n), std::to_string(o.k),
              fmt(conelab::to_double(pb)), rat_str(pb),
              "2 + " + rat_str(pb - 2)});
    data.row({"p_reduction", std::to_string(o.n), std::to_string(o.k),
              fmt(conelab::to_double(pr)), rat_str(pr),
              "2 + " + rat_str(pr - 2)});
    b.summary.data()["p_broad"] = rat_str(pb);
    b.summary.data()["p_reduction"] = rat_str(pr);
    b.check("broad-exponent-rational",
            "n=" + std::to_string(o.n) + " k=" + std::to_string(o.k),
            conelab::to_double(pb), ">2", pb > 2);
  }

  if (sweep_mode) {
    conelab::require(o.n_max >= 4, "exponents: --n-max must be >= 4");
    auto opt = exponents::optimize_threshold();
    data.row({"u", "", "", fmt((double)opt.u), "", "root of 2u^3+3u^2-2"});
    data.row({"v", "", "", fmt((double)opt.v), "", "u^2"});
    data.row({"lambda", "", "", fmt((double)opt.lambda), "", "4/(2-v)"});
    b.summary.data()["u"] = fmt((double)opt.u);
    b.summary.data()["lambda"] = fmt((double)opt.lambda);
    b.check("threshold-root", "", (double)opt.u, "0.67765+-1e-4",
            std::fabs((double)opt.u - 0.67765) <= 1e-4);
    b.check("asymptotic-coefficient", "", (double)opt.lambda,
            "2.59607+-1e-4", std::fabs((double)opt.lambda - 2.59607) <= 1e-4);

    auto sweep = exponents::improvement_sweep(o.n_max);
    data.row({"n0", "", "", std::to_string(sweep.n0), "",
              "improvement holds for all n >= n0"});
    b.summary.data()["n0"] = sweep.n0;
    for (const auto& row : sweep.rows)
      data.row({"threshold", std::to_string(row.n),
                std::to_string(row.k_star),
                fmt(conelab::to_double(row.p_threshold)),
                rat_str(row.p_threshold), row.improved ? "improved" : "not"});
    b.check("baseline-improvement-onset", "n_max=" + std::to_string(o.n_max),
            sweep.n0, "<=50", sweep.n0 >= 4 && sweep.n0 <= 50);
  }

  std::cout << data.str();
  return b.finish(&data);
}

/* ======================= verify ========================================= */

struct VerifyOpts {
  std::string only;
  int seeds = 5;
  double r = 64;
  double delta = 0.1;
  std::uint64_t seed = 1;
  std::string out, config;
};

size_t decompose_cost(double r) {
  double h = snapped_h(r);
  double n = std::ceil(4.5 / h);
  double sectors = std::ceil(2 * kPi * std::sqrt(r));
  return (size_t)(sectors * (2 * n) * (2 * n));
}
size_t ball_cost(double R) {
  double h = snapped_h(std::max(R, 16.0));
  double n = std::ceil(4.5 / h);
  double P = 2 * n;
  double dz = 2 * kPi / (P * h);
  return (size_t)((2 * R / dz + 1) * P * P);
}

int run_verify(const VerifyOpts& o) {
  Bundle b("verify");
  b.out_dir = o.out;
  reports::CsvWriter data({"suite", "seed", "quantity", "value"});
  conelab::require(o.seeds >= 1, "verify: --seeds must be >= 1");
  auto want = [&](const std::string& s) { return o.only.empty() || o.only == s; };
  const std::vector<std::string> known = {
      "reconstruction",        "l2-orthogonality", "ball-l2-growth",
      "two-scale-containment", "medium-group-partition",
      "local-orthogonality",   "tube-concentration"};
  if (!o.only.empty() &&
      std::find(known.begin(), known.end(), o.only) == known.end())
    throw conelab::contract_error("verify: unknown suite " + o.only);

  /* resource guard: refuse oversized projections before any work */
  {
    size_t projected = 0;
    size_t dec = decompose_cost(o.r);
    if (want("reconstruction")) projected += (size_t)o.seeds * 2 * dec;
    if (want("l2-orthogonality")) projected += (size_t)o.seeds * 2 * dec;
    if (want("two-scale-containment")) projected += (size_t)o.seeds * 3 * dec;
    if (want("medium-group-partition")) projected += (size_t)o.seeds * 2 * dec;
    if (want("local-orthogonality")) projected += (size_t)o.seeds * 2 * dec;
    if (want("ball-l2-growth"))
      projected += (size_t)o.seeds *
                   (ball_cost(16) + ball_cost(32) + ball_cost(64));
    if (want("tube-concentration")) {
      double h = snapped_h(o.r);
      double P = 2 * std::ceil(4.5 / h);
      projected += (size_t)std::min(o.seeds, 2) * 2 * (size_t)(P * P * P / 4);
    }
    ext::guard_evaluations(projected);  /* inner-evaluation budget */
    b.log << "projected inner evaluations: " << projected << "\n";
  }

  const double h = snapped_h(o.r);
  const double rho = std::max(4.0, std::sqrt(o.r));

  if (want("reconstruction")) {
    for (int s = 0; s < o.seeds; ++s) {
      CounterRng rng(o.seed + s, 0x7665726901ull);
      auto f = random_f(h, rng);
      auto d = packets::decompose(f, o.r, o.delta);
      double err = d.reconstruction_error();
      data.row({"reconstruction", std::to_string(o.seed + s), "rel_l2_error",
                fmt(err)});
      b.check("packet-sum-reconstruction", "seed=" + std::to_string(o.seed + s),
              err, "<=1e-6", err <= 1e-6);
    }
  }
  if (want("l2-orthogonality")) {
    for (int s = 0; s < o.seeds; ++s) {
      CounterRng rng(o.seed + s, 0x7665726902ull);
      auto f = random_f(h, rng);
      auto d = packets::decompose(f, o.r, o.delta);
      auto rep = packets::orthogonality_ratio(d, all_indices(d));
      data.row({"l2-orthogonality", std::to_string(o.seed + s), "ratio",
                fmt(rep.ratio)});
      b.check("l2-orthogonality-ratio", "seed=" + std::to_string(o.seed + s),
              rep.ratio, "[0.5,2]",
              !rep.undefined && rep.ratio >= 0.5 && rep.ratio <= 2);
    }
  }
  if (want("ball-l2-growth")) {
    for (double R : {16.0, 32.0, 64.0}) {
      double hr = snapped_h(std::max(R, 16.0));
      ext::SliceEngine engine(freq::GridSpec::standard(hr), 2);
      for (int s = 0; s < o.seeds; ++s) {
        CounterRng rng(o.seed + s, 0x7665726903ull);
        auto f = random_f(hr, rng);
        double val = ext::norm_l2_ball_grid(f, geometry::Ball{{0, 0, 0}, R},
                                            engine);
        double ratio = val / (std::sqrt(R) * f.l2_norm());
        data.row({"ball-l2-growth",
                  std::to_string(o.seed + s) + ":R=" + fmt(R), "ratio",
                  fmt(ratio)});
        b.check("ball-l2-growth",
                "R=" + fmt(R) + " seed=" + std::to_string(o.seed + s), ratio,
                "<=10", ratio <= 10);
      }
    }
  }
  if (want("two-scale-containment")) {
    for (int s = 0; s < o.seeds; ++s) {
      CounterRng rng(o.seed + s, 0x7665726904ull);
      auto g = random_f(h, rng);
      geometry::Vec3 y{rng.uniform(-8, 8), rng.uniform(-8, 8),
                       rng.uniform(-8, 8)};
      auto lift = packets::two_scale_lift(g, y, rho, o.r);
      data.row({"two-scale-containment", std::to_string(o.seed + s),
                "capture_fraction", fmt(lift.capture_fraction)});
      b.check("two-scale-capture", "seed=" + std::to_string(o.seed + s),
              lift.capture_fraction, ">=0.95", lift.capture_fraction >= 0.95);
    }
  }
  if (want("medium-group-partition")) {
    for (int s = 0; s < o.seeds; ++s) {
      CounterRng rng(o.seed + s, 0x7665726905ull);
      auto f = random_f(h, rng);
      auto d = packets::decompose(f, o.r, o.delta);
      geometry::Vec3 y{rng.uniform(-8, 8), rng.uniform(-8, 8),
                       rng.uniform(-8, 8)};
      auto mg = packets::group_medium_tubes(d, y, rho);
      data.row({"medium-group-partition", std::to_string(o.seed + s), "ratio",
                fmt(mg.ratio)});
      b.check("medium-group-exact-partition",
              "seed=" + std::to_string(o.seed + s), mg.partition_exact ? 1 : 0,
              "=1", mg.partition_exact);
      b.check("medium-group-mass-ratio", "seed=" + std::to_string(o.seed + s),
              mg.ratio, "[0.5,2]", mg.ratio >= 0.5 && mg.ratio <= 2);
    }
  }
  if (want("local-orthogonality")) {
    for (int s = 0; s < o.seeds; ++s) {
      CounterRng rng(o.seed + s, 0x7665726906ull);
      auto f = random_f(h, rng);
      auto d = packets::decompose(f, o.r, o.delta);
      auto lo = packets::local_orthogonality(d, rho);
      data.row({"local-orthogonality", std::to_string(o.seed + s), "c_forward",
                fmt(lo.c_forward)});
      data.row({"local-orthogonality", std::to_string(o.seed + s), "c_reverse",
                fmt(lo.c_reverse)});
      b.check("local-orthogonality-forward",
              "seed=" + std::to_string(o.seed + s), lo.c_forward, "<=8",
              lo.c_forward <= 8);
      b.check("local-orthogonality-reverse",
              "seed=" + std::to_string(o.seed + s), lo.c_reverse, "<=8",
              lo.c_reverse <= 8);
    }
  }
  if (want("tube-concentration")) {
    int seeds = std::min(o.seeds, 2); /* documented cap: slice-FFT heavy */
    for (int s = 0; s < seeds; ++s) {
      CounterRng rng(o.seed + s, 0x7665726907ull);
      auto f = random_f(h, rng);
      auto d = packets::decompose(f, o.r, o.delta);
      /* heaviest packet of the run */
      size_t best = 0;
      for (size_t i = 1; i < d.packets.size(); ++i)
        if (d.packets[i].proxy_norm2 > d.packets[best].proxy_norm2) best = i;
      auto g = d.packet_function(d.packets[best].idx);
      auto tube = d.tube(d.packets[best].idx);
      ext::SliceEngine engine(g.grid, 2);
      double inside = 0, total = 0;
      double dz = engine.dz();
      int P = engine.padded();
      for (int iz = 0; iz < P; iz += 4) {
        double z = (iz <= P / 2 ? iz : iz - P) * dz;
        auto slice = engine.evaluate(g, z);
        for (int ky = 0; ky < P; ++ky)
          for (int kx = 0; kx < P; ++kx) {
            double m = std::norm(slice.values[kx + (size_t)P * ky]);
            total += m;
            geometry::Vec3 x{slice.coord(kx), slice.coord(ky), z};
            if (tube.contains(x, 4)) inside += m;
          }
      }
      double leak = total > 0 ? 1 - inside / total : 0;
      data.row({"tube-concentration", std::to_string(o.seed + s), "leakage",
                fmt(leak)});
      b.check("tube-concentration-leakage",
              "seed=" + std::to_string(o.seed + s), leak, "<=0.01",
              leak <= 0.01);
    }
  }
  return b.finish(&data);
}

/* ======================= decompose ====================================== */

struct DecomposeOpts {
  double r = 64, delta = 0.1, h = 0;
  std::uint64_t seed = 1;
  std::string out, config;
};

int run_decompose(const DecomposeOpts& o) {
  Bundle b("decompose");
  b.out_dir = o.out;
  double h = o.h > 0 ? o.h : snapped_h(o.r);
  CounterRng rng(o.seed, 0x6465636f6dull);
  auto f = random_f(h, rng);
  auto d = packets::decompose(f, o.r, o.delta);

  reports::CsvWriter data(
      {"theta", "vi", "vj", "l", "norm2", "cube_c1", "cube_c2",
       "plate_center"});
  for (const auto& p : d.packets)
    data.row({std::to_string(p.idx.theta), std::to_string(p.idx.vi),
              std::to_string(p.idx.vj), std::to_string(p.idx.l),
              fmt(p.proxy_norm2), fmt(p.cube_center[0]), fmt(p.cube_center[1]),
              fmt(p.plate_center)});
  b.log << packets::packet_table_text(d);
  b.summary.data()["packets"] = d.packets.size();
  b.summary.data()["sector_count"] = d.sector_count;
  b.summary.data()["grid_h"] = fmt(h);
  double err = d.reconstruction_error();
  b.summary.data()["reconstruction_error"] = fmt(err);
  int expected_sectors = (int)std::ceil(2 * kPi * std::sqrt(o.r));
  b.check("sector-count", "r=" + fmt(o.r), d.sector_count,
          "=" + std::to_string(expected_sectors),
          d.sector_count == expected_sectors);
  b.check("packet-sum-reconstruction", "r=" + fmt(o.r), err, "<=1e-6",
          err <= 1e-6);
  std::cout << "packets=" << d.packets.size()
            << " sectors=" << d.sector_count << " recon=" << fmt(err) << "\n";
  return b.finish(&data);
}

/* ======================= broadnorm ====================================== */

struct BroadOpts {
  int k = 3, A = 1;
  double K = 4, p = 0, R = 16;
  std::uint64_t seed = 1;
  int mc = 2000;
  std::string shape = "random";
  bool suites = false;
  std::string out, config;
};

freq::AnnulusFunction single_sector_f(double h, double K) {
  auto f = freq::AnnulusFunction::smooth_annulus(freq::GridSpec::standard(h));
  for (int iy = 0; iy < f.grid.n; ++iy)
    for (int ix = 0; ix < f.grid.n; ++ix) {
      double x = f.grid.coord(ix), y = f.grid.coord(iy);
      double ang = std::atan2(y, x);
      if (ang < 0 || ang > 1.0 / K) f.at(ix, iy) = 0;
    }
  return f;
}

int run_broadnorm(const BroadOpts& o) {
  Bundle b("broadnorm");
  b.out_dir = o.out;
  double p = o.p > 0 ? o.p : 2 + 420.0 / 573.0;
  const double h = 1.0 / 16; /* broad-norm desk grid */
  freq::AnnulusFunction f = freq::AnnulusFunction::zeros(
      freq::GridSpec::standard(h));
  if (o.shape == "random") {
    CounterRng rng(o.seed, 0x62726f6164ull);
    f = random_f(h, rng);
  } else if (o.shape == "single-sector") {
    f = single_sector_f(h, o.K);
  } else {
    throw conelab::contract_error("broadnorm: unknown --shape " + o.shape);
  }

  broad::BroadNormLab lab(f, geometry::Ball{{0, 0, 0}, o.R}, o.k, o.K,
                          o.seed, o.mc);
  broad::BroadNormSpec spec;
  spec.k = o.k;
  spec.A = o.A;
  spec.K = o.K;
  spec.p = p;
  double norm = lab.norm(spec);
  b.log << lab.report(spec);

  reports::CsvWriter data({"ball", "c1", "c2", "c3", "weight", "mu"});
  const auto& balls = lab.balls();
  for (size_t i = 0; i < balls.balls.size(); ++i) {
    auto mu = lab.mu_of_ball((int)i, p, o.A);
    data.row({std::to_string(i), fmt(balls.balls[i].center[0]),
              fmt(balls.balls[i].center[1]), fmt(balls.balls[i].center[2]),
              fmt(balls.weights[i]), fmt(mu.value)});
  }
  b.summary.data()["norm"] = fmt(norm);
  b.summary.data()["f_norm"] = fmt(lab.f_norm());
  b.summary.data()["caps"] = lab.caps().count;
  b.summary.data()["balls"] = balls.balls.size();
  std::cout << "broad norm=" << fmt(norm) << " f_norm=" << fmt(lab.f_norm())
            << " caps=" << lab.caps().count << " balls=" << balls.balls.size()
            << "\n";

  if (o.shape == "single-sector")
    b.check("single-sector-vanishing", "k=" + std::to_string(o.k), norm,
            "<=1e-4*f_norm", norm <= 1e-4 * lab.f_norm());
  if (o.suites) {
    CounterRng rng(o.seed, 0x62726f6165ull);
    auto g = random_f(h, rng);
    auto hh = random_f(h, rng.split("second"));
    auto tri = broad::check_triangle(g, hh, geometry::Ball{{0, 0, 0}, o.R},
                                     o.k, o.K, p, 1, 1, 4, o.seed);
    b.check("triangle-inequality", "", tri.c_measured, "<=4(slack)", tri.pass);
    auto hol = broad::check_holder(g, geometry::Ball{{0, 0, 0}, o.R}, o.k,
                                   o.K, 2, p, 1, 1, 0.5, 0.5, o.seed);
    b.check("holder-interpolation", "", hol.lhs,
            "<=rhs1^a1*rhs2^a2", hol.pass);
  }
  return b.finish(&data);
}

/* ======================= partition ====================================== */

struct PartitionOpts {
  int d = 2, n = 2, size = 64;
  double r = 32, ratio_bound = 0, w = 0;
  int lines = 0;
  std::string shape = "uniform";
  std::uint64_t seed = 1;
  long budget = 10000;
  std::string out, config;
};

partition::MassGrid shaped_mass(const PartitionOpts& o) {
  using partition::MassGrid;
  if (o.shape == "uniform") return MassGrid::uniform(o.n, o.r, o.size);
  if (o.shape == "point")
    return MassGrid::point_mass(o.n, o.r, o.size,
                                {o.r / 3, -o.r / 4, o.n == 3 ? o.r / 5 : 0});
  MassGrid g = MassGrid::zeros(o.n, o.r, o.size);
  CounterRng rng(o.seed, 0x7061727469ull);
  int zmax = o.n == 3 ? o.size : 1;
  for (int iz = 0; iz < zmax; ++iz)
    for (int iy = 0; iy < o.size; ++iy)
      for (int ix = 0; ix < o.size; ++ix) {
        if (!g.in_domain(ix, iy, iz)) continue;
        geometry::Vec3 c = g.center(ix, iy, iz);
        double q = geometry::norm(c);
        if (o.shape == "gaussian")
          g.at(ix, iy, iz) = std::exp(-8 * q * q / (o.r * o.r));
        else if (o.shape == "two-blobs") {
          geometry::Vec3 a{-o.r / 2, 0, 0}, bb{o.r / 2, o.r / 4, 0};
          double da = geometry::norm(geometry::sub(c, a));
          double db = geometry::norm(geometry::sub(c, bb));
          g.at(ix, iy, iz) = std::exp(-32 * da * da / (o.r * o.r)) +
                             std::exp(-32 * db * db / (o.r * o.r));
        } else if (o.shape == "random")
          g.at(ix, iy, iz) = rng.uniform();
        else
          throw conelab::contract_error("partition: unknown --shape " +
                                        o.shape);
      }
  return g;
}

int run_partition(const PartitionOpts& o) {
  Bundle b("partition");
  b.out_dir = o.out;
  conelab::require(o.n == 2 || o.n == 3, "partition: --n must be 2 or 3");
  conelab::require(o.d >= 2, "partition: --d must be >= 2");
  auto mass = shaped_mass(o);
  partition::EquipartitionParams par;
  par.seed = o.seed;
  par.budget_per_round = o.budget;
  double bound = o.ratio_bound > 0 ? o.ratio_bound
                                   : (o.shape == "uniform" ? 2.0 : 4.0);
  par.ratio_bound = bound;
  auto rep = partition::equipartition(mass, o.d, par);

  reports::CsvWriter data({"quantity", "value"});
  data.row({"rounds", std::to_string(rep.rounds.size())});
  data.row({"degree", std::to_string(rep.degree)});
  data.row({"achieved_ratio", fmt(rep.achieved_ratio)});
  data.row({"worst_imbalance", fmt(rep.worst_imbalance)});
  data.row({"evaluations", std::to_string(rep.evaluations)});
  b.summary.data()["degree"] = rep.degree;
  b.summary.data()["achieved_ratio"] = fmt(rep.achieved_ratio);
  b.check("sign-class-mass-ratio",
          "d=" + std::to_string(o.d) + " shape=" + o.shape,
          rep.achieved_ratio, "<=" + fmt(bound),
          !rep.failure && rep.achieved_ratio <= bound);
  b.check("nonsingular-on-samples", "", rep.nonsingular_ok ? 1 : 0, "=1",
          rep.nonsingular_ok);

  if (o.lines > 0) {
    double w = o.w > 0 ? o.w : 1.5 * mass.spacing;
    auto cd = partition::cells(rep.poly, w, o.r, o.n, o.size);
    data.row({"cells", std::to_string(cd.cell_count)});
    CounterRng rng(o.seed, 0x6c696e6573ull);
    int violations = 0;
    int worst = 0;
    for (int i = 0; i < o.lines; ++i) {
      geometry::Vec3 p0{rng.uniform(-o.r, o.r), rng.uniform(-o.r, o.r),
                        o.n == 3 ? rng.uniform(-o.r, o.r) : 0};
      geometry::Vec3 p1{rng.uniform(-o.r, o.r), rng.uniform(-o.r, o.r),
                        o.n == 3 ? rng.uniform(-o.r, o.r) : 0};
      auto inc = partition::tube_cell_incidence(p0, p1, cd, rep.poly);
      worst = std::max(worst, inc.observed);
      if (inc.observed > inc.certified || inc.certified > rep.degree + 1)
        ++violations;
    }
    data.row({"line_violations", std::to_string(violations)});
    data.row({"worst_observed_crossings", std::to_string(worst)});
    b.check("line-crossing-certificates",
            "lines=" + std::to_string(o.lines), violations, "=0",
            violations == 0);
  }
  std::cout << data.str();
  return b.finish(&data);
}

/* ======================= wolff ========================================== */

struct WolffOpts {
  std::string variety = "plane";
  double r = 256, phi = kPi, delta_m = 0.1, width_mult = 1;
  bool nested = false;
  double r_coarse = 256, r_fine = 64;
  std::string out, config;
};

geometry::Variety wolff_variety(const std::string& name, double phi) {
  if (name == "plane") return incidence::cone_tangent_plane(phi);
  if (name == "full") return geometry::Variety::full_space();
  if (name == "line") return incidence::light_ray(0);
  throw conelab::contract_error("wolff: unknown --variety " + name);
}

int run_wolff(const WolffOpts& o) {
  Bundle b("wolff");
  b.out_dir = o.out;
  incidence::WolffParams par;
  par.delta_m = o.delta_m;
  par.width_mult = o.width_mult;
  reports::CsvWriter data(incidence::count_csv_header());

  if (o.nested) {
    geometry::Multigrain mg;
    mg.grains.push_back({wolff_variety("line", o.phi),
                         geometry::Ball{{0, 0, 0}, o.r_fine}});
    mg.grains.push_back({wolff_variety("plane", o.phi),
                         geometry::Ball{{0, 0, 0}, o.r_coarse}});
    mg.deltas = {o.delta_m, o.delta_m};
    auto rep = incidence::nested_count(mg, par);
    data.row(incidence::count_csv_row(rep));
    b.summary.data()["directions"] = rep.directions;
    b.summary.data()["ratio"] = fmt(rep.ratio);
    b.check("nested-count-ratio",
            "r_fine=" + fmt(o.r_fine) + " r_coarse=" + fmt(o.r_coarse),
            rep.ratio, "<=8", rep.ratio <= 8 && !rep.empty_level);
  } else {
    auto Z = wolff_variety(o.variety, o.phi);
    auto rep = incidence::wolff_count(Z, geometry::Ball{{0, 0, 0}, o.r}, o.r,
                                      par);
    data.row(incidence::count_csv_row(rep));
    b.summary.data()["tubes"] = rep.tubes;
    b.summary.data()["directions"] = rep.directions;
    b.summary.data()["ratio"] = fmt(rep.ratio);
    b.check("direction-count-ratio", "variety=" + o.variety + " r=" + fmt(o.r),
            rep.ratio, "<=8", rep.ratio <= 8);
  }
  std::cout << data.str();
  return b.finish(&data);
}

/* ======================= drive ========================================== */

struct DriveOpts {
  std::string scenario = "plane-line";
  std::string source = "scenario";
  int alg = 2;
  double r = 64;
  int size = 48;
  int d = 2, k = 2, steps = 24;
  double epsilon = 0.5;
  std::uint64_t seed = 1;
  bool single_step = false;
  std::string out, config;
};

int run_drive(const DriveOpts& o) {
  Bundle b("drive");
  b.out_dir = o.out;
  driver::DriverParams par;
  par.d = o.d;
  par.k = o.k;
  par.epsilon = o.epsilon;
  par.grid_size = o.size;
  par.max_steps = o.steps;
  par.seed = o.seed;

  partition::MassGrid mass = partition::MassGrid::zeros(3, o.r, o.size);
  if (o.source == "scenario") {
    mass = driver::scenario_mass(o.scenario, o.r, o.size, o.seed);
  } else if (o.source == "broad") {
    CounterRng rng(o.seed, 0x6472697665ull);
    auto f = random_f(1.0 / 16, rng);
    mass = driver::broad_mass_grid(f, o.r, 2, 4, o.size, o.seed, 500,
                                   2 + 420.0 / 573.0);
  } else {
    throw conelab::contract_error("drive: unknown --source " + o.source);
  }

  reports::CsvWriter data({"quantity", "value"});

  if (o.single_step) {
    /* one dichotomy decision at the given scale, no recursion */
    double delta_m = driver::delta_set(o.epsilon, par.n).delta_dim[3];
    double w = std::max(std::pow(o.r, 0.5 + delta_m), mass.spacing * 1.0001);
    partition::EquipartitionParams epar;
    epar.seed = o.seed;
    auto res = partition::partition_case(mass, o.d,
                                         geometry::Variety::full_space(), w,
                                         epar);
    std::cout << partition::partition_report_text(res);
    b.log << partition::partition_report_text(res);
    bool cellular =
        res.kind == partition::PartitionCaseResult::Kind::Cellular;
    data.row({"case", cellular ? "cellular" : "algebraic"});
    data.row({"wall_fraction", fmt(res.wall_mass / res.total)});
    b.summary.data()["case"] = cellular ? "cellular" : "algebraic";
    b.check("partition-case-decided", "scenario=" + o.scenario,
            cellular ? 1 : 0, "in{0,1}", !res.P.failure);
    return b.finish(&data);
  }

  if (o.alg == 1) {
    geometry::Grain grain{geometry::Variety::full_space(),
                          geometry::Ball{{0, 0, 0}, o.r}};
    auto rep = driver::alg1_run(grain, mass, {}, par);
    std::cout << rep.transcript;
    b.log << rep.transcript;
    data.row({"terminal", rep.terminal});
    data.row({"history", rep.history});
    data.row({"rho_final", fmt(rep.rho_final)});
    data.row({"p1_mass_fraction", fmt(rep.p1_mass_fraction)});
    b.summary.data()["terminal"] = rep.terminal;
    b.summary.data()["history"] = rep.history;
    b.check("coefficient-recurrences", "alg=1", rep.recurrences_ok ? 1 : 0,
            "=1", rep.recurrences_ok);
    b.check("history-word-bounds", "alg=1", rep.history_bounds_ok ? 1 : 0, "=1",
            rep.history_bounds_ok);
    if (o.scenario == "vanishing")
      b.check("vanishing-mass-terminates-tiny", "", rep.mass_vanished ? 1 : 0,
              "=1", rep.terminal == "tiny" && rep.mass_vanished);
  } else if (o.alg == 2) {
    auto rep = driver::alg2_run(mass, {}, o.r, par);
    std::cout << rep.transcript;
    b.log << rep.transcript;
    data.row({"m_final", std::to_string(rep.m_final)});
    data.row({"levels", std::to_string(rep.levels.size())});
    data.row({"vanishing_violation",
              std::to_string(rep.vanishing_violation ? 1 : 0)});
    data.row({"p2_slack", fmt(rep.p2_slack)});
    b.summary.data()["m_final"] = rep.m_final;
    b.summary.data()["vanishing_violation"] = rep.vanishing_violation;
    bool rec_ok = true, hist = true;
    for (const auto& r : rep.runs) {
      rec_ok = rec_ok && r.recurrences_ok;
      hist = hist && r.history_bounds_ok;
    }
    b.check("coefficient-recurrences", "alg=2 runs=" +
            std::to_string(rep.runs.size()), rec_ok ? 1 : 0, "=1", rec_ok);
    b.check("history-word-bounds", "alg=2", hist ? 1 : 0, "=1", hist);
    b.check("scale-degree-factor-dual-route", "alg=2", rep.dual_route_ok ? 1 : 0,
            "=1", rep.dual_route_ok);
    if (o.scenario == "plane-line" || o.scenario == "slab")
      b.check("tangential-branch-reached", "scenario=" + o.scenario,
              rep.transcript.find("[tang]") != std::string::npos ? 1 : 0,
              "=1", rep.transcript.find("[tang]") != std::string::npos);
  } else {
    throw conelab::contract_error("drive: --alg must be 1 or 2");
  }
  return b.finish(&data);
}

}  // namespace

/* ======================= main =========================================== */

int main(int argc, char** argv) {
  CLI::App app{
      "conelab: numerical laboratory for cone-extension exponents, wave "
      "packets, broad norms, polynomial partitioning, tube counting, and "
      "the structure driver.\nExit codes: 0 = all checks pass, 1 = some "
      "check failed, 2 = usage/contract/resource error.\nAll commands "
      "accept --config FILE (JSON object of long option names); explicit "
      "flags override config values.  Check CSVs share the columns "
      "claim,context,measured,bound,verdict."};
  app.require_subcommand(1);

  ExponentsOpts eo;
  auto* ce = app.add_subcommand(
      "exponents", "Exact-rational exponent tables and the threshold "
      "headline.\nData CSV columns: quantity,n,k,value,exact,note.");
  auto* ce_n = ce->add_option("--n", eo.n, "dimension for a single (n,k) row");
  auto* ce_k = ce->add_option("--k", eo.k, "broadness parameter, 2..n-2");
  auto* ce_m = ce->add_option("--n-max", eo.n_max,
                              "sweep 4..n-max with the improvement onset");
  auto* ce_o = ce->add_option("--out", eo.out, "report bundle directory");
  auto* ce_c = ce->add_option("--config", eo.config, "JSON config file");

  VerifyOpts vo;
  auto* cv = app.add_subcommand(
      "verify", "Fixed-seed property suites over the extension/packet/"
      "broad-norm stack.\nSuites: reconstruction, l2-orthogonality, "
      "ball-l2-growth, two-scale-containment, medium-group-partition, "
      "local-orthogonality, tube-concentration (capped at 2 seeds).\nData "
      "CSV columns: suite,seed,quantity,value.");
  auto* cv_only = cv->add_option("--only", vo.only, "run a single suite");
  auto* cv_seeds = cv->add_option("--seeds", vo.seeds, "seeds per suite");
  auto* cv_r = cv->add_option("--r", vo.r, "packet scale r");
  auto* cv_delta = cv->add_option("--delta", vo.delta, "packet delta");
  auto* cv_seed = cv->add_option("--seed", vo.seed, "base seed");
  auto* cv_o = cv->add_option("--out", vo.out, "report bundle directory");
  auto* cv_c = cv->add_option("--config", vo.config, "JSON config file");

  DecomposeOpts dco;
  auto* cd = app.add_subcommand(
      "decompose", "Wave-packet decomposition table for one seeded "
      "function.\nData CSV columns: theta,vi,vj,l,norm2,cube_c1,cube_c2,"
      "plate_center.");
  auto* cd_r = cd->add_option("--r", dco.r, "packet scale r");
  auto* cd_delta = cd->add_option("--delta", dco.delta, "packet delta");
  auto* cd_h = cd->add_option("--grid-h", dco.h,
                              "grid spacing override (refused if too coarse)");
  auto* cd_seed = cd->add_option("--seed", dco.seed, "seed");
  auto* cd_o = cd->add_option("--out", dco.out, "report bundle directory");
  auto* cd_c = cd->add_option("--config", dco.config, "JSON config file");

  BroadOpts bo;
  auto* cb = app.add_subcommand(
      "broadnorm", "Broad-norm computation over one region.\nData CSV "
      "columns: ball,c1,c2,c3,weight,mu.");
  auto* cb_k = cb->add_option("--k", bo.k, "broadness parameter");
  auto* cb_A = cb->add_option("--A", bo.A, "excluded-subspace count");
  auto* cb_K = cb->add_option("--K", bo.K, "cap scale");
  auto* cb_p = cb->add_option("--p", bo.p, "exponent (default 2+420/573)");
  auto* cb_R = cb->add_option("--R", bo.R, "region radius");
  auto* cb_seed = cb->add_option("--seed", bo.seed, "seed");
  auto* cb_mc = cb->add_option("--mc", bo.mc, "Monte-Carlo points per ball");
  auto* cb_shape =
      cb->add_option("--shape", bo.shape, "random | single-sector");
  auto* cb_suites = cb->add_flag("--suites", bo.suites,
                                 "also run triangle/Holder spot checks");
  auto* cb_o = cb->add_option("--out", bo.out, "report bundle directory");
  auto* cb_c = cb->add_option("--config", bo.config, "JSON config file");

  PartitionOpts po;
  auto* cp = app.add_subcommand(
      "partition", "Mass equipartition and cell diagnostics.\nData CSV "
      "columns: quantity,value.");
  auto* cp_d = cp->add_option("--d", po.d, "cell parameter d");
  auto* cp_n = cp->add_option("--n", po.n, "dimension (2 or 3)");
  auto* cp_shape = cp->add_option(
      "--shape", po.shape, "uniform | gaussian | two-blobs | point | random");
  auto* cp_size = cp->add_option("--size", po.size, "grid cells per axis");
  auto* cp_r = cp->add_option("--r", po.r, "domain radius");
  auto* cp_rb = cp->add_option("--ratio-bound", po.ratio_bound,
                               "pass bound on the class-mass ratio");
  auto* cp_w = cp->add_option("--w", po.w, "wall width for cell checks");
  auto* cp_lines = cp->add_option("--lines", po.lines,
                                  "random line-crossing certificates");
  auto* cp_budget = cp->add_option("--budget", po.budget,
                                   "search evaluations per round");
  auto* cp_seed = cp->add_option("--seed", po.seed, "seed");
  auto* cp_o = cp->add_option("--out", po.out, "report bundle directory");
  auto* cp_c = cp->add_option("--config", po.config, "JSON config file");

  WolffOpts wo;
  auto* cw = app.add_subcommand(
      "wolff", "Tube-family counts near a variety.\nData CSV columns: "
      "config_hash,config,r,m,tubes,directions,bound,ratio,flagged.");
  auto* cw_v = cw->add_option("--variety", wo.variety,
                              "plane | full | line (plane is cone-tangent)");
  auto* cw_r = cw->add_option("--r", wo.r, "scale r");
  auto* cw_phi = cw->add_option("--phi", wo.phi, "tangency angle");
  auto* cw_dm = cw->add_option("--delta-m", wo.delta_m, "width exponent");
  auto* cw_wm = cw->add_option("--width-mult", wo.width_mult,
                               "width multiplier");
  auto* cw_nested = cw->add_flag("--nested", wo.nested,
                                 "two-level line-in-plane nested count");
  auto* cw_rc = cw->add_option("--r-coarse", wo.r_coarse, "coarse scale");
  auto* cw_rf = cw->add_option("--r-fine", wo.r_fine, "fine scale");
  auto* cw_o = cw->add_option("--out", wo.out, "report bundle directory");
  auto* cw_c = cw->add_option("--config", wo.config, "JSON config file");

  DriveOpts dro;
  auto* cr = app.add_subcommand(
      "drive", "Iterated partitioning runs on scenario masses.\nData CSV "
      "columns: quantity,value.  The run transcript goes to stdout and the "
      "log.");
  auto* cr_s = cr->add_option(
      "--scenario", dro.scenario,
      "spread | slab | plane-line | line | generic | vanishing");
  auto* cr_src = cr->add_option("--source", dro.source,
                                "scenario | broad (broad-norm mass)");
  auto* cr_alg = cr->add_option("--alg", dro.alg, "1 or 2");
  auto* cr_r = cr->add_option("--r", dro.r, "initial scale");
  auto* cr_size = cr->add_option("--size", dro.size, "grid cells per axis");
  auto* cr_d = cr->add_option("--d", dro.d, "partition parameter d");
  auto* cr_k = cr->add_option("--k", dro.k, "level floor k");
  auto* cr_steps = cr->add_option("--steps", dro.steps, "max steps per run");
  auto* cr_eps = cr->add_option("--epsilon", dro.epsilon, "ladder seed");
  auto* cr_seed = cr->add_option("--seed", dro.seed, "seed");
  auto* cr_ss = cr->add_flag("--single-step", dro.single_step,
                             "one dichotomy decision, no recursion");
  auto* cr_o = cr->add_option("--out", dro.out, "report bundle directory");
  auto* cr_c = cr->add_option("--config", dro.config, "JSON config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (ce->parsed()) {
      ConfigOverlay cfg;
      cfg.load(eo.config);
      cfg.get(ce_n, "n", eo.n);
      cfg.get(ce_k, "k", eo.k);
      cfg.get(ce_m, "n-max", eo.n_max);
      cfg.get(ce_o, "out", eo.out);
      (void)ce_c;
      return run_exponents(eo);
    }
    if (cv->parsed()) {
      ConfigOverlay cfg;
      cfg.load(vo.config);
      cfg.get(cv_only, "only", vo.only);
      cfg.get(cv_seeds, "seeds", vo.seeds);
      cfg.get(cv_r, "r", vo.r);
      cfg.get(cv_delta, "delta", vo.delta);
      cfg.get(cv_seed, "seed", vo.seed);
      cfg.get(cv_o, "out", vo.out);
      (void)cv_c;
      return run_verify(vo);
    }
    if (cd->parsed()) {
      ConfigOverlay cfg;
      cfg.load(dco.config);
      cfg.get(cd_r, "r", dco.r);
      cfg.get(cd_delta, "delta", dco.delta);
      cfg.get(cd_h, "grid-h", dco.h);
      cfg.get(cd_seed, "seed", dco.seed);
      cfg.get(cd_o, "out", dco.out);
      (void)cd_c;
      return run_decompose(dco);
    }
    if (cb->parsed()) {
      ConfigOverlay cfg;
      cfg.load(bo.config);
      cfg.get(cb_k, "k", bo.k);
      cfg.get(cb_A, "A", bo.A);
      cfg.get(cb_K, "K", bo.K);
      cfg.get(cb_p, "p", bo.p);
      cfg.get(cb_R, "R", bo.R);
      cfg.get(cb_seed, "seed", bo.seed);
      cfg.get(cb_mc, "mc", bo.mc);
      cfg.get(cb_shape, "shape", bo.shape);
      cfg.get(cb_suites, "suites", bo.suites);
      cfg.get(cb_o, "out", bo.out);
      (void)cb_c;
      return run_broadnorm(bo);
    }
    if (cp->parsed()) {
      ConfigOverlay cfg;
      cfg.load(po.config);
      cfg.get(cp_d, "d", po.d);
      cfg.get(cp_n, "n", po.n);
      cfg.get(cp_shape, "shape", po.shape);
      cfg.get(cp_size, "size", po.size);
      cfg.get(cp_r, "r", po.r);
      cfg.get(cp_rb, "ratio-bound", po.ratio_bound);
      cfg.get(cp_w, "w", po.w);
      cfg.get(cp_lines, "lines", po.lines);
      cfg.get(cp_budget, "budget", po.budget);
      cfg.get(cp_seed, "seed", po.seed);
      cfg.get(cp_o, "out", po.out);
      (void)cp_c;
      return run_partition(po);
    }
    if (cw->parsed()) {
      ConfigOverlay cfg;
      cfg.load(wo.config);
      cfg.get(cw_v, "variety", wo.variety);
      cfg.get(cw_r, "r", wo.r);
      cfg.get(cw_phi, "phi", wo.phi);
      cfg.get(cw_dm, "delta-m", wo.delta_m);
      cfg.get(cw_wm, "width-mult", wo.width_mult);
      cfg.get(cw_nested, "nested", wo.nested);
      cfg.get(cw_rc, "r-coarse", wo.r_coarse);
      cfg.get(cw_rf, "r-fine", wo.r_fine);
      cfg.get(cw_o, "out", wo.out);
      (void)cw_c;
      return run_wolff(wo);
    }
    if (cr->parsed()) {
      ConfigOverlay cfg;
      cfg.load(dro.config);
      cfg.get(cr_s, "scenario", dro.scenario);
      cfg.get(cr_src, "source", dro.source);
      cfg.get(cr_alg, "alg", dro.alg);
      cfg.get(cr_r, "r", dro.r);
      cfg.get(cr_size, "size", dro.size);
      cfg.get(cr_d, "d", dro.d);
      cfg.get(cr_k, "k", dro.k);
      cfg.get(cr_steps, "steps", dro.steps);
      cfg.get(cr_eps, "epsilon", dro.epsilon);
      cfg.get(cr_seed, "seed", dro.seed);
      cfg.get(cr_ss, "single-step", dro.single_step);
      cfg.get(cr_o, "out", dro.out);
      (void)cr_c;
      return run_drive(dro);
    }
  } catch (const conelab::resource_guard_error& e) {
    std::cerr << "resource-guard refusal: " << e.what() << "\n";
    return 2;
  } catch (const conelab::contract_error& e) {
    std::cerr << "contract error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
