#include <doctest.h>

#include "conelab/extension_field.hpp"
#include "conelab/freq_grid.hpp"

#include <cmath>
#include <complex>
#include <string>

using namespace conelab;
using namespace conelab::ext;
using freq::AnnulusFunction;
using freq::GridSpec;

TEST_SUITE("extension_field") {

TEST_CASE("annulus area converges to 3 pi under refinement") {
    double c = annulus_area_estimate(1.0 / 64);
    double f = annulus_area_estimate(1.0 / 128);
    double target = 3 * kPi;
    CHECK(std::abs(c - target) <= 0.05);
    CHECK(std::abs(f - target) <= 0.03);
    // Indicator quadrature has an oscillating O(h) error, so first-order
    // extrapolation need not beat the coarse error; check its algebra only.
    double extrap = richardson(c, f, 1.0);
    CHECK(extrap == doctest::Approx(2 * f - c));
    CHECK(richardson(10.0, 10.0, 2.0) == doctest::Approx(10.0));
}

TEST_CASE("extension at the origin integrates the symbol") {
    AnnulusFunction ind = AnnulusFunction::annulus_indicator(GridSpec::standard(1.0 / 64));
    std::complex<double> v = eval_direct(ind, {0, 0, 0});
    CHECK(v.real() == doctest::Approx(3 * kPi).epsilon(0.02));
    CHECK(std::abs(v.imag()) <= 1e-9);
    // Linearity: doubling the symbol doubles the field.
    AnnulusFunction two = ind;
    two.scale(2.0);
    std::complex<double> v2 = eval_direct(two, {0, 0, 0});
    CHECK(std::abs(v2 - 2.0 * v) <= 1e-9);
}

TEST_CASE("oscillation guard refuses far evaluation points") {
    CHECK(required_h(Vec3{0, 0, 0}) >= 1.0);
    CHECK(required_h(Vec3{100, 0, 0}) < required_h(Vec3{10, 0, 0}));
    AnnulusFunction f = AnnulusFunction::smooth_annulus(GridSpec::standard(1.0 / 16));
    try {
        eval_direct(f, {1e5, 0, 0});
        CHECK(false);
    } catch (const contract_error& e) {
        CHECK(std::string(e.what()).find("h") != std::string::npos);
    }
}

TEST_CASE("fft slices agree with direct quadrature") {
    GridSpec g = GridSpec::standard(1.0 / 32);
    CounterRng rng(5, 0);
    AnnulusFunction f = AnnulusFunction::random_smooth(g, rng);
    SliceEngine eng(g, 2);
    double x3 = 1.3;
    SpatialSlice s = eng.evaluate(f, x3);
    CHECK(s.x3 == doctest::Approx(x3));
    CHECK(s.p == eng.padded());
    for (int kx : {0, 3, -5}) {
        for (int ky : {0, -2, 7}) {
            Vec3 x{s.coord(kx < 0 ? kx + s.p : kx), s.coord(ky < 0 ? ky + s.p : ky), x3};
            std::complex<double> direct = eval_direct(f, x);
            std::complex<double> fast = s.at(kx, ky);
            CHECK(std::abs(fast - direct) <= 1e-8 * (1 + std::abs(direct)));
        }
    }
}

TEST_CASE("slice wrapping indexes the same values") {
    GridSpec g = GridSpec::standard(1.0 / 16);
    AnnulusFunction f = AnnulusFunction::smooth_annulus(g);
    SliceEngine eng(g, 2);
    SpatialSlice s = eng.evaluate(f, 0.0);
    CHECK(s.at(-1, 2) == s.at(s.p - 1, 2));
    CHECK(s.at(3, -4) == s.at(3, s.p - 4));
}

TEST_CASE("discrete parseval ties slices to the symbol norm") {
    GridSpec g = GridSpec::standard(1.0 / 32);
    CounterRng rng(6, 0);
    AnnulusFunction f = AnnulusFunction::random_smooth(g, rng);
    SliceEngine eng(g, 2);
    SpatialSlice s = eng.evaluate(f, 0.77);
    double spatial2 = 0;
    for (const auto& v : s.values) spatial2 += std::norm(v);
    spatial2 *= s.dz * s.dz;
    double freq2 = f.l2_norm() * f.l2_norm();
    // One full slice carries (2 pi)^2 times the symbol's squared mass.
    CHECK(spatial2 == doctest::Approx(4 * kPi * kPi * freq2).epsilon(1e-9));
}

TEST_CASE("grid and monte carlo ball norms agree") {
    GridSpec g = GridSpec::standard(1.0 / 32);
    CounterRng rng(7, 0);
    AnnulusFunction f = AnnulusFunction::random_smooth(g, rng);
    SliceEngine eng(g, 2);
    Ball B{{0, 0, 0}, 8};
    double grid = norm_l2_ball_grid(f, B, eng);
    CHECK(grid > 0);
    CounterRng mc_rng(8, 0);
    BallNormResult mc = norm_l2_ball_mc(f, B, 6, mc_rng);
    CHECK(mc.evaluations > 0);
    double rel = std::abs(mc.value - grid) / grid;
    CHECK(rel <= 0.10);
    // Determinism in the rng state.
    CounterRng mc_rng2(8, 0);
    BallNormResult mc2 = norm_l2_ball_mc(f, B, 6, mc_rng2);
    CHECK(mc2.value == mc.value);
}

TEST_CASE("recentering is an exact modulation identity") {
    GridSpec g = GridSpec::standard(1.0 / 16);
    CounterRng rng(9, 0);
    AnnulusFunction f = AnnulusFunction::random_smooth(g, rng);
    Vec3 y{2.5, -1.0, 3.0};
    std::vector<Vec3> pts = {{0, 0, 0}, {1, 1, 1}, {-2, 0.5, 4}, {3, -3, 2}};
    CHECK(recenter_max_error(f, y, pts) <= 1e-9);
}

TEST_CASE("evaluation budget guard") {
    CHECK_NOTHROW(guard_evaluations(100));
    CHECK_THROWS_AS(guard_evaluations(2000000000ull), resource_guard_error);
    try {
        guard_evaluations(50, 10);
    } catch (const resource_guard_error& e) {
        std::string msg = e.what();
        CHECK(msg.find("guard") != std::string::npos);
        CHECK(msg.find("budget") != std::string::npos);
    }
}

}  // TEST_SUITE
