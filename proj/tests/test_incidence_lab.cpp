#include <doctest.h>

#include "conelab/incidence_lab.hpp"

#include <cmath>
#include <set>
#include <string>

using namespace conelab;
using namespace conelab::incidence;
using geometry::angle_to_subspace;
using geometry::normalized;
using geometry::Vec3;

TEST_SUITE("incidence_lab") {

TEST_CASE("standard varieties sit on the cone") {
    Variety ray = light_ray(0.0);
    CHECK(ray.dim == 1);
    // Direction (-1, 0, 1)/sqrt(2).
    CHECK(geometry::norm(ray.basis[0]) == doctest::Approx(1.0));
    CHECK(ray.basis[0][2] > 0);
    CHECK(ray.basis[0][0] == doctest::Approx(-ray.basis[0][2]));
    CHECK(ray.basis[0][1] == doctest::Approx(0.0).epsilon(1e-12));

    Variety plane = cone_tangent_plane(kPi);
    CHECK(plane.dim == 2);
    // The tangent plane along ray phi contains the light direction L(phi+pi).
    CHECK(angle_to_subspace(normalized({-1, 0, 1}), plane.basis) <= 1e-9);
    // It does not contain the transverse light direction L(phi/2 + pi).
    CHECK(angle_to_subspace(normalized({0, -1, 1}), plane.basis) > 0.3);
}

TEST_CASE("full space admits every direction with exact separation") {
    double r = 64;
    Ball B{{0, 0, 0}, r};
    TubeFamily fam = admitted_family(Variety::full_space(), B, r);
    CHECK(fam.grid_directions == 51);
    CHECK((int)fam.directions.size() == 51);
    CHECK(fam.min_pairwise_angle == doctest::Approx(2 * kPi / 51).epsilon(1e-9));
    // 0.9856 r^{-1/2}: the equal-partition angular step at scale r.
    CHECK(fam.min_pairwise_angle >= 0.9856 / std::sqrt(r) * (1 - 1e-6));
    CHECK(fam.tubes.size() >= fam.directions.size());
    CHECK(fam.dir_index.size() == fam.tubes.size());
}

TEST_CASE("plane counts stay under the direction bound") {
    Ball B64{{0, 0, 0}, 64.0};
    CountReport c64 = wolff_count(cone_tangent_plane(kPi), B64, 64.0);
    CHECK(c64.m == 2);
    CHECK(c64.r == doctest::Approx(64.0));
    CHECK(c64.bound == doctest::Approx(std::sqrt(64.0)));  // r^{(m-1)/2}
    CHECK(c64.directions >= 6);
    CHECK(c64.directions <= 30);
    CHECK(c64.ratio == doctest::Approx((double)c64.directions / c64.bound));
    CHECK(c64.ratio <= 8.0);
    CHECK(c64.tubes >= c64.directions);

    Ball B256{{0, 0, 0}, 256.0};
    CountReport c256 = wolff_count(cone_tangent_plane(kPi), B256, 256.0);
    CHECK(c256.ratio <= 8.0);
    double growth = (double)c256.directions / (double)c64.directions;
    // Doubling the scale twice grows directions like sqrt(r) (~2x), within 2x.
    CHECK(growth >= 1.0);
    CHECK(growth <= 4.0);
}

TEST_CASE("line admits about one direction, full space all of them") {
    Ball B{{0, 0, 0}, 64.0};
    CountReport line = wolff_count(light_ray(0.0), B, 64.0);
    CHECK(line.m == 1);
    CHECK(line.bound == doctest::Approx(1.0));  // r^0
    CHECK(line.directions >= 1);
    CHECK(line.directions <= 4);

    CountReport full = wolff_count(Variety::full_space(), B, 64.0);
    CHECK(full.m == 3);
    CHECK(full.directions == 51);
    CHECK(full.bound == doctest::Approx(64.0));  // r^{(n-1)/2}
    CHECK(full.ratio <= 1.0 + 1e-9);
}

TEST_CASE("wider slabs admit at least as much") {
    Ball B{{0, 0, 0}, 64.0};
    WolffParams narrow;
    WolffParams wide;
    wide.width_mult = 2.0;
    CountReport a = wolff_count(cone_tangent_plane(kPi), B, 64.0, narrow);
    CountReport b = wolff_count(cone_tangent_plane(kPi), B, 64.0, wide);
    CHECK(b.directions >= a.directions);
    CHECK(b.tubes >= a.tubes);
}

TEST_CASE("nested tower filters at least as hard as its finest level") {
    double r_fine = 64.0, r_coarse = 256.0;
    Multigrain mg;
    mg.grains = {{light_ray(0.0), Ball{{0, 0, 0}, r_fine}},
                 {cone_tangent_plane(kPi), Ball{{0, 0, 0}, r_coarse}}};
    mg.deltas = {0.1, 0.1};
    CountReport nested = nested_count(mg);
    CHECK_FALSE(nested.empty_level);
    CHECK(nested.m == 1);
    CHECK(nested.r == doctest::Approx(r_fine));
    // Bound = r_top^{(n-2)/2} / prod_{j < top} sqrt(r_j) = 16/8 = 2.
    CHECK(nested.bound == doctest::Approx(2.0));
    CHECK(nested.ratio <= 8.0);

    CountReport alone = wolff_count(light_ray(0.0), Ball{{0, 0, 0}, r_fine}, r_fine);
    CHECK(nested.directions <= alone.directions + 1e-9);
    CHECK(nested.directions >= 1);
}

TEST_CASE("incompatible nested levels leave an empty family") {
    // A line pointing transversally to the coarse tangent plane.
    Multigrain mg;
    mg.grains = {{light_ray(kPi / 2), Ball{{0, 0, 0}, 64.0}},
                 {cone_tangent_plane(kPi), Ball{{0, 0, 0}, 256.0}}};
    mg.deltas = {0.1, 0.1};
    CountReport rep = nested_count(mg);
    CHECK((rep.empty_level || rep.directions == 0));
}

TEST_CASE("enumeration guard trips on absurd budgets") {
    WolffParams tiny;
    tiny.max_tubes = 10;
    CHECK_THROWS_AS(
        wolff_count(cone_tangent_plane(kPi), Ball{{0, 0, 0}, 64.0}, 64.0, tiny),
        resource_guard_error);
    try {
        wolff_count(cone_tangent_plane(kPi), Ball{{0, 0, 0}, 64.0}, 64.0, tiny);
    } catch (const resource_guard_error& e) {
        CHECK(std::string(e.what()).find("guard") != std::string::npos);
    }
}

TEST_CASE("csv rows and config hashing are stable") {
    auto header = count_csv_header();
    CHECK(header.size() >= 8);
    bool has_dirs = false;
    for (const auto& h : header) has_dirs |= (h == "directions");
    CHECK(has_dirs);

    CountReport rep = wolff_count(light_ray(0.0), Ball{{0, 0, 0}, 64.0}, 64.0);
    auto row = count_csv_row(rep);
    CHECK(row.size() == header.size());
    CHECK(!rep.config.empty());
    CHECK(rep.config.find("r=64") != std::string::npos);

    CHECK(config_hash(rep.config) == config_hash(rep.config));
    CHECK(config_hash("a") != config_hash("b"));
    CHECK(config_hash("") != 0);  // FNV offset basis, not zero
}

}  // TEST_SUITE
