#include <doctest.h>

#include "conelab/poly_partition.hpp"
#include "conelab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

using namespace conelab;
using namespace conelab::partition;
using geometry::Polynomial;
using geometry::Variety;
using geometry::Vec3;

TEST_SUITE("poly_partition") {

TEST_CASE("mass grid bookkeeping") {
    MassGrid u = MassGrid::uniform(2, 8.0, 16);
    CHECK(u.size == 16);
    CHECK(u.spacing == doctest::Approx(1.0));
    CHECK(u.cell_count() == 256);
    CHECK(u.total() > 0);
    // Uniform mass is supported exactly on the inscribed-ball cells.
    double per_cell = -1;
    for (int iy = 0; iy < 16; ++iy)
        for (int ix = 0; ix < 16; ++ix) {
            double m = u.at(ix, iy);
            if (u.in_domain(ix, iy)) {
                CHECK(m > 0);
                if (per_cell < 0) per_cell = m;
                CHECK(m == doctest::Approx(per_cell));
            } else {
                CHECK(m == 0);
            }
        }

    MassGrid p = MassGrid::point_mass(2, 8.0, 16, {1.2, -3.4, 0});
    CHECK(p.total() == doctest::Approx(1.0));
    int nonzero = 0;
    for (double m : p.mass) nonzero += (m != 0);
    CHECK(nonzero == 1);

    CHECK(MassGrid::zeros(3, 8.0, 8).total() == 0.0);

    Vec3 c = u.center(8, 8);
    CHECK(std::abs(c[0] - 0.5) <= 1e-12);  // cell centers offset half a step
    CHECK(std::abs(c[2]) <= 1e-12);
}

TEST_CASE("uniform plane equipartition meets the tight ratio") {
    MassGrid mass = MassGrid::uniform(2, 32.0, 64);
    EquipartitionParams par;
    par.ratio_bound = 2;
    PartitionPolynomial P = equipartition(mass, 4, par);
    CHECK_FALSE(P.failure);
    CHECK(P.achieved_ratio <= 2.0);
    CHECK(P.nonsingular_ok);
    CHECK((int)P.rounds.size() == 4);  // floor(2 log2 4)
    CHECK(P.degree >= 4);
    CHECK(P.degree <= 7);  // sum of minimal round degrees for s = 4
    CHECK(P.evaluations > 0);
    CHECK(P.d_parameter == 4);

    // The sign classes really carve >= d cells of comparable mass.
    CellDecomposition cd = cells(P.poly, 1.5, 32.0, 2, 64);
    CHECK(cd.cell_count >= 4);
    CellMasses cm = cell_masses(cd, mass);
    CHECK(cm.total == doctest::Approx(mass.total()));
    CHECK(cm.cell_mass.size() == (size_t)cd.cell_count);
}

TEST_CASE("point mass is trivially balanced") {
    MassGrid mass = MassGrid::point_mass(2, 16.0, 32, {2.0, 1.0, 0});
    PartitionPolynomial P = equipartition(mass, 2);
    CHECK_FALSE(P.failure);
    CHECK(P.achieved_ratio == doctest::Approx(1.0));
}

TEST_CASE("equipartition is deterministic in the seed") {
    MassGrid mass = MassGrid::uniform(2, 16.0, 32);
    EquipartitionParams par;
    par.seed = 77;
    PartitionPolynomial a = equipartition(mass, 2, par);
    PartitionPolynomial b = equipartition(mass, 2, par);
    CHECK(a.achieved_ratio == b.achieved_ratio);
    REQUIRE(a.poly.terms.size() == b.poly.terms.size());
    for (std::size_t i = 0; i < a.poly.terms.size(); ++i)
        CHECK(a.poly.terms[i].coef == b.poly.terms[i].coef);
}

TEST_CASE("cell decomposition of a single hyperplane") {
    Polynomial wallp = Polynomial::affine3({1, 0, 0}, 0.0);  // x = 0
    CellDecomposition cd = cells(wallp, 1.0, 16.0, 2, 32);
    CHECK(cd.cell_count == 2);
    CHECK_FALSE(cd.zero_polynomial);
    CHECK(!cd.zero_samples.empty());
    int wall = 0, outside = 0;
    std::set<int> labels;
    for (int iy = 0; iy < 32; ++iy)
        for (int ix = 0; ix < 32; ++ix) {
            int l = cd.label_at(ix, iy);
            if (l == -1) ++wall;
            else if (l == -2) ++outside;
            else labels.insert(l);
        }
    CHECK(labels == std::set<int>{0, 1});
    CHECK(wall > 0);
    CHECK(outside > 0);  // corners of the square are off the ball

    // Left and right half-planes get different labels.
    CHECK(cd.label_at(3, 16) != cd.label_at(28, 16));
    CHECK(cd.label_at(3, 16) >= 0);

    CellDecomposition z = cells(Polynomial::constant(0.0), 1.0, 16.0, 2, 32);
    CHECK(z.zero_polynomial);
    CHECK(z.cell_count == 0);
}

TEST_CASE("narrow walls are refused") {
    Polynomial wallp = Polynomial::affine3({1, 0, 0}, 0.0);
    // w below the grid spacing cannot certify wall membership.
    CHECK_THROWS_AS(cells(wallp, 0.1, 16.0, 2, 16), contract_error);
}

TEST_CASE("sturm certificate counts a cubic's roots exactly") {
    // P(x, y) = (x - 1/4)(x - 1/2)(x - 3/4) as a product of affine factors.
    Polynomial P = Polynomial::affine3({1, 0, 0}, 0.25)
                       .multiply(Polynomial::affine3({1, 0, 0}, 0.5))
                       .multiply(Polynomial::affine3({1, 0, 0}, 0.75));
    CellDecomposition cd = cells(P, 0.35, 4.0, 2, 32);
    // Walk straight along the x-axis through all three roots.
    IncidenceReport rep = tube_cell_incidence({-2, 0.01, 0}, {2, 0.01, 0}, cd, P);
    CHECK(rep.sturm_roots == 3);
    CHECK(rep.certified == 4);
    CHECK_FALSE(rep.restriction_zero);
    CHECK(rep.observed <= rep.certified);
    CHECK(rep.observed >= 2);

    // A segment that never crosses: certified counts one cell.
    IncidenceReport none = tube_cell_incidence({0.8, -1, 0}, {0.9, 1, 0}, cd, P);
    CHECK(none.sturm_roots == 0);
    CHECK(none.certified == 1);

    // A segment inside the zero set is flagged, not counted.
    IncidenceReport flat = tube_cell_incidence({0.25, -1, 0}, {0.25, 1, 0}, cd, P);
    CHECK(flat.restriction_zero);
    CHECK(flat.certified == 0);
}

TEST_CASE("random segments never beat the degree bound") {
    Polynomial P = Polynomial::affine3({1, 0, 0}, 0.0)
                       .multiply(Polynomial::affine3({0, 1, 0}, 0.0))
                       .multiply(Polynomial::affine3({1, 1, 0}, 1.0));
    CellDecomposition cd = cells(P, 0.6, 8.0, 2, 32);
    CounterRng rng(41, 0);
    for (int i = 0; i < 200; ++i) {
        Vec3 p0{rng.uniform(-7.0, 7.0), rng.uniform(-7.0, 7.0), 0};
        Vec3 p1{rng.uniform(-7.0, 7.0), rng.uniform(-7.0, 7.0), 0};
        IncidenceReport rep = tube_cell_incidence(p0, p1, cd, P);
        if (rep.restriction_zero) continue;
        CHECK(rep.certified <= P.degree() + 1);
        CHECK(rep.observed <= rep.certified);
    }
}

TEST_CASE("spread mass lands in the cellular case") {
    MassGrid mass = MassGrid::uniform(3, 4096.0, 40);
    double w = std::pow(4096.0, 0.5 + 0.001);
    w = std::max(w, mass.spacing * 1.0001);
    PartitionCaseResult res = partition_case(mass, 2, Variety::full_space(), w);
    CHECK(res.kind == PartitionCaseResult::Kind::Cellular);
    CHECK(res.total == doctest::Approx(mass.total()));
    CHECK(res.cellular_mass >= res.total / 2);
    CHECK(!res.kept_cells.empty());
    CHECK(res.band_lo > 0);
    CHECK(res.band_hi > res.band_lo);
    CHECK(res.y_flagged);  // plumbing hyperplane is always reported as such
    std::string txt = partition_report_text(res);
    CHECK(txt.find("cellular") != std::string::npos);
    CHECK(txt.find("y_invented") != std::string::npos);
}

TEST_CASE("slab mass lands in the algebraic case with a captured wall") {
    // Mass concentrated in a thin slab |x| <= thickness around the x2-x3 plane.
    int size = 40;
    double r = 4096.0;
    MassGrid mass = MassGrid::zeros(3, r, size);
    double thickness = 2 * mass.spacing;
    for (int iz = 0; iz < size; ++iz)
        for (int iy = 0; iy < size; ++iy)
            for (int ix = 0; ix < size; ++ix) {
                if (!mass.in_domain(ix, iy, iz)) continue;
                Vec3 c = mass.center(ix, iy, iz);
                if (std::abs(c[0]) <= thickness) mass.at(ix, iy, iz) = 1.0;
            }
    double w = std::max(std::pow(r, 0.5 + 0.001), mass.spacing * 1.0001);
    PartitionCaseResult res = partition_case(mass, 2, Variety::full_space(), w);
    CHECK(res.kind == PartitionCaseResult::Kind::Algebraic);
    CHECK(res.wall_mass > res.total / 2);
    CHECK(res.y_flagged);
    CHECK(res.y_mass_fraction > 0.5);
    CHECK(res.Y.dim == 2);
    // The invented hyperplane hugs the slab.
    CHECK(res.Y.dist({0, 100, 100}) <= 3 * mass.spacing);
    std::string txt = partition_report_text(res);
    CHECK(txt.find("algebraic") != std::string::npos);
}

TEST_CASE("algebraic-case hyperplane search stays inside the carrier") {
    // Mass on a slab inside the x1-x2 coordinate plane carrier.
    int size = 32;
    double r = 4096.0;
    MassGrid mass = MassGrid::zeros(3, r, size);
    for (int iz = 0; iz < size; ++iz)
        for (int iy = 0; iy < size; ++iy)
            for (int ix = 0; ix < size; ++ix) {
                if (!mass.in_domain(ix, iy, iz)) continue;
                Vec3 c = mass.center(ix, iy, iz);
                if (std::abs(c[2]) <= 2 * mass.spacing) mass.at(ix, iy, iz) = 1.0;
            }
    Variety carrier = Variety::affine_subspace({0, 0, 0}, {{1, 0, 0}, {0, 1, 0}});
    double w = std::max(std::pow(r, 0.5 + 0.001), mass.spacing * 1.0001);
    PartitionCaseResult res = partition_case(mass, 2, carrier, w);
    if (res.kind == PartitionCaseResult::Kind::Algebraic) {
        // Y's normal lies in the carrier's span: Y contains the x3 axis dir.
        CHECK(res.Y.dim == 2);
        bool contains_up = geometry::angle_to_subspace({0, 0, 1}, res.Y.basis) <= 1e-6;
        CHECK(contains_up);
    }
}

}  // TEST_SUITE
