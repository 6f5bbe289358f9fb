#include <doctest.h>

#include "conelab/structure_driver.hpp"

#include <cmath>
#include <string>
#include <vector>

using namespace conelab;
using namespace conelab::driver;
using geometry::Ball;
using geometry::Variety;

namespace {

Grain full_grain(double r) {
    return Grain{Variety::full_space(), Ball{{0, 0, 0}, r}};
}

std::vector<DriverPacket> axis_packets(double r, int count) {
    std::vector<DriverPacket> out;
    for (int i = 0; i < count; ++i) {
        double phi = 2 * kPi * i / count;
        DriverPacket p;
        p.tube = geometry::make_tube(r, 1.0 / 1024.0, phi, {0, 0}, 1.0);
        p.norm2 = 1.0;
        p.theta = i;
        out.push_back(p);
    }
    return out;
}

}  // namespace

TEST_SUITE("structure_driver") {

TEST_CASE("delta set follows the epsilon ladder") {
    DeltaSet ds = delta_set(0.5, 3);
    CHECK(ds.delta == doctest::Approx(0.25));
    REQUIRE((int)ds.delta_dim.size() == 4);
    REQUIRE((int)ds.tilde_dim.size() == 3);
    // Rung 0 of the ladder at the top dimension: 0.5^10 exactly.
    CHECK(ds.delta_dim[3] == doctest::Approx(9.765625e-4).epsilon(1e-12));
    // Dimension ordering: smaller dimension, smaller parameter.
    CHECK(ds.delta_dim[2] == doctest::Approx(7.888609052e-31).epsilon(1e-9));
    CHECK(ds.delta_dim[2] < ds.delta_dim[3]);
    // Link parameter solves (1 - t)(1/2 + d3) = 1/2 + d2.
    double d3 = ds.delta_dim[3], d2 = ds.delta_dim[2];
    double expect = (d3 - d2) / (0.5 + d3);
    CHECK(ds.tilde_dim[2] == doctest::Approx(expect).epsilon(1e-9));
    CHECK(ds.tilde_dim[2] >= d3 / 2);
    CHECK(ds.tilde_dim[2] <= 2 * d3);
}

TEST_CASE("vanishing mass terminates immediately") {
    DriverParams par;
    MassGrid empty = scenario_mass("vanishing", 64.0, 24);
    CHECK(empty.total() == 0.0);
    Alg1Report rep = alg1_run(full_grain(64.0), empty, {}, par);
    CHECK(rep.terminal == "tiny");
    CHECK(rep.mass_vanished);
    CHECK(rep.steps == 0);
    CHECK(rep.history.empty());
    CHECK(rep.p1_mass_fraction == 0.0);
    CHECK(rep.recurrences_ok);
    CHECK(rep.history_bounds_ok);
    CHECK(rep.transcript.find("[tiny]") != std::string::npos);
    CHECK(rep.transcript.find("mass_vanished") != std::string::npos);
}

TEST_CASE("cellular recurrences after two rounds at large scale") {
    DriverParams par;
    par.max_steps = 2;
    par.grid_size = 40;
    MassGrid mass = scenario_mass("spread", 4096.0, 40);
    Alg1Report rep = alg1_run(full_grain(4096.0), mass, {}, par);
    REQUIRE(rep.history == "cc");
    CHECK(rep.terminal == "incomplete");
    CHECK(rep.count_c == 2);
    CHECK(rep.count_a == 0);
    // rho_2 = r / 4 after two cellular halvings.
    CHECK(rep.rho_final == doctest::Approx(1024.0).epsilon(1e-12));
    // All four coefficients sit at d^{2 delta} = sqrt(2).
    double root2 = std::sqrt(2.0);
    CHECK(rep.CI == doctest::Approx(root2).epsilon(1e-9));
    CHECK(rep.CII == doctest::Approx(root2).epsilon(1e-9));
    CHECK(rep.CIII == doctest::Approx(root2).epsilon(1e-9));
    CHECK(rep.CIV == doctest::Approx(root2).epsilon(1e-9));
    CHECK(rep.A_final == doctest::Approx(9.0));
    CHECK(rep.recurrences_ok);
    CHECK(rep.history_bounds_ok);
    CHECK(rep.total_final <= rep.total0 * (1 + 1e-12));
    CHECK(rep.p1_mass_fraction > 0);
    CHECK(rep.p3_max_cell_fraction <= 1.0 + 1e-12);
    CHECK(rep.transcript.find("branch=c") != std::string::npos);
}

TEST_CASE("algebraic recurrence on the first fat-wall round") {
    DriverParams par;
    par.max_steps = 1;
    MassGrid mass = scenario_mass("spread", 64.0, 48);
    Alg1Report rep = alg1_run(full_grain(64.0), mass, {}, par);
    REQUIRE(rep.history.size() == 1);
    REQUIRE(rep.history[0] == 'a');
    CHECK(rep.count_a == 1);
    DeltaSet ds = delta_set(par.epsilon, par.n);
    double dt = ds.tilde_dim[2];  // links the top dimension to the next
    CHECK(rep.rho_final == doctest::Approx(std::pow(64.0, 1 - dt)).epsilon(1e-12));
    CHECK(rep.A_final == doctest::Approx(3.0));  // A / 3
    // C^II = d^{n (1 + delta)} = 2^{3.75}.
    CHECK(rep.CII == doctest::Approx(std::pow(2.0, 3.75)).epsilon(1e-9));
    // C^I = (ln r)^{1 + delta}.
    CHECK(rep.CI == doctest::Approx(std::pow(std::log(64.0), 1.25)).epsilon(1e-9));
    // C^III = C^IV = exp(Cbar delta_m ln r + delta ln d).
    double d3 = ds.delta_dim[3];
    double ciii = std::exp(10.0 * d3 * std::log(64.0) + 0.25 * std::log(2.0));
    CHECK(rep.CIII == doctest::Approx(ciii).epsilon(1e-9));
    CHECK(rep.CIV == doctest::Approx(rep.CIII).epsilon(1e-12));
    CHECK(rep.recurrences_ok);
    CHECK(rep.transcript.find("branch=a") != std::string::npos);
}

TEST_CASE("full runs keep every tracked identity") {
    for (const char* scen : {"spread", "slab", "line"}) {
        DriverParams par;
        par.grid_size = 32;
        par.max_steps = 16;
        par.max_grains = 6;
        MassGrid mass = scenario_mass(scen, 4096.0, 32);
        Alg1Report rep = alg1_run(full_grain(4096.0), mass, {}, par);
        INFO("scenario ", scen, " history ", rep.history, " terminal ", rep.terminal);
        CHECK(rep.recurrences_ok);
        CHECK(rep.history_bounds_ok);
        CHECK(rep.terminal != "aborted");
        CHECK(rep.total_final <= rep.total0 * (1 + 1e-12));
        CHECK(rep.p1_mass_fraction <= 1 + 1e-12);
        CHECK(rep.steps >= 1);
        CHECK(rep.transcript.find("alg1 done") != std::string::npos);
        if (rep.terminal == "tang") {
            CHECK(rep.has_Y);
            CHECK(!rep.grains.empty());
            CHECK(rep.grains.size() == rep.grain_mass.size());
            CHECK(rep.grains.size() == rep.grain_packets.size());
            double gm = 0;
            for (double m : rep.grain_mass) gm += m;
            CHECK(gm <= rep.total_final * (1 + 1e-9));
            for (const Grain& g : rep.grains) {
                CHECK(g.Z.dim < 3);
                CHECK(g.ball.radius > 0);
            }
        } else {
            CHECK(!rep.cells.empty());
        }
    }
}

TEST_CASE("packets ride along and respect the crossing bound") {
    DriverParams par;
    par.grid_size = 40;
    par.max_steps = 4;
    MassGrid mass = scenario_mass("spread", 4096.0, 40);
    auto packets = axis_packets(4096.0, 12);
    Alg1Report rep = alg1_run(full_grain(4096.0), mass, packets, par);
    CHECK(rep.count_c >= 1);
    CHECK(rep.crossing_bound >= 2);
    CHECK(rep.cells_per_packet_max >= 1);
    CHECK(rep.cells_per_packet_max <= rep.crossing_bound);
    CHECK(rep.p5_packet_survival >= 0.0);
    CHECK(rep.p5_packet_survival <= 1.0 + 1e-9);
    CHECK(rep.p2_norm_growth > 0);
    CHECK(rep.p4_max_sector_fraction <= 1.0 + 1e-9);
}

TEST_CASE("scenario masses have the expected supports") {
    MassGrid spread = scenario_mass("spread", 256.0, 24);
    MassGrid slab = scenario_mass("slab", 256.0, 24);
    MassGrid pl = scenario_mass("plane-line", 256.0, 24);
    MassGrid line = scenario_mass("line", 256.0, 24);
    MassGrid gen = scenario_mass("generic", 256.0, 24, 5);
    CHECK(spread.total() > slab.total());
    CHECK(slab.total() > line.total());
    CHECK(line.total() > 0);
    CHECK(slab.total() == doctest::Approx(pl.total()));
    CHECK(gen.total() > 0);
    MassGrid gen2 = scenario_mass("generic", 256.0, 24, 5);
    CHECK(gen2.total() == gen.total());
    CHECK_THROWS_AS(scenario_mass("no-such", 64.0, 8), contract_error);

    // Slab support hugs the x1 = 0 plane.
    double off_plane = 0;
    for (int iz = 0; iz < 24; ++iz)
        for (int iy = 0; iy < 24; ++iy)
            for (int ix = 0; ix < 24; ++ix)
                if (std::abs(slab.center(ix, iy, iz)[0]) > 60.0)
                    off_plane += slab.at(ix, iy, iz);
    CHECK(off_plane == 0.0);
}

TEST_CASE("level recursion on the plane-line scenario reaches a tangential family") {
    DriverParams par;
    par.grid_size = 32;
    par.max_steps = 12;
    par.max_grains = 6;
    MassGrid mass = scenario_mass("plane-line", 64.0, 32);
    Alg2Report rep = alg2_run(mass, {}, 64.0, par);
    CHECK(rep.m_final == 2);
    CHECK(rep.transcript.find("[tang]") != std::string::npos);
    CHECK(!rep.final_family.empty());
    CHECK(rep.levels.size() >= 2);
    CHECK(rep.levels[0].branch == "descend");
    CHECK(rep.levels[0].D_value >= 1.0);
    CHECK(rep.dual_route_ok);
    for (const Alg1Report& r : rep.runs) {
        CHECK(r.recurrences_ok);
        CHECK(r.history_bounds_ok);
    }
    // The recorded tower is coarse at the back, finer at the front.
    for (const Multigrain& mg : rep.final_family) {
        REQUIRE(mg.grains.size() >= 2);
        CHECK(mg.grains.front().ball.radius <= mg.grains.back().ball.radius);
        CHECK(mg.grains.back().Z.dim == 3);
    }
}

TEST_CASE("generic mass keeps the growth slack small") {
    DriverParams par;
    par.grid_size = 32;
    par.max_steps = 12;
    par.max_grains = 6;
    MassGrid mass = scenario_mass("generic", 64.0, 32, 3);
    Alg2Report rep = alg2_run(mass, {}, 64.0, par);
    CHECK(rep.mass_total0 > 0);
    CHECK(rep.m_final >= 1);
    CHECK(rep.m_final <= 3);
    CHECK(rep.p2_slack <= 10.0);
    CHECK(rep.dual_route_ok);
    CHECK(rep.transcript.find("alg2 terminal") != std::string::npos);
}

TEST_CASE("empty mass stops the recursion at the top level") {
    DriverParams par;
    MassGrid mass = scenario_mass("vanishing", 64.0, 16);
    Alg2Report rep = alg2_run(mass, {}, 64.0, par);
    CHECK(rep.m_final == 3);
    CHECK_FALSE(rep.vanishing_violation);
    REQUIRE(rep.levels.size() == 1);
    CHECK(rep.levels[0].branch == "terminate");
    REQUIRE(!rep.runs.empty());
    CHECK(rep.runs[0].terminal == "tiny");
    CHECK(rep.dual_route_ok);  // neutral padding on both routes
    CHECK(rep.p2_slack == doctest::Approx(0.0));
}

TEST_CASE("broad-norm mass of a one-sector function is empty") {
    freq::GridSpec g = freq::GridSpec::standard(1.0 / 16);
    freq::AnnulusFunction f = freq::AnnulusFunction::smooth_annulus(g);
    // Keep only one narrow angular window: every cap but one is empty.
    for (int iy = 0; iy < g.n; ++iy)
        for (int ix = 0; ix < g.n; ++ix) {
            double x = g.coord(ix), y = g.coord(iy);
            double ang = std::atan2(y, x);
            if (ang < 0) ang += 2 * kPi;
            if (ang > 0.2) f.at(ix, iy) = 0;
        }
    MassGrid mass = broad_mass_grid(f, 16.0, 2, 4.0, 16, 1, 400, 2.733);
    CHECK(mass.total() == 0.0);

    DriverParams par;
    Alg1Report rep = alg1_run(full_grain(16.0), mass, {}, par);
    CHECK(rep.terminal == "tiny");
    CHECK(rep.mass_vanished);
}

}  // TEST_SUITE
