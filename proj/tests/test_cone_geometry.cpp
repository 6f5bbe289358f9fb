#include <doctest.h>

#include "conelab/cone_geometry.hpp"
#include "conelab/rng.hpp"

#include <cmath>
#include <set>
#include <vector>

using namespace conelab;
using namespace conelab::geometry;

TEST_SUITE("cone_geometry") {

TEST_CASE("vector helpers satisfy the usual identities") {
    Vec3 a{1, 2, 3}, b{-2, 0.5, 4};
    CHECK(dot(a, b) == doctest::Approx(-2 + 1 + 12));
    CHECK(norm(Vec3{3, 4, 0}) == doctest::Approx(5));
    Vec3 c = cross(a, b);
    CHECK(dot(c, a) == doctest::Approx(0).epsilon(1e-12));
    CHECK(dot(c, b) == doctest::Approx(0).epsilon(1e-12));
    CHECK(norm(normalized(a)) == doctest::Approx(1).epsilon(1e-14));
    CHECK(norm(sub(add(a, b), b)) == doctest::Approx(norm(a)).epsilon(1e-12));
    CHECK(norm(scale(a, -2)) == doctest::Approx(2 * norm(a)));

    CHECK(angle_between(Vec3{1, 0, 0}, Vec3{0, 1, 0}) == doctest::Approx(kPi / 2));
    CHECK(angle_between(a, a) == doctest::Approx(0).epsilon(1e-7));
    CHECK(angle_between(a, scale(a, -1)) == doctest::Approx(kPi).epsilon(1e-7));

    std::vector<Vec3> xy = {{1, 0, 0}, {0, 1, 0}};
    CHECK(angle_to_subspace(Vec3{1, 1, 0}, xy) == doctest::Approx(0).epsilon(1e-12));
    CHECK(angle_to_subspace(Vec3{0, 0, 2}, xy) == doctest::Approx(kPi / 2));
    CHECK(angle_to_subspace(Vec3{1, 0, 1}, xy) == doctest::Approx(kPi / 4));
    CHECK(subspace_angle(xy, xy) == doctest::Approx(0).epsilon(1e-12));
}

TEST_CASE("ball membership with dilation") {
    Ball B{{1, 0, 0}, 2};
    CHECK(B.contains({2.5, 0, 0}));
    CHECK_FALSE(B.contains({3.5, 0, 0}));
    CHECK(B.contains({3.5, 0, 0}, 2));  // dilated radius 4
}

TEST_CASE("sector cover count, width, and membership") {
    auto cover = sector_cover(64, 3);
    CHECK((int)cover.size() == 51);  // ceil(2 pi sqrt(64)) = ceil(50.27)
    auto cover16 = sector_cover(16, 3);
    CHECK((int)cover16.size() == 26);
    auto cover256 = sector_cover(256, 3);
    CHECK((int)cover256.size() == 101);
    CHECK_THROWS_AS(sector_cover(2, 3), contract_error);

    for (const Sector& s : cover) {
        CHECK(2 * s.half_width <= 1.0 / 8.0 + 1e-12);
        CHECK(s.scale == doctest::Approx(64));
        CHECK(std::abs(norm2(s.xi()) - 1) <= 1e-12);
        // L and M are orthogonal, each of length sqrt(2).
        CHECK(std::abs(dot(s.L(), s.M())) <= 1e-12);
        CHECK(norm(s.L()) == doctest::Approx(std::sqrt(2.0)));
    }

    // Every annulus point lies in exactly one sector of the partition.
    CounterRng rng(1, 0);
    for (int i = 0; i < 500; ++i) {
        double rad = rng.uniform(1.001, 1.999);
        double ang = rng.uniform(0.0, 2 * kPi);
        Vec2 p{rad * std::cos(ang), rad * std::sin(ang)};
        int hits = 0;
        for (const Sector& s : cover)
            if (s.contains(p)) ++hits;
        CHECK(hits >= 1);
        CHECK(hits <= 2);  // 2 only on shared angular boundaries
    }
    // Points off the annulus are rejected.
    CHECK_FALSE(cover[0].contains(Vec2{0.5, 0}));
    CHECK_FALSE(cover[0].contains(Vec2{3.0, 0}));
}

TEST_CASE("sector angular hausdorff and direction samples") {
    auto cover = sector_cover(64, 3);
    CHECK(cover[0].angular_hausdorff(cover[0]) == doctest::Approx(0).epsilon(1e-12));
    double d01 = cover[0].angular_hausdorff(cover[1]);
    CHECK(d01 > 0);
    CHECK(d01 <= 3.0 / 8.0);
    auto dirs = cover[3].direction_samples(5);
    CHECK((int)dirs.size() == 5);
    for (const Vec3& v : dirs) {
        // Every sampled direction is a light direction (-xi, 1), |xi| = 1.
        CHECK(std::abs(v[0] * v[0] + v[1] * v[1] - 1) <= 1e-12);
        CHECK(v[2] == doctest::Approx(1));
    }
}

TEST_CASE("plate distance is exact") {
    Plate P;
    P.center = {0, 0};
    P.normal = {1, 0};
    P.half_side = 2;
    P.half_thickness = 0.5;
    CHECK(P.dist({0, 0}) == doctest::Approx(0));
    CHECK(P.dist({1.5, 0}) == doctest::Approx(1.0));   // beyond thickness
    CHECK(P.dist({0, 3.0}) == doctest::Approx(1.0));   // beyond side
    CHECK(P.dist({1.5, 3.0}) == doctest::Approx(std::sqrt(2.0)));
    auto bd = P.boundary_samples(4);
    CHECK(bd.size() >= 8);
    for (const Vec2& q : bd) CHECK(P.dist(q) <= 1e-9);
}

TEST_CASE("packet-scale tube geometry") {
    double r = 64, delta = 0.1;
    Tube t = make_tube(r, delta, 0.3, Vec2{5, -3});
    CHECK(t.length == doctest::Approx(r));
    CHECK(t.base.half_side == doctest::Approx(0.5 * std::pow(r, 0.5 + delta)));
    CHECK(t.base.half_thickness >= 0.5 * std::pow(r, delta / 2) - 1e-12);
    CHECK(t.fattening == doctest::Approx(std::pow(r, delta)));

    // The axis stays inside the tube for the whole parameter range.
    for (double s = -r; s <= r; s += r / 8) {
        Vec3 x = t.point_at(s);
        CHECK(t.core_dist(x) <= 1e-9);
        CHECK(t.contains(x));
    }
    // Far off-axis points are excluded but captured by dilation.  Push the
    // plate center three half-sides along the plate's long in-plane axis.
    Vec3 side{-t.base.normal[1], t.base.normal[0], 0};
    Vec3 off = add(t.point_at(0), scale(side, 3 * t.base.half_side));
    CHECK_FALSE(t.contains(off));
    CHECK(t.contains(off, 8));

    auto ax = t.axis_samples(8.0);
    CHECK((int)ax.size() >= 2 * 8);  // ~ 2 length / spacing
    for (const Vec3& x : ax) CHECK(t.core_dist(x) <= t.fattening + 1e-9);

    Tube tf = make_tube(r, delta, 0.3, Vec2{5, -3}, 2.5);
    CHECK(tf.base.half_thickness >= 1.25 - 1e-12);
}

TEST_CASE("polynomial evaluation, gradient, product") {
    Polynomial p = Polynomial::affine3(Vec3{1, 2, -1}, 0.5);  // x + 2y - z - 0.5
    CHECK(p.eval({1, 1, 1}) == doctest::Approx(1.5));
    Vec3 g = p.grad({0.2, -0.7, 3.0});
    CHECK(g[0] == doctest::Approx(1));
    CHECK(g[1] == doctest::Approx(2));
    CHECK(g[2] == doctest::Approx(-1));
    CHECK(p.degree() == 1);
    CHECK_FALSE(p.zero());
    CHECK(Polynomial::constant(0.0).zero());

    Polynomial q = Polynomial::affine3(Vec3{0, 1, 0}, -1.0);  // y + 1
    Polynomial pq = p.multiply(q);
    CHECK(pq.degree() == 2);
    for (double x : {0.0, 0.5, -1.2})
        CHECK(pq.eval({x, 2 * x, 1 - x}) ==
              doctest::Approx(p.eval({x, 2 * x, 1 - x}) * q.eval({x, 2 * x, 1 - x})));
}

TEST_CASE("line restriction matches direct evaluation, float and exact") {
    Polynomial p = Polynomial::affine3(Vec3{1, 0, 0}, 0.0).multiply(
        Polynomial::affine3(Vec3{0, 1, 1}, 2.0));
    Vec3 base{0.5, -1, 2}, dir{1, 2, -1};
    auto coeffs = p.restrict_line(base, dir);
    CHECK((int)coeffs.size() == p.degree() + 1);
    for (double t : {-1.0, 0.0, 0.7, 2.3}) {
        double horner = 0;
        for (int i = (int)coeffs.size() - 1; i >= 0; --i) horner = horner * t + coeffs[i];
        Vec3 x = add(base, scale(dir, t));
        CHECK(horner == doctest::Approx(p.eval(x)).epsilon(1e-10));
    }

    std::array<Rat, 3> rbase{Rat(1, 2), Rat(-1), Rat(2)};
    std::array<Rat, 3> rdir{Rat(1), Rat(2), Rat(-1)};
    auto exact = p.restrict_line_exact(rbase, rdir);
    REQUIRE(exact.size() == coeffs.size());
    for (std::size_t i = 0; i < exact.size(); ++i)
        CHECK(std::abs(to_double(exact[i]) - coeffs[i]) <= 1e-9);
}

TEST_CASE("affine variety distances are exact") {
    Variety plane = Variety::affine_subspace({0, 0, 1}, {{1, 0, 0}, {0, 1, 0}});
    CHECK(plane.dim == 2);
    CHECK(plane.dist({3, -4, 5}) == doctest::Approx(4));
    CHECK(plane.dist({100, 100, 1}) == doctest::Approx(0));
    auto tb = plane.tangent_basis({0, 0, 1});
    REQUIRE((int)tb.size() == 2);
    CHECK(angle_to_subspace(Vec3{1, 1, 0}, tb) == doctest::Approx(0).epsilon(1e-12));

    Variety line = Variety::affine_subspace({0, 0, 0}, {normalized({1, 1, 0})});
    CHECK(line.dim == 1);
    CHECK(line.dist({1, -1, 0}) == doctest::Approx(std::sqrt(2.0)));
    CHECK(Variety::full_space().dist({7, 7, 7}) == doctest::Approx(0));

    auto pts = plane.samples(Ball{{0, 0, 1}, 5}, 1.0);
    CHECK(pts.size() >= 25);
    for (const Vec3& x : pts) {
        CHECK(plane.dist(x) <= 1e-9);
        CHECK(norm(sub(x, Vec3{0, 0, 1})) <= 5 + 1e-9);
    }
}

TEST_CASE("zero-set variety distance and projection near a sphere") {
    Polynomial sphere;  // x^2 + y^2 + z^2 - 1
    sphere.terms = {{1.0, {2, 0, 0}}, {1.0, {0, 2, 0}}, {1.0, {0, 0, 2}}, {-1.0, {0, 0, 0}}};
    Variety V = Variety::zero_set({sphere});
    CHECK(V.dim == 2);
    CHECK(V.degree() == 2);
    CHECK(V.dist({2, 0, 0}) == doctest::Approx(1).epsilon(1e-6));
    auto proj = V.project({0, 3, 0});
    REQUIRE(proj.has_value());
    CHECK(norm(*proj) == doctest::Approx(1).epsilon(1e-8));
    auto tb = V.tangent_basis({1, 0, 0});
    REQUIRE((int)tb.size() == 2);
    // Tangent plane at (1,0,0) is orthogonal to the radial gradient.
    for (const Vec3& v : tb) CHECK(std::abs(dot(v, Vec3{1, 0, 0})) <= 1e-8);
    auto pts = V.samples(Ball{{0, 0, 0}, 2}, 0.5);
    CHECK(!pts.empty());
    for (const Vec3& x : pts) CHECK(std::abs(norm(x) - 1) <= 1e-6);
}

TEST_CASE("directed and hausdorff distances") {
    std::vector<Vec3> A = {{0, 0, 0}, {1, 0, 0}};
    std::vector<Vec3> B = {{0, 0, 0}};
    CHECK(directed_dist(A, B) == doctest::Approx(1));
    CHECK(directed_dist(B, A) == doctest::Approx(0));
    CHECK(hausdorff_dist(A, B) == doctest::Approx(1));
    CHECK_THROWS_AS(directed_dist(A, {}), contract_error);
}

TEST_CASE("multigrain nesting check accepts a line-in-plane tower") {
    double r_fine = 64, r_coarse = 256;
    Variety line = Variety::affine_subspace({0, 0, 0}, {normalized({-1, 0, 1})});
    Variety plane = Variety::affine_subspace({0, 0, 0},
        {normalized({-1, 0, 1}), {0, -1, 0}});
    Multigrain good;
    good.grains = {{line, Ball{{0, 0, 0}, r_fine}}, {plane, Ball{{0, 0, 0}, r_coarse}}};
    good.deltas = {0.1, 0.1};
    CHECK(good.check_nesting(40, CounterRng(2, 0)));

    // A far-away parallel plane cannot contain the line's neighborhood.
    Multigrain bad = good;
    bad.grains[1].Z = Variety::affine_subspace({0, 5000, 0},
        {normalized({-1, 0, 1}), normalized({1, 0, 1})});
    CHECK_FALSE(bad.check_nesting(40, CounterRng(2, 0)));
}

TEST_CASE("tangency predicate separates along-plane from crossing tubes") {
    double r = 256, delta_m = 0.1;
    // Plane spanned by the light direction L(0) and the y-axis.
    Variety plane = Variety::affine_subspace({0, 0, 0},
        {normalized({-1, 0, 1}), {0, 1, 0}});
    Ball B{{0, 0, 0}, r};
    Tube along = make_tube(r, delta_m, 0.0, Vec2{0, 0});  // axis = L(0) in the plane
    TangencyResult tr = is_tangent_ex(along, plane, B, delta_m);
    CHECK(tr.determinate);
    CHECK(tr.tangent);
    CHECK(tr.worst_dist <= tr.dist_bound);
    CHECK(tr.worst_angle <= tr.angle_bound);
    CHECK(tr.dist_bound == doctest::Approx(std::pow(r, 0.5 + delta_m)));

    // A tube pointing the opposite angular way crosses the plane steeply.
    Tube across = make_tube(r, delta_m, kPi / 2, Vec2{0, 0});
    CHECK_FALSE(is_tangent(across, plane, B, delta_m));
}

TEST_CASE("transverse intersections cluster into bounded balls") {
    double r = 256, alpha = 0.5;
    Variety wall = Variety::affine_subspace({0, 0, 0}, {{0, 1, 0}, {0, 0, 1}});  // x = 0 plane
    Tube t = make_tube(r, 0.1, 0.0, Vec2{0, 0});  // axis L(0) = (-1,0,1)/.. crosses x=0
    auto clusters = transverse_intersection_clusters(t, wall, alpha);
    CHECK(!clusters.empty());
    for (const Ball& b : clusters) CHECK(b.radius <= 4.0 * r / alpha + 1e-6);
    // The crossing near the origin is represented.
    bool near_origin = false;
    for (const Ball& b : clusters)
        if (norm(b.center) <= b.radius + 60) near_origin = true;
    CHECK(near_origin);
}

TEST_CASE("serialization round-trips preserve fields") {
    auto cover = sector_cover(64, 3);
    Sector s = cover[7];
    auto s2 = parse_sector(to_line(s));
    REQUIRE(s2.has_value());
    CHECK(s2->scale == doctest::Approx(s.scale));
    CHECK(s2->center_angle == doctest::Approx(s.center_angle));
    CHECK(s2->half_width == doctest::Approx(s.half_width));

    Tube t = make_tube(64, 0.1, 1.1, Vec2{3, 4});
    t.v_index = {2, -5};
    t.l_index = 9;
    auto t2 = parse_tube(to_line(t));
    REQUIRE(t2.has_value());
    CHECK(t2->length == doctest::Approx(t.length));
    CHECK(t2->base.center[0] == doctest::Approx(t.base.center[0]));
    CHECK(t2->base.half_thickness == doctest::Approx(t.base.half_thickness));
    CHECK(t2->v_index == t.v_index);
    CHECK(t2->l_index == t.l_index);

    Variety plane = Variety::affine_subspace({1, 2, 3}, {{1, 0, 0}, {0, 0, 1}});
    auto v2 = parse_variety(to_line(plane));
    REQUIRE(v2.has_value());
    CHECK(v2->dim == 2);
    CHECK(v2->dist({1, 7, 3}) == doctest::Approx(5));

    Polynomial sphere;
    sphere.terms = {{1.0, {2, 0, 0}}, {1.0, {0, 2, 0}}, {1.0, {0, 0, 2}}, {-4.0, {0, 0, 0}}};
    Variety zs = Variety::zero_set({sphere});
    auto z2 = parse_variety(to_line(zs));
    REQUIRE(z2.has_value());
    CHECK(z2->degree() == 2);
    CHECK(z2->dist({3, 0, 0}) == doctest::Approx(1).epsilon(1e-5));

    Grain g{plane, Ball{{1, 1, 1}, 32}};
    auto g2 = parse_grain(to_line(g));
    REQUIRE(g2.has_value());
    CHECK(g2->ball.radius == doctest::Approx(32));
    CHECK(g2->Z.dim == 2);

    CHECK_FALSE(parse_sector("not a sector").has_value());
    CHECK_FALSE(parse_tube("garbage 1 2 3").has_value());
    CHECK_FALSE(parse_variety("").has_value());
}

}  // TEST_SUITE
