#include <doctest.h>

#include "conelab/exponents.hpp"

#include <cmath>
#include <vector>

using namespace conelab;
using namespace conelab::exponents;

TEST_SUITE("exponents") {

TEST_CASE("broad threshold frozen values") {
    // n=5, k=2: 2 + 12/(15 + 2*(8/9)*(6/7)) = 2 + 420/573 = 522/191.
    CHECK(p_broad(5, 2) == Rat(1566, 573));
    CHECK(p_broad(5, 2) == Rat(522, 191));
    CHECK(p_broad(5, 2) == Rat(2) + Rat(420, 573));
    // n=4, k=2: product has the single factor 4/5.
    CHECK(p_broad(4, 2) == Rat(62, 21));
    // n=5, k=3: product has the single factor 6/7.
    CHECK(p_broad(5, 3) == Rat(2) + Rat(12, Rat(15) + Rat(4) * Rat(6, 7)));
    CHECK_THROWS_AS(p_broad(5, 1), contract_error);
    CHECK_THROWS_AS(p_broad(5, 4), contract_error);
    CHECK_THROWS_AS(p_broad(3, 2), contract_error);
}

TEST_CASE("broad threshold is decreasing in n at fixed k") {
    Rat prev = p_broad(4, 2);
    for (int n = 5; n <= 40; ++n) {
        Rat cur = p_broad(n, 2);
        CHECK(cur < prev);
        CHECK(cur > Rat(2));
        prev = cur;
    }
}

TEST_CASE("reduction threshold frozen values") {
    CHECK(p_reduction(5, 2) == Rat(8, 3));
    CHECK(p_reduction(5, 3) == Rat(8, 3));
    CHECK(p_reduction(8, 4) == Rat(2) + Rat(4, 11));
    CHECK(p_reduction(10, 7) == Rat(2) + Rat(4, 12));
    CHECK_THROWS_AS(p_reduction(5, 4), contract_error);
}

TEST_CASE("comparison baseline frozen values") {
    CHECK(ow_baseline(3) == Rat(4));
    CHECK(ow_baseline(4) == Rat(3));                // 24/8
    CHECK(ow_baseline(5) == Rat(8, 3));             // 32/12
    CHECK(ow_baseline(6) == Rat(18, 7));            // 36/14
    CHECK(ow_baseline(7) == Rat(44, 18));
    // Tends to 2 from above.
    CHECK(ow_baseline(200) > Rat(2));
    CHECK(ow_baseline(200) < Rat(21, 10));
}

TEST_CASE("small-parameter ladder rungs and collapse") {
    DeltaLadder lad = delta_ladder(0.5, 3);
    REQUIRE(lad.log10_delta.size() == 4);
    // delta_0 = 0.5^10 = 1/1024 exactly.
    REQUIRE(lad.has_value[0]);
    CHECK(std::abs(to_double(lad.value[0]) - 9.765625e-4) <= 1e-18);
    REQUIRE(lad.has_value[1]);
    CHECK(to_double(lad.value[1]) == doctest::Approx(7.888609052e-31).epsilon(1e-9));
    // Rung 2 is ~1e-301: representable in double only barely, exact in log10.
    CHECK((double)lad.log10_delta[2] == doctest::Approx(10.0 * 10.0 * 10.0 * std::log10(0.5)).epsilon(1e-12));
    CHECK((double)lad.log10_delta[3] == doctest::Approx(1e4 * std::log10(0.5)).epsilon(1e-12));
    CHECK((double)lad.log10_final == doctest::Approx(1e5 * std::log10(0.5)).epsilon(1e-12));
    // log10 route and linear route agree where both exist.
    for (int j = 0; j <= 1; ++j) {
        double lin = std::log10(to_double(lad.value[j]));
        CHECK(lin == doctest::Approx((double)lad.log10_delta[j]).epsilon(1e-12));
    }
}

TEST_CASE("ladder tilde solves the closure identity") {
    DeltaLadder lad = delta_ladder(0.5, 3);
    for (int j = 0; j <= 1; ++j) {
        BigFloat dt = lad.tilde(j);
        BigFloat dj = lad.value[j], dj1 = lad.value[j + 1];
        BigFloat lhs = (BigFloat(1) - dt) * (BigFloat(1) / 2 + dj);
        BigFloat rhs = BigFloat(1) / 2 + dj1;
        CHECK(to_double(abs(lhs - rhs)) <= 1e-40);
        // Sandwich delta_j/2 <= tilde_j <= 2 delta_j.
        CHECK(dt >= dj / 2);
        CHECK(dt <= dj * 2);
    }
    CHECK(to_double(lad.tilde(0)) == doctest::Approx(1.9495e-3).epsilon(1e-3));
}

TEST_CASE("threshold optimizer matches the radical oracle") {
    ThresholdOptimum opt = optimize_threshold();
    // Cardano solution of 2u^3 + 3u^2 - 2 = 0 (depressed via u = w - 1/2):
    // w^3 - (3/4) w - 3/4 = 0 picked on the positive branch.
    long double s = std::sqrt(2.0L);
    long double u_oracle = std::cbrt((double)(0.375L + 0.25L * s)) +
                           std::cbrt((double)(0.375L - 0.25L * s)) - 0.5L;
    CHECK(std::abs((double)(opt.u - u_oracle)) <= 1e-10);
    CHECK(std::abs((double)(opt.v - opt.u * opt.u)) <= 1e-15);
    CHECK(std::abs((double)(opt.lambda - 4.0L / (2.0L - opt.v))) <= 1e-12);
    // Frozen digits.
    CHECK(std::abs((double)opt.u - 0.6776507) <= 2e-6);
    CHECK(std::abs((double)opt.lambda - 2.5960716) <= 2e-6);
    // The optimum equalizes the two asymptotic coefficient families.
    long double cb = 6.0L / (2.0L + std::pow((double)opt.v, 1.5));
    long double cr = 4.0L / (2.0L - opt.v);
    CHECK(std::abs((double)(cb - cr)) <= 1e-9);
    CHECK(opt.iterations > 0);
}

TEST_CASE("optimal threshold per n and the improvement onset") {
    OptimalK four = optimal_threshold(4);
    CHECK(four.k_star == 2);
    CHECK(four.p_threshold == Rat(3));  // max(62/21, 3)
    CHECK(four.baseline == Rat(3));
    CHECK_FALSE(four.improved);
    CHECK_THROWS_AS(optimal_threshold(3), contract_error);

    ImprovementSweep sweep = improvement_sweep(60);
    CHECK(sweep.n0 == 14);
    REQUIRE((int)sweep.rows.size() == 57);
    for (const OptimalK& row : sweep.rows) {
        if (row.n >= sweep.n0) CHECK(row.improved);
        // Reported threshold really is the max at k_star ...
        Rat mx = p_broad(row.n, row.k_star);
        if (p_reduction(row.n, row.k_star) > mx) mx = p_reduction(row.n, row.k_star);
        CHECK(row.p_threshold == mx);
        // ... and no other k does strictly better.
        for (int k = 2; k <= row.n - 2; ++k) {
            Rat cand = p_broad(row.n, k);
            if (p_reduction(row.n, k) > cand) cand = p_reduction(row.n, k);
            CHECK(cand >= row.p_threshold);
        }
    }
    CHECK_FALSE(sweep.rows[13 - 4].improved);  // n = 13 is not yet improved
}

TEST_CASE("induction ladder closes exactly") {
    for (auto [n, m] : std::vector<std::pair<int, int>>{{4, 2}, {5, 2}, {5, 3}, {8, 3}, {12, 5}, {30, 2}}) {
        CriticalLadder lad = critical_ladder(n, m);
        // Base weights and exponents.
        CHECK(lad.gamma_at(m) == Rat(1, 2 * m + 1));
        CHECK(lad.p_at(m) == Rat(2) + Rat(2, m - 1));
        CHECK(lad.p_at(n) == p_broad(n, m));
        // Weights positive, partial sums increasing to sigma_n.
        Rat sum = 0;
        for (int j = m; j <= n; ++j) {
            CHECK(lad.gamma_at(j) > Rat(0));
            sum += lad.gamma_at(j);
            CHECK(lad.sigma_at(j) == sum);
        }
        // Closed form for the partial sums on the ordinary rungs; the top
        // two rungs are budget rungs chosen so the weights sum to one.
        for (int j = m; j <= n - 2; ++j)
            CHECK(lad.sigma_at(j) == sigma_closed_form(m, j));
        CHECK(lad.sigma_at(n) == Rat(1));
        CHECK(lad.gamma_at(n - 1) ==
              (Rat(1, 2) - lad.sigma_at(n - 2)) / Rat(n - 1));
        // Defect functionals vanish identically, as exact rationals.
        for (int j = m; j <= n - 1; ++j) CHECK(lad.X(j) == Rat(0));
        for (int j = m - 1; j <= n - 1; ++j) CHECK(lad.Y(j) == Rat(0));
        // Interpolation weights pair up.
        for (int i = m; i <= n; ++i)
            CHECK(lad.alpha_at(i) + lad.beta_at(i) >= Rat(0));
    }
    CHECK_THROWS_AS(critical_ladder(5, 4), contract_error);
    CHECK_THROWS_AS(critical_ladder(4, 1), contract_error);
}

TEST_CASE("partial-sum constraints hold through n = 60") {
    for (int n = 4; n <= 60; ++n)
        for (int m = 2; m <= n - 2; ++m) {
            CHECK(sigma_closed_form(m, n - 2) < Rat(1, 2));
            CHECK(sigma_closed_form(m, n - 1) < Rat(1));
        }
}

TEST_CASE("scale-degree factor closed form") {
    int m = 2, n = 5;
    // Indexed m-1..n-1 = 1..4 -> 4 entries; beta indexed m..n = 2..5 -> 4 entries.
    std::vector<long double> r = {1.0L, 1.0L, 1.0L, 1.0L};
    std::vector<long double> d = {1.0L, 1.0L, 1.0L, 1.0L};
    std::vector<long double> beta = {0.1L, 0.2L, 0.3L, 0.4L};
    CHECK(std::abs((double)log_M_factor(r, d, beta, 0.25L, m, n)) <= 1e-18);

    // One active slot: r[i0]=16, D[i0]=4 at position i0 = m (=index 1).
    std::vector<long double> r2 = r, d2 = d;
    r2[1] = 16.0L; d2[1] = 4.0L;
    long double delta = 0.25L;
    long double expect = delta * 0.0L  // D[m-1] = 1
        + (n - m) * delta * std::log(4.0L)
        + (beta[1] - beta[0]) / 2 * std::log(16.0L)
        + (beta[1] - beta[0]) / 2 * std::log(4.0L);
    long double got = log_M_factor(r2, d2, beta, delta, m, n);
    CHECK(std::abs((double)(got - expect)) <= 1e-15);
    CHECK(std::abs((double)(M_factor(r2, d2, beta, delta, m, n) - std::exp((double)got))) <= 1e-12);

    std::vector<long double> bad = r;
    bad[0] = 0.5L;  // entries below 1 are rejected
    CHECK_THROWS_AS(log_M_factor(bad, d, beta, delta, m, n), contract_error);
}

}  // TEST_SUITE
