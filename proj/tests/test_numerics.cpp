#include <doctest.h>

#include "conelab/numerics.hpp"
#include "conelab/rng.hpp"
#include "conelab/reports.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace conelab;

TEST_SUITE("numerics") {

TEST_CASE("exact rationals behave exactly") {
    Rat a(1, 3), b(1, 6);
    CHECK(a + b == Rat(1, 2));
    CHECK(Rat(1566, 573) == Rat(522, 191));  // canonical reduction
    CHECK(Rat(2) + Rat(420, 573) == Rat(522, 191));
    Rat big = 1;
    for (int i = 2; i <= 40; ++i) big *= Rat(2 * i, 2 * i + 1);
    Rat inv = 1;
    for (int i = 40; i >= 2; --i) inv *= Rat(2 * i + 1, 2 * i);
    CHECK(big * inv == Rat(1));
}

TEST_CASE("rational-to-float conversions keep precision") {
    Rat q(522, 191);
    CHECK(std::abs(to_double(q) - 522.0 / 191.0) <= 1e-15);
    long double ld = to_long_double(q);
    CHECK(std::abs((double)(ld - 522.0L / 191.0L)) <= 1e-18);
    // Huge numerator/denominator must not overflow on the way to double.
    Rat huge = 1;
    for (int i = 0; i < 40; ++i) huge *= Rat(1000000007);
    Rat ratio = huge / (huge + 1);
    CHECK(to_double(ratio) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("close and close_rel tolerances") {
    CHECK(close(1.0, 1.0 + 1e-13, 1e-12));
    CHECK_FALSE(close(1.0, 1.0 + 1e-11, 1e-12));
    CHECK(close_rel(1e6, 1e6 * (1 + 1e-13), 1e-12));
    CHECK_FALSE(close_rel(1e6, 1e6 * (1 + 1e-11), 1e-12));
    CHECK(close_rel(0.0, 0.0, 1e-12));
}

TEST_CASE("contract violations throw typed errors") {
    CHECK_THROWS_AS(require(false, "bad input"), contract_error);
    CHECK_NOTHROW(require(true, "fine"));
    try {
        require(false, "frequency spacing too coarse");
    } catch (const contract_error& e) {
        CHECK(std::string(e.what()).find("spacing") != std::string::npos);
    }
}

TEST_CASE("counter rng is deterministic and order-independent") {
    CounterRng r1(42, 7), r2(42, 7);
    for (int i = 0; i < 100; ++i) CHECK(r1.next_u64() == r2.next_u64());

    // Counter-based: the i-th draw depends only on (seed, stream, i).
    CounterRng a(5, 1), b(5, 1);
    double a0 = a.uniform(), a1 = a.uniform(), a2 = a.uniform();
    CHECK(b.uniform() == a0);
    CHECK(b.uniform() == a1);
    CHECK(b.uniform() == a2);
}

TEST_CASE("rng streams and splits are disjoint") {
    CounterRng base(9, 0);
    CounterRng other(9, 1);
    int same = 0;
    for (int i = 0; i < 64; ++i)
        if (base.next_u64() == other.next_u64()) ++same;
    CHECK(same == 0);

    CounterRng root(11, 0);
    CounterRng sa = root.split("module-a");
    CounterRng sb = root.split("module-b");
    CounterRng sa2 = CounterRng(11, 0).split("module-a");
    CHECK(sa.next_u64() == sa2.next_u64());  // label-stable
    CHECK(sa.next_u64() != sb.next_u64());
}

TEST_CASE("rng distributions hit their ranges") {
    CounterRng r(3, 3);
    double mn = 1e9, mx = -1e9, sum = 0;
    for (int i = 0; i < 4000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        mn = std::min(mn, u); mx = std::max(mx, u); sum += u;
    }
    CHECK(mn < 0.05);
    CHECK(mx > 0.95);
    CHECK(sum / 4000 == doctest::Approx(0.5).epsilon(0.05));

    for (int i = 0; i < 200; ++i) {
        double v = r.uniform(-2.0, 5.0);
        CHECK(v >= -2.0);
        CHECK(v < 5.0);
        std::size_t k = r.uniform_index(7);
        CHECK(k < 7);
        CHECK(std::isfinite(r.normal()));
    }
    double m2 = 0;
    for (int i = 0; i < 4000; ++i) { double g = r.normal(); m2 += g * g; }
    CHECK(m2 / 4000 == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("format_double round-trips") {
    for (double v : {0.1, 1.0 / 3.0, 2.5960716, -0.0, 1e-300, 6.02e23, -17.25}) {
        std::string s = reports::format_double(v);
        double back = std::stod(s);
        CHECK(back == v);
    }
    CHECK(reports::format_double(2.0) == "2");
}

TEST_CASE("csv escaping follows rfc quoting") {
    CHECK(reports::csv_escape("plain") == "plain");
    CHECK(reports::csv_escape("a,b") == "\"a,b\"");
    CHECK(reports::csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(reports::csv_escape("line\nbreak") == "\"line\nbreak\"");
}

TEST_CASE("csv writer emits header and quoted rows") {
    reports::CsvWriter w({"name", "value", "note"});
    w.row({"alpha", "1", "plain"});
    w.row({"beta", "2", "has,comma"});
    std::string s = w.str();
    std::istringstream is(s);
    std::string line;
    std::getline(is, line);
    CHECK(line == "name,value,note");
    std::getline(is, line);
    CHECK(line == "alpha,1,plain");
    std::getline(is, line);
    CHECK(line == "beta,2,\"has,comma\"");
    CHECK_THROWS_AS(w.row({"too", "short"}), contract_error);
}

TEST_CASE("json summary is versioned and stable") {
    reports::JsonSummary s("demo-tool");
    s.data()["zeta"] = 1;
    s.data()["alpha"] = 2.5;
    std::string j1 = s.str();
    CHECK(j1.find("\"format_version\"") != std::string::npos);
    CHECK(j1.find("\"tool\"") != std::string::npos);
    CHECK(j1.find("demo-tool") != std::string::npos);

    reports::JsonSummary t("demo-tool");
    t.data()["alpha"] = 2.5;
    t.data()["zeta"] = 1;
    // Key order in the source must not change the serialized bytes.
    CHECK(t.str() == j1);
}

TEST_CASE("key value log sections render") {
    reports::KeyValueLog log;
    log.section("first");
    log.put("answer", 42);
    log.put("name", "thing");
    std::string s = log.str();
    CHECK(s.find("first") != std::string::npos);
    CHECK(s.find("answer") != std::string::npos);
    CHECK(s.find("42") != std::string::npos);
}

TEST_CASE("text files round-trip through the filesystem") {
    namespace fs = std::filesystem;
    fs::path p = fs::temp_directory_path() / "conelab_numerics_roundtrip.txt";
    std::string body = "line one\nline \"two\", quoted\n";
    reports::write_text_file(p.string(), body);
    std::ifstream in(p);
    std::stringstream buf;
    buf << in.rdbuf();
    CHECK(buf.str() == body);
    fs::remove(p);
}

}  // TEST_SUITE
