// End-to-end tests that drive the installed command-line binary the way a
// user would: through argv, config files, exit codes, and report bundles.
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

namespace {

namespace fs = std::filesystem;

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr, merged
};

fs::path scratch_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() /
                 ("conelab-harness-" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  fs::path out = scratch_dir() / ("cli-" + std::to_string(counter++) + ".txt");
  std::string cmd = std::string("\"") + CONELAB_CLI_PATH + "\" " + args +
                    " > \"" + out.string() + "\" 2>&1";
  int raw = std::system(cmd.c_str());
  CliResult res;
  if (raw != -1 && WIFEXITED(raw)) res.exit_code = WEXITSTATUS(raw);
  std::ifstream in(out);
  std::ostringstream buf;
  buf << in.rdbuf();
  res.output = buf.str();
  return res;
}

int count_occurrences(const std::string& text, const std::string& needle) {
  int n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + needle.size()))
    ++n;
  return n;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("pair mode prints the frozen broad exponent as a rational") {
  auto res = run_cli("exponents --n 5 --k 2");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("522/191") != std::string::npos);
  CHECK(res.output.find("verdict=FAIL") == std::string::npos);
}

TEST_CASE("sweep mode reports the optimizer and the improvement onset") {
  auto res = run_cli("exponents --n-max 30");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("2.59607") != std::string::npos);
  CHECK(res.output.find("lambda") != std::string::npos);
  CHECK(res.output.find("n0") != std::string::npos);
  CHECK(res.output.find("verdict=FAIL") == std::string::npos);
}

TEST_CASE("missing required arguments exit with the usage-or-contract code") {
  auto res = run_cli("exponents");
  CHECK(res.exit_code == 2);
  CHECK(res.output.find("contract error") != std::string::npos);
}

TEST_CASE("an out-of-range broadness parameter is refused") {
  auto res = run_cli("exponents --n 5 --k 4");
  CHECK(res.exit_code == 2);
  CHECK(res.output.find("contract error") != std::string::npos);
}

TEST_CASE("unknown flags exit with the usage code") {
  auto res = run_cli("exponents --no-such-flag 3");
  CHECK(res.exit_code == 2);
}

TEST_CASE("a grid too coarse for the requested scale is refused") {
  auto res = run_cli("decompose --r 64 --grid-h 0.05");
  CHECK(res.exit_code == 2);
  CHECK(res.output.find("contract error") != std::string::npos);
}

TEST_CASE("a single verification suite honours the requested seed count") {
  auto res = run_cli("verify --only l2-orthogonality --seeds 20 --r 16");
  CHECK(res.exit_code == 0);
  CHECK(count_occurrences(res.output, "l2-orthogonality-ratio") == 20);
  CHECK(res.output.find("verdict=FAIL") == std::string::npos);
}

TEST_CASE("an oversize verification request is refused by the guard") {
  auto res = run_cli("verify --only ball-l2-growth --seeds 100000");
  CHECK(res.exit_code == 2);
  CHECK(res.output.find("resource-guard refusal") != std::string::npos);
}

TEST_CASE("direction counting over a tangent plane passes its ratio check") {
  auto res = run_cli("wolff --variety plane --r 256");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("direction-count-ratio") != std::string::npos);
  CHECK(res.output.find("verdict=pass") != std::string::npos);
  CHECK(res.output.find("verdict=FAIL") == std::string::npos);
}

TEST_CASE("uniform equipartition with line certificates runs end to end") {
  auto res = run_cli("partition --d 4 --shape uniform --lines 40");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("sign-class-mass-ratio") != std::string::npos);
  CHECK(res.output.find("line-crossing-certificates") != std::string::npos);
  CHECK(res.output.find("verdict=FAIL") == std::string::npos);
}

TEST_CASE("single-sector input drives the broad norm to vanish") {
  auto res = run_cli("broadnorm --shape single-sector --mc 500");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("single-sector-vanishing") != std::string::npos);
  CHECK(res.output.find("verdict=pass") != std::string::npos);
  CHECK(res.output.find("verdict=FAIL") == std::string::npos);
}

TEST_CASE("vanished mass terminates the driver immediately") {
  auto res = run_cli("drive --scenario vanishing --alg 1 --size 32");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("[tiny]") != std::string::npos);
}

TEST_CASE("the plane-line scenario reaches the tangential branch") {
  auto res = run_cli("drive --scenario plane-line --size 32");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("[tang]") != std::string::npos);
}

TEST_CASE("identical configuration and seed reproduce byte-identical bundles") {
  fs::path a = scratch_dir() / "bundleA";
  fs::path b = scratch_dir() / "bundleB";
  auto r1 =
      run_cli("wolff --variety plane --r 64 --out \"" + a.string() + "\"");
  auto r2 =
      run_cli("wolff --variety plane --r 64 --out \"" + b.string() + "\"");
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  for (const char* name : {"wolff_checks.csv", "wolff_data.csv",
                           "wolff_summary.json", "wolff.log"}) {
    CAPTURE(name);
    std::string ca = read_file(a / name);
    std::string cb = read_file(b / name);
    CHECK(!ca.empty());
    CHECK(ca == cb);
  }
}

TEST_CASE("csv output quotes fields and the summary is versioned json") {
  fs::path dir = scratch_dir() / "bundleC";
  auto res = run_cli("exponents --n 5 --k 2 --out \"" + dir.string() + "\"");
  REQUIRE(res.exit_code == 0);
  std::string data = read_file(dir / "exponents_data.csv");
  CHECK(data.rfind("quantity,", 0) == 0);           // header row first
  CHECK(data.find("2 + 140/191") != std::string::npos);
  CHECK(data.find("\"2 + 140/191\"") == std::string::npos);  // space needs no quote
  CHECK(data.find("522/191") != std::string::npos);
  std::string summary = read_file(dir / "exponents_summary.json");
  CHECK(summary.find("format_version") != std::string::npos);
  CHECK(summary.find("conelab-exponents") != std::string::npos);
}

TEST_CASE("config files supply defaults and explicit flags override them") {
  fs::path cfg = scratch_dir() / "wolff_cfg.json";
  {
    std::ofstream out(cfg);
    out << "{\"variety\": \"plane\", \"r\": 64}\n";
  }
  auto base = run_cli("wolff --config \"" + cfg.string() + "\"");
  CHECK(base.exit_code == 0);
  CHECK(base.output.find("r=64") != std::string::npos);

  auto over = run_cli("wolff --config \"" + cfg.string() + "\" --r 32");
  CHECK(over.exit_code == 0);
  CHECK(over.output.find("r=32") != std::string::npos);
  CHECK(over.output.find("r=64") == std::string::npos);
}

TEST_CASE("an unreadable config file is refused") {
  auto res = run_cli("wolff --config /no/such/file.json");
  CHECK(res.exit_code == 2);
  CHECK(res.output.find("contract error") != std::string::npos);
}

}  // TEST_SUITE("harness")
