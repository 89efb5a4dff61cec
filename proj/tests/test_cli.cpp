#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "commands.hpp"
#include "qspan/errors.hpp"
#include "run_config.hpp"
#include "table.hpp"

using namespace qspan;
using namespace qspan::cli;
namespace fs = std::filesystem;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return RunConfig::parse(in, "test.cfg");
}

int error_line(const std::string& text, bool finish = false) {
  try {
    const RunConfig cfg = parse(text);
    if (finish) cfg.finish();
  } catch (const ParseError& e) {
    return e.line();
  }
  return -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch() {
  const fs::path dir = fs::temp_directory_path() / "qspan_cli_test";
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(QSPAN_BIN) + " " + args + " 2>" + (scratch() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

// Golden comparison: identical structure, numbers within a relative 1e-9.
void compare_csv(const fs::path& got, const fs::path& want) {
  std::ifstream a(got), b(want);
  REQUIRE(a);
  REQUIRE(b);
  std::string la, lb;
  int line = 0;
  while (true) {
    const bool ha = static_cast<bool>(std::getline(a, la)), hb = static_cast<bool>(std::getline(b, lb));
    ++line;
    CAPTURE(line);
    CHECK(ha == hb);
    if (!ha || !hb) break;
    if (line <= 2) {
      CHECK(la == lb);
      continue;
    }
    const auto ca = split(la), cb = split(lb);
    REQUIRE(ca.size() == cb.size());
    for (std::size_t i = 0; i < ca.size(); ++i) {
      if (cb[i] == "NA") {
        CHECK(ca[i] == "NA");
        continue;
      }
      const double x = std::stod(ca[i]), y = std::stod(cb[i]);
      CHECK(std::abs(x - y) <= 1e-9 * std::max(1.0, std::abs(y)));
    }
  }
}

void check_golden(const std::string& verb, const std::string& name, const std::vector<std::string>& sides) {
  const fs::path out = scratch() / (name + ".csv");
  REQUIRE(run(verb + " --config " + std::string(CONFIG_DIR) + "/" + name + ".cfg --out " + out.string()) == 0);
  compare_csv(out, fs::path(GOLDEN_DIR) / (name + ".csv"));
  for (const auto& side : sides) {
    const std::string file = name + "." + side + ".csv";
    compare_csv(scratch() / file, fs::path(GOLDEN_DIR) / file);
  }
}

}  // namespace

TEST_CASE("run config parsing") {
  const RunConfig cfg = parse(R"(# header
[grid]
L = 10, 20   # trailing comment
t = linspace 0 1 5
w = logspace 1 100 3
name = tent
[flags]
on = true
)");
  CHECK(cfg.integers("grid", "L") == std::vector<int>{10, 20});
  const auto t = cfg.grid("grid", "t");
  REQUIRE(t.size() == 5);
  CHECK(t[1] == doctest::Approx(0.25));
  CHECK(cfg.numbers("grid", "w")[2] == doctest::Approx(100.0));
  CHECK(cfg.text("grid", "name") == "tent");
  CHECK(cfg.flag("flags", "on", false));
  CHECK(cfg.number("grid", "missing", 3.5) == 3.5);
  CHECK_NOTHROW(cfg.finish());
  CHECK_THROWS_AS(cfg.number("grid", "name"), ParseError);
  CHECK_THROWS_AS(cfg.number("nope", "x"), ParseError);
}

TEST_CASE("run config errors carry line numbers") {
  CHECK(error_line("[a]\nx = 1\nx = 2\n") == 3);
  CHECK(error_line("x = 1\n") == 1);
  CHECK(error_line("[a]\n[b]\n[a]\n") == 3);
  CHECK(error_line("[a]\nnot a pair\n") == 2);
  CHECK(error_line("[a]\nx = 1\ntypo = 2\n", true) == 3);
  try {
    parse("[a]\n\nt = 0.5, 0.2\n").grid("a", "t");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse("[a]\nn = 2.5\n").integer("a", "n"), ParseError);
  CHECK_THROWS_AS(parse("[a]\nt = linspace 0 1\n").numbers("a", "t"), ParseError);
}

TEST_CASE("table formatting") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(NAN) == "NA");
  CHECK(format_number(1e300 * 1e10) == "inf");
  Table t{"demo", 2, {"a", "b", "c"}, {}};
  t.add({1.5, NA{}, std::string("x,y")});
  t.add({static_cast<long long>(3), 2e-20, std::string("plain")});
  CHECK_THROWS(t.add({1.0}));
  std::ostringstream csv;
  write_csv(csv, t);
  CHECK(csv.str() == "# schema: qspan.demo/2\na,b,c\n1.5,NA,\"x,y\"\n3,2e-20,plain\n");
  std::ostringstream js;
  write_json(js, t);
  const auto j = nlohmann::json::parse(js.str());
  CHECK(j["schema"] == "qspan.demo/2");
  CHECK(j["rows"][0][1].is_null());
  CHECK(j["rows"][1][0] == 3);
  CHECK(j["columns"].size() == 3);
}

TEST_CASE("parallel_for rethrows the lowest failing index") {
  std::vector<int> out(50, 0);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
  CHECK(out[7] == 49);
  try {
    parallel_for(20, 3, [](std::size_t i) {
      if (i == 5 || i == 11) throw std::runtime_error(std::to_string(i));
    });
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "5");
  }
}

TEST_CASE("golden outputs") {
  check_golden("asymptotics", "asymptotics", {});
  check_golden("ed", "ed_toy", {"ed_projection", "ed_summary", "ed_levels"});
  check_golden("ising", "ising_trivial", {"ising_f"});
  CHECK(slurp(scratch() / "stderr.txt").find("warning") != std::string::npos);
}

TEST_CASE("threads do not change results") {
  const fs::path dir = scratch();
  {
    std::ofstream cfg(dir / "threads.cfg");
    cfg << "[model]\nhamiltonian = " << CONFIG_DIR << "/staggered_xyz.ham\n"
        << "initial = ground:" << CONFIG_DIR << "/staggered_xyz_H0.ham\n"
        << "[run]\nL = 4, 6, 8\nt = 0.5, 1, 2\neps_scale = 0.15\neps_rate = 100\n"
        << "[projection]\nT = 1, 2\npoints = 7\n";
    std::ofstream mc(dir / "mc.cfg");
    mc << "[quench]\nh_initial = inf\nh_final = 1.5\n[renyi]\nL = 50, 100\nt = 0.4\nalpha = 3, 4\nscheme = mc\n"
       << "mc_pairs = 4096\n";
  }
  for (const std::string verb : {"ed", "ising"}) {
    const std::string cfg = (dir / (verb == "ed" ? "threads.cfg" : "mc.cfg")).string();
    REQUIRE(run(verb + " --config " + cfg + " --threads 1 --seed 9 --out " + (dir / "one.csv").string()) == 0);
    REQUIRE(run(verb + " --config " + cfg + " --threads 3 --seed 9 --out " + (dir / "three.csv").string()) == 0);
    CHECK(slurp(dir / "one.csv") == slurp(dir / "three.csv"));
    CHECK(slurp(dir / "one.csv").size() > 50);
  }
  // a different seed moves the Monte Carlo estimate
  REQUIRE(run("ising --config " + (dir / "mc.cfg").string() + " --seed 10 --out " + (dir / "other.csv").string()) == 0);
  CHECK(slurp(dir / "one.csv") != slurp(dir / "other.csv"));
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch();
  CHECK(run("") == 2);
  CHECK(run("asymptotics") == 2);
  CHECK(run("asymptotics --config /nonexistent.cfg") == 2);
  {
    std::ofstream(dir / "typo.cfg") << "[series]\ncumulants = 0, 1\n[grid]\nL = 100\nt = 1\nalpha = 2\nalpah = 2\n";
    std::ofstream(dir / "order.cfg") << "[series]\ncumulants = 0, 1\n[grid]\nL = 100\nt = 1, 0.5\nalpha = 2\n";
    std::ofstream(dir / "domain.cfg") << "[series]\ncumulants = 0, -1\n[grid]\nL = 100\nt = 1\nalpha = 2\n";
    std::ofstream(dir / "accuracy.cfg")
        << "[quench]\nh_initial = inf\nh_final = 1.5\n[renyi]\nL = 100\nt = 0.4\nalpha = 3\nscheme = grid\nrel_tol = 1e-17\n";
  }
  CHECK(run("asymptotics --config " + (dir / "typo.cfg").string()) == 2);
  CHECK(slurp(dir / "stderr.txt").find(":7") != std::string::npos);
  CHECK(run("asymptotics --config " + (dir / "order.cfg").string()) == 2);
  CHECK(run("asymptotics --config " + (dir / "domain.cfg").string()) == 2);
  CHECK(run("ising --config " + (dir / "accuracy.cfg").string()) == 3);
  CHECK(run("asymptotics --format xml --config " + std::string(CONFIG_DIR) + "/asymptotics.cfg") == 2);
}

TEST_CASE("asymptotics outputs: minimal config and an epsilon sweep") {
  const fs::path dir = scratch();
  REQUIRE(run("asymptotics --config " + std::string(CONFIG_DIR) + "/asymptotics.cfg --format json --out " +
              (dir / "a.json").string()) == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "a.json"));
  CHECK(j["rows"].size() == 1);
  std::ofstream(dir / "sweep.cfg") << "[series]\ncumulants = 0, 1.3\n[grid]\nL = 100\nt = 1\nalpha = 2\n"
                                   << "eps = 1e-6, 1e-4, 0.01, 0.1\n";
  REQUIRE(run("asymptotics --config " + (dir / "sweep.cfg").string() + " --format json --out " +
              (dir / "s.json").string()) == 0);
  const auto s = nlohmann::json::parse(slurp(dir / "s.json"));
  const auto& cols = s["columns"];
  const auto d = std::find(cols.begin(), cols.end(), "D") - cols.begin();
  REQUIRE(s["rows"].size() == 4);
  for (std::size_t i = 1; i < 4; ++i) CHECK(s["rows"][i][d].get<double>() < s["rows"][i - 1][d].get<double>());
}
