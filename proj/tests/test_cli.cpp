#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "kinspec/cli.hpp"
#include "kinspec/errors.hpp"

using namespace kinspec;
using namespace kinspec::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("kinspec-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ErrorKind kind_of(const std::string& text) {
  try {
    Config::parse(text, "cfg");
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::Io;
}

std::string message_of(const std::string& text) {
  try {
    Config::parse(text, "cfg");
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("every registered key has a parseable default") {
  const Config c = Config::defaults();
  for (const auto& k : config_registry()) CHECK_NOTHROW(c.text(k.key));
  CHECK(c.integer("d") == 3);
  CHECK(c.real("gamma") == 0.5);
  CHECK(c.list("decay.y").size() == 4);
  CHECK(c.flag("branches.oracle"));
  CHECK(c.grid()->size() == 512);
}

TEST_CASE("config files: values, comments and line-numbered errors") {
  const Config c = Config::parse("# comment\n gamma = 1.5  # trailing\n\ngrid.n = 6\n", "cfg");
  CHECK(c.real("gamma") == 1.5);
  CHECK(c.integer("grid.n") == 6);
  CHECK(c.kernel().gamma == 1.5);

  const std::string range = message_of("d = 3\ngamma = 3.5\n");
  CHECK(range.find("cfg:2") != std::string::npos);
  CHECK(range.find("gamma = 3.5 out of range") != std::string::npos);
  CHECK(kind_of("gamma = 3.5\n") == ErrorKind::Config);

  CHECK(message_of("\nbogus = 1\n").find("cfg:2: unknown key 'bogus'") != std::string::npos);
  CHECK(message_of("grid.n = six\n").find("expects an integer") != std::string::npos);
  CHECK(message_of("gamma = 0.1\ngamma = 0.2\n").find("duplicate key 'gamma' (first on line 1)") != std::string::npos);
  CHECK(message_of("gamma 0.1\n").find("expected 'key = value'") != std::string::npos);
  CHECK(kind_of("solve.modes = 4\n") == ErrorKind::Config);
  CHECK(kind_of("branches.oracle = maybe\n") == ErrorKind::Config);
  CHECK(kind_of("integrals.alpha = 0.5\n") == ErrorKind::Config);
}

TEST_CASE("missing config file is an I/O error with exit code 2") {
  try {
    Config::load("/nonexistent/kinspec.cfg");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
    CHECK(exit_code(e.kind()) == 2);
  }
}

TEST_CASE("exit codes by error kind") {
  CHECK(exit_code(ErrorKind::Config) == 2);
  CHECK(exit_code(ErrorKind::Io) == 2);
  CHECK(exit_code(ErrorKind::Precondition) == 3);
  CHECK(exit_code(ErrorKind::Singular) == 3);
  CHECK(exit_code(ErrorKind::Divergence) == 4);
  CHECK(exit_code(ErrorKind::Quadrature) == 4);
  CHECK(exit_code(ErrorKind::Tolerance) == 5);
}

TEST_CASE("csv: quoting, CRLF rows and round-trippable reals") {
  const fs::path dir = scratch_dir("csv");
  {
    CsvWriter w((dir / "t.csv").string(), {"a", "b,c", "d"});
    w.add(0.1).add(std::string("say \"hi\"")).add(7).end_row();
    CHECK_THROWS(w.add(1.0).end_row());
  }
  const std::string s = slurp(dir / "t.csv");
  CHECK(s.rfind("a,\"b,c\",d\r\n0.10000000000000001,\"say \"\"hi\"\"\",7\r\n", 0) == 0);
  CHECK(std::stod(format_real(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_real(INFINITY) == "inf");
}

TEST_CASE("cache files round-trip and reject a different configuration") {
  const fs::path dir = scratch_dir("cache");
  CacheHeader h;
  h.gamma = 0.5;
  h.grid_hash = 42;
  h.key = 7;
  Eigen::MatrixXcd a(2, 3);
  a << cplx(1, 2), 3, 4, 5, cplx(6, -1), 1e-300;
  const std::string path = (dir / "x.bin").string();
  write_cache(path, h, {a, Eigen::MatrixXcd::Identity(1, 1)});
  const auto back = read_cache(path, h);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == a);
  CacheHeader other = h;
  other.gamma = 1.5;
  CHECK_THROWS_AS(read_cache(path, other), Error);
  {
    std::ofstream bad(dir / "bad.bin", std::ios::binary);
    bad << "NOTACACHE";
  }
  try {
    read_cache((dir / "bad.bin").string(), h);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
  }
}

TEST_CASE("content key tracks the operator-defining keys only") {
  Config a = Config::defaults(), b = Config::defaults();
  b.set("decay.beta", "2");
  CHECK(content_key(a) == content_key(b));
  b.set("gamma", "1");
  CHECK(content_key(a) != content_key(b));
}

TEST_CASE("assemble twice: the second run reads the cache and yields the same operator") {
  const fs::path dir = scratch_dir("assemble");
  Config c = Config::parse("grid.n = 4\n", "cfg");
  const auto j1 = run("assemble", c, dir.string(), true);
  const auto j2 = run("assemble", c, dir.string(), true);
  CHECK_FALSE(j1["results"]["operator"]["from_cache"].get<bool>());
  CHECK(j2["results"]["operator"]["from_cache"].get<bool>());
  CHECK(j1["results"]["operator"]["hash"] == j2["results"]["operator"]["hash"]);
  CHECK(fs::exists(dir / "assemble.json"));
  const std::string csv = slurp(dir / "assemble.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 65);
  CHECK(j1["schema_version"] == kSchemaVersion);
  CHECK(j1["config"]["grid.n"] == 4);
}

TEST_CASE("spectrum on a small grid writes a self-describing summary") {
  const fs::path dir = scratch_dir("spectrum");
  const auto j = run("spectrum", Config::parse("grid.n = 6\n", "cfg"), dir.string(), false);
  CHECK(j["command"] == "spectrum");
  CHECK(j["checks"].size() >= 5);
  for (const auto& c : j["checks"]) CHECK(c.contains("claim"));
  CHECK(fs::exists(dir / "spectrum.csv"));
}

TEST_CASE("unknown commands and unregistered tags are rejected") {
  CHECK_THROWS_AS(run("nope", Config::defaults(), scratch_dir("nope").string(), false), Error);
  Summary s("assemble", Config::defaults());
  CHECK_THROWS(s.check("no.such.tag", 0.0, 0.0, true));
  s.check("kernel.symmetric", 1e-12, 1e-8, true);
  CHECK(s.all_pass());
  s.check("kernel.k1_bound", INFINITY, INFINITY, false);
  CHECK_FALSE(s.all_pass());
  CHECK(s.to_json()["checks"][1]["measured"].is_null());
}
