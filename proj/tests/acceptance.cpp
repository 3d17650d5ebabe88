// Acceptance gate: one PASS/FAIL line per criterion. Exit status 1 when any line fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinspec/cli.hpp"
#include "kinspec/errors.hpp"
#include "kinspec/nonlinear.hpp"
#include "kinspec/spectral.hpp"

using namespace kinspec;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Line {
  int id;
  std::string what;
  bool pass;
  std::string detail;
  double seconds;
};

std::vector<Line> lines;
fs::path out_dir;

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(const Line& l) {
  std::printf("criterion %2d %s  %s  [%s] (%.1f s)\n", l.id, l.pass ? "PASS" : "FAIL", l.what.c_str(), l.detail.c_str(),
              l.seconds);
  std::fflush(stdout);
  lines.push_back(l);
}

std::string num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.6g", v);
  return b;
}

const json& check(const json& summary, const std::string& tag) {
  for (const auto& c : summary["checks"])
    if (c["tag"] == tag) return c;
  throw Error(ErrorKind::Precondition, "summary lacks check " + tag);
}

// pass flag of each tag and a compact "tag=measured" detail
bool gather(const json& summary, const std::vector<std::string>& tags, std::string& detail) {
  bool ok = true;
  for (const auto& t : tags) {
    const json& c = check(summary, t);
    ok = ok && c["pass"].get<bool>();
    if (!detail.empty()) detail += ", ";
    detail += t.substr(t.find('.') + 1) + "=" + (c["measured"].is_number() ? num(c["measured"].get<double>()) : "n/a");
  }
  return ok;
}

json run_command(const std::string& cmd, cli::Config cfg, const std::string& tag) {
  cfg.set("cache.dir", (out_dir / "cache").string());
  return cli::run(cmd, cfg, (out_dir / tag).string(), true);
}

void guarded(int id, const std::string& what, const std::function<void(Line&)>& body) {
  Line l{id, what, false, "", 0.0};
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(l);
  } catch (const std::exception& e) {
    l.pass = false;
    l.detail = std::string("error: ") + e.what();
  }
  l.seconds = since(t0);
  report(l);
}

}  // namespace

int main(int argc, char** argv) {
  out_dir = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "kinspec-acceptance";
  fs::create_directories(out_dir);
  const cli::Config base = cli::Config::defaults();
  json spectrum, branches, kernel_default;

  guarded(1, "kernel structure for gamma in {0, 0.5, 1.5}", [&](Line& l) {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    for (const char* gm : {"0", "0.5", "1.5"}) {
      cli::Config c = base;
      c.set("gamma", gm);
      const json j = run_command("kernel-check", c, std::string("kernel-") + gm);
      if (std::string(gm) == "0.5") kernel_default = j;
      std::string d;
      ok = gather(j, {"kernel.symmetric", "kernel.nonpositive", "kernel.null_space", "kernel.nu_band"}, d) && ok;
      l.detail += (l.detail.empty() ? "gamma " : "; gamma ") + std::string(gm) + ": " + d;
    }
    const double t = since(t0);
    l.pass = ok && t <= 120.0;
    l.detail += "; limit 120 s";
  });

  guarded(2, "alpha constants within 1e-3", [&](Line& l) {
    spectrum = run_command("spectrum", base, "spectrum");
    const json& a = spectrum["results"]["alpha"];
    l.pass = check(spectrum, "spectrum.alpha1")["pass"].get<bool>() && check(spectrum, "spectrum.alpha2")["pass"].get<bool>();
    l.detail = "alpha1=" + num(a["alpha1"].get<double>()) + " alpha2=" + num(a["alpha2"].get<double>()) +
               " target sqrt(2/3)=" + num(std::sqrt(2.0 / 3.0));
  });

  guarded(3, "dispersion matrix at the origin and its eigenvalues", [&](Line& l) {
    if (spectrum.is_null()) spectrum = run_command("spectrum", base, "spectrum");
    std::string d;
    l.pass = gather(spectrum, {"spectrum.dispersion_origin", "spectrum.dispersion_eigenvalues"}, d);
    l.detail = d + " (tolerances 1e-3, 2e-3)";
  });

  guarded(4, "branch asymptotics: tau1 within 2%, sigma2 < 0, sigma2 closed form within 3%", [&](Line& l) {
    const auto t0 = std::chrono::steady_clock::now();
    branches = run_command("branches", base, "branches");
    std::string d;
    const bool ok = gather(branches, {"branches.tau1", "branches.sigma2_negative", "branches.sigma2_closed_form"}, d);
    l.pass = ok && since(t0) <= 300.0;
    l.detail = d + "; limit 300 s";
  });

  guarded(5, "traced branches equal the dense oracle within 1e-6", [&](Line& l) {
    if (branches.is_null()) branches = run_command("branches", base, "branches");
    std::string d;
    l.pass = gather(branches, {"branches.oracle"}, d);
    l.detail = d;
  });

  guarded(6, "resolvent decomposition on 20 random (lambda, y, u) within 1e-6", [&](Line& l) {
    const LinearSystem s = cli::load_system(base, (out_dir / "cache").string(), true).system;
    std::mt19937 rng(20);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::normal_distribution<double> N(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const cplx lam(U(rng), 2.0 * U(rng) - 1.0);
      Eigen::VectorXd y(s.d());
      for (int a = 0; a < s.d(); ++a) y(a) = N(rng);
      y *= (0.01 + 0.09 * U(rng)) / y.norm();
      Eigen::VectorXcd u(s.n());
      for (int i = 0; i < s.n(); ++i) u(i) = cplx(N(rng), N(rng));
      worst = std::max(worst, resolvent_reconstruction(s, lam, y, u).err_decomposition);
    }
    l.pass = worst <= 1e-6;
    l.detail = "max relative error " + num(worst);
  });

  guarded(7, "semigroup suite", [&](Line& l) {
    const auto t0 = std::chrono::steady_clock::now();
    const json j = run_command("decay", base, "decay");
    std::string d;
    const bool ok = gather(j, {"decay.contraction", "decay.semigroup_law", "decay.duhamel", "decay.certified_ratio"}, d);
    l.pass = ok && since(t0) <= 300.0;
    l.detail = d + "; limit 300 s";
  });

  guarded(8, "x-space decay exponent 0.75 +- 0.1", [&](Line& l) {
    const json j = run_command("xspace", base, "xspace");
    std::string d;
    l.pass = gather(j, {"xspace.exponent"}, d);
    l.detail = d;
  });

  guarded(9, "collision form: conservation on 20 samples within 1e-3, linearization slope", [&](Line& l) {
    const LinearSystem s = cli::load_system(base, (out_dir / "cache").string(), true).system;
    const CollisionForm form(s.grid, s.params);
    double worst = 0.0;
    for (unsigned k = 0; k < 20; ++k)
      worst = std::max(worst, conservation_check(form, s.basis.columns, random_smooth_perturbation(*s.grid, 300 + k)).max_relative);
    const LinearizationReport lin = linearization_check(form, s, random_smooth_perturbation(*s.grid, 400));
    const bool slope_ok = std::abs(lin.slope - 1.0) <= 0.1;
    l.pass = worst <= 1e-3 && slope_ok;
    l.detail = "max pairing " + num(worst) + ", error slope " + num(lin.slope) + " (first order: 1 +- 0.1), L mismatch " +
               num(lin.assembled_mismatch);
  });

  guarded(10, "cauchy solver on 3^3 x 8^3", [&](Line& l) {
    cli::Config c = base;
    c.set("solve.doubling", "false");
    c.set("gamma_bound.samples", "10");
    const json j = run_command("solve", c, "solve");
    std::string d;
    const bool ok = gather(j, {"solve.zero_data", "solve.contraction", "solve.residual", "solve.monotone"}, d);
    const double t = j["results"]["seconds"].get<double>();
    l.pass = ok && t <= 900.0;
    l.detail = d + "; picard iterations " + std::to_string(j["results"]["run"]["iterations"].get<int>()) + ", solve " +
               num(t) + " s of 900 s";
  });

  guarded(11, "three singular gaussian integrals over |xi| <= 10, two settings", [&](Line& l) {
    if (kernel_default.is_null()) kernel_default = run_command("kernel-check", base, "kernel-0.5");
    std::string d;
    l.pass = gather(kernel_default, {"kernel.three_integrals"}, d);
    l.detail = d + ", cases " + std::to_string(kernel_default["results"]["three_integrals"].size());
  });

  int failed = 0;
  for (const auto& l : lines) failed += !l.pass;
  std::printf("acceptance: %zu criteria, %d failed\n", lines.size(), failed);
  return failed ? 1 : 0;
}
