#include <iostream>

#include <CLI11.hpp>

#include "kinspec/cli.hpp"
#include "kinspec/errors.hpp"
#include "kinspec/linalg.hpp"

namespace {

std::string key_listing() {
  std::string s = "\nConfig keys (key = value, # comments):\n";
  for (const auto& k : kinspec::cli::config_registry())
    s += "  " + k.key + " = " + (k.def.empty() ? "\"\"" : k.def) + "    " + k.doc + "\n";
  s += "\nEnvironment: KINSPEC_THREADS sets the worker thread count.\n";
  s += "Exit codes: 0 ok, 2 config/io, 3 precondition, 4 divergence/quadrature, 5 tolerance.\n";
  return s;
}

const char* describe(const std::string& cmd) {
  if (cmd == "kernel-check") return "kernel symmetry, null space, nu band, pointwise bounds, three-integral decay";
  if (cmd == "assemble") return "assemble (or load) the discrete operator and dump nodes, weights, nu";
  if (cmd == "spectrum") return "spectrum of L, alpha constants, dispersion matrix at the origin";
  if (cmd == "branches") return "trace the d+2 eigenvalue branches of B(r e1) and fit their expansions";
  if (cmd == "decay") return "semigroup contraction, semigroup law, Duhamel identity, certified decay ratio";
  if (cmd == "xspace") return "x-space decay of the semigroup synthesized from the y-quadrature";
  return "nonlinear Cauchy problem on a periodic lattice by Picard iteration";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kinspec: linearized Boltzmann operator, dispersion branches, semigroup decay, Cauchy solver"};
  app.footer(key_listing());
  app.require_subcommand(0, 1);
  std::string config, out = "kinspec-out";
  bool no_cache = false;
  std::string chosen;
  for (const auto& name : kinspec::cli::commands()) {
    CLI::App* sub = app.add_subcommand(name, describe(name));
    sub->add_option("--config", config, "flat key = value file (defaults when omitted)");
    sub->add_option("--out", out, "output directory");
    sub->add_flag("--no-cache", no_cache, "ignore and do not write the operator cache");
    sub->callback([&chosen, name] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (chosen.empty()) {
    std::cout << app.help();
    return 0;
  }
  try {
    kinspec::configure_threads();
    const kinspec::cli::Config cfg =
        config.empty() ? kinspec::cli::Config::defaults() : kinspec::cli::Config::load(config);
    const auto summary = kinspec::cli::run(chosen, cfg, out, !no_cache);
    for (const auto& c : summary["checks"])
      std::cout << (c["pass"].get<bool>() ? "PASS " : "FAIL ") << c["tag"].get<std::string>() << "  measured "
                << c["measured"].dump() << "  bound " << c["bound"].dump() << "\n";
    std::cout << "summary: " << out << "/" << chosen << ".json\n";
    return 0;
  } catch (const kinspec::Error& e) {
    std::cerr << "kinspec: " << e.what() << "\n";
    return kinspec::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "kinspec: " << e.what() << "\n";
    return 1;
  }
}
