#include "kinspec/cli.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "kinspec/errors.hpp"
#include "kinspec/kernel.hpp"
#include "kinspec/nonlinear.hpp"
#include "kinspec/semigroup.hpp"
#include "kinspec/spectral.hpp"

namespace kinspec::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

static_assert(std::endian::native == std::endian::little, "cache layout assumes a little-endian host");

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_real(const std::string& s, double& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(v);
}

bool parse_int(const std::string& s, long& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  v = std::strtol(s.c_str(), &end, 10);
  return end == s.c_str() + s.size();
}

bool parse_list(const std::string& s, std::vector<double>& out) {
  out.clear();
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v;
    if (!parse_real(trim(item), v)) return false;
    out.push_back(v);
  }
  return !out.empty();
}

bool parse_bool(const std::string& s, bool& v) {
  if (s == "true" || s == "on" || s == "1" || s == "yes") return v = true, true;
  if (s == "false" || s == "off" || s == "0" || s == "no") return v = false, true;
  return false;
}

const ConfigKey* find_key(const std::string& key) {
  for (const auto& k : config_registry())
    if (k.key == key) return &k;
  return nullptr;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void get(std::istream& is, T& v, const std::string& path) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error(ErrorKind::Io, "cache file " + path + " is truncated");
}

std::vector<double> logspace(double a, double b, int n) {
  std::vector<double> r(n);
  for (int k = 0; k < n; ++k) r[k] = n == 1 ? a : a * std::pow(b / a, double(k) / (n - 1));
  return r;
}

}  // namespace

const std::vector<ConfigKey>& config_registry() {
  using V = ValueType;
  static const std::vector<ConfigKey> reg = {
      {"d", V::Int, "3", "velocity dimension (2 or 3)"},
      {"gamma", V::Real, "0.5", "soft-potential exponent, 0 <= gamma < d"},
      {"q0", V::Real, "1", "angular cutoff b(c) = q0 |c|"},
      {"grid.scheme", V::Text, "gauss_hermite", "gauss_hermite or uniform"},
      {"grid.n", V::Int, "8", "nodes per axis"},
      {"grid.extent", V::Real, "6", "box half-width (uniform scheme only)"},
      {"kernel.rule", V::Text, "hermite_product", "hermite_product or nystrom"},
      {"cache.dir", V::Text, "", "operator cache directory (empty: <out>/cache)"},
      {"check.samples", V::Int, "200", "kernel-check: random pairs per pointwise bound"},
      {"check.nu_radius", V::Real, "8", "kernel-check: radius of the nu band"},
      {"check.nu_points", V::Int, "33", "kernel-check: radii in the nu band"},
      {"integrals.max_radius", V::Real, "10", "kernel-check: |xi| range of the three-integral decay"},
      {"integrals.points", V::Int, "21", "kernel-check: radii in the three-integral decay"},
      {"integrals.alpha", V::List, "0.5,1.5", "kernel-check: singularity exponents, one per case"},
      {"integrals.a1", V::List, "1,0.5", "kernel-check: Gaussian rates A1, one per case"},
      {"integrals.a2", V::List, "1,2", "kernel-check: Gaussian rates A2, one per case"},
      {"r.min", V::Real, "0.005", "branches: smallest |y|"},
      {"r.max", V::Real, "0.1", "branches: largest |y|"},
      {"r.count", V::Int, "12", "branches: log-spaced samples"},
      {"branches.oracle", V::Bool, "true", "branches: dense eigensolver comparison"},
      {"time.min", V::Real, "0.01", "decay: first positive time"},
      {"time.max", V::Real, "2000", "decay: horizon"},
      {"time.count", V::Int, "60", "decay: log-spaced times"},
      {"decay.y", V::List, "0.02,0.05,0.2,1", "decay: |y| along e1"},
      {"decay.alpha", V::List, "0.5,1", "decay: time-weight exponents"},
      {"decay.beta", V::Real, "1", "decay: velocity weight exponent"},
      {"decay.r3", V::Real, "0.1", "decay: low-frequency radius of the certified ratio"},
      {"decay.duhamel_t", V::Real, "2", "decay: time of the Duhamel identity check"},
      {"xspace.r0", V::Real, "0.001", "xspace: first radial panel"},
      {"xspace.rmax", V::Real, "3", "xspace: radial cutoff"},
      {"xspace.per_panel", V::Int, "8", "xspace: Gauss points per panel"},
      {"xspace.width", V::Real, "0.5", "xspace: phi(r) = exp(-r^2 / width)"},
      {"xspace.t_max", V::Real, "1000", "xspace: horizon"},
      {"xspace.t_count", V::Int, "40", "xspace: log-spaced times from 1"},
      {"xspace.fit_lo", V::Real, "100", "xspace: fit window start"},
      {"xspace.fit_hi", V::Real, "1000", "xspace: fit window end"},
      {"solve.amplitude", V::Real, "0.001", "solve: amplitude of the cosine data"},
      {"solve.seed", V::Int, "11", "solve: seed of the velocity profile"},
      {"solve.modes", V::Int, "3", "solve: lattice points per axis (odd)"},
      {"solve.period", V::Real, "10", "solve: torus period"},
      {"solve.alpha", V::Real, "0.5", "solve: time weight, 1/2 <= alpha < 1"},
      {"solve.beta", V::Real, "2", "solve: velocity weight, beta > d/2"},
      {"solve.l", V::Real, "2", "solve: x regularity, l > d/2"},
      {"solve.dt", V::Real, "2", "solve: time step"},
      {"solve.t_end", V::Real, "50", "solve: horizon"},
      {"solve.gauss_points", V::Int, "2", "solve: Duhamel quadrature nodes per step"},
      {"solve.tol", V::Real, "1e-10", "solve: Picard tolerance (relative)"},
      {"solve.max_iter", V::Int, "30", "solve: Picard iteration cap"},
      {"solve.smallness", V::Real, "0.05", "solve: A0 bound on sup_beta |f0|"},
      {"solve.doubling", V::Bool, "true", "solve: second run at twice the amplitude"},
      {"collision.interp", V::Text, "hermite", "hermite or multilinear post-collision interpolation"},
      {"collision.angular", V::Text, "aligned", "aligned or fixed sphere rule"},
      {"collision.polar", V::Int, "4", "aligned rule: Gauss nodes in cos(theta)"},
      {"collision.azimuth", V::Int, "8", "aligned rule: azimuth nodes"},
      {"collision.sphere_points", V::Int, "26", "fixed rule: sphere points"},
      {"gamma_bound.samples", V::Int, "50", "solve: random pairs of the bilinear bound"},
  };
  return reg;
}

Config Config::defaults() {
  Config c;
  c.source_ = "<defaults>";
  for (const auto& k : config_registry()) c.values_[k.key] = k.def;
  return c;
}

void Config::fail(const std::string& key, const std::string& msg) const {
  const auto it = lines_.find(key);
  const int line = it == lines_.end() ? 0 : it->second;
  throw Error(ErrorKind::Config, source_ + (line > 0 ? ":" + std::to_string(line) : "") + ": " + msg);
}

void Config::set(const std::string& key, const std::string& value, int line) {
  const ConfigKey* k = find_key(key);
  lines_[key] = line;
  if (!k) fail(key, "unknown key '" + key + "'");
  double r;
  long i;
  bool b;
  std::vector<double> l;
  const bool ok = k->type == ValueType::Real   ? parse_real(value, r)
                  : k->type == ValueType::Int  ? parse_int(value, i)
                  : k->type == ValueType::Bool ? parse_bool(value, b)
                  : k->type == ValueType::List ? parse_list(value, l)
                                               : true;
  if (!ok) {
    static const char* names[] = {"a real number", "an integer", "text", "a comma-separated list of reals",
                                  "a boolean"};
    fail(key, "'" + key + "' expects " + names[int(k->type)] + ", got '" + value + "'");
  }
  values_[key] = value;
}

Config Config::parse(const std::string& text, const std::string& source) {
  Config c = defaults();
  c.source_ = source;
  std::istringstream is(text);
  std::string raw;
  int line = 0;
  std::map<std::string, int> seen;
  while (std::getline(is, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::Config, source + ":" + std::to_string(line) + ": expected 'key = value'");
    const std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
    if (key.empty()) throw Error(ErrorKind::Config, source + ":" + std::to_string(line) + ": empty key");
    if (seen.count(key))
      throw Error(ErrorKind::Config, source + ":" + std::to_string(line) + ": duplicate key '" + key +
                                         "' (first on line " + std::to_string(seen[key]) + ")");
    seen[key] = line;
    c.set(key, value, line);
  }
  c.validate();
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

double Config::real(const std::string& key) const {
  double v = 0.0;
  parse_real(text(key), v);
  return v;
}

int Config::integer(const std::string& key) const {
  long v = 0;
  parse_int(text(key), v);
  return int(v);
}

bool Config::flag(const std::string& key) const {
  bool v = false;
  parse_bool(text(key), v);
  return v;
}

const std::string& Config::text(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorKind::Config, "no such key '" + key + "'");
  return it->second;
}

std::vector<double> Config::list(const std::string& key) const {
  std::vector<double> v;
  parse_list(text(key), v);
  return v;
}

void Config::validate() const {
  const int d = integer("d");
  if (d < 2 || d > 3) fail("d", "d = " + std::to_string(d) + " out of range: 2 <= d <= 3");
  const double g = real("gamma");
  if (!(g >= 0.0 && g < d))
    fail("gamma", "gamma = " + text("gamma") + " out of range: requires 0 <= gamma < d = " + std::to_string(d));
  if (!(real("q0") > 0.0)) fail("q0", "q0 must be > 0");
  try {
    parse_scheme(text("grid.scheme"));
  } catch (const Error& e) {
    fail("grid.scheme", e.what());
  }
  try {
    parse_kernel_rule(text("kernel.rule"));
  } catch (const Error& e) {
    fail("kernel.rule", e.what());
  }
  if (integer("grid.n") < 2 || integer("grid.n") > 16) fail("grid.n", "grid.n must be in [2, 16]");
  if (!(real("grid.extent") > 0.0)) fail("grid.extent", "grid.extent must be > 0");
  auto positive = [&](const char* k) {
    if (!(real(k) > 0.0)) fail(k, std::string(k) + " must be > 0");
  };
  for (const char* k : {"r.min", "time.min", "decay.r3", "decay.duhamel_t", "xspace.r0", "xspace.width",
                        "solve.period", "solve.dt", "solve.tol", "solve.smallness", "check.nu_radius",
                        "integrals.max_radius"})
    positive(k);
  if (!(real("r.max") > real("r.min"))) fail("r.max", "r.max must exceed r.min");
  if (integer("r.count") < 6) fail("r.count", "r.count must be >= 6");
  if (!(real("time.max") > real("time.min"))) fail("time.max", "time.max must exceed time.min");
  if (integer("time.count") < 3) fail("time.count", "time.count must be >= 3");
  if (!(real("xspace.rmax") > real("xspace.r0"))) fail("xspace.rmax", "xspace.rmax must exceed xspace.r0");
  if (integer("xspace.per_panel") < 1) fail("xspace.per_panel", "xspace.per_panel must be >= 1");
  if (!(real("xspace.fit_hi") > real("xspace.fit_lo") && real("xspace.fit_lo") > 0.0))
    fail("xspace.fit_hi", "need 0 < xspace.fit_lo < xspace.fit_hi");
  for (double a : list("decay.alpha"))
    if (!(a > 0.0)) fail("decay.alpha", "decay.alpha entries must be > 0");
  if (real("decay.beta") < 0.0) fail("decay.beta", "decay.beta must be >= 0");
  if (list("integrals.alpha").size() != list("integrals.a1").size() ||
      list("integrals.alpha").size() != list("integrals.a2").size())
    fail("integrals.a2", "integrals.alpha, integrals.a1 and integrals.a2 need equal lengths");
  for (double a : list("integrals.alpha"))
    if (!(a >= 0.0 && a < d)) fail("integrals.alpha", "integrals.alpha entries must lie in [0, d)");
  const int modes = integer("solve.modes");
  if (modes < 1 || modes % 2 == 0) fail("solve.modes", "solve.modes must be odd and >= 1");
  if (real("solve.amplitude") < 0.0) fail("solve.amplitude", "solve.amplitude must be >= 0");
  const double alpha = real("solve.alpha");
  if (!(alpha >= 0.5 && alpha < 1.0)) fail("solve.alpha", "solve.alpha must lie in [1/2, 1)");
  if (!(real("solve.beta") > 0.5 * d)) fail("solve.beta", "solve.beta must exceed d/2");
  if (!(real("solve.l") > 0.5 * d)) fail("solve.l", "solve.l must exceed d/2");
  if (!(real("solve.t_end") >= real("solve.dt"))) fail("solve.t_end", "solve.t_end must be >= solve.dt");
  if (integer("solve.gauss_points") < 1) fail("solve.gauss_points", "solve.gauss_points must be >= 1");
  if (integer("solve.max_iter") < 1) fail("solve.max_iter", "solve.max_iter must be >= 1");
  const std::string& interp = text("collision.interp");
  if (interp != "hermite" && interp != "multilinear") fail("collision.interp", "collision.interp: hermite or multilinear");
  const std::string& ang = text("collision.angular");
  if (ang != "aligned" && ang != "fixed") fail("collision.angular", "collision.angular: aligned or fixed");
  if (integer("collision.polar") < 1) fail("collision.polar", "collision.polar must be >= 1");
  if (integer("collision.azimuth") < 3) fail("collision.azimuth", "collision.azimuth must be >= 3");
  if (integer("gamma_bound.samples") < 2) fail("gamma_bound.samples", "gamma_bound.samples must be >= 2");
}

KernelParams Config::kernel() const {
  KernelParams p;
  p.d = integer("d");
  p.gamma = real("gamma");
  p.q0 = real("q0");
  return p;
}

GridPtr Config::grid() const {
  return build_grid(integer("d"), parse_scheme(text("grid.scheme")), integer("grid.n"), real("grid.extent"));
}

AssemblyOptions Config::assembly() const {
  AssemblyOptions o;
  o.rule = parse_kernel_rule(text("kernel.rule"));
  return o;
}

json Config::to_json() const {
  json j = json::object();
  for (const auto& k : config_registry()) {
    const std::string& v = values_.at(k.key);
    switch (k.type) {
      case ValueType::Real: j[k.key] = real(k.key); break;
      case ValueType::Int: j[k.key] = integer(k.key); break;
      case ValueType::Bool: j[k.key] = flag(k.key); break;
      case ValueType::List: j[k.key] = list(k.key); break;
      case ValueType::Text: j[k.key] = v; break;
    }
  }
  return j;
}

const std::map<std::string, std::string>& check_registry() {
  static const std::map<std::string, std::string> reg = {
      {"kernel.symmetric", "K is symmetric in the weighted inner product"},
      {"kernel.nonpositive", "L is non-positive"},
      {"kernel.null_space", "L has exactly d+2 near-zero eigenvalues (collision invariants)"},
      {"kernel.nu_band", "nu(xi)(1+|xi|)^gamma lies in a fixed positive band"},
      {"kernel.k1_bound", "|k1| is bounded by its pointwise Gaussian shape"},
      {"kernel.k2_bound", "|k2| is bounded by its pointwise Gaussian shape"},
      {"kernel.three_integrals", "the three singular Gaussian integrals decay at their stated rates"},
      {"spectrum.null_space", "L has exactly d+2 near-zero eigenvalues"},
      {"spectrum.alpha1", "alpha1 = 1"},
      {"spectrum.alpha2", "alpha2 = sqrt(2/d)"},
      {"spectrum.alpha_decomposition", "alpha3, alpha4 split into a projected part plus a positive remainder"},
      {"spectrum.dispersion_origin", "dispersion matrix at the origin has zero diagonal and alpha couplings"},
      {"spectrum.dispersion_eigenvalues", "dispersion eigenvalues at the origin are 0 and +-sqrt(1+2/d)"},
      {"branches.tau1", "first-order branch coefficients are 0 (d times) and -+2 pi sqrt(1+2/d)"},
      {"branches.sigma2_negative", "second-order branch coefficients are negative"},
      {"branches.sigma2_closed_form", "decoupled branches: sigma2 = 8 pi^2 (L^-1 xi1 psi_j, xi1 psi_j)"},
      {"branches.oracle", "traced branches equal the nearest dense eigenvalues of B(r e1)"},
      {"decay.contraction", "the semigroup contracts the unweighted L2 norm"},
      {"decay.semigroup_law", "e^{(t+s)B} = e^{tB} e^{sB}"},
      {"decay.duhamel", "e^{tB} = e^{tA} + int e^{(t-s)A} K e^{sB} ds"},
      {"decay.generator", "(e^{hB}u - u)/h -> Bu at first order"},
      {"decay.maximizer", "sup z^alpha e^{-nu0 z} = (alpha/nu0)^alpha e^{-alpha}"},
      {"decay.weighted_A", "(1+t)^alpha |e^{tA}u|_beta <= C |u|_{beta+alpha gamma}"},
      {"decay.certified_ratio", "certified decay ratio is finite and stable under doubling the horizon"},
      {"xspace.exponent", "synthesized x-space decay exponent is d/4"},
      {"xspace.refinement", "y-quadrature refinement changes the synthesized norms by < 5%"},
      {"solve.zero_data", "zero data gives the zero solution"},
      {"solve.conservation", "collision invariants annihilate Gamma(f,f)"},
      {"solve.gamma_bound", "the bilinear bound constant is stable over random smooth pairs"},
      {"solve.contraction", "the Picard map contracts"},
      {"solve.residual", "fixed-point residual <= 2 tol"},
      {"solve.monotone", "solution norm decays monotonically after the transient"},
      {"solve.reality", "conjugate-mode symmetry is preserved"},
      {"solve.decay_rate", "late-time decay rate equals the slowest lattice mode's spectral gap within 5%"},
      {"solve.doubling", "doubling the data scales the solution by [1.9, 2.2]"},
  };
  return reg;
}

Summary::Summary(const std::string& command, const Config& cfg) {
  j_["schema_version"] = kSchemaVersion;
  j_["code_version"] = kCodeVersion;
  j_["command"] = command;
  j_["config"] = cfg.to_json();
  j_["checks"] = json::array();
  j_["results"] = json::object();
}

void Summary::check(const std::string& tag, double measured, double bound, bool pass, const std::string& detail) {
  const auto& reg = check_registry();
  const auto it = reg.find(tag);
  if (it == reg.end()) throw std::logic_error("unregistered check tag " + tag);
  json c = {{"tag", tag}, {"claim", it->second}, {"pass", pass}};
  c["measured"] = std::isfinite(measured) ? json(measured) : json(nullptr);
  c["bound"] = std::isfinite(bound) ? json(bound) : json(nullptr);
  if (!detail.empty()) c["detail"] = detail;
  j_["checks"].push_back(c);
}

bool Summary::all_pass() const {
  for (const auto& c : j_["checks"])
    if (!c["pass"].get<bool>()) return false;
  return true;
}

json Summary::to_json() const {
  nlohmann::json j = j_;
  j["all_pass"] = all_pass();
  return j;
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header) : path_(path), cols_(header.size()) {
  for (const auto& h : header) field(h);
  end_row();
}

void CsvWriter::field(const std::string& s) {
  if (pending_ > 0) buf_ += ',';
  if (s.find_first_of(",\"\r\n") != std::string::npos) {
    buf_ += '"';
    for (char c : s) {
      if (c == '"') buf_ += '"';
      buf_ += c;
    }
    buf_ += '"';
  } else {
    buf_ += s;
  }
  ++pending_;
}

CsvWriter& CsvWriter::add(double v) {
  field(format_real(v));
  return *this;
}

CsvWriter& CsvWriter::add(long long v) {
  field(std::to_string(v));
  return *this;
}

CsvWriter& CsvWriter::add(const std::string& v) {
  field(v);
  return *this;
}

void CsvWriter::end_row() {
  if (pending_ != cols_) throw std::logic_error("CsvWriter: row has " + std::to_string(pending_) + " fields, header " +
                                                std::to_string(cols_));
  buf_ += "\r\n";
  pending_ = 0;
  std::ofstream os(path_, std::ios::binary | std::ios::app);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path_);
  os << buf_;
  buf_.clear();
}

void write_cache(const std::string& path, const CacheHeader& h, const std::vector<Eigen::MatrixXcd>& records) {
  const fs::path tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::Io, "cannot write cache file " + path);
    os.write("KINSPEC", 8);
    put(os, h.version);
    put(os, h.d);
    put(os, h.gamma);
    put(os, h.grid_hash);
    put(os, h.key);
    put(os, std::uint32_t(records.size()));
    for (const auto& m : records) {
      put(os, std::uint64_t(m.rows()));
      put(os, std::uint64_t(m.cols()));
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
          put(os, m(i, j).real());
          put(os, m(i, j).imag());
        }
    }
    if (!os) throw Error(ErrorKind::Io, "short write to cache file " + path);
  }
  fs::rename(tmp, path);
}

std::vector<Eigen::MatrixXcd> read_cache(const std::string& path, const CacheHeader& expect) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot open cache file " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "KINSPEC", 8) != 0) throw Error(ErrorKind::Io, path + " is not a kinspec cache file");
  CacheHeader h;
  get(is, h.version, path);
  get(is, h.d, path);
  get(is, h.gamma, path);
  get(is, h.grid_hash, path);
  get(is, h.key, path);
  if (h.version != expect.version || h.d != expect.d || h.gamma != expect.gamma || h.grid_hash != expect.grid_hash ||
      h.key != expect.key)
    throw Error(ErrorKind::Precondition, "cache file " + path + " was written for a different configuration");
  std::uint32_t count;
  get(is, count, path);
  std::vector<Eigen::MatrixXcd> out;
  for (std::uint32_t r = 0; r < count; ++r) {
    std::uint64_t rows, cols;
    get(is, rows, path);
    get(is, cols, path);
    if (rows > (1u << 20) || cols > (1u << 20)) throw Error(ErrorKind::Io, "cache file " + path + " is malformed");
    Eigen::MatrixXcd m(rows, cols);
    for (std::uint64_t i = 0; i < rows; ++i)
      for (std::uint64_t j = 0; j < cols; ++j) {
        double re, im;
        get(is, re, path);
        get(is, im, path);
        m(i, j) = cplx(re, im);
      }
    out.push_back(std::move(m));
  }
  return out;
}

namespace {

std::uint64_t fnv(std::uint64_t h, const void* p, std::size_t n) {
  const unsigned char* c = static_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= c[i];
    h *= 1099511628211ull;
  }
  return h;
}

constexpr std::uint64_t kFnvBasis = 1469598103934665603ull;

}  // namespace

std::uint64_t content_key(const Config& cfg) {
  std::uint64_t h = kFnvBasis;
  for (const char* k : {"d", "gamma", "q0", "grid.scheme", "grid.n", "grid.extent", "kernel.rule"}) {
    const std::string s = std::string(k) + "=" + cfg.text(k) + ";";
    h = fnv(h, s.data(), s.size());
  }
  const std::string v = kCodeVersion;
  return fnv(h, v.data(), v.size());
}

std::uint64_t operator_hash(const Eigen::MatrixXd& m) {
  std::uint64_t h = kFnvBasis;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      h = fnv(h, &v, sizeof v);
    }
  return h;
}

SystemSource load_system(const Config& cfg, const std::string& cache_dir, bool use_cache) {
  const KernelParams p = cfg.kernel();
  const GridPtr g = cfg.grid();
  CacheHeader h;
  h.d = std::uint32_t(p.d);
  h.gamma = p.gamma;
  h.grid_hash = g->hash();
  h.key = content_key(cfg);
  SystemSource src;
  src.path = (fs::path(cache_dir) / ("operator-" + hex(h.key) + ".bin")).string();
  if (use_cache && fs::exists(src.path)) {
    const auto rec = read_cache(src.path, h);
    if (rec.size() != 2 || rec[0].rows() != g->size() || rec[0].cols() != g->size() || rec[1].rows() != g->size())
      throw Error(ErrorKind::Io, "cache file " + src.path + " has unexpected records");
    src.system = build_system(g, p, Eigen::MatrixXd(rec[0].real()), Eigen::VectorXd(rec[1].col(0).real()));
    src.from_cache = true;
  } else {
    src.system = build_system(g, p, cfg.assembly());
    if (use_cache) {
      fs::create_directories(cache_dir);
      write_cache(src.path, h, {src.system.K_nodal.cast<cplx>(), Eigen::MatrixXcd(src.system.nu.cast<cplx>())});
    }
  }
  src.hash = operator_hash(src.system.K_nodal);
  return src;
}

namespace {

struct Context {
  const Config& cfg;
  fs::path out;
  std::string cache_dir;
  bool use_cache;
  Summary& sum;
  std::string csv(const std::string& name) const {
    const fs::path p = out / name;
    fs::remove(p);
    return p.string();
  }
  LinearSystem system() const {
    SystemSource src = load_system(cfg, cache_dir, use_cache);
    sum.data()["operator"] = {{"hash", hex(src.hash)}, {"from_cache", src.from_cache}, {"cache_file", src.path},
                              {"n", src.system.n()}, {"grid", src.system.grid->describe()}};
    return std::move(src.system);
  }
};

Eigen::VectorXcd probe_profile(const LinearSystem& s) {
  const VelocityGrid& g = *s.grid;
  Eigen::VectorXcd u(g.size());
  for (int i = 0; i < g.size(); ++i) {
    const double x1 = g.nodes(i, 0), x2 = g.d > 1 ? g.nodes(i, 1) : 0.0;
    u(i) = (1.0 + x1 + 0.5 * x2 * x2) * std::exp(-g.speed(i) * g.speed(i) / 8.0);
  }
  return s.to_sym(u);
}

void cmd_kernel_check(Context& c) {
  const LinearSystem s = c.system();
  const KernelParams& p = s.params;
  const VelocityGrid& g = *s.grid;
  json& R = c.sum.data();
  // symmetry in the weighted inner product: W^{1/2} K W^{-1/2}
  const Eigen::MatrixXd Ks = g.sqrt_w.asDiagonal() * s.K_nodal * g.sqrt_w.cwiseInverse().asDiagonal();
  const double asym = (Ks - Ks.transpose()).norm() / Ks.norm();
  c.sum.check("kernel.symmetric", asym, 1e-8, asym <= 1e-8);
  const ClusterReport& cl = s.raw_cluster;
  c.sum.check("kernel.nonpositive", cl.max_eig, 1e-6 * std::abs(cl.min_eig), cl.nonpositive);
  int near = 0;
  for (double e : cl.eigenvalues) near += std::abs(e) <= 1e-6 * std::abs(cl.min_eig);
  c.sum.check("kernel.null_space", near, s.nk(), near == s.nk(),
              "cluster max " + format_real(cl.cluster_max) + ", gap " + format_real(cl.gap));
  R["L_eigen"] = {{"max", cl.max_eig}, {"min", cl.min_eig}, {"cluster_max", cl.cluster_max}, {"gap", cl.gap},
                  {"near_zero", near}};

  const NuBand band = nu_band(p, c.cfg.real("check.nu_radius"), c.cfg.integer("check.nu_points"));
  double gmin = INFINITY, gmax = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    if (g.speed(i) > c.cfg.real("check.nu_radius")) continue;
    const double v = s.nu(i) * std::pow(1.0 + g.speed(i), p.gamma);
    gmin = std::min(gmin, v);
    gmax = std::max(gmax, v);
  }
  const bool band_ok = band.nu0 > 0.0 && std::isfinite(band.nu1) && gmin > 0.0 && std::isfinite(gmax);
  c.sum.check("kernel.nu_band", band.nu1 / band.nu0, INFINITY, band_ok,
              "band [" + format_real(band.nu0) + ", " + format_real(band.nu1) + "], grid [" + format_real(gmin) +
                  ", " + format_real(gmax) + "]");
  R["nu_band"] = {{"nu0", band.nu0}, {"nu1", band.nu1}, {"grid_min", gmin}, {"grid_max", gmax}};
  {
    CsvWriter w(c.csv("kernel-check_nu.csv"), {"radius", "nu_weighted"});
    for (std::size_t k = 0; k < band.radii.size(); ++k) w.add(band.radii[k]).add(band.values[k]).end_row();
  }
  const int samples = c.cfg.integer("check.samples");
  const BoundCheck b1 = k1_bound_check(p, samples, 1), b2 = k2_bound_check(p, samples, 2);
  c.sum.check("kernel.k1_bound", b1.max_ratio, INFINITY, b1.finite);
  c.sum.check("kernel.k2_bound", b2.max_ratio, INFINITY, b2.finite);

  std::vector<GaussianIntegralCase> cases;
  const auto al = c.cfg.list("integrals.alpha"), a1 = c.cfg.list("integrals.a1"), a2 = c.cfg.list("integrals.a2");
  for (std::size_t k = 0; k < al.size(); ++k) cases.push_back({al[k], a1[k], a2[k], 1.0});
  const auto ap = verify_gaussian_integrals(p.d, cases, c.cfg.real("integrals.max_radius"), c.cfg.integer("integrals.points"));
  CsvWriter w(c.csv("kernel-check_integrals.csv"), {"integral", "alpha", "A1", "A2", "radius", "value", "weighted_ratio"});
  double worst = -INFINITY;
  bool all = true;
  for (const auto& a : ap) {
    for (std::size_t k = 0; k < a.radii.size(); ++k)
      w.add(a.which).add(a.c.alpha).add(a.c.A1).add(a.c.A2).add(a.radii[k]).add(a.values[k]).add(a.ratios[k]).end_row();
    worst = std::max(worst, a.tail_slope);
    all = all && a.pass;
    R["three_integrals"].push_back(
        {{"integral", a.which}, {"alpha", a.c.alpha}, {"A1", a.c.A1}, {"A2", a.c.A2}, {"tail_slope", a.tail_slope}, {"pass", a.pass}});
  }
  c.sum.check("kernel.three_integrals", worst, 0.1, all, "largest tail slope of the weighted ratio");
}

void cmd_assemble(Context& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const LinearSystem s = c.system();
  c.sum.data()["seconds"] = elapsed(t0);
  for (const auto& [k, v] : s.meta) c.sum.data()["assembly"][k] = v;
  CsvWriter w(c.csv("assemble.csv"), {"node", "xi1", "xi2", "xi3", "weight", "nu"});
  const VelocityGrid& g = *s.grid;
  for (int i = 0; i < g.size(); ++i) {
    w.add(i);
    for (int a = 0; a < 3; ++a) w.add(a < g.d ? g.nodes(i, a) : 0.0);
    w.add(g.w(i)).add(s.nu(i)).end_row();
  }
}

void cmd_spectrum(Context& c) {
  const LinearSystem s = c.system();
  const int d = s.d();
  const ClusterReport& cl = s.raw_cluster;
  int near = 0;
  for (double e : cl.eigenvalues) near += std::abs(e) <= 1e-6 * std::abs(cl.min_eig);
  c.sum.check("spectrum.null_space", near, s.nk(), near == s.nk() && cl.nonpositive,
              "gap ratio " + format_real(cl.gap_ratio));
  {
    CsvWriter w(c.csv("spectrum.csv"), {"index", "eigenvalue"});
    for (std::size_t k = 0; k < cl.eigenvalues.size(); ++k) w.add(int(k)).add(cl.eigenvalues[k]).end_row();
  }
  const AlphaConstants a = alpha_constants(s);
  c.sum.check("spectrum.alpha1", a.alpha1, 1.0, std::abs(a.alpha1 - 1.0) <= 1e-3);
  c.sum.check("spectrum.alpha2", a.alpha2, std::sqrt(2.0 / d), std::abs(a.alpha2 - std::sqrt(2.0 / d)) <= 1e-3);
  const bool split = a.remainder3 > 0.0 && a.remainder4 > 0.0 && a.decomposition_error <= 1e-8 * std::max(a.alpha3, a.alpha4);
  c.sum.check("spectrum.alpha_decomposition", a.decomposition_error, 1e-8 * std::max(a.alpha3, a.alpha4), split);
  c.sum.data()["alpha"] = {{"alpha1", a.alpha1}, {"alpha2", a.alpha2}, {"alpha3", a.alpha3}, {"alpha4", a.alpha4},
                           {"p_part3", a.p_part3}, {"p_part4", a.p_part4}, {"remainder3", a.remainder3},
                           {"remainder4", a.remainder4}};
  // expected pattern: couplings alpha1 between psi_0 and psi_1, alpha2 between psi_1 and psi_{d+1}
  const DispersionMatrix D = dispersion_matrix(s, 0.0, 0.0, 0.0);
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(s.nk(), s.nk());
  expect(0, 1) = expect(1, 0) = a.alpha1;
  expect(1, d + 1) = expect(d + 1, 1) = a.alpha2;
  const double dev = (D.entries - expect.cast<cplx>()).cwiseAbs().maxCoeff();
  c.sum.check("spectrum.dispersion_origin", dev, 1e-3, dev <= 1e-3);
  const EtaResult e = eigen_eta(D);
  const double root = std::sqrt(1.0 + 2.0 / d);
  std::vector<double> got, want(s.nk(), 0.0);
  for (int j = 0; j < s.nk(); ++j) got.push_back(e.values(j).real());
  want.front() = root;
  want.back() = -root;
  std::vector<double> sg = got;
  std::sort(sg.begin(), sg.end(), std::greater<>());
  double edev = 0.0;
  for (int j = 0; j < s.nk(); ++j) edev = std::max(edev, std::abs(sg[j] - want[j]));
  for (int j = 0; j < s.nk(); ++j) edev = std::max(edev, std::abs(e.values(j).imag()));
  c.sum.check("spectrum.dispersion_eigenvalues", edev, 2e-3, edev <= 2e-3);
  c.sum.data()["dispersion_origin"] = {{"eigenvalues", got}};
  for (int j = 0; j < s.nk(); ++j) {
    std::vector<double> row;
    for (int k = 0; k < s.nk(); ++k) row.push_back(D.entries(j, k).real());
    c.sum.data()["dispersion_origin"]["matrix"].push_back(row);
  }
}

void cmd_branches(Context& c) {
  const LinearSystem s = c.system();
  const int d = s.d();
  const auto rg = logspace(c.cfg.real("r.min"), c.cfg.real("r.max"), c.cfg.integer("r.count"));
  BranchOptions opt;
  opt.with_oracle = c.cfg.flag("branches.oracle");
  const auto branches = trace_all_branches(s, rg, opt);
  const auto closed = sigma2_closed_forms(s);
  const double root = 2.0 * kPi * std::sqrt(1.0 + 2.0 / d);
  CsvWriter w(c.csv("branches.csv"), {"j", "r", "re_lambda", "im_lambda", "oracle_re", "oracle_im", "abs_gap"});
  double tau_dev = 0.0, sig_max = -INFINITY, closed_dev = 0.0, oracle_gap = 0.0;
  bool truncated = false;
  for (const auto& b : branches) {
    for (std::size_t k = 0; k < b.r_samples.size(); ++k) {
      const cplx o = k < b.oracle.size() ? b.oracle[k] : cplx(NAN, NAN);
      const double gap = std::abs(o - b.lambda_samples[k]);
      if (std::isfinite(gap)) oracle_gap = std::max(oracle_gap, gap);
      w.add(b.j).add(b.r_samples[k]).add(b.lambda_samples[k].real()).add(b.lambda_samples[k].imag()).add(o.real())
          .add(o.imag()).add(gap).end_row();
    }
    truncated = truncated || b.truncated;
    json jb = {{"j", b.j}, {"samples", b.r_samples.size()}, {"truncated", b.truncated}, {"note", b.note}};
    try {
      const AsymptoticFit f = fit_asymptotics(b);
      const double want = b.j == 0 ? -root : b.j == d + 1 ? root : 0.0;
      tau_dev = std::max(tau_dev, std::abs(f.tau1 - want) / root);
      sig_max = std::max(sig_max, f.sigma2);
      jb.update({{"tau1", f.tau1}, {"tau1_expected", want}, {"tau3", f.tau3}, {"sigma2", f.sigma2}, {"sigma3", f.sigma3},
                 {"fit_residual", f.residual}, {"sigma2_closed_form", closed[b.j]}});
      if (b.j >= 2 && b.j <= d) closed_dev = std::max(closed_dev, std::abs(f.sigma2 - closed[b.j]) / std::abs(closed[b.j]));
    } catch (const Error& e) {
      jb["fit_error"] = e.what();
      tau_dev = sig_max = closed_dev = INFINITY;
    }
    c.sum.data()["branches"].push_back(jb);
  }
  c.sum.check("branches.tau1", tau_dev, 0.02, tau_dev <= 0.02, "relative to 2 pi sqrt(1+2/d)");
  c.sum.check("branches.sigma2_negative", sig_max, 0.0, sig_max < 0.0);
  c.sum.check("branches.sigma2_closed_form", closed_dev, 0.03, closed_dev <= 0.03);
  if (opt.with_oracle)
    c.sum.check("branches.oracle", oracle_gap, 1e-6, oracle_gap <= 1e-6 && !truncated);
}

void cmd_decay(Context& c) {
  const LinearSystem s = c.system();
  const Eigen::VectorXcd u = probe_profile(s);
  const double beta = c.cfg.real("decay.beta"), r3 = c.cfg.real("decay.r3");
  const double tmin = c.cfg.real("time.min"), tmax = c.cfg.real("time.max");
  const int tc = c.cfg.integer("time.count");
  const auto times = log_times(tmin, tmax, tc);
  // doubled horizon at the same log density
  const int tc2 = tc + int(std::lround((tc - 1) * std::log(2.0) / std::log(tmax / tmin)));
  const auto times2 = log_times(tmin, 2.0 * tmax, tc2);
  CsvWriter w(c.csv("decay.csv"), {"y", "alpha", "t", "norm", "certified_ratio"});
  double stab = 0.0, contraction = 0.0, law = 0.0, duh = 0.0, slope_dev = 0.0;
  bool finite = true, weighted_ok = true;
  for (double yn : c.cfg.list("decay.y")) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(s.d());
    y(0) = yn;
    const Evolution ev = evolve(s.Bhat_sym(y), u, times, false);
    for (std::size_t k = 0; k < times.size(); ++k) contraction = std::max(contraction, ev.states[k].norm() / u.norm() - 1.0);
    const Propagator pr(s.Bhat_sym(y));
    for (double ts : {0.3, 2.0, 7.0}) {
      const Eigen::VectorXcd a = pr.apply(2.0 * ts, u), b = pr.apply(ts, pr.apply(ts, u));
      law = std::max(law, (a - b).norm() / a.norm());
    }
    duh = std::max(duh, duhamel_check(s, y, u, c.cfg.real("decay.duhamel_t")).rel_error);
    const GeneratorCheck gc = generator_consistency(s, y, u);
    slope_dev = std::max(slope_dev, std::abs(gc.slope - 1.0));
    for (double alpha : c.cfg.list("decay.alpha")) {
      const SemigroupProbe pb = decay_probe(s, y, alpha, beta, u, times, r3);
      const SemigroupProbe pb2 = decay_probe(s, y, alpha, beta, u, times2, r3);
      for (std::size_t k = 0; k < pb.times.size(); ++k)
        w.add(yn).add(alpha).add(pb.times[k]).add(pb.norms[k]).add(pb.ratios[k]).end_row();
      finite = finite && std::isfinite(pb.sup_ratio) && std::isfinite(pb2.sup_ratio);
      const double rel = std::abs(pb2.sup_ratio / pb.sup_ratio - 1.0);
      stab = std::max(stab, rel);
      const WeightedADecay wa = weighted_A_decay(s, y, u, alpha, beta, times);
      weighted_ok = weighted_ok && wa.pass;
      c.sum.data()["probes"].push_back({{"y", yn}, {"alpha", alpha}, {"sup_ratio", pb.sup_ratio},
                                        {"sup_ratio_doubled", pb2.sup_ratio}, {"rho", pb.rho},
                                        {"fit_exponent", pb.fit.exponent}, {"method", pb.method},
                                        {"weighted_A_ratio", wa.sup_ratio}, {"weighted_A_bound", wa.bound}});
    }
  }
  c.sum.check("decay.contraction", contraction, 1e-10, contraction <= 1e-10, "max ||e^{tB}u|| / ||u|| - 1");
  c.sum.check("decay.semigroup_law", law, 1e-8, law <= 1e-8);
  c.sum.check("decay.duhamel", duh, 1e-5, duh <= 1e-5);
  c.sum.check("decay.generator", slope_dev, 0.1, slope_dev <= 0.1, "deviation of the log-log slope from 1");
  double mdev = 0.0;
  for (double alpha : c.cfg.list("decay.alpha")) {
    const MaximizerCheck m = lemma_maximizer(alpha, 0.7);
    mdev = std::max(mdev, std::abs(m.numeric - m.analytic) / m.analytic);
  }
  c.sum.check("decay.maximizer", mdev, 1e-8, mdev <= 1e-8);
  c.sum.check("decay.weighted_A", 0.0, 0.0, weighted_ok);
  c.sum.check("decay.certified_ratio", stab, 0.1, finite && stab <= 0.1, "relative change under doubled horizon");
}

void cmd_xspace(Context& c) {
  const LinearSystem s = c.system();
  const VelocityGrid& g = *s.grid;
  Eigen::VectorXcd u0(g.size());
  for (int i = 0; i < g.size(); ++i) {
    const double r2 = g.speed(i) * g.speed(i);
    u0(i) = std::exp(-0.25 * r2) * (1.0 + 0.3 * r2);
  }
  const double width = c.cfg.real("xspace.width");
  auto phi = [width](double r) { return std::exp(-r * r / width); };
  const auto times = log_times(1.0, c.cfg.real("xspace.t_max"), c.cfg.integer("xspace.t_count"), false);
  const XspaceResult r = xspace_decay(s, s.to_sym(u0), phi, times, c.cfg.real("xspace.r0"), c.cfg.real("xspace.rmax"),
                                      c.cfg.integer("xspace.per_panel"), c.cfg.real("xspace.fit_lo"),
                                      c.cfg.real("xspace.fit_hi"));
  CsvWriter w(c.csv("xspace.csv"), {"t", "synthesized_norm", "fitted_exponent_running"});
  for (std::size_t k = 0; k < r.times.size(); ++k)
    w.add(r.times[k]).add(r.norms[k]).add(k < r.running_exponent.size() ? r.running_exponent[k] : NAN).end_row();
  const double target = 0.25 * s.d();
  c.sum.check("xspace.exponent", r.fit.exponent, target, std::abs(r.fit.exponent - target) <= 0.1,
              "tolerance 0.1 around d/4");
  c.sum.check("xspace.refinement", r.refinement_diff, 0.05, r.refinement_diff <= 0.05);
  c.sum.data()["fit"] = {{"exponent", r.fit.exponent}, {"t_lo", r.fit.t_lo}, {"t_hi", r.fit.t_hi},
                         {"residual", r.fit.residual}, {"y_nodes", r.y_nodes}};
}

SolverConfig solver_config(const Config& cfg) {
  SolverConfig sc;
  sc.alpha = cfg.real("solve.alpha");
  sc.beta = cfg.real("solve.beta");
  sc.l = cfg.real("solve.l");
  sc.dt = cfg.real("solve.dt");
  sc.t_end = cfg.real("solve.t_end");
  sc.gauss_points = cfg.integer("solve.gauss_points");
  sc.tol = cfg.real("solve.tol");
  sc.max_iter = cfg.integer("solve.max_iter");
  sc.smallness = cfg.real("solve.smallness");
  return sc;
}

GammaOptions gamma_options(const Config& cfg) {
  GammaOptions o;
  o.interp = cfg.text("collision.interp") == "hermite" ? Interpolation::Hermite : Interpolation::Multilinear;
  o.angular = cfg.text("collision.angular") == "aligned" ? AngularRule::Aligned : AngularRule::Fixed;
  o.polar = cfg.integer("collision.polar");
  o.azimuth = cfg.integer("collision.azimuth");
  o.sphere_points = cfg.integer("collision.sphere_points");
  return o;
}

void cmd_solve(Context& c) {
  const LinearSystem s = c.system();
  const CollisionForm form(s.grid, s.params, gamma_options(c.cfg));
  const Lattice lat = make_lattice(s.d(), c.cfg.integer("solve.modes"), c.cfg.real("solve.period"));
  const SolverConfig sc = solver_config(c.cfg);
  json& R = c.sum.data();

  // Gamma diagnostics on smooth random data
  double cons = 0.0;
  for (unsigned k = 0; k < 3; ++k)
    cons = std::max(cons, conservation_check(form, s.basis.columns, random_smooth_perturbation(*s.grid, 100 + k)).max_relative);
  c.sum.check("solve.conservation", cons, 1e-3, cons <= 1e-3);
  const GammaBoundReport gb = gamma_bound_check(form, c.cfg.integer("gamma_bound.samples"), sc.beta, sc.alpha);
  c.sum.check("solve.gamma_bound", gb.constant / gb.constant_half, 1.2, gb.stable);
  R["gamma"] = {{"conservation", cons}, {"bound_constant", gb.constant}, {"mixed_constant", gb.mixed_constant},
                {"leakage_fraction", form.leakage_fraction()}};

  const CauchyResult zero = solve_cauchy(s, form, lat, Eigen::MatrixXcd::Zero(s.n(), lat.size()), sc);
  c.sum.check("solve.zero_data", zero.sup_norm, 0.0, zero.sup_norm == 0.0);

  const double amp = c.cfg.real("solve.amplitude");
  const auto seed = unsigned(c.cfg.integer("solve.seed"));
  const auto t0 = std::chrono::steady_clock::now();
  const CauchyResult r = solve_cauchy(s, form, lat, cosine_data(s, lat, amp, seed), sc);
  R["seconds"] = elapsed(t0);
  const double q = r.contraction.empty() ? 0.0 : *std::max_element(r.contraction.begin(), r.contraction.end());
  c.sum.check("solve.contraction", q, 0.9, q < 0.9);
  c.sum.check("solve.residual", r.residual, 2.0 * sc.tol, r.residual <= 2.0 * sc.tol);
  c.sum.check("solve.monotone", r.transient_end, 0.5 * sc.t_end, r.monotone_after_transient);
  c.sum.check("solve.reality", r.reality_defect, 1e-12, r.reality_defect <= 1e-12);
  // late-time exponential rate over the second half of the horizon
  std::size_t h0 = r.times.size() / 2;
  double rate = NAN;
  if (r.times.size() >= 4 && r.norms.back() > 0.0)
    rate = -std::log(r.norms.back() / r.norms[h0]) / (r.times.back() - r.times[h0]);
  const double rate_dev = std::abs(rate / std::abs(r.spectral_abscissa) - 1.0);
  c.sum.check("solve.decay_rate", rate_dev, 0.05, rate_dev <= 0.05,
              "late rate " + format_real(rate) + " vs slowest-mode abscissa " + format_real(r.spectral_abscissa));
  R["run"] = {{"iterations", r.iterations}, {"contraction", r.contraction}, {"distances", r.distances},
              {"residual", r.residual}, {"sup_norm", r.sup_norm}, {"late_rate", rate},
              {"spectral_abscissa", r.spectral_abscissa}, {"transient_end", r.transient_end},
              {"smallness_estimate", r.contraction.empty() ? NAN : estimate_smallness(r, amp)}};
  if (c.cfg.flag("solve.doubling")) {
    const CauchyResult r2 = solve_cauchy(s, form, lat, cosine_data(s, lat, 2.0 * amp, seed), sc);
    const double ratio = r2.sup_norm / r.sup_norm;
    c.sum.check("solve.doubling", ratio, 2.0, ratio >= 1.9 && ratio <= 2.2);
    R["doubling"] = {{"sup_norm", r2.sup_norm}, {"ratio", ratio}};
  }
  std::vector<std::string> head = {"t", "norm", "l2_norm"};
  for (int k = 0; k < lat.size(); ++k) head.push_back("mode_" + std::to_string(k));
  CsvWriter w(c.csv("solve.csv"), head);
  std::vector<Eigen::MatrixXcd> dump;
  for (std::size_t n = 0; n < r.times.size(); ++n) {
    w.add(r.times[n]).add(r.norms[n]).add(r.l2_norms[n]);
    for (double m : r.mode_norms[n]) w.add(m);
    w.end_row();
    dump.push_back(r.trajectory[n].coeffs);
  }
  CacheHeader h;
  h.d = std::uint32_t(s.d());
  h.gamma = s.params.gamma;
  h.grid_hash = s.grid->hash();
  h.key = content_key(c.cfg);
  write_cache((c.out / "solve_trajectory.bin").string(), h, dump);
}

}  // namespace

const std::vector<std::string>& commands() {
  static const std::vector<std::string> c = {"kernel-check", "assemble", "spectrum", "branches", "decay", "xspace", "solve"};
  return c;
}

json run(const std::string& command, const Config& cfg, const std::string& out, bool use_cache) {
  const auto& cmds = commands();
  if (std::find(cmds.begin(), cmds.end(), command) == cmds.end())
    throw Error(ErrorKind::Config, "unknown command '" + command + "'");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create output directory " + out + ": " + ec.message());
  Summary sum(command, cfg);
  const std::string cache_dir = cfg.text("cache.dir").empty() ? (fs::path(out) / "cache").string() : cfg.text("cache.dir");
  Context ctx{cfg, fs::path(out), cache_dir, use_cache, sum};
  const auto t0 = std::chrono::steady_clock::now();
  if (command == "kernel-check") cmd_kernel_check(ctx);
  else if (command == "assemble") cmd_assemble(ctx);
  else if (command == "spectrum") cmd_spectrum(ctx);
  else if (command == "branches") cmd_branches(ctx);
  else if (command == "decay") cmd_decay(ctx);
  else if (command == "xspace") cmd_xspace(ctx);
  else cmd_solve(ctx);
  sum.data()["wall_seconds"] = elapsed(t0);
  const json j = sum.to_json();
  const fs::path jp = fs::path(out) / (command + ".json");
  std::ofstream os(jp);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + jp.string());
  os << j.dump(2) << "\n";
  return j;
}

}  // namespace kinspec::cli
