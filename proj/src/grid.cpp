#include "kinspec/grid.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "kinspec/errors.hpp"
#include "kinspec/quadrature.hpp"

namespace kinspec {

GridScheme parse_scheme(const std::string& s) {
  if (s == "gauss_hermite" || s == "gh") return GridScheme::GaussHermite;
  if (s == "uniform") return GridScheme::Uniform;
  throw Error(ErrorKind::Config, "unknown grid scheme '" + s + "' (expected gauss_hermite or uniform)");
}

std::string scheme_name(GridScheme s) { return s == GridScheme::GaussHermite ? "gauss_hermite" : "uniform"; }

int VelocityGrid::flat_index(const std::vector<int>& idx) const {
  int f = 0;
  for (int k = 0; k < d; ++k) f = f * per_axis + idx[k];
  return f;
}

std::vector<int> VelocityGrid::multi_index(int i) const {
  std::vector<int> idx(d);
  for (int k = d - 1; k >= 0; --k) {
    idx[k] = i % per_axis;
    i /= per_axis;
  }
  return idx;
}

double VelocityGrid::maxwellian_mass() const { return (w.array() * sqrtM.array().square()).sum(); }

Eigen::VectorXd VelocityGrid::weight_beta(double beta) const {
  return (1.0 + speed.array()).pow(beta).matrix();
}

double VelocityGrid::norm_beta(const Eigen::VectorXcd& u, double beta) const {
  return std::sqrt((w.array() * (1.0 + speed.array()).pow(2.0 * beta) * u.array().abs2()).sum());
}

double VelocityGrid::norm_beta(const Eigen::VectorXd& u, double beta) const {
  return std::sqrt((w.array() * (1.0 + speed.array()).pow(2.0 * beta) * u.array().square()).sum());
}

double VelocityGrid::sup_beta(const Eigen::VectorXcd& u, double beta) const {
  return ((1.0 + speed.array()).pow(beta) * u.array().abs()).maxCoeff();
}

std::uint64_t VelocityGrid::hash() const {
  // FNV-1a over the defining data
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* p, std::size_t n) {
    const unsigned char* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ull;
    }
  };
  int s = int(scheme);
  mix(&d, sizeof d);
  mix(&s, sizeof s);
  mix(&per_axis, sizeof per_axis);
  mix(axis.data(), axis.size() * sizeof(double));
  mix(axis_w.data(), axis_w.size() * sizeof(double));
  return h;
}

std::string VelocityGrid::describe() const {
  std::ostringstream os;
  os << scheme_name(scheme) << " d=" << d << " per_axis=" << per_axis << " n=" << size() << " extent=" << extent;
  return os.str();
}

GridPtr build_grid(int d, GridScheme scheme, int resolution, double extent) {
  if (d < 2) throw Error(ErrorKind::Precondition, "build_grid: d must be >= 2");
  if (resolution < 4) throw Error(ErrorKind::Precondition, "build_grid: resolution must be >= 4 per axis");
  auto g = std::make_shared<VelocityGrid>();
  g->d = d;
  g->scheme = scheme;
  g->per_axis = resolution;
  if (scheme == GridScheme::GaussHermite) {
    Rule1D r = gauss_hermite_prob(resolution);
    g->axis = r.x;
    for (int k = 0; k < resolution; ++k) g->axis_w.push_back(r.w[k] * std::exp(0.5 * r.x[k] * r.x[k]));
  } else {
    if (!(extent > 0.0)) throw Error(ErrorKind::Precondition, "build_grid: uniform scheme needs extent > 0");
    const double h = 2.0 * extent / resolution;
    for (int k = 0; k < resolution; ++k) {
      g->axis.push_back(-extent + (k + 0.5) * h);
      g->axis_w.push_back(h);
    }
  }
  long n = 1;
  for (int k = 0; k < d; ++k) n *= resolution;
  g->nodes.resize(n, d);
  g->w.resize(n);
  for (long i = 0; i < n; ++i) {
    std::vector<int> idx = g->multi_index(int(i));
    double wi = 1.0;
    for (int k = 0; k < d; ++k) {
      g->nodes(i, k) = g->axis[idx[k]];
      wi *= g->axis_w[idx[k]];
    }
    g->w(i) = wi;
  }
  g->sqrt_w = g->w.cwiseSqrt();
  g->speed = g->nodes.rowwise().norm();
  g->sqrtM = (std::pow(2.0 * std::numbers::pi, -0.25 * d) * (-0.25 * g->speed.array().square()).exp()).matrix();
  g->extent = scheme == GridScheme::GaussHermite ? g->speed.maxCoeff() : extent;
  const double mass = g->maxwellian_mass();
  if (std::abs(mass - 1.0) > 1e-4)
    throw Error(ErrorKind::Precondition,
                "build_grid: resolution too low, Maxwellian mass on grid = " + std::to_string(mass));
  return g;
}

}  // namespace kinspec
