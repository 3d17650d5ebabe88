#include "kinspec/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "kinspec/errors.hpp"
#include "kinspec/quadrature.hpp"

namespace kinspec {

namespace {
constexpr double kPi = std::numbers::pi;
}

double KernelParams::angular_integral() const {
  if (!b) return q0 * 2.0 * std::pow(kPi, 0.5 * (d - 1)) / boost::math::tgamma(0.5 * (d + 1));
  // |S^{d-2}| int_0^pi b(cos phi) sin^{d-2} phi dphi
  auto f = [&](double ph) { return b(std::cos(ph)) * std::pow(std::sin(ph), d - 2); };
  return sphere_area(d - 1) * integrate_gk(f, 0.0, kPi, 1e-12, "angular_integral");
}

void KernelParams::validate() const {
  if (d < 2) throw Error(ErrorKind::Precondition, "kernel: d must be >= 2, got " + std::to_string(d));
  if (!(gamma >= 0.0 && gamma < d))
    throw Error(ErrorKind::Precondition, "kernel: gamma must satisfy 0 <= gamma < d");
  if (!(q0 > 0.0)) throw Error(ErrorKind::Precondition, "kernel: q0 must be positive");
  if (!(eps > 0.0 && eps < 1.0)) throw Error(ErrorKind::Precondition, "kernel: eps must lie in (0,1)");
}

CollisionGeometry collision_geometry(const Vec& xi, const Vec& xi_star) {
  CollisionGeometry g;
  g.xi = xi;
  g.xi_star = xi_star;
  Vec u = xi_star - xi;
  g.dist = u.norm();
  Vec c = 0.5 * (xi + xi_star);
  if (g.dist == 0.0) {
    g.b_vec = Vec::Zero(xi.size());
    g.a = c;
    return g;
  }
  Vec e = u / g.dist;
  g.b_vec = c.dot(e) * e;
  g.a = c - g.b_vec;
  return g;
}

double maxwellian(const Vec& xi) {
  const int d = int(xi.size());
  return std::pow(2.0 * kPi, -0.5 * d) * std::exp(-0.5 * xi.squaredNorm());
}

double sphere_mgf_scaled(int m, double kappa) {
  kappa = std::abs(kappa);
  if (m == 1) return 1.0 + std::exp(-2.0 * kappa);
  if (kappa < 1e-10) return sphere_area(m);
  if (m == 3) return 2.0 * kPi * (-std::expm1(-2.0 * kappa)) / kappa;
  const double v = 0.5 * m - 1.0;
  double ie;
  if (kappa > 600.0) {
    const double mu = 4.0 * v * v, z = 8.0 * kappa;
    ie = (1.0 - (mu - 1.0) / z + (mu - 1.0) * (mu - 9.0) / (2.0 * z * z)) / std::sqrt(2.0 * kPi * kappa);
  } else {
    ie = boost::math::cyl_bessel_i(v, kappa) * std::exp(-kappa);
  }
  return std::pow(2.0 * kPi, 0.5 * m) * std::pow(kappa, -v) * ie;
}

double nu_of_xi(const KernelParams& p, const Vec& xi, const QuadSpec& quad) {
  p.validate();
  const int d = p.d;
  const double x = xi.norm();
  // S_b (2pi)^{-d/2} int_0^inf r^{d-1-gamma} e^{-(r-|xi|)^2/2} mgf_d(r|xi|) dr
  auto f = [&](double r) {
    if (r <= 0.0) return 0.0;
    return std::pow(r, d - 1 - p.gamma) * std::exp(-0.5 * (r - x) * (r - x)) * sphere_mgf_scaled(d, r * x);
  };
  const double R = x + 12.0;
  double v;
  if (x > 1.0)
    v = integrate_ts(f, 0.0, x, quad.rel_tol, "nu_of_xi") + integrate_ts(f, x, R, quad.rel_tol, "nu_of_xi");
  else
    v = integrate_ts(f, 0.0, R, quad.rel_tol, "nu_of_xi");
  return p.angular_integral() * std::pow(2.0 * kPi, -0.5 * d) * v;
}

double k2_eval(const KernelParams& p, const Vec& xi, const Vec& xi_star) {
  const double dist = (xi_star - xi).norm();
  if (p.gamma > 0.0 && dist == 0.0) throw Error(ErrorKind::Singular, "k2_eval: coincident points with gamma > 0");
  const double s = p.gamma > 0.0 ? std::pow(dist, -p.gamma) : 1.0;
  return -std::pow(2.0 * kPi, -0.5 * p.d) * std::exp(-0.25 * (xi.squaredNorm() + xi_star.squaredNorm())) * s *
         p.angular_integral();
}

double k1_reduced(const KernelParams& p, double eps, double A, double B, double rel_tol) {
  const int d = p.d;
  const double epsd = std::pow(eps, d - 2);
  // both pairings of post-collision velocities contribute; the second carries the cone Jacobian
  auto f = [&](double rho) {
    const double u2 = eps * eps + rho * rho, u = std::sqrt(u2);
    const double ang = std::pow(rho, d - 2) * p.angular(eps / u) + epsd * p.angular(rho / u);
    return std::pow(u, -p.gamma) * ang * std::exp(-0.5 * (rho - A) * (rho - A)) * sphere_mgf_scaled(d - 1, A * rho);
  };
  const double R = A + 11.0;
  double J;
  if (A > 2.0)
    J = integrate_gk(f, 0.0, A - 1.0, rel_tol, "k1_eval") + integrate_gk(f, A - 1.0, R, rel_tol, "k1_eval");
  else
    J = integrate_gk(f, 0.0, R, rel_tol, "k1_eval");
  return 2.0 * std::pow(2.0 * kPi, -0.5 * d) * std::pow(eps, -(d - 1)) * std::exp(-0.5 * B * B - eps * eps / 8.0) * J;
}

double k1_eval(const KernelParams& p, const Vec& xi, const Vec& xi_star, const QuadSpec& quad) {
  CollisionGeometry g = collision_geometry(xi, xi_star);
  if (g.dist == 0.0) throw Error(ErrorKind::Singular, "k1_eval: coincident points");
  return k1_reduced(p, g.dist, g.a.norm(), g.b_vec.norm(), quad.rel_tol);
}

namespace {

// Axisymmetric integrand about xi: xi_* = xi + s sigma with cos(angle(sigma, xi)) = cos phi.
// Returns k at that point; the integrand depends on sigma only through phi.
double k_polar(const KernelParams& p, double x, double s, double c, double rel_tol) {
  // |b| = |s/2 + x c|, |a|^2 = |xi + u/2|^2 - b^2
  const double bb = 0.5 * s + x * c;
  const double c2 = x * x + x * s * c + 0.25 * s * s;
  const double A = std::sqrt(std::max(0.0, c2 - bb * bb));
  const double k1 = k1_reduced(p, s, A, std::abs(bb), rel_tol);
  const double xs2 = x * x + s * s + 2.0 * s * x * c;
  const double k2 = -std::pow(2.0 * kPi, -0.5 * p.d) * std::exp(-0.25 * (x * x + xs2)) *
                    (p.gamma > 0.0 ? std::pow(s, -p.gamma) : 1.0) * p.angular_integral();
  return k1 + k2;
}

}  // namespace

double kernel_ball_integral(const KernelParams& p, const Vec& xi, double radius, int n_radial, int n_polar) {
  const int d = p.d;
  const double x = xi.norm();
  // s = radius t^2 smooths the s^{d-1-gamma} endpoint
  Rule1D rt = gauss_legendre(n_radial, 0.0, 1.0);
  Rule1D rp = gauss_legendre(n_polar, 0.0, kPi);
  const double area = sphere_area(d - 1);
  double tot = 0.0;
  for (int i = 0; i < n_radial; ++i) {
    const double t = rt.x[i], s = radius * t * t, ds = 2.0 * radius * t * rt.w[i];
    double inner = 0.0;
    for (int k = 0; k < n_polar; ++k) {
      const double ph = rp.x[k];
      inner += rp.w[k] * std::pow(std::sin(ph), d - 2) * k_polar(p, x, s, std::cos(ph), 1e-9);
    }
    tot += ds * std::pow(s, d - 1) * area * inner;
  }
  return tot;
}

double weighted_kernel_integral(const KernelParams& p, const Vec& xi, double pw, double beta, const QuadSpec& quad) {
  p.validate();
  const int d = p.d;
  if (pw < 1.0) throw Error(ErrorKind::Precondition, "weighted_kernel_integral: p must be >= 1");
  const double pmax = std::min(d > 2 ? double(d) / (d - 2) : INFINITY, p.gamma > 0 ? d / p.gamma : INFINITY);
  if (!(pw < pmax))
    throw Error(ErrorKind::Precondition, "weighted_kernel_integral: p must be below min(d/(d-2), d/gamma)");
  const double x = xi.norm();
  const double tol = std::max(quad.rel_tol, 1e-9);
  const double area = sphere_area(d - 1);
  auto inner = [&](double s) {
    if (s <= 0.0) return 0.0;
    auto g = [&](double ph) {
      const double c = std::cos(ph);
      const double xs = std::sqrt(std::max(0.0, x * x + s * s + 2.0 * s * x * c));
      return std::pow(std::sin(ph), d - 2) * std::pow(1.0 + xs, beta) *
             std::pow(std::abs(k_polar(p, x, s, c, 1e-10)), pw);
    };
    return area * std::pow(s, d - 1) * integrate_gk(g, 0.0, kPi, tol, "weighted_kernel_integral");
  };
  const double S = 16.0 + 2.0 * std::sqrt(std::max(beta, 0.0));
  return integrate_ts(inner, 0.0, 2.0, tol, "weighted_kernel_integral") +
         integrate_gk(inner, 2.0, S, tol, "weighted_kernel_integral");
}

PowerFit fit_power_decay(const std::vector<double>& x, const std::vector<double>& y) {
  const int n = int(x.size());
  Eigen::MatrixXd A(n, 2);
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = -std::log1p(x[i]);
    rhs(i) = std::log(y[i]);
  }
  Eigen::VectorXd c = A.colPivHouseholderQr().solve(rhs);
  PowerFit f;
  f.C = std::exp(c(0));
  f.e = c(1);
  f.residual = (A * c - rhs).cwiseAbs().maxCoeff();
  return f;
}

DecaySweep weighted_kernel_decay(const KernelParams& p, double pw, double beta, const std::vector<double>& radii,
                                 const QuadSpec& quad) {
  DecaySweep s;
  s.radii = radii;
  for (double r : radii) {
    Vec xi = Vec::Zero(p.d);
    xi(0) = r;
    s.values.push_back(weighted_kernel_integral(p, xi, pw, beta, quad));
  }
  // asymptotic exponent: fit on the upper half of the sweep
  std::size_t h = radii.size() / 2;
  std::vector<double> xr(radii.begin() + h, radii.end()), yr(s.values.begin() + h, s.values.end());
  s.fit = fit_power_decay(xr, yr);
  s.e_claimed = -beta + pw * (p.gamma + 1.0) + 1.0;
  return s;
}

double gaussian_integral_exponent(int which, const GaussianIntegralCase& c) {
  if (which == 1) return 1.0;
  if (which == 2) return c.alpha;
  return c.beta + 1.0;
}

double gaussian_integral(int which, int d, const GaussianIntegralCase& c, double x, double rel_tol) {
  if (which < 1 || which > 3) throw Error(ErrorKind::Precondition, "gaussian_integral: index must be 1, 2 or 3");
  if (!(c.alpha < d)) throw Error(ErrorKind::Precondition, "gaussian_integral: alpha must be below d");
  if (which > 1 && c.alpha < 0.0)
    throw Error(ErrorKind::Precondition, "gaussian_integral: alpha must be >= 0 for integrals 2 and 3");
  if (!(c.A1 > 0.0) || c.A2 < 0.0) throw Error(ErrorKind::Precondition, "gaussian_integral: need A1 > 0, A2 >= 0");
  const double area = sphere_area(d - 1);
  const double S = std::sqrt(80.0 / c.A1);
  if (which == 2) {
    auto f = [&](double s) {
      if (s <= 0.0) return 0.0;
      return std::pow(s, d - 1 - c.alpha) * std::exp(-c.A1 * (s - x) * (s - x)) * sphere_mgf_scaled(d, 2.0 * c.A1 * s * x);
    };
    const double hi = x + S;
    if (x > 1.0) return integrate_ts(f, 0.0, x, rel_tol, "gaussian_integral") + integrate_gk(f, x, hi, rel_tol, "gaussian_integral");
    return integrate_ts(f, 0.0, hi, rel_tol, "gaussian_integral");
  }
  auto f = [&](double s) {
    if (s <= 0.0) return 0.0;
    auto g = [&](double ph) {
      const double cph = std::cos(ph), bb = 0.5 * s + x * cph;
      double v = std::pow(std::sin(ph), d - 2) * std::exp(-c.A2 * bb * bb);
      if (which == 3) v *= std::pow(1.0 + std::sqrt(std::max(0.0, x * x + s * s + 2.0 * s * x * cph)), -c.beta);
      return v;
    };
    return area * std::pow(s, d - 1 - c.alpha) * std::exp(-c.A1 * s * s) *
           integrate_gk(g, 0.0, kPi, rel_tol, "gaussian_integral");
  };
  return integrate_ts(f, 0.0, S, rel_tol, "gaussian_integral");
}

std::vector<GaussianIntegralCheck> verify_gaussian_integrals(int d, const std::vector<GaussianIntegralCase>& cases, double max_radius,
                                                     int n_radii) {
  std::vector<GaussianIntegralCheck> out;
  for (const auto& c : cases) {
    if (!(c.A1 > 0.0 && c.A2 > 0.0))
      throw Error(ErrorKind::Precondition, "verify_gaussian_integrals: case (alpha=" + std::to_string(c.alpha) +
                                               ") needs A1 > 0 and A2 > 0");
    for (int which = 1; which <= 3; ++which) {
      if (which > 1 && c.alpha < 0.0)
        throw Error(ErrorKind::Precondition,
                    "verify_gaussian_integrals: case alpha=" + std::to_string(c.alpha) + " must be >= 0");
      GaussianIntegralCheck chk;
      chk.which = which;
      chk.c = c;
      const double e = gaussian_integral_exponent(which, c);
      for (int k = 0; k < n_radii; ++k) {
        const double r = max_radius * k / (n_radii - 1);
        const double v = gaussian_integral(which, d, c, r);
        chk.radii.push_back(r);
        chk.values.push_back(v);
        chk.ratios.push_back(v * std::pow(1.0 + r, e));
      }
      std::size_t h = chk.radii.size() / 2;
      std::vector<double> xr(chk.radii.begin() + h, chk.radii.end()), yr(chk.ratios.begin() + h, chk.ratios.end());
      chk.tail_slope = -fit_power_decay(xr, yr).e;
      bool finite = std::all_of(chk.ratios.begin(), chk.ratios.end(), [](double v) { return std::isfinite(v) && v > 0; });
      chk.pass = finite && chk.tail_slope <= 0.1;
      out.push_back(chk);
    }
  }
  return out;
}

namespace {

template <class Shape, class Eval>
BoundCheck bound_check(const char* name, const KernelParams& p, int samples, unsigned seed, double radius, Shape shape,
                       Eval eval) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  BoundCheck b;
  b.name = name;
  b.min_ratio = INFINITY;
  for (int s = 0; s < samples; ++s) {
    Vec x(p.d), y(p.d);
    for (int k = 0; k < p.d; ++k) x(k) = N(rng);
    x *= radius * std::pow(U(rng), 1.0 / p.d) / x.norm();
    // a quarter of the pairs are near-coincident
    if (s % 4 == 0) {
      for (int k = 0; k < p.d; ++k) y(k) = N(rng);
      y = x + y * (1e-3 * std::pow(10.0, 3.0 * U(rng)) / y.norm());
    } else {
      for (int k = 0; k < p.d; ++k) y(k) = N(rng);
      y *= radius * std::pow(U(rng), 1.0 / p.d) / y.norm();
    }
    const double v = std::abs(eval(x, y)), sh = shape(x, y);
    const double r = v / sh;
    b.max_ratio = std::max(b.max_ratio, r);
    b.min_ratio = std::min(b.min_ratio, r);
    ++b.samples;
  }
  b.finite = std::isfinite(b.max_ratio);
  return b;
}

}  // namespace

BoundCheck k1_bound_check(const KernelParams& p, int samples, unsigned seed, double radius) {
  const double e = p.eps;
  return bound_check(
      "k1", p, samples, seed, radius,
      [&](const Vec& x, const Vec& y) {
        CollisionGeometry g = collision_geometry(x, y);
        const double bb = g.b_vec.squaredNorm();
        return std::pow(g.dist, -(p.d - 2)) * std::pow(1.0 + x.norm() + y.norm(), -p.gamma - 1.0) *
               std::exp(-(1.0 - e) * (0.5 * bb + g.dist * g.dist / 8.0));
      },
      [&](const Vec& x, const Vec& y) { return k1_eval(p, x, y, QuadSpec{1e-9}); });
}

BoundCheck k2_bound_check(const KernelParams& p, int samples, unsigned seed, double radius) {
  const double e = p.eps;
  return bound_check(
      "k2", p, samples, seed, radius,
      [&](const Vec& x, const Vec& y) {
        const double dist = (y - x).norm();
        return std::pow(dist, -p.gamma) * std::pow(1.0 + x.norm() + y.norm(), -p.gamma - 1.0) *
               std::exp(-(1.0 - e) * 0.25 * (x.squaredNorm() + y.squaredNorm()));
      },
      [&](const Vec& x, const Vec& y) { return k2_eval(p, x, y); });
}

NuBand nu_band(const KernelParams& p, double max_radius, int n_radii) {
  NuBand b;
  b.nu0 = INFINITY;
  for (int k = 0; k < n_radii; ++k) {
    const double r = max_radius * k / std::max(1, n_radii - 1);
    Vec xi = Vec::Zero(p.d);
    xi(0) = r;
    const double v = nu_of_xi(p, xi) * std::pow(1.0 + r, p.gamma);
    b.radii.push_back(r);
    b.values.push_back(v);
    b.nu0 = std::min(b.nu0, v);
    b.nu1 = std::max(b.nu1, v);
  }
  return b;
}

}  // namespace kinspec
