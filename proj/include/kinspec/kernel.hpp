#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kinspec {

using Vec = Eigen::VectorXd;

// Collision kernel q = |xi - xi_*|^{-gamma} b(cos theta) with |b(c)| <= q0 |c|.
// gamma > 0 is the soft side: the kernel is singular at coincident velocities.
struct KernelParams {
  int d = 3;
  double gamma = 0.5;
  double q0 = 1.0;
  double eps = 0.1;  // slack for the bound checks only
  std::function<double(double)> b;  // empty: b(c) = q0 |c|

  double angular(double c) const { return b ? b(c) : q0 * std::abs(c); }
  // integral of b(omega . e) over S^{d-1}
  double angular_integral() const;
  void validate() const;
};

struct QuadSpec {
  double rel_tol = 1e-10;
};

struct CollisionGeometry {
  Vec xi, xi_star;
  Vec a;      // part of (xi+xi_*)/2 orthogonal to xi_* - xi
  Vec b_vec;  // part of (xi+xi_*)/2 along xi_* - xi
  double dist = 0.0;  // |xi_* - xi|
};

CollisionGeometry collision_geometry(const Vec& xi, const Vec& xi_star);

double maxwellian(const Vec& xi);

// Integral of exp(kappa sigma_1) over S^{m-1}, times exp(-kappa).
double sphere_mgf_scaled(int m, double kappa);

double nu_of_xi(const KernelParams& p, const Vec& xi, const QuadSpec& quad = {});
double k2_eval(const KernelParams& p, const Vec& xi, const Vec& xi_star);
double k1_eval(const KernelParams& p, const Vec& xi, const Vec& xi_star, const QuadSpec& quad = {});
inline double k_eval(const KernelParams& p, const Vec& xi, const Vec& xi_star, const QuadSpec& quad = {}) {
  return k1_eval(p, xi, xi_star, quad) + k2_eval(p, xi, xi_star);
}

// k1 in terms of its swap-invariant geometry: separation eps, |a| and |b|.
double k1_reduced(const KernelParams& p, double eps, double amag, double bmag, double rel_tol);

// Integral over a ball |eta - xi| < radius of k(xi, eta).
double kernel_ball_integral(const KernelParams& p, const Vec& xi, double radius, int n_radial = 24,
                            int n_polar = 16);

// Integral over R^d of (1+|xi_*|)^beta |k(xi, xi_*)|^pw.
double weighted_kernel_integral(const KernelParams& p, const Vec& xi, double pw, double beta,
                                const QuadSpec& quad = {});

struct PowerFit {
  double C = 0.0, e = 0.0;  // y ~ C (1+x)^{-e}
  double residual = 0.0;    // max |log y - model|
};
PowerFit fit_power_decay(const std::vector<double>& x, const std::vector<double>& y);

struct DecaySweep {
  std::vector<double> radii, values;
  PowerFit fit;
  double e_claimed = 0.0;
};
DecaySweep weighted_kernel_decay(const KernelParams& p, double pw, double beta, const std::vector<double>& radii,
                                 const QuadSpec& quad = {});

// Three Gaussian-type integrals with the |b| factor and their claimed decay in |xi|.
struct GaussianIntegralCase {
  double alpha = 0.0, A1 = 1.0, A2 = 1.0, beta = 1.0;
};
double gaussian_integral(int which, int d, const GaussianIntegralCase& c, double xi_norm, double rel_tol = 1e-9);
double gaussian_integral_exponent(int which, const GaussianIntegralCase& c);

struct GaussianIntegralCheck {
  int which = 1;
  GaussianIntegralCase c;
  std::vector<double> radii, values, ratios;
  double tail_slope = 0.0;  // slope of log ratio vs log(1+|xi|) over the upper half of the sweep
  bool pass = false;
};
std::vector<GaussianIntegralCheck> verify_gaussian_integrals(int d, const std::vector<GaussianIntegralCase>& cases,
                                                     double max_radius = 10.0, int n_radii = 21);

struct BoundCheck {
  std::string name;
  double max_ratio = 0.0;  // sup over samples of value / bound shape
  double min_ratio = 0.0;
  int samples = 0;
  bool finite = false;
};
// Random-pair checks of |k1|, |k2| against the pointwise bound shapes.
BoundCheck k1_bound_check(const KernelParams& p, int samples, unsigned seed, double radius = 6.0);
BoundCheck k2_bound_check(const KernelParams& p, int samples, unsigned seed, double radius = 6.0);

struct NuBand {
  double nu0 = 0.0, nu1 = 0.0;  // min / max of nu (1+|xi|)^gamma
  std::vector<double> radii, values;
};
NuBand nu_band(const KernelParams& p, double max_radius, int n_radii);

}  // namespace kinspec
