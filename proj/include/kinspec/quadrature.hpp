#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace kinspec {

struct Rule1D {
  std::vector<double> x, w;
};

// Gauss-Legendre on [a,b].
Rule1D gauss_legendre(int n, double a = -1.0, double b = 1.0);
// Gauss-Hermite for the weight exp(-x^2/2); weights sum to sqrt(2*pi).
Rule1D gauss_hermite_prob(int n);

// Surface area of the unit sphere S^{m-1} in R^m.
double sphere_area(int m);

// Point set on S^{d-1} with weights summing to the sphere area.
struct SphereRule {
  int d = 3;
  std::vector<Eigen::VectorXd> dirs;
  std::vector<double> w;
};

// d=3: 26-point Lebedev rule (n_points=26) or a Gauss-Legendre x trapezoid product rule.
// d=2: n_points equally spaced directions.
SphereRule sphere_rule(int d, int n_points);

// Adaptive Gauss-Kronrod on [a,b]; throws QuadratureError when the error
// estimate stays above tol*|I|.
double integrate_gk(const std::function<double(double)>& f, double a, double b, double tol,
                    const char* where = "integrate_gk");
// Tanh-sinh on [a,b], for integrable endpoint singularities.
double integrate_ts(const std::function<double(double)>& f, double a, double b, double tol,
                    const char* where = "integrate_ts");

}  // namespace kinspec
