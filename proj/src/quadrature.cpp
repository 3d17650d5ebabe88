#include "kinspec/quadrature.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "kinspec/errors.hpp"

namespace kinspec {

namespace {

// Golub-Welsch: symmetric tridiagonal Jacobi matrix with zero diagonal.
Rule1D golub_welsch(int n, const std::function<double(int)>& offdiag, double mu0) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = offdiag(k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Rule1D r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < n; ++i) {
    r.x[i] = es.eigenvalues()(i);
    double v = es.eigenvectors()(0, i);
    r.w[i] = mu0 * v * v;
  }
  // exact symmetry about zero
  for (int i = 0; i < n / 2; ++i) {
    double x = 0.5 * (r.x[n - 1 - i] - r.x[i]);
    double w = 0.5 * (r.w[i] + r.w[n - 1 - i]);
    r.x[i] = -x;
    r.x[n - 1 - i] = x;
    r.w[i] = r.w[n - 1 - i] = w;
  }
  if (n % 2) r.x[n / 2] = 0.0;
  return r;
}

}  // namespace

Rule1D gauss_legendre(int n, double a, double b) {
  Rule1D r = golub_welsch(n, [](int k) { return k / std::sqrt(4.0 * k * k - 1.0); }, 2.0);
  for (int i = 0; i < n; ++i) {
    r.x[i] = 0.5 * (a + b) + 0.5 * (b - a) * r.x[i];
    r.w[i] *= 0.5 * (b - a);
  }
  return r;
}

Rule1D gauss_hermite_prob(int n) {
  return golub_welsch(n, [](int k) { return std::sqrt(double(k)); }, std::sqrt(2.0 * std::numbers::pi));
}

double sphere_area(int m) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * m) / boost::math::tgamma(0.5 * m);
}

SphereRule sphere_rule(int d, int n_points) {
  SphereRule s;
  s.d = d;
  const double pi = std::numbers::pi;
  if (d == 2) {
    if (n_points < 2) throw Error(ErrorKind::Precondition, "sphere_rule: need at least 2 directions for d=2");
    for (int k = 0; k < n_points; ++k) {
      double t = (k + 0.5) * 2.0 * pi / n_points;
      Eigen::VectorXd v(2);
      v << std::cos(t), std::sin(t);
      s.dirs.push_back(v);
      s.w.push_back(2.0 * pi / n_points);
    }
    return s;
  }
  if (d != 3) throw Error(ErrorKind::Precondition, "sphere_rule: only d=2 and d=3 are supported");
  auto push = [&](double x, double y, double z, double w) {
    Eigen::VectorXd v(3);
    v << x, y, z;
    s.dirs.push_back(v);
    s.w.push_back(4.0 * pi * w);
  };
  if (n_points == 26) {
    const double a1 = 1.0 / 21.0, a2 = 4.0 / 105.0, a3 = 27.0 / 840.0;
    for (int sg : {-1, 1}) {
      push(sg, 0, 0, a1);
      push(0, sg, 0, a1);
      push(0, 0, sg, a1);
    }
    const double h = std::sqrt(0.5);
    for (int s1 : {-1, 1})
      for (int s2 : {-1, 1}) {
        push(s1 * h, s2 * h, 0, a2);
        push(s1 * h, 0, s2 * h, a2);
        push(0, s1 * h, s2 * h, a2);
      }
    const double c = 1.0 / std::sqrt(3.0);
    for (int s1 : {-1, 1})
      for (int s2 : {-1, 1})
        for (int s3 : {-1, 1}) push(s1 * c, s2 * c, s3 * c, a3);
    return s;
  }
  // product rule: m Gauss-Legendre nodes in cos(theta), 2m trapezoid nodes in phi
  int m = std::max(2, int(std::lround(std::sqrt(n_points / 2.0))));
  Rule1D gl = gauss_legendre(m);
  for (int i = 0; i < m; ++i) {
    double ct = gl.x[i], st = std::sqrt(1.0 - ct * ct);
    for (int k = 0; k < 2 * m; ++k) {
      double ph = (k + 0.5) * pi / m;
      push(st * std::cos(ph), st * std::sin(ph), ct, gl.w[i] / (4.0 * m));
    }
  }
  return s;
}

double integrate_gk(const std::function<double(double)>& f, double a, double b, double tol, const char* where) {
  double err = 0.0, l1 = 0.0;
  double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 24, tol, &err, &l1);
  const double accept = std::max(100.0 * tol, 1e-8);
  if (!std::isfinite(v) || (err > accept * std::abs(v) && err > accept * l1))
    throw QuadratureError(where, v - err, v);
  return v;
}

double integrate_ts(const std::function<double(double)>& f, double a, double b, double tol, const char* where) {
  static thread_local boost::math::quadrature::tanh_sinh<double> ts(12);
  double err = 0.0, l1 = 0.0;
  std::size_t levels = 0;
  double v = ts.integrate(f, a, b, tol, &err, &l1, &levels);
  const double accept = std::max(100.0 * tol, 1e-8);
  if (!std::isfinite(v) || (err > accept * std::abs(v) && err > accept * l1)) throw QuadratureError(where, v - err, v);
  return v;
}

}  // namespace kinspec
