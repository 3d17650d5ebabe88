#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "kinspec/errors.hpp"
#include "kinspec/kernel.hpp"
#include "kinspec/quadrature.hpp"

using namespace kinspec;
constexpr double kPi = std::numbers::pi;

TEST_CASE("gauss-legendre is exact to degree 2n-1") {
  const Rule1D r = gauss_legendre(5, 0.0, 2.0);
  for (int k = 0; k <= 9; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < r.x.size(); ++i) s += r.w[i] * std::pow(r.x[i], k);
    CHECK(s == doctest::Approx(std::pow(2.0, k + 1) / (k + 1)).epsilon(1e-13));
  }
}

TEST_CASE("probabilists' gauss-hermite moments") {
  const Rule1D r = gauss_hermite_prob(8);
  double m0 = 0.0, m4 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < r.x.size(); ++i) {
    m0 += r.w[i];
    m2 += r.w[i] * r.x[i] * r.x[i];
    m4 += r.w[i] * std::pow(r.x[i], 4);
  }
  const double s = std::sqrt(2.0 * kPi);
  CHECK(m0 == doctest::Approx(s).epsilon(1e-13));
  CHECK(m2 == doctest::Approx(s).epsilon(1e-13));
  CHECK(m4 == doctest::Approx(3.0 * s).epsilon(1e-13));
}

TEST_CASE("sphere areas and the 26-point rule") {
  CHECK(sphere_area(2) == doctest::Approx(2.0 * kPi));
  CHECK(sphere_area(3) == doctest::Approx(4.0 * kPi));
  const SphereRule sr = sphere_rule(3, 26);
  REQUIRE(sr.dirs.size() == 26);
  double m0 = 0.0, m2 = 0.0, m4 = 0.0, m22 = 0.0;
  for (std::size_t k = 0; k < sr.dirs.size(); ++k) {
    CHECK(sr.dirs[k].norm() == doctest::Approx(1.0));
    m0 += sr.w[k];
    m2 += sr.w[k] * std::pow(sr.dirs[k](0), 2);
    m4 += sr.w[k] * std::pow(sr.dirs[k](0), 4);
    m22 += sr.w[k] * std::pow(sr.dirs[k](0) * sr.dirs[k](1), 2);
  }
  CHECK(m0 == doctest::Approx(4.0 * kPi));
  CHECK(m2 == doctest::Approx(4.0 * kPi / 3.0));
  CHECK(m4 == doctest::Approx(4.0 * kPi / 5.0));
  CHECK(m22 == doctest::Approx(4.0 * kPi / 15.0));
}

TEST_CASE("adaptive quadrature") {
  CHECK(integrate_gk([](double x) { return std::sin(x); }, 0.0, kPi, 1e-12) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(integrate_ts([](double x) { return 1.0 / std::sqrt(x); }, 0.0, 1.0, 1e-10) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("angular integral of q0|c|") {
  KernelParams p;
  p.q0 = 1.5;
  CHECK(p.angular_integral() == doctest::Approx(1.5 * 2.0 * kPi).epsilon(1e-10));
  p.d = 2;
  p.gamma = 0.5;
  CHECK(p.angular_integral() == doctest::Approx(1.5 * 4.0).epsilon(1e-10));
}

TEST_CASE("kernel parameters are validated") {
  KernelParams p;
  p.gamma = 3.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p.gamma = -0.1;
  CHECK_THROWS_AS(p.validate(), Error);
  p.gamma = 2.9;
  CHECK_NOTHROW(p.validate());
}

TEST_CASE("collision frequency against closed forms") {
  // nu(xi) = S_b E|xi - Z|^{-gamma}, Z standard normal
  KernelParams p;
  p.gamma = 0.0;
  Vec xi(3);
  xi << 0.3, -1.2, 2.0;
  CHECK(nu_of_xi(p, xi) == doctest::Approx(p.angular_integral()).epsilon(1e-8));
  for (double g : {0.5, 1.5}) {
    p.gamma = g;
    const double moment = std::pow(2.0, -0.5 * g) * std::tgamma(0.5 * (3.0 - g)) / std::tgamma(1.5);
    CHECK(nu_of_xi(p, Vec::Zero(3)) == doctest::Approx(p.angular_integral() * moment).epsilon(1e-7));
  }
  // large |xi|: E|xi - Z|^{-gamma} ~ |xi|^{-gamma}
  p.gamma = 0.5;
  Vec far = Vec::Zero(3);
  far(2) = 40.0;
  CHECK(nu_of_xi(p, far) / (p.angular_integral() * std::pow(40.0, -0.5)) == doctest::Approx(1.0).epsilon(2e-3));
}

TEST_CASE("kernel symmetry and rotation invariance") {
  std::mt19937 rng(3);
  std::normal_distribution<double> N(0.0, 1.2);
  for (double g : {0.0, 0.5, 1.5}) {
    KernelParams p;
    p.gamma = g;
    for (int trial = 0; trial < 5; ++trial) {
      Vec a(3), b(3);
      for (int k = 0; k < 3; ++k) {
        a(k) = N(rng);
        b(k) = N(rng);
      }
      const double kab = k_eval(p, a, b), kba = k_eval(p, b, a);
      CHECK(kab == doctest::Approx(kba).epsilon(1e-8));
      // rotation about e3 by 0.7 rad composed with a reflection
      Eigen::Matrix3d R;
      R << std::cos(0.7), -std::sin(0.7), 0, std::sin(0.7), std::cos(0.7), 0, 0, 0, -1;
      CHECK(k_eval(p, R * a, R * b) == doctest::Approx(kab).epsilon(1e-8));
    }
  }
}

TEST_CASE("k2 closed form") {
  KernelParams p;
  p.gamma = 0.5;
  Vec a(3), b(3);
  a << 0.4, 0.1, -0.3;
  b << -1.0, 0.5, 0.2;
  const double expect = -std::pow(2.0 * kPi, -1.5) * std::exp(-0.25 * (a.squaredNorm() + b.squaredNorm())) *
                        std::pow((a - b).norm(), -0.5) * p.angular_integral();
  CHECK(k2_eval(p, a, b) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("power-law fit recovers a synthetic exponent") {
  std::vector<double> x, y;
  for (int k = 0; k < 20; ++k) {
    x.push_back(0.5 * k);
    y.push_back(3.0 * std::pow(1.0 + x.back(), -1.7));
  }
  const PowerFit f = fit_power_decay(x, y);
  CHECK(f.e == doctest::Approx(1.7).epsilon(1e-10));
  CHECK(f.C == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("nu band is positive and bounded") {
  for (double g : {0.0, 0.5, 1.5}) {
    KernelParams p;
    p.gamma = g;
    const NuBand b = nu_band(p, 8.0, 9);
    CHECK(b.nu0 > 0.0);
    CHECK(std::isfinite(b.nu1));
    CHECK(b.nu1 / b.nu0 < 10.0);
  }
}

TEST_CASE("pointwise kernel bounds hold on random pairs") {
  KernelParams p;
  p.gamma = 0.5;
  CHECK(k1_bound_check(p, 40, 1).finite);
  CHECK(k2_bound_check(p, 40, 2).finite);
}

TEST_CASE("three singular gaussian integrals decay at their rates") {
  const auto res = verify_gaussian_integrals(3, {{0.5, 1.0, 1.0, 1.0}, {1.5, 0.5, 2.0, 1.0}}, 10.0, 11);
  REQUIRE(res.size() == 6);
  for (const auto& r : res) {
    INFO("integral " << r.which << " alpha " << r.c.alpha);
    CHECK(r.pass);
  }
  CHECK_THROWS_AS(verify_gaussian_integrals(3, {{0.5, 1.0, 0.0, 1.0}}), Error);
}

TEST_CASE("singular gaussian integrals at the origin") {
  // xi = 0 leaves radial Gaussian moments: 2 pi Gamma((3-alpha)/2) a^{-(3-alpha)/2}
  const GaussianIntegralCase c{0.5, 1.0, 1.0, 1.0};
  const double g = std::tgamma(0.5 * (3.0 - c.alpha)), e = -0.5 * (3.0 - c.alpha);
  CHECK(gaussian_integral(1, 3, c, 0.0) == doctest::Approx(2.0 * kPi * g * std::pow(c.A1 + 0.25 * c.A2, e)).epsilon(1e-7));
  CHECK(gaussian_integral(2, 3, c, 0.0) == doctest::Approx(2.0 * kPi * g * std::pow(c.A1, e)).epsilon(1e-7));
}
