#include <cmath>
#include <numbers>

#include <doctest.h>

#include "fixtures.hpp"
#include "kinspec/errors.hpp"
#include "kinspec/semigroup.hpp"

using namespace kinspec;
using kinspec::test::shared_system;
constexpr double kPi = std::numbers::pi;

namespace {

Eigen::VectorXcd profile(const LinearSystem& s) {
  const VelocityGrid& g = *s.grid;
  Eigen::VectorXcd u(g.size());
  for (int i = 0; i < g.size(); ++i)
    u(i) = (1.0 + g.nodes(i, 0) + 0.5 * g.nodes(i, 1) * g.nodes(i, 1)) * std::exp(-g.speed(i) * g.speed(i) / 8.0);
  return s.to_sym(u);
}

Eigen::VectorXd e1(double r) {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(3);
  y(0) = r;
  return y;
}

}  // namespace

TEST_CASE("propagator: eigen route matches the matrix exponential") {
  const LinearSystem& s = shared_system();
  const Propagator p(s.Bhat_sym(e1(0.3)));
  CHECK(p.diagonalized());
  const Eigen::VectorXcd u = profile(s);
  for (double t : {0.1, 1.0, 5.0}) {
    const Eigen::VectorXcd a = p.apply(t, u), b = p.apply_expm(t, u);
    CHECK((a - b).norm() / b.norm() < 1e-10);
  }
  CHECK((p.apply(0.0, u) - u).norm() == 0.0);
}

TEST_CASE("semigroup contracts L2 and obeys the semigroup law") {
  const LinearSystem& s = shared_system();
  const Eigen::VectorXcd u = profile(s);
  for (double r : {0.0, 0.02, 0.2, 1.0}) {
    const Propagator p(s.Bhat_sym(e1(r)));
    double prev = u.norm();
    for (double t : log_times(0.01, 100.0, 15, false)) {
      const double n = p.apply(t, u).norm();
      CHECK(n <= prev * (1.0 + 1e-10));
      prev = n;
    }
    const Eigen::VectorXcd a = p.apply(3.0, u), b = p.apply(1.0, p.apply(2.0, u));
    CHECK((a - b).norm() / a.norm() < 1e-8);
  }
}

TEST_CASE("evolve cross-checks both methods") {
  const LinearSystem& s = shared_system();
  const Evolution ev = evolve(s.Bhat_sym(e1(0.1)), profile(s), {0.0, 0.5, 2.0});
  CHECK(ev.states.size() == 3);
  CHECK(ev.crosscheck < 1e-10);
  CHECK(ev.method == "eigen");
}

TEST_CASE("duhamel identity") {
  const LinearSystem& s = shared_system();
  const DuhamelCheck d = duhamel_check(s, e1(0.3), profile(s), 2.0);
  CHECK(d.rel_error < 1e-5);
}

TEST_CASE("generator consistency is first order") {
  const LinearSystem& s = shared_system();
  const GeneratorCheck g = generator_consistency(s, e1(0.2), profile(s));
  CHECK(g.slope == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("maximizer of z^alpha e^{-nu0 z}") {
  for (double a : {0.25, 0.5, 1.0, 2.0}) {
    const MaximizerCheck m = lemma_maximizer(a, 0.7);
    CHECK(m.numeric == doctest::Approx(m.analytic).epsilon(1e-9));
    CHECK(m.argmax == doctest::Approx(a / 0.7).epsilon(1e-5));
  }
}

TEST_CASE("weighted decay of the multiplication semigroup") {
  const LinearSystem& s = shared_system();
  for (double alpha : {0.5, 1.0}) {
    const WeightedADecay w = weighted_A_decay(s, e1(0.3), s.to_nodal(profile(s)), alpha, 1.0, log_times(0.01, 1000.0, 40));
    CHECK(w.pass);
    CHECK(w.sup_ratio <= w.bound);
  }
}

TEST_CASE("rho_alpha") {
  CHECK(std::isinf(rho_alpha(0.5, 0.0)));
  CHECK(rho_alpha(1.0, 0.5) == doctest::Approx(4.0));
  CHECK(rho_alpha(0.5, 0.5) == doctest::Approx(2.0 * std::log(2.0 + std::exp(1.0))));
  CHECK_THROWS_AS(rho_alpha(-1.0, 0.5), Error);
}

TEST_CASE("time-decay fit") {
  std::vector<double> t, n;
  for (double x : log_times(1.0, 1000.0, 30, false)) {
    t.push_back(x);
    n.push_back(2.5 * std::pow(x, -0.75));
  }
  const DecayFit f = fit_time_decay(t, n, 10.0, 1000.0);
  CHECK(f.exponent == doctest::Approx(0.75).epsilon(1e-10));
  CHECK(f.C == doctest::Approx(2.5).epsilon(1e-10));
  CHECK_THROWS_AS(fit_time_decay(t, n, 2000.0, 3000.0), Error);
}

TEST_CASE("log_times") {
  const auto t = log_times(0.01, 100.0, 5);
  REQUIRE(t.size() == 6);
  CHECK(t[0] == 0.0);
  CHECK(t[1] == doctest::Approx(0.01));
  CHECK(t[5] == doctest::Approx(100.0));
  CHECK(t[3] == doctest::Approx(1.0));
}

TEST_CASE("radial y rule integrates a gaussian") {
  const RadialRule r = radial_y_rule(3, 1e-3, 6.0, 8);
  double v = 0.0;
  for (std::size_t k = 0; k < r.r.size(); ++k) v += r.w[k] * std::exp(-r.r[k] * r.r[k]);
  CHECK(v == doctest::Approx(std::pow(kPi, 1.5)).epsilon(1e-9));
}

TEST_CASE("axial basis is orthonormal and invariant under B(r e1)") {
  const LinearSystem& s = shared_system();
  const Eigen::MatrixXd Q = axial_symmetric_basis(*s.grid);
  CHECK((Q.transpose() * Q - Eigen::MatrixXd::Identity(Q.cols(), Q.cols())).norm() < 1e-12);
  const Eigen::MatrixXcd B = s.Bhat_sym(e1(0.4));
  const Eigen::MatrixXcd Qc = Q.cast<cplx>();
  const Eigen::MatrixXcd BQ = B * Qc;
  CHECK((BQ - Qc * (Qc.adjoint() * BQ)).norm() < 1e-10 * BQ.norm());
}

TEST_CASE("certified ratio probe at high frequency decays fast") {
  const LinearSystem& s = shared_system();
  const SemigroupProbe p = decay_probe(s, e1(1.0), 0.5, 1.0, profile(s), log_times(0.01, 200.0, 30), 0.1);
  CHECK(std::isfinite(p.sup_ratio));
  CHECK(p.norms.back() < 1e-6 * p.norms.front());
  // y = 0 with a kernel component is the excluded resonant case
  const SemigroupProbe z = decay_probe(s, e1(0.0), 0.5, 1.0, profile(s), log_times(0.01, 10.0, 5), 0.1);
  CHECK(z.resonant);
}

TEST_CASE("growth of the weighted semigroup is capped by e^{t|K|}") {
  const LinearSystem& s = shared_system(0.5, 6);
  const GrowthCap g = weighted_growth_cap(s, e1(0.2), 1.0, {0.1, 0.5, 1.0});
  CHECK(g.pass);
}

TEST_CASE("multiplication semigroup in closed form") {
  const LinearSystem& s = shared_system();
  const Eigen::VectorXd y = e1(0.3);
  const Eigen::VectorXcd u = s.to_nodal(profile(s));
  const auto st = evolve_A(s, y, u, {1.5});
  for (int i : {0, 200, 511}) {
    const cplx expect = std::exp(1.5 * cplx(-s.nu(i), -2.0 * kPi * y.dot(s.grid->node(i)))) * u(i);
    CHECK(std::abs(st[0](i) - expect) < 1e-14);
  }
}
