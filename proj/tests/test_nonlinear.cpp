#include <cmath>
#include <numbers>

#include <doctest.h>

#include "fixtures.hpp"
#include "kinspec/errors.hpp"
#include "kinspec/nonlinear.hpp"

using namespace kinspec;
using kinspec::test::shared_system;

namespace {

const CollisionForm& small_form() {
  static const CollisionForm f(shared_system(0.5, 6).grid, shared_system(0.5, 6).params);
  return f;
}

double rel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("collision form is bilinear and symmetric") {
  const CollisionForm& G = small_form();
  const VelocityGrid& g = G.grid();
  const Eigen::VectorXd f = random_smooth_perturbation(g, 1), h = random_smooth_perturbation(g, 2),
                        k = random_smooth_perturbation(g, 3);
  const Eigen::VectorXd lhs = G.apply(2.0 * f - 0.5 * h, k);
  const Eigen::VectorXd rhs = 2.0 * G.apply(f, k) - 0.5 * G.apply(h, k);
  CHECK(rel(lhs, rhs) < 1e-12);
  CHECK(rel(G.apply(f, h), G.apply(h, f)) < 1e-12);
  // difference identity used by the contraction argument
  CHECK(rel(Eigen::VectorXd(G.quadratic(f) - G.quadratic(h)), G.apply(f + h, f - h)) < 1e-12);
  CHECK(G.apply(Eigen::VectorXd::Zero(g.size()), f).norm() == 0.0);
}

TEST_CASE("the maxwellian is an equilibrium") {
  const CollisionForm& G = small_form();
  const Eigen::VectorXd m = G.grid().sqrtM;
  const Eigen::VectorXd h = random_smooth_perturbation(G.grid(), 4);
  CHECK(G.quadratic(m).norm() < 1e-10 * G.linearized(h).norm());
}

TEST_CASE("batched evaluation equals column-wise evaluation") {
  const CollisionForm& G = small_form();
  Eigen::MatrixXd F(G.grid().size(), 2), H(G.grid().size(), 2);
  for (int c = 0; c < 2; ++c) {
    F.col(c) = random_smooth_perturbation(G.grid(), 10 + c);
    H.col(c) = random_smooth_perturbation(G.grid(), 20 + c);
  }
  const Eigen::MatrixXd B = G.apply_batch(F, H);
  for (int c = 0; c < 2; ++c) CHECK(rel(B.col(c), G.apply(F.col(c), H.col(c))) < 1e-13);
}

TEST_CASE("conservation and linearization on the default grid") {
  const LinearSystem& s = shared_system();
  const CollisionForm G(s.grid, s.params);
  const Eigen::VectorXd f = random_smooth_perturbation(*s.grid, 7);
  const ConservationReport c = conservation_check(G, s.basis.columns, f);
  CHECK(c.pairings.size() == 5);
  CHECK(c.max_relative < 1e-3);
  const LinearizationReport l = linearization_check(G, s, random_smooth_perturbation(*s.grid, 8));
  CHECK(l.slope == doctest::Approx(1.0).epsilon(0.1));
  CHECK(l.assembled_mismatch < 1e-2);
  CHECK(G.leakage_fraction() == 0.0);
}

TEST_CASE("multilinear interpolation tallies its leakage") {
  const LinearSystem& s = shared_system(0.5, 6);
  GammaOptions o;
  o.interp = Interpolation::Multilinear;
  const CollisionForm G(s.grid, s.params, o);
  CHECK(G.leakage_fraction() > 0.0);
  CHECK(G.leakage_fraction() < 1.0);
  CHECK(G.dropped_points() > 0);
}

TEST_CASE("fixed sphere rule agrees with the aligned rule to quadrature accuracy") {
  const LinearSystem& s = shared_system(0.5, 6);
  GammaOptions o;
  o.angular = AngularRule::Fixed;
  const CollisionForm F(s.grid, s.params, o);
  const Eigen::VectorXd h = random_smooth_perturbation(*s.grid, 9);
  CHECK(rel(F.linearized(h), small_form().linearized(h)) < 0.2);
}

TEST_CASE("bilinear bound constant is stable") {
  const GammaBoundReport r = gamma_bound_check(small_form(), 12, 2.0, 0.5);
  CHECK(r.ratios.size() == 12);
  CHECK(std::isfinite(r.constant));
  CHECK(r.constant <= 1.2 * r.constant_half);
  CHECK(std::isfinite(r.psi0_ratio));
}

TEST_CASE("convolution inequality") {
  for (double a : {0.5, 0.75}) {
    const ConvolutionCheck c = convolution_inequality(a, 1.5, {0.0, 1.0, 10.0, 100.0, 1000.0});
    CHECK(c.pass);
    CHECK(c.sup_ratio <= c.bound);
  }
}

TEST_CASE("lattice modes pair with their conjugates") {
  const Lattice lat = make_lattice(3, 3, 10.0);
  CHECK(lat.size() == 27);
  for (int k = 0; k < lat.size(); ++k) CHECK((lat.y.row(k) + lat.y.row(lat.conjugate(k))).norm() < 1e-15);
}

TEST_CASE("solver configuration is validated") {
  SolverConfig c;
  CHECK_NOTHROW(c.validate(3));
  c.alpha = 0.4;
  CHECK_THROWS_AS(c.validate(3), Error);
  c.alpha = 0.5;
  c.beta = 1.5;
  CHECK_THROWS_AS(c.validate(3), Error);
  c.beta = 2.0;
  c.tol = 0.0;
  CHECK_THROWS_AS(c.validate(3), Error);
}

TEST_CASE("cauchy solver: zero data stays zero") {
  const LinearSystem& s = shared_system(0.5, 6);
  const Lattice lat = make_lattice(3, 3, 10.0);
  SolverConfig c;
  c.t_end = 4.0;
  const CauchyResult r = solve_cauchy(s, small_form(), lat, Eigen::MatrixXcd::Zero(s.n(), lat.size()), c);
  CHECK(r.sup_norm == 0.0);
  CHECK(r.iterations == 1);
}

TEST_CASE("cauchy solver: linear mode norms match the semigroup") {
  const LinearSystem& s = shared_system(0.5, 6);
  const Lattice lat = make_lattice(3, 3, 10.0);
  SolverConfig c;
  c.t_end = 6.0;
  c.nonlinear = false;
  const Eigen::MatrixXcd f0 = cosine_data(s, lat, 1e-3);
  const CauchyResult r = solve_cauchy(s, small_form(), lat, f0, c);
  for (int k = 0; k < lat.size(); ++k) {
    if (f0.col(k).norm() == 0.0) continue;
    const Propagator p(s.Bhat_sym(lat.y.row(k).transpose()));
    const Eigen::VectorXcd v = s.to_nodal(p.apply(6.0, s.to_sym(f0.col(k))));
    CHECK(r.mode_norms.back()[k] == doctest::Approx(s.grid->norm_beta(v, c.beta)).epsilon(1e-10));
  }
  CHECK(r.reality_defect < 1e-12);
}

TEST_CASE("duhamel step: an x-independent invariant barely drifts") {
  const LinearSystem& s = shared_system(0.5, 6);
  const Lattice lat = make_lattice(3, 3, 10.0);
  SolverConfig c;
  c.dt = 1.0;
  CauchySolver S(s, small_form(), lat, c);
  PerturbationState st;
  st.coeffs = Eigen::MatrixXcd::Zero(s.n(), lat.size());
  const double eps = 1e-6;
  int zero = -1;
  for (int k = 0; k < lat.size(); ++k)
    if (lat.y.row(k).norm() == 0.0) zero = k;
  st.coeffs.col(zero) = (eps * s.basis.columns.col(0)).cast<cplx>();  // multiple of M^{1/2}
  const PerturbationState next = duhamel_step(S, st, 1.0);
  const double drift = (next.coeffs - st.coeffs).norm();
  // the linear part is stationary; what is left is the quadratic term
  CHECK(drift <= 10.0 * eps * eps * small_form().quadratic(s.basis.columns.col(0)).norm() + 1e-15);
  CHECK(next.time == 1.0);
  CHECK_THROWS_AS(duhamel_step(S, st, 0.5), Error);
}

TEST_CASE("cauchy solver: small data contracts and scales linearly") {
  const LinearSystem& s = shared_system(0.5, 6);
  const Lattice lat = make_lattice(3, 3, 10.0);
  SolverConfig c;
  c.t_end = 8.0;
  const CauchyResult a = solve_cauchy(s, small_form(), lat, cosine_data(s, lat, 1e-3), c);
  REQUIRE(!a.contraction.empty());
  for (double q : a.contraction) CHECK(q < 0.9);
  CHECK(a.residual <= 2.0 * c.tol);
  CHECK(a.reality_defect < 1e-12);
  const CauchyResult b = solve_cauchy(s, small_form(), lat, cosine_data(s, lat, 2e-3), c);
  const double ratio = b.sup_norm / a.sup_norm;
  CHECK(ratio >= 1.9);
  CHECK(ratio <= 2.2);
  CHECK(estimate_smallness(a, 1e-3) > 1e-3);
}

TEST_CASE("cauchy solver refuses data above the smallness bound") {
  const LinearSystem& s = shared_system(0.5, 6);
  const Lattice lat = make_lattice(3, 3, 10.0);
  SolverConfig c;
  c.smallness = 1e-4;
  CHECK_THROWS_AS(solve_cauchy(s, small_form(), lat, cosine_data(s, lat, 1e-2), c), Error);
}
