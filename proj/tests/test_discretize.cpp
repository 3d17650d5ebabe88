#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "fixtures.hpp"
#include "kinspec/errors.hpp"
#include "kinspec/operators.hpp"

using namespace kinspec;
using kinspec::test::shared_system;
constexpr double kPi = std::numbers::pi;

TEST_CASE("gauss-hermite grid carries the maxwellian") {
  const GridPtr g = build_grid(3, GridScheme::GaussHermite, 8);
  CHECK(g->size() == 512);
  CHECK(g->maxwellian_mass() == doctest::Approx(1.0).epsilon(1e-12));
  // second moment of M: d
  double e = 0.0;
  for (int i = 0; i < g->size(); ++i) e += g->w(i) * g->sqrtM(i) * g->sqrtM(i) * g->speed(i) * g->speed(i);
  CHECK(e == doctest::Approx(3.0).epsilon(1e-12));
  for (int i : {0, 77, 511}) CHECK(g->flat_index(g->multi_index(i)) == i);
  CHECK(g->hash() == build_grid(3, GridScheme::GaussHermite, 8)->hash());
  CHECK(g->hash() != build_grid(3, GridScheme::GaussHermite, 6)->hash());
}

TEST_CASE("uniform grid and scheme names") {
  const GridPtr g = build_grid(2, GridScheme::Uniform, 10, 5.0);
  CHECK(g->size() == 100);
  CHECK(parse_scheme("gauss_hermite") == GridScheme::GaussHermite);
  CHECK_THROWS_AS(parse_scheme("spherical"), Error);
  CHECK_THROWS_AS(parse_kernel_rule("midpoint"), Error);
}

TEST_CASE("weighted norms") {
  const GridPtr g = build_grid(3, GridScheme::GaussHermite, 6);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(g->size());
  CHECK(g->norm_beta(one, 0.0) == doctest::Approx(std::sqrt(g->w.sum())));
  CHECK(g->sup_beta(Eigen::VectorXcd(g->sqrtM.cast<cplx>()), 0.0) == doctest::Approx(g->sqrtM.maxCoeff()));
}

TEST_CASE("assembled operator structure") {
  for (double gamma : {0.0, 0.5, 1.5}) {
    CAPTURE(gamma);
    const LinearSystem& s = shared_system(gamma);
    const VelocityGrid& g = *s.grid;
    const Eigen::MatrixXd Ks = g.sqrt_w.asDiagonal() * s.K_nodal * g.sqrt_w.cwiseInverse().asDiagonal();
    CHECK((Ks - Ks.transpose()).norm() / Ks.norm() < 1e-8);
    CHECK(s.raw_cluster.nonpositive);
    int near = 0;
    for (double e : s.raw_cluster.eigenvalues) near += std::abs(e) <= 1e-6 * std::abs(s.raw_cluster.min_eig);
    CHECK(near == 5);
    CHECK(s.invariant_residual < 1e-8);
    // K M^{1/2} = nu M^{1/2}: the loss and gain of a Maxwellian balance
    const Eigen::VectorXd lhs = s.K_nodal * g.sqrtM, rhs = s.nu.cwiseProduct(g.sqrtM);
    CHECK(g.norm_beta(Eigen::VectorXd(lhs - rhs), 0.0) / g.norm_beta(rhs, 0.0) < 1e-8);
  }
}

TEST_CASE("nu on the grid equals the pointwise collision frequency") {
  const LinearSystem& s = shared_system(0.5);
  for (int i : {0, 100, 300}) CHECK(s.nu(i) == doctest::Approx(nu_of_xi(s.params, s.grid->node(i))).epsilon(1e-8));
  const LinearSystem& h = shared_system(0.0);
  CHECK(h.nu.minCoeff() == doctest::Approx(2.0 * kPi).epsilon(1e-8));
  CHECK(h.nu.maxCoeff() == doctest::Approx(2.0 * kPi).epsilon(1e-8));
}

TEST_CASE("projection basis is orthonormal and idempotent") {
  const LinearSystem& s = shared_system();
  const Eigen::MatrixXd G = s.Phi.transpose() * s.Phi;
  CHECK((G - Eigen::MatrixXd::Identity(5, 5)).norm() < 1e-12);
  const Eigen::MatrixXd P = s.P();
  CHECK((P * P - P).norm() < 1e-12);
  CHECK(s.basis.energy_norm == doctest::Approx(std::sqrt(6.0)).epsilon(1e-10));
  // L is self-adjoint and annihilates the invariants
  CHECK((s.Ls - s.Ls.transpose()).norm() < 1e-12 * s.Ls.norm());
  CHECK((s.Ls * s.Phi).norm() < 1e-10 * s.Ls.norm());
}

TEST_CASE("B(y) is dissipative and reduces to L at y = 0") {
  const LinearSystem& s = shared_system();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(3);
  CHECK((s.Bhat_sym(y) - s.Ls.cast<cplx>()).norm() == doctest::Approx(0.0));
  y << 0.2, -0.1, 0.05;
  const Eigen::MatrixXcd B = s.Bhat_sym(y);
  const Eigen::MatrixXcd H = 0.5 * (B + B.adjoint());
  CHECK((H - s.Ls.cast<cplx>()).norm() < 1e-12 * s.Ls.norm());
  const SpectralAbscissa sa = spectral_abscissa(B);
  CHECK(sa.abscissa < 0.0);
}

TEST_CASE("resolvent of the multiplication part is bounded by 1/nu0") {
  const LinearSystem& s = shared_system();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(3);
  y(0) = 0.3;
  const ResolventProbe r = resolvent_A_bound_probe(*s.grid, s.params, s.nu, y, {cplx(0.0, 0.0), cplx(0.5, 2.0), cplx(3.0, -1.0)});
  CHECK(r.pass);
  CHECK(r.nu0 > 0.0);
}

TEST_CASE("nystrom rule assembles and reports its invariant residual") {
  KernelParams p;
  AssemblyOptions o;
  o.rule = KernelRule::Nystrom;
  const LinearSystem s = build_system(build_grid(3, GridScheme::GaussHermite, 5), p, o);
  CHECK(std::isfinite(s.invariant_residual));
  // the projected operator still has the invariants as its kernel
  CHECK((s.Ls * s.Phi).norm() < 1e-10 * s.Ls.norm());
}

TEST_CASE("round trip through the precomputed-operator constructor") {
  const LinearSystem& s = shared_system();
  const LinearSystem t = build_system(s.grid, s.params, s.K_nodal, s.nu);
  CHECK((t.Ls - s.Ls).norm() < 1e-12 * s.Ls.norm());
}
