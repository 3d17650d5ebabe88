#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "fixtures.hpp"
#include "kinspec/errors.hpp"
#include "kinspec/linalg.hpp"
#include "kinspec/spectral.hpp"

using namespace kinspec;
using kinspec::test::shared_system;
constexpr double kPi = std::numbers::pi;

TEST_CASE("alpha constants") {
  const LinearSystem& s = shared_system();
  const AlphaConstants a = alpha_constants(s);
  CHECK(a.alpha1 == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(a.alpha2 == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-3));
  // the higher constants split into a projected part and a positive remainder
  CHECK(a.remainder3 > 0.0);
  CHECK(a.remainder4 > 0.0);
  CHECK(a.decomposition_error < 1e-8 * a.alpha3);
  CHECK(a.p_part3 == doctest::Approx(a.alpha1 * a.alpha1 + a.alpha2 * a.alpha2).epsilon(1e-3));
}

TEST_CASE("dispersion matrix at the origin") {
  const LinearSystem& s = shared_system();
  const DispersionMatrix D = dispersion_matrix(s, 0.0, 0.0, 0.0);
  const AlphaConstants a = alpha_constants(s);
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(5, 5);
  expect(0, 1) = expect(1, 0) = a.alpha1;
  expect(1, 4) = expect(4, 1) = a.alpha2;
  CHECK((D.entries - expect.cast<cplx>()).cwiseAbs().maxCoeff() < 1e-3);
  const EtaResult e = eigen_eta(D);
  // pattern eigenvalues: independent dense eigensolve of the 3x3 coupling block
  Eigen::Matrix3d blk;
  blk << 0, a.alpha1, 0, a.alpha1, 0, a.alpha2, 0, a.alpha2, 0;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(blk);
  CHECK(es.eigenvalues()(2) == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(2e-3));
  CHECK(e.values(0).real() == doctest::Approx(es.eigenvalues()(2)).epsilon(1e-9));
  CHECK(e.values(4).real() == doctest::Approx(es.eigenvalues()(0)).epsilon(1e-9));
  CHECK(std::abs(e.values(1)) < 1e-9);
}

TEST_CASE("dispersion matrix is complex symmetric and rotation covariant") {
  const LinearSystem& s = shared_system();
  const DispersionMatrix D = dispersion_matrix(s, 0.1, 0.3, 0.05);
  CHECK((D.entries - D.entries.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  Eigen::VectorXd om(3);
  om << 0.0, 1.0, 0.0;  // a grid symmetry axis
  CHECK(rotational_covariance(s, 0.1, 0.3, 0.05, om) < 1e-9);
}

TEST_CASE("tau derivative of the dispersion matrix") {
  const LinearSystem& s = shared_system();
  const double h = 1e-4;
  const Eigen::MatrixXcd fd =
      (dispersion_matrix(s, 0.1, h, 0.05).entries - dispersion_matrix(s, 0.1, -h, 0.05).entries) / (2.0 * h);
  const Eigen::MatrixXcd an = cplx(0.0, -1.0) * dispersion_power_moment(s, 0.1, 0.0, 0.05, 1);
  CHECK((fd - an).cwiseAbs().maxCoeff() < 1e-4);
  // sigma derivative: -1 times the same moment
  const Eigen::MatrixXcd fs =
      (dispersion_matrix(s, 0.1 + h, 0.0, 0.05).entries - dispersion_matrix(s, 0.1 - h, 0.0, 0.05).entries) / (2.0 * h);
  CHECK((fs + dispersion_power_moment(s, 0.1, 0.0, 0.05, 1)).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("shifted resolvent solves to its residual bound") {
  const LinearSystem& s = shared_system();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(3);
  y(0) = 0.05;
  const ShiftedResolvent R(s, cplx(0.2, 0.4), y);
  const Eigen::MatrixXcd rhs = Eigen::MatrixXcd::Random(s.n(), 2);
  const Eigen::MatrixXcd x = R.solve(rhs);
  CHECK(R.max_residual() <= 1e-10);
  CHECK(x.allFinite());
}

TEST_CASE("resolvent reconstructions match the direct solve") {
  const LinearSystem& s = shared_system();
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 4; ++trial) {
    const cplx lam(U(rng), 2.0 * U(rng) - 1.0);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(3);
    y(0) = 0.01 + 0.09 * U(rng);
    const Eigen::VectorXcd u = Eigen::VectorXcd::Random(s.n());
    const ResolventCheck r = resolvent_reconstruction(s, lam, y, u);
    CHECK(r.err_decomposition < 1e-6);
  }
  CHECK(projected_resolvent_identity(s, cplx(0.5, 0.2), Eigen::VectorXcd::Random(s.n())) < 1e-10);
}

TEST_CASE("eigenprojections partition P") {
  const LinearSystem& s = shared_system();
  Eigen::VectorXd om = Eigen::VectorXd::Zero(3);
  om(0) = 1.0;
  const EigenProjections p = eigenprojections(s, 0.01, 0.0, 0.02, om);
  CHECK(p.partition_error < 1e-8);
}

TEST_CASE("a decoupled branch agrees with the dense oracle") {
  const LinearSystem& s = shared_system();
  const std::vector<double> r = {0.005, 0.01, 0.02, 0.04};
  const EigenBranch b = trace_branch(s, 2, r);
  REQUIRE(b.oracle.size() == r.size());
  for (std::size_t k = 0; k < r.size(); ++k) {
    CHECK(std::abs(b.lambda_samples[k] - b.oracle[k]) < 1e-6);
    CHECK(b.lambda_samples[k].real() < 0.0);
  }
  // decoupled branch: tau = 0 to first order
  CHECK(std::abs(b.lambda_samples[0].imag()) < 1e-6);
}

TEST_CASE("asymptotic fit recovers synthetic coefficients") {
  EigenBranch b;
  for (int k = 0; k < 10; ++k) {
    const double r = 0.005 * std::pow(20.0, k / 9.0);
    b.r_samples.push_back(r);
    b.lambda_samples.push_back(cplx(-0.7 * r * r + 0.3 * r * r * r, 8.0 * r - 2.0 * r * r * r));
  }
  const AsymptoticFit f = fit_asymptotics(b);
  CHECK(f.tau1 == doctest::Approx(8.0).epsilon(1e-9));
  CHECK(f.sigma2 == doctest::Approx(-0.7).epsilon(1e-9));
  b.r_samples.resize(3);
  b.lambda_samples.resize(3);
  CHECK_THROWS_AS(fit_asymptotics(b), Error);
}

TEST_CASE("zgeev wrapper") {
  Eigen::MatrixXcd A(2, 2);
  A << cplx(0, 0), cplx(1, 0), cplx(-1, 0), cplx(0, 0);
  const ComplexEig e = eig_complex(A, true);
  std::vector<double> im = {e.values(0).imag(), e.values(1).imag()};
  std::sort(im.begin(), im.end());
  CHECK(im[0] == doctest::Approx(-1.0));
  CHECK(im[1] == doctest::Approx(1.0));
  CHECK((A * e.vectors - e.vectors * e.values.asDiagonal()).norm() < 1e-12);
}
