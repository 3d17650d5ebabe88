#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kinspec/operators.hpp"

namespace kinspec {

// X(lambda, y) = lambda I + 2 pi i y.xi - L + P in the symmetric frame, LU-factored.
class ShiftedResolvent {
 public:
  ShiftedResolvent(const LinearSystem& s, cplx lambda, const Eigen::VectorXd& y);
  Eigen::MatrixXcd solve(const Eigen::MatrixXcd& rhs) const;  // throws when the residual exceeds 1e-10
  double rcond() const { return rcond_; }
  double max_residual() const { return max_residual_; }

 private:
  Eigen::MatrixXcd X_;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
  double rcond_ = 0.0;
  mutable double max_residual_ = 0.0;
};

// Kernel basis adapted to direction omega: columns psi_j(R xi) with R omega = e_1 (symmetric frame).
Eigen::MatrixXd rotated_kernel_basis(const LinearSystem& s, const Eigen::VectorXd& omega);
// Orthogonal R with R omega = e_1 (Householder reflection; identity when omega = e_1).
Eigen::MatrixXd frame_to_e1(const Eigen::VectorXd& omega);

struct DispersionMatrix {
  double sigma = 0.0, tau = 0.0, r = 0.0;
  Eigen::VectorXd omega;
  Eigen::MatrixXcd entries;  // D_jk = (D psi_j, psi_k)
  double max_residual = 0.0;
  double rcond = 0.0;
  bool negative_sigma = false;
};

DispersionMatrix dispersion_matrix(const LinearSystem& s, double sigma, double tau, double r);
DispersionMatrix dispersion_matrix(const LinearSystem& s, double sigma, double tau, double r,
                                   const Eigen::VectorXd& omega);
// (R^{-n-1} xi_1 psi_j, psi_k): n-th derivative in sigma is (-1)^n n! times this, in tau (-i)^n n! times this.
Eigen::MatrixXcd dispersion_power_moment(const LinearSystem& s, double sigma, double tau, double r, int n);

struct AlphaConstants {
  double alpha1 = 0.0, alpha2 = 0.0, alpha3 = 0.0, alpha4 = 0.0;
  double p_part3 = 0.0, p_part4 = 0.0;        // ||P(xi_1 psi_1)||^2, ||P(xi_1 psi_{d+1})||^2
  double remainder3 = 0.0, remainder4 = 0.0;  // ((-L)^{-1} P^perp f, P^perp f)
  double decomposition_error = 0.0;           // max |alpha - p_part - remainder|
};
AlphaConstants alpha_constants(const LinearSystem& s);

// ((-L)^{-1} P^perp f, P^perp f) for f = xi_1 psi_j
double inverse_form(const LinearSystem& s, int j);

struct EtaResult {
  Eigen::VectorXcd values;   // indexed by branch j = 0..d+1
  Eigen::MatrixXcd vectors;  // column j: z_j, normalized z^T z = 1 (D is complex symmetric)
  double symmetry_defect = 0.0;
  double min_overlap = 1.0;  // against the reference, when given
};
// Without a reference the (0,1,d+1) block is ordered by descending real part; with one, each
// branch follows the eigenvector of largest overlap with the reference.
EtaResult eigen_eta(const DispersionMatrix& D, const EtaResult* reference = nullptr);

struct EigenBranch {
  int j = 0;
  std::vector<double> r_samples;
  std::vector<cplx> lambda_samples;
  std::vector<cplx> oracle;  // nearest eigenvalue of the dense B(r e_1)
  std::vector<double> mu_defect;
  std::vector<int> newton_iterations;
  double tau1_fit = 0.0, sigma2_fit = 0.0, fit_residual = 0.0;
  bool truncated = false;
  double last_good_r = 0.0;
  std::string note;
};

struct BranchOptions {
  int max_newton = 40;
  double tol = 1e-10;
  double min_overlap = 0.7;
  bool with_oracle = true;
};

EigenBranch trace_branch(const LinearSystem& s, int j, const std::vector<double>& r_grid,
                         const BranchOptions& opt = {});
// All d+2 branches; dense oracle spectra are computed once per r and shared.
std::vector<EigenBranch> trace_all_branches(const LinearSystem& s, const std::vector<double>& r_grid,
                                            const BranchOptions& opt = {});

struct AsymptoticFit {
  double tau1 = 0.0, tau3 = 0.0, sigma2 = 0.0, sigma3 = 0.0;
  double residual = 0.0;  // max relative deviation of the model
  double condition = 0.0;
};
AsymptoticFit fit_asymptotics(const EigenBranch& b);

// The closed-form second-order coefficients as stated for each branch index.
std::vector<double> sigma2_closed_forms(const LinearSystem& s);

struct EigenProjections {
  std::vector<Eigen::VectorXcd> phi;  // phi_j in the symmetric frame
  Eigen::VectorXcd eta, mu;
  double partition_error = 0.0;  // || sum_j P_j - P ||
};
// P_j f = <f, phi_j> phi_j with the bilinear pairing <f, g> = sum f_i g_i.
EigenProjections eigenprojections(const LinearSystem& s, double sigma, double tau, double r,
                                  const Eigen::VectorXd& omega);
Eigen::VectorXcd apply_projection(const Eigen::VectorXcd& phi, const Eigen::VectorXcd& f);

struct ResolventCheck {
  double err_decomposition = 0.0;  // Woodbury form through (I - P X^{-1} P)^{-1}
  double err_eigen = 0.0;          // sum over eigenprojections with (1-mu_j)^{-1}
};
// Compares both reconstructions of (lambda - B(y))^{-1} u against a direct dense solve (relative errors).
ResolventCheck resolvent_reconstruction(const LinearSystem& s, cplx lambda, const Eigen::VectorXd& y,
                                        const Eigen::VectorXcd& u);

// || P X(lambda,0)^{-1} f - P f / (lambda+1) || / ||P f||
double projected_resolvent_identity(const LinearSystem& s, cplx lambda, const Eigen::VectorXcd& f);

// max |D(omega) - D(e_1)| entrywise
double rotational_covariance(const LinearSystem& s, double sigma, double tau, double r, const Eigen::VectorXd& omega);

}  // namespace kinspec
