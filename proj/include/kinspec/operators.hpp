#pragma once

#include <complex>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kinspec/grid.hpp"
#include "kinspec/kernel.hpp"

namespace kinspec {

using cplx = std::complex<double>;

// Dense operator on nodal values. The symmetric frame v = W^{1/2} f turns the
// weighted inner product into the Euclidean one.
struct DiscreteOperator {
  GridPtr grid;
  Eigen::MatrixXcd entries;
  std::string label;
  std::map<std::string, double> meta;

  Eigen::MatrixXcd symmetric_frame() const;
  // ||S - S^H|| / ||S|| in the symmetric frame
  double self_adjoint_defect() const;
  Eigen::VectorXcd apply(const Eigen::VectorXcd& f) const { return entries * f; }
};

enum class DiagonalRule { EqualVolume, HalfSpacing };
// Nystrom: K_ij = k(xi_i, xi_j) w_j with a ball-patch diagonal.
// HermiteProduct: each kernel row is integrated against the Hermite functions the
// Gauss-Hermite grid interpolates exactly (product integration); Gauss-Hermite grids only.
enum class KernelRule { HermiteProduct, Nystrom };

KernelRule parse_kernel_rule(const std::string& s);
std::string kernel_rule_name(KernelRule r);

struct AssemblyOptions {
  KernelRule rule = KernelRule::HermiteProduct;
  DiagonalRule diagonal = DiagonalRule::EqualVolume;
  // product rule: replace the collocation matrix by its conservative symmetric part
  bool symmetrize = true;
  int moment_panel_points = 12;  // Gauss points per radial panel (panels of width <= 2)
  int moment_polar = 24;
  int moment_azimuth = 24;
  int patch_radial = 24;
  int patch_polar = 16;
  double rel_tol = 1e-10;
};

Eigen::VectorXd assemble_nu(const VelocityGrid& g, const KernelParams& p);
// Ball radius used for the singular diagonal patch at node i.
double patch_radius(const VelocityGrid& g, int i, DiagonalRule rule);
DiscreteOperator assemble_K(const GridPtr& g, const KernelParams& p, const AssemblyOptions& opt = {});
// Orthonormal Hermite functions h_0..h_{m-1} at x (weight-free L^2 normalization).
void hermite_functions(double x, int m, double* out);
// int k(xi, eta) chi_b(eta) d eta for all tensor Hermite functions chi_b, b in {0..m-1}^d.
Eigen::VectorXd kernel_hermite_moments(const KernelParams& p, const Eigen::VectorXd& xi, int m,
                                       const AssemblyOptions& opt = {});
DiscreteOperator assemble_L(const DiscreteOperator& K, const Eigen::VectorXd& nu);
DiscreteOperator assemble_L(const GridPtr& g, const KernelParams& p, const AssemblyOptions& opt = {});

struct ProjectionBasis {
  Eigen::MatrixXd columns;  // nodal, n x (d+2), orthonormal in the weighted inner product
  double gram_residual = 0.0;
  double energy_norm = 0.0;  // computed norm of (|xi|^2 - d) M^{1/2}
  double idempotence = 0.0;  // ||P^2 - P||
};

struct ClusterReport {
  std::vector<double> eigenvalues;  // descending
  int expected = 0;
  double cluster_max = 0.0;  // largest |lambda| inside the near-zero cluster
  double gap = 0.0;          // |lambda| of the first eigenvalue outside it
  double gap_ratio = 0.0;
  double max_eig = 0.0, min_eig = 0.0;
  bool nonpositive = false;  // max_eig <= 1e-6 |min_eig|
};

ClusterReport eigen_cluster(const Eigen::MatrixXd& sym, int expected);

ProjectionBasis build_projection(const GridPtr& g, const ClusterReport* cluster = nullptr);

// Everything downstream needs for one (grid, kernel) pair. Matrices are in the symmetric frame.
struct LinearSystem {
  GridPtr grid;
  KernelParams params;
  Eigen::VectorXd nu;
  Eigen::MatrixXd K_nodal;  // assembled K, nodal
  Eigen::MatrixXd Ls_raw;   // K - nu, symmetric part
  Eigen::MatrixXd Ls;       // (I-P) Ls_raw (I-P): kernel is exactly the span of the invariants
  std::map<std::string, double> meta;  // assembly diagnostics
  Eigen::MatrixXd Phi;      // orthonormal kernel basis
  ProjectionBasis basis;
  ClusterReport raw_cluster;
  double invariant_residual = 0.0;  // max_k ||L_raw psi_k|| / ||psi_k||

  int n() const { return grid->size(); }
  int d() const { return grid->d; }
  int nk() const { return grid->d + 2; }
  Eigen::VectorXd xi(int axis) const { return grid->nodes.col(axis); }
  Eigen::MatrixXd P() const { return Phi * Phi.transpose(); }
  // B(y) = L - 2 pi i y.xi (minus P when flagged), symmetric frame
  Eigen::MatrixXcd Bhat_sym(const Eigen::VectorXd& y, bool subtract_P = false) const;
  // nodal <-> symmetric frame
  Eigen::VectorXcd to_sym(const Eigen::VectorXcd& f) const { return grid->sqrt_w.cwiseProduct(f); }
  Eigen::VectorXcd to_nodal(const Eigen::VectorXcd& v) const { return v.cwiseQuotient(grid->sqrt_w.cast<cplx>()); }
};

LinearSystem build_system(const GridPtr& g, const KernelParams& p, const AssemblyOptions& opt = {});
LinearSystem build_system(const GridPtr& g, const KernelParams& p, const Eigen::MatrixXd& K_nodal,
                          const Eigen::VectorXd& nu);

DiscreteOperator assemble_Bhat(const LinearSystem& s, const Eigen::VectorXd& y, bool subtract_P);

struct SpectralAbscissa {
  double abscissa = 0.0;  // max Re lambda
  Eigen::VectorXcd eigenvalues;
};
SpectralAbscissa spectral_abscissa(const Eigen::MatrixXcd& A);

// Continuum double integral of |k|^2 (1+|xi|)^{2 beta} (1+|xi_*|)^{2 alpha} over
// |xi - xi_*| >= eps_cut, |xi_*| <= R_cut, |xi| <= extent.
double hs_norm_truncated(const KernelParams& p, double extent, double eps_cut, double R_cut, double alpha, double beta,
                         double rel_tol = 1e-6);

struct ResolventProbe {
  std::vector<cplx> lambdas;
  std::vector<double> values;  // max_i (1+|xi_i|)^{-gamma} / |lambda + nu_i + 2 pi i y.xi_i|
  double nu0 = 0.0;            // min nu (1+|xi|)^gamma on the grid
  bool pass = false;           // all values <= 1/nu0
};
ResolventProbe resolvent_A_bound_probe(const VelocityGrid& g, const KernelParams& p, const Eigen::VectorXd& nu,
                                       const Eigen::VectorXd& y, const std::vector<cplx>& lambdas);

}  // namespace kinspec
