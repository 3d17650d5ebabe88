#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kinspec/operators.hpp"

namespace kinspec {

// e^{tA} for a fixed dense matrix: eigendecomposition when the eigenvector basis is well
// conditioned, scaling-and-squaring exponential otherwise.
class Propagator {
 public:
  explicit Propagator(const Eigen::MatrixXcd& A, double cond_limit = 1e8);
  Eigen::VectorXcd apply(double t, const Eigen::VectorXcd& v) const;
  Eigen::MatrixXcd matrix(double t) const;
  // e^{tA} v by the matrix exponential regardless of the chosen method
  Eigen::VectorXcd apply_expm(double t, const Eigen::VectorXcd& v) const;
  bool diagonalized() const { return diag_; }
  double condition() const { return cond_; }
  const Eigen::VectorXcd& eigenvalues() const { return lam_; }
  const Eigen::MatrixXcd& eigenvectors() const { return V_; }

 private:
  Eigen::MatrixXcd A_, V_;
  Eigen::PartialPivLU<Eigen::MatrixXcd> Vlu_;
  Eigen::VectorXcd lam_;
  bool diag_ = false;
  double cond_ = 0.0;
};

struct Evolution {
  std::vector<double> times;
  std::vector<Eigen::VectorXcd> states;
  std::string method;        // "eigen" or "expm"
  double crosscheck = 0.0;   // relative difference of the two methods at the smallest positive time
  double condition = 0.0;
};

// Symmetric-frame evolution.
Evolution evolve(const Eigen::MatrixXcd& A_sym, const Eigen::VectorXcd& u_sym, const std::vector<double>& times,
                 bool crosscheck = true);
// Nodal evolution of a DiscreteOperator.
Evolution evolve(const DiscreteOperator& op, const Eigen::VectorXcd& u, const std::vector<double>& times,
                 bool crosscheck = true);

// e^{t(-2 pi i y.xi - nu)} u pointwise (frame independent).
std::vector<Eigen::VectorXcd> evolve_A(const LinearSystem& s, const Eigen::VectorXd& y, const Eigen::VectorXcd& u,
                                       const std::vector<double>& times);

// sup_{z >= 0} z^alpha e^{-nu0 z}: numeric maximizer and the closed form (alpha/nu0)^alpha e^{-alpha}.
struct MaximizerCheck {
  double numeric = 0.0, analytic = 0.0, argmax = 0.0;
};
MaximizerCheck lemma_maximizer(double alpha, double nu0);

struct WeightedADecay {
  double sup_ratio = 0.0;  // sup_t ||e^{tA}u||_beta (1+t)^alpha / ||u||_{beta+alpha gamma}
  double bound = 0.0;      // 2^alpha max(1, (alpha/nu0)^alpha e^{-alpha})
  double nu0 = 0.0;
  bool pass = false;
};
WeightedADecay weighted_A_decay(const LinearSystem& s, const Eigen::VectorXd& y, const Eigen::VectorXcd& u,
                                double alpha, double beta, const std::vector<double>& times);

double rho_alpha(double alpha, double ynorm);

// Symmetric-frame weighted norm ||(1+|xi|)^beta v||.
double sym_norm_beta(const VelocityGrid& g, const Eigen::VectorXcd& v, double beta);

struct DecayFit {
  double exponent = 0.0;  // norm ~ C t^{-exponent}
  double C = 0.0;
  double t_lo = 0.0, t_hi = 0.0;
  double residual = 0.0;
  std::string weight;
};
DecayFit fit_time_decay(const std::vector<double>& t, const std::vector<double>& norms, double t_lo, double t_hi,
                        const std::string& weight = "");

struct SemigroupProbe {
  Eigen::VectorXd y;
  std::vector<double> times, norms, ratios;
  double alpha = 0.0, beta = 0.0, rho = 0.0, sup_ratio = 0.0;
  bool resonant = false;  // y = 0 and u has a kernel component: excluded lambda = 0 case
  DecayFit fit;
  std::string method;
};

// Certified ratio Q(t) = ||e^{tB}u||_beta (1+t)^alpha / ((1 + rho_alpha(y) chi_{|y|<=r3}) ||u||_{beta+alpha gamma}).
SemigroupProbe decay_probe(const LinearSystem& s, const Eigen::VectorXd& y, double alpha, double beta,
                           const Eigen::VectorXcd& u_sym, const std::vector<double>& times, double r3);

// Orthonormal basis (symmetric frame) of grid functions invariant under the signed permutations
// of the coordinates 2..d; B(r e_1) leaves this subspace invariant.
Eigen::MatrixXd axial_symmetric_basis(const VelocityGrid& g);

struct RadialRule {
  std::vector<double> r, w;  // includes the |y|-sphere area factor
};
// Gauss-Legendre on geometric panels [0,r0],[r0,2r0],... up to rmax.
RadialRule radial_y_rule(int d, double r0, double rmax, int per_panel);

struct XspaceResult {
  std::vector<double> times, norms, running_exponent;
  DecayFit fit;
  double refinement_diff = 0.0;  // max relative difference against the rule with doubled nodes
  int y_nodes = 0;
};
// ||e^{tB}u||_{L^2_{x,xi}} for u_hat(y) = phi(|y|) u0, u0 invariant under the grid's rotation group.
XspaceResult xspace_decay(const LinearSystem& s, const Eigen::VectorXcd& u0_sym, const std::function<double(double)>& phi,
                          const std::vector<double>& times, double r0, double rmax, int per_panel, double fit_lo,
                          double fit_hi);

struct DuhamelCheck {
  double rel_error = 0.0;
  int nodes = 0;
};
// e^{tB}u against e^{tA}u + int_0^t e^{(t-s)A} K e^{sB}u ds by composite Gauss-Legendre in s.
DuhamelCheck duhamel_check(const LinearSystem& s, const Eigen::VectorXd& y, const Eigen::VectorXcd& u_sym, double t,
                           int panels = 16, int per_panel = 8);

struct GrowthCap {
  std::vector<double> times, norms;  // ||e^{tB}||_{L^2_beta}
  double K_norm = 0.0;
  bool pass = false;
};
GrowthCap weighted_growth_cap(const LinearSystem& s, const Eigen::VectorXd& y, double beta,
                              const std::vector<double>& times);

struct GeneratorCheck {
  std::vector<double> h, err;
  double slope = 0.0;
};
GeneratorCheck generator_consistency(const LinearSystem& s, const Eigen::VectorXd& y, const Eigen::VectorXcd& u_sym);

std::vector<double> log_times(double t_min, double t_max, int n, bool with_zero = true);

}  // namespace kinspec
