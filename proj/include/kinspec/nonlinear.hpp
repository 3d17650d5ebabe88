#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kinspec/operators.hpp"
#include "kinspec/quadrature.hpp"
#include "kinspec/semigroup.hpp"

namespace kinspec {

enum class InterpTarget { Perturbation, Density };
// Multilinear on the node box; Hermite: the tensor Hermite-function interpolant of a
// Gauss-Hermite grid (exact on M^{1/2} times polynomials of degree < per_axis in each variable).
enum class Interpolation { Multilinear, Hermite };

// Aligned: omega parametrized around xi - xi_*, Gauss in cos(theta) on (0,1) (b folded over
// omega -> -omega) and trapezoid in azimuth; Fixed: a fixed sphere rule (26-point Lebedev for d = 3).
enum class AngularRule { Aligned, Fixed };

struct GammaOptions {
  Interpolation interp = Interpolation::Hermite;
  InterpTarget target = InterpTarget::Perturbation;
  AngularRule angular = AngularRule::Aligned;
  int polar = 4;
  int azimuth = 8;
  int sphere_points = 26;
};

// Gamma(g,h) = (1/2) M^{-1/2} Q(M^{1/2} g, M^{1/2} h) on the grid nodes, normalized so that
// Gamma(M^{1/2}, h) + Gamma(h, M^{1/2}) = L h with L = K - nu. The xi_* integral runs over the grid
// nodes (xi_* = xi skipped, where the integrand vanishes). Each unordered node pair is visited once:
// (xi, xi_*) and (xi_*, xi) share their post-collision points. Multilinear interpolation drops the
// gain contribution of points outside the node box (tallied).
// Cost per column: O(n^2 N_omega / 2) point evaluations, 2^d (multilinear) or ~n (Hermite) each.
class CollisionForm {
 public:
  CollisionForm(GridPtr g, const KernelParams& p, const GammaOptions& opt = {});

  Eigen::VectorXd apply(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const;
  Eigen::VectorXd quadratic(const Eigen::VectorXd& f) const { return apply(f, f); }
  // columns are independent inputs (one per x point)
  Eigen::MatrixXd apply_batch(const Eigen::MatrixXd& F, const Eigen::MatrixXd& G) const;
  // Gamma(M^{1/2}, h) + Gamma(h, M^{1/2})
  Eigen::VectorXd linearized(const Eigen::VectorXd& h) const;

  // share of the total gain weight dropped at the box boundary
  double leakage_fraction() const { return leak_fraction_; }
  long dropped_points() const { return dropped_; }
  const VelocityGrid& grid() const { return *g_; }
  const GridPtr& grid_ptr() const { return g_; }
  const KernelParams& params() const { return p_; }

 private:
  GridPtr g_;
  KernelParams p_;
  GammaOptions opt_;
  Eigen::MatrixXd omega_;                 // fixed rule: one direction per antipodal pair
  std::vector<double> w_plus_, w_minus_;  // sphere weights of omega and -omega
  std::vector<double> node_, weight_;     // aligned rule: cos(theta) (d = 3) or theta (d = 2)
  std::vector<double> folded_;            // weight times b(c) + b(-c)
  std::vector<double> cos_, sin_;         // azimuth nodes
  double leak_fraction_ = 0.0;
  long dropped_ = 0;
  // omega nodes for the pair (i, j): folded weights W and post-collision points p1 = xi', p2 = xi'_*
  int collisions(int i, int j, double* W, double* p1, double* p2) const;
  int max_collisions() const;
};

struct ConservationReport {
  std::vector<double> pairings;  // (Gamma(f,f), psi_k) in L^2, psi_k the orthonormal invariants
  double gamma_norm = 0.0;
  double max_relative = 0.0;  // max |pairing| / ||Gamma(f,f)||
};
ConservationReport conservation_check(const CollisionForm& form, const Eigen::MatrixXd& Phi_nodal,
                                      const Eigen::VectorXd& f);

struct LinearizationReport {
  std::vector<double> eps, err;  // || [Gamma(m+eps h) - Gamma(m)]/eps - L_Gamma h || / ||L_Gamma h||
  double slope = 0.0;
  double maxwellian_residual = 0.0;  // ||Gamma(m, m)|| / ||L_Gamma h||
  double assembled_mismatch = 0.0;  // || L_Gamma h - L h || / || L h ||, L from the linear system
};
LinearizationReport linearization_check(const CollisionForm& form, const LinearSystem& s, const Eigen::VectorXd& h);

struct GammaBoundReport {
  std::vector<double> ratios;        // sup_{beta+gamma} |Gamma(f,g)| / (sup_beta |f| sup_beta |g|)
  std::vector<double> mixed_ratios;  // ||Gamma||_{L^2_{alpha gamma}} / (sup_{beta+alpha gamma} |f| ...)
  double constant = 0.0, constant_half = 0.0;  // max over all pairs and over the first half
  double mixed_constant = 0.0;
  bool stable = false;  // constant <= 1.2 constant_half
  double psi0_ratio = 0.0;
};
// Random smooth pairs f = M^{1/2} (polynomial of degree <= 2) with N(0,1) coefficients.
GammaBoundReport gamma_bound_check(const CollisionForm& form, int samples, double beta, double alpha,
                                   unsigned seed = 7);
Eigen::VectorXd random_smooth_perturbation(const VelocityGrid& g, unsigned seed);

// sup_t (1+t)^alpha int_0^t (1+t-s)^{-alpha} (1+s)^{-alpha0} ds against 2^alpha/(alpha0-1) + 2^alpha0/(1-alpha)
struct ConvolutionCheck {
  double alpha = 0.0, alpha0 = 0.0, sup_ratio = 0.0, bound = 0.0;
  bool pass = false;
};
ConvolutionCheck convolution_inequality(double alpha, double alpha0, const std::vector<double>& times);

// Periodic lattice x in [0, period)^d with `modes` points per axis (odd); y_k = n_k / period.
struct Lattice {
  int d = 3, per_axis = 3;
  double period = 10.0;
  Eigen::MatrixXd y;  // frequency of each mode, modes x d
  Eigen::MatrixXd x;  // lattice points
  int size() const { return int(y.rows()); }
  int conjugate(int k) const;  // index of -y_k
};
Lattice make_lattice(int d, int per_axis, double period);

struct PerturbationState {
  double time = 0.0;
  Eigen::MatrixXcd coeffs;  // nodal velocity values, n x modes
  // max |c(-y) - conj c(y)|
  double reality_defect(const Lattice& lat) const;
};

struct SolverConfig {
  double alpha = 0.5, beta = 2.0, l = 2.0;
  double dt = 1.0, t_end = 50.0;
  int gauss_points = 2;  // per step, Gamma frozen at each node
  double tol = 1e-10;    // relative to the linear trajectory's norm
  int max_iter = 30;
  double smallness = 0.05;  // A0 in the sup_beta norm of f0
  double ceiling = 1e6;
  bool nonlinear = true;
  void validate(int d) const;
};

struct CauchyResult {
  std::vector<double> times;
  std::vector<PerturbationState> trajectory;
  std::vector<double> norms;             // (sum_k ||f_k(t)||_beta^2)^{1/2}
  std::vector<double> l2_norms;          // same with beta = 0
  std::vector<std::vector<double>> mode_norms;  // [time][mode]
  std::vector<double> contraction;       // distance ratios between successive Picard iterates
  std::vector<double> distances;
  double residual = 0.0;                 // || f - Phi[f] || in the trajectory norm, relative
  double sup_norm = 0.0;                 // sup_t (1+t)^alpha ||f(t)|| trajectory norm
  int iterations = 0;
  DecayFit fit;                          // algebraic fit over [1, t_end]
  double spectral_abscissa = 0.0;        // slowest nonzero lattice mode
  double reality_defect = 0.0;
  double leakage_fraction = 0.0;
  bool monotone_after_transient = false;
  double transient_end = 0.0;
};

// Duhamel map on the lattice. Propagators for the modes with a conjugate partner are shared.
class CauchySolver {
 public:
  CauchySolver(const LinearSystem& s, const CollisionForm& form, const Lattice& lat, const SolverConfig& cfg);
  // one step of length cfg.dt: linear propagation plus the Gauss-quadrature Duhamel term with
  // Gamma evaluated on the supplied substep states (nodal, n x modes each)
  Eigen::MatrixXcd step(const Eigen::MatrixXcd& c, const std::vector<Eigen::MatrixXcd>& substep_states) const;
  // states at the Gauss nodes of [t, t+dt] by linear interpolation of the endpoint states
  std::vector<Eigen::MatrixXcd> substeps(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) const;
  // e^{t B(y_k)} mode-wise for a time that is a multiple of dt or a Gauss offset
  Eigen::MatrixXcd propagate_linear(const Eigen::MatrixXcd& c, double t) const;
  // nodal physical values (n x lattice points) -> Gamma(f, f) -> modes
  Eigen::MatrixXcd gamma_modes(const Eigen::MatrixXcd& c) const;
  const Lattice& lattice() const { return lat_; }
  const SolverConfig& config() const { return cfg_; }
  double trajectory_norm(const std::vector<Eigen::MatrixXcd>& traj) const;
  double state_norm(const Eigen::MatrixXcd& c) const;
  double spectral_abscissa() const { return abscissa_; }

 private:
  const LinearSystem& s_;
  const CollisionForm& form_;
  Lattice lat_;
  SolverConfig cfg_;
  std::vector<double> gnodes_, gweights_;  // on [0, 1]
  std::vector<Propagator> props_;          // one per mode (symmetric frame)
  std::vector<int> owner_;                 // mode whose propagator (or its conjugate) is used
  std::vector<bool> conj_;
  Eigen::MatrixXcd Fwd_, Inv_;             // lattice DFT: values = Fwd * modes^T
  double abscissa_ = 0.0;
  Eigen::VectorXcd apply_mode(int k, double t, const Eigen::VectorXcd& v_nodal) const;
};

// Duhamel step with Gamma frozen at the linearly propagated substep states.
PerturbationState duhamel_step(const CauchySolver& solver, const PerturbationState& state, double dt);

// f0: nodal velocity values at each lattice mode (n x modes).
CauchyResult solve_cauchy(const LinearSystem& s, const CollisionForm& form, const Lattice& lat,
                          const Eigen::MatrixXcd& f0_modes, const SolverConfig& cfg);

// f0(x, xi) = amplitude cos(2 pi x_1 / period) g(xi) on the lattice, g = random_smooth_perturbation
Eigen::MatrixXcd cosine_data(const LinearSystem& s, const Lattice& lat, double amplitude, unsigned seed = 11);

// Half the amplitude at which the measured contraction factor extrapolates linearly to 0.9.
double estimate_smallness(const CauchyResult& run, double amplitude);

}  // namespace kinspec
