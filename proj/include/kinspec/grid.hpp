#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kinspec {

enum class GridScheme { GaussHermite, Uniform };

GridScheme parse_scheme(const std::string& s);
std::string scheme_name(GridScheme s);

// Tensor-product velocity grid; integral of F is approximated by sum_i w_i F(xi_i).
struct VelocityGrid {
  int d = 3;
  GridScheme scheme = GridScheme::GaussHermite;
  int per_axis = 8;
  double extent = 0.0;            // truncation radius (max node norm for Gauss-Hermite)
  std::vector<double> axis;       // 1-D nodes, ascending
  std::vector<double> axis_w;     // 1-D weights, so that w_i = prod of axis_w
  Eigen::MatrixXd nodes;          // n x d
  Eigen::VectorXd w;              // quadrature weights
  Eigen::VectorXd sqrt_w;
  Eigen::VectorXd speed;          // |xi_i|
  Eigen::VectorXd sqrtM;          // M^{1/2}(xi_i)

  int size() const { return int(w.size()); }
  Eigen::VectorXd node(int i) const { return nodes.row(i).transpose(); }
  int flat_index(const std::vector<int>& idx) const;
  std::vector<int> multi_index(int i) const;

  double maxwellian_mass() const;
  // (1+|xi|)^beta at every node
  Eigen::VectorXd weight_beta(double beta) const;
  // weighted L^2_beta norm of nodal values
  double norm_beta(const Eigen::VectorXcd& u, double beta) const;
  double norm_beta(const Eigen::VectorXd& u, double beta) const;
  double sup_beta(const Eigen::VectorXcd& u, double beta) const;
  std::uint64_t hash() const;
  std::string describe() const;
};

using GridPtr = std::shared_ptr<const VelocityGrid>;

// resolution = nodes per axis; extent only used by the uniform scheme.
GridPtr build_grid(int d, GridScheme scheme, int resolution, double extent = 6.0);

}  // namespace kinspec
