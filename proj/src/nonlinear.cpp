#include "kinspec/nonlinear.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "kinspec/errors.hpp"

namespace kinspec {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kMaxCorners = 16;

struct Stencil {
  std::array<int, kMaxCorners> idx;
  std::array<double, kMaxCorners> w;
  int size = 0;
};

// multilinear weights on the tensor node box; false outside it
bool locate(const VelocityGrid& g, const double* x, Stencil& st) {
  const int d = g.d, m = g.per_axis;
  int base[4];
  double frac[4];
  for (int k = 0; k < d; ++k) {
    if (x[k] < g.axis.front() || x[k] > g.axis.back()) return false;
    int c = int(std::upper_bound(g.axis.begin(), g.axis.end(), x[k]) - g.axis.begin()) - 1;
    c = std::clamp(c, 0, m - 2);
    base[k] = c;
    frac[k] = (x[k] - g.axis[c]) / (g.axis[c + 1] - g.axis[c]);
  }
  st.size = 1 << d;
  for (int corner = 0; corner < st.size; ++corner) {
    int flat = 0;
    double w = 1.0;
    for (int k = 0; k < d; ++k) {
      const int bit = (corner >> (d - 1 - k)) & 1;
      flat = flat * m + base[k] + bit;
      w *= bit ? frac[k] : 1.0 - frac[k];
    }
    st.idx[corner] = flat;
    st.w[corner] = w;
  }
  return true;
}

// Values of every column of a field at off-grid points.
class FieldEval {
 public:
  FieldEval(const VelocityGrid& g, Interpolation kind, const Eigen::MatrixXd& values) : g_(g), kind_(kind) {
    if (kind_ == Interpolation::Multilinear) {
      vals_t_ = values.transpose();
      return;
    }
    const int n = g.size(), m = g.per_axis;
    h0_ = std::pow(2.0 * kPi, -0.25);
    for (int k = 0; k <= m; ++k) {
      sq_.push_back(std::sqrt(double(k)));
      isq_.push_back(k > 0 ? 1.0 / std::sqrt(double(k)) : 0.0);
    }
    // c_b = sum_j w_j chi_b(xi_j) f_j, exact on the interpolation space
    Eigen::MatrixXd X(n, n);
    std::vector<double> h(m * g.d);
    for (int j = 0; j < n; ++j) {
      for (int a = 0; a < g.d; ++a) hermite_functions(g.nodes(j, a), m, &h[a * m]);
      for (int b = 0; b < n; ++b) {
        int r = b;
        double v = 1.0;
        for (int a = g.d - 1; a >= 0; --a) {
          v *= h[a * m + r % m];
          r /= m;
        }
        X(j, b) = v * g.w(j);
      }
    }
    coef_ = (X.transpose() * values).transpose();  // cols x n, columns innermost
    const int cols = int(coef_.rows()), R = n / m;
    Cm_.resize(m, R * cols);
    for (int r = 0; r < R; ++r)
      for (int b3 = 0; b3 < m; ++b3)
        for (int c = 0; c < cols; ++c) Cm_(b3, r * cols + c) = coef_(c, r * m + b3);
  }
  int cols() const { return kind_ == Interpolation::Multilinear ? int(vals_t_.rows()) : int(coef_.rows()); }
  void multilinear(const Stencil& st, double* out) const {
    const int cols = int(vals_t_.rows());
    for (int c = 0; c < cols; ++c) out[c] = 0.0;
    for (int q = 0; q < st.size; ++q) {
      const double* v = vals_t_.data() + std::ptrdiff_t(st.idx[q]) * cols;
      for (int c = 0; c < cols; ++c) out[c] += st.w[q] * v[c];
    }
  }
  // Values at P points (rows of pts, P x d) into vals (cols x P). The last axis is contracted by one
  // product H_last * Cm, the leading axes by a Kronecker weight vector per point.
  struct Work {
    Eigen::MatrixXd H, T;
    Eigen::VectorXd lead;
  };
  void hermite(const Eigen::MatrixXd& pts, Eigen::MatrixXd& vals, Work& w) const {
    const int m = g_.per_axis, d = g_.d, cols = int(coef_.rows()), P = int(pts.rows());
    const int R = int(Cm_.cols()) / cols;
    w.H.resize(d * m, P);
    for (int p = 0; p < P; ++p) {
      double* h = w.H.col(p).data();
      double r2 = 0.0;
      for (int a = 0; a < d; ++a) {
        const double x = pts(p, a);
        r2 += x * x;
        double* o = h + a * m;
        o[0] = h0_;
        if (m > 1) o[1] = x * h0_;
        for (int k = 1; k + 1 < m; ++k) o[k + 1] = (x * o[k] - sq_[k] * o[k - 1]) * isq_[k + 1];
      }
      // the Gaussian factor of every axis, folded into the first
      const double gauss = std::exp(-0.25 * r2);
      for (int k = 0; k < m; ++k) h[k] *= gauss;
    }
    w.T.noalias() = Cm_.transpose() * w.H.bottomRows(m);  // (R cols) x P
    vals.resize(cols, P);
    w.lead.resize(R);
    for (int p = 0; p < P; ++p) {
      const double* h = w.H.col(p).data();
      if (d == 3) {
        for (int b1 = 0; b1 < m; ++b1)
          for (int b2 = 0; b2 < m; ++b2) w.lead(b1 * m + b2) = h[b1] * h[m + b2];
      } else {
        for (int b1 = 0; b1 < m; ++b1) w.lead(b1) = h[b1];
      }
      vals.col(p).noalias() = Eigen::Map<const Eigen::MatrixXd>(w.T.col(p).data(), cols, R) * w.lead;
    }
  }

 private:
  const VelocityGrid& g_;
  Interpolation kind_;
  Eigen::MatrixXd vals_t_;  // cols x n
  Eigen::MatrixXd coef_;    // cols x n
  Eigen::MatrixXd Cm_;      // last-axis index x (leading multi-index, column)
  double h0_ = 0.0;
  std::vector<double> sq_, isq_;
};

}  // namespace

CollisionForm::CollisionForm(GridPtr g, const KernelParams& p, const GammaOptions& opt)
    : g_(std::move(g)), p_(p), opt_(opt) {
  p_.validate();
  const int d = g_->d;
  if (d != p_.d) throw Error(ErrorKind::Precondition, "CollisionForm: grid and kernel dimensions differ");
  if (d != 2 && d != 3) throw Error(ErrorKind::Precondition, "CollisionForm: d = 2 or 3 supported");
  if (opt_.interp == Interpolation::Hermite && g_->scheme != GridScheme::GaussHermite)
    throw Error(ErrorKind::Precondition, "CollisionForm: Hermite interpolation needs a Gauss-Hermite grid");
  if (opt_.interp == Interpolation::Hermite && g_->per_axis > 16)
    throw Error(ErrorKind::Precondition, "CollisionForm: Hermite interpolation supports at most 16 nodes per axis");
  if (opt_.angular == AngularRule::Fixed) {
    const SphereRule sr = sphere_rule(d, opt_.sphere_points);
    const int np = int(sr.dirs.size());
    std::vector<bool> used(np, false);
    std::vector<Eigen::VectorXd> dirs;
    for (int a = 0; a < np; ++a) {
      if (used[a]) continue;
      used[a] = true;
      int partner = -1;
      for (int b = a + 1; b < np; ++b)
        if (!used[b] && (sr.dirs[a] + sr.dirs[b]).norm() < 1e-12) {
          partner = b;
          break;
        }
      dirs.push_back(sr.dirs[a]);
      w_plus_.push_back(sr.w[a]);
      w_minus_.push_back(partner >= 0 ? sr.w[partner] : 0.0);
      if (partner >= 0) used[partner] = true;
    }
    omega_.resize(int(dirs.size()), d);
    for (int k = 0; k < int(dirs.size()); ++k) omega_.row(k) = dirs[k].transpose();
  } else {
    if (opt_.polar < 1 || (d == 3 && opt_.azimuth < 3))
      throw Error(ErrorKind::Precondition, "CollisionForm: aligned rule needs polar >= 1, azimuth >= 3");
    const Rule1D r = d == 3 ? gauss_legendre(opt_.polar, 0.0, 1.0) : gauss_legendre(2 * opt_.polar, -0.5 * kPi, 0.5 * kPi);
    node_ = r.x;
    weight_ = r.w;
    const double dphi = d == 3 ? 2.0 * kPi / opt_.azimuth : 1.0;
    for (std::size_t q = 0; q < node_.size(); ++q) {
      const double c = d == 3 ? node_[q] : std::cos(node_[q]);
      folded_.push_back(weight_[q] * dphi * (p_.angular(c) + p_.angular(-c)));
    }
    for (int r = 0; d == 3 && r < opt_.azimuth; ++r) {
      cos_.push_back(std::cos((r + 0.5) * dphi));
      sin_.push_back(std::sin((r + 0.5) * dphi));
    }
  }

  if (opt_.interp == Interpolation::Multilinear) {
    const VelocityGrid& G = *g_;
    const int n = G.size(), K = max_collisions();
    std::vector<double> W(K), P1(K * d), P2(K * d);
    double total = 0.0, lost = 0.0;
    long dropped = 0;
    Stencil st;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double rel = (G.nodes.row(i) - G.nodes.row(j)).norm();
        const double base = std::pow(rel, -p_.gamma) * (G.w(j) * G.sqrtM(j) + G.w(i) * G.sqrtM(i));
        const int nc = collisions(i, j, W.data(), P1.data(), P2.data());
        for (int k = 0; k < nc; ++k) {
          total += base * W[k];
          if (!locate(G, &P1[k * d], st) || !locate(G, &P2[k * d], st)) {
            lost += base * W[k];
            ++dropped;
          }
        }
      }
    leak_fraction_ = total > 0.0 ? lost / total : 0.0;
    dropped_ = dropped;
  }
}

int CollisionForm::max_collisions() const {
  if (opt_.angular == AngularRule::Fixed) return int(omega_.rows());
  return g_->d == 3 ? int(node_.size()) * opt_.azimuth : int(node_.size());
}

int CollisionForm::collisions(int i, int j, double* W, double* p1, double* p2) const {
  const VelocityGrid& G = *g_;
  const int d = G.d;
  double rel[3] = {0.0, 0.0, 0.0}, e[3] = {0.0, 0.0, 0.0};
  for (int a = 0; a < d; ++a) rel[a] = G.nodes(i, a) - G.nodes(j, a);
  const double sn = std::sqrt(rel[0] * rel[0] + rel[1] * rel[1] + (d == 3 ? rel[2] * rel[2] : 0.0));
  for (int a = 0; a < d; ++a) e[a] = rel[a] / sn;
  int cnt = 0;
  auto emit = [&](const double* om, double weight, double c) {
    const double wt = weight;
    if (wt == 0.0) return;
    const double proj = sn * c;
    W[cnt] = wt;
    for (int a = 0; a < d; ++a) {
      p1[cnt * d + a] = G.nodes(i, a) - proj * om[a];
      p2[cnt * d + a] = G.nodes(j, a) + proj * om[a];
    }
    ++cnt;
  };
  if (opt_.angular == AngularRule::Fixed) {
    for (int k = 0; k < omega_.rows(); ++k) {
      double om[3];
      for (int a = 0; a < d; ++a) om[a] = omega_(k, a);
      double c = 0.0;
      for (int a = 0; a < d; ++a) c += e[a] * om[a];
      emit(om, w_plus_[k] * p_.angular(c) + w_minus_[k] * p_.angular(-c), c);
    }
    return cnt;
  }
  if (d == 2) {
    const double perp[2] = {-e[1], e[0]};
    for (std::size_t q = 0; q < node_.size(); ++q) {
      const double c = std::cos(node_[q]), s = std::sin(node_[q]);
      const double om[2] = {c * e[0] + s * perp[0], c * e[1] + s * perp[1]};
      emit(om, folded_[q], c);
    }
    return cnt;
  }
  // orthonormal frame (e, u, v)
  double u[3], v[3];
  const int piv = std::abs(e[0]) < 0.9 ? 0 : 1;
  double t[3] = {0.0, 0.0, 0.0};
  t[piv] = 1.0;
  const double te = t[0] * e[0] + t[1] * e[1] + t[2] * e[2];
  for (int a = 0; a < 3; ++a) u[a] = t[a] - te * e[a];
  const double un = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
  for (int a = 0; a < 3; ++a) u[a] /= un;
  v[0] = e[1] * u[2] - e[2] * u[1];
  v[1] = e[2] * u[0] - e[0] * u[2];
  v[2] = e[0] * u[1] - e[1] * u[0];
  for (std::size_t q = 0; q < node_.size(); ++q) {
    const double c = node_[q], s = std::sqrt(std::max(0.0, 1.0 - c * c));
    for (int r = 0; r < opt_.azimuth; ++r) {
      double om[3];
      for (int a = 0; a < 3; ++a) om[a] = c * e[a] + s * (cos_[r] * u[a] + sin_[r] * v[a]);
      emit(om, folded_[q], c);
    }
  }
  return cnt;
}

Eigen::MatrixXd CollisionForm::apply_batch(const Eigen::MatrixXd& F, const Eigen::MatrixXd& Gm) const {
  const VelocityGrid& G = *g_;
  const int n = G.size(), d = G.d, m = int(F.cols());
  if (F.rows() != n || Gm.rows() != n || Gm.cols() != m)
    throw Error(ErrorKind::Precondition, "CollisionForm: input shape mismatch");
  if (!F.allFinite() || !Gm.allFinite()) throw Error(ErrorKind::Precondition, "CollisionForm: non-finite input");
  const bool density = opt_.target == InterpTarget::Density;
  const bool herm = opt_.interp == Interpolation::Hermite;
  const bool same = F == Gm;
  // one evaluator for both arguments: columns [F | G], or F alone when the arguments coincide
  Eigen::MatrixXd FG(n, same ? m : 2 * m);
  FG.leftCols(m) = F;
  if (!same) FG.rightCols(m) = Gm;
  if (density) FG = G.sqrtM.asDiagonal() * FG;
  const FieldEval fe(G, opt_.interp, FG);
  const int off = same ? 0 : m, tc = int(FG.cols());
  const Eigen::MatrixXd Ft = F.transpose(), Gt = Gm.transpose();  // m x n
  const int K = max_collisions();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m, n);
#pragma omp parallel
  {
    Eigen::MatrixXd part = Eigen::MatrixXd::Zero(m, n);
    std::vector<double> W(K), P1(K * d), P2(K * d);
    std::vector<double> v1(tc), v2(tc);
    Eigen::MatrixXd pts(2 * K, d), vals;
    FieldEval::Work work;
    Eigen::VectorXd acc(m);
    Stencil s1, s2;
#pragma omp for schedule(dynamic, 8)
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const int nc = collisions(i, j, W.data(), P1.data(), P2.data());
        acc.setZero();
        double ang = 0.0;
        if (herm) {
          pts.resize(2 * nc, d);
          for (int k = 0; k < nc; ++k)
            for (int a = 0; a < d; ++a) {
              pts(k, a) = P1[k * d + a];
              pts(nc + k, a) = P2[k * d + a];
            }
          fe.hermite(pts, vals, work);
        }
        for (int k = 0; k < nc; ++k) {
          ang += W[k];
          if (herm) {
            std::copy_n(vals.col(k).data(), tc, v1.data());
            std::copy_n(vals.col(nc + k).data(), tc, v2.data());
          } else {
            if (!locate(G, &P1[k * d], s1) || !locate(G, &P2[k * d], s2)) continue;
            fe.multilinear(s1, v1.data());
            fe.multilinear(s2, v2.data());
          }
          const double* f1 = v1.data();
          const double* f2 = v2.data();
          const double* g1 = f1 + off;
          const double* g2 = f2 + off;
          for (int c = 0; c < m; ++c) acc(c) += W[k] * (f2[c] * g1[c] + f1[c] * g2[c]);
        }
        const double ks = 0.5 * std::pow((G.nodes.row(i) - G.nodes.row(j)).norm(), -p_.gamma);
        // M_*^{1/2} g'_* h' = (M'_*^{1/2} g'_*)(M'^{1/2} h') / M^{1/2}
        const double gi = density ? ks * G.w(j) / G.sqrtM(i) : ks * G.w(j) * G.sqrtM(j);
        const double gj = density ? ks * G.w(i) / G.sqrtM(j) : ks * G.w(i) * G.sqrtM(i);
        const double li = ks * G.w(j) * G.sqrtM(j) * ang, lj = ks * G.w(i) * G.sqrtM(i) * ang;
        const auto cross = Ft.col(j).array() * Gt.col(i).array() + Ft.col(i).array() * Gt.col(j).array();
        part.col(i) += (gi * acc.array() - li * cross).matrix();
        part.col(j) += (gj * acc.array() - lj * cross).matrix();
      }
#pragma omp critical
    out += part;
  }
  return out.transpose();
}

Eigen::VectorXd CollisionForm::apply(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const {
  return apply_batch(f, g).col(0);
}

Eigen::VectorXd CollisionForm::linearized(const Eigen::VectorXd& h) const {
  // the form is symmetric in its arguments
  return 2.0 * apply(g_->sqrtM, h);
}

ConservationReport conservation_check(const CollisionForm& form, const Eigen::MatrixXd& Phi_nodal,
                                      const Eigen::VectorXd& f) {
  const VelocityGrid& g = form.grid();
  const Eigen::VectorXd q = form.quadratic(f);
  ConservationReport r;
  r.gamma_norm = g.norm_beta(q, 0.0);
  for (int k = 0; k < Phi_nodal.cols(); ++k) {
    const double pk = (g.w.array() * q.array() * Phi_nodal.col(k).array()).sum();
    r.pairings.push_back(pk);
    r.max_relative = std::max(r.max_relative, std::abs(pk) / std::max(r.gamma_norm, 1e-300));
  }
  return r;
}

LinearizationReport linearization_check(const CollisionForm& form, const LinearSystem& s, const Eigen::VectorXd& h) {
  const VelocityGrid& g = form.grid();
  const Eigen::VectorXd m = g.sqrtM;
  const Eigen::VectorXd Lg = form.linearized(h);
  const Eigen::VectorXd g0 = form.quadratic(m);
  const double nL = g.norm_beta(Lg, 0.0);
  LinearizationReport r;
  r.maxwellian_residual = g.norm_beta(g0, 0.0) / nL;
  for (double e : {1e-1, 1e-2, 1e-3, 1e-4}) {
    const Eigen::VectorXd v = m + e * h;
    const Eigen::VectorXd fd = (form.quadratic(v) - g0) / e;
    r.eps.push_back(e);
    r.err.push_back(g.norm_beta(Eigen::VectorXd(fd - Lg), 0.0) / nL);
  }
  Eigen::MatrixXd A(int(r.eps.size()), 2);
  Eigen::VectorXd b(int(r.eps.size()));
  for (int k = 0; k < A.rows(); ++k) {
    A(k, 0) = 1.0;
    A(k, 1) = std::log(r.eps[k]);
    b(k) = std::log(r.err[k]);
  }
  r.slope = A.colPivHouseholderQr().solve(b)(1);
  // assembled L in the nodal frame: W^{-1/2} Ls W^{1/2}
  const Eigen::VectorXd hs = g.sqrt_w.cwiseProduct(h);
  const Eigen::VectorXd Lh = (s.Ls * hs).cwiseQuotient(g.sqrt_w);
  r.assembled_mismatch = g.norm_beta(Eigen::VectorXd(Lg - Lh), 0.0) / g.norm_beta(Lh, 0.0);
  return r;
}

Eigen::VectorXd random_smooth_perturbation(const VelocityGrid& g, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const int d = g.d;
  const double c0 = nd(rng);
  Eigen::VectorXd c1(d);
  for (int a = 0; a < d; ++a) c1(a) = nd(rng);
  Eigen::MatrixXd C(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) C(a, b) = nd(rng);
  C = 0.5 * (C + C.transpose()).eval();
  Eigen::VectorXd f(g.size());
  for (int i = 0; i < g.size(); ++i) {
    const Eigen::VectorXd x = g.node(i);
    f(i) = g.sqrtM(i) * (c0 + c1.dot(x) + 0.5 * x.dot(C * x));
  }
  return f / f.cwiseAbs().maxCoeff();
}

GammaBoundReport gamma_bound_check(const CollisionForm& form, int samples, double beta, double alpha, unsigned seed) {
  const VelocityGrid& g = form.grid();
  const double gam = form.params().gamma;
  if (!(beta > g.d / 2.0)) throw Error(ErrorKind::Precondition, "gamma_bound_check: beta must exceed d/2");
  if (samples < 2) throw Error(ErrorKind::Precondition, "gamma_bound_check: need at least 2 samples");
  auto sup = [&](const Eigen::VectorXd& v, double b) { return (g.weight_beta(b).array() * v.array().abs()).maxCoeff(); };
  // the mixed estimate needs beta > d/2 - gamma + alpha gamma, which beta > d/2 implies for alpha <= 1
  GammaBoundReport r;
  Eigen::MatrixXd F(g.size(), samples), G(g.size(), samples);
  for (int k = 0; k < samples; ++k) {
    F.col(k) = random_smooth_perturbation(g, seed + 2 * k);
    G.col(k) = random_smooth_perturbation(g, seed + 2 * k + 1);
  }
  const Eigen::MatrixXd Q = form.apply_batch(F, G);
  for (int k = 0; k < samples; ++k) {
    const Eigen::VectorXd q = Q.col(k), f = F.col(k), h = G.col(k);
    r.ratios.push_back(sup(q, beta + gam) / (sup(f, beta) * sup(h, beta)));
    r.mixed_ratios.push_back(g.norm_beta(q, alpha * gam) / (sup(f, beta + alpha * gam) * sup(h, beta + alpha * gam)));
  }
  r.constant = *std::max_element(r.ratios.begin(), r.ratios.end());
  r.constant_half = *std::max_element(r.ratios.begin(), r.ratios.begin() + samples / 2);
  r.mixed_constant = *std::max_element(r.mixed_ratios.begin(), r.mixed_ratios.end());
  r.stable = r.constant <= 1.2 * r.constant_half;
  const Eigen::VectorXd m = g.sqrtM / g.sqrtM.maxCoeff();
  r.psi0_ratio = sup(form.quadratic(m), beta + gam) / std::pow(sup(m, beta), 2);
  return r;
}

ConvolutionCheck convolution_inequality(double alpha, double alpha0, const std::vector<double>& times) {
  if (!(alpha >= 0.0 && alpha < 1.0 && alpha0 > 1.0))
    throw Error(ErrorKind::Precondition, "convolution_inequality: need 0 <= alpha < 1 < alpha0");
  ConvolutionCheck c;
  c.alpha = alpha;
  c.alpha0 = alpha0;
  c.bound = std::pow(2.0, alpha) / (alpha0 - 1.0) + std::pow(2.0, alpha0) / (1.0 - alpha);
  for (double t : times) {
    if (!(t > 0.0)) continue;
    auto f = [&](double s) { return std::pow(1.0 + t - s, -alpha) * std::pow(1.0 + s, -alpha0); };
    const double I = integrate_gk(f, 0.0, t, 1e-10, "convolution_inequality");
    c.sup_ratio = std::max(c.sup_ratio, I * std::pow(1.0 + t, alpha));
  }
  c.pass = c.sup_ratio <= c.bound;
  return c;
}

Lattice make_lattice(int d, int per_axis, double period) {
  if (per_axis < 1 || per_axis % 2 == 0) throw Error(ErrorKind::Precondition, "make_lattice: per_axis must be odd");
  if (!(period > 0.0)) throw Error(ErrorKind::Precondition, "make_lattice: period must be > 0");
  Lattice L;
  L.d = d;
  L.per_axis = per_axis;
  L.period = period;
  int total = 1;
  for (int k = 0; k < d; ++k) total *= per_axis;
  L.y.resize(total, d);
  L.x.resize(total, d);
  const int half = per_axis / 2;
  for (int k = 0; k < total; ++k) {
    int r = k;
    for (int a = d - 1; a >= 0; --a) {
      const int c = r % per_axis;
      r /= per_axis;
      L.y(k, a) = double(c - half) / period;
      L.x(k, a) = c * period / per_axis;
    }
  }
  return L;
}

int Lattice::conjugate(int k) const {
  // mode indices are symmetric about the centre
  return size() - 1 - k;
}

double PerturbationState::reality_defect(const Lattice& lat) const {
  double r = 0.0;
  for (int k = 0; k < lat.size(); ++k)
    r = std::max(r, (coeffs.col(lat.conjugate(k)) - coeffs.col(k).conjugate()).cwiseAbs().maxCoeff());
  return r;
}

void SolverConfig::validate(int d) const {
  if (!(alpha >= 0.5 && alpha < 1.0)) throw Error(ErrorKind::Config, "solver: alpha must lie in [1/2, 1)");
  if (!(beta > d / 2.0)) throw Error(ErrorKind::Config, "solver: beta must exceed d/2");
  if (!(l > d / 2.0)) throw Error(ErrorKind::Config, "solver: l must exceed d/2");
  if (!(tol > 0.0)) throw Error(ErrorKind::Config, "solver: tolerance must be > 0");
  if (!(dt > 0.0) || !(t_end >= dt)) throw Error(ErrorKind::Config, "solver: need 0 < dt <= t_end");
  if (gauss_points < 1 || gauss_points > 8) throw Error(ErrorKind::Config, "solver: gauss_points in 1..8");
  if (max_iter < 1) throw Error(ErrorKind::Config, "solver: max_iter must be >= 1");
}

CauchySolver::CauchySolver(const LinearSystem& s, const CollisionForm& form, const Lattice& lat,
                           const SolverConfig& cfg)
    : s_(s), form_(form), lat_(lat), cfg_(cfg) {
  cfg_.validate(s.d());
  if (lat.d != s.d()) throw Error(ErrorKind::Precondition, "CauchySolver: lattice dimension differs");
  const Rule1D gr = gauss_legendre(cfg_.gauss_points, 0.0, 1.0);
  gnodes_ = gr.x;
  gweights_ = gr.w;
  const int K = lat_.size();
  // -y_k shares the propagator of y_k: B(-y) = conj B(y)
  std::vector<int> index(K, -1), built;
  conj_.assign(K, false);
  owner_.assign(K, -1);
  for (int k = 0; k < K; ++k) {
    const int c = lat_.conjugate(k);
    if (c < k) {
      conj_[k] = true;
      continue;
    }
    index[k] = int(built.size());
    built.push_back(k);
  }
  props_.reserve(built.size());
  for (int k : built) props_.emplace_back(s_.Bhat_sym(lat_.y.row(k).transpose()));
  for (int k = 0; k < K; ++k) owner_[k] = conj_[k] ? index[lat_.conjugate(k)] : index[k];
  abscissa_ = -INFINITY;
  for (int k : built) {
    if (lat_.y.row(k).norm() == 0.0) continue;
    abscissa_ = std::max(abscissa_, props_[index[k]].eigenvalues().real().maxCoeff());
  }
  const int P = lat_.size();
  Fwd_.resize(P, K);
  for (int p = 0; p < P; ++p)
    for (int k = 0; k < K; ++k) Fwd_(p, k) = std::exp(cplx(0.0, 2.0 * kPi * lat_.x.row(p).dot(lat_.y.row(k))));
  Inv_ = Fwd_.adjoint() / double(P);
}

Eigen::VectorXcd CauchySolver::apply_mode(int k, double t, const Eigen::VectorXcd& v) const {
  const Eigen::VectorXcd sw = s_.grid->sqrt_w.cast<cplx>();
  const Propagator& pr = props_[owner_[k]];
  if (!conj_[k]) return pr.apply(t, sw.cwiseProduct(v)).cwiseQuotient(sw);
  return pr.apply(t, sw.cwiseProduct(v).conjugate()).conjugate().cwiseQuotient(sw);
}

Eigen::MatrixXcd CauchySolver::propagate_linear(const Eigen::MatrixXcd& c, double t) const {
  Eigen::MatrixXcd out(c.rows(), c.cols());
  for (int k = 0; k < lat_.size(); ++k) out.col(k) = apply_mode(k, t, c.col(k));
  return out;
}

Eigen::MatrixXcd CauchySolver::gamma_modes(const Eigen::MatrixXcd& c) const {
  // physical values: n x points
  const Eigen::MatrixXcd phys = c * Fwd_.transpose();
  const Eigen::MatrixXd re = phys.real();
  // lattice points carrying the same velocity profile (to rounding) share one Gamma evaluation
  const int P = int(re.cols());
  std::vector<int> rep(P, -1), uniq;
  for (int p = 0; p < P; ++p) {
    const double scale = re.col(p).cwiseAbs().maxCoeff();
    for (int u : uniq)
      if ((re.col(p) - re.col(u)).cwiseAbs().maxCoeff() <= 1e-14 * std::max(scale, 1e-300)) {
        rep[p] = u;
        break;
      }
    if (rep[p] < 0) {
      rep[p] = p;
      uniq.push_back(p);
    }
  }
  Eigen::MatrixXd distinct(re.rows(), int(uniq.size()));
  std::vector<int> slot(P, -1);
  for (std::size_t u = 0; u < uniq.size(); ++u) {
    distinct.col(int(u)) = re.col(uniq[u]);
    slot[uniq[u]] = int(u);
  }
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(re.rows(), P);
  if (distinct.cwiseAbs().maxCoeff() > 0.0) {
    const Eigen::MatrixXd qd = form_.apply_batch(distinct, distinct);
    for (int p = 0; p < P; ++p) q.col(p) = qd.col(slot[rep[p]]);
  }
  return q.cast<cplx>() * Inv_.transpose();
}

Eigen::MatrixXcd CauchySolver::step(const Eigen::MatrixXcd& c, const std::vector<Eigen::MatrixXcd>& sub) const {
  Eigen::MatrixXcd out = propagate_linear(c, cfg_.dt);
  if (!cfg_.nonlinear) return out;
  for (std::size_t q = 0; q < gnodes_.size(); ++q) {
    const Eigen::MatrixXcd gq = gamma_modes(sub[q]);
    out += cfg_.dt * gweights_[q] * propagate_linear(gq, cfg_.dt * (1.0 - gnodes_[q]));
  }
  return out;
}

std::vector<Eigen::MatrixXcd> CauchySolver::substeps(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) const {
  std::vector<Eigen::MatrixXcd> out;
  for (double th : gnodes_) out.push_back((1.0 - th) * a + th * b);
  return out;
}

double CauchySolver::state_norm(const Eigen::MatrixXcd& c) const {
  double sq = 0.0;
  for (int k = 0; k < c.cols(); ++k) sq += std::pow(s_.grid->norm_beta(Eigen::VectorXcd(c.col(k)), cfg_.beta), 2);
  return std::sqrt(sq);
}

double CauchySolver::trajectory_norm(const std::vector<Eigen::MatrixXcd>& traj) const {
  double r = 0.0;
  for (std::size_t n = 0; n < traj.size(); ++n)
    r = std::max(r, std::pow(1.0 + n * cfg_.dt, cfg_.alpha) * state_norm(traj[n]));
  return r;
}

PerturbationState duhamel_step(const CauchySolver& solver, const PerturbationState& state, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::Precondition, "duhamel_step: dt must be > 0");
  if (std::abs(dt - solver.config().dt) > 1e-14 * dt)
    throw Error(ErrorKind::Precondition, "duhamel_step: dt must match the solver's step");
  std::vector<Eigen::MatrixXcd> sub;
  for (double th : std::vector<double>(gauss_legendre(solver.config().gauss_points, 0.0, 1.0).x))
    sub.push_back(solver.propagate_linear(state.coeffs, th * dt));
  PerturbationState out;
  out.time = state.time + dt;
  out.coeffs = solver.step(state.coeffs, sub);
  const double nrm = solver.state_norm(out.coeffs);
  if (!std::isfinite(nrm) || nrm > solver.config().ceiling)
    throw Error(ErrorKind::Divergence, "duhamel_step: norm " + std::to_string(nrm) + " above the ceiling at t = " +
                                           std::to_string(out.time));
  return out;
}

namespace {

std::vector<Eigen::MatrixXcd> apply_phi(const CauchySolver& S, const Eigen::MatrixXcd& f0,
                                        const std::vector<Eigen::MatrixXcd>& traj) {
  std::vector<Eigen::MatrixXcd> out(traj.size());
  out[0] = f0;
  for (std::size_t n = 0; n + 1 < traj.size(); ++n) {
    out[n + 1] = S.step(out[n], S.substeps(traj[n], traj[n + 1]));
    const double nrm = S.state_norm(out[n + 1]);
    if (!std::isfinite(nrm) || nrm > S.config().ceiling)
      throw Error(ErrorKind::Divergence, "solve_cauchy: norm " + std::to_string(nrm) + " above the ceiling at t = " +
                                             std::to_string((n + 1) * S.config().dt));
  }
  return out;
}

double traj_distance(const CauchySolver& S, const std::vector<Eigen::MatrixXcd>& a,
                     const std::vector<Eigen::MatrixXcd>& b) {
  std::vector<Eigen::MatrixXcd> diff(a.size());
  for (std::size_t n = 0; n < a.size(); ++n) diff[n] = a[n] - b[n];
  return S.trajectory_norm(diff);
}

}  // namespace

CauchyResult solve_cauchy(const LinearSystem& s, const CollisionForm& form, const Lattice& lat,
                          const Eigen::MatrixXcd& f0, const SolverConfig& cfg) {
  if (f0.rows() != s.n() || f0.cols() != lat.size())
    throw Error(ErrorKind::Precondition, "solve_cauchy: f0 must be n x modes");
  CauchySolver S(s, form, lat, cfg);
  const SolverConfig& c = S.config();
  // smallness in the sup_beta norm over the lattice
  double a0 = 0.0;
  {
    Eigen::MatrixXcd F(lat.size(), lat.size());
    for (int p = 0; p < lat.size(); ++p)
      for (int k = 0; k < lat.size(); ++k)
        F(p, k) = std::exp(cplx(0.0, 2.0 * kPi * lat.x.row(p).dot(lat.y.row(k))));
    const Eigen::MatrixXcd vals = f0 * F.transpose();
    for (int p = 0; p < vals.cols(); ++p)
      a0 = std::max(a0, s.grid->sup_beta(Eigen::VectorXcd(vals.col(p)), c.beta));
  }
  if (a0 > c.smallness)
    throw Error(ErrorKind::Precondition, "solve_cauchy: ||f0|| = " + std::to_string(a0) + " exceeds the smallness " +
                                             std::to_string(c.smallness));
  const int N = int(std::llround(c.t_end / c.dt));
  std::vector<Eigen::MatrixXcd> traj(N + 1);
  traj[0] = f0;
  for (int n = 0; n < N; ++n) traj[n + 1] = S.propagate_linear(traj[n], c.dt);
  const double scale = S.trajectory_norm(traj);
  CauchyResult r;
  r.spectral_abscissa = S.spectral_abscissa();
  r.leakage_fraction = form.leakage_fraction();
  const double denom = scale > 0.0 ? scale : 1.0;
  double prev = INFINITY;
  if (c.nonlinear && scale > 0.0) {
    for (int it = 0; it < c.max_iter; ++it) {
      std::vector<Eigen::MatrixXcd> next = apply_phi(S, f0, traj);
      const double dist = traj_distance(S, next, traj) / denom;
      r.iterations = it + 1;
      r.distances.push_back(dist);
      if (std::isfinite(prev) && prev > 0.0) {
        const double q = dist / prev;
        r.contraction.push_back(q);
        if (q >= 1.0 && dist > 1e3 * std::numeric_limits<double>::epsilon())
          throw Error(ErrorKind::Divergence, "solve_cauchy: Picard map is not contracting, measured Lipschitz " +
                                                 std::to_string(q));
      }
      prev = dist;
      // the returned trajectory is the iterate whose image was just computed: its residual is dist
      if (dist < c.tol) {
        r.residual = dist;
        break;
      }
      traj = std::move(next);
    }
    if (r.distances.back() >= c.tol)
      throw Error(ErrorKind::Tolerance, "solve_cauchy: no convergence in " + std::to_string(c.max_iter) +
                                            " iterations, last distance " + std::to_string(r.distances.back()));
  } else {
    r.iterations = 1;
    r.distances.push_back(0.0);
  }
  r.sup_norm = S.trajectory_norm(traj);
  for (int n = 0; n <= N; ++n) {
    PerturbationState st;
    st.time = n * c.dt;
    st.coeffs = traj[n];
    r.reality_defect = std::max(r.reality_defect, st.reality_defect(lat));
    r.times.push_back(st.time);
    r.norms.push_back(S.state_norm(traj[n]));
    double l2 = 0.0;
    std::vector<double> mn;
    for (int k = 0; k < lat.size(); ++k) {
      const Eigen::VectorXcd v = traj[n].col(k);
      mn.push_back(s.grid->norm_beta(v, c.beta));
      l2 += std::pow(s.grid->norm_beta(v, 0.0), 2);
    }
    r.l2_norms.push_back(std::sqrt(l2));
    r.mode_norms.push_back(mn);
    r.trajectory.push_back(std::move(st));
  }
  // first time after which the L^2 norm never increases
  int start = N;
  while (start > 0 && r.l2_norms[start] <= r.l2_norms[start - 1] * (1.0 + 1e-12)) --start;
  r.transient_end = start * c.dt;
  r.monotone_after_transient = r.transient_end <= 0.5 * c.t_end;
  if (scale > 0.0) {
    try {
      r.fit = fit_time_decay(r.times, r.norms, 1.0, c.t_end, "beta=" + std::to_string(c.beta));
    } catch (const Error&) {
      r.fit.exponent = NAN;
    }
  }
  return r;
}

Eigen::MatrixXcd cosine_data(const LinearSystem& s, const Lattice& lat, double amplitude, unsigned seed) {
  Eigen::MatrixXcd f0 = Eigen::MatrixXcd::Zero(s.n(), lat.size());
  const Eigen::VectorXd g = random_smooth_perturbation(*s.grid, seed);
  for (int k = 0; k < lat.size(); ++k) {
    Eigen::VectorXd target = Eigen::VectorXd::Zero(lat.d);
    target(0) = 1.0 / lat.period;
    if ((lat.y.row(k).transpose() - target).norm() < 1e-12 || (lat.y.row(k).transpose() + target).norm() < 1e-12)
      f0.col(k) = (0.5 * amplitude * g).cast<cplx>();
  }
  return f0;
}

double estimate_smallness(const CauchyResult& run, double amplitude) {
  if (run.contraction.empty()) throw Error(ErrorKind::Precondition, "estimate_smallness: run has no contraction data");
  const double q = *std::max_element(run.contraction.begin(), run.contraction.end());
  if (!(q > 0.0)) throw Error(ErrorKind::Precondition, "estimate_smallness: contraction factor is zero");
  return 0.5 * amplitude * 0.9 / q;
}

}  // namespace kinspec
