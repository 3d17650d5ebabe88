#include "kinspec/semigroup.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <boost/math/tools/minima.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "kinspec/errors.hpp"
#include "kinspec/linalg.hpp"
#include "kinspec/quadrature.hpp"

namespace kinspec {

namespace {
constexpr double kPi = std::numbers::pi;
const cplx kI(0.0, 1.0);
}  // namespace

Propagator::Propagator(const Eigen::MatrixXcd& A, double cond_limit) : A_(A) {
  ComplexEig e = eig_complex(A, true);
  lam_ = e.values;
  V_ = e.vectors;
  Vlu_.compute(V_);
  const double rc = Vlu_.rcond();
  cond_ = rc > 0.0 ? 1.0 / rc : INFINITY;
  diag_ = cond_ < cond_limit;
}

Eigen::VectorXcd Propagator::apply(double t, const Eigen::VectorXcd& v) const {
  if (t == 0.0) return v;
  if (!diag_) return apply_expm(t, v);
  Eigen::VectorXcd c = Vlu_.solve(v);
  for (int k = 0; k < c.size(); ++k) c(k) *= std::exp(lam_(k) * t);
  return V_ * c;
}

Eigen::MatrixXcd Propagator::matrix(double t) const {
  if (!diag_) return (A_ * t).exp();
  Eigen::MatrixXcd Vt = V_;
  for (int k = 0; k < lam_.size(); ++k) Vt.col(k) *= std::exp(lam_(k) * t);
  return Vt * Vlu_.inverse();
}

Eigen::VectorXcd Propagator::apply_expm(double t, const Eigen::VectorXcd& v) const {
  if (t == 0.0) return v;
  Eigen::MatrixXcd At = A_ * t;
  return At.exp() * v;
}

Evolution evolve(const Eigen::MatrixXcd& A_sym, const Eigen::VectorXcd& u_sym, const std::vector<double>& times,
                 bool crosscheck) {
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < 0.0) throw Error(ErrorKind::Precondition, "evolve: times must be >= 0");
    if (k > 0 && times[k] < times[k - 1]) throw Error(ErrorKind::Precondition, "evolve: times must ascend");
  }
  Propagator prop(A_sym);
  Evolution ev;
  ev.times = times;
  ev.method = prop.diagonalized() ? "eigen" : "expm";
  ev.condition = prop.condition();
  for (double t : times) ev.states.push_back(prop.apply(t, u_sym));
  if (crosscheck) {
    for (std::size_t k = 0; k < times.size(); ++k)
      if (times[k] > 0.0) {
        const Eigen::VectorXcd a = ev.states[k];
        const Eigen::VectorXcd b = prop.apply_expm(times[k], u_sym);
        ev.crosscheck = (a - b).norm() / std::max(b.norm(), 1e-300);
        break;
      }
  }
  return ev;
}

Evolution evolve(const DiscreteOperator& op, const Eigen::VectorXcd& u, const std::vector<double>& times,
                 bool crosscheck) {
  const Eigen::VectorXcd sw = op.grid->sqrt_w.cast<cplx>();
  Evolution ev = evolve(op.symmetric_frame(), sw.cwiseProduct(u), times, crosscheck);
  for (auto& s : ev.states) s = s.cwiseQuotient(sw);
  return ev;
}

std::vector<Eigen::VectorXcd> evolve_A(const LinearSystem& s, const Eigen::VectorXd& y, const Eigen::VectorXcd& u,
                                       const std::vector<double>& times) {
  const Eigen::VectorXd yx = s.grid->nodes * y;
  std::vector<Eigen::VectorXcd> out;
  for (double t : times) {
    if (t < 0.0) throw Error(ErrorKind::Precondition, "evolve_A: times must be >= 0");
    Eigen::VectorXcd v = u;
    if (t > 0.0)
      for (int i = 0; i < s.n(); ++i) v(i) *= std::exp((-2.0 * kPi * kI * yx(i) - s.nu(i)) * t);
    out.push_back(v);
  }
  return out;
}

MaximizerCheck lemma_maximizer(double alpha, double nu0) {
  if (!(nu0 > 0.0) || alpha < 0.0) throw Error(ErrorKind::Precondition, "lemma_maximizer: need nu0 > 0, alpha >= 0");
  MaximizerCheck m;
  m.analytic = alpha == 0.0 ? 1.0 : std::pow(alpha / nu0, alpha) * std::exp(-alpha);
  if (alpha == 0.0) {
    m.numeric = 1.0;
    return m;
  }
  auto f = [&](double z) { return -std::pow(z, alpha) * std::exp(-nu0 * z); };
  auto r = boost::math::tools::brent_find_minima(f, 0.0, 50.0 * alpha / nu0 + 1.0, 52);
  m.argmax = r.first;
  m.numeric = -r.second;
  return m;
}

double sym_norm_beta(const VelocityGrid& g, const Eigen::VectorXcd& v, double beta) {
  return std::sqrt(((1.0 + g.speed.array()).pow(2.0 * beta) * v.array().abs2()).sum());
}

WeightedADecay weighted_A_decay(const LinearSystem& s, const Eigen::VectorXd& y, const Eigen::VectorXcd& u,
                                double alpha, double beta, const std::vector<double>& times) {
  const VelocityGrid& g = *s.grid;
  WeightedADecay r;
  r.nu0 = (s.nu.array() * (1.0 + g.speed.array()).pow(s.params.gamma)).minCoeff();
  const double den = sym_norm_beta(g, u, beta + alpha * s.params.gamma);
  auto states = evolve_A(s, y, u, times);
  for (std::size_t k = 0; k < times.size(); ++k)
    r.sup_ratio = std::max(r.sup_ratio, sym_norm_beta(g, states[k], beta) * std::pow(1.0 + times[k], alpha) / den);
  r.bound = std::pow(2.0, alpha) * std::max(1.0, lemma_maximizer(alpha, r.nu0).analytic);
  r.pass = r.sup_ratio <= r.bound;
  return r;
}

double rho_alpha(double alpha, double ynorm) {
  if (alpha < 0.0) throw Error(ErrorKind::Precondition, "rho_alpha: alpha must be >= 0");
  if (!(ynorm > 0.0)) return INFINITY;
  const double base = std::pow(ynorm, -2.0 * alpha);
  return alpha < 1.0 ? base * std::log(1.0 / ynorm + std::exp(1.0)) : base;
}

DecayFit fit_time_decay(const std::vector<double>& t, const std::vector<double>& norms, double t_lo, double t_hi,
                        const std::string& weight) {
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < t.size(); ++k)
    if (t[k] >= t_lo && t[k] <= t_hi && t[k] > 0.0 && norms[k] > 0.0) {
      lx.push_back(std::log(t[k]));
      ly.push_back(std::log(norms[k]));
    }
  if (lx.size() < 3) throw Error(ErrorKind::Precondition, "fit_time_decay: fewer than 3 samples in the window");
  const int m = int(lx.size());
  Eigen::MatrixXd A(m, 2);
  Eigen::VectorXd b(m);
  for (int k = 0; k < m; ++k) {
    A(k, 0) = 1.0;
    A(k, 1) = lx[k];
    b(k) = ly[k];
  }
  Eigen::Vector2d c = A.colPivHouseholderQr().solve(b);
  DecayFit f;
  f.C = std::exp(c(0));
  f.exponent = -c(1);
  f.t_lo = t_lo;
  f.t_hi = t_hi;
  f.residual = (A * c - b).cwiseAbs().maxCoeff();
  f.weight = weight;
  return f;
}

SemigroupProbe decay_probe(const LinearSystem& s, const Eigen::VectorXd& y, double alpha, double beta,
                           const Eigen::VectorXcd& u_sym, const std::vector<double>& times, double r3) {
  const VelocityGrid& g = *s.grid;
  SemigroupProbe p;
  p.y = y;
  p.alpha = alpha;
  p.beta = beta;
  p.times = times;
  const double yn = y.norm();
  const double den_u = sym_norm_beta(g, u_sym, beta + alpha * s.params.gamma);
  if (!std::isfinite(den_u) || !(den_u > 0.0)) throw Error(ErrorKind::Precondition, "decay_probe: u must be nonzero");
  const Eigen::VectorXcd Pu = s.Phi.cast<cplx>() * (s.Phi.transpose().cast<cplx>() * u_sym);
  p.resonant = yn == 0.0 && Pu.norm() > 1e-10 * u_sym.norm();
  p.rho = (yn > 0.0 && yn <= r3) ? rho_alpha(alpha, yn) : 0.0;
  Propagator prop(s.Bhat_sym(y));
  p.method = prop.diagonalized() ? "eigen" : "expm";
  for (double t : times) {
    const double nb = sym_norm_beta(g, prop.apply(t, u_sym), beta);
    p.norms.push_back(nb);
    const double q = nb * std::pow(1.0 + t, alpha) / ((1.0 + p.rho) * den_u);
    p.ratios.push_back(q);
    p.sup_ratio = std::max(p.sup_ratio, q);
  }
  const double thi = times.back();
  // fully relaxed components underflow; the tail fit is then left empty
  try {
    p.fit = fit_time_decay(times, p.norms, thi / 10.0, thi, "beta=" + std::to_string(beta));
  } catch (const Error&) {
    p.fit.exponent = NAN;
  }
  return p;
}

Eigen::MatrixXd axial_symmetric_basis(const VelocityGrid& g) {
  const int n = g.size(), d = g.d, m = g.per_axis;
  std::map<std::vector<int>, int> col;
  std::vector<int> which(n);
  for (int i = 0; i < n; ++i) {
    std::vector<int> idx = g.multi_index(i);
    std::vector<int> key{idx[0]};
    std::vector<int> rest;
    for (int k = 1; k < d; ++k) rest.push_back(std::max(idx[k], m - 1 - idx[k]));
    std::sort(rest.begin(), rest.end());
    key.insert(key.end(), rest.begin(), rest.end());
    auto it = col.find(key);
    if (it == col.end()) it = col.emplace(key, int(col.size())).first;
    which[i] = it->second;
  }
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, int(col.size()));
  for (int i = 0; i < n; ++i) Q(i, which[i]) = 1.0;
  for (int c = 0; c < Q.cols(); ++c) Q.col(c).normalize();
  return Q;
}

RadialRule radial_y_rule(int d, double r0, double rmax, int per_panel) {
  if (!(r0 > 0.0 && rmax > r0)) throw Error(ErrorKind::Precondition, "radial_y_rule: need 0 < r0 < rmax");
  RadialRule rr;
  const double area = sphere_area(d);
  double a = 0.0, b = r0;
  while (a < rmax) {
    b = std::min(b, rmax);
    Rule1D q = gauss_legendre(per_panel, a, b);
    for (std::size_t k = 0; k < q.x.size(); ++k) {
      rr.r.push_back(q.x[k]);
      rr.w.push_back(q.w[k] * area * std::pow(q.x[k], d - 1));
    }
    a = b;
    b = 2.0 * b;
  }
  return rr;
}

namespace {

std::vector<double> xspace_norms(const LinearSystem& s, const Eigen::MatrixXd& Q, const Eigen::VectorXcd& u_red,
                                 const std::function<double(double)>& phi, const std::vector<double>& times,
                                 const RadialRule& rule) {
  const Eigen::MatrixXcd Qc = Q.cast<cplx>();
  std::vector<double> sq(times.size(), 0.0);
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(s.d());
  e1(0) = 1.0;
  for (std::size_t q = 0; q < rule.r.size(); ++q) {
    const double amp = phi(rule.r[q]);
    if (amp == 0.0) continue;
    const Eigen::MatrixXcd Br = Qc.transpose() * s.Bhat_sym(rule.r[q] * e1) * Qc;
    Propagator prop(Br);
    for (std::size_t k = 0; k < times.size(); ++k)
      sq[k] += rule.w[q] * amp * amp * prop.apply(times[k], u_red).squaredNorm();
  }
  for (double& v : sq) v = std::sqrt(v);
  return sq;
}

}  // namespace

XspaceResult xspace_decay(const LinearSystem& s, const Eigen::VectorXcd& u0_sym, const std::function<double(double)>& phi,
                          const std::vector<double>& times, double r0, double rmax, int per_panel, double fit_lo,
                          double fit_hi) {
  const Eigen::MatrixXd Q = axial_symmetric_basis(*s.grid);
  const Eigen::VectorXcd u_red = Q.transpose().cast<cplx>() * u0_sym;
  if ((Q.cast<cplx>() * u_red - u0_sym).norm() > 1e-10 * u0_sym.norm())
    throw Error(ErrorKind::Precondition, "xspace_decay: u0 is not invariant under the grid's rotations about e_1");
  XspaceResult x;
  x.times = times;
  const RadialRule coarse = radial_y_rule(s.d(), r0, rmax, per_panel);
  const RadialRule fine = radial_y_rule(s.d(), r0, rmax, 2 * per_panel);
  x.y_nodes = int(coarse.r.size());
  x.norms = xspace_norms(s, Q, u_red, phi, times, coarse);
  const std::vector<double> nf = xspace_norms(s, Q, u_red, phi, times, fine);
  for (std::size_t k = 0; k < times.size(); ++k)
    x.refinement_diff = std::max(x.refinement_diff, std::abs(x.norms[k] - nf[k]) / std::max(nf[k], 1e-300));
  if (x.refinement_diff > 0.05)
    throw Error(ErrorKind::Tolerance, "xspace_decay: y-quadrature refinement differs by " +
                                          std::to_string(x.refinement_diff) + " (> 5%)");
  x.running_exponent.assign(times.size(), NAN);
  for (std::size_t k = 1; k < times.size(); ++k)
    if (times[k - 1] > 0.0 && x.norms[k] > 0.0 && x.norms[k - 1] > 0.0)
      x.running_exponent[k] =
          -(std::log(x.norms[k]) - std::log(x.norms[k - 1])) / (std::log(times[k]) - std::log(times[k - 1]));
  x.fit = fit_time_decay(times, x.norms, fit_lo, fit_hi, "L2");
  return x;
}

DuhamelCheck duhamel_check(const LinearSystem& s, const Eigen::VectorXd& y, const Eigen::VectorXcd& u_sym, double t,
                           int panels, int per_panel) {
  if (!(t > 0.0)) throw Error(ErrorKind::Precondition, "duhamel_check: t must be > 0");
  const Eigen::MatrixXcd B = s.Bhat_sym(y);
  Propagator prop(B);
  const Eigen::VectorXd yx = s.grid->nodes * y;
  Eigen::VectorXcd a(s.n());
  for (int i = 0; i < s.n(); ++i) a(i) = -2.0 * kPi * kI * yx(i) - s.nu(i);
  Eigen::MatrixXd K = s.Ls;
  K.diagonal() += s.nu;
  const Eigen::MatrixXcd Kc = K.cast<cplx>();
  // resolve the fastest phase / decay rate with about two radians per panel
  const double rate = yx.cwiseAbs().maxCoeff() * 2.0 * kPi + s.nu.maxCoeff() + prop.eigenvalues().cwiseAbs().maxCoeff();
  panels = std::max(panels, int(std::ceil(rate * t / 2.0)));
  Eigen::VectorXcd rhs = (a * t).array().exp().matrix().cwiseProduct(u_sym);
  const double h = t / panels;
  for (int q = 0; q < panels; ++q) {
    Rule1D r = gauss_legendre(per_panel, q * h, (q + 1) * h);
    for (std::size_t k = 0; k < r.x.size(); ++k) {
      const double sv = r.x[k];
      const Eigen::VectorXcd inner = Kc * prop.apply(sv, u_sym);
      rhs += r.w[k] * (a * (t - sv)).array().exp().matrix().cwiseProduct(inner);
    }
  }
  const Eigen::VectorXcd lhs = prop.apply(t, u_sym);
  DuhamelCheck c;
  c.rel_error = (lhs - rhs).norm() / lhs.norm();
  c.nodes = panels * per_panel;
  return c;
}

GrowthCap weighted_growth_cap(const LinearSystem& s, const Eigen::VectorXd& y, double beta,
                              const std::vector<double>& times) {
  const Eigen::VectorXd wb = (1.0 + s.grid->speed.array()).pow(beta).matrix();
  Eigen::MatrixXd K = s.Ls;
  K.diagonal() += s.nu;
  const Eigen::MatrixXd Kb = wb.asDiagonal() * K * wb.cwiseInverse().asDiagonal();
  GrowthCap gc;
  gc.K_norm = Eigen::BDCSVD<Eigen::MatrixXd>(Kb).singularValues()(0);
  Propagator prop(s.Bhat_sym(y));
  gc.pass = true;
  for (double t : times) {
    const Eigen::MatrixXcd E = wb.cast<cplx>().asDiagonal() * prop.matrix(t) * wb.cwiseInverse().cast<cplx>().asDiagonal();
    const double nrm = Eigen::BDCSVD<Eigen::MatrixXcd>(E).singularValues()(0);
    gc.times.push_back(t);
    gc.norms.push_back(nrm);
    if (nrm > std::exp(t * gc.K_norm) * (1.0 + 1e-10)) gc.pass = false;
  }
  return gc;
}

GeneratorCheck generator_consistency(const LinearSystem& s, const Eigen::VectorXd& y, const Eigen::VectorXcd& u_sym) {
  const Eigen::MatrixXcd B = s.Bhat_sym(y);
  Propagator prop(B);
  const Eigen::VectorXcd Bu = B * u_sym;
  GeneratorCheck g;
  for (double h = 1e-1; h >= 0.99e-4; h /= std::sqrt(10.0)) {
    g.h.push_back(h);
    g.err.push_back(((prop.apply(h, u_sym) - u_sym) / h - Bu).norm() / Bu.norm());
  }
  const int m = int(g.h.size());
  Eigen::MatrixXd A(m, 2);
  Eigen::VectorXd b(m);
  for (int k = 0; k < m; ++k) {
    A(k, 0) = 1.0;
    A(k, 1) = std::log(g.h[k]);
    b(k) = std::log(g.err[k]);
  }
  g.slope = A.colPivHouseholderQr().solve(b)(1);
  return g;
}

std::vector<double> log_times(double t_min, double t_max, int n, bool with_zero) {
  if (!(t_min > 0.0 && t_max > t_min && n >= 2)) throw Error(ErrorKind::Precondition, "log_times: bad range");
  std::vector<double> t;
  if (with_zero) t.push_back(0.0);
  for (int k = 0; k < n; ++k) t.push_back(t_min * std::pow(t_max / t_min, double(k) / (n - 1)));
  return t;
}

}  // namespace kinspec
