#include "kinspec/spectral.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "kinspec/errors.hpp"
#include "kinspec/linalg.hpp"

namespace kinspec {

namespace {
constexpr double kPi = std::numbers::pi;
const cplx kI(0.0, 1.0);

Eigen::VectorXd unit_e1(int d) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
  e(0) = 1.0;
  return e;
}

// multiplication by omega.xi in the symmetric frame (diagonal)
Eigen::VectorXd direction_multiplier(const LinearSystem& s, const Eigen::VectorXd& omega) {
  return s.grid->nodes * omega;
}
}  // namespace

ShiftedResolvent::ShiftedResolvent(const LinearSystem& s, cplx lambda, const Eigen::VectorXd& y) {
  const int n = s.n();
  X_ = (-s.Ls + s.P()).cast<cplx>();
  const Eigen::VectorXd yx = s.grid->nodes * y;
  for (int i = 0; i < n; ++i) X_(i, i) += lambda + 2.0 * kPi * kI * yx(i);
  lu_.compute(X_);
  rcond_ = lu_.rcond();
  if (!(rcond_ > 1e-14))
    throw Error(ErrorKind::Singular, "shifted resolvent: near-singular system, rcond estimate " + std::to_string(rcond_));
}

Eigen::MatrixXcd ShiftedResolvent::solve(const Eigen::MatrixXcd& rhs) const {
  Eigen::MatrixXcd x = lu_.solve(rhs);
  for (int pass = 0; pass < 2; ++pass) {
    Eigen::MatrixXcd res = rhs - X_ * x;
    double worst = 0.0;
    for (int c = 0; c < rhs.cols(); ++c) {
      const double nb = rhs.col(c).norm();
      if (nb > 0.0) worst = std::max(worst, res.col(c).norm() / nb);
    }
    max_residual_ = worst;
    if (worst <= 1e-12) break;
    x += lu_.solve(res);  // one step of refinement
  }
  if (max_residual_ > 1e-10)
    throw Error(ErrorKind::Tolerance, "shifted resolvent: solve residual " + std::to_string(max_residual_));
  return x;
}

Eigen::MatrixXd frame_to_e1(const Eigen::VectorXd& omega) {
  const int d = int(omega.size());
  const double nrm = omega.norm();
  if (!(nrm > 0.0)) throw Error(ErrorKind::Precondition, "frame_to_e1: omega must be nonzero");
  Eigen::VectorXd w = omega / nrm;
  Eigen::VectorXd v = w - unit_e1(d);
  if (v.norm() < 1e-14) return Eigen::MatrixXd::Identity(d, d);
  return Eigen::MatrixXd::Identity(d, d) - 2.0 * v * v.transpose() / v.squaredNorm();
}

Eigen::MatrixXd rotated_kernel_basis(const LinearSystem& s, const Eigen::VectorXd& omega) {
  const int d = s.d();
  const Eigen::MatrixXd R = frame_to_e1(omega);
  Eigen::MatrixXd B = s.Phi;
  // psi_j(R xi) = sum_m R_jm psi_m(xi) for the momentum columns
  for (int j = 0; j < d; ++j) {
    B.col(j + 1).setZero();
    for (int m = 0; m < d; ++m) B.col(j + 1) += R(j, m) * s.Phi.col(m + 1);
  }
  return B;
}

DispersionMatrix dispersion_matrix(const LinearSystem& s, double sigma, double tau, double r) {
  return dispersion_matrix(s, sigma, tau, r, unit_e1(s.d()));
}

DispersionMatrix dispersion_matrix(const LinearSystem& s, double sigma, double tau, double r,
                                   const Eigen::VectorXd& omega) {
  DispersionMatrix D;
  D.sigma = sigma;
  D.tau = tau;
  D.r = r;
  D.omega = omega / omega.norm();
  D.negative_sigma = sigma < 0.0;
  const Eigen::MatrixXd B = rotated_kernel_basis(s, D.omega);
  ShiftedResolvent X(s, cplx(sigma, tau), r * D.omega);
  const Eigen::VectorXd w = direction_multiplier(s, D.omega);
  const Eigen::MatrixXcd rhs = (w.asDiagonal() * B).cast<cplx>();
  const Eigen::MatrixXcd sol = X.solve(rhs);
  D.entries = sol.transpose() * B.cast<cplx>();
  D.max_residual = X.max_residual();
  D.rcond = X.rcond();
  return D;
}

Eigen::MatrixXcd dispersion_power_moment(const LinearSystem& s, double sigma, double tau, double r, int n) {
  if (n < 0) throw Error(ErrorKind::Precondition, "dispersion_power_moment: n must be >= 0");
  ShiftedResolvent X(s, cplx(sigma, tau), r * unit_e1(s.d()));
  const Eigen::VectorXd w = direction_multiplier(s, unit_e1(s.d()));
  Eigen::MatrixXcd v = (w.asDiagonal() * s.Phi).cast<cplx>();
  for (int k = 0; k <= n; ++k) v = X.solve(v);
  return v.transpose() * s.Phi.cast<cplx>();
}

double inverse_form(const LinearSystem& s, int j) {
  if (j < 0 || j >= s.nk()) throw Error(ErrorKind::Precondition, "inverse_form: branch index out of range");
  const Eigen::VectorXd f = s.xi(0).cwiseProduct(s.Phi.col(j));
  const Eigen::VectorXd g = f - s.Phi * (s.Phi.transpose() * f);
  Eigen::LLT<Eigen::MatrixXd> llt(-s.Ls + s.P());
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::Singular, "inverse_form: -L+P is not positive definite");
  return g.dot(llt.solve(g));
}

AlphaConstants alpha_constants(const LinearSystem& s) {
  const int d = s.d();
  AlphaConstants a;
  const Eigen::VectorXd x1 = s.xi(0);
  const Eigen::VectorXd psi0 = s.Phi.col(0), psi1 = s.Phi.col(1), psie = s.Phi.col(d + 1);
  const Eigen::VectorXd x1sq = x1.cwiseProduct(x1);
  a.alpha1 = (x1sq.cwiseProduct(psi0)).dot(psi0);
  a.alpha2 = (x1sq.cwiseProduct(psi0)).dot(psie);
  Eigen::LLT<Eigen::MatrixXd> llt(-s.Ls + s.P());
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::Singular, "alpha_constants: -L+P is not positive definite");
  auto parts = [&](const Eigen::VectorXd& f, double& full, double& pp, double& rem) {
    full = f.dot(llt.solve(f));
    const Eigen::VectorXd c = s.Phi.transpose() * f;
    pp = c.squaredNorm();
    const Eigen::VectorXd g = f - s.Phi * c;
    rem = g.dot(llt.solve(g));
  };
  parts(x1.cwiseProduct(psi1), a.alpha3, a.p_part3, a.remainder3);
  parts(x1.cwiseProduct(psie), a.alpha4, a.p_part4, a.remainder4);
  a.decomposition_error = std::max(std::abs(a.alpha3 - a.p_part3 - a.remainder3),
                                   std::abs(a.alpha4 - a.p_part4 - a.remainder4));
  return a;
}

namespace {

// normalize z^T z = 1 and fix the phase so the largest component is real positive
Eigen::VectorXcd bilinear_normalize(Eigen::VectorXcd z) {
  const cplx zz = (z.transpose() * z)(0, 0);
  if (std::abs(zz) < 1e-10 * z.squaredNorm())
    throw Error(ErrorKind::Singular, "eigen_eta: quasi-null eigenvector (z^T z ~ 0)");
  z /= std::sqrt(zz);
  Eigen::Index k;
  z.cwiseAbs().maxCoeff(&k);
  if (z(k).real() < 0.0) z = -z;
  return z;
}

double overlap(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  return std::abs(a.dot(b)) / (a.norm() * b.norm());
}

}  // namespace

EtaResult eigen_eta(const DispersionMatrix& D, const EtaResult* reference) {
  const Eigen::MatrixXcd& M = D.entries;
  const int nk = int(M.rows()), d = nk - 2;
  if (!M.allFinite()) throw Error(ErrorKind::Precondition, "eigen_eta: non-finite matrix");
  EtaResult out;
  out.values.resize(nk);
  out.vectors = Eigen::MatrixXcd::Zero(nk, nk);
  const double scale = std::max(1.0, M.norm());
  out.symmetry_defect = (M - M.transpose()).norm() / scale;
  for (int j = 2; j <= d; ++j) {
    out.values(j) = M(j, j);
    out.vectors(j, j) = 1.0;
  }
  const std::array<int, 3> idx{0, 1, d + 1};
  Eigen::Matrix3cd blk;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) blk(a, b) = M(idx[a], idx[b]);
  Eigen::ComplexEigenSolver<Eigen::Matrix3cd> es(blk);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::Divergence, "eigen_eta: 3x3 eigensolver failed");
  Eigen::Vector3cd ev = es.eigenvalues();
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      if (std::abs(ev(a) - ev(b)) < 1e-10 * scale)
        throw Error(ErrorKind::Precondition, "eigen_eta: eigenvalue collision in the 3x3 block (multiplicity)");
  std::array<Eigen::VectorXcd, 3> vec;
  for (int a = 0; a < 3; ++a) {
    Eigen::VectorXcd z = Eigen::VectorXcd::Zero(nk);
    for (int b = 0; b < 3; ++b) z(idx[b]) = es.eigenvectors()(b, a);
    vec[a] = bilinear_normalize(z);
  }
  std::array<int, 3> perm{0, 1, 2};
  if (!reference) {
    std::sort(perm.begin(), perm.end(), [&](int a, int b) { return ev(a).real() > ev(b).real(); });
  } else {
    double best = -1.0;
    std::array<int, 3> p{0, 1, 2};
    do {
      double tot = 0.0;
      for (int q = 0; q < 3; ++q) tot += overlap(vec[p[q]], reference->vectors.col(idx[q]));
      if (tot > best) {
        best = tot;
        perm = p;
      }
    } while (std::next_permutation(p.begin(), p.end()));
    for (int q = 0; q < 3; ++q)
      out.min_overlap = std::min(out.min_overlap, overlap(vec[perm[q]], reference->vectors.col(idx[q])));
    for (int j = 2; j <= d; ++j)
      out.min_overlap = std::min(out.min_overlap, overlap(out.vectors.col(j), reference->vectors.col(j)));
  }
  for (int q = 0; q < 3; ++q) {
    out.values(idx[q]) = ev(perm[q]);
    out.vectors.col(idx[q]) = vec[perm[q]];
  }
  return out;
}

namespace {

struct BranchEval {
  cplx G, dG, eta;
  EtaResult etas;
};

// G(lambda) = lambda + 2 pi i r eta_j(lambda) and its complex derivative
BranchEval eval_branch(const LinearSystem& s, cplx lambda, double r, int j, const EtaResult& ref) {
  const Eigen::VectorXd e1 = unit_e1(s.d());
  ShiftedResolvent X(s, lambda, r * e1);
  const Eigen::MatrixXcd rhs = (s.xi(0).asDiagonal() * s.Phi).cast<cplx>();
  const Eigen::MatrixXcd sol1 = X.solve(rhs);
  const Eigen::MatrixXcd sol2 = X.solve(sol1);
  DispersionMatrix D;
  D.sigma = lambda.real();
  D.tau = lambda.imag();
  D.r = r;
  D.omega = e1;
  D.entries = sol1.transpose() * s.Phi.cast<cplx>();
  const Eigen::MatrixXcd dD = -(sol2.transpose() * s.Phi.cast<cplx>());
  BranchEval b;
  b.etas = eigen_eta(D, &ref);
  b.eta = b.etas.values(j);
  const Eigen::VectorXcd z = b.etas.vectors.col(j);
  const cplx deta = (z.transpose() * dD * z)(0, 0);
  b.G = lambda + 2.0 * kPi * kI * r * b.eta;
  b.dG = 1.0 + 2.0 * kPi * kI * r * deta;
  return b;
}

cplx nearest(const Eigen::VectorXcd& ev, cplx z) {
  Eigen::Index k;
  (ev.array() - z).abs().minCoeff(&k);
  return ev(k);
}

EigenBranch trace_impl(const LinearSystem& s, int j, const std::vector<double>& r_grid, const BranchOptions& opt,
                       const std::vector<Eigen::VectorXcd>* oracle_spectra) {
  const int nk = s.nk();
  if (j < 0 || j >= nk) throw Error(ErrorKind::Precondition, "trace_branch: branch index out of range");
  for (std::size_t k = 0; k < r_grid.size(); ++k) {
    if (!(r_grid[k] > 0.0)) throw Error(ErrorKind::Precondition, "trace_branch: r samples must be positive");
    if (k > 0 && !(r_grid[k] > r_grid[k - 1])) throw Error(ErrorKind::Precondition, "trace_branch: r grid must ascend");
  }
  EigenBranch br;
  br.j = j;
  EtaResult ref = eigen_eta(dispersion_matrix(s, 0.0, 0.0, 0.0));
  const cplx eta0 = ref.values(j);
  cplx lam_prev = 0.0;
  double r_prev = 0.0;
  for (std::size_t k = 0; k < r_grid.size(); ++k) {
    const double r = r_grid[k];
    cplx lam;
    if (k == 0)
      lam = -2.0 * kPi * kI * r * eta0;
    else {
      const double q = r / r_prev;
      lam = cplx(lam_prev.real() * q * q, lam_prev.imag() * q);
    }
    bool ok = false;
    int it = 0;
    BranchEval cur;
    try {
      cur = eval_branch(s, lam, r, j, ref);
      for (it = 0; it < opt.max_newton; ++it) {
        if (std::abs(cur.G) <= opt.tol) {
          ok = true;
          break;
        }
        cplx step = -cur.G / cur.dG;
        double damp = 1.0;
        BranchEval nxt;
        for (int h = 0; h < 12; ++h) {
          nxt = eval_branch(s, lam + damp * step, r, j, ref);
          if (std::abs(nxt.G) < std::abs(cur.G)) break;
          damp *= 0.5;
        }
        lam += damp * step;
        cur = nxt;
      }
      if (!ok && std::abs(cur.G) <= opt.tol) ok = true;
    } catch (const Error& e) {
      br.note = std::string("newton failure at r=") + std::to_string(r) + ": " + e.what();
      ok = false;
    }
    if (!ok) {
      br.truncated = true;
      if (br.note.empty()) br.note = "newton did not converge at r=" + std::to_string(r);
      break;
    }
    if (cur.etas.min_overlap < opt.min_overlap)
      throw Error(ErrorKind::Divergence, "trace_branch: branch crossing at r=" + std::to_string(r) +
                                              " (eigenvector overlap " + std::to_string(cur.etas.min_overlap) + ")");
    br.r_samples.push_back(r);
    br.lambda_samples.push_back(lam);
    br.newton_iterations.push_back(it);
    const cplx mu = (1.0 - 2.0 * kPi * kI * r * cur.eta) / (lam + 1.0);
    br.mu_defect.push_back(std::abs(mu - 1.0));
    if (oracle_spectra)
      br.oracle.push_back(nearest((*oracle_spectra)[k], lam));
    else if (opt.with_oracle)
      br.oracle.push_back(nearest(eig_complex(s.Bhat_sym(r * unit_e1(s.d())), false).values, lam));
    br.last_good_r = r;
    ref = cur.etas;
    lam_prev = lam;
    r_prev = r;
  }
  if (br.r_samples.size() >= 6 && br.r_samples.back() >= 10.0 * br.r_samples.front()) {
    AsymptoticFit f = fit_asymptotics(br);
    br.tau1_fit = f.tau1;
    br.sigma2_fit = f.sigma2;
    br.fit_residual = f.residual;
  }
  return br;
}

}  // namespace

EigenBranch trace_branch(const LinearSystem& s, int j, const std::vector<double>& r_grid, const BranchOptions& opt) {
  return trace_impl(s, j, r_grid, opt, nullptr);
}

std::vector<EigenBranch> trace_all_branches(const LinearSystem& s, const std::vector<double>& r_grid,
                                            const BranchOptions& opt) {
  std::vector<Eigen::VectorXcd> spectra;
  if (opt.with_oracle)
    for (double r : r_grid) spectra.push_back(eig_complex(s.Bhat_sym(r * unit_e1(s.d())), false).values);
  std::vector<EigenBranch> out(s.nk());
#pragma omp parallel for schedule(dynamic, 1)
  for (int j = 0; j < s.nk(); ++j) out[j] = trace_impl(s, j, r_grid, opt, opt.with_oracle ? &spectra : nullptr);
  return out;
}

AsymptoticFit fit_asymptotics(const EigenBranch& b) {
  const int m = int(b.r_samples.size());
  if (m < 6) throw Error(ErrorKind::Precondition, "fit_asymptotics: need at least 6 samples");
  if (b.r_samples.back() < 10.0 * b.r_samples.front())
    throw Error(ErrorKind::Precondition, "fit_asymptotics: samples must span a decade of r");
  // rows scaled by the leading power of r (relative least squares)
  Eigen::MatrixXd Ai(m, 2), Ar(m, 2);
  Eigen::VectorXd yi(m), yr(m);
  for (int k = 0; k < m; ++k) {
    const double r = b.r_samples[k];
    Ai(k, 0) = 1.0;
    Ai(k, 1) = r * r;
    Ar(k, 0) = 1.0;
    Ar(k, 1) = r;
    yi(k) = b.lambda_samples[k].imag() / r;
    yr(k) = b.lambda_samples[k].real() / (r * r);
  }
  auto solve = [](const Eigen::MatrixXd& A, const Eigen::VectorXd& y, double& cond) {
    Eigen::VectorXd sc = A.colwise().norm().transpose();
    Eigen::MatrixXd As = A * sc.cwiseInverse().asDiagonal();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(As, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd sv = svd.singularValues();
    cond = sv(0) / sv(sv.size() - 1);
    if (!(cond < 1e8)) throw Error(ErrorKind::Tolerance, "fit_asymptotics: ill-conditioned fit, cond " + std::to_string(cond));
    return Eigen::VectorXd(svd.solve(y).cwiseQuotient(sc));
  };
  AsymptoticFit f;
  double c1, c2;
  const Eigen::VectorXd ci = solve(Ai, yi, c1), cr = solve(Ar, yr, c2);
  f.tau1 = ci(0);
  f.tau3 = ci(1);
  f.sigma2 = cr(0);
  f.sigma3 = cr(1);
  f.condition = std::max(c1, c2);
  double res = 0.0;
  for (int k = 0; k < m; ++k) {
    const double r = b.r_samples[k];
    const cplx model(f.sigma2 * r * r + f.sigma3 * r * r * r, f.tau1 * r + f.tau3 * r * r * r);
    res = std::max(res, std::abs(model - b.lambda_samples[k]) / std::abs(b.lambda_samples[k]));
  }
  f.residual = res;
  return f;
}

std::vector<double> sigma2_closed_forms(const LinearSystem& s) {
  const int d = s.d();
  const double q1 = inverse_form(s, 1), qe = inverse_form(s, d + 1);
  std::vector<double> out(d + 2);
  // (L^{-1} f, f) = -((-L)^{-1} f, f) on the orthogonal complement of the kernel
  out[0] = out[d + 1] = -4.0 * kPi * kPi * q1 - 8.0 * kPi * kPi / (d + 2) * qe;
  out[1] = -8.0 * kPi * kPi / (1.0 + 2.0 / d) * qe;
  for (int j = 2; j <= d; ++j) out[j] = -8.0 * kPi * kPi * inverse_form(s, j);
  return out;
}

Eigen::VectorXcd apply_projection(const Eigen::VectorXcd& phi, const Eigen::VectorXcd& f) {
  return (phi.transpose() * f)(0, 0) * phi;
}

EigenProjections eigenprojections(const LinearSystem& s, double sigma, double tau, double r,
                                  const Eigen::VectorXd& omega) {
  DispersionMatrix D = dispersion_matrix(s, sigma, tau, r, omega);
  EtaResult e = eigen_eta(D);
  const Eigen::MatrixXcd B = rotated_kernel_basis(s, D.omega).cast<cplx>();
  EigenProjections p;
  p.eta = e.values;
  const cplx lam(sigma, tau);
  p.mu = ((1.0 - 2.0 * kPi * kI * r * e.values.array()) / (lam + 1.0)).matrix();
  Eigen::MatrixXcd sum = Eigen::MatrixXcd::Zero(s.n(), s.n());
  for (int j = 0; j < s.nk(); ++j) {
    p.phi.push_back(B * e.vectors.col(j));
    sum += p.phi.back() * p.phi.back().transpose();
  }
  p.partition_error = (sum - s.P().cast<cplx>()).norm();
  return p;
}

ResolventCheck resolvent_reconstruction(const LinearSystem& s, cplx lambda, const Eigen::VectorXd& y,
                                        const Eigen::VectorXcd& u) {
  const double r = y.norm();
  if (!(r > 0.0)) throw Error(ErrorKind::Precondition, "resolvent_reconstruction: y must be nonzero");
  ShiftedResolvent X(s, lambda, y);
  const Eigen::VectorXcd a = X.solve(u);
  const Eigen::MatrixXcd Phi = s.Phi.cast<cplx>();
  const Eigen::MatrixXcd XPhi = X.solve(Phi);
  // direct
  Eigen::MatrixXcd A = -s.Bhat_sym(y);
  A.diagonal().array() += lambda;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(A);
  const Eigen::VectorXcd direct = lu.solve(u);
  const double nd = direct.norm();
  ResolventCheck c;
  {
    const Eigen::MatrixXcd M = Eigen::MatrixXcd::Identity(s.nk(), s.nk()) - Phi.transpose() * XPhi;
    const Eigen::VectorXcd v = a + XPhi * M.partialPivLu().solve(Phi.transpose() * a);
    c.err_decomposition = (v - direct).norm() / nd;
  }
  {
    EigenProjections ep = eigenprojections(s, lambda.real(), lambda.imag(), r, y / r);
    Eigen::VectorXcd v = a;
    for (int j = 0; j < s.nk(); ++j) {
      const Eigen::VectorXcd pj = apply_projection(ep.phi[j], a);
      v += X.solve(pj) / (1.0 - ep.mu(j));
    }
    c.err_eigen = (v - direct).norm() / nd;
  }
  return c;
}

double projected_resolvent_identity(const LinearSystem& s, cplx lambda, const Eigen::VectorXcd& f) {
  ShiftedResolvent X(s, lambda, Eigen::VectorXd::Zero(s.d()));
  const Eigen::MatrixXcd Phi = s.Phi.cast<cplx>();
  const Eigen::VectorXcd Px = Phi * (Phi.transpose() * X.solve(f));
  const Eigen::VectorXcd Pf = Phi * (Phi.transpose() * f);
  const double nf = Pf.norm();
  if (!(nf > 0.0)) throw Error(ErrorKind::Precondition, "projected_resolvent_identity: f has no kernel component");
  return (Px - Pf / (lambda + 1.0)).norm() / nf;
}

double rotational_covariance(const LinearSystem& s, double sigma, double tau, double r, const Eigen::VectorXd& omega) {
  const DispersionMatrix a = dispersion_matrix(s, sigma, tau, r, omega);
  const DispersionMatrix b = dispersion_matrix(s, sigma, tau, r);
  return (a.entries - b.entries).cwiseAbs().maxCoeff();
}

}  // namespace kinspec
