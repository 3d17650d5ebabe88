#include "kinspec/operators.hpp"

#include <cmath>
#include <algorithm>
#include <map>
#include <numbers>

#include <boost/math/special_functions/gamma.hpp>

#include "kinspec/errors.hpp"
#include "kinspec/linalg.hpp"
#include "kinspec/quadrature.hpp"

namespace kinspec {

namespace {
constexpr double kPi = std::numbers::pi;

long long key(double v) { return std::llround(v * 1e10); }
}  // namespace

Eigen::MatrixXcd DiscreteOperator::symmetric_frame() const {
  const Eigen::VectorXcd s = grid->sqrt_w.cast<cplx>();
  const Eigen::VectorXcd si = grid->sqrt_w.cwiseInverse().cast<cplx>();
  return s.asDiagonal() * entries * si.asDiagonal();
}

double DiscreteOperator::self_adjoint_defect() const {
  Eigen::MatrixXcd S = symmetric_frame();
  const double nrm = S.norm();
  return nrm > 0.0 ? (S - S.adjoint()).norm() / nrm : 0.0;
}

Eigen::VectorXd assemble_nu(const VelocityGrid& g, const KernelParams& p) {
  std::map<long long, double> memo;
  Eigen::VectorXd nu(g.size());
  for (int i = 0; i < g.size(); ++i) {
    const long long k = key(g.speed(i));
    auto it = memo.find(k);
    if (it == memo.end()) it = memo.emplace(k, nu_of_xi(p, g.node(i))).first;
    nu(i) = it->second;
  }
  return nu;
}

double patch_radius(const VelocityGrid& g, int i, DiagonalRule rule) {
  const int d = g.d;
  if (rule == DiagonalRule::EqualVolume) {
    const double unit_ball = std::pow(kPi, 0.5 * d) / boost::math::tgamma(0.5 * d + 1.0);
    return std::pow(g.w(i) / unit_ball, 1.0 / d);
  }
  std::vector<int> idx = g.multi_index(i);
  double prod = 1.0;
  for (int k = 0; k < d; ++k) {
    const int j = idx[k], m = g.per_axis;
    double h;
    if (j == 0)
      h = g.axis[1] - g.axis[0];
    else if (j == m - 1)
      h = g.axis[m - 1] - g.axis[m - 2];
    else
      h = 0.5 * (g.axis[j + 1] - g.axis[j - 1]);
    prod *= h;
  }
  return 0.5 * std::pow(prod, 1.0 / d);
}

KernelRule parse_kernel_rule(const std::string& s) {
  if (s == "hermite_product" || s == "product") return KernelRule::HermiteProduct;
  if (s == "nystrom") return KernelRule::Nystrom;
  throw Error(ErrorKind::Config, "unknown kernel rule '" + s + "' (expected hermite_product or nystrom)");
}

std::string kernel_rule_name(KernelRule r) { return r == KernelRule::HermiteProduct ? "hermite_product" : "nystrom"; }

void hermite_functions(double x, int m, double* out) {
  out[0] = std::pow(2.0 * kPi, -0.25) * std::exp(-0.25 * x * x);
  if (m > 1) out[1] = x * out[0];
  for (int a = 1; a + 1 < m; ++a) out[a + 1] = (x * out[a] - std::sqrt(double(a)) * out[a - 1]) / std::sqrt(a + 1.0);
}

namespace {

// k(xi, xi + s sigma) with |xi| = x and cos(sigma, xi) = c
double k_polar(const KernelParams& p, double x, double s, double c, double tol) {
  const double bb = 0.5 * s + x * c;
  const double half2 = x * x + x * s * c + 0.25 * s * s;
  const double A = std::sqrt(std::max(0.0, half2 - bb * bb));
  const double xs2 = std::max(0.0, x * x + s * s + 2.0 * s * x * c);
  const double k2 = -std::pow(2.0 * kPi, -0.5 * p.d) * std::exp(-0.25 * (x * x + xs2)) *
                    (p.gamma > 0.0 ? std::pow(s, -p.gamma) : 1.0) * p.angular_integral();
  return k1_reduced(p, s, A, std::abs(bb), tol) + k2;
}

// radial nodes on [0, S]: s = t^2 on [0, 1], then panels of width <= 2
void radial_rule(double S, int per_panel, std::vector<double>& s, std::vector<double>& w) {
  s.clear();
  w.clear();
  Rule1D inner = gauss_legendre(per_panel + 4, 0.0, 1.0);
  for (std::size_t k = 0; k < inner.x.size(); ++k) {
    s.push_back(inner.x[k] * inner.x[k]);
    w.push_back(2.0 * inner.x[k] * inner.w[k]);
  }
  const int panels = std::max(1, int(std::ceil((S - 1.0) / 2.0)));
  const double h = (S - 1.0) / panels;
  for (int q = 0; q < panels; ++q) {
    Rule1D r = gauss_legendre(per_panel, 1.0 + q * h, 1.0 + (q + 1) * h);
    s.insert(s.end(), r.x.begin(), r.x.end());
    w.insert(w.end(), r.w.begin(), r.w.end());
  }
}

}  // namespace

Eigen::VectorXd kernel_hermite_moments(const KernelParams& p, const Eigen::VectorXd& xi, int m,
                                       const AssemblyOptions& opt) {
  const int d = p.d;
  if (d != 2 && d != 3) throw Error(ErrorKind::Precondition, "kernel_hermite_moments: d must be 2 or 3");
  if (xi.size() != d) throw Error(ErrorKind::Precondition, "kernel_hermite_moments: dimension mismatch");
  const double x = xi.norm();
  Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
  if (x > 0.0)
    e = xi / x;
  else
    e(d - 1) = 1.0;
  // orthonormal frame (e, f1[, f2])
  Eigen::VectorXd f1(d), f2 = Eigen::VectorXd::Zero(d);
  if (d == 2) {
    f1 << -e(1), e(0);
  } else {
    Eigen::Vector3d e3 = e, t = std::abs(e(0)) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
    Eigen::Vector3d u = (t - t.dot(e3) * e3).normalized();
    f1 = u;
    f2 = e3.cross(u);
  }
  std::vector<double> rs, rw;
  radial_rule(x + 10.0, opt.moment_panel_points, rs, rw);
  // angular nodes: (c, in-plane direction, weight) with the k dependence only through c
  struct Ang {
    double c;
    std::vector<Eigen::VectorXd> dirs;
    std::vector<double> w;
  };
  std::vector<Ang> ang;
  if (d == 3) {
    Rule1D gc = gauss_legendre(opt.moment_polar, -1.0, 1.0);
    const int nphi = opt.moment_azimuth;
    for (std::size_t q = 0; q < gc.x.size(); ++q) {
      Ang a;
      a.c = gc.x[q];
      const double sn = std::sqrt(std::max(0.0, 1.0 - a.c * a.c));
      for (int k = 0; k < nphi; ++k) {
        const double ph = 2.0 * kPi * (k + 0.5) / nphi;
        a.dirs.push_back(a.c * e + sn * (std::cos(ph) * f1 + std::sin(ph) * f2));
        a.w.push_back(gc.w[q] * 2.0 * kPi / nphi);
      }
      ang.push_back(std::move(a));
    }
  } else {
    // theta and -theta share c; trapezoid on the circle
    const int nth = 2 * opt.moment_polar;
    for (int k = 0; k < nth; ++k) {
      const double th = 2.0 * kPi * (k + 0.5) / nth;
      Ang a;
      a.c = std::cos(th);
      a.dirs.push_back(std::cos(th) * e + std::sin(th) * f1);
      a.w.push_back(2.0 * kPi / nth);
      ang.push_back(std::move(a));
    }
  }
  long nb = 1;
  for (int k = 0; k < d; ++k) nb *= m;
  Eigen::VectorXd mom = Eigen::VectorXd::Zero(nb);
  std::vector<double> h(std::size_t(d) * m);
  const double tol = std::max(opt.rel_tol, 1e-9);
  for (std::size_t ir = 0; ir < rs.size(); ++ir) {
    const double s = rs[ir];
    if (s <= 0.0) continue;
    const double jac = rw[ir] * std::pow(s, d - 1);
    for (const Ang& a : ang) {
      const double kv = k_polar(p, x, s, a.c, tol) * jac;
      for (std::size_t q = 0; q < a.dirs.size(); ++q) {
        const Eigen::VectorXd eta = xi + s * a.dirs[q];
        for (int k = 0; k < d; ++k) hermite_functions(eta(k), m, &h[std::size_t(k) * m]);
        const double wk = kv * a.w[q];
        if (d == 3) {
          const double* h0 = &h[0];
          const double* h1 = &h[m];
          const double* h2 = &h[2 * m];
          for (int i0 = 0; i0 < m; ++i0)
            for (int i1 = 0; i1 < m; ++i1) {
              const double c01 = wk * h0[i0] * h1[i1];
              double* row = mom.data() + (i0 * m + i1) * m;
              for (int i2 = 0; i2 < m; ++i2) row[i2] += c01 * h2[i2];
            }
        } else {
          for (int i0 = 0; i0 < m; ++i0)
            for (int i1 = 0; i1 < m; ++i1) mom(i0 * m + i1) += wk * h[i0] * h[m + i1];
        }
      }
    }
  }
  return mom;
}

namespace {

DiscreteOperator assemble_K_product(const GridPtr& gp, const KernelParams& p, const AssemblyOptions& opt) {
  const VelocityGrid& g = *gp;
  if (g.scheme != GridScheme::GaussHermite)
    throw Error(ErrorKind::Precondition, "assemble_K: hermite_product needs a gauss_hermite grid");
  const int n = g.size(), d = g.d, m = g.per_axis;
  // orbit representatives under coordinate sign flips and permutations:
  // node i = g r with (g eta)_k = s_k eta_{q(k)}
  std::map<std::vector<int>, int> rep_of;
  std::vector<int> reps, node_rep(n);
  std::vector<std::vector<int>> node_sign(n), node_pos(n);
  for (int i = 0; i < n; ++i) {
    std::vector<int> idx = g.multi_index(i);
    std::vector<std::pair<int, int>> pos(d);  // (nonnegative index, coordinate)
    std::vector<int> sg(d);
    for (int k = 0; k < d; ++k) {
      const int a = idx[k], ap = std::max(a, m - 1 - a);
      sg[k] = g.axis[a] < 0.0 ? -1 : 1;
      pos[k] = {ap, k};
    }
    std::stable_sort(pos.begin(), pos.end(), [](auto& l, auto& r) { return l.first > r.first; });
    std::vector<int> canon(d), q(d);
    for (int j = 0; j < d; ++j) {
      canon[j] = pos[j].first;
      q[pos[j].second] = j;
    }
    auto it = rep_of.find(canon);
    if (it == rep_of.end()) {
      it = rep_of.emplace(canon, int(reps.size())).first;
      reps.push_back(g.flat_index(canon));
    }
    node_rep[i] = it->second;
    node_sign[i] = sg;
    node_pos[i] = q;
  }
  long nb = 1;
  for (int k = 0; k < d; ++k) nb *= m;
  std::vector<Eigen::VectorXd> rep_mom(reps.size());
  std::vector<std::string> failures(reps.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int r = 0; r < int(reps.size()); ++r) {
    try {
      rep_mom[r] = kernel_hermite_moments(p, g.node(reps[r]), m, opt);
    } catch (const Error& e) {
      failures[r] = e.what();
    }
  }
  for (const std::string& f : failures)
    if (!f.empty()) throw Error(ErrorKind::Quadrature, "assemble_K: " + f);
  // mu_i(b) = prod_k s_k^{b_k} mu_r(b') with b'_{q(k)} = b_k
  Eigen::MatrixXd mu(n, nb);
  std::vector<int> b(d), bp(d);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd& mr = rep_mom[node_rep[i]];
    for (long f = 0; f < nb; ++f) {
      long t = f;
      for (int k = d - 1; k >= 0; --k) {
        b[k] = int(t % m);
        t /= m;
      }
      int sign = 1;
      for (int k = 0; k < d; ++k) {
        bp[node_pos[i][k]] = b[k];
        if (node_sign[i][k] < 0 && (b[k] & 1)) sign = -sign;
      }
      long fp = 0;
      for (int k = 0; k < d; ++k) fp = fp * m + bp[k];
      mu(i, f) = sign * mr(fp);
    }
  }
  // chi_b at the nodes; K_ij = w_j sum_b mu_i(b) chi_b(xi_j)
  Eigen::MatrixXd H(m, m);  // H(a, node index)
  std::vector<double> hv(m);
  for (int a = 0; a < m; ++a) {
    hermite_functions(g.axis[a], m, hv.data());
    for (int b2 = 0; b2 < m; ++b2) H(b2, a) = hv[b2];
  }
  Eigen::MatrixXd X(n, nb);
  for (int j = 0; j < n; ++j) {
    std::vector<int> idx = g.multi_index(j);
    for (long f = 0; f < nb; ++f) {
      long t = f;
      double v = 1.0;
      for (int k = d - 1; k >= 0; --k) {
        v *= H(int(t % m), idx[k]);
        t /= m;
      }
      X(j, f) = v;
    }
  }
  const Eigen::VectorXd& sw = g.sqrt_w;
  // symmetric frame of the collocation matrix
  Eigen::MatrixXd A = sw.asDiagonal() * (mu * X.transpose()) * sw.asDiagonal();
  const double asym = (A - A.transpose()).norm() / A.norm();
  if (opt.symmetrize) {
    // K = Q sym(A) Q + PN + NP - PNP keeps K Phi = N Phi and is symmetric
    const Eigen::VectorXd nu = assemble_nu(g, p);
    const Eigen::MatrixXd Phi = sw.asDiagonal() * build_projection(gp).columns;
    const Eigen::MatrixXd NPhi = nu.asDiagonal() * Phi;
    Eigen::MatrixXd S = 0.5 * (A + A.transpose());
    const Eigen::MatrixXd SPhi = S * Phi;
    // Q S Q = S - Phi (Phi^T S) - (S Phi) Phi^T + Phi (Phi^T S Phi) Phi^T
    const Eigen::MatrixXd C = Phi.transpose() * SPhi;
    const Eigen::MatrixXd E = Phi.transpose() * NPhi;
    S -= Phi * SPhi.transpose() + SPhi * Phi.transpose();
    S += Phi * C * Phi.transpose();
    S += Phi * NPhi.transpose() + NPhi * Phi.transpose() - Phi * E * Phi.transpose();
    A = 0.5 * (S + S.transpose());
  }
  DiscreteOperator K;
  K.grid = gp;
  K.label = "K";
  K.entries = (sw.cwiseInverse().asDiagonal() * A * sw.asDiagonal()).cast<cplx>();
  K.meta = {{"d", double(d)},
            {"gamma", p.gamma},
            {"q0", p.q0},
            {"orbits", double(reps.size())},
            {"collocation_asymmetry", asym}};
  return K;
}

}  // namespace

DiscreteOperator assemble_K(const GridPtr& gp, const KernelParams& p, const AssemblyOptions& opt) {
  p.validate();
  if (opt.rule == KernelRule::HermiteProduct) return assemble_K_product(gp, p, opt);
  const VelocityGrid& g = *gp;
  const int n = g.size();
  Eigen::MatrixXd ks = Eigen::MatrixXd::Zero(n, n);  // k(xi_i, xi_j) off the diagonal
  const double Sb = p.angular_integral();
  const double c2 = -std::pow(2.0 * kPi, -0.5 * p.d) * Sb;
#pragma omp parallel for schedule(dynamic, 4)
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = g.node(i);
    for (int j = i + 1; j < n; ++j) {
      const Eigen::VectorXd xs = g.node(j);
      CollisionGeometry geo = collision_geometry(xi, xs);
      double v;
      try {
        v = k1_reduced(p, geo.dist, geo.a.norm(), geo.b_vec.norm(), opt.rel_tol);
      } catch (const Error& e) {
        throw Error(e.kind(), std::string(e.what()) + " at (i,j)=(" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
      v += c2 * std::exp(-0.25 * (g.speed(i) * g.speed(i) + g.speed(j) * g.speed(j))) *
           (p.gamma > 0.0 ? std::pow(geo.dist, -p.gamma) : 1.0);
      ks(i, j) = ks(j, i) = v;
    }
  }
  // diagonal: local polar patch over a ball around the node, memoized by (|xi|, radius)
  std::map<std::pair<long long, long long>, double> memo;
  Eigen::VectorXd diag(n);
  for (int i = 0; i < n; ++i) {
    const double r = patch_radius(g, i, opt.diagonal);
    auto k = std::make_pair(key(g.speed(i)), key(r));
    auto it = memo.find(k);
    if (it == memo.end())
      it = memo.emplace(k, kernel_ball_integral(p, g.node(i), r, opt.patch_radial, opt.patch_polar)).first;
    diag(i) = it->second;
  }
  DiscreteOperator K;
  K.grid = gp;
  K.label = "K";
  K.entries = (ks * g.w.asDiagonal()).cast<cplx>();
  for (int i = 0; i < n; ++i) K.entries(i, i) = diag(i);
  K.meta = {{"d", double(p.d)}, {"gamma", p.gamma}, {"q0", p.q0}};
  return K;
}

DiscreteOperator assemble_L(const DiscreteOperator& K, const Eigen::VectorXd& nu) {
  DiscreteOperator L = K;
  L.label = "L";
  for (int i = 0; i < nu.size(); ++i) L.entries(i, i) -= nu(i);
  return L;
}

DiscreteOperator assemble_L(const GridPtr& g, const KernelParams& p, const AssemblyOptions& opt) {
  return assemble_L(assemble_K(g, p, opt), assemble_nu(*g, p));
}

ClusterReport eigen_cluster(const Eigen::MatrixXd& sym, int expected) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (sym + sym.transpose()), Eigen::EigenvaluesOnly);
  ClusterReport c;
  c.expected = expected;
  const Eigen::VectorXd ev = es.eigenvalues();
  const int n = int(ev.size());
  for (int i = n - 1; i >= 0; --i) c.eigenvalues.push_back(ev(i));
  c.max_eig = c.eigenvalues.front();
  c.min_eig = c.eigenvalues.back();
  // cluster = the `expected` eigenvalues of smallest magnitude
  std::vector<double> mags;
  for (double v : c.eigenvalues) mags.push_back(std::abs(v));
  std::sort(mags.begin(), mags.end());
  c.cluster_max = mags[expected - 1];
  c.gap = mags[expected];
  c.gap_ratio = c.cluster_max > 0.0 ? c.gap / c.cluster_max : INFINITY;
  c.nonpositive = c.max_eig <= 1e-6 * std::abs(c.min_eig);
  return c;
}

ProjectionBasis build_projection(const GridPtr& gp, const ClusterReport* cluster) {
  const VelocityGrid& g = *gp;
  const int d = g.d, n = g.size();
  if (cluster && cluster->gap_ratio < 10.0)
    throw Error(ErrorKind::Precondition,
                "build_projection: near-zero cluster gap ratio " + std::to_string(cluster->gap_ratio) + " < 10");
  Eigen::MatrixXd B(n, d + 2);
  B.col(0) = g.sqrtM;
  for (int k = 0; k < d; ++k) B.col(k + 1) = g.nodes.col(k).cwiseProduct(g.sqrtM);
  B.col(d + 1) = (g.speed.array().square() - d).matrix().cwiseProduct(g.sqrtM);
  ProjectionBasis pb;
  pb.energy_norm = g.norm_beta(Eigen::VectorXd(B.col(d + 1)), 0.0);
  // modified Gram-Schmidt, two passes, in the symmetric frame
  Eigen::MatrixXd S = g.sqrt_w.asDiagonal() * B;
  for (int pass = 0; pass < 2; ++pass)
    for (int k = 0; k < d + 2; ++k) {
      for (int j = 0; j < k; ++j) S.col(k) -= S.col(j).dot(S.col(k)) * S.col(j);
      S.col(k).normalize();
    }
  pb.columns = S;
  pb.gram_residual = (S.transpose() * S - Eigen::MatrixXd::Identity(d + 2, d + 2)).cwiseAbs().maxCoeff();
  Eigen::MatrixXd P = S * S.transpose();
  pb.idempotence = (P * P - P).cwiseAbs().maxCoeff();
  // store nodal columns
  pb.columns = g.sqrt_w.cwiseInverse().asDiagonal() * S;
  return pb;
}

LinearSystem build_system(const GridPtr& g, const KernelParams& p, const Eigen::MatrixXd& K_nodal,
                          const Eigen::VectorXd& nu) {
  LinearSystem s;
  s.grid = g;
  s.params = p;
  s.nu = nu;
  s.K_nodal = K_nodal;
  const Eigen::VectorXd& sw = g->sqrt_w;
  Eigen::MatrixXd A = sw.asDiagonal() * K_nodal * sw.cwiseInverse().asDiagonal();
  A.diagonal() -= nu;
  s.Ls_raw = 0.5 * (A + A.transpose());
  s.raw_cluster = eigen_cluster(s.Ls_raw, g->d + 2);
  s.basis = build_projection(g);
  s.Phi = sw.asDiagonal() * s.basis.columns;
  s.invariant_residual = 0.0;
  for (int k = 0; k < s.nk(); ++k)
    s.invariant_residual = std::max(s.invariant_residual, (s.Ls_raw * s.Phi.col(k)).norm());
  const int n = g->size();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(n, n) - s.Phi * s.Phi.transpose();
  s.Ls = Q * s.Ls_raw * Q;
  s.Ls = 0.5 * (s.Ls + s.Ls.transpose()).eval();
  return s;
}

LinearSystem build_system(const GridPtr& g, const KernelParams& p, const AssemblyOptions& opt) {
  DiscreteOperator K = assemble_K(g, p, opt);
  LinearSystem s = build_system(g, p, K.entries.real(), assemble_nu(*g, p));
  s.meta = K.meta;
  s.meta["kernel_rule"] = double(int(opt.rule));
  return s;
}

Eigen::MatrixXcd LinearSystem::Bhat_sym(const Eigen::VectorXd& y, bool subtract_P) const {
  Eigen::MatrixXcd B = Ls.cast<cplx>();
  const Eigen::VectorXd yx = grid->nodes * y;
  for (int i = 0; i < n(); ++i) B(i, i) -= cplx(0.0, 2.0 * kPi * yx(i));
  if (subtract_P) B -= (Phi * Phi.transpose()).cast<cplx>();
  return B;
}

DiscreteOperator assemble_Bhat(const LinearSystem& s, const Eigen::VectorXd& y, bool subtract_P) {
  DiscreteOperator B;
  B.grid = s.grid;
  B.label = subtract_P ? "B1hat" : "Bhat";
  const Eigen::VectorXcd sw = s.grid->sqrt_w.cast<cplx>();
  const Eigen::VectorXcd si = s.grid->sqrt_w.cwiseInverse().cast<cplx>();
  B.entries = si.asDiagonal() * s.Bhat_sym(y, subtract_P) * sw.asDiagonal();
  for (int k = 0; k < y.size(); ++k) B.meta["y" + std::to_string(k)] = y(k);
  return B;
}

SpectralAbscissa spectral_abscissa(const Eigen::MatrixXcd& A) {
  SpectralAbscissa s;
  s.eigenvalues = eig_complex(A, false).values;
  s.abscissa = s.eigenvalues.real().maxCoeff();
  return s;
}

double hs_norm_truncated(const KernelParams& p, double extent, double eps_cut, double R_cut, double alpha, double beta,
                         double rel_tol) {
  if (!(eps_cut > 0.0 && R_cut > 0.0)) throw Error(ErrorKind::Precondition, "hs_norm_truncated: eps, R must be > 0");
  const int d = p.d;
  const double area_d = sphere_area(d), area_dm1 = sphere_area(d - 1);
  const double Sb = p.angular_integral();
  auto ksq = [&](double x, double s, double c) {
    const double bb = 0.5 * s + x * c;
    const double c2 = x * x + x * s * c + 0.25 * s * s;
    const double A = std::sqrt(std::max(0.0, c2 - bb * bb));
    const double xs2 = std::max(0.0, x * x + s * s + 2.0 * s * x * c);
    const double k = k1_reduced(p, s, A, std::abs(bb), 1e-9) - std::pow(2.0 * kPi, -0.5 * d) *
                                                                   std::exp(-0.25 * (x * x + xs2)) *
                                                                   (p.gamma > 0 ? std::pow(s, -p.gamma) : 1.0) * Sb;
    return k * k * std::pow(1.0 + std::sqrt(xs2), 2.0 * alpha);
  };
  // F(x) = int over xi_* in the truncated region, polar about xi
  auto F = [&](double x) {
    auto over_s = [&](double s) {
      double cmax = (x > 0.0 && s > 0.0) ? (R_cut * R_cut - x * x - s * s) / (2.0 * s * x) : (s <= R_cut ? 1.0 : -1.0);
      if (cmax <= -1.0) return 0.0;
      const double phmin = cmax >= 1.0 ? 0.0 : std::acos(cmax);
      auto g = [&](double ph) { return std::pow(std::sin(ph), d - 2) * ksq(x, s, std::cos(ph)); };
      return area_dm1 * std::pow(s, d - 1) * integrate_gk(g, phmin, kPi, rel_tol, "hs_norm_truncated");
    };
    const double lo = eps_cut, hi = x + R_cut;
    if (lo >= hi) return 0.0;
    const double mid = std::abs(R_cut - x);
    double v = 0.0;
    if (mid > lo && mid < hi)
      v = integrate_gk(over_s, lo, mid, rel_tol, "hs_norm_truncated") +
          integrate_gk(over_s, mid, hi, rel_tol, "hs_norm_truncated");
    else
      v = integrate_gk(over_s, lo, hi, rel_tol, "hs_norm_truncated");
    return v;
  };
  auto outer = [&](double x) { return area_d * std::pow(x, d - 1) * std::pow(1.0 + x, 2.0 * beta) * F(x); };
  if (eps_cut >= extent + R_cut) return 0.0;
  return integrate_gk(outer, 0.0, extent, rel_tol, "hs_norm_truncated");
}

ResolventProbe resolvent_A_bound_probe(const VelocityGrid& g, const KernelParams& p, const Eigen::VectorXd& nu,
                                       const Eigen::VectorXd& y, const std::vector<cplx>& lambdas) {
  ResolventProbe r;
  r.lambdas = lambdas;
  r.nu0 = (nu.array() * (1.0 + g.speed.array()).pow(p.gamma)).minCoeff();
  const Eigen::VectorXd yx = g.nodes * y;
  r.pass = true;
  for (cplx lam : lambdas) {
    if (lam.real() < 0.0) throw Error(ErrorKind::Precondition, "resolvent_A_bound_probe: Re lambda must be >= 0");
    double m = 0.0;
    for (int i = 0; i < g.size(); ++i) {
      const double v = std::pow(1.0 + g.speed(i), -p.gamma) / std::abs(lam + nu(i) + cplx(0.0, 2.0 * kPi * yx(i)));
      m = std::max(m, v);
    }
    r.values.push_back(m);
    if (m > 1.0 / r.nu0 * (1.0 + 1e-12)) r.pass = false;
  }
  return r;
}

}  // namespace kinspec
