#pragma once

#include <Eigen/Dense>
#include <boost/math/special_functions/legendre.hpp>
#include <boost/math/tools/roots.hpp>

#include "charfn.hpp"

namespace cyclegraph {

// nu_n = pi n + i alpha, n = -N..N, in loop-normalised units (T0 = 1).
struct RieszNodes {
  double alpha = 1.0;
  int N = 64;
  cplx nu(int n) const { return {M_PI * n, alpha}; }
};

struct CramerValue {
  cplx d, h, E, E1, E2;
};

// Pendant-only characteristic pieces for edge index k (1-based) at lambda.
inline CharFnValues<cplx> pendant_pieces(const PotentialSet& boundary, cplx lam, const OdeOptions& opt = {}) {
  std::vector<EndpointData<cplx>> ep(boundary.geom.m + 1);
  ep[0] = {0.0, 1.0, 1.0, 0.0};  // unused by the product/Kirchhoff parts
  for (int j = 1; j <= boundary.geom.m; ++j) ep[j] = integrate_fundamental<cplx>(boundary.q[j], lam, opt);
  return assemble<cplx>(boundary.geom, std::move(ep));
}

// d = 2 + E1/E, h = E2/(a E) from Delta, Delta_k and the recovered pendant potentials.
inline CramerValue cramer_dh(cplx D, cplx Dk, const CharFnValues<cplx>& pc, double a, int k = 1) {
  CramerValue v;
  cplx P = pc.dPi, K = pc.dK, Pk = pc.dkPi.at(k - 1), Kk = pc.dkK.at(k - 1);
  v.E = P * Kk - Pk * K;
  v.E1 = D * Kk - Dk * K;
  v.E2 = P * Dk - Pk * D;
  v.d = 2.0 + v.E1 / v.E;
  v.h = v.E2 / (a * v.E);
  return v;
}

inline CramerValue cramer_dh(const CharSource& src, const PotentialSet& boundary, cplx lam, int k = 1,
                             const OdeOptions& opt = {}) {
  cplx D;
  std::vector<cplx> Dk;
  src.eval(lam, D, Dk);
  return cramer_dh(D, Dk.at(k - 1), pendant_pieces(boundary, lam, opt), boundary.geom.a, k);
}

// E(lambda) = -(prod_{j != k} S_j(T_j))^2; returns the max defect of the assembled E relative to the size of
// the two products it is formed from (E itself is a heavy cancellation for lambda << 0).
inline double check_E_identity(const PotentialSet& boundary, const std::vector<cplx>& lams, int k = 1,
                               const OdeOptions& opt = {}) {
  double mx = 0.0;
  for (cplx lam : lams) {
    auto pc = pendant_pieces(boundary, lam, opt);
    cplx E = pc.dPi * pc.dkK[k - 1] - pc.dkPi[k - 1] * pc.dK;
    cplx p = 1.0;
    for (int j = 1; j <= boundary.geom.m; ++j)
      if (j != k) p *= pc.ep[j].S;
    cplx ref = -p * p;
    double scale = std::abs(pc.dPi * pc.dkK[k - 1]) + std::abs(pc.dkPi[k - 1] * pc.dK);
    mx = std::max(mx, std::abs(E - ref) / std::max(scale, 1e-300));
  }
  return mx;
}

namespace detail {

// sin(sqrt w)/sqrt w and its w-derivative (entire functions).
inline cplx sn(cplx w) {
  if (std::abs(w) < 1e-6) return 1.0 - w / 6.0 + w * w / 120.0;
  cplx r = std::sqrt(w);
  return std::sin(r) / r;
}
inline cplx dsn(cplx w) {
  if (std::abs(w) < 1e-2)
    return -1.0 / 6 + w * (2.0 / 120 + w * (-3.0 / 5040 + w * (4.0 / 362880 + w * (-5.0 / 39916800))));
  cplx r = std::sqrt(w);
  return (std::cos(r) - std::sin(r) / r) / (2.0 * w);
}
inline cplx cs(cplx w) { return std::cos(std::sqrt(w)); }

struct GaussRule {
  std::vector<double> t, w;  // on [0, 1]
};

inline GaussRule gauss_legendre(int n) {
  auto z = boost::math::legendre_p_zeros<double>(n);  // nonnegative zeros of P_n
  GaussRule g;
  auto add = [&](double x) {
    double p = boost::math::legendre_p_prime(n, x);
    g.t.push_back(0.5 * (x + 1.0));
    g.w.push_back(1.0 / ((1 - x * x) * p * p));  // 2/(...) scaled by 1/2
  };
  for (auto it = z.rbegin(); it != z.rend(); ++it)
    if (*it != 0.0) add(-*it);
  for (double x : z) add(x);
  return g;
}

}  // namespace detail

// Periodic grid on (-1, 1) used by the plain weighted Fourier identity.
inline std::vector<double> riesz_grid(int M) {
  std::vector<double> t(M);
  for (int j = 0; j < M; ++j) t[j] = -1.0 + 2.0 * j / M;
  return t;
}

// c_n = int_{-1}^{1} f(t) exp(i nu_n t) dt  =>  f(t) = exp(alpha t) (1/2) sum_n c_n exp(-i pi n t).
inline std::vector<cplx> riesz_invert(const std::vector<cplx>& c, const RieszNodes& nodes, const std::vector<double>& t) {
  if (static_cast<int>(c.size()) != 2 * nodes.N + 1) throw Error("riesz_invert: expected 2N+1 coefficients");
  std::vector<cplx> f(t.size());
  for (std::size_t j = 0; j < t.size(); ++j) {
    cplx s = 0.0;
    for (int n = -nodes.N; n <= nodes.N; ++n) s += c[n + nodes.N] * std::exp(cplx(0, -M_PI * n * t[j]));
    f[j] = std::exp(nodes.alpha * t[j]) * 0.5 * s;
  }
  return f;
}

// Coefficients of samples on riesz_grid(M) (trapezoid on the periodic grid, exact for degree < M/2).
inline std::vector<cplx> riesz_coefficients(const std::vector<cplx>& f, const RieszNodes& nodes) {
  const int M = static_cast<int>(f.size());
  auto t = riesz_grid(M);
  std::vector<cplx> c(2 * nodes.N + 1);
  for (int n = -nodes.N; n <= nodes.N; ++n) {
    cplx s = 0.0;
    for (int j = 0; j < M; ++j) s += f[j] * std::exp(cplx(0, 1) * nodes.nu(n) * t[j]);
    c[n + nodes.N] = s * (2.0 / M);
  }
  return c;
}

enum class KernelMethod { legendre, fourier };

struct KernelExtractionOptions {
  KernelMethod method = KernelMethod::legendre;
  int degree = 24;        // Legendre basis size - 1
  int quad_points = 400;  // Gauss points for the basis transforms
  int grid_nodes = 513;   // output grid on [0, 1]
  int alpha_retries = 4;
  double e_threshold = 1e-6;  // on |E| |nu|^{2(m-1)}
  OdeOptions ode;
};

// Loop kernels in normalised units: d(l) = (a+1/a)cos r + (1/r) int D sin rt, h(l) = sin r/r + r^-2 int K cos rt.
struct LoopKernels {
  GridFunction D, K;
  double a = 2.0;
  double alpha = 1.0;       // node offset actually used
  double min_E = 0.0;       // min |E| |nu|^{2(m-1)} over nodes
  double K_mean_removed = 0.0;
  double lsq_condition = 0.0;
  detail::GaussRule quad;   // evaluation rule with kernel values at its nodes
  std::vector<double> Dq, Kq;

  cplx d(cplx lam) const {
    cplx s = 0.0;
    for (std::size_t i = 0; i < quad.t.size(); ++i) {
      double t = quad.t[i];
      s += quad.w[i] * Dq[i] * t * detail::sn(lam * t * t);
    }
    return (a + 1.0 / a) * detail::cs(lam) + s;
  }
  cplx h(cplx lam) const {
    cplx s = 0.0;
    for (std::size_t i = 0; i < quad.t.size(); ++i) {
      double t = quad.t[i];
      cplx u = detail::sn(lam * t * t / 4.0);
      s += quad.w[i] * Kq[i] * (t * t / 2.0) * u * u;
    }
    return detail::sn(lam) - s;
  }
  cplx h_dot(cplx lam) const {
    cplx s = 0.0;
    for (std::size_t i = 0; i < quad.t.size(); ++i) {
      double t = quad.t[i];
      cplx w = lam * t * t / 4.0;
      s += quad.w[i] * Kq[i] * (t * t / 2.0) * 2.0 * detail::sn(w) * detail::dsn(w) * (t * t / 4.0);
    }
    return detail::dsn(lam) - s;
  }

  static LoopKernels from_grids(GridFunction D, GridFunction K, double a, int quad_points = 400) {
    LoopKernels L;
    L.a = a;
    L.quad = detail::gauss_legendre(quad_points);
    for (double t : L.quad.t) {
      L.Dq.push_back(D.at(t));
      L.Kq.push_back(K.at(t));
    }
    L.D = std::move(D);
    L.K = std::move(K);
    return L;
  }
};

// Normalised loop quantities for T0 != 1: dbar(lb) = d(lb/T0^2), hbar(lb) = h(lb/T0^2)/T0.
struct NodeData {
  std::vector<cplx> Dhat, Khat;  // n = -N..N
  double min_E = std::numeric_limits<double>::infinity();
};

inline NodeData node_coefficients(const CharSource& src, const PotentialSet& boundary, const RieszNodes& nodes,
                                  const KernelExtractionOptions& opt) {
  const auto& g = boundary.geom;
  const double T0 = g.T[0], a = g.a;
  NodeData nd;
  for (int n = -nodes.N; n <= nodes.N; ++n) {
    cplx nu = nodes.nu(n), mu = nu * nu;
    auto cv = cramer_dh(src, boundary, mu / (T0 * T0), 1, opt.ode);
    double en = std::abs(cv.E) * std::pow(std::abs(nu / T0), 2 * (g.m - 1));
    nd.min_E = std::min(nd.min_E, en);
    if (en < opt.e_threshold) {
      nd.Dhat.clear();
      return nd;
    }
    cplx dbar = cv.d, hbar = cv.h / T0;
    nd.Dhat.push_back(nu * (dbar - (a + 1.0 / a) * std::cos(nu)));
    nd.Khat.push_back(nu * nu * (hbar - std::sin(nu) / nu));
  }
  return nd;
}

inline LoopKernels kernels_from_coefficients(const NodeData& nd, const RieszNodes& nodes, double a,
                                             const KernelExtractionOptions& opt) {
  const int n = opt.grid_nodes;
  std::vector<double> Dv(n), Kv(n), coefD, coefK;
  double cond = 0.0;
  if (opt.method == KernelMethod::fourier) {
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) t[i] = double(i) / (n - 1);
    std::vector<cplx> cD, cK;
    for (std::size_t i = 0; i < nd.Dhat.size(); ++i) {
      cD.push_back(2.0 * cplx(0, 1) * nd.Dhat[i]);
      cK.push_back(2.0 * nd.Khat[i]);
    }
    auto fD = riesz_invert(cD, nodes, t), fK = riesz_invert(cK, nodes, t);
    for (int i = 0; i < n; ++i) {
      Dv[i] = fD[i].real();
      Kv[i] = fK[i].real();
    }
  } else {
    const int P = opt.degree;
    auto gq = detail::gauss_legendre(opt.quad_points);
    const int rows = 2 * nodes.N + 1;
    Eigen::MatrixXd AD(2 * rows, P + 1), AK(2 * rows, P + 1);
    Eigen::VectorXd bD(2 * rows), bK(2 * rows);
    Eigen::MatrixXd Pv(gq.t.size(), P + 1);
    for (std::size_t i = 0; i < gq.t.size(); ++i)
      for (int p = 0; p <= P; ++p) Pv(i, p) = boost::math::legendre_p(p, 2.0 * gq.t[i] - 1.0);
    for (int r = 0; r < rows; ++r) {
      cplx nu = nodes.nu(r - nodes.N);
      for (int p = 0; p <= P; ++p) {
        cplx sD = 0.0, sK = 0.0;
        for (std::size_t i = 0; i < gq.t.size(); ++i) {
          sD += gq.w[i] * Pv(i, p) * std::sin(nu * gq.t[i]);
          sK += gq.w[i] * Pv(i, p) * std::cos(nu * gq.t[i]);
        }
        AD(2 * r, p) = sD.real();
        AD(2 * r + 1, p) = sD.imag();
        AK(2 * r, p) = sK.real();
        AK(2 * r + 1, p) = sK.imag();
      }
      bD(2 * r) = nd.Dhat[r].real();
      bD(2 * r + 1) = nd.Dhat[r].imag();
      bK(2 * r) = nd.Khat[r].real();
      bK(2 * r + 1) = nd.Khat[r].imag();
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svdD(AD, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::BDCSVD<Eigen::MatrixXd> svdK(AK, Eigen::ComputeThinU | Eigen::ComputeThinV);
    auto sv = svdD.singularValues();
    cond = sv(0) / sv(sv.size() - 1);
    Eigen::VectorXd cDv = svdD.solve(bD), cKv = svdK.solve(bK);
    coefD.assign(cDv.data(), cDv.data() + cDv.size());
    coefK.assign(cKv.data(), cKv.data() + cKv.size());
    for (int i = 0; i < n; ++i) {
      double x = 2.0 * i / (n - 1) - 1.0, sd = 0.0, sk = 0.0;
      for (int p = 0; p <= P; ++p) {
        double lp = boost::math::legendre_p(p, x);
        sd += cDv(p) * lp;
        sk += cKv(p) * lp;
      }
      Dv[i] = sd;
      Kv[i] = sk;
    }
  }
  GridFunction D(1.0, Dv), K(1.0, Kv);
  double km = mean(K);
  K = project_mean_zero(K);
  auto L = LoopKernels::from_grids(std::move(D), std::move(K), a, opt.quad_points);
  if (opt.method == KernelMethod::legendre) {
    // exact expansion values at the evaluation nodes; K re-centred with its exact mean (c_0)
    for (std::size_t i = 0; i < L.quad.t.size(); ++i) {
      double x = 2.0 * L.quad.t[i] - 1.0, sd = 0.0, sk = 0.0;
      for (int p = 0; p <= opt.degree; ++p) {
        double lp = boost::math::legendre_p(p, x);
        sd += coefD[p] * lp;
        sk += (p == 0 ? 0.0 : coefK[p]) * lp;
      }
      L.Dq[i] = sd;
      L.Kq[i] = sk;
    }
  }
  L.alpha = nodes.alpha;
  L.min_E = nd.min_E;
  L.K_mean_removed = km;
  L.lsq_condition = cond;
  return L;
}

// Algorithm step 2: Cramer at mu_n = nu_n^2, then kernel extraction; retries with larger alpha near pendant zeros.
inline LoopKernels extract_loop_kernels(const CharSource& src, const PotentialSet& boundary, RieszNodes nodes,
                                        const KernelExtractionOptions& opt = {}) {
  for (int attempt = 0; attempt <= opt.alpha_retries; ++attempt) {
    auto nd = node_coefficients(src, boundary, nodes, opt);
    if (!nd.Dhat.empty()) return kernels_from_coefficients(nd, nodes, boundary.geom.a, opt);
    if (attempt == opt.alpha_retries)
      throw Error("extract_loop_kernels: node collides with pendant Dirichlet zero (min |E| = " +
                  std::to_string(nd.min_E) + " at alpha = " + std::to_string(nodes.alpha) + ")");
    nodes.alpha += 0.5;
  }
  throw Error("extract_loop_kernels: unreachable");
}

// Zeros of the normalised h: localise near (pi n)^2, safeguarded Newton with the analytic derivative.
inline EigenvalueList dirichlet_from_h(const LoopKernels& L, int count) {
  if (std::abs(L.h(0.0)) < 1e-8) throw Error("dirichlet_from_h: |h(0)| < 1e-8 (case excluded by assumption)");
  EigenvalueList out;
  out.refinement_tol = 1e-13;
  auto hr = [&](double lam) { return L.h(lam).real(); };
  double lo1 = -1.0;
  for (int i = 0; i < 60 && hr(lo1) <= 0.0; ++i) lo1 *= 2.0;
  if (hr(lo1) <= 0.0) throw Error("dirichlet_from_h: no lower bracket for n = 1");
  out.window_lo = lo1;
  for (int n = 1; n <= count; ++n) {
    double a = n == 1 ? lo1 : std::pow(M_PI * (n - 0.5), 2), b = std::pow(M_PI * (n + 0.5), 2);
    double fa = hr(a), fb = hr(b);
    if (fa * fb > 0) throw Error("dirichlet_from_h: no sign change localising n = " + std::to_string(n));
    double guess = n == 1 ? std::clamp(M_PI * M_PI, a, b) : std::pow(M_PI * n, 2);
    auto fn = [&](double lam) { return std::make_pair(L.h(lam).real(), L.h_dot(lam).real()); };
    std::uintmax_t it = 50;
    double z = boost::math::tools::newton_raphson_iterate(fn, guess, a, b, 50, it);
    if (it >= 50 || std::abs(hr(z)) > 1e-10 * (1.0 + std::abs(fa))) {
      // bisection fallback
      std::uintmax_t it2 = 200;
      auto r = boost::math::tools::bisect(hr, a, b, boost::math::tools::eps_tolerance<double>(50), it2);
      z = 0.5 * (r.first + r.second);
      if (it2 >= 200) throw Error("dirichlet_from_h: failed to converge for n = " + std::to_string(n));
    }
    out.values.push_back(z);
    out.multiplicity.push_back(1);
  }
  out.window_hi = out.values.empty() ? 0.0 : out.values.back();
  return out;
}

}  // namespace cyclegraph
