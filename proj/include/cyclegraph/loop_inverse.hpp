#pragma once

#include "boundary_inverse.hpp"
#include "vertex_transition.hpp"

namespace cyclegraph {

// Quasi-periodic loop data in normalised units (T0 = 1).
struct QuasiData {
  std::function<double(double)> d_eval;
  std::vector<double> lambda_n;
  std::vector<int> sigma;
  double a = 2.0;
};

struct DirichletData {
  std::vector<double> lambda, alpha;
};

// H = sigma sqrt(d^2 - 4), S0'(1) = a (d - H)/2, alpha_n = hdot S0'.
inline DirichletData quasi_to_dirichlet(const QuasiData& qd, const std::function<double(double)>& h_dot) {
  if (qd.sigma.size() < qd.lambda_n.size())
    throw Error("quasi_to_dirichlet: " + std::to_string(qd.sigma.size()) + " signs for " +
                std::to_string(qd.lambda_n.size()) + " eigenvalues");
  DirichletData dd;
  for (std::size_t n = 0; n < qd.lambda_n.size(); ++n) {
    double lam = qd.lambda_n[n], d = qd.d_eval(lam);
    double disc = d * d - 4.0;
    if (disc < -1e-6)
      throw Error("quasi_to_dirichlet: data not realizable at n = " + std::to_string(n + 1) +
                  " (|d(lambda_n)| = " + std::to_string(std::abs(d)) + " < 2)");
    double H = qd.sigma[n] * std::sqrt(std::max(0.0, disc));
    double Sp = qd.a * (d - H) / 2.0;
    double al = h_dot(lam) * Sp;
    if (!(al > 0.0))
      throw Error("quasi_to_dirichlet: inconsistent norming constant at n = " + std::to_string(n + 1) +
                  " (alpha = " + std::to_string(al) + ")");
    dd.lambda.push_back(lam);
    dd.alpha.push_back(al);
  }
  return dd;
}

// Dirichlet pairs of a known potential on [0, T]: zeros of S(T, .) and alpha = int S^2 = Sdot(T) S'(T).
inline DirichletData dirichlet_pairs(const GridFunction& q, int count, const OdeOptions& opt = {}) {
  ZeroScanOptions zo;
  double mx = l2_norm(q) * q.length + 2.0;
  double lo = -mx * mx / (q.length * q.length) - 1.0;
  double hi = std::pow(M_PI * (count + 1.5) / q.length, 2);
  auto f = [&](double lam) { return integrate_fundamental<double>(q, lam, opt).S; };
  auto z = find_real_zeros(f, lo, hi, zo);
  if (static_cast<int>(z.size()) < count)
    throw Error("dirichlet_pairs: found " + std::to_string(z.size()) + " zeros, expected " + std::to_string(count));
  DirichletData dd;
  for (int n = 0; n < count; ++n) {
    EndpointData<double> v;
    auto dv = lambda_derivative<double>(q, z.values[n], opt, &v);
    dd.lambda.push_back(z.values[n]);
    dd.alpha.push_back(dv.S * v.Sp);
  }
  return dd;
}

struct LoopReconstruction {
  GridFunction q0;
  double mean_before = 0.0;
  double max_condition = 0.0;
};

// Classical GL: F = sum_{n<=N} [S(x,l_n)S(t,l_n)/a_n - S(x,l0_n)S(t,l0_n)/a0_n] for the reference
// potential q_ref (pairs ref), G + F + int G F = 0, q = q_ref + 2 dG(x,x)/dx, projected mean-zero.
inline LoopReconstruction gl_dirichlet_reconstruct(const DirichletData& dd, int N, const GridFunction& q_ref,
                                                   const DirichletData& ref, const GLOptions& gl = {},
                                                   const OdeOptions& opt = {}) {
  if (static_cast<int>(dd.lambda.size()) < N || static_cast<int>(ref.lambda.size()) < N)
    throw Error("gl_dirichlet_reconstruct: fewer than N pairs supplied");
  const int n = q_ref.n();
  KernelGrid F;
  F.length = q_ref.length;
  F.values = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd s(n);
  auto add = [&](double lam, double w) {
    auto tr = solution_trace<double>(q_ref, lam, opt, false);
    for (int i = 0; i < n; ++i) s(i) = tr.S[i];
    F.values.noalias() += w * s * s.transpose();
  };
  for (int k = 0; k < N; ++k) {
    add(dd.lambda[k], 1.0 / dd.alpha[k]);
    add(ref.lambda[k], -1.0 / ref.alpha[k]);
  }
  auto G = solve_gl(F, gl);
  auto rec = recover_qk(G.K, q_ref, false);
  LoopReconstruction out{project_mean_zero(rec.q), rec.mean_before, G.max_condition};
  return out;
}

// Zero-potential reference on [0,1]: lambda0 = (pi n)^2, alpha0 = 1/(2 (pi n)^2).
inline DirichletData zero_dirichlet_pairs(int count) {
  DirichletData dd;
  for (int n = 1; n <= count; ++n) {
    dd.lambda.push_back(std::pow(M_PI * n, 2));
    dd.alpha.push_back(1.0 / (2.0 * std::pow(M_PI * n, 2)));
  }
  return dd;
}

struct SigmaCheck {
  int compared = 0;
  int mismatches = 0;
  std::vector<int> mismatch_n;
  double max_lambda_diff = 0.0;
};

// Recomputes Dirichlet zeros and signs from a reconstructed (normalised) loop potential.
inline SigmaCheck verify_sigma_condition(const QuasiData& qd, const GridFunction& q0, int N, double zero_tol = 1e-6,
                                         const OdeOptions& opt = {}) {
  auto pairs = dirichlet_pairs(q0, N, opt);
  SigmaCheck c;
  for (int n = 0; n < N && n < static_cast<int>(qd.sigma.size()); ++n) {
    auto e = integrate_fundamental<double>(q0, pairs.lambda[n], opt);
    double d = qd.a * e.C + e.Sp / qd.a, H = qd.a * e.C - e.Sp / qd.a;
    int s = std::abs(H) <= zero_tol * (1.0 + std::abs(d)) ? 0 : (H > 0 ? 1 : -1);
    ++c.compared;
    if (s != qd.sigma[n]) {
      ++c.mismatches;
      c.mismatch_n.push_back(n + 1);
    }
    if (n < static_cast<int>(qd.lambda_n.size()))
      c.max_lambda_diff = std::max(c.max_lambda_diff, std::abs(pairs.lambda[n] - qd.lambda_n[n]));
  }
  return c;
}

}  // namespace cyclegraph
