#pragma once

#include <Eigen/Dense>

#include "charfn.hpp"

namespace cyclegraph {

// lambda = (sigma + i tau)^2; nodes on the half line sigma_j = j*sigma_max/(n_nodes/2), j = 0..n_nodes/2.
// The other half follows from conjugate symmetry (real potentials).
struct ContourSpec {
  double tau = 1.0;
  double sigma_max = 60.0 * M_PI;
  int n_nodes = 4096;

  int half_count() const { return n_nodes / 2 + 1; }
  double spacing() const { return sigma_max / (n_nodes / 2); }
  double sigma(int j) const { return j * spacing(); }
  cplx theta(int j) const { return {sigma(j), tau}; }
  double weight(int j) const {
    int last = n_nodes / 2;
    return (j == 0 || j == last) ? 0.5 * spacing() : spacing();
  }
  void validate() const {
    if (!(tau > 0) || !(sigma_max > 0) || n_nodes < 4 || n_nodes % 2)
      throw Error("contour: need tau > 0, sigma_max > 0 and an even node count >= 4");
  }
};

// Every eigenvalue of both problems must sit inside the parabola: tau^2 > -lambda_min.
inline double choose_tau(double lambda_min, double margin = 1.0) {
  return std::sqrt(std::max(0.0, -lambda_min)) + margin;
}

struct WeylDiffSamples {
  ContourSpec contour;
  int k = 1;
  std::vector<cplx> theta, values;  // values: Mhat(theta^2) = M_ref - M_data
  double min_abs_delta = 0.0;
};

inline cplx weyl_function(const CharSource& src, int k, cplx lam, double* abs_delta = nullptr) {
  cplx D;
  std::vector<cplx> Dk;
  src.eval(lam, D, Dk);
  if (abs_delta) *abs_delta = std::abs(D);
  return -Dk.at(k - 1) / D;
}

// Mhat = M(reference) - M(data), M = -Delta_k/Delta.
inline WeylDiffSamples weyl_diff(const CharSource& data, const CharSource& ref, int k, const ContourSpec& c) {
  c.validate();
  const int m = data.geometry().m;
  WeylDiffSamples w;
  w.contour = c;
  w.k = k;
  w.min_abs_delta = std::numeric_limits<double>::infinity();
  for (int j = 0; j < c.half_count(); ++j) {
    cplx th = c.theta(j), lam = th * th;
    double ad, ar;
    cplx Md = weyl_function(data, k, lam, &ad);
    cplx Mr = weyl_function(ref, k, lam, &ar);
    double floor = 1e-3 * std::pow(std::abs(th), -m);
    if (ad < floor || ar < floor)
      throw Error("weyl_diff: contour too low: |Delta| = " + std::to_string(std::min(ad, ar)) + " at node " +
                  std::to_string(j) + " (sigma = " + std::to_string(th.real()) + ")");
    w.min_abs_delta = std::min({w.min_abs_delta, ad, ar});
    w.theta.push_back(th);
    w.values.push_back(Mr - Md);
  }
  return w;
}

inline double weyl_l2_norm(const WeylDiffSamples& w) {
  // L2 over the full line gamma = {sigma + i tau}, using the conjugate symmetry
  double s = 0.0;
  for (std::size_t j = 0; j < w.values.size(); ++j) s += 2.0 * w.contour.weight(int(j)) * std::norm(w.values[j]);
  return std::sqrt(s);
}

struct KernelGrid {
  double length = 1.0;
  Eigen::MatrixXd values;  // values(i, j) = kernel(x_i, t_j)

  int n() const { return static_cast<int>(values.rows()); }
  double step() const { return length / (n() - 1); }
  double x(int i) const { return length * i / (n() - 1); }
};

// S(x_i, theta_j^2) for every contour node, as a (nodes x contour) matrix.
inline Eigen::MatrixXcd contour_traces(const GridFunction& q, const ContourSpec& c, const OdeOptions& opt = {},
                                       Eigen::MatrixXcd* Sp = nullptr) {
  Eigen::MatrixXcd A(q.n(), c.half_count());
  if (Sp) Sp->resize(q.n(), c.half_count());
  for (int j = 0; j < c.half_count(); ++j) {
    cplx th = c.theta(j);
    auto tr = solution_trace<cplx>(q, th * th, opt, false);
    for (int i = 0; i < q.n(); ++i) A(i, j) = tr.S[i];
    if (Sp)
      for (int i = 0; i < q.n(); ++i) (*Sp)(i, j) = tr.Sp[i];
  }
  return A;
}

// F(x,t) = -(1/2 pi i) int_Gamma Mhat S(x) S(t) dmu, Gamma traversed with Im(lambda) increasing,
// = -(2/pi) int_0^inf Im[Mhat(theta^2) S(x,theta^2) S(t,theta^2) theta] dsigma.
inline KernelGrid assemble_F(const WeylDiffSamples& w, const GridFunction& q_ref, const OdeOptions& opt = {},
                             int stride = 1) {
  const auto& c = w.contour;
  Eigen::MatrixXcd A = contour_traces(q_ref, c, opt);
  const int nc = c.half_count();
  // stride > 1 gives the coarser trapezoid rule on every stride-th node (quadrature error estimate)
  std::vector<int> cols;
  for (int j = 0; j < nc; j += stride) cols.push_back(j);
  if (cols.back() != nc - 1) throw Error("assemble_F: stride must divide n_nodes/2");
  Eigen::MatrixXcd B(A.rows(), cols.size()), At(A.rows(), cols.size());
  for (std::size_t s = 0; s < cols.size(); ++s) {
    int j = cols[s];
    double wt = stride * c.weight(j);
    if (stride > 1 && (j == 0 || j == nc - 1)) wt = 0.5 * stride * c.spacing();
    cplx v = w.values[j] * w.theta[j] * wt;
    At.col(s) = A.col(j);
    B.col(s) = A.col(j) * v;
  }
  KernelGrid F;
  F.length = q_ref.length;
  F.values = -(2.0 / M_PI) * (B * At.transpose()).imag();
  return F;
}

namespace detail {

// E1(z), |arg z| < pi: power series near the origin, continued fraction elsewhere.
inline cplx expint_e1(cplx z) {
  const double euler = 0.57721566490153286061;
  if (std::abs(z) < 2.0 || (z.real() < 0 && std::abs(z.imag()) < 2.0 * std::abs(z.real()) && std::abs(z) < 20)) {
    cplx s = 0.0, term = 1.0;
    for (int k = 1; k < 200; ++k) {
      term *= -z / double(k);
      cplx add = term / double(k);
      s += add;
      if (std::abs(add) < 1e-17 * std::abs(s)) break;
    }
    return -euler - std::log(z) - s;
  }
  cplx b = z + 1.0, c = 1e300, d = 1.0 / b, h = d;  // modified Lentz
  for (int i = 1; i < 1000; ++i) {
    double an = -double(i) * i;
    b += 2.0;
    d = 1.0 / (an * d + b);
    c = b + an / c;
    cplx del = c * d;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-z);
}

// int_{theta_m}^{theta_m + inf} e^{i v theta} / theta^2 d theta (horizontal path)
inline cplx tail_integral(double v, cplx thm) {
  if (v == 0.0) return 1.0 / thm;
  const cplx I(0, 1);
  return std::exp(I * v * thm) / thm + I * v * expint_e1(-I * v * thm);
}

}  // namespace detail

// Large-sigma model theta*Mhat ~ sum_f B_f e^{i theta f}: f = 0 carries the end-value jump
// (B_0 ~ i (q(0) - q_ref(0))/2), f > 0 are reflections off the vertex and around the loop.
struct WeylTail {
  std::vector<double> freq;
  std::vector<cplx> coef;
  double rms = 0.0;  // fit residual on the fitted window
  double jump() const { return freq.empty() ? 0.0 : 2.0 * coef[0].imag(); }
};

inline std::vector<double> tail_frequencies(const GraphGeometry& g, int k) {
  std::vector<double> P{g.T[0]};
  for (int j = 1; j <= g.m; ++j) P.push_back(2.0 * g.T[j]);
  const double base = 2.0 * g.T[k];
  std::vector<double> f{0.0, base};
  for (std::size_t i = 0; i < P.size(); ++i) {
    f.push_back(base + P[i]);
    for (std::size_t j = i; j < P.size(); ++j) f.push_back(base + P[i] + P[j]);
  }
  std::sort(f.begin(), f.end());
  double tol = 0.05 * *std::min_element(g.T.begin(), g.T.end());
  std::vector<double> out;
  for (double v : f)
    if (out.empty() || v - out.back() > tol) out.push_back(v);
  return out;
}

inline WeylTail fit_weyl_tail(const WeylDiffSamples& w, const std::vector<double>& freq, double from = 0.5) {
  const int n = static_cast<int>(w.theta.size());
  const int j0 = static_cast<int>(from * (n - 1));
  const int rows = n - j0, cols = static_cast<int>(freq.size());
  if (rows < 4 * cols) throw Error("fit_weyl_tail: too few contour nodes for the tail model");
  Eigen::MatrixXcd A(rows, cols);
  Eigen::VectorXcd b(rows);
  for (int j = j0; j < n; ++j) {
    cplx th = w.theta[j];
    for (int q = 0; q < cols; ++q) A(j - j0, q) = std::exp(cplx(0, 1) * th * freq[q]);
    b(j - j0) = th * w.values[j];
  }
  Eigen::VectorXcd x = A.colPivHouseholderQr().solve(b);
  WeylTail t;
  t.freq = freq;
  t.coef.assign(x.data(), x.data() + cols);
  t.rms = (A * x - b).norm() / std::sqrt(double(rows));
  return t;
}

// Adds -(2/pi) int_{sigma_max}^inf Im[Mhat S(x) S(t) theta] dsigma with the tail model and S ~ sin(theta x)/theta.
inline void add_tail(KernelGrid& F, const WeylTail& t, const ContourSpec& c) {
  const int n = F.n();
  const double h = F.step();
  const cplx thm(c.sigma_max, c.tau);
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n, n);
  std::vector<cplx> H(4 * n - 3);  // H[m + 2(n-1)] = tail_integral(f + m h)
  for (std::size_t q = 0; q < t.freq.size(); ++q) {
    for (int m = -2 * (n - 1); m <= 2 * (n - 1); ++m) H[m + 2 * (n - 1)] = detail::tail_integral(t.freq[q] + m * h, thm);
    auto Hm = [&](int m) { return H[m + 2 * (n - 1)]; };
    const cplx B = t.coef[q];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) {
        cplx s = 0.25 * B * (Hm(i - j) + Hm(j - i) - Hm(i + j) - Hm(-(i + j)));
        T(i, j) += s.imag();
      }
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      double v = -(2.0 / M_PI) * T(i, j);
      F.values(i, j) += v;
      if (j != i) F.values(j, i) += v;
    }
}

struct GLOptions {
  double max_condition = 1e8;
};

struct GLResult {
  KernelGrid K;  // lower triangle t <= x, zero above
  double max_condition = 0.0;
};

// K(x,t) + F(x,t) + int_0^x K(x,s) F(s,t) ds = 0 by Nystrom/trapezoid on [0, x_i] for every node.
inline GLResult solve_gl(const KernelGrid& F, const GLOptions& opt = {}) {
  const int n = F.n();
  const double h = F.step();
  GLResult r;
  r.K.length = F.length;
  r.K.values = Eigen::MatrixXd::Zero(n, n);
  r.K.values(0, 0) = -F.values(0, 0);
  Eigen::MatrixXd A;
  Eigen::VectorXd w, rhs;
  for (int i = 1; i < n; ++i) {
    const int sz = i + 1;
    w = Eigen::VectorXd::Constant(sz, h);
    w(0) = w(i) = 0.5 * h;
    A = F.values.topLeftCorner(sz, sz) * w.asDiagonal();
    A.diagonal().array() += 1.0;
    rhs = -F.values.row(i).head(sz).transpose();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    double rc = lu.rcond();
    double cond = rc > 0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
    r.max_condition = std::max(r.max_condition, cond);
    if (cond > opt.max_condition)
      throw Error("solve_gl: condition estimate " + std::to_string(cond) + " at x = " + std::to_string(F.x(i)) +
                  ": perturbation too large for local regime");
    r.K.values.row(i).head(sz) = lu.solve(rhs).transpose();
  }
  return r;
}

// Max over nodes of |K + F + int K F| with the same trapezoid rule.
inline double gl_residual(const KernelGrid& F, const KernelGrid& K) {
  const int n = F.n();
  const double h = F.step();
  double mx = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = 0.0;
      for (int k = 0; k <= i; ++k) {
        double wk = (k == 0 || k == i) ? 0.5 * h : h;
        if (i == 0) wk = 0.0;
        s += wk * K.values(i, k) * F.values(k, j);
      }
      mx = std::max(mx, std::abs(K.values(i, j) + F.values(i, j) + s));
    }
  }
  return mx;
}

// 4th-order first derivative on a uniform grid, one-sided 5-point stencils near the ends.
inline std::vector<double> derivative4(const std::vector<double>& f, double h) {
  const int n = static_cast<int>(f.size());
  if (n < 5) throw Error("derivative4: need at least 5 nodes");
  std::vector<double> d(n);
  for (int i = 2; i + 2 < n; ++i) d[i] = (f[i - 2] - 8 * f[i - 1] + 8 * f[i + 1] - f[i + 2]) / (12 * h);
  d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h);
  d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h);
  d[n - 1] = (25 * f[n - 1] - 48 * f[n - 2] + 36 * f[n - 3] - 16 * f[n - 4] + 3 * f[n - 5]) / (12 * h);
  d[n - 2] = (3 * f[n - 1] + 10 * f[n - 2] - 18 * f[n - 3] + 6 * f[n - 4] - f[n - 5]) / (12 * h);
  return d;
}

struct RecoveredPotential {
  GridFunction q;
  double mean_before = 0.0;  // mean of q_ref + 2 dK(x,x)/dx before any re-centering
};

inline RecoveredPotential recover_qk(const KernelGrid& K, const GridFunction& q_ref, bool recenter = true) {
  if (K.n() != q_ref.n()) throw Error("recover_qk: grid mismatch");
  std::vector<double> diag(K.n());
  for (int i = 0; i < K.n(); ++i) diag[i] = K.values(i, i);
  auto dd = derivative4(diag, K.step());
  GridFunction q = q_ref;
  for (int i = 0; i < q.n(); ++i) q.values[i] += 2.0 * dd[i];
  q.mean_zero = false;
  RecoveredPotential r{q, mean(q)};
  if (recenter) r.q = project_mean_zero(r.q);
  return r;
}

struct BoundaryInverseOptions {
  ContourSpec contour;
  GLOptions gl;
  OdeOptions ode;
  bool recenter = true;
  bool quadrature_estimate = false;  // also solve with every other contour node
  bool tail_correction = true;
};

struct BoundaryInverseResult {
  RecoveredPotential rec;
  double min_abs_delta = 0.0;
  double max_condition = 0.0;
  double weyl_l2 = 0.0;
  double quadrature_error = -1.0;  // L2 change between n/2 and n contour nodes, if requested
  WeylTail tail;
};

// Algorithm step 1 for one pendant edge: reference problem (ref, q_ref) must be fixed and known.
inline BoundaryInverseResult invert_pendant(const CharSource& data, const CharSource& ref, const GridFunction& q_ref,
                                            int k, const BoundaryInverseOptions& opt) {
  auto w = weyl_diff(data, ref, k, opt.contour);
  BoundaryInverseResult r;
  r.min_abs_delta = w.min_abs_delta;
  r.weyl_l2 = weyl_l2_norm(w);
  auto F = assemble_F(w, q_ref, opt.ode);
  if (opt.tail_correction) {
    r.tail = fit_weyl_tail(w, tail_frequencies(data.geometry(), k));
    add_tail(F, r.tail, opt.contour);
  }
  auto K = solve_gl(F, opt.gl);
  r.max_condition = K.max_condition;
  r.rec = recover_qk(K.K, q_ref, opt.recenter);
  if (opt.quadrature_estimate) {
    auto F2 = assemble_F(w, q_ref, opt.ode, 2);
    if (opt.tail_correction) add_tail(F2, r.tail, opt.contour);
    auto K2 = solve_gl(F2, opt.gl);
    auto q2 = recover_qk(K2.K, q_ref, opt.recenter);
    r.quadrature_error = l2_distance(r.rec.q, q2.q);
  }
  return r;
}

struct MsmReport {
  double defect_l2 = 0.0;     // || q - qt - RHS ||
  double diff_l2 = 0.0;       // || q - qt ||
  double relative = 0.0;      // defect / diff (0 when diff = 0)
  std::vector<double> main_eq_residuals;  // |main equation residual| / |St| at probes
  std::vector<double> rhs;    // the contour integral on the grid
  WeylTail tail;
};

// Checks q = qt + (1/(pi i)) oint_ccw (S St)' Mhat dlambda, Mhat = M - Mt, S for q, St for qt,
// and the main equation St(x,l) = S(x,l) + (1/2 pi i) int_Gamma R(x,l,mu) St(x,mu) dmu at probe points.
inline MsmReport verify_msm_identity(const PotentialSet& q, const PotentialSet& qt, int k, const ContourSpec& c,
                                     const OdeOptions& opt = {},
                                     std::vector<std::pair<double, cplx>> probes = {}, bool tail_correction = true) {
  c.validate();
  ForwardSource src(CharFnSet(q, opt)), srct(CharFnSet(qt, opt));
  auto w = weyl_diff(srct, src, k, c);  // M(q) - M(qt)
  const auto& qk = q.q[k];
  const auto& qtk = qt.q[k];
  if (qk.n() != qtk.n()) throw Error("verify_msm_identity: grid mismatch");
  Eigen::MatrixXcd Sp, Stp;
  Eigen::MatrixXcd S = contour_traces(qk, c, opt, &Sp);
  Eigen::MatrixXcd St = contour_traces(qtk, c, opt, &Stp);
  MsmReport r;
  r.rhs.assign(qk.n(), 0.0);
  for (int j = 0; j < c.half_count(); ++j) {
    cplx v = w.values[j] * 2.0 * w.theta[j] * c.weight(j);
    for (int i = 0; i < qk.n(); ++i) r.rhs[i] += ((Sp(i, j) * St(i, j) + S(i, j) * Stp(i, j)) * v).imag();
  }
  if (tail_correction) {
    // theta Mhat ~ sum_f B_f e^{i theta f}, (S St)' ~ sin(2 theta x)/theta beyond sigma_max
    r.tail = fit_weyl_tail(w, tail_frequencies(q.geom, k));
    const cplx thm(c.sigma_max, c.tau), I(0, 1);
    auto J = [&](double v) { return detail::expint_e1(-I * v * thm); };
    for (int i = 1; i + 1 < qk.n(); ++i) {
      double x = qk.x(i);
      cplx acc = 0.0;
      for (std::size_t f = 0; f < r.tail.freq.size(); ++f)
        acc += r.tail.coef[f] * (J(r.tail.freq[f] + 2.0 * x) - J(r.tail.freq[f] - 2.0 * x));
      r.rhs[i] += (-I * acc).imag();
    }
  }
  std::vector<double> def(qk.n()), diff(qk.n());
  for (int i = 0; i < qk.n(); ++i) r.rhs[i] *= -2.0 / M_PI;
  // the identity holds a.e.: at x = 0 the integral vanishes identically and at x = T a reflection
  // term is log-singular, so the endpoint values are one-sided limits
  const int n = qk.n();
  r.rhs[0] = 2.0 * r.rhs[1] - r.rhs[2];
  r.rhs[n - 1] = 2.0 * r.rhs[n - 2] - r.rhs[n - 3];
  for (int i = 0; i < qk.n(); ++i) {
    diff[i] = qk.values[i] - qtk.values[i];
    def[i] = diff[i] - r.rhs[i];
  }
  r.defect_l2 = l2_norm(GridFunction(qk.length, def));
  r.diff_l2 = l2_norm(GridFunction(qk.length, diff));
  r.relative = r.diff_l2 > 0 ? r.defect_l2 / r.diff_l2 : 0.0;

  if (probes.empty()) {
    double T = qk.length;
    probes = {{0.2 * T, {1.0, 0.0}}, {0.35 * T, {4.0, 2.0}}, {0.5 * T, {10.0, -1.0}},
              {0.7 * T, {-0.5, 0.5}}, {0.9 * T, {25.0, 3.0}}};
  }
  for (auto [x, lam] : probes) {
    int i = std::clamp(static_cast<int>(std::lround(x / qk.step())), 0, qk.n() - 1);
    auto tl = solution_trace<cplx>(qk, lam, opt, false);
    auto ttl = solution_trace<cplx>(qtk, lam, opt, false);
    // int_0^x S(t,l)S(t,mu)dt = [S(x,l)S'(x,mu) - S'(x,l)S(x,mu)]/(l - mu)
    cplx acc = 0.0, acc_conj = 0.0;
    for (int j = 0; j < c.half_count(); ++j) {
      cplx th = w.theta[j], mu = th * th;
      cplx dmu = 2.0 * th * c.weight(j);
      cplx R = (tl.S[i] * Sp(i, j) - tl.Sp[i] * S(i, j)) / (lam - mu) * w.values[j];
      acc += R * St(i, j) * dmu;
      // mirrored node: conj(mu), the traces and Mhat conjugate, dmu -> -conj(dmu) for sigma increasing
      cplx mub = std::conj(mu);
      cplx Rb = (tl.S[i] * std::conj(Sp(i, j)) - tl.Sp[i] * std::conj(S(i, j))) / (lam - mub) *
                std::conj(w.values[j]);
      acc_conj += Rb * std::conj(St(i, j)) * (-std::conj(dmu));
    }
    cplx integral_up = acc + acc_conj;  // sigma from -inf to +inf
    cplx rhs = tl.S[i] + integral_up / (2.0 * M_PI * cplx(0, 1));
    r.main_eq_residuals.push_back(std::abs(ttl.S[i] - rhs) / std::max(std::abs(ttl.S[i]), 1e-300));
  }
  return r;
}

}  // namespace cyclegraph
