#include <gtest/gtest.h>

#include <cyclegraph/boundary_inverse.hpp>

#include <random>

#include "oracle.hpp"

using namespace cyclegraph;

namespace {

GridFunction smooth(double T, int n, double a, double b, double c) {
  return project_mean_zero(GridFunction::sample(T, n, [&](double x) {
    double w = 2 * M_PI * x / T;
    return a * std::cos(w) + b * std::sin(w) + c * std::cos(2 * w);
  }));
}

PotentialSet demo() {
  GraphGeometry g;
  auto p = PotentialSet::zero(g);
  p.q[0] = smooth(1, 513, 0.3, 0, 0);
  p.q[1] = smooth(1, 513, 0.4, 0.0, 0.1);
  p.q[2] = smooth(1, 513, -0.1, 0.2, -0.2);
  return p;
}

PotentialSet random_set(std::mt19937_64& rng, double norm) {
  std::normal_distribution<double> N;
  GraphGeometry g;
  auto p = PotentialSet::zero(g);
  for (auto& q : p.q) {
    q = smooth(1, 513, N(rng), N(rng), N(rng) / 3);
    q = scaled(q, norm / l2_norm(q));
  }
  return p;
}

ContourSpec contour() {
  ContourSpec c;
  c.tau = 1.0;
  return c;
}

}  // namespace

TEST(WeylDiff, IdenticalDataIsZero) {
  auto p = demo();
  ForwardSource a{CharFnSet(p)}, b{CharFnSet(p)};
  auto w = weyl_diff(a, b, 1, contour());
  for (auto v : w.values) EXPECT_EQ(v, cplx(0.0));
  EXPECT_EQ(weyl_l2_norm(w), 0.0);
  EXPECT_GT(w.min_abs_delta, 0.0);
}

TEST(WeylDiff, ConjugateSymmetry) {
  auto p = demo();
  ForwardSource data{CharFnSet(p)};
  ZeroPotentialSource ref(p.geom);
  for (double s : {0.0, 3.0, 40.0, 170.0}) {
    cplx th(s, 1.0), thm(-s, 1.0);
    cplx m1 = weyl_function(ref, 1, th * th) - weyl_function(data, 1, th * th);
    cplx m2 = weyl_function(ref, 1, thm * thm) - weyl_function(data, 1, thm * thm);
    EXPECT_LE(std::abs(m2 - std::conj(m1)), 1e-8 * std::max(1e-8, std::abs(m1)));
  }
}

TEST(WeylDiff, TailDecay) {
  auto p = demo();
  ForwardSource data{CharFnSet(p)};
  ZeroPotentialSource ref(p.geom);
  auto w = weyl_diff(data, ref, 1, contour());
  // envelope (block maxima) of |Mhat| against sigma on a log-log scale
  std::vector<double> x, y;
  const int B = 64;
  for (std::size_t j = 64; j + B <= w.values.size(); j += B) {
    double mx = 0;
    for (int i = 0; i < B; ++i) mx = std::max(mx, std::abs(w.values[j + i]));
    x.push_back(std::log(std::abs(w.theta[j + B / 2])));
    y.push_back(std::log(mx));
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = double(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sx += x[i], sy += y[i], sxx += x[i] * x[i], sxy += x[i] * y[i];
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  EXPECT_LE(slope, -0.9);
}

TEST(WeylDiff, ContourTooLow) {
  // deep wells: a negative eigenvalue; put the contour vertex exactly on it
  GraphGeometry g;
  auto p = PotentialSet::zero(g);
  for (auto& q : p.q) q = smooth(1, 513, -40, 0, 0);
  CharFnSet cf(p);
  auto z = find_real_zeros([&](double l) { return cf.values<double>(l).delta; }, spectral_lower_bound(p), 0.0);
  ASSERT_FALSE(z.values.empty());
  ContourSpec c;
  c.tau = std::sqrt(-z.values.front());
  ForwardSource data(cf);
  ZeroPotentialSource ref(g);
  try {
    weyl_diff(data, ref, 1, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("contour too low"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("node 0"), std::string::npos);
  }
}

TEST(AssembleF, ZeroAndSymmetry) {
  auto p = demo();
  ForwardSource data{CharFnSet(p)};
  ZeroPotentialSource ref(p.geom);
  auto c = contour();
  c.n_nodes = 1024;
  auto w0 = weyl_diff(ref, ref, 1, c);
  auto F0 = assemble_F(w0, GridFunction::zero(1, 129));
  EXPECT_EQ(F0.values.cwiseAbs().maxCoeff(), 0.0);
  auto w = weyl_diff(data, ref, 1, c);
  auto F = assemble_F(w, GridFunction::zero(1, 129));
  double mx = F.values.cwiseAbs().maxCoeff();
  EXPECT_GT(mx, 0.0);
  EXPECT_LE((F.values - F.values.transpose()).cwiseAbs().maxCoeff(), 1e-9 * mx);
  for (int i = 0; i < F.n(); ++i) EXPECT_EQ(F.values(i, 0), 0.0);  // S(0) = 0
}

TEST(AssembleF, BoundedByWeylNorm) {
  std::mt19937_64 rng(1);
  auto p = demo();
  ForwardSource ref{CharFnSet(p)};
  auto c = contour();
  c.n_nodes = 1024;
  std::vector<double> ratio;
  for (int t = 0; t < 5; ++t) {
    auto pt = p;
    auto d = random_set(rng, 0.05 * (t + 1));
    pt.q[1] = pt.q[1] + d.q[1];
    ForwardSource data{CharFnSet(pt)};
    auto w = weyl_diff(data, ref, 1, c);
    auto F = assemble_F(w, p.q[1].n() == 513 ? GridFunction(1.0, std::vector<double>(p.q[1].values)) : p.q[1]);
    ratio.push_back(F.values.cwiseAbs().maxCoeff() / weyl_l2_norm(w));
  }
  double lo = *std::min_element(ratio.begin(), ratio.end()), hi = *std::max_element(ratio.begin(), ratio.end());
  EXPECT_LE(hi / lo, 3.0);
}

TEST(SolveGL, ZeroKernel) {
  KernelGrid F;
  F.values = Eigen::MatrixXd::Zero(65, 65);
  auto r = solve_gl(F);
  EXPECT_EQ(r.K.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SolveGL, ResidualSmallAndBounded) {
  auto p = demo();
  ForwardSource data{CharFnSet(p)};
  ZeroPotentialSource ref(p.geom);
  auto c = contour();
  c.n_nodes = 1024;
  auto w = weyl_diff(data, ref, 2, c);
  auto F = assemble_F(w, GridFunction::zero(1, 129));
  auto r = solve_gl(F);
  double mF = F.values.cwiseAbs().maxCoeff(), mK = r.K.values.cwiseAbs().maxCoeff();
  EXPECT_LE(gl_residual(F, r.K), 1e-9 * mF);
  EXPECT_LE(mK, 2.0 * mF);
  for (int i = 0; i < F.n(); ++i) EXPECT_LE(std::abs(r.K.values(i, 0)), 1e-8 * mK);
  EXPECT_GE(r.max_condition, 1.0);
}

TEST(SolveGL, ConditionGuard) {
  // F = -2: I + F W loses rank at x = 1/2
  KernelGrid F;
  F.values = Eigen::MatrixXd::Constant(65, 65, -2.0);
  try {
    solve_gl(F);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("perturbation too large for local regime"), std::string::npos);
  }
}

TEST(RecoverQ, ZeroKernelGivesReference) {
  KernelGrid K;
  K.values = Eigen::MatrixXd::Zero(129, 129);
  auto q = smooth(1, 129, 0.3, 0.1, 0);
  auto r = recover_qk(K, q, false);
  EXPECT_EQ(r.q.values, q.values);
}

TEST(RecoverQ, Derivative4ExactOnCubics) {
  std::vector<double> f(20);
  double h = 0.1;
  for (int i = 0; i < 20; ++i) {
    double x = i * h;
    f[i] = 1 + 2 * x - x * x + 0.5 * x * x * x;
  }
  auto d = derivative4(f, h);
  for (int i = 0; i < 20; ++i) {
    double x = i * h;
    EXPECT_NEAR(d[i], 2 - 2 * x + 1.5 * x * x, 1e-11);
  }
}

TEST(PendantInverse, PerturbationRoundTrip) {
  // reference = unperturbed problem, data = q_1 + 0.05 cos(2 pi x)
  auto p = demo();
  auto pt = p;
  pt.q[1] = pt.q[1] + GridFunction::sample(1, 513, [](double x) { return 0.05 * std::cos(2 * M_PI * x); });
  ForwardSource data{CharFnSet(pt)}, ref{CharFnSet(p)};
  BoundaryInverseOptions o;
  o.contour = contour();
  o.recenter = false;
  auto r = invert_pendant(data, ref, p.q[1], 1, o);
  EXPECT_LE(l2_distance(r.rec.q, pt.q[1]) / l2_norm(pt.q[1]), 0.02);
  // K(x,x) = 1/2 int_0^x (qt - q): integrate the recovered difference
  auto F = assemble_F(weyl_diff(data, ref, 1, o.contour), p.q[1]);
  add_tail(F, r.tail, o.contour);
  auto K = solve_gl(F).K;
  auto diff = r.rec.q - p.q[1];
  double acc = 0, worst = 0, h = diff.step();
  for (int i = 1; i < diff.n(); ++i) {
    acc += 0.5 * h * (diff[i - 1] + diff[i]);
    worst = std::max(worst, std::abs(K.values(i, i) - 0.5 * acc));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(PendantInverse, ColdStartTailCorrection) {
  auto p = demo();
  ForwardSource data{CharFnSet(p)};
  ZeroPotentialSource ref(p.geom);
  BoundaryInverseOptions o;
  o.contour = contour();
  auto z = GridFunction::zero(1, 513);
  auto with = invert_pendant(data, ref, z, 2, o);
  o.tail_correction = false;
  auto without = invert_pendant(data, ref, z, 2, o);
  double n2 = l2_norm(p.q[2]);
  EXPECT_LE(l2_distance(with.rec.q, p.q[2]) / n2, 0.005);
  EXPECT_GT(l2_distance(without.rec.q, p.q[2]) / n2, 0.02);
  // the fitted zero-frequency coefficient carries the end value q(0) - q_ref(0)
  EXPECT_NEAR(with.tail.jump(), p.q[2][0], 0.02 * std::abs(p.q[2][0]));
}

TEST(PendantInverse, QuadratureEstimateBoundsDoubling) {
  auto p = demo();
  ForwardSource data{CharFnSet(p)};
  ZeroPotentialSource ref(p.geom);
  BoundaryInverseOptions o;
  o.contour = contour();
  o.contour.n_nodes = 2048;
  o.quadrature_estimate = true;
  auto z = GridFunction::zero(1, 257);
  auto r = invert_pendant(data, ref, z, 1, o);
  ASSERT_GE(r.quadrature_error, 0.0);
  o.contour.n_nodes = 4096;
  o.quadrature_estimate = false;
  auto r2 = invert_pendant(data, ref, z, 1, o);
  EXPECT_LE(l2_distance(r.rec.q, r2.rec.q), r.quadrature_error + 1e-12);
}

TEST(Tail, ExpintAgainstReferenceValues) {
  // reference values from an arbitrary-precision library
  struct C {
    cplx z, v;
  };
  for (auto c : std::vector<C>{{{1, 0}, {0.21938393439552027368, 0}},
                               {{0.5, 0.5}, {0.25786645713798380334, -0.39669043545581521376}},
                               {{3, 4}, {0.00086395395897958511158, 0.0087862083771974420418}},
                               {{-5, 0.1}, {-40.066618026157943556, -0.17669220132067429863}},
                               {{10, -200}, {2.0369916922642263821e-7, 9.9385832389821101729e-8}},
                               {{-2, -300}, {0.024625440213909227093, -0.00046215301752104503137}},
                               {{0.01, -0.02}, {3.2333099544943701135, 1.0872488264115450535}}})
    EXPECT_LE(std::abs(detail::expint_e1(c.z) - c.v), 1e-13 * std::abs(c.v)) << c.z;
}

TEST(Tail, TailIntegralAgainstQuadrature) {
  cplx thm(60.0, 1.0);
  for (double v : {0.0, 0.3, 2.0, -3.0}) {
    // int over sigma in [60, 60 + L] by Simpson, plus an asymptotic remainder e^{iv th}/(i v th^2)
    const double L = 4000.0;
    const int n = 400000;
    const double h = L / n;
    std::vector<double> re(n + 1), im(n + 1);
    for (int i = 0; i <= n; ++i) {
      cplx th = thm + i * h, f = std::exp(cplx(0, v) * th) / (th * th);
      re[i] = f.real();
      im[i] = f.imag();
    }
    cplx num(oracle::simpson(re, h), oracle::simpson(im, h));
    cplx end = thm + L;
    num += v == 0.0 ? 1.0 / end : -std::exp(cplx(0, v) * end) / (cplx(0, v) * end * end);
    EXPECT_LE(std::abs(detail::tail_integral(v, thm) - num), 1e-9) << v;
  }
}

TEST(Tail, FitRecoversModel) {
  ContourSpec c = contour();
  WeylDiffSamples w;
  w.contour = c;
  std::vector<double> f{0.0, 2.0, 3.0, 4.0};
  std::vector<cplx> B{{0.0, 0.2}, {0.05, -0.01}, {-0.3, 0.1}, {0.01, 0.02}};
  for (int j = 0; j < c.half_count(); ++j) {
    cplx th = c.theta(j), s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += B[i] * std::exp(cplx(0, 1) * th * f[i]);
    w.theta.push_back(th);
    w.values.push_back(s / th);
  }
  auto t = fit_weyl_tail(w, f);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_LE(std::abs(t.coef[i] - B[i]), 1e-10);
  EXPECT_LE(t.rms, 1e-10);
  EXPECT_NEAR(t.jump(), 0.4, 1e-10);
  auto fr = tail_frequencies(GraphGeometry{}, 1);
  EXPECT_EQ(fr.front(), 0.0);
  EXPECT_TRUE(std::find(fr.begin(), fr.end(), 3.0) != fr.end());  // 2 T_k + T_0
}

TEST(Msm, IdenticalPotentialsZero) {
  auto p = demo();
  ContourSpec c = contour();
  c.n_nodes = 1024;
  auto r = verify_msm_identity(p, p, 1, c);
  EXPECT_EQ(r.diff_l2, 0.0);
  EXPECT_LE(r.defect_l2, 1e-12);
  for (double v : r.main_eq_residuals) EXPECT_LE(v, 1e-12);
}

TEST(Msm, RandomPairWithinFivePercent) {
  std::mt19937_64 rng(2);
  auto q = random_set(rng, 0.8), qt = random_set(rng, 0.8);
  auto r = verify_msm_identity(q, qt, 1, contour());
  EXPECT_GT(r.diff_l2, 0.1);
  EXPECT_LE(r.relative, 0.05);
  for (double v : r.main_eq_residuals) EXPECT_LE(v, 1e-3);
}
