#pragma once

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/toms748_solve.hpp>
#include <cstdint>

#include "core.hpp"

namespace cyclegraph {

struct EigenvalueList {
  std::vector<double> values;
  std::vector<int> multiplicity;  // aligned with values; a double zero appears twice with flag 2
  double window_lo = 0.0, window_hi = 0.0;
  double refinement_tol = 0.0;
  std::vector<std::string> warnings;

  std::size_t size() const { return values.size(); }
};

struct ZeroScanOptions {
  double step = 0.01;       // spacing in s = sign(lambda)*sqrt|lambda|
  double zero_tol = 1e-8;   // |f| <= zero_tol * local scale certifies a double zero
  int max_iter = 200;
  double scale_halfwidth = 3.2;  // s-neighbourhood defining the local scale
  long expected_count = -1;      // counting heuristic; < 0 disables
  int count_slack = 3;
};

// lambda <-> s with lambda = s|s|, so uniform s-steps are uniform rho-steps for lambda > 0.
inline double s_of_lambda(double lam) { return lam >= 0 ? std::sqrt(lam) : -std::sqrt(-lam); }
inline double lambda_of_s(double s) { return s * std::abs(s); }

inline std::vector<double> scan_nodes(double lam_lo, double lam_hi, double step) {
  if (!(lam_hi > lam_lo)) throw Error("zero scan: empty window");
  double s0 = s_of_lambda(lam_lo), s1 = s_of_lambda(lam_hi);
  auto n = static_cast<std::size_t>(std::ceil((s1 - s0) / step));
  n = std::max<std::size_t>(n, 2);
  std::vector<double> s(n + 1);
  for (std::size_t i = 0; i <= n; ++i) s[i] = s0 + (s1 - s0) * double(i) / double(n);
  return s;
}

namespace detail {

template <class F>
double refine_bracket(F& f, double la, double lb, double fa, double fb, int max_iter) {
  if (fa == 0.0) return la;
  if (fb == 0.0) return lb;
  std::uintmax_t it = max_iter;
  auto tol = boost::math::tools::eps_tolerance<double>(50);
  auto r = boost::math::tools::toms748_solve(f, la, lb, fa, fb, tol, it);
  return 0.5 * (r.first + r.second);
}

}  // namespace detail

// Zeros of f from samples v[i] = f(lambda_of_s(s[i])).
template <class F>
EigenvalueList zeros_from_samples(F&& f, const std::vector<double>& s, const std::vector<double>& v,
                                  const ZeroScanOptions& opt = {}) {
  EigenvalueList out;
  out.window_lo = lambda_of_s(s.front());
  out.window_hi = lambda_of_s(s.back());
  out.refinement_tol = std::ldexp(1.0, -49);
  auto fl = [&](double lam) { return f(lam); };
  auto fs = [&](double ss) { return f(lambda_of_s(ss)); };
  const std::size_t n = s.size();
  auto push = [&](double lam, int mult) {
    out.values.push_back(lam);
    out.multiplicity.push_back(mult);
  };
  int W = std::max(1, static_cast<int>(opt.scale_halfwidth / std::max(1e-12, s[1] - s[0])));
  for (std::size_t i = 0; i + 1 < n; ++i) {
    double a = v[i], b = v[i + 1];
    if (a == 0.0 && i > 0) continue;  // counted on the previous interval
    if ((a < 0 && b > 0) || (a > 0 && b < 0) || b == 0.0) {
      if (b == 0.0 && i + 2 < n && v[i + 2] != 0.0 && (a > 0) == (v[i + 2] > 0)) {
        push(lambda_of_s(s[i + 1]), 2);  // touching zero exactly on a node
        push(lambda_of_s(s[i + 1]), 2);
        continue;
      }
      push(detail::refine_bracket(fl, lambda_of_s(s[i]), lambda_of_s(s[i + 1]), a, b, opt.max_iter), 1);
      continue;
    }
    if (a == 0.0) {  // first node
      push(lambda_of_s(s[i]), 1);
      continue;
    }
    // interior local minimum of |f| without sign change: possible double zero or close pair
    if (i == 0 || i + 1 >= n) continue;
    double p = v[i - 1];
    if (!((p > 0) == (a > 0) && (a > 0) == (b > 0))) continue;
    if (!(std::abs(a) < std::abs(p) && std::abs(a) <= std::abs(b))) continue;
    double sgn = a > 0 ? 1.0 : -1.0;
    std::uintmax_t it = opt.max_iter;
    auto g = [&](double ss) { return sgn * fs(ss); };
    auto mn = boost::math::tools::brent_find_minima(g, s[i - 1], s[i + 1], 40, it);
    double scale = 0.0;
    for (long j = std::max<long>(0, long(i) - W); j <= std::min<long>(long(n) - 1, long(i) + W); ++j)
      scale = std::max(scale, std::abs(v[j]));
    // parabola-vertex refinement: brent alone only resolves a flat minimum to ~sqrt(eps)
    double sv = mn.first, gv = mn.second;
    for (int k = 0; k < 3; ++k) {
      const double hs = 1e-5;
      double gm = g(sv - hs), g0 = g(sv), gp = g(sv + hs);
      double den = gp - 2.0 * g0 + gm;
      if (!(den > 0.0)) break;
      double ns = sv - 0.5 * hs * (gp - gm) / den;
      if (!(ns > s[i - 1] && ns < s[i + 1])) break;
      double gn = g(ns);
      if (gn > g0) break;
      double moved = std::abs(ns - sv);
      sv = ns;
      gv = gn;
      if (moved < 1e-14) break;
    }
    if (gv <= mn.second) mn = {sv, gv};
    if (mn.second < 0.0) {
      double fm = sgn * mn.second;
      push(detail::refine_bracket(fl, lambda_of_s(s[i - 1]), lambda_of_s(mn.first), p, fm, opt.max_iter), 1);
      push(detail::refine_bracket(fl, lambda_of_s(mn.first), lambda_of_s(s[i + 1]), fm, v[i + 1], opt.max_iter), 1);
      // the interval (i, i+1) has no sign change; nothing else to do there
    } else if (mn.second <= opt.zero_tol * scale) {
      push(lambda_of_s(mn.first), 2);
      push(lambda_of_s(mn.first), 2);
    }
  }
  // keep sorted (pairs from a local minimum are inserted in order already)
  std::vector<std::size_t> idx(out.values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto x, auto y) { return out.values[x] < out.values[y]; });
  EigenvalueList sorted = out;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    sorted.values[k] = out.values[idx[k]];
    sorted.multiplicity[k] = out.multiplicity[idx[k]];
  }
  if (opt.expected_count >= 0 &&
      std::abs(long(sorted.values.size()) - opt.expected_count) > opt.count_slack)
    sorted.warnings.push_back("zero count " + std::to_string(sorted.values.size()) + " differs from expected " +
                              std::to_string(opt.expected_count) + "; scan step may be too coarse");
  return sorted;
}

template <class F>
EigenvalueList find_real_zeros(F&& f, double lam_lo, double lam_hi, const ZeroScanOptions& opt = {}) {
  auto s = scan_nodes(lam_lo, lam_hi, opt.step);
  std::vector<double> v(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) v[i] = f(lambda_of_s(s[i]));
  return zeros_from_samples(f, s, v, opt);
}

}  // namespace cyclegraph
