#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cyclegraph {

using cplx = std::complex<double>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Loop is edge 0, pendant edges are 1..m.
struct GraphGeometry {
  int m = 2;
  std::vector<double> T{1.0, 1.0, 1.0};
  double a = 2.0;

  void validate(bool loop_inversion = false) const {
    if (m < 1) throw Error("geometry: m must be >= 1");
    if (static_cast<int>(T.size()) != m + 1)
      throw Error("geometry: expected " + std::to_string(m + 1) + " edge lengths, got " +
                  std::to_string(T.size()));
    for (std::size_t j = 0; j < T.size(); ++j)
      if (!(T[j] > 0.0) || !std::isfinite(T[j]))
        throw Error("geometry: T[" + std::to_string(j) + "] must be positive");
    if (a == 0.0 || !std::isfinite(a)) throw Error("geometry: a must be nonzero");
    if (loop_inversion && std::abs(std::abs(a) - 1.0) == 0.0)
      throw Error("geometry: a = +-1 (periodic/antiperiodic loop) is not supported for loop inversion");
  }

  double total_length() const { return std::accumulate(T.begin(), T.end(), 0.0); }
  bool operator==(const GraphGeometry&) const = default;
};

// Samples on the uniform grid x_i = i*length/(n-1).
struct GridFunction {
  double length = 1.0;
  std::vector<double> values;
  bool mean_zero = false;

  GridFunction() = default;
  GridFunction(double len, std::vector<double> v, bool mz = false)
      : length(len), values(std::move(v)), mean_zero(mz) {
    if (values.size() < 2) throw Error("grid function needs at least 2 nodes");
    if (!(length > 0.0)) throw Error("grid function length must be positive");
  }

  template <class F>
  static GridFunction sample(double len, int n, F&& f) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = f(len * i / (n - 1));
    return GridFunction(len, std::move(v));
  }
  static GridFunction zero(double len, int n) { return GridFunction(len, std::vector<double>(n, 0.0), true); }

  int n() const { return static_cast<int>(values.size()); }
  double step() const { return length / (n() - 1); }
  double x(int i) const { return length * i / (n() - 1); }
  double operator[](int i) const { return values[i]; }

  // piecewise-linear interpolation, clamped to [0, length]
  double at(double xx) const {
    double u = std::clamp(xx / step(), 0.0, double(n() - 1));
    int i = std::min(static_cast<int>(u), n() - 2);
    double f = u - i;
    return (1.0 - f) * values[i] + f * values[i + 1];
  }
};

inline double trapezoid(const std::vector<double>& v, double h) {
  if (v.size() < 2) return 0.0;
  double s = 0.5 * (v.front() + v.back());
  for (std::size_t i = 1; i + 1 < v.size(); ++i) s += v[i];
  return s * h;
}

inline double integral(const GridFunction& f) { return trapezoid(f.values, f.step()); }
inline double mean(const GridFunction& f) { return integral(f) / f.length; }

inline double l2_norm(const GridFunction& f) {
  std::vector<double> sq(f.values.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = f.values[i] * f.values[i];
  return std::sqrt(trapezoid(sq, f.step()));
}

inline double l2_distance(const GridFunction& f, const GridFunction& g) {
  if (f.n() != g.n() || f.length != g.length) throw Error("l2_distance: grid mismatch");
  std::vector<double> sq(f.values.size());
  for (std::size_t i = 0; i < sq.size(); ++i) {
    double d = f.values[i] - g.values[i];
    sq[i] = d * d;
  }
  return std::sqrt(trapezoid(sq, f.step()));
}

inline GridFunction project_mean_zero(const GridFunction& f) {
  GridFunction g = f;
  double mu = mean(f);
  for (double& v : g.values) v -= mu;
  g.mean_zero = true;
  return g;
}

inline bool is_mean_zero(const GridFunction& f) {
  double mx = 0.0;
  for (double v : f.values) mx = std::max(mx, std::abs(v));
  return std::abs(integral(f)) <= 1e-10 * f.length * std::max(mx, 1e-300) || mx == 0.0;
}

inline GridFunction operator+(const GridFunction& f, const GridFunction& g) {
  if (f.n() != g.n()) throw Error("grid mismatch");
  GridFunction r = f;
  for (int i = 0; i < r.n(); ++i) r.values[i] += g.values[i];
  r.mean_zero = false;
  return r;
}

inline GridFunction operator-(const GridFunction& f, const GridFunction& g) {
  if (f.n() != g.n()) throw Error("grid mismatch");
  GridFunction r = f;
  for (int i = 0; i < r.n(); ++i) r.values[i] -= g.values[i];
  r.mean_zero = false;
  return r;
}

inline GridFunction scaled(const GridFunction& f, double s) {
  GridFunction r = f;
  for (double& v : r.values) v *= s;
  return r;
}

// Nodes for an edge of length T at the given density (nodes per unit length, counted as 512+1 on [0,1]).
inline int nodes_for_length(double T, int nodes_per_unit) {
  return std::max(5, static_cast<int>(std::lround((nodes_per_unit - 1) * T)) + 1);
}

struct PotentialSet {
  GraphGeometry geom;
  std::vector<GridFunction> q;

  static PotentialSet zero(const GraphGeometry& g, int nodes_per_unit = 513) {
    PotentialSet p{g, {}};
    for (double T : g.T) p.q.push_back(GridFunction::zero(T, nodes_for_length(T, nodes_per_unit)));
    return p;
  }

  void validate() const {
    geom.validate();
    if (static_cast<int>(q.size()) != geom.m + 1) throw Error("potential set: wrong number of edges");
    for (int j = 0; j <= geom.m; ++j) {
      if (std::abs(q[j].length - geom.T[j]) > 1e-12 * geom.T[j])
        throw Error("potential set: q[" + std::to_string(j) + "] length does not match T");
      for (double v : q[j].values)
        if (!std::isfinite(v)) throw Error("potential set: q[" + std::to_string(j) + "] not finite");
    }
  }

  void make_mean_zero() {
    for (auto& f : q) f = project_mean_zero(f);
  }
};

struct SpectralDataset {
  GraphGeometry geom;
  double window_lo = 0.0, window_hi = 0.0;  // eigenvalue scan window in lambda
  std::vector<double> lambda_main;
  std::vector<std::vector<double>> lambda_k;  // m lists
  std::vector<int> sigma;
  std::vector<double> remainder_grid;  // rho
  std::vector<double> kappa_main;
  std::vector<std::vector<double>> kappa_k;

  bool operator==(const SpectralDataset&) const = default;

  void validate() const {
    geom.validate();
    auto sorted = [](const std::vector<double>& v) { return std::is_sorted(v.begin(), v.end()); };
    if (!sorted(lambda_main)) throw Error("dataset: lambda_main not sorted ascending");
    if (static_cast<int>(lambda_k.size()) != geom.m) throw Error("dataset: expected m lambda_k lists");
    for (int k = 0; k < geom.m; ++k)
      if (!sorted(lambda_k[k])) throw Error("dataset: lambda_k[" + std::to_string(k + 1) + "] not sorted ascending");
    for (int s : sigma)
      if (s < -1 || s > 1) throw Error("dataset: sigma out of range");
    if (kappa_main.size() != remainder_grid.size()) throw Error("dataset: kappa_main length mismatch");
    if (static_cast<int>(kappa_k.size()) != geom.m) throw Error("dataset: expected m kappa_k lists");
    for (auto& v : kappa_k)
      if (v.size() != remainder_grid.size()) throw Error("dataset: kappa_k length mismatch");
    auto below = [&](const std::vector<double>& v) { return !v.empty() && v.front() < window_lo; };
    if (below(lambda_main)) throw Error("dataset: eigenvalue below documented lower bound");
    for (auto& v : lambda_k)
      if (below(v)) throw Error("dataset: eigenvalue below documented lower bound");
  }
};

}  // namespace cyclegraph
