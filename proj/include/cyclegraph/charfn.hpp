#pragma once

#include <memory>

#include "ode.hpp"
#include "zeros.hpp"

namespace cyclegraph {

template <class Sc = cplx>
struct CharFnValues {
  Sc delta{}, d{}, h{}, H{};
  Sc dPi{}, dK{};
  std::vector<Sc> delta_k, dkPi, dkK;  // index k-1
  std::vector<EndpointData<Sc>> ep;    // per edge, ep[0] is the loop
};

// Builds every characteristic function from per-edge endpoint data.
template <class Sc>
CharFnValues<Sc> assemble(const GraphGeometry& g, std::vector<EndpointData<Sc>> ep) {
  const int m = g.m;
  const double a = g.a;
  CharFnValues<Sc> v;
  auto prod_except = [&](int r1, int r2) {
    Sc p(1);
    for (int j = 1; j <= m; ++j)
      if (j != r1 && j != r2) p *= ep[j].S;
    return p;
  };
  v.dPi = prod_except(0, 0);
  v.dK = Sc(0);
  for (int r = 1; r <= m; ++r) v.dK += ep[r].Sp * prod_except(r, 0);
  v.d = a * ep[0].C + ep[0].Sp / a;
  v.H = a * ep[0].C - ep[0].Sp / a;
  v.h = ep[0].S;
  v.delta = (v.d - 2.0) * v.dPi + a * v.h * v.dK;
  v.delta_k.resize(m);
  v.dkPi.resize(m);
  v.dkK.resize(m);
  for (int k = 1; k <= m; ++k) {
    Sc pk = prod_except(k, 0);
    Sc kk = ep[k].Cp * pk;
    for (int r = 1; r <= m; ++r)
      if (r != k) kk += ep[k].C * ep[r].Sp * prod_except(r, k);
    v.dkPi[k - 1] = ep[k].C * pk;
    v.dkK[k - 1] = kk;
    v.delta_k[k - 1] = (v.d - 2.0) * v.dkPi[k - 1] + a * v.h * kk;
  }
  v.ep = std::move(ep);
  return v;
}

class CharFnSet {
 public:
  explicit CharFnSet(PotentialSet p, OdeOptions opt = {}) : p_(std::move(p)), opt_(opt) { p_.geom.validate(); }

  const PotentialSet& potentials() const { return p_; }
  const GraphGeometry& geometry() const { return p_.geom; }
  const OdeOptions& ode_options() const { return opt_; }

  template <class Sc>
  CharFnValues<Sc> values(Sc lam) const {
    std::vector<EndpointData<Sc>> ep;
    for (const auto& q : p_.q) ep.push_back(integrate_fundamental<Sc>(q, lam, opt_));
    return assemble<Sc>(p_.geom, std::move(ep));
  }

  // Only the loop edge (d, h, H need nothing else).
  template <class Sc>
  EndpointData<Sc> loop(Sc lam) const { return integrate_fundamental<Sc>(p_.q[0], lam, opt_); }

  cplx eval_delta(cplx lam) const { return values(lam).delta; }
  cplx eval_delta_k(int k, cplx lam) const { return values(lam).delta_k.at(k - 1); }
  cplx eval_d(cplx lam) const {
    auto e = loop(lam);
    return p_.geom.a * e.C + e.Sp / p_.geom.a;
  }
  cplx eval_h(cplx lam) const { return loop(lam).S; }
  cplx eval_H(cplx lam) const {
    auto e = loop(lam);
    return p_.geom.a * e.C - e.Sp / p_.geom.a;
  }
  cplx eval_pi(cplx lam) const { return values(lam).dPi; }
  cplx eval_K(cplx lam) const { return values(lam).dK; }
  cplx eval_pi_k(int k, cplx lam) const { return values(lam).dkPi.at(k - 1); }
  cplx eval_K_k(int k, cplx lam) const { return values(lam).dkK.at(k - 1); }

 private:
  PotentialSet p_;
  OdeOptions opt_;
};

// cos(rho T), sin(rho T)/rho and rho sin(rho T) as functions of lambda = rho^2.
template <class Sc>
struct Trig {
  Sc cos, sinc, rsin;
};

template <class Sc>
Trig<Sc> trig(Sc lam, double T) {
  if (std::abs(lam) * T * T < 1e-12) {
    return {1.0 - lam * T * T / 2.0, T - lam * T * T * T / 6.0, lam * T};
  }
  if constexpr (detail::is_complex<Sc>::value) {
    Sc r = std::sqrt(lam);
    return {std::cos(r * T), std::sin(r * T) / r, r * std::sin(r * T)};
  } else {
    if (lam > 0) {
      double r = std::sqrt(lam);
      return {std::cos(r * T), std::sin(r * T) / r, r * std::sin(r * T)};
    }
    double k = std::sqrt(-lam);
    return {std::cosh(k * T), std::sinh(k * T) / k, -k * std::sinh(k * T)};
  }
}

// Zero-potential closed forms, written out term by term.
template <class Sc>
Sc eval_delta0(const GraphGeometry& g, Sc lam) {
  std::vector<Trig<Sc>> t;
  for (double T : g.T) t.push_back(trig(lam, T));
  Sc lead = (g.a + 1.0 / g.a) * t[0].cos - 2.0;
  Sc p(1);
  for (int j = 1; j <= g.m; ++j) p *= t[j].sinc;
  Sc sum(0);
  for (int r = 1; r <= g.m; ++r) {
    Sc pr(1);
    for (int j = 0; j <= g.m; ++j)
      if (j != r) pr *= t[j].sinc;
    sum += t[r].cos * pr;
  }
  return lead * p + g.a * sum;
}

template <class Sc>
Sc eval_delta0_k(const GraphGeometry& g, int k, Sc lam) {
  std::vector<Trig<Sc>> t;
  for (double T : g.T) t.push_back(trig(lam, T));
  Sc lead = (g.a + 1.0 / g.a) * t[0].cos - 2.0;
  Sc p(1);
  for (int j = 1; j <= g.m; ++j)
    if (j != k) p *= t[j].sinc;
  Sc p0(1);
  for (int j = 0; j <= g.m; ++j)
    if (j != k) p0 *= t[j].sinc;
  Sc sum(0);
  for (int r = 1; r <= g.m; ++r) {
    if (r == k) continue;
    Sc pr(1);
    for (int j = 0; j <= g.m; ++j)
      if (j != r && j != k) pr *= t[j].sinc;
    sum += t[r].cos * pr;
  }
  return lead * t[k].cos * p + g.a * (-t[k].rsin * p0 + t[k].cos * sum);
}

// Data access for the inverse steps: Delta and Delta_k as analytic functions.
class CharSource {
 public:
  virtual ~CharSource() = default;
  virtual const GraphGeometry& geometry() const = 0;
  virtual cplx delta(cplx lam) const = 0;
  virtual cplx delta_k(int k, cplx lam) const = 0;
  // Delta and all Delta_k at once.
  virtual void eval(cplx lam, cplx& D, std::vector<cplx>& Dk) const {
    D = delta(lam);
    Dk.resize(geometry().m);
    for (int k = 1; k <= geometry().m; ++k) Dk[k - 1] = delta_k(k, lam);
  }
};

class ForwardSource : public CharSource {
 public:
  explicit ForwardSource(CharFnSet cf) : cf_(std::move(cf)) {}
  const GraphGeometry& geometry() const override { return cf_.geometry(); }
  cplx delta(cplx lam) const override { return cf_.values(lam).delta; }
  cplx delta_k(int k, cplx lam) const override { return cf_.values(lam).delta_k.at(k - 1); }
  void eval(cplx lam, cplx& D, std::vector<cplx>& Dk) const override {
    auto v = cf_.values(lam);
    D = v.delta;
    Dk = v.delta_k;
  }
  const CharFnSet& charfns() const { return cf_; }

 private:
  CharFnSet cf_;
};

class ZeroPotentialSource : public CharSource {
 public:
  explicit ZeroPotentialSource(GraphGeometry g) : g_(std::move(g)) {}
  const GraphGeometry& geometry() const override { return g_; }
  cplx delta(cplx lam) const override { return eval_delta0(g_, lam); }
  cplx delta_k(int k, cplx lam) const override { return eval_delta0_k(g_, k, lam); }

 private:
  GraphGeometry g_;
};

// Spectral lower bound used for scan windows: -(max_j ||q_j|| T_j + |a| + 1/|a| + 2)^2.
inline double spectral_lower_bound(const PotentialSet& p) {
  double mx = 0.0;
  for (int j = 0; j <= p.geom.m; ++j) mx = std::max(mx, l2_norm(p.q[j]) * p.geom.T[j]);
  double b = mx + std::abs(p.geom.a) + 1.0 / std::abs(p.geom.a) + 2.0;
  return -b * b;
}

struct SigmaReport {
  std::vector<int> sigma;
  std::vector<double> d, H;
  double max_identity_defect = 0.0;  // |d^2 - H^2 - 4|
};

inline SigmaReport signs_sigma(const CharFnSet& cf, const EigenvalueList& dirichlet, double zero_tol = 1e-6) {
  SigmaReport r;
  const double a = cf.geometry().a;
  for (std::size_t n = 0; n < dirichlet.values.size(); ++n) {
    auto e = cf.loop<double>(dirichlet.values[n]);
    double d = a * e.C + e.Sp / a, H = a * e.C - e.Sp / a;
    double defect = std::abs(d * d - H * H - 4.0);
    r.max_identity_defect = std::max(r.max_identity_defect, defect);
    if (defect > 1e-6)
      throw Error("signs_sigma: data inconsistency at n=" + std::to_string(n + 1) +
                  ": d^2 - H^2 - 4 = " + std::to_string(d * d - H * H - 4.0));
    r.d.push_back(d);
    r.H.push_back(H);
    r.sigma.push_back(std::abs(H) <= zero_tol * (1.0 + std::abs(d)) ? 0 : (H > 0 ? 1 : -1));
  }
  return r;
}

// rho^{m+1}(Delta - Delta0)(rho^2) (k = 0) or rho^m(Delta_k - Delta0_k)(rho^2) on a real rho grid.
inline std::vector<double> pw_remainder(const CharFnSet& cf, int k, const std::vector<double>& rho) {
  const auto& g = cf.geometry();
  std::vector<double> out(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) {
    double r = rho[i];
    if (r == 0.0) {
      out[i] = 0.0;
      continue;
    }
    double lam = r * r;
    auto v = cf.values<double>(lam);
    if (k == 0)
      out[i] = std::pow(r, g.m + 1) * (v.delta - eval_delta0<double>(g, lam));
    else
      out[i] = std::pow(r, g.m) * (v.delta_k[k - 1] - eval_delta0_k<double>(g, k, lam));
  }
  return out;
}

namespace detail {
inline double l2_diff(const std::vector<double>& x, const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    double u = a[i] - b[i], w = a[i + 1] - b[i + 1];
    s += 0.5 * (u * u + w * w) * (x[i + 1] - x[i]);
  }
  return std::sqrt(s);
}
}  // namespace detail

struct DeltaParts {
  double main = 0.0;
  std::vector<double> k;  // per pendant edge
  double total() const {
    double t = main;
    for (double v : k) t += v;
    return t;
  }
};

inline DeltaParts delta_parts(const SpectralDataset& d1, const SpectralDataset& d2) {
  if (!(d1.geom == d2.geom)) throw Error("delta_metric: geometry mismatch");
  if (d1.remainder_grid != d2.remainder_grid) throw Error("delta_metric: remainder grid mismatch");
  DeltaParts p;
  p.main = detail::l2_diff(d1.remainder_grid, d1.kappa_main, d2.kappa_main);
  for (int k = 0; k < d1.geom.m; ++k) p.k.push_back(detail::l2_diff(d1.remainder_grid, d1.kappa_k[k], d2.kappa_k[k]));
  return p;
}

inline double delta_metric(const SpectralDataset& d1, const SpectralDataset& d2) { return delta_parts(d1, d2).total(); }

// Delta(lambda) ~ ref(lambda) * prod_n (lambda_n - lambda)/(lambda0_n - lambda), zeros paired in sorted order.
class HadamardProduct {
 public:
  HadamardProduct(std::function<cplx(cplx)> ref, std::vector<double> data_zeros, std::vector<double> ref_zeros)
      : ref_(std::move(ref)), z_(std::move(data_zeros)), z0_(std::move(ref_zeros)) {
    std::size_t n = std::min(z_.size(), z0_.size());
    z_.resize(n);
    z0_.resize(n);
  }

  cplx operator()(cplx lam) const {
    double eta = 1e-7 * (1.0 + std::abs(lam));
    for (double z : z0_)
      if (std::abs(lam - z) < eta) return 0.5 * (raw(lam + eta) + raw(lam - eta));  // removable point
    return raw(lam);
  }

  std::size_t size() const { return z_.size(); }
  const std::vector<double>& zeros() const { return z_; }
  const std::vector<double>& reference_zeros() const { return z0_; }

  // First-order size of the neglected tail at lambda, estimated from the last pairs' shifts.
  double tail_estimate(cplx lam, std::size_t last = 20) const {
    if (z_.empty()) return 0.0;
    std::size_t n = z_.size(), k0 = n > last ? n - last : 0;
    double shift = 0.0;
    for (std::size_t i = k0; i < n; ++i) shift = std::max(shift, std::abs(z_[i] - z0_[i]));
    double top = std::abs(z0_.back() - lam);
    // sum over n > N of shift/(lambda0_n - lambda), lambda0_n spaced like (pi n)^2: ~ shift * sqrt(top)/top
    return shift / std::sqrt(std::max(top, 1.0));
  }

 private:
  cplx raw(cplx lam) const {
    cplx p = ref_(lam);
    for (std::size_t i = 0; i < z_.size(); ++i) p *= (z_[i] - lam) / (z0_[i] - lam);
    return p;
  }
  std::function<cplx(cplx)> ref_;
  std::vector<double> z_, z0_;
};

struct HadamardOptions {
  double scan_step = 0.01;
  double zero_tol = 1e-8;
  double margin = 25.0;  // extra rho range scanned for reference zeros
};

// Zeros of the zero-potential characteristic functions (k = 0: Delta0), sorted with multiplicity.
inline std::vector<double> reference_zeros(const GraphGeometry& g, int k, double lam_lo, double lam_hi,
                                           const HadamardOptions& opt = {}) {
  ZeroScanOptions zo;
  zo.step = opt.scan_step;
  zo.zero_tol = opt.zero_tol;
  auto f = [&](double lam) { return k == 0 ? eval_delta0<double>(g, lam) : eval_delta0_k<double>(g, k, lam); };
  return find_real_zeros(f, lam_lo, lam_hi, zo).values;
}

// Rebuilds Delta and Delta_k from a dataset's eigenvalue lists (zero potential as reference).
class HadamardSource : public CharSource {
 public:
  explicit HadamardSource(const SpectralDataset& d, const HadamardOptions& opt = {}) : g_(d.geom) {
    auto top = [&](const std::vector<double>& v) {
      double r = s_of_lambda(v.empty() ? 1.0 : std::max(v.back(), 1.0)) + opt.margin;
      return r * r;
    };
    double lo = std::min(d.window_lo, -1.0);
    auto build = [&](int k, const std::vector<double>& z) {
      auto z0 = reference_zeros(g_, k, lo, top(z), opt);
      if (z0.size() < z.size())
        throw Error("rebuild_charfn_from_zeros: reference has fewer zeros than data (" + std::to_string(z0.size()) +
                    " < " + std::to_string(z.size()) + ")");
      auto ref = [g = g_, k](cplx lam) { return k == 0 ? eval_delta0(g, lam) : eval_delta0_k(g, k, lam); };
      return HadamardProduct(ref, z, z0);
    };
    main_ = std::make_unique<HadamardProduct>(build(0, d.lambda_main));
    for (int k = 1; k <= g_.m; ++k) k_.push_back(std::make_unique<HadamardProduct>(build(k, d.lambda_k[k - 1])));
  }

  const GraphGeometry& geometry() const override { return g_; }
  cplx delta(cplx lam) const override { return (*main_)(lam); }
  cplx delta_k(int k, cplx lam) const override { return (*k_.at(k - 1))(lam); }
  const HadamardProduct& main_product() const { return *main_; }
  const HadamardProduct& k_product(int k) const { return *k_.at(k - 1); }

 private:
  GraphGeometry g_;
  std::unique_ptr<HadamardProduct> main_;
  std::vector<std::unique_ptr<HadamardProduct>> k_;
};

inline HadamardProduct rebuild_charfn_from_zeros(const EigenvalueList& zeros, std::function<cplx(cplx)> reference,
                                                 const std::vector<double>& reference_zeros) {
  return HadamardProduct(std::move(reference), zeros.values, reference_zeros);
}

struct ForwardOptions {
  double rho_eig_max = 400.0;     // eigenvalues of L, L_k up to rho^2
  double scan_step = 0.01;        // rho spacing of the sign-change scan
  double zero_tol = 1e-8;
  int n_sigma = 96;               // Dirichlet zeros of the loop (signs)
  double remainder_radius = 188.49555921538757;  // 60 pi
  int remainder_points = 4001;    // symmetric grid on [-R, R]
  double sigma_zero_tol = 1e-6;
  OdeOptions ode;
};

struct ForwardResult {
  SpectralDataset data;
  EigenvalueList dirichlet;  // loop Dirichlet zeros used for sigma
  SigmaReport sigma;
  std::vector<std::string> warnings;
};

inline EigenvalueList loop_dirichlet_zeros(const CharFnSet& cf, int count, double lam_lo, double step = 0.01,
                                           double zero_tol = 1e-8) {
  ZeroScanOptions zo;
  zo.step = step;
  zo.zero_tol = zero_tol;
  auto h = [&](double lam) { return cf.loop<double>(lam).S; };
  double T0 = cf.geometry().T[0];
  double rho_hi = M_PI * (count + 1.5) / T0;
  auto z = find_real_zeros(h, lam_lo, rho_hi * rho_hi, zo);
  if (static_cast<int>(z.values.size()) < count)
    throw Error("loop Dirichlet scan found " + std::to_string(z.values.size()) + " zeros, expected " +
                std::to_string(count));
  z.values.resize(count);
  z.multiplicity.resize(count);
  return z;
}

inline ForwardResult compute_dataset(const PotentialSet& p, const ForwardOptions& opt = {}) {
  p.validate();
  CharFnSet cf(p, opt.ode);
  const auto& g = p.geom;
  ForwardResult res;
  SpectralDataset& d = res.data;
  d.geom = g;
  d.window_lo = spectral_lower_bound(p);
  d.window_hi = opt.rho_eig_max * opt.rho_eig_max;

  // one scan shared by Delta and every Delta_k
  auto s = scan_nodes(d.window_lo, d.window_hi, opt.scan_step);
  std::vector<std::vector<double>> v(g.m + 1, std::vector<double>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto val = cf.values<double>(lambda_of_s(s[i]));
    v[0][i] = val.delta;
    for (int k = 1; k <= g.m; ++k) v[k][i] = val.delta_k[k - 1];
  }
  ZeroScanOptions zo;
  zo.step = opt.scan_step;
  zo.zero_tol = opt.zero_tol;
  for (int k = 0; k <= g.m; ++k) {
    auto f = [&](double lam) {
      auto val = cf.values<double>(lam);
      return k == 0 ? val.delta : val.delta_k[k - 1];
    };
    zo.expected_count = static_cast<long>(reference_zeros(g, k, d.window_lo, d.window_hi).size());
    zo.count_slack = g.m + 2;
    auto z = zeros_from_samples(f, s, v[k], zo);
    for (auto& w : z.warnings) res.warnings.push_back((k == 0 ? "Delta: " : "Delta_" + std::to_string(k) + ": ") + w);
    if (k == 0)
      d.lambda_main = z.values;
    else
      d.lambda_k.push_back(z.values);
  }

  res.dirichlet = loop_dirichlet_zeros(cf, opt.n_sigma, d.window_lo, opt.scan_step, opt.zero_tol);
  res.sigma = signs_sigma(cf, res.dirichlet, opt.sigma_zero_tol);
  d.sigma = res.sigma.sigma;

  // remainders: compute rho >= 0 and use the parity rho^{m+1}(...) -> (-1)^{m+1}
  const int np = opt.remainder_points;
  const double R = opt.remainder_radius;
  d.remainder_grid.resize(np);
  // exactly symmetric: the negative half mirrors the positive one
  for (int i = np / 2; i < np; ++i) d.remainder_grid[i] = R * (2.0 * i - (np - 1)) / (np - 1);
  for (int i = 0; i < np / 2; ++i) d.remainder_grid[i] = -d.remainder_grid[np - 1 - i];
  std::vector<double> pos;
  for (double r : d.remainder_grid)
    if (r >= 0) pos.push_back(r);
  auto fill = [&](int k, std::vector<double>& out) {
    auto vals = pw_remainder(cf, k, pos);
    int pw = k == 0 ? g.m + 1 : g.m;
    double sign = (pw % 2 == 0) ? 1.0 : -1.0;
    out.resize(np);
    std::size_t off = d.remainder_grid.size() - pos.size();
    for (std::size_t i = 0; i < pos.size(); ++i) out[off + i] = vals[i];
    for (std::size_t i = 0; i < off; ++i) out[i] = sign * out[np - 1 - i];
  };
  fill(0, d.kappa_main);
  d.kappa_k.resize(g.m);
  for (int k = 1; k <= g.m; ++k) fill(k, d.kappa_k[k - 1]);
  d.validate();
  return res;
}

}  // namespace cyclegraph
