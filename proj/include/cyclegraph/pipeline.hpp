#pragma once

#include <atomic>
#include <chrono>
#include <iomanip>
#include <memory>
#include <mutex>
#include <random>
#include <thread>

#include "config.hpp"
#include "dataset_io.hpp"

namespace cyclegraph {

// ---------- potentials ----------

// Fixed smooth mean-zero potentials for the demo geometry (and any m: odd/even pendants alternate).
inline PotentialSet demo_potentials(const GraphGeometry& g, int nodes_per_unit = 513) {
  auto p = PotentialSet::zero(g, nodes_per_unit);
  const double tp = 2.0 * M_PI;
  for (int j = 0; j <= g.m; ++j) {
    double T = g.T[j];
    int n = p.q[j].n();
    if (j == 0)
      p.q[0] = GridFunction::sample(T, n, [&](double x) { return 0.3 * std::cos(tp * x / T); });
    else if (j % 2 == 1)
      p.q[j] = GridFunction::sample(
          T, n, [&](double x) { return 0.4 * std::cos(tp * x / T) + 0.1 * std::sin(2 * tp * x / T); });
    else
      p.q[j] = GridFunction::sample(
          T, n, [&](double x) { return 0.2 * std::sin(tp * x / T) - 0.2 * std::cos(2 * tp * x / T); });
  }
  p.make_mean_zero();
  return p;
}

// sum_{j<=modes} (a_j cos + b_j sin)(2 pi j x/T) / j^2, a_j, b_j ~ N(0,1), rescaled to L2 norm `norm`.
inline GridFunction random_potential(double T, int n, std::mt19937_64& rng, double norm, int modes = 4) {
  std::normal_distribution<double> N01;
  std::vector<double> a(modes), b(modes);
  for (int j = 0; j < modes; ++j) {
    a[j] = N01(rng) / double((j + 1) * (j + 1));
    b[j] = N01(rng) / double((j + 1) * (j + 1));
  }
  auto f = GridFunction::sample(T, n, [&](double x) {
    double s = 0.0;
    for (int j = 0; j < modes; ++j) {
      double w = 2.0 * M_PI * (j + 1) * x / T;
      s += a[j] * std::cos(w) + b[j] * std::sin(w);
    }
    return s;
  });
  f = project_mean_zero(f);
  double nn = l2_norm(f);
  return nn > 0 ? scaled(f, norm / nn) : f;
}

inline PotentialSet random_potentials(const GraphGeometry& g, int nodes_per_unit, std::mt19937_64& rng, double norm,
                                      int modes = 4) {
  auto p = PotentialSet::zero(g, nodes_per_unit);
  for (int j = 0; j <= g.m; ++j) p.q[j] = random_potential(g.T[j], p.q[j].n(), rng, norm, modes);
  return p;
}

inline PotentialSet config_potentials(const RunConfig& cfg) {
  if (cfg.potentials == "demo") return demo_potentials(cfg.geom, cfg.nodes_per_unit);
  std::mt19937_64 rng(cfg.seed);
  return random_potentials(cfg.geom, cfg.nodes_per_unit, rng, cfg.random_norm, cfg.random_modes);
}

// ---------- perturbation ----------

// w_j: Gaussian bump at bump_center*T_j, width bump_width*T_j, projected to mean zero.
inline GridFunction bump(double T, int n, double center = 0.5, double width = 0.1) {
  return project_mean_zero(GridFunction::sample(T, n, [&](double x) {
    double u = (x / T - center) / width;
    return std::exp(-0.5 * u * u);
  }));
}

inline PotentialSet perturb_potentials(const PotentialSet& p, double eps, const RunConfig& cfg) {
  PotentialSet out = p;
  for (int j = 0; j <= p.geom.m; ++j)
    out.q[j] = project_mean_zero(p.q[j] + scaled(bump(p.geom.T[j], p.q[j].n(), cfg.bump_center, cfg.bump_width), eps));
  return out;
}

inline ForwardOptions forward_options(const RunConfig& cfg) {
  auto f = cfg.forward;
  f.ode = cfg.ode;
  f.n_sigma = std::max(f.n_sigma, cfg.loop_pairs);
  f.sigma_zero_tol = cfg.sigma_zero_tol;
  return f;
}

// Forward data; the "perturb" contract: sign flips are reported, not silently accepted.
inline ForwardResult forward(const PotentialSet& p, const RunConfig& cfg) { return compute_dataset(p, forward_options(cfg)); }

struct PerturbResult {
  PotentialSet q;
  ForwardResult fwd;
  double delta = 0.0;
};

inline PerturbResult perturb(const PotentialSet& p, const SpectralDataset& base, double eps, const RunConfig& cfg) {
  PerturbResult r;
  r.q = eps == 0.0 ? p : perturb_potentials(p, eps, cfg);
  r.fwd = forward(r.q, cfg);
  const auto& s0 = base.sigma;
  const auto& s1 = r.fwd.data.sigma;
  for (std::size_t n = 0; n < std::min(s0.size(), s1.size()); ++n)
    if (s0[n] != s1[n])
      throw Error("perturb: epsilon too large for sign preservation (sigma_" + std::to_string(n + 1) +
                  " changed from " + std::to_string(s0[n]) + " to " + std::to_string(s1[n]) +
                  "); try a smaller epsilon");
  r.delta = delta_metric(base, r.fwd.data);
  return r;
}

// Experimental: direct data perturbation. Each eigenvalue moves by eps*N(0,1) in rho = sqrt(lambda);
// remainders are re-sampled from the rebuilt characteristic functions. No realizability guarantee.
inline SpectralDataset jitter_dataset(const SpectralDataset& d, double eps, std::mt19937_64& rng) {
  std::normal_distribution<double> N01;
  SpectralDataset out = d;
  auto jit = [&](std::vector<double>& v) {
    for (auto& l : v) l = lambda_of_s(s_of_lambda(l) + eps * N01(rng));
    std::sort(v.begin(), v.end());
  };
  jit(out.lambda_main);
  for (auto& v : out.lambda_k) jit(v);
  out.window_lo = std::min({out.window_lo, out.lambda_main.empty() ? 0.0 : out.lambda_main.front()});
  for (auto& v : out.lambda_k)
    if (!v.empty()) out.window_lo = std::min(out.window_lo, v.front());
  HadamardSource src(out);
  const auto& g = d.geom;
  for (std::size_t i = 0; i < d.remainder_grid.size(); ++i) {
    double r = d.remainder_grid[i];
    if (r == 0.0) continue;
    double lam = r * r;
    out.kappa_main[i] = std::pow(r, g.m + 1) * (src.delta(lam).real() - eval_delta0<double>(g, lam));
    for (int k = 1; k <= g.m; ++k)
      out.kappa_k[k - 1][i] = std::pow(r, g.m) * (src.delta_k(k, lam).real() - eval_delta0_k<double>(g, k, lam));
  }
  out.validate();
  return out;
}

// ---------- inversion driver ----------

// Replaces the first/last `w` nodes by a cubic least-squares fit over the next `fit` nodes.
inline GridFunction repair_ends(GridFunction f, bool at_start, bool at_end, double frac, double fit_frac) {
  const int n = f.n();
  const int w = static_cast<int>(std::lround(frac * (n - 1)));
  const int fw = std::max(8, static_cast<int>(std::lround(fit_frac * (n - 1))));
  if (w <= 0 || 2 * (w + fw) > n) return f;
  auto fix = [&](bool left) {
    Eigen::MatrixXd A(fw, 4);
    Eigen::VectorXd b(fw);
    double x0 = left ? f.x(w) : f.x(n - 1 - w);
    for (int i = 0; i < fw; ++i) {
      int idx = left ? w + i : n - 1 - w - i;
      double u = (f.x(idx) - x0) / f.length;
      for (int p = 0; p < 4; ++p) A(i, p) = std::pow(u, p);
      b(i) = f.values[idx];
    }
    Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
    for (int i = 0; i < w; ++i) {
      int idx = left ? i : n - 1 - i;
      double u = (f.x(idx) - x0) / f.length, s = 0.0;
      for (int p = 0; p < 4; ++p) s += c(p) * std::pow(u, p);
      f.values[idx] = s;
    }
  };
  if (at_start) fix(true);
  if (at_end) fix(false);
  return project_mean_zero(f);
}

// Lowest eigenvalue over Delta and all Delta_k (scan from the crude bound).
inline double lowest_eigenvalue(const PotentialSet& p, const OdeOptions& ode = {}) {
  CharFnSet cf(p, ode);
  double lo = spectral_lower_bound(p);
  double Tm = *std::max_element(p.geom.T.begin(), p.geom.T.end());
  double hi = std::pow(2.0 * M_PI / Tm, 2) + 1.0;
  double best = hi;
  for (int k = 0; k <= p.geom.m; ++k) {
    auto f = [&](double lam) {
      auto v = cf.values<double>(lam);
      return k == 0 ? v.delta : v.delta_k[k - 1];
    };
    ZeroScanOptions zo;
    auto z = find_real_zeros(f, lo, hi, zo);
    if (!z.values.empty()) best = std::min(best, z.values.front());
  }
  return best;
}

inline double dataset_lambda_min(const SpectralDataset& d) {
  double m = std::numeric_limits<double>::infinity();
  if (!d.lambda_main.empty()) m = d.lambda_main.front();
  for (auto& v : d.lambda_k)
    if (!v.empty()) m = std::min(m, v.front());
  return std::isfinite(m) ? m : 0.0;
}

// Loop potential on [0,T0] <-> normalised potential on [0,1]: qbar(s) = T0^2 q0(T0 s).
inline GridFunction normalise_loop(const GridFunction& q0) {
  double T0 = q0.length;
  return GridFunction(1.0, scaled(q0, T0 * T0).values);
}
inline GridFunction denormalise_loop(const GridFunction& qbar, double T0) {
  return GridFunction(T0, scaled(qbar, 1.0 / (T0 * T0)).values);
}

// A fixed, known reference problem (potentials + characteristic functions).
struct ReferenceProblem {
  PotentialSet q;
  std::shared_ptr<const CharSource> src;
  double lambda_min = 0.0;
};

struct PassReport {
  int pass = 0;
  double tau = 0.0;
  std::vector<double> pendant_condition, pendant_weyl_l2, pendant_tail_rms;
  double kernel_min_E = 0.0, kernel_alpha = 0.0, kernel_lsq_condition = 0.0;
  double loop_condition = 0.0;
  double seconds = 0.0;
};

struct InversionReport {
  PotentialSet q;
  std::vector<PassReport> passes;
  SigmaCheck sigma_check;
  std::vector<std::string> warnings;
};

namespace detail {
template <class F>
auto step(const std::string& label, const std::string& hint, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw Error(label + ": " + e.what() + (hint.empty() ? "" : " [hint: " + hint + "]"));
  }
}

inline bool is_zero(const GridFunction& f) {
  return std::all_of(f.values.begin(), f.values.end(), [](double v) { return v == 0.0; });
}
}  // namespace detail

// One pass of the three-step algorithm against a fixed reference.
inline PassReport inversion_pass(const CharSource& data, const std::vector<int>& sigma, double data_lambda_min,
                                 const ReferenceProblem& ref, const RunConfig& cfg, PotentialSet& est) {
  using detail::step;
  auto t0 = std::chrono::steady_clock::now();
  const auto& g = data.geometry();
  PassReport rep;
  rep.tau = cfg.tau > 0 ? cfg.tau : choose_tau(std::min(data_lambda_min, ref.lambda_min), cfg.tau_margin);
  BoundaryInverseOptions bo;
  bo.contour = ContourSpec{rep.tau, cfg.sigma_max, cfg.contour_nodes};
  bo.gl.max_condition = cfg.gl_max_condition;
  bo.ode = cfg.ode;
  bo.tail_correction = cfg.tail_correction;
  est = ref.q;
  for (int k = 1; k <= g.m; ++k) {
    auto r = step("step 1 (boundary inverse, edge " + std::to_string(k) + ")",
                  "raise contour.tau or check that the dataset matches the geometry",
                  [&] { return invert_pendant(data, *ref.src, ref.q.q[k], k, bo); });
    est.q[k] = r.rec.q;
    rep.pendant_condition.push_back(r.max_condition);
    rep.pendant_weyl_l2.push_back(r.weyl_l2);
    rep.pendant_tail_rms.push_back(r.tail.rms);
  }
  auto kopt = cfg.kernels;
  kopt.grid_nodes = est.q[0].n();
  kopt.ode = cfg.ode;
  auto L = step("step 2 (vertex transition)", "increase riesz.alpha to move the nodes off pendant zeros",
                [&] { return extract_loop_kernels(data, est, cfg.riesz, kopt); });
  rep.kernel_min_E = L.min_E;
  rep.kernel_alpha = L.alpha;
  rep.kernel_lsq_condition = L.lsq_condition;
  const int N = cfg.loop_pairs;
  if (static_cast<int>(sigma.size()) < N)
    throw Error("step 3 (loop inverse): dataset has " + std::to_string(sigma.size()) + " signs, need " +
                std::to_string(N) + " [hint: regenerate with forward.n_sigma >= loop.gl_pairs]");
  auto dd = step("step 3 (loop inverse)", "dataset may be tampered or not realizable", [&] {
    auto z = dirichlet_from_h(L, N);
    QuasiData qd{[&](double l) { return L.d(l).real(); }, z.values,
                 std::vector<int>(sigma.begin(), sigma.begin() + N), g.a};
    return quasi_to_dirichlet(qd, [&](double l) { return L.h_dot(l).real(); });
  });
  auto qbar_ref = normalise_loop(ref.q.q[0]);
  auto rec = step("step 3 (loop inverse)", "lower loop.gl_pairs or raise contour.gl_max_condition", [&] {
    auto rp = detail::is_zero(qbar_ref) ? zero_dirichlet_pairs(N) : dirichlet_pairs(qbar_ref, N, cfg.ode);
    return gl_dirichlet_reconstruct(dd, N, qbar_ref, rp, bo.gl, cfg.ode);
  });
  est.q[0] = denormalise_loop(rec.q0, g.T[0]);
  rep.loop_condition = rec.max_condition;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline ReferenceProblem zero_reference(const GraphGeometry& g, int nodes_per_unit) {
  ReferenceProblem r{PotentialSet::zero(g, nodes_per_unit), std::make_shared<ZeroPotentialSource>(g), 0.0};
  auto z = reference_zeros(g, 0, -std::pow(std::abs(g.a) + 1.0 / std::abs(g.a) + 2.0, 2), 1.0);
  for (int k = 1; k <= g.m; ++k) {
    auto zk = reference_zeros(g, k, -std::pow(std::abs(g.a) + 1.0 / std::abs(g.a) + 2.0, 2), 1.0);
    if (!zk.empty() && (z.empty() || zk.front() < z.front())) z = zk;
  }
  r.lambda_min = z.empty() ? 1.0 : z.front();
  return r;
}

inline ReferenceProblem forward_reference(PotentialSet q, const OdeOptions& ode) {
  ReferenceProblem r;
  r.lambda_min = lowest_eigenvalue(q, ode);
  r.src = std::make_shared<ForwardSource>(CharFnSet(q, ode));
  r.q = std::move(q);
  return r;
}

// Full inversion. Cold start: zero reference, then `refine_passes` passes against the previous estimate
// (loop ends repaired: the truncated Dirichlet series leaves an end layer there).
// With `local`, a single pass against the given reference.
inline InversionReport invert(const CharSource& data, const std::vector<int>& sigma, double data_lambda_min,
                              const RunConfig& cfg, const ReferenceProblem* local = nullptr) {
  const auto& g = data.geometry();
  g.validate(true);
  InversionReport out;
  PotentialSet est;
  if (local) {
    out.passes.push_back(inversion_pass(data, sigma, data_lambda_min, *local, cfg, est));
  } else {
    auto ref = zero_reference(g, cfg.nodes_per_unit);
    out.passes.push_back(inversion_pass(data, sigma, data_lambda_min, ref, cfg, est));
    for (int p = 1; p <= cfg.refine_passes; ++p) {
      PotentialSet r = est;
      r.q[0] = repair_ends(r.q[0], true, true, cfg.loop_repair, cfg.loop_fit);
      auto fr = forward_reference(std::move(r), cfg.ode);
      out.passes.push_back(inversion_pass(data, sigma, data_lambda_min, fr, cfg, est));
      out.passes.back().pass = p;
    }
  }
  out.q = est;
  try {
    QuasiData qd{nullptr, {}, sigma, g.a};
    out.sigma_check = verify_sigma_condition(qd, normalise_loop(est.q[0]), std::min<int>(cfg.loop_pairs, sigma.size()),
                                             cfg.sigma_zero_tol, cfg.ode);
    if (out.sigma_check.mismatches)
      out.warnings.push_back("reconstructed loop reproduces " +
                             std::to_string(out.sigma_check.compared - out.sigma_check.mismatches) + "/" +
                             std::to_string(out.sigma_check.compared) + " signs");
  } catch (const std::exception& e) {
    out.warnings.push_back(std::string("sign check skipped: ") + e.what());
  }
  return out;
}

inline InversionReport invert_dataset(const SpectralDataset& d, const RunConfig& cfg,
                                      const ReferenceProblem* local = nullptr) {
  d.validate();
  auto src = detail::step("rebuild (Hadamard)", "dataset eigenvalue lists may be truncated or corrupted",
                          [&] { return std::make_shared<HadamardSource>(d); });
  return invert(*src, d.sigma, dataset_lambda_min(d), cfg, local);
}

// ---------- reporting ----------

struct EdgeErrors {
  std::vector<double> abs, rel;
};

inline EdgeErrors edge_errors(const PotentialSet& rec, const PotentialSet& truth) {
  EdgeErrors e;
  for (std::size_t j = 0; j < truth.q.size(); ++j) {
    double d = l2_distance(rec.q[j], truth.q[j]), n = l2_norm(truth.q[j]);
    e.abs.push_back(d);
    e.rel.push_back(n > 0 ? d / n : d);
  }
  return e;
}

inline std::string format_report(const InversionReport& r, const PotentialSet* truth = nullptr) {
  std::ostringstream os;
  os << std::setprecision(6);
  for (auto& p : r.passes) {
    os << "pass " << p.pass << ": tau " << p.tau << ", ";
    for (std::size_t k = 0; k < p.pendant_condition.size(); ++k)
      os << "cond(q" << k + 1 << ") " << p.pendant_condition[k] << ", ";
    os << "kernel minE " << p.kernel_min_E << " (alpha " << p.kernel_alpha << "), cond(q0) " << p.loop_condition
       << ", " << p.seconds << " s\n";
  }
  os << "sign check: " << r.sigma_check.compared - r.sigma_check.mismatches << "/" << r.sigma_check.compared
     << " reproduced\n";
  for (auto& w : r.warnings) os << "warning: " << w << "\n";
  for (std::size_t j = 0; j < r.q.q.size(); ++j) os << "||q" << j << "|| = " << l2_norm(r.q.q[j]) << "\n";
  if (truth) {
    auto e = edge_errors(r.q, *truth);
    for (std::size_t j = 0; j < e.abs.size(); ++j)
      os << "edge " << j << ": L2 error " << e.abs[j] << ", relative " << e.rel[j] << "\n";
  }
  return os.str();
}

// ---------- sweeps ----------

// Runs fn(i) for i < n on a small pool; results are collected by index so output order is fixed.
template <class F>
void parallel_for(int n, int workers, F&& fn) {
  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

struct StabilityRecord {
  double epsilon = 0.0, delta = 0.0;
  std::vector<double> err;      // ||q_rec_j - q_j||: recovered difference from the reference
  std::vector<double> ratio;    // err / delta
  std::vector<double> inv_err;  // ||q_rec_j - qtilde_j|| (unknown in experimental mode: -1)
  std::string status = "ok";
};

struct SweepSummary {
  std::vector<double> slope, spread;  // per edge
};

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) continue;
    double u = std::log(x[i]), v = std::log(y[i]);
    sx += u, sy += v, sxx += u * u, sxy += u * v, ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline SweepSummary summarize(const std::vector<StabilityRecord>& rows, int edges) {
  SweepSummary s;
  for (int j = 0; j < edges; ++j) {
    std::vector<double> x, y;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (auto& r : rows) {
      if (r.status != "ok" || !(r.delta > 0)) continue;
      x.push_back(r.delta);
      y.push_back(r.err[j]);
      lo = std::min(lo, r.ratio[j]);
      hi = std::max(hi, r.ratio[j]);
    }
    s.slope.push_back(loglog_slope(x, y));
    s.spread.push_back(x.size() >= 2 && lo > 0 ? hi / lo : std::numeric_limits<double>::quiet_NaN());
  }
  return s;
}

struct SweepOptions {
  bool experimental = false;
  int workers = 0;
};

// Local stability: reference = unperturbed problem (known potentials, data rebuilt from its dataset).
inline std::vector<StabilityRecord> stability_sweep(const PotentialSet& base, const RunConfig& cfg,
                                                    const SweepOptions& so = {}) {
  const int edges = base.geom.m + 1;
  auto f0 = forward(base, cfg);
  ReferenceProblem ref;
  ref.q = base;
  ref.src = std::make_shared<HadamardSource>(f0.data);
  ref.lambda_min = dataset_lambda_min(f0.data);
  std::vector<StabilityRecord> rows(cfg.epsilons.size());
  std::mutex mu;
  parallel_for(static_cast<int>(rows.size()), so.workers, [&](int i) {
    StabilityRecord r;
    r.epsilon = cfg.epsilons[i];
    r.err.assign(edges, -1.0);
    r.ratio.assign(edges, -1.0);
    r.inv_err.assign(edges, -1.0);
    try {
      SpectralDataset data;
      const PotentialSet* truth = nullptr;
      PerturbResult pr;
      if (so.experimental) {
        std::mt19937_64 rng(cfg.seed + 7919 * (i + 1));
        data = jitter_dataset(f0.data, r.epsilon, rng);
        r.delta = delta_metric(f0.data, data);
      } else {
        pr = perturb(base, f0.data, r.epsilon, cfg);
        data = pr.fwd.data;
        r.delta = pr.delta;
        truth = &pr.q;
      }
      auto inv = invert_dataset(data, cfg, &ref);
      for (int j = 0; j < edges; ++j) {
        r.err[j] = l2_distance(inv.q.q[j], base.q[j]);
        r.ratio[j] = r.delta > 0 ? r.err[j] / r.delta : std::numeric_limits<double>::quiet_NaN();
        if (truth) r.inv_err[j] = l2_distance(inv.q.q[j], truth->q[j]);
      }
    } catch (const std::exception& e) {
      r.status = std::string("failed: ") + e.what();
    }
    std::lock_guard<std::mutex> lk(mu);
    rows[i] = std::move(r);
  });
  return rows;
}

// Pairwise probe on pendant edges: ||q_k - qt_k|| / (||rho^{m+1} Dhat|| + ||rho^m Dhat_k||) for random pairs.
struct UniformProbe {
  std::vector<std::vector<double>> ratio;  // [pair][k-1]
  std::vector<double> max_ratio, min_ratio;
  std::vector<std::string> failures;
};

inline UniformProbe uniform_probe(const RunConfig& cfg, int pairs, double Q, std::uint64_t seed, int workers = 0) {
  const auto& g = cfg.geom;
  UniformProbe u;
  std::vector<std::pair<PotentialSet, PotentialSet>> ps;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.25, 1.0);
  for (int i = 0; i < pairs; ++i) {
    auto a = random_potentials(g, cfg.nodes_per_unit, rng, 1.0, cfg.random_modes);
    auto b = random_potentials(g, cfg.nodes_per_unit, rng, 1.0, cfg.random_modes);
    for (auto& f : a.q) f = scaled(f, Q * U(rng));
    for (auto& f : b.q) f = scaled(f, Q * U(rng));
    ps.emplace_back(std::move(a), std::move(b));
  }
  u.ratio.assign(pairs, std::vector<double>(g.m, std::numeric_limits<double>::quiet_NaN()));
  std::vector<std::string> fail(pairs);
  parallel_for(pairs, workers, [&](int i) {
    try {
      auto d1 = forward(ps[i].first, cfg).data, d2 = forward(ps[i].second, cfg).data;
      auto parts = delta_parts(d1, d2);
      for (int k = 1; k <= g.m; ++k)
        u.ratio[i][k - 1] = l2_distance(ps[i].first.q[k], ps[i].second.q[k]) / (parts.main + parts.k[k - 1]);
    } catch (const std::exception& e) {
      fail[i] = e.what();
    }
  });
  for (auto& f : fail)
    if (!f.empty()) u.failures.push_back(f);
  for (int k = 0; k < g.m; ++k) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (auto& r : u.ratio)
      if (std::isfinite(r[k])) lo = std::min(lo, r[k]), hi = std::max(hi, r[k]);
    u.max_ratio.push_back(hi);
    u.min_ratio.push_back(lo);
  }
  return u;
}

// CSV columns: epsilon,delta,err_q0..err_qm,ratio_q0..ratio_qm,inv_err_q0..inv_err_qm,status
inline std::string sweep_csv(const std::vector<StabilityRecord>& rows, int edges) {
  std::ostringstream os;
  os << "epsilon,delta";
  for (const char* p : {"err_q", "ratio_q", "inv_err_q"})
    for (int j = 0; j < edges; ++j) os << ',' << p << j;
  os << ",status\n";
  for (auto& r : rows) {
    os << format_double(r.epsilon) << ',' << format_double(r.delta);
    for (auto* v : {&r.err, &r.ratio, &r.inv_err})
      for (int j = 0; j < edges; ++j) os << ',' << format_double((*v)[j]);
    std::string st = r.status;
    std::replace(st.begin(), st.end(), ',', ';');
    std::replace(st.begin(), st.end(), '\n', ' ');
    os << ',' << st << '\n';
  }
  return os.str();
}

// Log-log plot of err_qj against delta, one polyline per edge, slope in the legend; depends only on the CSV.
inline std::string sweep_svg(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  std::vector<std::string> head;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) head.push_back(c);
  }
  std::vector<int> errcol;
  for (std::size_t c = 0; c < head.size(); ++c)
    if (head[c].rfind("err_q", 0) == 0) errcol.push_back(static_cast<int>(c));
  std::vector<double> delta;
  std::vector<std::vector<double>> err(errcol.size());
  while (std::getline(is, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) f.push_back(c);
    if (f.size() != head.size() || f.back() != "ok") continue;
    delta.push_back(std::stod(f[1]));
    for (std::size_t e = 0; e < errcol.size(); ++e) err[e].push_back(std::stod(f[errcol[e]]));
  }
  const double W = 640, H = 480, L = 80, R = 180, B = 60, Tp = 30;
  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (!(delta[i] > 0)) continue;
    xlo = std::min(xlo, std::log10(delta[i]));
    xhi = std::max(xhi, std::log10(delta[i]));
    for (auto& e : err)
      if (e[i] > 0) ylo = std::min(ylo, std::log10(e[i])), yhi = std::max(yhi, std::log10(e[i]));
  }
  if (xlo > xhi) xlo = -1, xhi = 0;
  if (ylo > yhi) ylo = -1, yhi = 0;
  xlo = std::floor(xlo), xhi = std::max(std::ceil(xhi), xlo + 1);
  ylo = std::floor(ylo), yhi = std::max(std::ceil(yhi), ylo + 1);
  auto X = [&](double v) { return L + (std::log10(v) - xlo) / (xhi - xlo) * (W - L - R); };
  auto Y = [&](double v) { return H - B - (std::log10(v) - ylo) / (yhi - ylo) * (H - B - Tp); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream os;
  os << std::setprecision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<rect x=\"" << L << "\" y=\"" << Tp << "\" width=\"" << W - L - R << "\" height=\"" << H - B - Tp
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int d = static_cast<int>(xlo); d <= static_cast<int>(xhi); ++d) {
    double x = X(std::pow(10.0, d));
    os << "<line x1=\"" << x << "\" y1=\"" << H - B << "\" x2=\"" << x << "\" y2=\"" << H - B + 5
       << "\" stroke=\"black\"/><text x=\"" << x << "\" y=\"" << H - B + 20
       << "\" font-size=\"12\" text-anchor=\"middle\">1e" << d << "</text>\n";
  }
  for (int d = static_cast<int>(ylo); d <= static_cast<int>(yhi); ++d) {
    double y = Y(std::pow(10.0, d));
    os << "<line x1=\"" << L - 5 << "\" y1=\"" << y << "\" x2=\"" << L << "\" y2=\"" << y
       << "\" stroke=\"black\"/><text x=\"" << L - 8 << "\" y=\"" << y + 4
       << "\" font-size=\"12\" text-anchor=\"end\">1e" << d << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15
     << "\" font-size=\"13\" text-anchor=\"middle\">delta (data distance)</text>\n";
  os << "<text x=\"20\" y=\"" << (Tp + H - B) / 2 << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
     << (Tp + H - B) / 2 << ")\">||q_j - q~_j||</text>\n";
  for (std::size_t e = 0; e < err.size(); ++e) {
    const char* c = colors[e % 6];
    std::ostringstream pts;
    for (std::size_t i = 0; i < delta.size(); ++i)
      if (delta[i] > 0 && err[e][i] > 0) pts << X(delta[i]) << ',' << Y(err[e][i]) << ' ';
    os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"" << pts.str() << "\"/>\n";
    for (std::size_t i = 0; i < delta.size(); ++i)
      if (delta[i] > 0 && err[e][i] > 0)
        os << "<circle cx=\"" << X(delta[i]) << "\" cy=\"" << Y(err[e][i]) << "\" r=\"3\" fill=\"" << c << "\"/>\n";
    double s = loglog_slope(delta, err[e]);
    os << "<text x=\"" << W - R + 10 << "\" y=\"" << Tp + 20 + 20 * e << "\" font-size=\"13\" fill=\"" << c
       << "\">" << head[errcol[e]].substr(4) << ": slope " << std::setprecision(3) << s << std::setprecision(6)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace cyclegraph
