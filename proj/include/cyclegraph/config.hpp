#pragma once

#include <fstream>

#include <json.hpp>

#include "boundary_inverse.hpp"
#include "loop_inverse.hpp"

namespace cyclegraph {

struct RunConfig {
  GraphGeometry geom;
  int nodes_per_unit = 513;
  OdeOptions ode;
  ForwardOptions forward;
  // contour; tau <= 0 means automatic: sqrt(max(0, -lambda_min)) + tau_margin
  double tau = 0.0;
  double tau_margin = 1.0;
  double sigma_max = 60.0 * M_PI;
  int contour_nodes = 4096;
  double gl_max_condition = 1e8;
  RieszNodes riesz;
  KernelExtractionOptions kernels;
  int loop_pairs = 40;
  double sigma_zero_tol = 1e-6;
  int refine_passes = 2;
  bool tail_correction = true;  // analytic contour tail beyond sigma_max
  // loop end repair before an estimate becomes the next reference (fractions of the edge)
  double loop_repair = 24.0 / 512, loop_fit = 64.0 / 512;
  // potentials used by forward/perturb/stability-sweep: "demo" or "random"
  std::string potentials = "demo";
  double random_norm = 0.5;
  int random_modes = 4;
  std::uint64_t seed = 1;
  std::vector<double> epsilons{1e-3, 3e-3, 1e-2, 3e-2};
  double bump_center = 0.5, bump_width = 0.1;
  int uniform_pairs = 10;
  double uniform_Q = 1.0;
  std::string output_dir = "out";

  void validate() const {
    geom.validate();
    auto pos = [](double v, const char* name) {
      if (!(v > 0.0)) throw Error(std::string("config: ") + name + " must be positive");
    };
    if (nodes_per_unit < 65) throw Error("config: nodes_per_unit must be >= 65");
    if (contour_nodes < 64 || contour_nodes % 4) throw Error("config: contour_nodes must be a multiple of 4, >= 64");
    pos(sigma_max, "sigma_max");
    pos(tau_margin, "tau_margin");
    pos(gl_max_condition, "gl_max_condition");
    pos(riesz.alpha, "riesz.alpha");
    if (riesz.N < 4) throw Error("config: riesz.N must be >= 4");
    if (kernels.degree < 2 || kernels.degree > 2 * riesz.N) throw Error("config: kernels.degree out of range");
    if (loop_pairs < 2) throw Error("config: loop_pairs must be >= 2");
    if (forward.n_sigma < loop_pairs) throw Error("config: forward.n_sigma must be >= loop_pairs");
    pos(forward.rho_eig_max, "forward.rho_eig_max");
    pos(forward.scan_step, "forward.scan_step");
    pos(forward.zero_tol, "forward.zero_tol");
    pos(sigma_zero_tol, "sigma_zero_tol");
    if (forward.remainder_points < 11 || forward.remainder_points % 2 == 0)
      throw Error("config: forward.remainder_points must be odd and >= 11");
    if (refine_passes < 0 || refine_passes > 5) throw Error("config: refine_passes must be in [0, 5]");
    if (potentials != "demo" && potentials != "random") throw Error("config: potentials must be 'demo' or 'random'");
    for (double e : epsilons)
      if (!(e >= 0.0)) throw Error("config: epsilons must be >= 0");
  }
};

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["geometry"] = {{"m", c.geom.m}, {"T", c.geom.T}, {"a", c.geom.a}};
  j["grid"] = {{"nodes_per_unit", c.nodes_per_unit}, {"ode_halvings", c.ode.halvings}};
  j["forward"] = {{"rho_eig_max", c.forward.rho_eig_max},
                  {"scan_step", c.forward.scan_step},
                  {"zero_tol", c.forward.zero_tol},
                  {"n_sigma", c.forward.n_sigma},
                  {"remainder_radius", c.forward.remainder_radius},
                  {"remainder_points", c.forward.remainder_points}};
  j["contour"] = {{"tau", c.tau},
                  {"tail_correction", c.tail_correction},
                  {"tau_margin", c.tau_margin},
                  {"sigma_max", c.sigma_max},
                  {"nodes", c.contour_nodes},
                  {"gl_max_condition", c.gl_max_condition}};
  j["riesz"] = {{"alpha", c.riesz.alpha},
                {"N", c.riesz.N},
                {"method", c.kernels.method == KernelMethod::legendre ? "legendre" : "fourier"},
                {"degree", c.kernels.degree},
                {"quad_points", c.kernels.quad_points}};
  j["loop"] = {{"gl_pairs", c.loop_pairs}, {"sigma_zero_tol", c.sigma_zero_tol}};
  j["inversion"] = {{"refine_passes", c.refine_passes},
                    {"loop_repair", c.loop_repair},
                    {"loop_fit", c.loop_fit}};
  j["potentials"] = {{"kind", c.potentials}, {"random_norm", c.random_norm}, {"random_modes", c.random_modes}};
  j["perturbation"] = {{"epsilons", c.epsilons},
                       {"bump_center", c.bump_center},
                       {"bump_width", c.bump_width},
                       {"uniform_pairs", c.uniform_pairs},
                       {"uniform_Q", c.uniform_Q}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

namespace detail {
template <class T>
void take(const nlohmann::json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const std::exception& e) {
    throw Error("config: " + where + "." + key + ": " + e.what());
  }
}
}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  using detail::take;
  static const std::vector<std::string> sections{"geometry", "grid",   "forward",      "contour", "riesz", "loop",
                                                 "inversion", "potentials", "perturbation", "seed",    "output_dir"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(sections.begin(), sections.end(), it.key()) == sections.end())
      throw Error("config: unknown section '" + it.key() + "'");
  if (j.contains("geometry")) {
    auto& g = j["geometry"];
    take(g, "m", c.geom.m, "geometry");
    take(g, "T", c.geom.T, "geometry");
    take(g, "a", c.geom.a, "geometry");
  }
  if (j.contains("grid")) {
    take(j["grid"], "nodes_per_unit", c.nodes_per_unit, "grid");
    take(j["grid"], "ode_halvings", c.ode.halvings, "grid");
  }
  if (j.contains("forward")) {
    auto& f = j["forward"];
    take(f, "rho_eig_max", c.forward.rho_eig_max, "forward");
    take(f, "scan_step", c.forward.scan_step, "forward");
    take(f, "zero_tol", c.forward.zero_tol, "forward");
    take(f, "n_sigma", c.forward.n_sigma, "forward");
    take(f, "remainder_radius", c.forward.remainder_radius, "forward");
    take(f, "remainder_points", c.forward.remainder_points, "forward");
  }
  if (j.contains("contour")) {
    auto& f = j["contour"];
    take(f, "tau", c.tau, "contour");
    take(f, "tail_correction", c.tail_correction, "contour");
    take(f, "tau_margin", c.tau_margin, "contour");
    take(f, "sigma_max", c.sigma_max, "contour");
    take(f, "nodes", c.contour_nodes, "contour");
    take(f, "gl_max_condition", c.gl_max_condition, "contour");
  }
  if (j.contains("riesz")) {
    auto& f = j["riesz"];
    take(f, "alpha", c.riesz.alpha, "riesz");
    take(f, "N", c.riesz.N, "riesz");
    std::string method = "legendre";
    take(f, "method", method, "riesz");
    if (method == "legendre")
      c.kernels.method = KernelMethod::legendre;
    else if (method == "fourier")
      c.kernels.method = KernelMethod::fourier;
    else
      throw Error("config: riesz.method must be 'legendre' or 'fourier'");
    take(f, "degree", c.kernels.degree, "riesz");
    take(f, "quad_points", c.kernels.quad_points, "riesz");
  }
  if (j.contains("loop")) {
    take(j["loop"], "gl_pairs", c.loop_pairs, "loop");
    take(j["loop"], "sigma_zero_tol", c.sigma_zero_tol, "loop");
  }
  if (j.contains("inversion")) {
    auto& f = j["inversion"];
    take(f, "refine_passes", c.refine_passes, "inversion");
    take(f, "loop_repair", c.loop_repair, "inversion");
    take(f, "loop_fit", c.loop_fit, "inversion");
  }
  if (j.contains("potentials")) {
    auto& f = j["potentials"];
    take(f, "kind", c.potentials, "potentials");
    take(f, "random_norm", c.random_norm, "potentials");
    take(f, "random_modes", c.random_modes, "potentials");
  }
  if (j.contains("perturbation")) {
    auto& f = j["perturbation"];
    take(f, "epsilons", c.epsilons, "perturbation");
    take(f, "bump_center", c.bump_center, "perturbation");
    take(f, "bump_width", c.bump_width, "perturbation");
    take(f, "uniform_pairs", c.uniform_pairs, "perturbation");
    take(f, "uniform_Q", c.uniform_Q, "perturbation");
  }
  detail::take(j, "seed", c.seed, "");
  detail::take(j, "output_dir", c.output_dir, "");
  c.forward.n_sigma = std::max(c.forward.n_sigma, c.loop_pairs);
  c.forward.ode = c.ode;
  c.kernels.ode = c.ode;
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is, nullptr, true, true);  // comments allowed
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

}  // namespace cyclegraph
