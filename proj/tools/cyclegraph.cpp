#include <CLI11.hpp>

#include <cyclegraph/pipeline.hpp>

#include <filesystem>
#include <iostream>

using namespace cyclegraph;
namespace fs = std::filesystem;

namespace {

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    double x = 0.0;
    auto r = std::from_chars(item.data(), item.data() + item.size(), x);
    if (r.ec != std::errc() || r.ptr != item.data() + item.size() || !(x >= 0.0))
      throw Error("--epsilon: bad value '" + item + "'");
    v.push_back(x);
  }
  if (v.empty()) throw Error("--epsilon: empty list");
  return v;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p);
  if (!os) throw Error("cannot open '" + p.string() + "' for writing");
  os << s;
}

struct Globals {
  std::string config, out, epsilon;
  std::uint64_t seed = 0;
  bool seed_set = false, experimental = false;
};

RunConfig make_config(const Globals& g) {
  RunConfig c = g.config.empty() ? RunConfig{} : load_config(g.config);
  if (g.seed_set) c.seed = g.seed;
  if (!g.out.empty()) c.output_dir = g.out;
  if (!g.epsilon.empty()) c.epsilons = parse_list(g.epsilon);
  c.validate();
  fs::create_directories(c.output_dir);
  return c;
}

PotentialSet potentials_for(const RunConfig& c, const std::string& file) {
  if (file.empty()) return config_potentials(c);
  auto p = load_potentials(file);
  if (!(p.geom == c.geom)) throw Error("potentials file geometry does not match the config geometry");
  p.validate();
  return p;
}

std::string forward_summary(const ForwardResult& f) {
  std::ostringstream os;
  os << "eigenvalues: main " << f.data.lambda_main.size();
  for (std::size_t k = 0; k < f.data.lambda_k.size(); ++k) os << ", k" << k + 1 << " " << f.data.lambda_k[k].size();
  os << "\nsigma: " << f.data.sigma.size() << " signs, identity defect " << f.sigma.max_identity_defect << "\n";
  for (auto& w : f.warnings) os << "warning: " << w << "\n";
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Direct and inverse spectral problems on a loop with pendant edges"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  Globals g;
  app.add_option("--config", g.config, "JSON config file (see `defaults`)");
  app.add_option("--out", g.out, "output directory");
  auto* seed_opt = app.add_option("--seed", g.seed, "seed for random potentials");
  app.add_option("--epsilon", g.epsilon, "comma-separated perturbation sizes");
  app.add_flag("--experimental", g.experimental, "perturb eigenvalues directly (no realizability guarantee)");

  std::string pot_file, data_file, truth_file;
  auto* c_fwd = app.add_subcommand("forward", "compute a spectral dataset from potentials");
  c_fwd->add_option("--potentials", pot_file, "potentials file (default: from config)");
  auto* c_pert = app.add_subcommand("perturb", "perturb potentials (or eigenvalues) and recompute data");
  c_pert->add_option("--potentials", pot_file, "potentials file (default: from config)");
  c_pert->add_option("--dataset", data_file, "base dataset for --experimental");
  auto* c_inv = app.add_subcommand("invert", "recover potentials from a dataset");
  c_inv->add_option("dataset", data_file, "dataset file")->required();
  c_inv->add_option("--truth", truth_file, "ground-truth potentials for an error report");
  auto* c_sweep = app.add_subcommand("stability-sweep", "epsilon sweep and pairwise probe");
  c_sweep->add_option("--potentials", pot_file, "potentials file (default: from config)");
  auto* c_def = app.add_subcommand("defaults", "print the default config");
  auto* c_self = app.add_subcommand("selftest", "quick consistency checks");

  CLI11_PARSE(app, argc, argv);
  g.seed_set = seed_opt->count() > 0;

  try {
    if (c_def->parsed()) {
      std::cout << to_json(RunConfig{}).dump(2) << "\n";
      return 0;
    }
    RunConfig cfg = make_config(g);
    fs::path out = cfg.output_dir;

    if (c_fwd->parsed()) {
      auto p = potentials_for(cfg, pot_file);
      auto f = forward(p, cfg);
      save_dataset(f.data, (out / "dataset.txt").string());
      save_potentials(p, (out / "potentials.txt").string());
      write_text(out / "report.txt", forward_summary(f));
      std::cout << forward_summary(f) << "wrote " << (out / "dataset.txt").string() << "\n";
      return 0;
    }

    if (c_pert->parsed()) {
      double eps = cfg.epsilons.front();
      if (g.experimental) {
        SpectralDataset base = data_file.empty() ? forward(potentials_for(cfg, pot_file), cfg).data
                                                 : load_dataset(data_file);
        std::mt19937_64 rng(cfg.seed);
        auto d = jitter_dataset(base, eps, rng);
        save_dataset(d, (out / "dataset_perturbed.txt").string());
        std::ostringstream os;
        os << std::setprecision(6) << "experimental eigenvalue jitter, epsilon " << eps << ", delta "
           << delta_metric(base, d) << "\n";
        write_text(out / "report.txt", os.str());
        std::cout << os.str();
        return 0;
      }
      auto p = potentials_for(cfg, pot_file);
      auto f0 = forward(p, cfg);
      auto r = perturb(p, f0.data, eps, cfg);
      save_potentials(r.q, (out / "potentials_perturbed.txt").string());
      save_dataset(r.fwd.data, (out / "dataset_perturbed.txt").string());
      std::ostringstream os;
      os << std::setprecision(6) << "epsilon " << eps << ", delta " << r.delta << "\n";
      for (int j = 0; j <= p.geom.m; ++j) os << "||q" << j << " - q~" << j << "|| = " << l2_distance(p.q[j], r.q.q[j]) << "\n";
      write_text(out / "report.txt", os.str());
      std::cout << os.str();
      return 0;
    }

    if (c_inv->parsed()) {
      auto d = load_dataset(data_file);
      if (!(d.geom == cfg.geom)) {
        std::cerr << "note: using the dataset geometry\n";
        cfg.geom = d.geom;
      }
      std::unique_ptr<PotentialSet> truth;
      if (!truth_file.empty()) truth = std::make_unique<PotentialSet>(load_potentials(truth_file));
      auto r = invert_dataset(d, cfg);
      save_potentials(r.q, (out / "potentials_recovered.txt").string());
      auto rep = format_report(r, truth.get());
      write_text(out / "report.txt", rep);
      std::cout << rep;
      return 0;
    }

    if (c_sweep->parsed()) {
      auto p = potentials_for(cfg, pot_file);
      SweepOptions so;
      so.experimental = g.experimental;
      auto rows = stability_sweep(p, cfg, so);
      const int edges = p.geom.m + 1;
      auto csv = sweep_csv(rows, edges);
      write_text(out / "sweep.csv", csv);
      write_text(out / "sweep.svg", sweep_svg(csv));
      auto s = summarize(rows, edges);
      std::ostringstream os;
      os << std::setprecision(6);
      for (auto& r : rows)
        if (r.status != "ok") os << "epsilon " << r.epsilon << ": " << r.status << "\n";
      for (int j = 0; j < edges; ++j)
        os << "edge " << j << ": slope " << s.slope[j] << ", ratio spread " << s.spread[j] << "\n";
      if (cfg.uniform_pairs > 0 && !g.experimental) {
        auto u = uniform_probe(cfg, cfg.uniform_pairs, cfg.uniform_Q, cfg.seed);
        for (int k = 0; k < p.geom.m; ++k)
          os << "pairwise probe q" << k + 1 << ": max ratio " << u.max_ratio[k] << ", min " << u.min_ratio[k]
             << " over " << cfg.uniform_pairs << " pairs (Q = " << cfg.uniform_Q << ")\n";
        for (auto& f : u.failures) os << "pairwise probe failure: " << f << "\n";
      }
      write_text(out / "report.txt", os.str());
      std::cout << os.str();
      return 0;
    }

    if (c_self->parsed()) {
      int fails = 0;
      auto check = [&](bool ok, const std::string& what) {
        std::cout << (ok ? "PASS " : "FAIL ") << what << "\n";
        if (!ok) ++fails;
      };
      // zero potentials: Dirichlet spectrum and alternating signs
      auto z = PotentialSet::zero(cfg.geom, cfg.nodes_per_unit);
      auto pairs = dirichlet_pairs(GridFunction::zero(1.0, 513), 10);
      double e = 0.0;
      for (int n = 0; n < 10; ++n) e = std::max(e, std::abs(pairs.lambda[n] - std::pow(M_PI * (n + 1), 2)));
      check(e < 1e-8, "zero potential Dirichlet spectrum (pi n)^2");
      // Wronskian on a random potential
      std::mt19937_64 rng(cfg.seed);
      auto q = random_potential(1.0, 513, rng, 1.0);
      double w = 0.0;
      for (cplx lam : {cplx(-20, 0), cplx(5, 3), cplx(300, -40), cplx(900, 0)})
      {
        auto e = integrate_fundamental<cplx>(q, lam);
        w = std::max(w, wronskian_defect(e.C, e.Sp, e.Cp, e.S));
      }
      check(w < 1e-10, "Wronskian identity");
      // d^2 - H^2 = 4 at Dirichlet zeros of a random loop
      auto lp = dirichlet_pairs(q, 10);
      double id = 0.0;
      for (double lam : lp.lambda) {
        auto ep = integrate_fundamental<double>(q, lam);
        double d = cfg.geom.a * ep.C + ep.Sp / cfg.geom.a, H = cfg.geom.a * ep.C - ep.Sp / cfg.geom.a;
        id = std::max(id, std::abs(d * d - H * H - 4.0));
      }
      check(id < 1e-6, "d^2 - H^2 = 4 at Dirichlet zeros");
      // dataset text round trip
      if (cfg.geom.m <= 3) {
        auto f = forward(z, cfg);
        std::stringstream ss;
        write_dataset(ss, f.data);
        check(read_dataset(ss) == f.data, "dataset round trip (bit-exact)");
        bool alt = true;
        if (cfg.geom.a == 2.0)
          for (std::size_t n = 0; n < f.data.sigma.size(); ++n) alt &= f.data.sigma[n] == (n % 2 == 0 ? -1 : 1);
        check(alt, "zero potential sign pattern");
      }
      std::cout << (fails ? "selftest FAILED" : "selftest passed") << "\n";
      return fails ? 1 : 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
