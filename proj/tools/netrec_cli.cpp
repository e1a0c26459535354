// Command-line driver: scenario generation, weight recovery, layer
// attribution, deparametrized refit, benchmark sweeps and report emission.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "netrec/harness.hpp"
#include "netrec/report.hpp"

using namespace netrec;
using nlohmann::json;

namespace {

json load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  json j;
  is >> j;
  return j;
}

void save_json(const json& j, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("failed writing " + path);
}

// --oracle file:<path>  loads a network in the JSON weights format and
// wraps it behind the query-only interface
struct OracleSpec {
  std::string raw;

  std::string path() const {
    if (raw.rfind("file:", 0) == 0) return raw.substr(5);
    return raw;
  }

  TwoLayerNetwork load() const { return network_from_json(load_json(path())); }
};

WeightDesign parse_design(const std::string& s) {
  if (s == "pod" || s == "perturbed") return WeightDesign::PerturbedOrthogonal;
  if (s == "uni" || s == "sphere") return WeightDesign::UnitSphere;
  throw CLI::ValidationError("--design", "expected pod|uni");
}

std::vector<double> parse_grid(const std::string& spec) {
  // lo:hi:step
  double lo, hi, step;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 ||
      step <= 0.0 || hi < lo)
    throw CLI::ValidationError("--traj-grid", "expected lo:hi:step");
  std::vector<double> grid;
  for (double t = lo; t <= hi + 1e-12; t += step) grid.push_back(t);
  return grid;
}

struct PipelineFlags {
  PipelineConfig cfg;
  std::string dist = "scaled";
  double rho = 0.0;
  std::string traj_grid;
  bool fix_d3_flag = false;
  bool free_d3_flag = false;

  void attach(CLI::App* cmd, bool with_recover, bool with_refit) {
    if (with_recover) {
      cmd->add_option("--mx", cfg.m_x, "Hessian sample count");
      cmd->add_option("--eps", cfg.eps, "finite difference step");
      cmd->add_option("--dist", dist, "sampling distribution: sphere|scaled");
      cmd->add_option("--rho", rho, "radius for the scaled sphere (default sqrt(m0))");
      cmd->add_option("--gamma", cfg.gamma, "ascent step constant");
      cmd->add_option("--restarts", cfg.restarts, "number of ascent restarts K");
      cmd->add_option("--tol", cfg.tol, "ascent stopping tolerance");
      cmd->add_option("--max-iters", cfg.max_iters, "ascent iteration cap");
      cmd->add_option("--cluster-restarts", cfg.cluster.restarts,
                      "kMeans++ restarts");
      cmd->add_flag("--reduce", cfg.reduce,
                    "active-subspace reduction for d > m0");
    }
    if (with_refit) {
      cmd->add_option("--lr", cfg.refit_lr,
                      "descent rate (default 0.5 sigmoid / 0.025 tanh)");
      cmd->add_option("--iters", cfg.refit_iters, "descent iterations");
      cmd->add_option("--mf-mult", cfg.mf_mult,
                      "refit samples per free parameter block");
      cmd->add_flag("--fix-d3", fix_d3_flag, "pin D3 to the identity");
      cmd->add_flag("--free-d3", free_d3_flag, "optimize D3 even for odd activations");
      cmd->add_option("--mtest", cfg.m_test, "test samples for refit metrics");
    }
    cmd->add_option("--traj-grid", traj_grid,
                    "trajectory grid lo:hi:step (default -19:20:1)");
    cmd->add_option("--threshold", cfg.threshold_t, "recovery threshold T");
    cmd->add_option("--workers", cfg.workers, "worker threads (0 = all cores)");
  }

  PipelineConfig resolve() {
    if (dist == "sphere")
      cfg.dist_kind = SampleDistribution::Kind::UnitSphere;
    else if (dist == "scaled")
      cfg.dist_kind = SampleDistribution::Kind::ScaledSphere;
    else
      throw CLI::ValidationError("--dist", "expected sphere|scaled");
    cfg.dist_rho = rho;
    if (!traj_grid.empty()) cfg.trajectory.t_grid = parse_grid(traj_grid);
    if (fix_d3_flag) cfg.fix_d3 = true;
    if (free_d3_flag) cfg.fix_d3 = false;
    return cfg;
  }
};

json candidate_to_json(const Candidate& c) {
  return json{{"u", std::vector<double>(c.u.data(), c.u.data() + c.u.size())},
              {"lambda1", c.lambda1},
              {"gap", c.spectral_gap},
              {"status", to_string(c.status)},
              {"iters", c.iters}};
}

int run_gen(const Scenario& sc, const std::string& out) {
  auto net = generate_network(sc);
  json j = net;
  if (out.empty())
    std::cout << j.dump(2) << "\n";
  else
    save_json(j, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-layer network weight recovery from point queries"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value file mirroring all flags");
  app.get_config_ptr()->configurable(true);

  // ---- gen ----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "generate a ground-truth network");
  std::string gen_design = "pod", gen_act = "sigmoid", gen_out;
  Scenario gen_sc;
  gen->add_option("--design", gen_design, "pod|uni");
  gen->add_option("--act", gen_act, "sigmoid|tanh");
  gen->add_option("--m0", gen_sc.m0, "first layer width");
  gen->add_option("--m1", gen_sc.m1, "second layer width");
  gen->add_option("--d", gen_sc.d, "input dimension (default m0)");
  gen->add_option("--perturbation", gen_sc.perturbation_target,
                  "singular value deviation target");
  gen->add_option("--bias-std", gen_sc.bias_std, "shift standard deviation");
  gen->add_option("--seed", gen_sc.seed, "RNG seed");
  gen->add_option("-o,--out", gen_out, "output network JSON (default stdout)");

  // ---- recover ------------------------------------------------------------
  auto* rec = app.add_subcommand(
      "recover", "estimate the weight span and recover profiles");
  OracleSpec rec_oracle;
  int rec_m0 = 0, rec_m1 = 0, rec_k = 0;
  std::uint64_t rec_seed = 0;
  std::string rec_out = "profiles.json", rec_cands_out, rec_subspace_out;
  PipelineFlags rec_flags;
  rec->add_option("--oracle", rec_oracle.raw, "file:<network JSON>")
      ->required();
  rec->add_option("--m0", rec_m0, "first layer width")->required();
  rec->add_option("--m1", rec_m1, "second layer width")->required();
  rec->add_option("--k", rec_k, "cluster count (default m0 + m1)");
  rec->add_option("--seed", rec_seed, "RNG seed");
  rec->add_option("-o,--out", rec_out, "profiles JSON output");
  rec->add_option("--candidates-out", rec_cands_out,
                  "dump all ascent candidates as JSON");
  rec->add_option("--subspace-out", rec_subspace_out,
                  "persist the estimated subspace basis");
  rec_flags.attach(rec, true, false);

  // ---- attribute ----------------------------------------------------------
  auto* att = app.add_subcommand("attribute",
                                 "assign recovered profiles to layers");
  OracleSpec att_oracle;
  std::string att_profiles, att_out = "assignment.json";
  int att_m0 = 0;
  PipelineFlags att_flags;
  att->add_option("--oracle", att_oracle.raw, "file:<network JSON>")
      ->required();
  att->add_option("--profiles", att_profiles, "profiles JSON")->required();
  att->add_option("--m0", att_m0, "first layer width")->required();
  att->add_option("--eps", att_flags.cfg.eps, "finite difference step");
  att->add_option("-o,--out", att_out, "assignment JSON output");
  att_flags.attach(att, false, false);

  // ---- refit --------------------------------------------------------------
  auto* ref = app.add_subcommand(
      "refit", "fit shifts and scalings with fixed entangled weights");
  OracleSpec ref_oracle;
  std::string ref_profiles, ref_assignment, ref_out = "refit.json";
  std::uint64_t ref_seed = 0;
  bool ref_exact = false;
  PipelineFlags ref_flags;
  ref->add_option("--oracle", ref_oracle.raw, "file:<network JSON>")
      ->required();
  ref->add_option("--profiles", ref_profiles,
                  "profiles JSON (omit with --exact-weights)");
  ref->add_option("--assignment", ref_assignment, "assignment JSON");
  ref->add_flag("--exact-weights", ref_exact,
                "use the oracle network's own weights (teacher study)");
  ref->add_option("--seed", ref_seed, "RNG seed");
  ref->add_option("-o,--out", ref_out, "fitted parameters + metrics JSON");
  ref_flags.attach(ref, false, true);

  // ---- bench --------------------------------------------------------------
  auto* ben = app.add_subcommand("bench", "scenario sweep with repetitions");
  std::vector<std::string> ben_designs = {"pod"};
  std::vector<std::string> ben_acts = {"sigmoid"};
  std::vector<std::string> ben_archs = {"30x3"};
  int ben_reps = 30;
  std::uint64_t ben_seed = 0;
  std::string ben_out_dir = "bench_out";
  bool ben_no_refit = false;
  double ben_bias_std = 0.01;
  PipelineFlags ben_flags;
  ben->add_option("--design", ben_designs, "pod|uni (repeatable)");
  ben->add_option("--act", ben_acts, "sigmoid|tanh (repeatable)");
  ben->add_option("--arch", ben_archs, "architectures m0xm1 (repeatable)");
  ben->add_option("--reps", ben_reps, "repetitions per cell");
  ben->add_option("--seed", ben_seed, "base seed");
  ben->add_option("--bias-std", ben_bias_std, "shift standard deviation");
  ben->add_flag("--no-refit", ben_no_refit, "skip the refit stage");
  ben->add_option("--out-dir", ben_out_dir, "output directory");
  ben_flags.attach(ben, true, true);

  // ---- report -------------------------------------------------------------
  auto* rep = app.add_subcommand("report", "re-emit reports as CSV/plot data");
  std::string rep_in, rep_out_dir = ".";
  rep->add_option("--in", rep_in, "reports JSON")->required();
  rep->add_option("--out-dir", rep_out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      gen_sc.design = parse_design(gen_design);
      gen_sc.act = activation_from_name(gen_act);
      return run_gen(gen_sc, gen_out);
    }

    if (rec->parsed()) {
      auto net = rec_oracle.load();
      QueryOracle f(net);
      PipelineConfig cfg = rec_flags.resolve();
      const QueryOracle* oracle = &f;
      std::optional<QueryOracle> reduced;
      std::optional<Matrix> basis;
      if (cfg.reduce && net.d() > rec_m0) {
        basis = active_subspace_basis(f, net.d(), rec_m0, cfg.reduce_m_x,
                                      cfg.eps, rec_seed, cfg.workers);
        reduced.emplace(rec_m0, [&f, u = *basis](const Vector& y) {
          return f(Vector(u * y));
        });
        oracle = &*reduced;
      }
      auto sub = approximate_w(*oracle, rec_m0, rec_m1, cfg.m_x, cfg.eps,
                               cfg.distribution(rec_m0), rec_seed,
                               cfg.workers);
      if (!rec_subspace_out.empty()) save_json(json(sub), rec_subspace_out);
      RecoverOptions ropts;
      ropts.gamma = cfg.gamma;
      ropts.tol = cfg.tol;
      ropts.max_iters = cfg.max_iters;
      std::vector<Candidate> cands(cfg.restarts);
      parallel_for(
          cfg.restarts,
          [&](std::int64_t k) {
            cands[k] = recover_candidate(
                sub, ropts,
                rng::splitmix64(rec_seed ^ rng::splitmix64(k + 1)));
          },
          cfg.workers);
      if (!rec_cands_out.empty()) {
        json arr = json::array();
        for (const auto& c : cands) arr.push_back(candidate_to_json(c));
        save_json(arr, rec_cands_out);
      }
      std::vector<Vector> kept;
      for (const auto& c : cands)
        if (c.status == CandidateStatus::NearRank1) kept.push_back(c.u);
      int k = rec_k > 0 ? rec_k : rec_m0 + rec_m1;
      auto profiles = cluster_profiles(kept, k, rec_seed, cfg.cluster);
      if (basis) {
        for (auto& v : profiles.vectors) v = (*basis * v).normalized();
      }
      save_json(json(profiles), rec_out);
      std::cerr << "recovered " << k << " profiles from " << kept.size()
                << " near-rank-1 candidates (" << f.query_count()
                << " queries)\n";
      return 0;
    }

    if (att->parsed()) {
      auto net = att_oracle.load();
      QueryOracle f(net);
      auto profiles = profile_set_from_json(load_json(att_profiles));
      PipelineConfig cfg = att_flags.resolve();
      std::vector<double> energies(profiles.vectors.size());
      parallel_for(
          static_cast<std::int64_t>(profiles.vectors.size()),
          [&](std::int64_t j) {
            energies[j] =
                trajectory_energy(f, profiles.vectors[j], cfg.trajectory);
          },
          cfg.workers);
      auto assignment = assign_layers(energies, att_m0);
      save_json(json(assignment), att_out);
      return 0;
    }

    if (ref->parsed()) {
      auto net = ref_oracle.load();
      QueryOracle f(net);
      PipelineConfig cfg = ref_flags.resolve();
      Matrix a_hat, v_hat;
      if (ref_exact) {
        a_hat = net.a();
        v_hat = net.entangled_weights();
      } else {
        if (ref_profiles.empty() || ref_assignment.empty())
          throw CLI::ValidationError(
              "--profiles", "need profiles and assignment, or --exact-weights");
        auto profiles = profile_set_from_json(load_json(ref_profiles));
        auto asg = load_json(ref_assignment);
        auto layer1 = asg.at("layer1").get<std::vector<int>>();
        auto layer2 = asg.at("layer2").get<std::vector<int>>();
        const int d = static_cast<int>(profiles.vectors.front().size());
        a_hat.resize(d, layer1.size());
        v_hat.resize(d, layer2.size());
        for (size_t i = 0; i < layer1.size(); ++i)
          a_hat.col(i) = profiles.vectors[layer1[i]];
        for (size_t l = 0; l < layer2.size(); ++l)
          v_hat.col(l) = profiles.vectors[layer2[l]];
      }
      auto problem = make_refit_problem(
          a_hat, v_hat, net.activation(), f,
          cfg.mf_mult * static_cast<int>(a_hat.cols() + v_hat.cols()),
          ref_seed);
      FitOptions fopts;
      fopts.lr = cfg.refit_lr;
      fopts.iters = cfg.refit_iters;
      fopts.fix_d3 = cfg.fix_d3;
      fopts.seed = ref_seed;
      fopts.record_trace = false;
      auto res = fit(problem, fopts);
      auto metrics = refit_metrics(problem, res.params, &net, cfg.m_test,
                                   ref_seed);
      json out{{"params", res.params},
               {"final_loss", res.final_loss},
               {"iters_run", res.iters_run},
               {"stalled", res.stalled},
               {"mse", metrics.mse},
               {"e_inf", metrics.e_inf},
               {"e_theta", metrics.e_theta},
               {"e_tau", metrics.e_tau}};
      save_json(out, ref_out);
      std::cerr << "refit: loss " << res.final_loss << ", relative MSE "
                << metrics.mse << "\n";
      return 0;
    }

    if (ben->parsed()) {
      PipelineConfig cfg = ben_flags.resolve();
      cfg.do_refit = !ben_no_refit;
      std::filesystem::create_directories(ben_out_dir);
      std::vector<MetricsReport> all;
      for (const auto& design : ben_designs)
        for (const auto& act : ben_acts)
          for (const auto& arch : ben_archs) {
            int m0 = 0, m1 = 0;
            if (std::sscanf(arch.c_str(), "%dx%d", &m0, &m1) != 2)
              throw CLI::ValidationError("--arch", "expected m0xm1");
            std::vector<MetricsReport> cell(ben_reps);
            for (int r = 0; r < ben_reps; ++r) {
              Scenario sc;
              sc.design = parse_design(design);
              sc.act = activation_from_name(act);
              sc.m0 = m0;
              sc.m1 = m1;
              sc.bias_std = ben_bias_std;
              sc.seed = rng::splitmix64(ben_seed ^ rng::splitmix64(r + 1));
              cell[r] = run_pipeline(sc, cfg);
              std::cerr << design << "/" << act << " " << arch << " rep "
                        << (r + 1) << "/" << ben_reps << ": recov_a "
                        << cell[r].recov_a << ", recov_v " << cell[r].recov_v
                        << "\n";
            }
            std::string tag = design + "_" + act + "_" + arch;
            emit_csv(cell, ben_out_dir + "/" + tag + ".csv");
            all.insert(all.end(), cell.begin(), cell.end());
          }
      emit_json(all, ben_out_dir + "/reports.json");
      emit_plot_data(all, ben_out_dir + "/plots");
      std::cerr << "wrote " << all.size() << " reports to " << ben_out_dir
                << "\n";
      return 0;
    }

    if (rep->parsed()) {
      auto reports = reports_from_file(rep_in);
      std::filesystem::create_directories(rep_out_dir);
      emit_csv(reports, rep_out_dir + "/reports.csv");
      emit_plot_data(reports, rep_out_dir + "/plots");
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
