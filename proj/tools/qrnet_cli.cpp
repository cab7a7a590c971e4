// qrnet: data generation, training and closed-loop evaluation for the
// Burgers benchmark.
//
// Exit codes: 0 ok, 2 config / input error, 3 numerical failure,
// 4 fingerprint mismatch.

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "qrnet/config.hpp"
#include "qrnet/csv.hpp"
#include "qrnet/errors.hpp"
#include "qrnet/experiments.hpp"
#include "qrnet/lqr.hpp"
#include "qrnet/sim.hpp"

using namespace qrnet;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::optional<int> n;
  std::optional<std::string> problem;
  std::optional<int> workers;
  std::optional<int> trajectories;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--n", c.n, "collocation points (problem.n)");
  cmd->add_option("--problem", c.problem, "burgers | linear-burgers (problem.type)");
  cmd->add_option("--workers", c.workers, "worker threads for every stage");
  cmd->allow_extras();
}

Json resolve_config(CLI::App* cmd, const Common& c) {
  Json cfg = c.config_path.empty() ? default_config() : load_config(c.config_path);
  if (c.n) apply_override(cfg, "problem.n", std::to_string(*c.n));
  if (c.problem) apply_override(cfg, "problem.type", Json(*c.problem).dump());
  if (c.trajectories) apply_override(cfg, "datagen.trajectories", std::to_string(*c.trajectories));
  if (c.workers) {
    for (const char* k : {"datagen.workers", "train.workers", "experiment.workers"})
      apply_override(cfg, k, std::to_string(*c.workers));
  }
  const auto extras = cmd->remaining();
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0 || tok.find('.') == std::string::npos)
      throw ConfigError("unknown argument '" + tok + "'");
    std::string key = tok.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("override " + tok + " needs a value");
      value = extras[++i];
    }
    apply_override(cfg, key, value);
  }
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text << "\n";
}

fs::path sibling(const fs::path& path, const std::string& suffix) {
  fs::path p = path;
  p.replace_extension();
  return p.string() + suffix;
}

IcSampler burgers_sampler(const burgers::ChebGrid& grid) {
  return [grid](std::mt19937_64& rng) { return burgers::sample_initial_condition(grid, rng); };
}

int run_care(const Json& cfg, const fs::path& out) {
  const auto bp = build_problem(problem_spec(cfg));
  const RiccatiSolution care = design_lqr(bp.ocp);
  write_care_csv(care, out);
  std::cout << "residual_norm " << format_double(care.residual_norm) << "\n"
            << "spectral_gap " << format_double(care.spectral_gap()) << "\n"
            << "fingerprint " << bp.ocp.fingerprint() << "\n"
            << "wrote " << (out / "P.csv").string() << " " << (out / "K.csv").string() << "\n";
  return 0;
}

int run_generate(const Json& cfg, std::uint64_t seed, const fs::path& out) {
  const auto bp = build_problem(problem_spec(cfg));
  const RiccatiSolution care = design_lqr(bp.ocp);
  const int n_traj = cfg["datagen"]["trajectories"].get<int>();
  const int workers = cfg["datagen"]["workers"].get<int>();
  GenerationReport report;
  std::optional<Dataset> ds;
  try {
    ds = generate_dataset(bp.ocp, care, burgers_sampler(bp.grid), n_traj, horizon_config(cfg),
                          seed, workers, &report);
  } catch (const DataGenerationError&) {
    write_text(sibling(out, ".report.json"), report.to_json());
    throw;
  }
  save_dataset(*ds, out);
  write_text(sibling(out, ".report.json"), report.to_json());
  std::cout << "trajectories " << n_traj << " accepted " << report.accepted << " rejected "
            << report.rejected << " samples " << ds->samples.size() << "\n"
            << "wrote " << out.string() << "\n";
  return 0;
}

int run_train(const Json& cfg, std::uint64_t seed, const fs::path& data, const fs::path& out) {
  const auto bp = build_problem(problem_spec(cfg));
  const RiccatiSolution care = design_lqr(bp.ocp);
  const Dataset ds = load_dataset(data, bp.ocp.fingerprint());
  std::vector<int> layers{bp.ocp.state_dim()};
  for (int h : hidden_layers(cfg)) layers.push_back(h);
  layers.push_back(1);
  QrnetParams q = init_params(layers, seed, model_mode(cfg), care.P, care.x_bar, care.u_bar,
                              bp.ocp.fingerprint());
  const TrainReport rep = train_model(q, bp.ocp, ds, train_config(cfg));
  save_model(q, out);
  write_text(sibling(out, ".train.json"), rep.to_json());
  rep.write_history_csv(sibling(out, ".loss.csv"));
  std::cout << "mode " << to_string(q.mode) << " iterations " << rep.iterations << " loss "
            << format_double(rep.final_loss) << " reason " << to_string(rep.converged_reason)
            << "\nwrote " << out.string() << "\n";
  return 0;
}

int run_evaluate(const Json& cfg, const fs::path& model, const fs::path& data,
                 const std::string& out) {
  const auto bp = build_problem(problem_spec(cfg));
  const RiccatiSolution care = design_lqr(bp.ocp);
  const QrnetParams q = load_model_for(model, bp.ocp);
  const Dataset ds = load_dataset(data, bp.ocp.fingerprint());
  const ValidationMetrics m = validate(q, bp.ocp, ds);
  const ValidationMetrics l = validate_lqr(care, ds);
  Json j;
  j["samples"] = m.sample_count;
  j[to_string(q.mode)] = {{"rmae_value", m.rmae_value}, {"rml2_control", m.rml2_control}};
  j["lqr"] = {{"rmae_value", l.rmae_value}, {"rml2_control", l.rml2_control}};
  if (!out.empty()) write_text(out, j.dump(2));
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_simulate(const Json& cfg, std::uint64_t seed, const std::string& kind,
                 const std::string& model, std::optional<double> ic_norm,
                 std::optional<double> tf_opt, const std::string& out) {
  const auto bp = build_problem(problem_spec(cfg));
  const RiccatiSolution care = design_lqr(bp.ocp);
  std::mt19937_64 rng(seed);
  Vector x0 = burgers::sample_initial_condition(bp.grid, rng);
  if (ic_norm) x0 = *ic_norm == 0.0 ? Vector::Zero(x0.size()).eval()
                                    : burgers::scale_to_norm(bp.grid, x0, *ic_norm);
  std::optional<Controller> ctrl;
  if (kind == "lqr") {
    ctrl = Controller::lqr(care);
  } else if (kind == "model") {
    if (model.empty()) throw ConfigError("--controller model needs --model");
    ctrl = Controller::model(load_model_for(model, bp.ocp));
  } else if (kind == "open-loop") {
    ctrl = Controller::open_loop(solve_infinite_horizon(bp.ocp, care, x0, horizon_config(cfg)));
  } else {
    throw ConfigError("unknown controller '" + kind + "'");
  }
  const CostGapConfig cg = cost_gap_config(cfg, seed);
  const double tf = tf_opt.value_or(cg.tf);
  const SimResult sim = simulate_closed_loop(bp.ocp, *ctrl, x0, tf, cg.sim);
  if (!out.empty()) write_text(out, sim.to_json());
  std::cout << "controller " << sim.controller << " ic_norm "
            << format_double(burgers::l2_norm(bp.grid, x0)) << " cost "
            << format_double(sim.accrued_cost) << " terminal_norm "
            << format_double(sim.terminal_state_norm) << " stabilized="
            << (sim.stabilized ? "true" : "false") << (sim.diverged ? " diverged" : "") << "\n";
  return sim.diverged ? 3 : 0;
}

int run_sensitivity(const Json& cfg, std::uint64_t seed, const fs::path& out) {
  const auto bp = build_problem(problem_spec(cfg));
  const RiccatiSolution care = design_lqr(bp.ocp);
  const SensitivityConfig sc = sensitivity_config(cfg, seed);
  const auto start = std::chrono::steady_clock::now();
  const SensitivityResult res = experiment_sensitivity(bp, care, sc);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  res.write_csv(out / "sensitivity.csv", sc.record_timing);
  res.write_summary_csv(out / "sensitivity_summary.csv");
  Json timing;
  timing["wall_seconds"] = wall;
  timing["train_seconds"] = Json::array();
  for (const auto& r : res.rows)
    timing["train_seconds"].push_back(
        {{"size", r.size}, {"trial", r.trial}, {"model", r.model}, {"seconds", r.train_seconds}});
  write_text(out / "sensitivity_timing.json", timing.dump(2));
  for (const auto& s : res.summary)
    std::cout << "size " << s.size << " " << s.model << " rmae_median "
              << format_double(s.rmae_median) << " rml2_median " << format_double(s.rml2_median)
              << "\n";
  std::cout << "wrote " << (out / "sensitivity.csv").string() << "\n";
  return 0;
}

int run_costgap(const Json& cfg, std::uint64_t seed, const std::vector<std::string>& models,
                const fs::path& out) {
  const auto bp = build_problem(problem_spec(cfg));
  const RiccatiSolution care = design_lqr(bp.ocp);
  std::vector<NamedController> ctrls{{"lqr", Controller::lqr(care)}};
  for (const auto& path : models) {
    QrnetParams q = load_model_for(path, bp.ocp);
    std::string name = to_string(q.mode);
    for (const auto& c : ctrls)
      if (c.name == name) name += "-" + std::to_string(ctrls.size());
    ctrls.push_back({name, Controller::model(std::move(q))});
  }
  const CostGapResult res = experiment_cost_gap(bp, care, ctrls, cost_gap_config(cfg, seed));
  res.write_csv(out / "costgap.csv");
  res.write_summary_csv(out / "costgap_summary.csv");
  for (const auto& s : res.summary)
    std::cout << "norm " << format_double(s.norm) << " " << s.controller << " used " << s.used
              << "/" << s.runs << " median_gap " << format_double(s.gap_median) << "\n";
  std::cout << "wrote " << (out / "costgap.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QRnet value-function pipeline for the Burgers stabilization benchmark"};
  app.require_subcommand(1);

  Common common;
  std::uint64_t seed = 0;
  std::string out, data, model, controller = "lqr";
  std::vector<std::string> models;
  std::optional<double> ic_norm, tf;
  std::optional<std::string> mode;

  auto* care = app.add_subcommand("care", "solve the Riccati equation, write P.csv and K.csv");
  add_common(care, common);
  std::string care_out = ".";
  care->add_option("--out", care_out, "output directory");

  auto* gen = app.add_subcommand("generate", "generate a characteristic dataset");
  add_common(gen, common);
  gen->add_option("--trajectories", common.trajectories, "number of trajectories");
  gen->add_option("--seed", seed, "RNG seed")->required();
  gen->add_option("--out", out, "dataset CSV")->required();

  auto* train = app.add_subcommand("train", "train a value model on a dataset");
  add_common(train, common);
  train->add_option("--data", data, "dataset CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "initialization seed")->required();
  train->add_option("--mode", mode, "qrnet | plain-nn (model.mode)");
  train->add_option("--out", out, "checkpoint JSON")->required();

  auto* eval = app.add_subcommand("evaluate", "validation metrics of a model and of LQR");
  add_common(eval, common);
  eval->add_option("--model", model, "checkpoint JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "dataset CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out, "metrics JSON");

  auto* sim = app.add_subcommand("simulate", "closed-loop simulation from a random IC");
  add_common(sim, common);
  sim->add_option("--controller", controller, "lqr | model | open-loop");
  sim->add_option("--model", model, "checkpoint JSON for --controller model");
  sim->add_option("--ic-norm", ic_norm, "rescale the IC to this L2 norm");
  sim->add_option("--tf", tf, "final time (experiment.tf)");
  sim->add_option("--seed", seed, "IC seed")->required();
  sim->add_option("--out", out, "SimResult JSON");

  auto* sens = app.add_subcommand("exp-sensitivity", "accuracy versus training-set size");
  add_common(sens, common);
  sens->add_option("--seed", seed, "master seed")->required();
  sens->add_option("--out", out, "output directory")->required();

  auto* gap = app.add_subcommand("exp-costgap", "closed-loop cost gaps versus IC norm");
  add_common(gap, common);
  gap->add_option("--model", models, "checkpoint(s) to compare with LQR");
  gap->add_option("--seed", seed, "master seed")->required();
  gap->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    Json cfg = resolve_config(cmd, common);
    if (mode) apply_override(cfg, "model.mode", Json(*mode).dump());
    if (cmd == care) return run_care(cfg, care_out);
    if (cmd == gen) return run_generate(cfg, seed, out);
    if (cmd == train) return run_train(cfg, seed, data, out);
    if (cmd == eval) return run_evaluate(cfg, model, data, out);
    if (cmd == sim) return run_simulate(cfg, seed, controller, model, ic_norm, tf, out);
    if (cmd == sens) return run_sensitivity(cfg, seed, out);
    if (cmd == gap) return run_costgap(cfg, seed, models, out);
    return 2;
  } catch (const FingerprintMismatch& e) {
    std::cerr << "error: fingerprint mismatch: " << e.what() << "\n";
    return 4;
  } catch (const SolverError& e) {
    std::cerr << "error: numerical failure: " << e.what() << " (residual "
              << format_double(e.residual()) << ")\n";
    return 3;
  } catch (const TrajectoryRejected& e) {
    std::cerr << "error: numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DataGenerationError& e) {
    std::cerr << "error: numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
