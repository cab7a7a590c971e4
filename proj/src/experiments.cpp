#include "qrnet/experiments.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "qrnet/csv.hpp"
#include "qrnet/errors.hpp"
#include "qrnet/parallel.hpp"

namespace qrnet {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string status_text(const std::exception& e) {
  std::string s = std::string("failed: ") + e.what();
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::string num(double v) { return std::isfinite(v) ? format_double(v) : "nan"; }

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix(master);
  for (std::uint64_t p : path) s = splitmix(s ^ splitmix(p + 0x632be59bd9b4e019ULL));
  return s;
}

double percentile(std::vector<double> values, double p) {
  require(!values.empty(), "percentile: empty sample");
  require(p >= 0.0 && p <= 100.0, "percentile: p outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

void SensitivityResult::write_csv(const std::filesystem::path& path, bool with_timing) const {
  auto out = open_out(path);
  out << "size,trial,model,rmae_v,rml2_u,train_s,status\n";
  for (const auto& r : rows) {
    out << r.size << ',' << r.trial << ',' << r.model << ',' << num(r.rmae_v) << ','
        << num(r.rml2_u) << ',' << (with_timing ? num(r.train_seconds) : std::string("na"))
        << ',' << r.status << '\n';
  }
}

void SensitivityResult::write_summary_csv(const std::filesystem::path& path) const {
  auto out = open_out(path);
  out << "size,model,count,rmae_p25,rmae_median,rmae_p75,rml2_p25,rml2_median,rml2_p75\n";
  for (const auto& s : summary) {
    out << s.size << ',' << s.model << ',' << s.count << ',' << num(s.rmae_p25) << ','
        << num(s.rmae_median) << ',' << num(s.rmae_p75) << ',' << num(s.rml2_p25) << ','
        << num(s.rml2_median) << ',' << num(s.rml2_p75) << '\n';
  }
}

SensitivityResult experiment_sensitivity(const burgers::BurgersProblem& problem,
                                         const RiccatiSolution& care,
                                         const SensitivityConfig& cfg) {
  require(!cfg.sizes.empty() && cfg.trials >= 1 && cfg.validation_trajectories >= 1,
          "experiment_sensitivity: counts must be >= 1");
  for (int s : cfg.sizes) require(s >= 1, "experiment_sensitivity: sizes must be >= 1");
  const OcpProblem& ocp = problem.ocp;
  const burgers::ChebGrid grid = problem.grid;
  const IcSampler sampler = [grid](std::mt19937_64& rng) {
    return burgers::sample_initial_condition(grid, rng);
  };
  const Dataset validation =
      generate_dataset(ocp, care, sampler, cfg.validation_trajectories, cfg.horizon,
                       derive_seed(cfg.seed, {3}), cfg.workers);

  SensitivityResult result;
  const ValidationMetrics lqr = validate_lqr(care, validation);
  result.rows.push_back({0, 0, "lqr", lqr.rmae_value, lqr.rml2_control, 0.0, "ok"});

  std::vector<int> layers{ocp.state_dim()};
  layers.insert(layers.end(), cfg.hidden.begin(), cfg.hidden.end());
  layers.push_back(1);
  const ModelMode modes[] = {ModelMode::plain_nn, ModelMode::qrnet};

  const std::size_t cells = cfg.sizes.size() * static_cast<std::size_t>(cfg.trials);
  std::vector<std::array<SensitivityRow, 2>> cell_rows(cells);
  parallel_for(cells, cfg.workers, [&](std::size_t c) {
    const int size = cfg.sizes[c / static_cast<std::size_t>(cfg.trials)];
    const int trial = static_cast<int>(c % static_cast<std::size_t>(cfg.trials));
    auto& out = cell_rows[c];
    for (int k = 0; k < 2; ++k)
      out[static_cast<std::size_t>(k)] = {size, trial, to_string(modes[k]), kNaN, kNaN, 0.0, ""};
    Dataset train;
    try {
      train = generate_dataset(ocp, care, sampler, size, cfg.horizon,
                               derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(size),
                                                      static_cast<std::uint64_t>(trial)}),
                               1);
    } catch (const std::exception& e) {
      for (auto& r : out) r.status = status_text(e);
      return;
    }
    const std::uint64_t init_seed = derive_seed(
        cfg.seed, {2, static_cast<std::uint64_t>(size), static_cast<std::uint64_t>(trial)});
    TrainConfig tc = cfg.train;
    tc.workers = 1;
    for (int k = 0; k < 2; ++k) {
      SensitivityRow& row = out[static_cast<std::size_t>(k)];
      try {
        QrnetParams q = init_params(layers, init_seed, modes[k], care.P, care.x_bar, care.u_bar,
                                    ocp.fingerprint());
        const TrainReport rep = train_model(q, ocp, train, tc);
        const ValidationMetrics m = validate(q, ocp, validation);
        row.rmae_v = m.rmae_value;
        row.rml2_u = m.rml2_control;
        row.train_seconds = rep.wall_time;
        row.status = "ok";
      } catch (const std::exception& e) {
        row.status = status_text(e);
      }
    }
  });
  for (const auto& cr : cell_rows) result.rows.insert(result.rows.end(), cr.begin(), cr.end());

  result.summary.push_back({0, "lqr", 1, lqr.rmae_value, lqr.rmae_value, lqr.rmae_value,
                            lqr.rml2_control, lqr.rml2_control, lqr.rml2_control});
  for (int size : cfg.sizes) {
    for (ModelMode mode : modes) {
      std::vector<double> rv, ru;
      for (const auto& r : result.rows)
        if (r.size == size && r.model == to_string(mode) && r.status == "ok") {
          rv.push_back(r.rmae_v);
          ru.push_back(r.rml2_u);
        }
      SensitivitySummaryRow s{size, to_string(mode), static_cast<int>(rv.size()),
                              kNaN, kNaN, kNaN, kNaN, kNaN, kNaN};
      if (!rv.empty()) {
        s.rmae_p25 = percentile(rv, 25);
        s.rmae_median = percentile(rv, 50);
        s.rmae_p75 = percentile(rv, 75);
        s.rml2_p25 = percentile(ru, 25);
        s.rml2_median = percentile(ru, 50);
        s.rml2_p75 = percentile(ru, 75);
      }
      result.summary.push_back(s);
    }
  }
  return result;
}

void CostGapResult::write_csv(const std::filesystem::path& path) const {
  auto out = open_out(path);
  out << "norm,run,controller,cost,gap,status\n";
  for (const auto& r : rows)
    out << num(r.norm) << ',' << r.run << ',' << r.controller << ',' << num(r.cost) << ','
        << num(r.gap) << ',' << r.status << '\n';
}

void CostGapResult::write_summary_csv(const std::filesystem::path& path) const {
  auto out = open_out(path);
  out << "norm,controller,runs,used,gap_p15,gap_median,gap_p85\n";
  for (const auto& s : summary)
    out << num(s.norm) << ',' << s.controller << ',' << s.runs << ',' << s.used << ','
        << num(s.gap_p15) << ',' << num(s.gap_median) << ',' << num(s.gap_p85) << '\n';
}

double CostGapResult::median_gap(double norm, const std::string& controller) const {
  for (const auto& s : summary)
    if (s.norm == norm && s.controller == controller) return s.gap_median;
  return kNaN;
}

Vector cost_gap_initial_condition(const burgers::ChebGrid& grid, std::uint64_t seed, int group,
                                  int run, double norm) {
  require(norm >= 0.0, "cost_gap_initial_condition: negative norm");
  if (norm == 0.0) return Vector::Zero(grid.n);
  std::mt19937_64 rng(derive_seed(seed, {4, static_cast<std::uint64_t>(group),
                                         static_cast<std::uint64_t>(run)}));
  return burgers::scale_to_norm(grid, burgers::sample_initial_condition(grid, rng), norm);
}

CostGapResult experiment_cost_gap(const burgers::BurgersProblem& problem,
                                  const RiccatiSolution& care,
                                  const std::vector<NamedController>& controllers,
                                  const CostGapConfig& cfg) {
  require(!cfg.norms.empty() && cfg.per_group >= 1, "experiment_cost_gap: counts must be >= 1");
  require(!controllers.empty(), "experiment_cost_gap: no controllers");
  const OcpProblem& ocp = problem.ocp;
  const std::size_t per = static_cast<std::size_t>(cfg.per_group);
  const std::size_t cells = cfg.norms.size() * per;
  std::vector<std::vector<CostGapRow>> cell_rows(cells);

  parallel_for(cells, cfg.workers, [&](std::size_t c) {
    const int group = static_cast<int>(c / per);
    const int run = static_cast<int>(c % per);
    const double norm = cfg.norms[static_cast<std::size_t>(group)];
    auto& out = cell_rows[c];
    const Vector x0 = cost_gap_initial_condition(problem.grid, cfg.seed, group, run, norm);
    double optimal = kNaN;
    std::string opt_status;
    try {
      optimal = optimal_open_loop_cost(ocp, care, x0, cfg.horizon);
    } catch (const std::exception&) {
      opt_status = "optimal-rejected";
    }
    for (const auto& nc : controllers) {
      CostGapRow row{norm, run, nc.name, kNaN, kNaN, ""};
      try {
        const SimResult sim = simulate_closed_loop(ocp, nc.controller, x0, cfg.tf, cfg.sim);
        row.cost = sim.accrued_cost;
        row.gap = row.cost - optimal;
        if (!opt_status.empty()) row.status = opt_status;
        else if (sim.diverged) row.status = "diverged";
        else if (!sim.stabilized) row.status = "not-stabilized";
        else row.status = "ok";
      } catch (const std::exception& e) {
        row.status = status_text(e);
      }
      out.push_back(row);
    }
  });

  CostGapResult result;
  for (auto& cr : cell_rows) result.rows.insert(result.rows.end(), cr.begin(), cr.end());
  for (double norm : cfg.norms) {
    for (const auto& nc : controllers) {
      CostGapSummaryRow s{norm, nc.name, 0, 0, kNaN, kNaN, kNaN};
      std::vector<double> gaps;
      for (const auto& r : result.rows) {
        if (r.norm != norm || r.controller != nc.name) continue;
        ++s.runs;
        if ((r.status == "ok" || r.status == "not-stabilized") && std::isfinite(r.gap))
          gaps.push_back(r.gap);
      }
      s.used = static_cast<int>(gaps.size());
      if (!gaps.empty()) {
        s.gap_p15 = percentile(gaps, 15);
        s.gap_median = percentile(gaps, 50);
        s.gap_p85 = percentile(gaps, 85);
      }
      result.summary.push_back(s);
    }
  }
  return result;
}

}  // namespace qrnet
