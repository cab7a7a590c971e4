#pragma once

// Experiment drivers: accuracy versus training-set size, and closed-loop cost
// gaps versus initial-condition norm. Each is a pure function of its config
// and master seed; cells run on a worker pool and are assembled in order.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qrnet/burgers.hpp"
#include "qrnet/datagen.hpp"
#include "qrnet/lqr.hpp"
#include "qrnet/model.hpp"
#include "qrnet/sim.hpp"
#include "qrnet/train.hpp"

namespace qrnet {

/// Deterministic child seed from a master seed and a tag path.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

/// Linear-interpolation percentile (p in [0, 100]) of a nonempty sample.
double percentile(std::vector<double> values, double p);

struct SensitivityConfig {
  std::vector<int> sizes{16};
  int trials = 5;
  int validation_trajectories = 50;
  std::vector<int> hidden{32, 32, 32, 32};
  TrainConfig train;
  HorizonConfig horizon;
  std::uint64_t seed = 0;
  int workers = 1;
  bool record_timing = false;
};

struct SensitivityRow {
  int size = 0;
  int trial = 0;
  std::string model;
  double rmae_v = 0.0;
  double rml2_u = 0.0;
  double train_seconds = 0.0;
  std::string status;
};

struct SensitivitySummaryRow {
  int size = 0;
  std::string model;
  int count = 0;
  double rmae_p25 = 0.0, rmae_median = 0.0, rmae_p75 = 0.0;
  double rml2_p25 = 0.0, rml2_median = 0.0, rml2_p75 = 0.0;
};

struct SensitivityResult {
  std::vector<SensitivityRow> rows;  // LQR baseline first
  std::vector<SensitivitySummaryRow> summary;

  /// size,trial,model,rmae_v,rml2_u,train_s,status; train_s is "na" unless
  /// timing was recorded.
  void write_csv(const std::filesystem::path& path, bool with_timing) const;
  void write_summary_csv(const std::filesystem::path& path) const;
};

SensitivityResult experiment_sensitivity(const burgers::BurgersProblem& problem,
                                         const RiccatiSolution& care,
                                         const SensitivityConfig& cfg);

struct NamedController {
  std::string name;
  Controller controller;
};

struct CostGapConfig {
  std::vector<double> norms{0.2, 0.6, 1.0};
  int per_group = 20;
  double tf = 30.0;
  SimOptions sim;
  HorizonConfig horizon;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct CostGapRow {
  double norm = 0.0;
  int run = 0;
  std::string controller;
  double cost = 0.0;
  double gap = 0.0;
  std::string status;  // ok, diverged, not-stabilized, optimal-rejected
};

struct CostGapSummaryRow {
  double norm = 0.0;
  std::string controller;
  int runs = 0;
  int used = 0;
  double gap_p15 = 0.0, gap_median = 0.0, gap_p85 = 0.0;
};

struct CostGapResult {
  std::vector<CostGapRow> rows;
  std::vector<CostGapSummaryRow> summary;

  /// norm,run,controller,cost,gap,status
  void write_csv(const std::filesystem::path& path) const;
  void write_summary_csv(const std::filesystem::path& path) const;
  /// Median gap of a controller in a norm group; NaN when no usable runs.
  double median_gap(double norm, const std::string& controller) const;
};

/// Initial condition `run` of norm group `group`: a sine-series sample
/// rescaled to `norm` (zero state for norm 0).
Vector cost_gap_initial_condition(const burgers::ChebGrid& grid, std::uint64_t seed,
                                  int group, int run, double norm);

/// Each initial condition is shared by all controllers (paired comparison).
CostGapResult experiment_cost_gap(const burgers::BurgersProblem& problem,
                                  const RiccatiSolution& care,
                                  const std::vector<NamedController>& controllers,
                                  const CostGapConfig& cfg);

}  // namespace qrnet
