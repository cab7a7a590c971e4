#pragma once

// Causality-free value-function data: each initial condition is mapped to an
// infinite-horizon characteristic by solving the Pontryagin two-point BVP
//   xdot = f(x, u*(x; lambda)),  x(0) = x0
//   lambdadot = -H_x(x, lambda, u*),  lambda(tf) = 0
// from an LQR warm start, extending tf until the terminal running cost is
// negligible, then integrating the running cost backwards for V.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qrnet/bvp.hpp"
#include "qrnet/lqr.hpp"
#include "qrnet/ocp.hpp"
#include "qrnet/ode.hpp"

namespace qrnet {

struct HorizonConfig {
  double tf_initial = 10.0;
  double tf_extension = 10.0;
  int max_extensions = 5;
  /// Terminal running-cost threshold for accepting the horizon.
  double eps_L = 1e-6;
  /// Hamiltonian check: |H| <= eps_H (1 + L(x0, u0)) at every node.
  double eps_H = 1e-3;
  BvpOptions bvp{};
  OdeOptions warm{1e-6, 1e-8, 1e6, 2'000'000};
  /// The warm-start integrator grid is thinned to at most this many nodes
  /// before being handed to the BVP solver as its initial mesh.
  int initial_mesh_nodes = 60;
  /// Keep samples with t <= tf / T.
  double truncation_T = 3.0;
};

struct WarmStart {
  std::vector<double> times;
  Matrix states;    // n x N
  Matrix costates;  // n x N, 2 P (x - xbar)
};

/// Closed-loop LQR simulation on [0, tf]. Throws TrajectoryRejected when the
/// state norm exceeds options.blowup_norm.
WarmStart lqr_warm_start(const OcpProblem& problem, const RiccatiSolution& care,
                         const Vector& x0, double tf, const OdeOptions& options = {1e-6, 1e-8});

/// The PMP system on y = [x; lambda] with bc [x(0) - x0; lambda(tf)].
BvpSystem pmp_system(const OcpProblem& problem, const Vector& x0);

struct CharacteristicTrajectory {
  std::vector<double> times;
  Matrix states;    // n x N
  Matrix costates;  // n x N
  Matrix controls;  // m x N
  Vector values;    // N
  double tf = 0.0;
  double terminal_running_cost = 0.0;
  double max_hamiltonian = 0.0;
  int extensions = 0;
  BvpSolution bvp;
};

/// Value v(t_j) = int_{t_j}^{tf} L ds at the mesh nodes; each interval is
/// integrated by composite Simpson on 4 subintervals through the interpolant.
Vector compute_value_along(const OcpProblem& problem, const BvpSolution& bvp);

/// Throws TrajectoryRejected (horizon limit, BVP failure, Hamiltonian check).
CharacteristicTrajectory solve_infinite_horizon(const OcpProblem& problem,
                                                const RiccatiSolution& care,
                                                const Vector& x0,
                                                const HorizonConfig& cfg = {});

struct Sample {
  int traj = 0;
  double t = 0.0;
  Vector x;
  double V = 0.0;
  Vector lambda;
  Vector u;
};

struct Dataset {
  int n = 0;
  int m = 0;
  std::string fingerprint;
  std::uint64_t seed = 0;
  std::vector<Sample> samples;
};

/// One sample per stored node with t <= tf / T.
std::vector<Sample> truncate_trajectory(const CharacteristicTrajectory& traj, double T,
                                        int traj_id = 0);

struct TrajectoryReport {
  int id = 0;
  bool accepted = false;
  std::string status;
  double tf = 0.0;
  int nodes = 0;
  int extensions = 0;
  double wall_seconds = 0.0;
};

struct GenerationReport {
  std::vector<TrajectoryReport> trajectories;
  int accepted = 0;
  int rejected = 0;
  double wall_seconds = 0.0;

  std::string to_json() const;
};

using IcSampler = std::function<Vector(std::mt19937_64&)>;

/// Initial conditions are drawn sequentially from a generator seeded with
/// `seed`; solves run on `workers` threads and are assembled in trajectory
/// order. Throws DataGenerationError if more than half are rejected.
Dataset generate_dataset(const OcpProblem& problem, const RiccatiSolution& care,
                         const IcSampler& sampler, int n_traj, const HorizonConfig& cfg,
                         std::uint64_t seed, int workers = 1,
                         GenerationReport* report = nullptr);

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
/// Also checks the fingerprint; throws FingerprintMismatch.
Dataset load_dataset(const std::filesystem::path& path, const std::string& expected_fingerprint);

}  // namespace qrnet
