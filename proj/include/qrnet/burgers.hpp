#pragma once

// Chebyshev pseudospectral discretization of the unstable reaction-advection-
// diffusion Burgers' equation
//   X_t = -1/2 (X^2)_xi + nu X_xixi + alpha(xi) X exp(-beta X) + b(xi)' u
// on (-1, 1) with homogeneous Dirichlet boundaries, and the quadratic cost
//   integral ||X||^2_{L2} + R u'u dt  ~  x' diag(w) x + R u'u.

#include <array>
#include <filesystem>
#include <random>

#include "qrnet/ocp.hpp"

namespace qrnet::burgers {

/// Chebyshev extreme grid xi_j = cos(j pi / (n + 1)), j = 0..n+1; xi_0 = 1 and
/// xi_{n+1} = -1 are the boundary nodes, the n interior nodes are collocated.
struct ChebGrid {
  int n = 0;
  Vector full_nodes;    // n + 2
  Matrix D_full;        // (n+2) x (n+2)
  Matrix D2_full;       // D_full * D_full
  Vector full_weights;  // Clenshaw-Curtis, n + 2
  Vector nodes;         // interior, strictly decreasing
  Matrix D;             // interior block of D_full
  Matrix D2;            // interior block of D2_full
  Vector w;             // interior weights
};

ChebGrid cheb_grid(int n);

struct Params {
  double nu = 0.02;
  double beta = 0.1;
  double kappa = 25.0;
  double R = 0.5;
};

double alpha_profile(double xi, double kappa = 25.0);
std::array<double, 2> actuator_profiles(double xi, double kappa = 25.0);

struct BurgersProblem {
  ChebGrid grid;
  Params params;
  Vector alpha;  // collocated alpha(xi)
  Matrix B;      // n x 2 collocated actuators
  OcpProblem ocp;
};

BurgersProblem build_problem(int n, const Params& params = {});

/// The linearization at the origin as a linear OcpProblem (same cost).
BurgersProblem build_linearized_problem(int n, const Params& params = {});

/// Coefficients a_k ~ U(-1/k, 1/k), k = 1..10.
std::array<double, 10> sample_sine_coefficients(std::mt19937_64& rng);

/// X0(xi_j) = sum_k a_k sin(k pi xi_j) at the interior nodes.
Vector sine_series(const ChebGrid& grid, const std::array<double, 10>& coeffs);

Vector sample_initial_condition(const ChebGrid& grid, std::mt19937_64& rng);

/// sqrt(x' diag(w) x)
double l2_norm(const ChebGrid& grid, const Vector& x);

/// Throws ContractViolation on a zero-norm input.
Vector scale_to_norm(const ChebGrid& grid, const Vector& x0, double target);

/// nodes.csv (xi,w), D.csv, D2.csv for the interior grid.
void write_grid_csv(const ChebGrid& grid, const std::filesystem::path& dir);

}  // namespace qrnet::burgers
