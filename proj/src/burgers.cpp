#include "qrnet/burgers.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "qrnet/csv.hpp"
#include "qrnet/errors.hpp"

namespace qrnet::burgers {

using std::numbers::pi;

ChebGrid cheb_grid(int n) {
  require(n >= 2, "cheb_grid: n must be >= 2");
  const int N = n + 1;  // polynomial degree on the full grid
  ChebGrid g;
  g.n = n;
  g.full_nodes.resize(N + 1);
  for (int j = 0; j <= N; ++j) g.full_nodes(j) = std::cos(pi * j / N);
  // exact symmetry of the node set
  for (int j = 0; j <= N / 2; ++j) {
    const double v = 0.5 * (g.full_nodes(j) - g.full_nodes(N - j));
    g.full_nodes(j) = v;
    g.full_nodes(N - j) = -v;
  }
  if (N % 2 == 0) g.full_nodes(N / 2) = 0.0;

  // Differentiation matrix; diagonal by negative row sums.
  Vector c(N + 1);
  for (int j = 0; j <= N; ++j) c(j) = ((j == 0 || j == N) ? 2.0 : 1.0) * ((j % 2) ? -1.0 : 1.0);
  g.D_full = Matrix::Zero(N + 1, N + 1);
  for (int i = 0; i <= N; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j <= N; ++j) {
      if (i == j) continue;
      g.D_full(i, j) = (c(i) / c(j)) / (g.full_nodes(i) - g.full_nodes(j));
      row_sum += g.D_full(i, j);
    }
    g.D_full(i, i) = -row_sum;
  }
  g.D2_full = g.D_full * g.D_full;

  // Clenshaw-Curtis weights.
  g.full_weights = Vector::Zero(N + 1);
  Vector v = Vector::Ones(N - 1);
  if (N % 2 == 0) {
    g.full_weights(0) = g.full_weights(N) = 1.0 / (N * N - 1.0);
    for (int k = 1; k < N / 2; ++k)
      for (int i = 1; i < N; ++i) v(i - 1) -= 2.0 * std::cos(2.0 * k * pi * i / N) / (4.0 * k * k - 1.0);
    for (int i = 1; i < N; ++i) v(i - 1) -= std::cos(N * pi * i / N) / (N * N - 1.0);
  } else {
    g.full_weights(0) = g.full_weights(N) = 1.0 / (N * N);
    for (int k = 1; k <= (N - 1) / 2; ++k)
      for (int i = 1; i < N; ++i) v(i - 1) -= 2.0 * std::cos(2.0 * k * pi * i / N) / (4.0 * k * k - 1.0);
  }
  for (int i = 1; i < N; ++i) g.full_weights(i) = 2.0 * v(i - 1) / N;
  for (int i = 0; i <= N; ++i)
    require(g.full_weights(i) > 0.0, "cheb_grid: nonpositive Clenshaw-Curtis weight");

  g.nodes = g.full_nodes.segment(1, n);
  g.D = g.D_full.block(1, 1, n, n);
  g.D2 = g.D2_full.block(1, 1, n, n);
  g.w = g.full_weights.segment(1, n);
  return g;
}

double alpha_profile(double xi, double kappa) {
  if (xi < -0.2 || xi > 0.2) return 0.0;
  return -kappa * (xi + 0.2) * (xi - 0.2);
}

std::array<double, 2> actuator_profiles(double xi, double kappa) {
  std::array<double, 2> b{0.0, 0.0};
  if (xi >= -0.8 && xi <= -0.4) b[0] = -kappa * (xi + 0.8) * (xi + 0.4);
  if (xi >= 0.4 && xi <= 0.8) b[1] = -kappa * (xi - 0.4) * (xi - 0.8);
  return b;
}

namespace {

std::string tag_for(const char* kind, int n, const Params& p) {
  return std::string(kind) + " n=" + std::to_string(n) + " nu=" + format_double(p.nu) +
         " beta=" + format_double(p.beta) + " kappa=" + format_double(p.kappa) +
         " R=" + format_double(p.R);
}

QuadraticCost burgers_cost(const ChebGrid& g, const Params& p) {
  return QuadraticCost{Matrix(g.w.asDiagonal()), p.R * Matrix::Identity(2, 2),
                       Vector::Zero(g.n), Vector::Zero(2)};
}

void collocate(const ChebGrid& g, const Params& p, Vector& alpha, Matrix& B) {
  alpha.resize(g.n);
  B.resize(g.n, 2);
  for (int j = 0; j < g.n; ++j) {
    alpha(j) = alpha_profile(g.nodes(j), p.kappa);
    const auto b = actuator_profiles(g.nodes(j), p.kappa);
    B(j, 0) = b[0];
    B(j, 1) = b[1];
  }
}

}  // namespace

BurgersProblem build_problem(int n, const Params& params) {
  ChebGrid grid = cheb_grid(n);
  Vector alpha;
  Matrix B;
  collocate(grid, params, alpha, B);

  const Matrix D = grid.D;
  const Matrix nuD2 = params.nu * grid.D2;
  const double beta = params.beta;

  auto drift = [D, nuD2, alpha, beta](const Vector& x) -> Vector {
    const Eigen::ArrayXd e = (-beta * x.array()).exp();
    return -0.5 * D * x.cwiseProduct(x) + nuD2 * x +
           Vector(alpha.array() * x.array() * e);
  };
  auto jacobian = [D, nuD2, alpha, beta](const Vector& x) -> Matrix {
    const Eigen::ArrayXd e = (-beta * x.array()).exp();
    Matrix J = -D * x.asDiagonal();
    J += nuD2;
    J.diagonal() += Vector(alpha.array() * e * (1.0 - beta * x.array()));
    return J;
  };
  auto curvature = [D, alpha, beta](const Vector& x, const Vector& lambda) -> Matrix {
    const Eigen::ArrayXd e = (-beta * x.array()).exp();
    const Vector diag = -(D.transpose() * lambda) +
                        Vector(alpha.array() * lambda.array() * (-beta) * e *
                               (2.0 - beta * x.array()));
    return Matrix(diag.asDiagonal());
  };

  ControlAffineDynamics dyn(n, 2, drift, B, jacobian, curvature);
  OcpProblem ocp(std::move(dyn), burgers_cost(grid, params), tag_for("burgers", n, params));
  return BurgersProblem{std::move(grid), params, std::move(alpha), std::move(B), std::move(ocp)};
}

BurgersProblem build_linearized_problem(int n, const Params& params) {
  ChebGrid grid = cheb_grid(n);
  Vector alpha;
  Matrix B;
  collocate(grid, params, alpha, B);
  Matrix A = params.nu * grid.D2;
  A.diagonal() += alpha;

  auto drift = [A](const Vector& x) -> Vector { return A * x; };
  auto jacobian = [A](const Vector&) -> Matrix { return A; };
  auto curvature = [n](const Vector&, const Vector&) -> Matrix { return Matrix::Zero(n, n); };

  ControlAffineDynamics dyn(n, 2, drift, B, jacobian, curvature);
  OcpProblem ocp(std::move(dyn), burgers_cost(grid, params),
                 tag_for("linear-burgers", n, params));
  return BurgersProblem{std::move(grid), params, std::move(alpha), std::move(B), std::move(ocp)};
}

std::array<double, 10> sample_sine_coefficients(std::mt19937_64& rng) {
  std::array<double, 10> a{};
  for (int k = 1; k <= 10; ++k) {
    std::uniform_real_distribution<double> dist(-1.0 / k, 1.0 / k);
    a[static_cast<std::size_t>(k - 1)] = dist(rng);
  }
  return a;
}

Vector sine_series(const ChebGrid& grid, const std::array<double, 10>& coeffs) {
  Vector x = Vector::Zero(grid.n);
  for (int j = 0; j < grid.n; ++j)
    for (int k = 1; k <= 10; ++k)
      x(j) += coeffs[static_cast<std::size_t>(k - 1)] * std::sin(k * pi * grid.nodes(j));
  return x;
}

Vector sample_initial_condition(const ChebGrid& grid, std::mt19937_64& rng) {
  return sine_series(grid, sample_sine_coefficients(rng));
}

double l2_norm(const ChebGrid& grid, const Vector& x) {
  require(x.size() == grid.n, "l2_norm: dimension mismatch");
  return std::sqrt(x.dot(grid.w.cwiseProduct(x)));
}

Vector scale_to_norm(const ChebGrid& grid, const Vector& x0, double target) {
  const double nrm = l2_norm(grid, x0);
  require(nrm > 0.0, "scale_to_norm: zero-norm input");
  return x0 * (target / nrm);
}

void write_grid_csv(const ChebGrid& grid, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "nodes.csv");
  if (!out) throw ConfigError("cannot write grid to " + dir.string());
  out << "# chebyshev interior grid n=" << grid.n << "\nxi,w\n";
  for (int j = 0; j < grid.n; ++j)
    out << format_double(grid.nodes(j)) << ',' << format_double(grid.w(j)) << '\n';
  write_matrix_csv(dir / "D.csv", grid.D, "D n=" + std::to_string(grid.n));
  write_matrix_csv(dir / "D2.csv", grid.D2, "D2 n=" + std::to_string(grid.n));
}

}  // namespace qrnet::burgers
