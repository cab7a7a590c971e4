#include "qrnet/train.hpp"

#include <chrono>
#include <fstream>

#include "json.hpp"
#include "qrnet/csv.hpp"
#include "qrnet/errors.hpp"
#include "qrnet/parallel.hpp"

namespace qrnet {

namespace {

struct Block {
  Matrix X, Lam, U;
  Vector V;
};

Block pack(const Dataset& ds, std::size_t begin, std::size_t end) {
  const auto N = static_cast<Eigen::Index>(end - begin);
  Block b;
  b.X.resize(ds.n, N);
  b.Lam.resize(ds.n, N);
  b.U.resize(ds.m, N);
  b.V.resize(N);
  for (std::size_t i = begin; i < end; ++i) {
    const auto j = static_cast<Eigen::Index>(i - begin);
    const Sample& s = ds.samples[i];
    b.X.col(j) = s.x;
    b.Lam.col(j) = s.lambda;
    b.U.col(j) = s.u;
    b.V(j) = s.V;
  }
  return b;
}

void check_dataset(const QrnetParams& q, const Dataset& ds) {
  require(!ds.samples.empty(), "loss: empty dataset");
  require(ds.n == q.state_dim(), "loss: dataset/model state dimension mismatch");
}

// Model controls for a batch of states and model gradients.
Matrix batch_controls(const OcpProblem& problem, const Matrix& X, const Matrix& grads) {
  const auto& dyn = problem.dynamics();
  const Vector& u_bar = problem.cost().u_bar;
  if (dyn.has_constant_input()) {
    const Matrix gain = -0.5 * problem.R_inverse() * dyn.input_map(problem.cost().x_bar).transpose();
    Matrix U = gain * grads;
    U.colwise() += u_bar;
    return U;
  }
  Matrix U(problem.control_dim(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    U.col(j) = optimal_control(problem, X.col(j), grads.col(j));
  return U;
}

struct ChunkResult {
  LossTerms sums;
  Vector grad;
};

ValidationMetrics metrics_from(const Dataset& ds, const Vector& Vhat, const Matrix& Uhat) {
  require(!ds.samples.empty(), "validate: empty dataset");
  double ev = 0, nv = 0, eu = 0, nu = 0;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    const auto j = static_cast<Eigen::Index>(i);
    ev += std::abs(s.V - Vhat(j));
    nv += std::abs(s.V);
    eu += (s.u - Uhat.col(j)).norm();
    nu += s.u.norm();
  }
  if (!(nv > 0.0) || !(nu > 0.0))
    throw ContractViolation("validate: metric undefined (all-zero values or controls)");
  return {ev / nv, eu / nu, static_cast<long>(ds.samples.size())};
}

}  // namespace

LossTerms total_loss(const QrnetParams& q, const OcpProblem& problem, const Dataset& ds,
                     const LossWeights& w, Vector* grad, int workers, int chunk) {
  check_dataset(q, ds);
  require(w.mu_lambda >= 0.0 && w.mu_u >= 0.0, "loss: weights must be nonnegative");
  require(chunk >= 1, "loss: chunk must be positive");
  require(ds.m == problem.control_dim() && ds.n == problem.state_dim(),
          "loss: dataset/problem dimension mismatch");
  const std::size_t S = ds.samples.size();
  const std::size_t nchunks = (S + static_cast<std::size_t>(chunk) - 1) / static_cast<std::size_t>(chunk);
  const double inv_S = 1.0 / static_cast<double>(S);
  const bool constant_g = problem.dynamics().has_constant_input();
  const Matrix g_const =
      constant_g ? problem.dynamics().input_map(problem.cost().x_bar) : Matrix();
  std::vector<ChunkResult> parts(nchunks);

  parallel_for(nchunks, workers, [&](std::size_t c) {
    const std::size_t begin = c * static_cast<std::size_t>(chunk);
    const std::size_t end = std::min(S, begin + static_cast<std::size_t>(chunk));
    const Block b = pack(ds, begin, end);
    const BatchEvaluation ev = evaluate_batch(q, b.X);
    const Vector rv = b.V - ev.values;
    const Matrix rl = b.Lam - ev.gradients;
    const Matrix ru = b.U - batch_controls(problem, b.X, ev.gradients);
    ChunkResult& out = parts[c];
    out.sums.value = rv.squaredNorm();
    out.sums.lambda = rl.squaredNorm();
    out.sums.control = ru.squaredNorm();
    if (grad) {
      const Vector wv = -2.0 * inv_S * rv;
      const Matrix wu = -2.0 * w.mu_u * inv_S * ru;
      Matrix wl = -2.0 * w.mu_lambda * inv_S * rl;
      if (constant_g) {
        wl -= 0.5 * g_const * (problem.R_inverse() * wu);
      } else {
        for (Eigen::Index j = 0; j < b.X.cols(); ++j)
          wl.col(j) -= 0.5 * problem.dynamics().input_map(b.X.col(j)) *
                       (problem.R_inverse() * wu.col(j));
      }
      out.grad = Vector::Zero(q.num_params());
      accumulate_parameter_gradients(q, b.X, wv, wl, out.grad);
    }
  });

  LossTerms t;
  if (grad) *grad = Vector::Zero(q.num_params());
  for (const auto& p : parts) {
    t.value += p.sums.value;
    t.lambda += p.sums.lambda;
    t.control += p.sums.control;
    if (grad) *grad += p.grad;
  }
  t.value *= inv_S;
  t.lambda *= inv_S;
  t.control *= inv_S;
  t.total = t.value + w.mu_lambda * t.lambda + w.mu_u * t.control;
  return t;
}

double loss_value(const QrnetParams& q, const Dataset& ds) {
  check_dataset(q, ds);
  double sum = 0.0;
  for (std::size_t begin = 0; begin < ds.samples.size(); begin += 512) {
    const Block b = pack(ds, begin, std::min(ds.samples.size(), begin + 512));
    sum += (b.V - evaluate_batch(q, b.X).values).squaredNorm();
  }
  return sum / static_cast<double>(ds.samples.size());
}

double loss_lambda(const QrnetParams& q, const Dataset& ds) {
  check_dataset(q, ds);
  double sum = 0.0;
  for (std::size_t begin = 0; begin < ds.samples.size(); begin += 512) {
    const Block b = pack(ds, begin, std::min(ds.samples.size(), begin + 512));
    sum += (b.Lam - evaluate_batch(q, b.X).gradients).squaredNorm();
  }
  return sum / static_cast<double>(ds.samples.size());
}

double loss_control(const QrnetParams& q, const OcpProblem& problem, const Dataset& ds) {
  check_dataset(q, ds);
  double sum = 0.0;
  for (std::size_t begin = 0; begin < ds.samples.size(); begin += 512) {
    const Block b = pack(ds, begin, std::min(ds.samples.size(), begin + 512));
    const BatchEvaluation ev = evaluate_batch(q, b.X);
    sum += (b.U - batch_controls(problem, b.X, ev.gradients)).squaredNorm();
  }
  return sum / static_cast<double>(ds.samples.size());
}

std::string TrainReport::to_json() const {
  nlohmann::ordered_json j;
  j["final_loss"] = final_loss;
  j["iterations"] = iterations;
  j["evaluations"] = evaluations;
  j["converged_reason"] = to_string(converged_reason);
  j["wall_time"] = wall_time;
  j["loss_history"] = loss_history;
  return j.dump(2);
}

void TrainReport::write_history_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "iter,loss\n";
  for (std::size_t i = 0; i < loss_history.size(); ++i)
    out << i << ',' << format_double(loss_history[i]) << '\n';
}

TrainReport train_model(QrnetParams& q, const OcpProblem& problem, const Dataset& ds,
                        const TrainConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  QrnetParams work = q;
  Objective obj = [&](const Vector& theta, Vector& grad) {
    work.unflatten(theta);
    return total_loss(work, problem, ds, cfg.weights, &grad, cfg.workers, cfg.chunk).total;
  };
  const LbfgsResult res = lbfgs_minimize(obj, q.flatten(), cfg.lbfgs);
  q.unflatten(res.theta);
  TrainReport rep;
  rep.loss_history = res.history;
  rep.final_loss = res.value;
  rep.iterations = res.iterations;
  rep.evaluations = res.evaluations;
  rep.converged_reason = res.reason;
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

ValidationMetrics validate(const QrnetParams& q, const OcpProblem& problem, const Dataset& ds) {
  check_dataset(q, ds);
  Vector Vhat(static_cast<Eigen::Index>(ds.samples.size()));
  Matrix Uhat(ds.m, Vhat.size());
  for (std::size_t begin = 0; begin < ds.samples.size(); begin += 512) {
    const std::size_t end = std::min(ds.samples.size(), begin + 512);
    const Block b = pack(ds, begin, end);
    const BatchEvaluation ev = evaluate_batch(q, b.X);
    const auto len = static_cast<Eigen::Index>(end - begin);
    Vhat.segment(static_cast<Eigen::Index>(begin), len) = ev.values;
    Uhat.middleCols(static_cast<Eigen::Index>(begin), len) =
        batch_controls(problem, b.X, ev.gradients);
  }
  return metrics_from(ds, Vhat, Uhat);
}

ValidationMetrics validate_lqr(const RiccatiSolution& care, const Dataset& ds) {
  Vector Vhat(static_cast<Eigen::Index>(ds.samples.size()));
  Matrix Uhat(ds.m, Vhat.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    Vhat(j) = lqr_value(care, ds.samples[i].x);
    Uhat.col(j) = lqr_control(care, ds.samples[i].x);
  }
  return metrics_from(ds, Vhat, Uhat);
}

}  // namespace qrnet
