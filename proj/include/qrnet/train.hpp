#pragma once

// Physics-informed regression of the value model:
//   loss = mean (V - V_nn)^2 + mu_lambda mean |lambda - grad V_nn|^2
//        + mu_u mean |u* - u_nn|^2
// minimized full-batch with L-BFGS.

#include <filesystem>
#include <string>
#include <vector>

#include "qrnet/datagen.hpp"
#include "qrnet/lbfgs.hpp"
#include "qrnet/lqr.hpp"
#include "qrnet/model.hpp"

namespace qrnet {

struct LossWeights {
  double mu_lambda = 0.0;
  double mu_u = 5.0;
};

struct LossTerms {
  double value = 0.0;
  double lambda = 0.0;
  double control = 0.0;
  double total = 0.0;
};

double loss_value(const QrnetParams& q, const Dataset& ds);
double loss_lambda(const QrnetParams& q, const Dataset& ds);
double loss_control(const QrnetParams& q, const OcpProblem& problem, const Dataset& ds);

/// Weighted objective; when `grad` is non-null it receives the exact
/// parameter gradient (size q.num_params()). Samples are reduced in fixed
/// chunks of `chunk` in order, so the result does not depend on `workers`.
LossTerms total_loss(const QrnetParams& q, const OcpProblem& problem, const Dataset& ds,
                     const LossWeights& w, Vector* grad = nullptr, int workers = 1,
                     int chunk = 512);

struct TrainConfig {
  LossWeights weights;
  LbfgsConfig lbfgs;
  int workers = 1;
  int chunk = 512;
};

struct TrainReport {
  std::vector<double> loss_history;
  double final_loss = 0.0;
  int iterations = 0;
  int evaluations = 0;
  StopReason converged_reason = StopReason::max_iter;
  double wall_time = 0.0;

  std::string to_json() const;
  /// iter,loss
  void write_history_csv(const std::filesystem::path& path) const;
};

/// Trains q in place.
TrainReport train_model(QrnetParams& q, const OcpProblem& problem, const Dataset& ds,
                        const TrainConfig& cfg);

struct ValidationMetrics {
  double rmae_value = 0.0;
  double rml2_control = 0.0;
  long sample_count = 0;
};

/// rmae = sum |V - V_nn| / sum |V|, rml2 = sum |u* - u_nn| / sum |u*|.
ValidationMetrics validate(const QrnetParams& q, const OcpProblem& problem, const Dataset& ds);
/// Same metrics with V_lqr and the LQR feedback as predictions.
ValidationMetrics validate_lqr(const RiccatiSolution& care, const Dataset& ds);

}  // namespace qrnet
