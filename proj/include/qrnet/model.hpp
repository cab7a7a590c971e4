#pragma once

// Value-function model
//   V(x) = (1/c) log(1 + c V_lqr(x)) + W(x),   c = exp(c_raw)
// where W is a tanh MLP with a linear scalar output. In plain-nn mode the
// LQR head is dropped and V = W. All derivatives are closed-form layer rules:
// the input gradient by reverse accumulation, and parameter gradients of
// contractions of (V, grad V) by a tangent-forward / reverse sweep.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qrnet/ocp.hpp"
#include "qrnet/types.hpp"

namespace qrnet {

enum class ModelMode { qrnet, plain_nn };

std::string to_string(ModelMode mode);
/// Accepts "qrnet" and "plain-nn"; throws ConfigError otherwise.
ModelMode parse_model_mode(const std::string& s);

struct MlpParams {
  std::vector<int> layer_sizes;  // [n, h1, ..., 1]
  std::vector<Matrix> weights;   // weights[l] is sizes[l+1] x sizes[l]
  std::vector<Vector> biases;

  int num_layers() const { return static_cast<int>(weights.size()); }
  /// Throws ContractViolation on an inconsistent shape chain.
  void validate() const;
};

struct QrnetParams {
  MlpParams mlp;
  double c_raw = 0.0;
  Matrix P;
  Vector x_bar;
  Vector u_bar;
  ModelMode mode = ModelMode::qrnet;
  std::string fingerprint;

  int state_dim() const { return mlp.layer_sizes.front(); }
  double c() const;
  /// Layer by layer (W row-major, then b), then c_raw.
  Eigen::Index num_params() const;
  Vector flatten() const;
  void unflatten(const Vector& theta);
};

double mlp_forward(const MlpParams& p, const Vector& x);
Vector mlp_gradient(const MlpParams& p, const Vector& x);

double qrnet_value(const QrnetParams& q, const Vector& x);
Vector qrnet_gradient(const QrnetParams& q, const Vector& x);
Vector qrnet_control(const QrnetParams& q, const OcpProblem& problem, const Vector& x);

/// Column j of `states` is one sample.
struct BatchEvaluation {
  Vector values;    // N
  Matrix gradients; // n x N
};

BatchEvaluation evaluate_batch(const QrnetParams& q, const Matrix& states);

/// Adds d/dtheta sum_j [ wV_j V(x_j) + wlam_j' grad V(x_j) ] to `grad`
/// (size num_params()). In plain-nn mode the c_raw entry is untouched.
void accumulate_parameter_gradients(const QrnetParams& q, const Matrix& states,
                                    const Vector& w_value, const Matrix& w_costate,
                                    Vector& grad);

/// d/dtheta [ wV V(x) + wlam' grad V(x) + wu' u(x) ] for one state, u from
/// the model gradient through the problem's minimizing control.
Vector parameter_gradients(const QrnetParams& q, const OcpProblem& problem,
                           const Vector& x, double w_value, const Vector& w_costate,
                           const Vector& w_control);

/// Glorot-uniform hidden layers, zero biases, zero output layer, c_raw = 0.
QrnetParams init_params(const std::vector<int>& layer_sizes, std::uint64_t seed,
                        ModelMode mode, const Matrix& P, const Vector& x_bar,
                        const Vector& u_bar, const std::string& fingerprint = {});

void save_model(const QrnetParams& q, const std::filesystem::path& path);
/// Throws ParseError on malformed or inconsistent checkpoints.
QrnetParams load_model(const std::filesystem::path& path);
/// Also checks the fingerprint and state dimension against the problem.
QrnetParams load_model_for(const std::filesystem::path& path, const OcpProblem& problem);

}  // namespace qrnet
