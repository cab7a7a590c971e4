#include "qrnet/model.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"
#include "qrnet/errors.hpp"
#include "qrnet/simd/kernels.hpp"

namespace qrnet {

namespace {

constexpr int kCheckpointVersion = 1;

std::span<const double> cspan(const Matrix& M) {
  return {M.data(), static_cast<std::size_t>(M.size())};
}
std::span<double> mspan(Matrix& M) { return {M.data(), static_cast<std::size_t>(M.size())}; }

// Head pieces for a batch: v_j = d_j' P d_j, grad_j = 2 P d_j.
struct Head {
  Vector v;
  Matrix grad_lqr;
};

Head lqr_head(const QrnetParams& q, const Matrix& X) {
  Head h;
  const Matrix D = X.colwise() - q.x_bar;
  const Matrix PD = q.P * D;
  h.v = (D.array() * PD.array()).colwise().sum().transpose();
  h.grad_lqr = 2.0 * PD;
  return h;
}

// [cv/(1+cv) - log1p(cv)] / c, the derivative of log1p(cv)/c in c_raw.
double head_dc_raw(double c, double v) {
  const double cv = c * v;
  if (std::abs(cv) < 1e-2) {
    // sum_{k>=2} (-1)^{k+1} (1 - 1/k) c^{k-1} v^k
    double term = v * cv;  // c v^2
    double sum = 0.0;
    double sign = -1.0;
    for (int k = 2; k <= 10; ++k) {
      sum += sign * (1.0 - 1.0 / k) * term;
      term *= cv;
      sign = -sign;
    }
    return sum;
  }
  return (cv / (1.0 + cv) - std::log1p(cv)) / c;
}

struct ForwardPass {
  std::vector<Matrix> act;    // act[0] = X, act[l+1] = tanh layer output
  std::vector<Matrix> slope;  // slope[l+1] = 1 - act^2
  std::vector<Matrix> tan;    // tangent of act
  std::vector<Matrix> ztan;   // tangent of pre-activations
  Matrix out;                 // 1 x N
};

ForwardPass forward(const MlpParams& p, const Matrix& X, const Matrix* direction) {
  const auto& k = simd::active();
  const int L = p.num_layers();
  ForwardPass f;
  f.act.resize(static_cast<std::size_t>(L));
  f.slope.resize(static_cast<std::size_t>(L));
  f.act[0] = X;
  if (direction) {
    f.tan.resize(static_cast<std::size_t>(L));
    f.ztan.resize(static_cast<std::size_t>(L));
    f.tan[0] = *direction;
  }
  for (int l = 0; l + 1 < L; ++l) {
    const auto ul = static_cast<std::size_t>(l);
    Matrix Z = p.weights[ul] * f.act[ul];
    Z.colwise() += p.biases[ul];
    Matrix& A = f.act[ul + 1];
    Matrix& S = f.slope[ul + 1];
    A.resize(Z.rows(), Z.cols());
    S.resize(Z.rows(), Z.cols());
    if (direction) {
      f.ztan[ul] = p.weights[ul] * f.tan[ul];
      Matrix& T = f.tan[ul + 1];
      T.resize(Z.rows(), Z.cols());
      k.activation_forward(cspan(Z), cspan(f.ztan[ul]), mspan(A), mspan(S), mspan(T));
    } else {
      k.tanh_forward(cspan(Z), mspan(A), mspan(S));
    }
  }
  const auto last = static_cast<std::size_t>(L - 1);
  f.out = p.weights[last] * f.act[last];
  f.out.array() += p.biases[last](0);
  return f;
}

Matrix mlp_input_gradients(const MlpParams& p, const ForwardPass& f, Eigen::Index N) {
  const int L = p.num_layers();
  Matrix bar = p.weights[static_cast<std::size_t>(L - 1)].transpose() * Matrix::Ones(1, N);
  for (int l = L - 2; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    const Matrix zbar = f.slope[ul + 1].cwiseProduct(bar);
    bar = p.weights[ul].transpose() * zbar;
  }
  return bar;
}

void check_states(const QrnetParams& q, const Matrix& X) {
  require(X.rows() == q.state_dim(), "model: state dimension mismatch");
}

}  // namespace

std::string to_string(ModelMode mode) {
  return mode == ModelMode::qrnet ? "qrnet" : "plain-nn";
}

ModelMode parse_model_mode(const std::string& s) {
  if (s == "qrnet") return ModelMode::qrnet;
  if (s == "plain-nn") return ModelMode::plain_nn;
  throw ConfigError("unknown model mode '" + s + "' (expected qrnet or plain-nn)");
}

void MlpParams::validate() const {
  require(layer_sizes.size() >= 2, "mlp: need at least input and output sizes");
  require(layer_sizes.back() == 1, "mlp: output width must be 1");
  require(weights.size() + 1 == layer_sizes.size() && biases.size() == weights.size(),
          "mlp: layer count mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    require(layer_sizes[l] >= 1, "mlp: layer widths must be positive");
    require(weights[l].rows() == layer_sizes[l + 1] && weights[l].cols() == layer_sizes[l],
            "mlp: weight shape mismatch at layer " + std::to_string(l));
    require(biases[l].size() == layer_sizes[l + 1],
            "mlp: bias shape mismatch at layer " + std::to_string(l));
  }
}

double QrnetParams::c() const { return std::exp(c_raw); }

Eigen::Index QrnetParams::num_params() const {
  Eigen::Index count = 1;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l)
    count += mlp.weights[l].size() + mlp.biases[l].size();
  return count;
}

Vector QrnetParams::flatten() const {
  Vector theta(num_params());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    const Matrix& W = mlp.weights[l];
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) theta(k++) = W(i, j);
    for (Eigen::Index i = 0; i < mlp.biases[l].size(); ++i) theta(k++) = mlp.biases[l](i);
  }
  theta(k) = c_raw;
  return theta;
}

void QrnetParams::unflatten(const Vector& theta) {
  require(theta.size() == num_params(), "unflatten: parameter count mismatch");
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    Matrix& W = mlp.weights[l];
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = theta(k++);
    for (Eigen::Index i = 0; i < mlp.biases[l].size(); ++i) mlp.biases[l](i) = theta(k++);
  }
  c_raw = theta(k);
}

double mlp_forward(const MlpParams& p, const Vector& x) {
  p.validate();
  require(x.size() == p.layer_sizes.front(), "mlp_forward: input dimension mismatch");
  return forward(p, x, nullptr).out(0, 0);
}

Vector mlp_gradient(const MlpParams& p, const Vector& x) {
  p.validate();
  require(x.size() == p.layer_sizes.front(), "mlp_gradient: input dimension mismatch");
  const ForwardPass f = forward(p, x, nullptr);
  return mlp_input_gradients(p, f, 1).col(0);
}

BatchEvaluation evaluate_batch(const QrnetParams& q, const Matrix& states) {
  check_states(q, states);
  const Eigen::Index N = states.cols();
  const ForwardPass f = forward(q.mlp, states, nullptr);
  BatchEvaluation out;
  out.values = f.out.row(0).transpose();
  out.gradients = mlp_input_gradients(q.mlp, f, N);
  if (q.mode == ModelMode::qrnet) {
    const double c = q.c();
    const Head h = lqr_head(q, states);
    for (Eigen::Index j = 0; j < N; ++j) {
      const double cv = c * h.v(j);
      out.values(j) += std::log1p(cv) / c;
      out.gradients.col(j) += h.grad_lqr.col(j) / (1.0 + cv);
    }
  }
  return out;
}

double qrnet_value(const QrnetParams& q, const Vector& x) {
  return evaluate_batch(q, x).values(0);
}

Vector qrnet_gradient(const QrnetParams& q, const Vector& x) {
  return evaluate_batch(q, x).gradients.col(0);
}

Vector qrnet_control(const QrnetParams& q, const OcpProblem& problem, const Vector& x) {
  return optimal_control(problem, x, qrnet_gradient(q, x));
}

void accumulate_parameter_gradients(const QrnetParams& q, const Matrix& states,
                                    const Vector& w_value, const Matrix& w_costate,
                                    Vector& grad) {
  check_states(q, states);
  const Eigen::Index N = states.cols();
  require(w_value.size() == N && w_costate.rows() == states.rows() && w_costate.cols() == N,
          "accumulate_parameter_gradients: weight shape mismatch");
  require(grad.size() == q.num_params(), "accumulate_parameter_gradients: gradient size");
  const auto& kern = simd::active();
  const MlpParams& p = q.mlp;
  const int L = p.num_layers();
  const ForwardPass f = forward(p, states, &w_costate);

  // Offsets of each layer block in the flat vector.
  std::vector<Eigen::Index> offset(static_cast<std::size_t>(L));
  Eigen::Index k = 0;
  for (int l = 0; l < L; ++l) {
    offset[static_cast<std::size_t>(l)] = k;
    k += p.weights[static_cast<std::size_t>(l)].size() + p.biases[static_cast<std::size_t>(l)].size();
  }
  auto add_layer = [&](int l, const Matrix& dW, const Vector& db) {
    Eigen::Index o = offset[static_cast<std::size_t>(l)];
    for (Eigen::Index i = 0; i < dW.rows(); ++i)
      for (Eigen::Index j = 0; j < dW.cols(); ++j) grad(o++) += dW(i, j);
    for (Eigen::Index i = 0; i < db.size(); ++i) grad(o++) += db(i);
  };

  const auto last = static_cast<std::size_t>(L - 1);
  const Matrix wv_row = w_value.transpose();
  const Matrix ones_row = Matrix::Ones(1, N);
  {
    Matrix dW = wv_row * f.act[last].transpose();
    dW += ones_row * f.tan[last].transpose();
    Vector db(1);
    db(0) = w_value.sum();
    add_layer(L - 1, dW, db);
  }
  Matrix abar = p.weights[last].transpose() * wv_row;
  Matrix tbar = p.weights[last].transpose() * ones_row;
  Matrix r(abar.rows(), N), qv(abar.rows(), N);
  for (int l = L - 2; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    r.resize(abar.rows(), N);
    qv.resize(abar.rows(), N);
    kern.activation_backward(cspan(f.act[ul + 1]), cspan(f.slope[ul + 1]), cspan(f.ztan[ul]),
                             cspan(abar), cspan(tbar), mspan(r), mspan(qv));
    Matrix dW = r * f.act[ul].transpose();
    dW += qv * f.tan[ul].transpose();
    const Vector db = r.rowwise().sum();
    add_layer(l, dW, db);
    if (l > 0) {
      abar = p.weights[ul].transpose() * r;
      tbar = p.weights[ul].transpose() * qv;
    }
  }

  if (q.mode == ModelMode::qrnet) {
    const double c = q.c();
    const Head h = lqr_head(q, states);
    double dc = 0.0;
    for (Eigen::Index j = 0; j < N; ++j) {
      const double v = h.v(j);
      const double cv = c * v;
      dc += w_value(j) * head_dc_raw(c, v);
      dc -= c * v * w_costate.col(j).dot(h.grad_lqr.col(j)) / ((1.0 + cv) * (1.0 + cv));
    }
    grad(grad.size() - 1) += dc;
  }
}

Vector parameter_gradients(const QrnetParams& q, const OcpProblem& problem, const Vector& x,
                           double w_value, const Vector& w_costate, const Vector& w_control) {
  require(x.size() == q.state_dim() && w_costate.size() == q.state_dim(),
          "parameter_gradients: state dimension mismatch");
  require(w_control.size() == problem.control_dim(),
          "parameter_gradients: control dimension mismatch");
  // u = ubar - 1/2 R^{-1} g' grad V, so wu' du = (-1/2 g R^{-1} wu)' d(grad V).
  const Matrix g = problem.dynamics().input_map(x);
  const Vector w_eff = w_costate - 0.5 * g * (problem.R_inverse() * w_control);
  Vector grad = Vector::Zero(q.num_params());
  Vector wv(1);
  wv(0) = w_value;
  accumulate_parameter_gradients(q, x, wv, w_eff, grad);
  return grad;
}

QrnetParams init_params(const std::vector<int>& layer_sizes, std::uint64_t seed, ModelMode mode,
                        const Matrix& P, const Vector& x_bar, const Vector& u_bar,
                        const std::string& fingerprint) {
  require(layer_sizes.size() >= 2, "init_params: need at least two layer sizes");
  const int n = layer_sizes.front();
  require(P.rows() == n && P.cols() == n && x_bar.size() == n,
          "init_params: P / x_bar dimension mismatch");
  QrnetParams q;
  q.mlp.layer_sizes = layer_sizes;
  q.P = P;
  q.x_bar = x_bar;
  q.u_bar = u_bar;
  q.mode = mode;
  q.fingerprint = fingerprint;
  q.c_raw = 0.0;
  std::mt19937_64 rng(seed);
  const std::size_t L = layer_sizes.size() - 1;
  for (std::size_t l = 0; l < L; ++l) {
    const int fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
    require(fan_in >= 1 && fan_out >= 1, "init_params: layer widths must be positive");
    Matrix W = Matrix::Zero(fan_out, fan_in);
    if (l + 1 < L) {
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index i = 0; i < W.rows(); ++i)
        for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = dist(rng);
    }
    q.mlp.weights.push_back(W);
    q.mlp.biases.push_back(Vector::Zero(fan_out));
  }
  q.mlp.validate();
  return q;
}

namespace {

nlohmann::ordered_json matrix_rows(const Matrix& M) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) arr.push_back(M(i, j));
  return arr;
}

nlohmann::ordered_json vector_json(const Vector& v) {
  return nlohmann::ordered_json(std::vector<double>(v.data(), v.data() + v.size()));
}

Matrix rows_matrix(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols,
                   const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows * cols)
    throw ParseError("checkpoint: " + what + " has wrong size");
  Matrix M(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) M(i, c) = j.at(static_cast<std::size_t>(k++)).get<double>();
  return M;
}

Vector json_vector(const nlohmann::json& j, Eigen::Index size, const std::string& what) {
  if (!j.is_array() || (size >= 0 && static_cast<Eigen::Index>(j.size()) != size))
    throw ParseError("checkpoint: " + what + " has wrong size");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

}  // namespace

void save_model(const QrnetParams& q, const std::filesystem::path& path) {
  q.mlp.validate();
  nlohmann::ordered_json j;
  j["version"] = kCheckpointVersion;
  j["mode"] = to_string(q.mode);
  j["layer_sizes"] = q.mlp.layer_sizes;
  j["weights"] = nlohmann::ordered_json::array();
  j["biases"] = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < q.mlp.weights.size(); ++l) {
    j["weights"].push_back(matrix_rows(q.mlp.weights[l]));
    j["biases"].push_back(vector_json(q.mlp.biases[l]));
  }
  j["c_raw"] = q.c_raw;
  j["P"] = matrix_rows(q.P);
  j["x_bar"] = vector_json(q.x_bar);
  j["u_bar"] = vector_json(q.u_bar);
  j["fingerprint"] = q.fingerprint;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint: " + path.string());
  out << j.dump(1) << "\n";
  if (!out) throw ConfigError("write failed: " + path.string());
}

QrnetParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw ParseError("checkpoint " + path.string() + ": unsupported version");
    QrnetParams q;
    try {
      q.mode = parse_model_mode(j.at("mode").get<std::string>());
    } catch (const ConfigError& e) {
      throw ParseError(std::string("checkpoint: ") + e.what());
    }
    q.mlp.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    const auto& sizes = q.mlp.layer_sizes;
    if (sizes.size() < 2 || sizes.back() != 1)
      throw ParseError("checkpoint: bad layer_sizes");
    for (int s : sizes)
      if (s < 1) throw ParseError("checkpoint: bad layer_sizes");
    const auto& W = j.at("weights");
    const auto& b = j.at("biases");
    if (!W.is_array() || !b.is_array() || W.size() + 1 != sizes.size() || b.size() != W.size())
      throw ParseError("checkpoint: layer count mismatch");
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      q.mlp.weights.push_back(rows_matrix(W[l], sizes[l + 1], sizes[l], "weights"));
      q.mlp.biases.push_back(json_vector(b[l], sizes[l + 1], "biases"));
    }
    q.c_raw = j.at("c_raw").get<double>();
    const int n = sizes.front();
    q.P = rows_matrix(j.at("P"), n, n, "P");
    q.x_bar = json_vector(j.at("x_bar"), n, "x_bar");
    q.u_bar = json_vector(j.at("u_bar"), -1, "u_bar");
    q.fingerprint = j.at("fingerprint").get<std::string>();
    return q;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": " + e.what());
  }
}

QrnetParams load_model_for(const std::filesystem::path& path, const OcpProblem& problem) {
  QrnetParams q = load_model(path);
  if (q.state_dim() != problem.state_dim() || q.u_bar.size() != problem.control_dim())
    throw FingerprintMismatch("checkpoint " + path.string() + " has state dimension " +
                              std::to_string(q.state_dim()) + ", problem has " +
                              std::to_string(problem.state_dim()));
  if (q.fingerprint != problem.fingerprint())
    throw FingerprintMismatch("checkpoint " + path.string() + " was trained for problem " +
                              q.fingerprint + ", expected " + problem.fingerprint());
  return q;
}

}  // namespace qrnet
