#include "markovlens/nn.hpp"

#include <cmath>

#include "markovlens/errors.hpp"

namespace markovlens::nn {

MlpParams MlpParams::zeros(std::size_t input_dim, std::size_t output_dim, std::size_t hidden) {
  const auto in = static_cast<Eigen::Index>(input_dim);
  const auto out = static_cast<Eigen::Index>(output_dim);
  const auto h = static_cast<Eigen::Index>(hidden);
  MlpParams p;
  p.w1 = Matrix::Zero(h, in);
  p.b1 = Vector::Zero(h);
  p.w2 = Matrix::Zero(h, h);
  p.b2 = Vector::Zero(h);
  p.w3 = Matrix::Zero(out, h);
  p.b3 = Vector::Zero(out);
  return p;
}

std::size_t MlpParams::parameter_count() const {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size());
}

bool MlpParams::same_shape(const MlpParams& o) const {
  return w1.rows() == o.w1.rows() && w1.cols() == o.w1.cols() && w2.rows() == o.w2.rows() &&
         w2.cols() == o.w2.cols() && w3.rows() == o.w3.rows() && w3.cols() == o.w3.cols() &&
         b1.size() == o.b1.size() && b2.size() == o.b2.size() && b3.size() == o.b3.size();
}

bool MlpParams::all_finite() const {
  return w1.allFinite() && w2.allFinite() && w3.allFinite() && b1.allFinite() && b2.allFinite() &&
         b3.allFinite();
}

double MlpParams::squared_norm() const {
  return w1.squaredNorm() + w2.squaredNorm() + w3.squaredNorm() + b1.squaredNorm() +
         b2.squaredNorm() + b3.squaredNorm();
}

MlpParams& MlpParams::operator*=(double s) {
  for_each_tensor([s](auto& t) { t *= s; });
  return *this;
}

void orthogonal_(Matrix& weight, double gain, Rng& rng) {
  const Eigen::Index rows = weight.rows();
  const Eigen::Index cols = weight.cols();
  const bool transpose = rows < cols;
  Matrix flat(transpose ? cols : rows, transpose ? rows : cols);
  for (Eigen::Index c = 0; c < flat.cols(); ++c) {
    for (Eigen::Index r = 0; r < flat.rows(); ++r) flat(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(flat);
  Matrix q = qr.householderQ() * Matrix::Identity(flat.rows(), flat.cols());
  const Matrix r = qr.matrixQR().topRows(flat.cols()).triangularView<Eigen::Upper>();
  // Sign fix makes the draw uniform over the orthogonal group.
  for (Eigen::Index c = 0; c < q.cols(); ++c) {
    if (r(c, c) < 0) q.col(c) *= -1.0;
  }
  weight = (transpose ? Matrix(q.transpose()) : q) * gain;
}

MlpParams init_orthogonal(std::size_t input_dim, std::size_t output_dim, double head_gain, Rng& rng,
                          std::size_t hidden) {
  MlpParams p = MlpParams::zeros(input_dim, output_dim, hidden);
  const double hidden_gain = std::sqrt(2.0);
  orthogonal_(p.w1, hidden_gain, rng);
  orthogonal_(p.w2, hidden_gain, rng);
  orthogonal_(p.w3, head_gain, rng);
  return p;
}

ForwardCache mlp_forward_batch(const MlpParams& params, const Matrix& inputs) {
  if (inputs.rows() != params.w1.cols()) {
    throw ContractViolation("mlp_forward: input dimension " + std::to_string(inputs.rows()) +
                            " != " + std::to_string(params.w1.cols()));
  }
  ForwardCache cache;
  cache.input = inputs;
  cache.h1 = ((params.w1 * inputs).colwise() + params.b1).array().tanh().matrix();
  cache.h2 = ((params.w2 * cache.h1).colwise() + params.b2).array().tanh().matrix();
  cache.output = (params.w3 * cache.h2).colwise() + params.b3;
  return cache;
}

Vector mlp_forward(const MlpParams& params, const Vector& input) {
  return mlp_forward_batch(params, input).output.col(0);
}

MlpParams mlp_backward(const MlpParams& params, const ForwardCache& cache, const Matrix& output_grad) {
  if (output_grad.rows() != params.w3.rows() || output_grad.cols() != cache.input.cols()) {
    throw ContractViolation("mlp_backward: output gradient shape mismatch");
  }
  MlpParams g;
  g.w3 = output_grad * cache.h2.transpose();
  g.b3 = output_grad.rowwise().sum();
  const Matrix d2 = ((params.w3.transpose() * output_grad).array() * (1.0 - cache.h2.array().square())).matrix();
  g.w2 = d2 * cache.h1.transpose();
  g.b2 = d2.rowwise().sum();
  const Matrix d1 = ((params.w2.transpose() * d2).array() * (1.0 - cache.h1.array().square())).matrix();
  g.w1 = d1 * cache.input.transpose();
  g.b1 = d1.rowwise().sum();
  return g;
}

MlpParams mlp_backward(const MlpParams& params, const Vector& input, const Vector& output_grad) {
  return mlp_backward(params, mlp_forward_batch(params, input), output_grad);
}

AdamState AdamState::for_params(const MlpParams& params) {
  AdamState s;
  s.m = MlpParams::zeros(params.input_dim(), params.output_dim(), static_cast<std::size_t>(params.b1.size()));
  s.v = s.m;
  return s;
}

std::pair<MlpParams, AdamState> adam_step(MlpParams params, const MlpParams& grads, AdamState state,
                                          double lr, const AdamConfig& config) {
  if (!params.same_shape(grads) || !params.same_shape(state.m) || !params.same_shape(state.v)) {
    throw ContractViolation("adam_step: parameter/gradient/state shapes differ");
  }
  if (!grads.all_finite()) throw TrainingError("adam_step: non-finite gradient");
  ++state.step;
  adam_update_tensor(params.w1, grads.w1, state.m.w1, state.v.w1, state.step, lr, config);
  adam_update_tensor(params.b1, grads.b1, state.m.b1, state.v.b1, state.step, lr, config);
  adam_update_tensor(params.w2, grads.w2, state.m.w2, state.v.w2, state.step, lr, config);
  adam_update_tensor(params.b2, grads.b2, state.m.b2, state.v.b2, state.step, lr, config);
  adam_update_tensor(params.w3, grads.w3, state.m.w3, state.v.w3, state.step, lr, config);
  adam_update_tensor(params.b3, grads.b3, state.m.b3, state.v.b3, state.step, lr, config);
  return {std::move(params), std::move(state)};
}

}  // namespace markovlens::nn
