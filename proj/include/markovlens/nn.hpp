#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>

#include <Eigen/Dense>

#include "markovlens/rng.hpp"

namespace markovlens::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr std::size_t kHidden = 64;

// input -> 64 -> 64 -> output, tanh hidden activations, linear head.
// The same struct carries parameter gradients and Adam moments.
struct MlpParams {
  Matrix w1, w2, w3;
  Vector b1, b2, b3;

  static MlpParams zeros(std::size_t input_dim, std::size_t output_dim,
                         std::size_t hidden = kHidden);

  std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(w3.rows()); }
  std::size_t parameter_count() const;

  bool same_shape(const MlpParams& other) const;
  bool all_finite() const;
  double squared_norm() const;
  MlpParams& operator*=(double s);

  // Calls f(tensor) for w1, b1, w2, b2, w3, b3 in that order.
  template <typename F>
  void for_each_tensor(F&& f) {
    f(w1); f(b1); f(w2); f(b2); f(w3); f(b3);
  }
};

// Orthogonal init: gain sqrt(2) for hidden layers, `head_gain` for the output
// layer; biases zero.
MlpParams init_orthogonal(std::size_t input_dim, std::size_t output_dim, double head_gain, Rng& rng,
                          std::size_t hidden = kHidden);

// Fills `weight` with a (semi-)orthogonal matrix scaled by `gain`.
void orthogonal_(Matrix& weight, double gain, Rng& rng);

// Intermediate activations of a batched forward pass (columns = samples).
struct ForwardCache {
  Matrix input;
  Matrix h1;  // tanh(W1 x + b1)
  Matrix h2;  // tanh(W2 h1 + b2)
  Matrix output;
};

Vector mlp_forward(const MlpParams& params, const Vector& input);
ForwardCache mlp_forward_batch(const MlpParams& params, const Matrix& inputs);

// Gradients of sum_k output_grad(:,k) . f(input(:,k)) with respect to every
// parameter, accumulated over the batch.
MlpParams mlp_backward(const MlpParams& params, const ForwardCache& cache, const Matrix& output_grad);
MlpParams mlp_backward(const MlpParams& params, const Vector& input, const Vector& output_grad);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  MlpParams m;
  MlpParams v;
  std::int64_t step = 0;

  static AdamState for_params(const MlpParams& params);
};

// One bias-corrected Adam step. Throws TrainingError on non-finite gradients.
std::pair<MlpParams, AdamState> adam_step(MlpParams params, const MlpParams& grads, AdamState state,
                                          double lr, const AdamConfig& config = {});

// Raw Adam kernel on one tensor, shared with parameters that live outside an MLP.
// `step` is the already-incremented timestep.
template <typename Derived>
void adam_update_tensor(Eigen::MatrixBase<Derived>& param, const Eigen::MatrixBase<Derived>& grad,
                        Eigen::MatrixBase<Derived>& m, Eigen::MatrixBase<Derived>& v, std::int64_t step,
                        double lr, const AdamConfig& config) {
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  m.derived() = config.beta1 * m.derived() + (1.0 - config.beta1) * grad.derived();
  v.derived() = config.beta2 * v.derived() + (1.0 - config.beta2) * grad.derived().cwiseAbs2();
  const double step_size = lr / bc1;
  const double sqrt_bc2 = std::sqrt(bc2);
  param.derived().array() -=
      step_size * m.derived().array() / (v.derived().array().sqrt() / sqrt_bc2 + config.epsilon);
}

}  // namespace markovlens::nn
