#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "pirl/rng.hpp"

namespace pirl {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Fully connected network, ReLU on hidden layers and identity on the output.
///
/// All parameters live in one flat vector; layer l occupies a column-major
/// weight block (out x in) followed by its bias (out). Batched inputs are
/// passed column-wise: an (in x B) matrix evaluates B samples at once.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;
  using WeightMap = Eigen::Map<Matrix>;
  using ConstWeightMap = Eigen::Map<const Matrix>;
  using BiasMap = Eigen::Map<Vector>;
  using ConstBiasMap = Eigen::Map<const Vector>;

  Mlp() = default;

  /// Zero-initialized network with the given layer sizes (input, hidden..., output).
  explicit Mlp(std::vector<Eigen::Index> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
    for (auto s : sizes_)
      if (s <= 0) throw std::invalid_argument("Mlp: layer sizes must be positive");
    offsets_.push_back(0);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
      offsets_.push_back(offsets_.back() + sizes_[l + 1] * sizes_[l] + sizes_[l + 1]);
    params_ = Vector::Zero(offsets_.back());
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases.
  Mlp(std::vector<Eigen::Index> sizes, std::uint64_t seed) : Mlp(std::move(sizes)) {
    Rng rng(seed);
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
      auto w = weight(l);
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(rng.uniform(-bound, bound));
      auto b = bias(l);
      for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = static_cast<Scalar>(rng.uniform(-bound, bound));
    }
  }

  std::size_t num_layers() const noexcept { return sizes_.size() - 1; }
  const std::vector<Eigen::Index>& sizes() const noexcept { return sizes_; }
  Eigen::Index input_size() const noexcept { return sizes_.front(); }
  Eigen::Index output_size() const noexcept { return sizes_.back(); }
  Eigen::Index num_params() const noexcept { return params_.size(); }

  Vector& params() noexcept { return params_; }
  const Vector& params() const noexcept { return params_; }

  WeightMap weight(std::size_t l) { return WeightMap(params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]); }
  ConstWeightMap weight(std::size_t l) const {
    return ConstWeightMap(params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
  }
  BiasMap bias(std::size_t l) { return BiasMap(params_.data() + offsets_[l] + sizes_[l + 1] * sizes_[l], sizes_[l + 1]); }
  ConstBiasMap bias(std::size_t l) const {
    return ConstBiasMap(params_.data() + offsets_[l] + sizes_[l + 1] * sizes_[l], sizes_[l + 1]);
  }

  /// Same layout as params(), for gradients that must be viewed per layer.
  WeightMap weight_in(Vector& flat, std::size_t l) const {
    return WeightMap(flat.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
  }
  BiasMap bias_in(Vector& flat, std::size_t l) const {
    return BiasMap(flat.data() + offsets_[l] + sizes_[l + 1] * sizes_[l], sizes_[l + 1]);
  }

  bool all_finite() const { return params_.allFinite(); }

  friend bool operator==(const Mlp& a, const Mlp& b) { return a.sizes_ == b.sizes_ && a.params_ == b.params_; }

 private:
  std::vector<Eigen::Index> sizes_;
  std::vector<Eigen::Index> offsets_;
  Vector params_;
};

/// Activations recorded by a training forward pass, consumed by backward().
template <typename Scalar>
struct MlpTape {
  // activations[0] is the input, activations[l] the post-ReLU output of layer l-1.
  std::vector<MatrixX<Scalar>> activations;
};

template <typename Scalar>
struct MlpGradient {
  VectorX<Scalar> params;
  MatrixX<Scalar> input;
};

namespace detail {
template <typename Scalar>
void check_input(const Mlp<Scalar>& net, Eigen::Index rows) {
  if (rows != net.input_size())
    throw std::invalid_argument("Mlp: input has " + std::to_string(rows) + " rows, expected " +
                                std::to_string(net.input_size()));
}
}  // namespace detail

/// Batched forward pass recording activations for a later backward().
template <typename Scalar, typename Derived>
MatrixX<Scalar> forward(const Mlp<Scalar>& net, const Eigen::MatrixBase<Derived>& input, MlpTape<Scalar>& tape) {
  detail::check_input(net, input.rows());
  const std::size_t layers = net.num_layers();
  tape.activations.resize(layers);
  tape.activations[0] = input;
  MatrixX<Scalar> h;
  for (std::size_t l = 0; l < layers; ++l) {
    h.noalias() = net.weight(l) * tape.activations[l];
    h.colwise() += net.bias(l);
    if (l + 1 < layers) tape.activations[l + 1] = h.cwiseMax(Scalar(0));
  }
  return h;
}

/// Batched forward pass without recording.
template <typename Scalar, typename Derived>
MatrixX<Scalar> forward(const Mlp<Scalar>& net, const Eigen::MatrixBase<Derived>& input) {
  detail::check_input(net, input.rows());
  MatrixX<Scalar> a = input;
  MatrixX<Scalar> h;
  const std::size_t layers = net.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    h.noalias() = net.weight(l) * a;
    h.colwise() += net.bias(l);
    if (l + 1 < layers) a = h.cwiseMax(Scalar(0));
  }
  return h;
}

/// Reverse-mode gradient of sum(output .* output_grad) with respect to every
/// parameter and the input, using activations recorded by forward().
/// Either half can be skipped: want_input = false leaves `input` empty,
/// want_params = false leaves `params` empty.
template <typename Scalar, typename Derived>
MlpGradient<Scalar> backward(const Mlp<Scalar>& net, const MlpTape<Scalar>& tape,
                             const Eigen::MatrixBase<Derived>& output_grad, bool want_input = true,
                             bool want_params = true) {
  if (output_grad.rows() != net.output_size())
    throw std::invalid_argument("Mlp::backward: output gradient has wrong size");
  if (tape.activations.size() != net.num_layers() || output_grad.cols() != tape.activations[0].cols())
    throw std::invalid_argument("Mlp::backward: tape does not match output gradient");
  MlpGradient<Scalar> g;
  if (want_params) g.params = VectorX<Scalar>::Zero(net.num_params());
  MatrixX<Scalar> delta = output_grad;
  MatrixX<Scalar> prev;
  for (std::size_t l = net.num_layers(); l-- > 0;) {
    const auto& a = tape.activations[l];
    if (want_params) {
      net.weight_in(g.params, l).noalias() = delta * a.transpose();
      net.bias_in(g.params, l) = delta.rowwise().sum();
    }
    if (l == 0 && !want_input) break;
    prev.noalias() = net.weight(l).transpose() * delta;
    if (l > 0) prev = (a.array() > Scalar(0)).select(prev, Scalar(0));
    delta.swap(prev);
  }
  if (want_input) g.input = std::move(delta);
  return g;
}

/// Pure overload: recomputes the forward pass for the given input.
template <typename Scalar, typename DerivedIn, typename DerivedOut>
MlpGradient<Scalar> backward(const Mlp<Scalar>& net, const Eigen::MatrixBase<DerivedIn>& input,
                             const Eigen::MatrixBase<DerivedOut>& output_grad) {
  MlpTape<Scalar> tape;
  forward(net, input, tape);
  return backward(net, tape, output_grad);
}

/// Adam optimizer state for one flat parameter vector.
template <typename Scalar>
struct AdamState {
  VectorX<Scalar> m;
  VectorX<Scalar> v;
  std::int64_t step = 0;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(Eigen::Index n, double learning_rate = 3e-4)
      : m(VectorX<Scalar>::Zero(n)), v(VectorX<Scalar>::Zero(n)), lr(learning_rate) {}
};

/// One bias-corrected Adam step (descent on grads).
template <typename Scalar, typename DerivedP, typename DerivedG>
void adam_step(Eigen::MatrixBase<DerivedP>& params, const Eigen::MatrixBase<DerivedG>& grads, AdamState<Scalar>& opt) {
  if (params.size() != grads.size() || opt.m.size() != params.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  ++opt.step;
  const auto b1 = static_cast<Scalar>(opt.beta1);
  const auto b2 = static_cast<Scalar>(opt.beta2);
  opt.m = b1 * opt.m + (Scalar(1) - b1) * grads;
  opt.v = b2 * opt.v + (Scalar(1) - b2) * grads.cwiseAbs2();
  const double t = static_cast<double>(opt.step);
  const auto step_size = static_cast<Scalar>(opt.lr / (1.0 - std::pow(opt.beta1, t)));
  const auto v_corr = static_cast<Scalar>(1.0 / (1.0 - std::pow(opt.beta2, t)));
  const auto eps = static_cast<Scalar>(opt.eps);
  params -= (step_size * opt.m.array() / ((opt.v.array() * v_corr).sqrt() + eps)).matrix();
}

template <typename Scalar>
void adam_step(Mlp<Scalar>& net, const VectorX<Scalar>& grads, AdamState<Scalar>& opt) {
  adam_step(net.params(), grads, opt);
}

/// target <- tau * online + (1 - tau) * target, per parameter.
template <typename Scalar>
void soft_update(const Mlp<Scalar>& online, Mlp<Scalar>& target, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must lie in (0, 1]");
  if (online.sizes() != target.sizes()) throw std::invalid_argument("soft_update: architecture mismatch");
  if (tau == 1.0) {
    target.params() = online.params();
    return;
  }
  const auto t = static_cast<Scalar>(tau);
  target.params() = t * online.params() + (Scalar(1) - t) * target.params();
}

}  // namespace pirl
