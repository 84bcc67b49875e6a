#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "pirl/compressor_env.hpp"
#include "pirl/mlp.hpp"
#include "pirl/rng.hpp"

namespace pirl {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kTanhEps = 1e-6;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

enum class SampleMode { stochastic, deterministic };

struct ActionSample {
  Eigen::VectorXd action;      // in (-1, 1)^d
  Eigen::VectorXd pre_squash;  // u with action = tanh(u)
  double log_prob = 0.0;
};

inline Eigen::VectorXd to_vector(const Observation& obs) {
  return Eigen::Map<const Eigen::VectorXd>(obs.data(), kObservationDim);
}

inline Action to_action(const Eigen::VectorXd& a) {
  if (a.size() != kActionDim) throw std::invalid_argument("to_action: expected 3 components");
  return {a(0), a(1), a(2)};
}

/// Log density of a tanh-squashed diagonal Gaussian at pre-squash point u.
inline double squashed_log_prob(const Eigen::VectorXd& u, const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std) {
  double lp = 0.0;
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    const double z = (u(k) - mean(k)) * std::exp(-log_std(k));
    const double t = std::tanh(u(k));
    lp += -0.5 * z * z - log_std(k) - kHalfLog2Pi - std::log(1.0 - t * t + kTanhEps);
  }
  return lp;
}

/// Gaussian policy squashed through tanh. The network maps an observation
/// to (mean, log std), with log std clamped to [-20, 2].
template <typename Scalar>
class SquashedGaussianActor {
 public:
  SquashedGaussianActor() = default;
  SquashedGaussianActor(Eigen::Index obs_dim, Eigen::Index action_dim, std::vector<Eigen::Index> hidden,
                        std::uint64_t seed)
      : action_dim_(action_dim) {
    std::vector<Eigen::Index> sizes{obs_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2 * action_dim);
    net_ = Mlp<Scalar>(std::move(sizes), seed);
  }
  explicit SquashedGaussianActor(Mlp<Scalar> net) : net_(std::move(net)), action_dim_(net_.output_size() / 2) {
    if (net_.output_size() % 2 != 0) throw std::invalid_argument("SquashedGaussianActor: output size must be even");
  }

  Eigen::Index obs_dim() const { return net_.input_size(); }
  Eigen::Index action_dim() const { return action_dim_; }
  Mlp<Scalar>& network() { return net_; }
  const Mlp<Scalar>& network() const { return net_; }

  struct Heads {
    Eigen::VectorXd mean;
    Eigen::VectorXd log_std;
  };

  Heads heads(const Eigen::VectorXd& obs) const {
    if (obs.size() != obs_dim()) throw std::invalid_argument("SquashedGaussianActor: observation dimension mismatch");
    const VectorX<Scalar> out = forward(net_, obs.cast<Scalar>());
    const Eigen::VectorXd o = out.template cast<double>();
    return {o.head(action_dim_), o.tail(action_dim_).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax)};
  }

  ActionSample sample(const Eigen::VectorXd& obs, Rng& rng, SampleMode mode = SampleMode::stochastic) const {
    const Heads h = heads(obs);
    ActionSample s;
    s.pre_squash = h.mean;
    if (mode == SampleMode::stochastic)
      for (Eigen::Index k = 0; k < action_dim_; ++k) s.pre_squash(k) += std::exp(h.log_std(k)) * rng.normal();
    s.action = s.pre_squash.array().tanh();
    s.log_prob = squashed_log_prob(s.pre_squash, h.mean, h.log_std);
    return s;
  }

  /// k stochastic actions for one observation, one per column.
  Eigen::MatrixXd sample_batch(const Eigen::VectorXd& obs, Eigen::Index k, Rng& rng) const {
    const Heads h = heads(obs);
    Eigen::MatrixXd actions(action_dim_, k);
    for (Eigen::Index j = 0; j < k; ++j)
      for (Eigen::Index d = 0; d < action_dim_; ++d)
        actions(d, j) = std::tanh(h.mean(d) + std::exp(h.log_std(d)) * rng.normal());
    return actions;
  }

  double log_prob(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const {
    return log_prob_batch(obs, action)(0);
  }

  /// Log density of each column of `actions` under the policy at `obs`.
  Eigen::VectorXd log_prob_batch(const Eigen::VectorXd& obs, const Eigen::MatrixXd& actions) const {
    if (actions.rows() != action_dim_) throw std::invalid_argument("log_prob_batch: action dimension mismatch");
    const Heads h = heads(obs);
    constexpr double kEdge = 1.0 - 1e-12;
    Eigen::VectorXd out(actions.cols());
    Eigen::VectorXd u(action_dim_);
    for (Eigen::Index j = 0; j < actions.cols(); ++j) {
      for (Eigen::Index d = 0; d < action_dim_; ++d) u(d) = std::atanh(std::clamp(actions(d, j), -kEdge, kEdge));
      out(j) = squashed_log_prob(u, h.mean, h.log_std);
    }
    return out;
  }

 private:
  Mlp<Scalar> net_;
  Eigen::Index action_dim_ = 0;
};

/// One stored transition. Rewards are stored already scaled for learning.
struct Experience {
  Observation observation{};
  Action action{};
  double reward = 0.0;
  Observation next_observation{};
  bool done = false;
};

template <typename Scalar>
struct Batch {
  MatrixX<Scalar> obs;       // obs_dim x B
  MatrixX<Scalar> action;    // action_dim x B
  VectorX<Scalar> reward;    // B
  MatrixX<Scalar> next_obs;  // obs_dim x B
  VectorX<Scalar> not_done;  // B, 1 - done

  Eigen::Index size() const { return reward.size(); }
};

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
template <typename Scalar>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(Eigen::Index capacity)
      : obs_(kObservationDim, capacity),
        action_(kActionDim, capacity),
        reward_(capacity),
        next_obs_(kObservationDim, capacity),
        not_done_(capacity) {
    if (capacity <= 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  }

  Eigen::Index capacity() const { return reward_.size(); }
  Eigen::Index size() const { return size_; }

  void push(const Experience& e) {
    for (int k = 0; k < kObservationDim; ++k) {
      obs_(k, head_) = static_cast<Scalar>(e.observation[k]);
      next_obs_(k, head_) = static_cast<Scalar>(e.next_observation[k]);
    }
    for (int k = 0; k < kActionDim; ++k) action_(k, head_) = static_cast<Scalar>(e.action[k]);
    reward_(head_) = static_cast<Scalar>(e.reward);
    not_done_(head_) = e.done ? Scalar(0) : Scalar(1);
    head_ = (head_ + 1) % capacity();
    size_ = std::min(size_ + 1, capacity());
  }

  Batch<Scalar> sample(Eigen::Index batch_size, Rng& rng) const {
    if (batch_size <= 0 || size_ < batch_size)
      throw std::logic_error("ReplayBuffer::sample: buffer holds fewer experiences than the batch size");
    Batch<Scalar> b;
    b.obs.resize(obs_.rows(), batch_size);
    b.action.resize(action_.rows(), batch_size);
    b.reward.resize(batch_size);
    b.next_obs.resize(obs_.rows(), batch_size);
    b.not_done.resize(batch_size);
    for (Eigen::Index j = 0; j < batch_size; ++j) {
      const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(size_)));
      b.obs.col(j) = obs_.col(i);
      b.action.col(j) = action_.col(i);
      b.reward(j) = reward_(i);
      b.next_obs.col(j) = next_obs_.col(i);
      b.not_done(j) = not_done_(i);
    }
    return b;
  }

 private:
  MatrixX<Scalar> obs_;
  MatrixX<Scalar> action_;
  VectorX<Scalar> reward_;
  MatrixX<Scalar> next_obs_;
  VectorX<Scalar> not_done_;
  Eigen::Index head_ = 0;
  Eigen::Index size_ = 0;
};

struct SacConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double alpha_lr = 3e-4;
  Eigen::Index batch_size = 256;
  Eigen::Index buffer_capacity = 100000;
  std::int64_t warmup_steps = 1000;
  int updates_per_step = 1;
  bool auto_alpha = true;
  double init_alpha = 0.2;
  double target_entropy = -static_cast<double>(kActionDim);
  double reward_scale = 0.01;
  std::vector<Eigen::Index> hidden{64, 64};
};

struct UpdateDiagnostics {
  double critic_loss = 0.0;   // mean of both critics' squared errors
  double actor_loss = 0.0;    // alpha * mean log pi - mean min Q
  double actor_q_term = 0.0;  // mean min Q at reparameterized actions
  double actor_log_prob = 0.0;
  double alpha = 0.0;         // temperature used for this update
  double target_mean = 0.0;
};

/// Soft Actor-Critic with twin critics, target networks and optional
/// automatic temperature tuning. Learns only from batches it is handed.
template <typename Scalar>
class SacAgent {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  SacAgent(const SacConfig& cfg, std::uint64_t seed, Eigen::Index obs_dim = kObservationDim,
           Eigen::Index action_dim = kActionDim)
      : cfg_(cfg),
        actor_(obs_dim, action_dim, cfg.hidden, derive_seed(seed, 1)),
        q1_(critic_sizes(cfg, obs_dim, action_dim), derive_seed(seed, 2)),
        q2_(critic_sizes(cfg, obs_dim, action_dim), derive_seed(seed, 3)),
        target1_(q1_),
        target2_(q2_),
        actor_opt_(actor_.network().num_params(), cfg.actor_lr),
        q1_opt_(q1_.num_params(), cfg.critic_lr),
        q2_opt_(q2_.num_params(), cfg.critic_lr),
        alpha_opt_(1, cfg.alpha_lr),
        log_alpha_(std::log(cfg.init_alpha)) {}

  const SacConfig& config() const { return cfg_; }
  SquashedGaussianActor<Scalar>& actor() { return actor_; }
  const SquashedGaussianActor<Scalar>& actor() const { return actor_; }
  Mlp<Scalar>& q1() { return q1_; }
  Mlp<Scalar>& q2() { return q2_; }
  Mlp<Scalar>& target1() { return target1_; }
  Mlp<Scalar>& target2() { return target2_; }
  const Mlp<Scalar>& q1() const { return q1_; }
  const Mlp<Scalar>& q2() const { return q2_; }
  const Mlp<Scalar>& target1() const { return target1_; }
  const Mlp<Scalar>& target2() const { return target2_; }
  AdamState<Scalar>& actor_opt() { return actor_opt_; }
  AdamState<Scalar>& q1_opt() { return q1_opt_; }
  AdamState<Scalar>& q2_opt() { return q2_opt_; }
  AdamState<double>& alpha_opt() { return alpha_opt_; }
  const AdamState<Scalar>& actor_opt() const { return actor_opt_; }
  const AdamState<Scalar>& q1_opt() const { return q1_opt_; }
  const AdamState<Scalar>& q2_opt() const { return q2_opt_; }
  const AdamState<double>& alpha_opt() const { return alpha_opt_; }
  double log_alpha() const { return log_alpha_; }
  void set_log_alpha(double v) { log_alpha_ = v; }
  double alpha() const { return std::exp(log_alpha_); }
  void set_tau(double tau) { cfg_.tau = tau; }

  ActionSample act(const Observation& obs, Rng& rng, SampleMode mode = SampleMode::stochastic) const {
    return actor_.sample(to_vector(obs), rng, mode);
  }

  /// Mean and clamped log std for a batch (each action_dim x B), plus the
  /// mask of log-std entries that were inside the clamp range.
  struct BatchHeads {
    Matrix mean, log_std, std;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> unclamped;
  };

  BatchHeads batch_heads(const Matrix& out) const {
    const Eigen::Index d = actor_.action_dim();
    BatchHeads h;
    h.mean = out.topRows(d);
    const Matrix raw = out.bottomRows(d);
    h.log_std = raw.cwiseMax(Scalar(kLogStdMin)).cwiseMin(Scalar(kLogStdMax));
    h.unclamped = raw.array() > Scalar(kLogStdMin) && raw.array() < Scalar(kLogStdMax);
    h.std = h.log_std.array().exp();
    return h;
  }

  /// Reparameterized sample: action = tanh(mean + std * noise), with per-sample
  /// log density including the tanh correction.
  struct Reparam {
    Matrix action;
    Vector log_prob;
  };

  Reparam reparam(const BatchHeads& h, const Matrix& noise) const {
    Reparam r;
    const Matrix u = h.mean.array() + h.std.array() * noise.array();
    r.action = u.array().tanh();
    const auto one_minus = (Scalar(1) - r.action.array().square());
    const Matrix per_dim = Scalar(-0.5) * noise.array().square() - h.log_std.array() - Scalar(kHalfLog2Pi) -
                           (one_minus + Scalar(kTanhEps)).log();
    r.log_prob = per_dim.colwise().sum().transpose();
    return r;
  }

  Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) const {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(rng.normal());
    return m;
  }

  static Matrix stack(const Matrix& obs, const Matrix& action) {
    Matrix x(obs.rows() + action.rows(), obs.cols());
    x.topRows(obs.rows()) = obs;
    x.bottomRows(action.rows()) = action;
    return x;
  }

  /// Critic targets r + gamma * (1 - done) * (min target Q - alpha log pi) at a
  /// freshly sampled next action.
  Vector critic_targets(const Batch<Scalar>& b, Rng& rng) const {
    const auto alpha = static_cast<Scalar>(this->alpha());
    const BatchHeads h = batch_heads(forward(actor_.network(), b.next_obs));
    const Reparam next = reparam(h, standard_normal(actor_.action_dim(), b.size(), rng));
    const Matrix x = stack(b.next_obs, next.action);
    const Vector t1 = forward(target1_, x).transpose();
    const Vector t2 = forward(target2_, x).transpose();
    const Vector soft = t1.cwiseMin(t2) - alpha * next.log_prob;
    return b.reward + static_cast<Scalar>(cfg_.gamma) * b.not_done.cwiseProduct(soft);
  }

  struct ActorObjective {
    double loss = 0.0;    // alpha * mean log pi - mean min Q
    double q_term = 0.0;  // mean min Q
    Vector log_prob;      // per sample
    Vector grad;          // d loss / d actor params
  };

  /// Actor loss mean(alpha * log pi(a|s) - min(Q1, Q2)(s, a)) at the
  /// reparameterized actions a = tanh(mean + std * noise), and its exact
  /// gradient with respect to the actor parameters (critics held fixed).
  ActorObjective actor_objective(const Matrix& obs, const Matrix& noise) const {
    const Eigen::Index d = actor_.action_dim();
    const Eigen::Index n = obs.cols();
    const auto inv_n = Scalar(1) / static_cast<Scalar>(n);
    const auto alpha = static_cast<Scalar>(this->alpha());

    MlpTape<Scalar> actor_tape;
    const BatchHeads h = batch_heads(forward(actor_.network(), obs, actor_tape));
    const Reparam r = reparam(h, noise);

    const Matrix x = stack(obs, r.action);
    MlpTape<Scalar> tape1, tape2;
    const Vector qa = forward(q1_, x, tape1).transpose();
    const Vector qb = forward(q2_, x, tape2).transpose();
    const Eigen::Array<bool, Eigen::Dynamic, 1> use_first = qa.array() <= qb.array();
    const Vector q_min = use_first.select(qa.array(), qb.array()).matrix();

    ActorObjective obj;
    obj.log_prob = r.log_prob;
    obj.q_term = static_cast<double>(q_min.mean());
    obj.loss = this->alpha() * static_cast<double>(r.log_prob.mean()) - obj.q_term;

    // dL/dQmin = -1/n, routed to whichever critic attains the minimum.
    const Vector first = use_first.template cast<Scalar>().matrix();
    const Matrix og1 = (-inv_n * first).transpose();
    const Matrix og2 = (-inv_n * (Vector::Ones(n) - first)).transpose();
    const auto ga = backward(q1_, tape1, og1, true, false);
    const auto gb = backward(q2_, tape2, og2, true, false);
    const Matrix dq_da = ga.input.bottomRows(d) + gb.input.bottomRows(d);

    const auto one_minus = (Scalar(1) - r.action.array().square()).eval();
    const Matrix dl_du =
        (alpha * inv_n * Scalar(2) * r.action.array() * one_minus / (one_minus + Scalar(kTanhEps)) +
         dq_da.array() * one_minus)
            .matrix();
    Matrix out_grad(2 * d, n);
    out_grad.topRows(d) = dl_du;
    out_grad.bottomRows(d) =
        h.unclamped.select(dl_du.array() * h.std.array() * noise.array() - alpha * inv_n, Scalar(0)).matrix();
    obj.grad = backward(actor_.network(), actor_tape, out_grad, false).params;
    return obj;
  }

  /// One SAC update on the given batch: both critics, then actor, then
  /// temperature, then target networks.
  UpdateDiagnostics update(const Batch<Scalar>& b, Rng& rng) {
    if (b.size() < cfg_.batch_size) throw std::invalid_argument("SacAgent::update: batch smaller than configured size");
    UpdateDiagnostics diag;
    const Eigen::Index n = b.size();
    const auto inv_n = Scalar(1) / static_cast<Scalar>(n);
    diag.alpha = alpha();

    // Critics.
    const Vector y = critic_targets(b, rng);
    diag.target_mean = static_cast<double>(y.mean());
    {
      const Matrix x = stack(b.obs, b.action);
      MlpTape<Scalar> tape1, tape2;
      const Vector e1 = forward(q1_, x, tape1).transpose() - y;
      const Vector e2 = forward(q2_, x, tape2).transpose() - y;
      diag.critic_loss = 0.5 * static_cast<double>(e1.squaredNorm() + e2.squaredNorm()) / static_cast<double>(n);
      const auto g1 = backward(q1_, tape1, (Scalar(2) * inv_n * e1).transpose(), false);
      const auto g2 = backward(q2_, tape2, (Scalar(2) * inv_n * e2).transpose(), false);
      adam_step(q1_, g1.params, q1_opt_);
      adam_step(q2_, g2.params, q2_opt_);
    }

    // Actor.
    const ActorObjective obj = actor_objective(b.obs, standard_normal(actor_.action_dim(), n, rng));
    diag.actor_loss = obj.loss;
    diag.actor_q_term = obj.q_term;
    diag.actor_log_prob = static_cast<double>(obj.log_prob.mean());
    adam_step(actor_.network(), obj.grad, actor_opt_);
    const Vector& log_prob = obj.log_prob;

    // Temperature.
    if (cfg_.auto_alpha) {
      const double grad = -(static_cast<double>(log_prob.mean()) + cfg_.target_entropy);
      Eigen::Matrix<double, 1, 1> la{log_alpha_};
      Eigen::Matrix<double, 1, 1> gl{grad};
      adam_step(la, gl, alpha_opt_);
      log_alpha_ = la(0);
    }

    soft_update(q1_, target1_, cfg_.tau);
    soft_update(q2_, target2_, cfg_.tau);

    if (!all_finite()) throw std::runtime_error("SacAgent::update: non-finite parameters after update");
    return diag;
  }

  bool all_finite() const {
    return actor_.network().all_finite() && q1_.all_finite() && q2_.all_finite() && target1_.all_finite() &&
           target2_.all_finite() && std::isfinite(log_alpha_);
  }

 private:
  static std::vector<Eigen::Index> critic_sizes(const SacConfig& cfg, Eigen::Index obs_dim, Eigen::Index action_dim) {
    std::vector<Eigen::Index> sizes{obs_dim + action_dim};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(1);
    return sizes;
  }

  SacConfig cfg_;
  SquashedGaussianActor<Scalar> actor_;
  Mlp<Scalar> q1_, q2_, target1_, target2_;
  AdamState<Scalar> actor_opt_, q1_opt_, q2_opt_;
  AdamState<double> alpha_opt_;
  double log_alpha_ = 0.0;
};

}  // namespace pirl
