#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pirl/compressor_env.hpp"
#include "pirl/policy_shaping.hpp"
#include "pirl/rng.hpp"
#include "pirl/sac.hpp"

namespace pirl {

/// Action written to the replay buffer: the agent's own action when it is
/// what the environment executed, otherwise the canonical action for the
/// executed RPMs (backup override).
inline Action stored_action(const Action& intended, const StepInfo& info, const VariantSpec& variant) {
  Action clamped{};
  for (int k = 0; k < kActionDim; ++k) clamped[k] = std::clamp(intended[k], -1.0, 1.0);
  if (map_action(clamped, variant) == info.executed_rpm) return clamped;
  return rpm_to_action(info.executed_rpm, variant);
}

/// Per-run random streams, all derived from one run seed.
struct RunSeeds {
  std::uint64_t agent = 0;
  std::uint64_t acting = 0;
  std::uint64_t learning = 0;
  std::uint64_t episodes = 0;

  static RunSeeds from(std::uint64_t run_seed) {
    return {derive_seed(run_seed, 1), derive_seed(run_seed, 2), derive_seed(run_seed, 3), derive_seed(run_seed, 4)};
  }
  std::uint64_t episode(int e) const { return derive_seed(episodes, static_cast<std::uint64_t>(e)); }
};

/// Called after each episode with the 0-based episode index and its
/// unscaled return in kJ. Returning false stops training early.
using EpisodeCallback = std::function<bool(int, double)>;

/// Runs SAC on one environment variant for `episodes` episodes and returns the
/// per-episode undiscounted returns (kJ). With a non-null shaping config and
/// at least one advisor, actions are chosen by policy intersection; learning
/// is unchanged either way.
template <typename Scalar, DensityPolicy AdvisorPolicy = SquashedGaussianActor<Scalar>>
std::vector<double> train_agent(SacAgent<Scalar>& agent, CompressorEnv& env, int episodes, const RunSeeds& seeds,
                                const IntersectionConfig<AdvisorPolicy>* shaping = nullptr,
                                const EpisodeCallback& on_episode = {}) {
  const SacConfig& cfg = agent.config();
  ReplayBuffer<Scalar> buffer(cfg.buffer_capacity);
  Rng act_rng(seeds.acting);
  Rng learn_rng(seeds.learning);
  const bool shaped = shaping != nullptr && !shaping->advisors.empty();
  std::int64_t steps = 0;
  std::vector<double> returns;
  returns.reserve(static_cast<std::size_t>(std::max(episodes, 0)));

  for (int e = 0; e < episodes; ++e) {
    Observation obs = env.reset(seeds.episode(e));
    double total = 0.0;
    bool done = false;
    while (!done) {
      const Eigen::VectorXd o = to_vector(obs);
      Eigen::VectorXd a = shaped ? shaped_act(agent.actor(), *shaping, o, act_rng, true).action
                                 : agent.actor().sample(o, act_rng).action;
      const Action intended = to_action(a);
      const StepResult r = env.step(intended);
      total += r.reward;
      done = r.done;
      // Episodes end on a time limit the observation cannot reveal, so the
      // stored transition keeps bootstrapping.
      buffer.push({obs, stored_action(intended, r.info, env.variant()), r.reward * cfg.reward_scale, r.observation, false});
      obs = r.observation;
      ++steps;
      if (steps >= cfg.warmup_steps && buffer.size() >= cfg.batch_size)
        for (int u = 0; u < cfg.updates_per_step; ++u) agent.update(buffer.sample(cfg.batch_size, learn_rng), learn_rng);
    }
    returns.push_back(total);
    if (on_episode && !on_episode(e, total)) break;
  }
  return returns;
}

/// Mean undiscounted return of a fixed actor over `episodes` episodes.
template <typename Scalar>
double evaluate_actor(const SquashedGaussianActor<Scalar>& actor, CompressorEnv& env, int episodes,
                      std::uint64_t seed, SampleMode mode = SampleMode::deterministic) {
  if (episodes <= 0) return 0.0;
  Rng rng(derive_seed(seed, 7));
  double sum = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Observation obs = env.reset(derive_seed(seed, 100 + static_cast<std::uint64_t>(e)));
    bool done = false;
    while (!done) {
      const StepResult r = env.step(to_action(actor.sample(to_vector(obs), rng, mode).action));
      sum += r.reward;
      done = r.done;
      obs = r.observation;
    }
  }
  return sum / episodes;
}

/// Mean return of a constant action over `episodes` episodes.
inline double evaluate_constant_action(const Action& a, CompressorEnv& env, int episodes, std::uint64_t seed) {
  double sum = 0.0;
  for (int e = 0; e < episodes; ++e) {
    env.reset(derive_seed(seed, 100 + static_cast<std::uint64_t>(e)));
    bool done = false;
    while (!done) {
      const StepResult r = env.step(a);
      sum += r.reward;
      done = r.done;
    }
  }
  return sum / episodes;
}

}  // namespace pirl
