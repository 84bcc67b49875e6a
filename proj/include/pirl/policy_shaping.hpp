#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "pirl/rng.hpp"

namespace pirl {

/// Anything that can propose k actions (columns) at an observation.
template <typename P>
concept CandidatePolicy = requires(const P& p, const Eigen::VectorXd& obs, Eigen::Index k, Rng& rng) {
  { p.sample_batch(obs, k, rng) } -> std::convertible_to<Eigen::MatrixXd>;
};

/// Anything that can score actions (columns) by log density at an observation.
template <typename P>
concept DensityPolicy = requires(const P& p, const Eigen::VectorXd& obs, const Eigen::MatrixXd& actions) {
  { p.log_prob_batch(obs, actions) } -> std::convertible_to<Eigen::VectorXd>;
};

struct DiscreteIntersection {
  Eigen::VectorXd probs;
  bool empty = false;  // no action had mass under both; probs then falls back to pi_L
};

/// Element-wise product of two categorical distributions, renormalized.
/// When the product has no mass the learner keeps the last word.
inline DiscreteIntersection intersect_discrete(const Eigen::VectorXd& pi_l, const Eigen::VectorXd& pi_a) {
  if (pi_l.size() != pi_a.size() || pi_l.size() == 0)
    throw std::invalid_argument("intersect_discrete: distributions must have the same non-zero length");
  for (const auto* p : {&pi_l, &pi_a}) {
    if (!p->allFinite() || (p->array() < 0.0).any() || std::abs(p->sum() - 1.0) > 1e-9)
      throw std::invalid_argument("intersect_discrete: inputs must be probability vectors");
  }
  const Eigen::VectorXd prod = pi_l.cwiseProduct(pi_a);
  const double mass = prod.sum();
  if (!(mass > 0.0)) return {pi_l, true};
  return {prod / mass, false};
}

/// A frozen policy used to reweight the learner's proposals.
template <typename Policy>
struct Advisor {
  std::shared_ptr<const Policy> policy;
  std::int64_t id = 0;
};

template <typename Policy>
struct IntersectionConfig {
  Eigen::Index candidates = 64;
  double density_floor = std::numeric_limits<double>::min();
  std::vector<Advisor<Policy>> advisors;
};

template <typename Policy>
const Advisor<Policy>& pick_advisor(const std::vector<Advisor<Policy>>& advisors, Rng& rng) {
  if (advisors.empty()) throw std::invalid_argument("pick_advisor: advisor set is empty");
  return advisors[static_cast<std::size_t>(rng.below(advisors.size()))];
}

struct IntersectionResult {
  Eigen::VectorXd action;
  bool fallback = false;        // no candidate had usable advisor density
  Eigen::Index candidate = -1;  // index into the proposal set, -1 on fallback
};

/// Draws K proposals from the learner, builds a categorical distribution over
/// them from the advisor's densities and samples one. If the total advisor
/// density is not above `density_floor` a fresh learner sample is returned.
/// Densities are handled in log space, shifted by their maximum.
template <CandidatePolicy Learner, DensityPolicy AdvisorPolicy>
IntersectionResult intersect_continuous(const Learner& actor, const AdvisorPolicy& advisor, const Eigen::VectorXd& obs,
                                        Eigen::Index candidates, double density_floor, Rng& rng) {
  if (candidates < 1) throw std::invalid_argument("intersect_continuous: need at least one candidate");
  const Eigen::MatrixXd proposals = actor.sample_batch(obs, candidates, rng);
  const Eigen::VectorXd log_d = advisor.log_prob_batch(obs, proposals);

  double max_log = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < log_d.size(); ++i)
    if (log_d(i) > max_log) max_log = log_d(i);

  bool usable = std::isfinite(max_log);
  Eigen::VectorXd weights;
  double total = 0.0;
  if (usable) {
    weights = (log_d.array() - max_log).exp().matrix();
    for (Eigen::Index i = 0; i < weights.size(); ++i)
      if (!std::isfinite(weights(i))) weights(i) = 0.0;
    total = weights.sum();
    const double log_total = max_log + std::log(total);
    usable = total > 0.0 && std::isfinite(log_total) && log_total > std::log(density_floor);
  }
  if (!usable) return {actor.sample_batch(obs, 1, rng).col(0), true, -1};

  const double target = rng.uniform() * total;
  double acc = 0.0;
  Eigen::Index pick = weights.size() - 1;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    acc += weights(i);
    if (target < acc) {
      pick = i;
      break;
    }
  }
  while (pick > 0 && weights(pick) == 0.0) --pick;
  return {proposals.col(pick), false, pick};
}

template <CandidatePolicy Learner, DensityPolicy AdvisorPolicy>
IntersectionResult intersect_continuous(const Learner& actor, const AdvisorPolicy& advisor, const Eigen::VectorXd& obs,
                                        const IntersectionConfig<AdvisorPolicy>& cfg, Rng& rng) {
  return intersect_continuous(actor, advisor, obs, cfg.candidates, cfg.density_floor, rng);
}

struct ShapedAction {
  Eigen::VectorXd action;
  std::int64_t advisor_id = -1;  // -1 when shaping was not applied
  bool fallback = false;
};

/// Acting-time action selection. Without shaping (or without advisors) this
/// is exactly one learner sample; otherwise one advisor is drawn uniformly and
/// the learner's proposals are intersected with it.
template <CandidatePolicy Learner, DensityPolicy AdvisorPolicy>
ShapedAction shaped_act(const Learner& actor, const IntersectionConfig<AdvisorPolicy>& cfg, const Eigen::VectorXd& obs,
                        Rng& rng, bool shaping_enabled) {
  if (!shaping_enabled || cfg.advisors.empty()) return {actor.sample_batch(obs, 1, rng).col(0), -1, false};
  const auto& advisor = pick_advisor(cfg.advisors, rng);
  auto r = intersect_continuous(actor, *advisor.policy, obs, cfg, rng);
  return {std::move(r.action), advisor.id, r.fallback};
}

}  // namespace pirl
