#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "pirl/compressor_env.hpp"
#include "pirl/io.hpp"
#include "pirl/mlp.hpp"
#include "pirl/sac.hpp"

namespace pirl {

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kPolicyKind = "pirl.policy";
inline constexpr const char* kAgentStateKind = "pirl.agent_state";

namespace detail {
inline void check_format(const nlohmann::json& j, const char* kind) {
  if (j.value("format_version", -1) != kFormatVersion)
    throw IoError(std::string("unsupported format_version for ") + kind);
  if (j.contains("kind") && j.at("kind").get<std::string>() != kind)
    throw IoError(std::string("expected a ") + kind + " document, got " + j.at("kind").get<std::string>());
}

template <typename Scalar>
nlohmann::json vector_json(const VectorX<Scalar>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(static_cast<double>(v(i)));
  return a;
}

template <typename Scalar>
VectorX<Scalar> vector_from_json(const nlohmann::json& a, Eigen::Index expected) {
  if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != expected) throw IoError("parameter array has wrong length");
  VectorX<Scalar> v(expected);
  for (Eigen::Index i = 0; i < expected; ++i) v(i) = static_cast<Scalar>(a.at(static_cast<std::size_t>(i)).get<double>());
  return v;
}
}  // namespace detail

/// Layer sizes plus per-layer row-major weights and biases.
template <typename Scalar>
nlohmann::json mlp_to_json(const Mlp<Scalar>& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto w = net.weight(l);
    nlohmann::json weights = nlohmann::json::array();
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index k = 0; k < w.cols(); ++k) weights.push_back(static_cast<double>(w(i, k)));
    layers.push_back({{"weights", std::move(weights)}, {"biases", detail::vector_json<Scalar>(net.bias(l))}});
  }
  return {{"format_version", kFormatVersion},
          {"layer_sizes", net.sizes()},
          {"activation", "relu"},
          {"output_activation", "identity"},
          {"layers", std::move(layers)}};
}

template <typename Scalar>
Mlp<Scalar> mlp_from_json(const nlohmann::json& j) {
  if (j.value("format_version", -1) != kFormatVersion) throw IoError("unsupported network format_version");
  Mlp<Scalar> net(j.at("layer_sizes").get<std::vector<Eigen::Index>>());
  const auto& layers = j.at("layers");
  if (layers.size() != net.num_layers()) throw IoError("network layer count does not match layer_sizes");
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    auto w = net.weight(l);
    const auto& flat = layers.at(l).at("weights");
    if (static_cast<Eigen::Index>(flat.size()) != w.size()) throw IoError("weight array has wrong length");
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(i, c) = static_cast<Scalar>(flat.at(k++).get<double>());
    net.bias(l) = detail::vector_from_json<Scalar>(layers.at(l).at("biases"), w.rows());
  }
  return net;
}

template <typename Scalar>
nlohmann::json adam_to_json(const AdamState<Scalar>& a) {
  return {{"step", a.step},       {"lr", a.lr},   {"beta1", a.beta1}, {"beta2", a.beta2},
          {"eps", a.eps},         {"m", detail::vector_json<Scalar>(a.m)}, {"v", detail::vector_json<Scalar>(a.v)}};
}

template <typename Scalar>
AdamState<Scalar> adam_from_json(const nlohmann::json& j, Eigen::Index n) {
  AdamState<Scalar> a;
  a.step = j.at("step").get<std::int64_t>();
  a.lr = j.at("lr").get<double>();
  a.beta1 = j.at("beta1").get<double>();
  a.beta2 = j.at("beta2").get<double>();
  a.eps = j.at("eps").get<double>();
  a.m = detail::vector_from_json<Scalar>(j.at("m"), n);
  a.v = detail::vector_from_json<Scalar>(j.at("v"), n);
  return a;
}

/// Serialized actor with the metadata needed to use it as an advisor.
template <typename Scalar>
struct PolicyArtifact {
  std::int64_t variant_seed = 0;
  double lambda = 0.0;
  SquashedGaussianActor<Scalar> actor;
};

inline nlohmann::json observation_normalization_json() {
  return {{"dim", kObservationDim},
          {"pressure_history", kPressureHistory},
          {"rpm_history", kRpmHistory},
          {"pressure_center_bar", kPressureCenterBar},
          {"pressure_scale_bar", kPressureScaleBar},
          {"rpm_scale", "max_rpm"},
          {"rpm_off_value", -1.0}};
}

template <typename Scalar>
nlohmann::json policy_to_json(const PolicyArtifact<Scalar>& p) {
  return {{"format_version", kFormatVersion},
          {"kind", kPolicyKind},
          {"variant_seed", p.variant_seed},
          {"lambda", p.lambda},
          {"observation", observation_normalization_json()},
          {"action_dim", p.actor.action_dim()},
          {"log_std_bounds", {kLogStdMin, kLogStdMax}},
          {"actor", mlp_to_json(p.actor.network())}};
}

template <typename Scalar>
PolicyArtifact<Scalar> policy_from_json(const nlohmann::json& j) {
  detail::check_format(j, kPolicyKind);
  PolicyArtifact<Scalar> p;
  p.variant_seed = j.at("variant_seed").get<std::int64_t>();
  p.lambda = j.at("lambda").get<double>();
  p.actor = SquashedGaussianActor<Scalar>(mlp_from_json<Scalar>(j.at("actor")));
  const auto obs_dim = j.at("observation").at("dim").get<Eigen::Index>();
  if (obs_dim != p.actor.obs_dim()) throw IoError("policy artifact: observation dim disagrees with actor input size");
  if (j.at("action_dim").get<Eigen::Index>() != p.actor.action_dim())
    throw IoError("policy artifact: action_dim disagrees with actor output size");
  return p;
}

template <typename Scalar>
void save_policy(const std::filesystem::path& path, const PolicyArtifact<Scalar>& p) {
  write_json_file(path, policy_to_json(p));
}

template <typename Scalar>
PolicyArtifact<Scalar> load_policy(const std::filesystem::path& path) {
  try {
    return policy_from_json<Scalar>(read_json_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed policy artifact " + path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

/// Critics, targets, optimizer moments and temperature: everything needed
/// beyond the actor to resume training.
template <typename Scalar>
nlohmann::json agent_state_to_json(const SacAgent<Scalar>& agent, std::int64_t variant_seed) {
  return {{"format_version", kFormatVersion},
          {"kind", kAgentStateKind},
          {"variant_seed", variant_seed},
          {"q1", mlp_to_json(agent.q1())},
          {"q2", mlp_to_json(agent.q2())},
          {"target1", mlp_to_json(agent.target1())},
          {"target2", mlp_to_json(agent.target2())},
          {"actor_opt", adam_to_json(agent.actor_opt())},
          {"q1_opt", adam_to_json(agent.q1_opt())},
          {"q2_opt", adam_to_json(agent.q2_opt())},
          {"alpha_opt", adam_to_json(agent.alpha_opt())},
          {"log_alpha", agent.log_alpha()}};
}

template <typename Scalar>
void restore_agent_state(SacAgent<Scalar>& agent, const nlohmann::json& j) {
  detail::check_format(j, kAgentStateKind);
  auto load_net = [&](const char* key, Mlp<Scalar>& dst) {
    Mlp<Scalar> net = mlp_from_json<Scalar>(j.at(key));
    if (net.sizes() != dst.sizes()) throw IoError(std::string("agent state: architecture mismatch for ") + key);
    dst = std::move(net);
  };
  load_net("q1", agent.q1());
  load_net("q2", agent.q2());
  load_net("target1", agent.target1());
  load_net("target2", agent.target2());
  agent.actor_opt() = adam_from_json<Scalar>(j.at("actor_opt"), agent.actor().network().num_params());
  agent.q1_opt() = adam_from_json<Scalar>(j.at("q1_opt"), agent.q1().num_params());
  agent.q2_opt() = adam_from_json<Scalar>(j.at("q2_opt"), agent.q2().num_params());
  agent.alpha_opt() = adam_from_json<double>(j.at("alpha_opt"), 1);
  agent.set_log_alpha(j.at("log_alpha").get<double>());
}

/// Order-sensitive checksum of a network's parameters.
template <typename Scalar>
std::uint64_t parameter_checksum(const Mlp<Scalar>& net) {
  const auto& p = net.params();
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(p.data()), sizeof(Scalar) * static_cast<std::size_t>(p.size())));
}

}  // namespace pirl
