#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pirl/rng.hpp"
#include "pirl/variant.hpp"

namespace pirl {

inline constexpr int kEpisodeSteps = 250;
inline constexpr int kPressureHistory = 5;
inline constexpr int kRpmHistory = 3;
inline constexpr int kObservationDim = kPressureHistory + kNumCompressors * kRpmHistory;
inline constexpr int kActionDim = kNumCompressors;

inline constexpr double kInitialPressureBar = 4.0;
inline constexpr double kBackupPressureBar = 3.0;
inline constexpr double kPressureCenterBar = 4.0;
inline constexpr double kPressureScaleBar = 2.0;
inline constexpr double kOffThresholdRpm = 20.0;
inline constexpr double kStepMinutes = 1.0;
inline constexpr double kStepSeconds = 60.0;
inline constexpr double kDemandFraction = 0.8;
inline constexpr int kDemandWaypointSpacing = 25;

using Action = std::array<double, kActionDim>;
using RpmTriple = std::array<double, kNumCompressors>;
using Observation = std::array<double, kObservationDim>;

/// Piecewise-linear outflow schedule through the tank valve.
struct DemandCurve {
  std::vector<std::pair<double, double>> waypoints;  // (time step, normal liters / min)

  double at(double t) const;

  friend bool operator==(const DemandCurve&, const DemandCurve&) = default;
};

/// Waypoints every 25 steps over [0, 250], each uniform in [0, 0.8 * max inflow].
DemandCurve generate_demand(RngState episode_rng, const VariantSpec& variant);
DemandCurve constant_demand(double nlpm);

/// Action in [-1, 1] per compressor to executed target RPM; out-of-range
/// components are clamped, non-finite ones rejected.
RpmTriple map_action(const Action& a, const VariantSpec& variant);

/// Canonical action reproducing the given RPMs: off -> -1, rpm -> rpm / max * 2 - 1.
Action rpm_to_action(const RpmTriple& rpm, const VariantSpec& variant);

double physics_update(double pressure_bar, const RpmTriple& executed_rpm, double demand_nlpm,
                      const VariantSpec& variant);

struct RewardBreakdown {
  double energy_kj = 0.0;
  double turn_on_penalty_kj = 0.0;
  double reward() const { return -(energy_kj + turn_on_penalty_kj); }
};

RewardBreakdown reward_breakdown(const RpmTriple& prev_rpm, const RpmTriple& executed_rpm, const VariantSpec& variant);
inline double compute_reward(const RpmTriple& prev_rpm, const RpmTriple& executed_rpm, const VariantSpec& variant) {
  return reward_breakdown(prev_rpm, executed_rpm, variant).reward();
}

struct EnvState {
  double pressure = kInitialPressureBar;
  RpmTriple rpm{};
  std::deque<double> pressure_history;
  std::deque<RpmTriple> rpm_history;
  int step_index = 0;
  bool backup_engaged = false;
  DemandCurve demand;
};

struct StepInfo {
  RpmTriple executed_rpm{};
  bool backup = false;
  double demand_nlpm = 0.0;
  double energy_kj = 0.0;
  double turn_on_penalty_kj = 0.0;
  double pressure_bar = 0.0;
};

struct StepResult {
  Observation observation{};
  double reward = 0.0;  // kJ, <= 0
  bool done = false;
  StepInfo info;
};

/// Demand process selection. The default draws a fresh random curve per
/// episode; a constant fraction pins demand to fraction * max inflow.
struct EnvOptions {
  std::optional<double> constant_demand_fraction;
};

class CompressorEnv {
 public:
  explicit CompressorEnv(VariantSpec variant, EnvOptions options = {});

  Observation reset(std::uint64_t episode_seed);
  StepResult step(const Action& action);

  Observation observe() const;
  const EnvState& state() const noexcept { return state_; }
  const VariantSpec& variant() const noexcept { return variant_; }
  std::uint64_t episode_seed() const noexcept { return episode_seed_; }
  bool done() const noexcept { return state_.step_index >= kEpisodeSteps; }

 private:
  VariantSpec variant_;
  EnvOptions options_;
  EnvState state_;
  std::uint64_t episode_seed_ = 0;
  bool has_reset_ = false;
};

/// CSV writer: step, pressure_bar, rpm1, rpm2, rpm3, demand_nlpm, reward_kj, backup.
class TrajectoryLog {
 public:
  explicit TrajectoryLog(std::ostream& out);
  void record(int step, const StepResult& r);

 private:
  std::ostream& out_;
};

/// Provenance sidecar for one episode.
nlohmann::json episode_provenance(const VariantSpec& variant, std::uint64_t episode_seed);

}  // namespace pirl
