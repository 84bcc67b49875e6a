#include "pirl/compressor_env.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace pirl {

double DemandCurve::at(double t) const {
  if (waypoints.empty()) return 0.0;
  if (t <= waypoints.front().first) return waypoints.front().second;
  if (t >= waypoints.back().first) return waypoints.back().second;
  auto hi = std::upper_bound(waypoints.begin(), waypoints.end(), t,
                             [](double x, const std::pair<double, double>& w) { return x < w.first; });
  auto lo = std::prev(hi);
  const double w = (t - lo->first) / (hi->first - lo->first);
  return lo->second + w * (hi->second - lo->second);
}

DemandCurve generate_demand(RngState episode_rng, const VariantSpec& variant) {
  Rng rng(episode_rng);
  const double demand_max = kDemandFraction * max_inflow_nlpm(variant);
  DemandCurve curve;
  for (int t = 0; t <= kEpisodeSteps; t += kDemandWaypointSpacing)
    curve.waypoints.emplace_back(static_cast<double>(t), demand_max * rng.uniform());
  return curve;
}

DemandCurve constant_demand(double nlpm) {
  return DemandCurve{{{0.0, nlpm}, {static_cast<double>(kEpisodeSteps), nlpm}}};
}

RpmTriple map_action(const Action& a, const VariantSpec& variant) {
  RpmTriple rpm{};
  for (int i = 0; i < kNumCompressors; ++i) {
    if (!std::isfinite(a[i])) throw std::invalid_argument("map_action: non-finite action component");
    const auto& c = variant.compressors[i];
    const double x = std::clamp(a[i], -1.0, 1.0);
    const double raw = (x + 1.0) / 2.0 * c.max_rpm;
    if (raw < kOffThresholdRpm)
      rpm[i] = 0.0;
    else if (raw < c.min_rpm)
      rpm[i] = c.min_rpm;
    else
      rpm[i] = raw;
  }
  return rpm;
}

Action rpm_to_action(const RpmTriple& rpm, const VariantSpec& variant) {
  Action a{};
  for (int i = 0; i < kNumCompressors; ++i)
    a[i] = rpm[i] <= 0.0 ? -1.0 : rpm[i] / variant.compressors[i].max_rpm * 2.0 - 1.0;
  return a;
}

double physics_update(double pressure_bar, const RpmTriple& executed_rpm, double demand_nlpm,
                      const VariantSpec& variant) {
  // 1 bar of tank pressure holds tank_volume normal liters.
  double inflow = 0.0;
  for (int i = 0; i < kNumCompressors; ++i) inflow += variant.compressors[i].flow_coeff * executed_rpm[i];
  inflow *= kStepMinutes;
  const double available = pressure_bar * variant.tank_volume;
  const double outflow = std::min(std::max(demand_nlpm, 0.0) * kStepMinutes, available);
  return std::max(0.0, pressure_bar + (inflow - outflow) / variant.tank_volume);
}

RewardBreakdown reward_breakdown(const RpmTriple& prev_rpm, const RpmTriple& executed_rpm, const VariantSpec& variant) {
  RewardBreakdown r;
  for (int i = 0; i < kNumCompressors; ++i) {
    const auto& c = variant.compressors[i];
    r.energy_kj += kStepSeconds * power_watts(c.power_table, executed_rpm[i]) * 0.001;
    if (prev_rpm[i] <= 0.0 && executed_rpm[i] > 0.0)
      r.turn_on_penalty_kj += kStepSeconds * power_watts(c.power_table, c.max_rpm) * 0.001;
  }
  return r;
}

CompressorEnv::CompressorEnv(VariantSpec variant, EnvOptions options)
    : variant_(std::move(variant)), options_(options) {
  reset(0);
  has_reset_ = false;
}

Observation CompressorEnv::reset(std::uint64_t episode_seed) {
  episode_seed_ = episode_seed;
  state_ = EnvState{};
  state_.pressure = kInitialPressureBar;
  state_.rpm = {0.0, 0.0, 0.0};
  state_.pressure_history.assign(kPressureHistory, kInitialPressureBar);
  state_.rpm_history.assign(kRpmHistory, RpmTriple{0.0, 0.0, 0.0});
  if (options_.constant_demand_fraction)
    state_.demand = constant_demand(*options_.constant_demand_fraction * max_inflow_nlpm(variant_));
  else
    state_.demand = generate_demand(RngState{episode_seed}, variant_);
  has_reset_ = true;
  return observe();
}

Observation CompressorEnv::observe() const {
  Observation obs{};
  int k = 0;
  for (double p : state_.pressure_history) obs[k++] = (p - kPressureCenterBar) / kPressureScaleBar;
  for (const auto& rpm : state_.rpm_history)
    for (int i = 0; i < kNumCompressors; ++i) obs[k++] = rpm[i] / variant_.compressors[i].max_rpm * 2.0 - 1.0;
  return obs;
}

StepResult CompressorEnv::step(const Action& action) {
  if (!has_reset_ || done()) throw std::logic_error("CompressorEnv::step: episode is finished; call reset()");

  StepResult result;
  auto& info = result.info;
  info.backup = state_.backup_engaged;
  if (state_.backup_engaged) {
    for (int i = 0; i < kNumCompressors; ++i) info.executed_rpm[i] = variant_.compressors[i].max_rpm;
  } else {
    info.executed_rpm = map_action(action, variant_);
  }
  info.demand_nlpm = state_.demand.at(static_cast<double>(state_.step_index));

  const double pressure = physics_update(state_.pressure, info.executed_rpm, info.demand_nlpm, variant_);
  const RewardBreakdown cost = reward_breakdown(state_.rpm, info.executed_rpm, variant_);
  info.energy_kj = cost.energy_kj;
  info.turn_on_penalty_kj = cost.turn_on_penalty_kj;
  info.pressure_bar = pressure;

  state_.pressure = pressure;
  state_.rpm = info.executed_rpm;
  state_.backup_engaged = pressure < kBackupPressureBar;
  state_.pressure_history.pop_front();
  state_.pressure_history.push_back(pressure);
  state_.rpm_history.pop_front();
  state_.rpm_history.push_back(info.executed_rpm);
  ++state_.step_index;

  result.observation = observe();
  result.reward = cost.reward();
  result.done = done();
  return result;
}

TrajectoryLog::TrajectoryLog(std::ostream& out) : out_(out) {
  out_ << "step,pressure_bar,rpm1,rpm2,rpm3,demand_nlpm,reward_kj,backup\n";
}

void TrajectoryLog::record(int step, const StepResult& r) {
  const auto& i = r.info;
  out_ << step << ',' << i.pressure_bar << ',' << i.executed_rpm[0] << ',' << i.executed_rpm[1] << ','
       << i.executed_rpm[2] << ',' << i.demand_nlpm << ',' << r.reward << ',' << (i.backup ? 1 : 0) << '\n';
}

nlohmann::json episode_provenance(const VariantSpec& variant, std::uint64_t episode_seed) {
  nlohmann::json rho = nlohmann::json::array();
  for (const auto& c : variant.compressors) rho.push_back(c.flow_coeff);
  return {{"seed", variant.seed},
          {"episode_seed", episode_seed},
          {"lambda", variant.lambda},
          {"rho_eff", std::move(rho)},
          {"tank_volume", variant.tank_volume}};
}

}  // namespace pirl
