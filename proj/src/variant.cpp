#include "pirl/variant.hpp"

#include <algorithm>
#include <stdexcept>

#include "pirl/rng.hpp"

namespace pirl {

PowerTable make_power_table(double flow_coeff, double strongest_flow_coeff, double min_rpm, double max_rpm) {
  PowerTable table;
  table.emplace_back(0.0, 0.0);
  const double strength = flow_coeff / strongest_flow_coeff;
  for (double rpm = min_rpm; rpm <= max_rpm + 1e-9; rpm += 50.0) {
    const double speed = rpm / max_rpm;
    table.emplace_back(rpm, kNominalMaxPowerW * strength * speed * speed);
  }
  return table;
}

double power_watts(const PowerTable& table, double rpm) {
  if (table.empty()) return 0.0;
  if (rpm <= table.front().first) return table.front().second;
  if (rpm >= table.back().first) return table.back().second;
  auto hi = std::upper_bound(table.begin(), table.end(), rpm,
                             [](double r, const std::pair<double, double>& e) { return r < e.first; });
  auto lo = std::prev(hi);
  const double w = (rpm - lo->first) / (hi->first - lo->first);
  return lo->second + w * (hi->second - lo->second);
}

VariantSpec make_variant(std::int64_t seed, double lambda, double base_rho) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("make_variant: lambda must lie in [0, 1]");
  if (seed < 1) throw std::invalid_argument("make_variant: seed must be >= 1");
  if (!(base_rho > 0.0)) throw std::invalid_argument("make_variant: base_rho must be positive");

  VariantSpec v;
  v.seed = seed;
  v.lambda = lambda;
  v.base_rho = base_rho;

  Rng rng(static_cast<std::uint64_t>(seed));
  v.tank_volume = 50.0 + 10.0 * rng.uniform();
  const double strongest = base_rho * (1.0 + lambda);
  for (auto& c : v.compressors) {
    c.flow_coeff = base_rho * (1.0 + lambda * rng.uniform());
    c.min_rpm = kMinRpm;
    c.max_rpm = kMaxRpm;
    c.power_table = make_power_table(c.flow_coeff, strongest, c.min_rpm, c.max_rpm);
  }
  return v;
}

double max_inflow_nlpm(const VariantSpec& v) {
  double total = 0.0;
  for (const auto& c : v.compressors) total += c.flow_coeff * c.max_rpm;
  return total;
}

void to_json(nlohmann::json& j, const CompressorSpec& c) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [rpm, watts] : c.power_table) table.push_back({rpm, watts});
  j = {{"flow_coeff", c.flow_coeff},
       {"min_rpm", c.min_rpm},
       {"max_rpm", c.max_rpm},
       {"power_table", std::move(table)}};
}

void from_json(const nlohmann::json& j, CompressorSpec& c) {
  c.flow_coeff = j.at("flow_coeff").get<double>();
  c.min_rpm = j.at("min_rpm").get<double>();
  c.max_rpm = j.at("max_rpm").get<double>();
  c.power_table.clear();
  for (const auto& e : j.at("power_table")) c.power_table.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());
}

void to_json(nlohmann::json& j, const VariantSpec& v) {
  j = {{"seed", v.seed},
       {"lambda", v.lambda},
       {"base_rho", v.base_rho},
       {"tank_volume", v.tank_volume},
       {"compressors", v.compressors}};
}

void from_json(const nlohmann::json& j, VariantSpec& v) {
  v.seed = j.at("seed").get<std::int64_t>();
  v.lambda = j.at("lambda").get<double>();
  v.base_rho = j.at("base_rho").get<double>();
  v.tank_volume = j.at("tank_volume").get<double>();
  const auto& cs = j.at("compressors");
  if (cs.size() != kNumCompressors) throw std::invalid_argument("VariantSpec: expected 3 compressors");
  for (int i = 0; i < kNumCompressors; ++i) v.compressors[i] = cs.at(i).get<CompressorSpec>();
}

}  // namespace pirl
