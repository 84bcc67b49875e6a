#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "json.hpp"

namespace pirl {

inline constexpr int kNumCompressors = 3;
inline constexpr double kDefaultBaseRho = 0.05;  // normal liters per revolution
inline constexpr double kMinRpm = 400.0;
inline constexpr double kMaxRpm = 600.0;
inline constexpr double kNominalMaxPowerW = 2000.0;

/// (RPM, watts) pairs, RPM strictly increasing, starting at (0, 0).
using PowerTable = std::vector<std::pair<double, double>>;

struct CompressorSpec {
  double flow_coeff = kDefaultBaseRho;  // normal liters per revolution
  double min_rpm = kMinRpm;
  double max_rpm = kMaxRpm;
  PowerTable power_table;

  friend bool operator==(const CompressorSpec&, const CompressorSpec&) = default;
};

/// One seeded instance of the three-compressor tank problem.
struct VariantSpec {
  std::int64_t seed = 1;
  double lambda = 0.0;
  double base_rho = kDefaultBaseRho;
  double tank_volume = 50.0;  // liters
  std::array<CompressorSpec, kNumCompressors> compressors;

  friend bool operator==(const VariantSpec&, const VariantSpec&) = default;
};

/// Quadratic-in-speed power curve scaled by the compressor's strength,
/// tabulated at (0, 0) and every 50 RPM from min_rpm to max_rpm.
PowerTable make_power_table(double flow_coeff, double strongest_flow_coeff, double min_rpm = kMinRpm,
                            double max_rpm = kMaxRpm);

/// Linear interpolation in the table, clamped at both ends.
double power_watts(const PowerTable& table, double rpm);

/// Draws zeta_0 (tank) then zeta_1..zeta_3 (compressors) from SplitMix64(seed).
/// Throws std::invalid_argument for lambda outside [0, 1], seed < 1 or base_rho <= 0.
VariantSpec make_variant(std::int64_t seed, double lambda, double base_rho = kDefaultBaseRho);

/// Sum of per-compressor flow at max_rpm, in normal liters per minute.
double max_inflow_nlpm(const VariantSpec& v);

void to_json(nlohmann::json& j, const CompressorSpec& c);
void from_json(const nlohmann::json& j, CompressorSpec& c);
void to_json(nlohmann::json& j, const VariantSpec& v);
void from_json(const nlohmann::json& j, VariantSpec& v);

}  // namespace pirl
