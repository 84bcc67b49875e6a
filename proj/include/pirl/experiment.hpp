#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pirl/artifact.hpp"
#include "pirl/sac.hpp"

namespace pirl {

/// Scalar used by the experiment driver for training.
using Real = float;

enum class Condition { scratch, load, pi_single, pi_multi };

struct ExperimentConfig {
  Condition condition = Condition::scratch;
  int multi_advisors = 16;  // requested advisor count for pi_multi
  std::int64_t advisee_seed = 17;
  std::vector<std::int64_t> advisor_seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16};
  std::int64_t single_advisor_seed = 0;  // 0: rotate through advisor_seeds by run index
  double lambda = 0.5;
  double base_rho = kDefaultBaseRho;
  int advisor_episodes = 150;
  int episodes = 300;
  int runs = 10;
  Eigen::Index candidates = 64;
  SacConfig sac;
  std::uint64_t master_seed = 1;
  std::string output_dir = "pirl_out";
  std::string advisor_dir;  // empty: <output_dir>/advisors
  std::optional<double> constant_demand_fraction;
  int jobs = 1;
};

std::string condition_name(Condition c, int multi_advisors = 16);
Condition parse_condition(const std::string& s);
/// Directory-style label: scratch, load, pi_single, pi_multi_<n>.
std::string condition_label(const ExperimentConfig& cfg);

nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Overlays the keys present in `j` onto `cfg`. Throws ConfigError on bad values.
void apply_config_json(ExperimentConfig& cfg, const nlohmann::json& j);
/// Config without placement fields (output/advisor directories, jobs); these
/// never change results, so they are left out of hashes and manifests.
nlohmann::json config_identity_json(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);
/// Throws ConfigError when the configuration is inconsistent.
void validate(const ExperimentConfig& cfg);

std::filesystem::path advisor_directory(const ExperimentConfig& cfg);
std::filesystem::path advisor_policy_path(const std::filesystem::path& dir, std::int64_t seed);
std::filesystem::path advisor_state_path(const std::filesystem::path& dir, std::int64_t seed);

std::uint64_t run_seed(std::uint64_t master_seed, int run);
std::uint64_t advisor_training_seed(std::uint64_t master_seed, std::int64_t variant_seed);

struct LearningCurve {
  std::string condition;
  int run_id = 0;
  std::vector<double> returns;  // unscaled kJ per episode
};

struct AdvisorResult {
  std::filesystem::path policy_path;
  std::filesystem::path state_path;
  LearningCurve curve;
};

EnvOptions env_options(const ExperimentConfig& cfg);

/// Trains unshaped SAC on variant(seed, lambda) and writes the actor artifact,
/// the resumable agent state and the learning curve into `dir`.
AdvisorResult train_advisor(const ExperimentConfig& cfg, std::int64_t seed, const std::filesystem::path& dir);

/// Trains one advisor per seed into advisor_directory(cfg) (cfg.jobs at a time)
/// and writes a manifest there.
std::vector<AdvisorResult> train_advisors(const ExperimentConfig& cfg, const std::vector<std::int64_t>& seeds);

/// Advisors excluded from / used by the given condition and run.
std::vector<std::int64_t> eligible_advisor_seeds(const ExperimentConfig& cfg);
std::vector<std::int64_t> advisors_for_run(const ExperimentConfig& cfg, int run);

/// Runs every run of cfg.condition, writing curves incrementally under
/// <output_dir>/<label>/ plus a manifest. Returns the curves in run order.
std::vector<LearningCurve> run_condition(const ExperimentConfig& cfg);

/// Reads run_*.csv curves below `dir` (one subdirectory per condition).
std::map<std::string, std::vector<LearningCurve>> read_curves(const std::filesystem::path& dir);

struct ConditionSummary {
  std::vector<double> mean;
  std::vector<double> std;  // population standard deviation across runs
  int runs = 0;
};

using Summary = std::map<std::string, ConditionSummary>;

Summary aggregate(const std::map<std::string, std::vector<LearningCurve>>& curves);
nlohmann::json summary_to_json(const Summary& s);
Summary summary_from_json(const nlohmann::json& j);

/// Trailing moving average over at most `window` points.
std::vector<double> smooth(const std::vector<double>& xs, int window = 10);

/// One CSV per condition, a combined CSV and a plain-text index. Returns the
/// written paths.
std::vector<std::filesystem::path> emit_plot_data(const Summary& s, const std::filesystem::path& dir, int window = 10);

/// Writes <dir>/manifest.json listing every other file below `dir` with its
/// checksum, plus the config and its hash.
void write_manifest(const std::filesystem::path& dir, const nlohmann::json& config, const std::string& hash,
                    const nlohmann::json& extra = nlohmann::json::object());

void write_curve_csv(const std::filesystem::path& path, const std::vector<double>& returns);
std::vector<double> read_curve_csv(const std::filesystem::path& path);

}  // namespace pirl
