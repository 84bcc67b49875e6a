// Command-line driver: train-advisors, run, aggregate, plot-data, eval.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pirl/experiment.hpp"
#include "pirl/training.hpp"

namespace fs = std::filesystem;
using namespace pirl;

namespace {

constexpr const char* kOutputRootEnv = "PIRL_OUTPUT_ROOT";

enum ExitCode { kOk = 0, kConfigError = 1, kMissingArtifact = 2, kIoFailure = 3 };

/// CLI flags that overlay an ExperimentConfig only when given explicitly, so
/// that --config FILE values survive unless overridden.
class ConfigFlags {
 public:
  template <typename T>
  void add(CLI::App* app, const std::string& name, const std::string& help, std::function<void(ExperimentConfig&, const T&)> set) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, help);
    setters_.push_back([opt, value, set](ExperimentConfig& cfg) {
      if (opt->count() > 0) set(cfg, *value);
    });
  }

  void add_flag(CLI::App* app, const std::string& name, const std::string& help, std::function<void(ExperimentConfig&)> set) {
    CLI::Option* opt = app->add_flag(name, help);
    setters_.push_back([opt, set](ExperimentConfig& cfg) {
      if (opt->count() > 0) set(cfg);
    });
  }

  void apply(ExperimentConfig& cfg) const {
    for (const auto& s : setters_) s(cfg);
  }

 private:
  std::vector<std::function<void(ExperimentConfig&)>> setters_;
};

struct CommonOptions {
  std::string config_file;
  std::string output;
  ConfigFlags flags;
};

void add_experiment_flags(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config_file, "JSON config file; explicit flags override its values");
  app->add_option("--output,-o", o.output, "Output directory (default: $PIRL_OUTPUT_ROOT, then config, then ./pirl_out)");
  auto& f = o.flags;
  f.add<std::string>(app, "--condition", "scratch | load | pi_single | pi_multi",
                     [](auto& c, const auto& v) { c.condition = parse_condition(v); });
  f.add<int>(app, "--advisors,-n", "Advisor count for pi_multi", [](auto& c, const auto& v) { c.multi_advisors = v; });
  f.add<std::int64_t>(app, "--advisee-seed", "Variant seed of the advisee", [](auto& c, const auto& v) { c.advisee_seed = v; });
  f.add<std::vector<std::int64_t>>(app, "--advisor-seeds", "Variant seeds of available advisors",
                                   [](auto& c, const auto& v) { c.advisor_seeds = v; });
  f.add<std::int64_t>(app, "--single-advisor", "Fixed advisor seed for load / pi_single (default: rotate by run)",
                      [](auto& c, const auto& v) { c.single_advisor_seed = v; });
  f.add<std::string>(app, "--advisor-dir", "Directory of advisor artifacts (default: <output>/advisors)",
                     [](auto& c, const auto& v) { c.advisor_dir = v; });
  f.add<double>(app, "--lambda", "Fraction of alteration applied to compressor parameters",
                [](auto& c, const auto& v) { c.lambda = v; });
  f.add<double>(app, "--base-rho", "Base flow coefficient (normal liters per revolution)",
                [](auto& c, const auto& v) { c.base_rho = v; });
  f.add<int>(app, "--advisor-episodes", "Training episodes per advisor", [](auto& c, const auto& v) { c.advisor_episodes = v; });
  f.add<int>(app, "--episodes", "Episodes per transfer run", [](auto& c, const auto& v) { c.episodes = v; });
  f.add<int>(app, "--runs", "Runs per condition", [](auto& c, const auto& v) { c.runs = v; });
  f.add<Eigen::Index>(app, "--candidates,-K", "Candidate actions per intersection", [](auto& c, const auto& v) { c.candidates = v; });
  f.add<std::uint64_t>(app, "--master-seed", "Master seed", [](auto& c, const auto& v) { c.master_seed = v; });
  f.add<double>(app, "--constant-demand", "Pin demand to this fraction of max inflow",
                [](auto& c, const auto& v) { c.constant_demand_fraction = v; });
  f.add<int>(app, "--jobs,-j", "Concurrent runs", [](auto& c, const auto& v) { c.jobs = v; });
  f.add<double>(app, "--gamma", "Discount factor", [](auto& c, const auto& v) { c.sac.gamma = v; });
  f.add<double>(app, "--tau", "Target smoothing coefficient", [](auto& c, const auto& v) { c.sac.tau = v; });
  f.add<double>(app, "--lr", "Learning rate for all networks and the temperature", [](auto& c, const auto& v) {
    c.sac.actor_lr = c.sac.critic_lr = c.sac.alpha_lr = v;
  });
  f.add<double>(app, "--actor-lr", "Actor learning rate", [](auto& c, const auto& v) { c.sac.actor_lr = v; });
  f.add<double>(app, "--critic-lr", "Critic learning rate", [](auto& c, const auto& v) { c.sac.critic_lr = v; });
  f.add<double>(app, "--alpha-lr", "Temperature learning rate", [](auto& c, const auto& v) { c.sac.alpha_lr = v; });
  f.add<Eigen::Index>(app, "--batch-size", "Minibatch size", [](auto& c, const auto& v) { c.sac.batch_size = v; });
  f.add<Eigen::Index>(app, "--buffer-capacity", "Replay capacity", [](auto& c, const auto& v) { c.sac.buffer_capacity = v; });
  f.add<std::int64_t>(app, "--warmup-steps", "Steps before learning starts", [](auto& c, const auto& v) { c.sac.warmup_steps = v; });
  f.add<int>(app, "--updates-per-step", "Gradient updates per environment step",
             [](auto& c, const auto& v) { c.sac.updates_per_step = v; });
  f.add<double>(app, "--init-alpha", "Initial temperature", [](auto& c, const auto& v) { c.sac.init_alpha = v; });
  f.add_flag(app, "--fixed-alpha", "Disable automatic temperature tuning", [](auto& c) { c.sac.auto_alpha = false; });
  f.add<double>(app, "--target-entropy", "Entropy target for temperature tuning",
                [](auto& c, const auto& v) { c.sac.target_entropy = v; });
  f.add<double>(app, "--reward-scale", "Multiplier applied to rewards entering the buffer",
                [](auto& c, const auto& v) { c.sac.reward_scale = v; });
  f.add<std::vector<Eigen::Index>>(app, "--hidden", "Hidden layer sizes", [](auto& c, const auto& v) { c.sac.hidden = v; });
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig cfg;
  if (!o.config_file.empty()) {
    try {
      apply_config_json(cfg, read_json_file(o.config_file));
    } catch (const MissingArtifactError&) {
      throw ConfigError("config file not found: " + o.config_file);
    } catch (const IoError& e) {
      throw ConfigError(e.what());
    }
  }
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') cfg.output_dir = root;
  if (!o.output.empty()) cfg.output_dir = o.output;
  o.flags.apply(cfg);
  return cfg;
}

std::string default_output_dir() {
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') return root;
  return ExperimentConfig{}.output_dir;
}

double window_mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

int run_main(int argc, char** argv) {
  CLI::App app{"Compressor-tank SAC workbench with policy-intersection transfer"};
  app.require_subcommand(1);

  CommonOptions train_opts;
  auto* train = app.add_subcommand("train-advisors", "Train advisor policies on seeded variants");
  add_experiment_flags(train, train_opts);
  std::vector<std::int64_t> train_seeds;
  train->add_option("--seeds", train_seeds, "Variant seeds to train (default: --advisor-seeds)");

  CommonOptions run_opts;
  auto* run = app.add_subcommand("run", "Run one transfer condition");
  add_experiment_flags(run, run_opts);

  std::string agg_input, agg_output;
  auto* agg = app.add_subcommand("aggregate", "Mean/std learning curves per condition");
  agg->add_option("--input,-i", agg_input, "Directory holding <condition>/run_*.csv (default: output root)");
  agg->add_option("--output,-o", agg_output, "Summary JSON path (default: <input>/summary.json)");

  std::string plot_summary, plot_output;
  int plot_window = 10;
  auto* plot = app.add_subcommand("plot-data", "Emit plot-ready CSVs from a summary");
  plot->add_option("--summary,-s", plot_summary, "Summary JSON (default: <output root>/summary.json)");
  plot->add_option("--output,-o", plot_output, "Output directory (default: <summary dir>/plot)");
  plot->add_option("--window", plot_window, "Trailing smoothing window")->check(CLI::PositiveNumber);

  std::string eval_policy, eval_trajectory;
  std::int64_t eval_seed = 17;
  double eval_lambda = 0.5;
  int eval_episodes = 20;
  std::uint64_t eval_rng_seed = 1;
  bool eval_stochastic = false;
  double eval_constant_demand = -1.0;
  auto* eval = app.add_subcommand("eval", "Evaluate a policy artifact on a variant");
  eval->add_option("--policy,-p", eval_policy, "Policy artifact JSON")->required();
  eval->add_option("--variant-seed", eval_seed, "Variant seed");
  eval->add_option("--lambda", eval_lambda, "Fraction of alteration");
  eval->add_option("--episodes", eval_episodes, "Evaluation episodes");
  eval->add_option("--seed", eval_rng_seed, "Evaluation seed (episode demand curves, sampling)");
  eval->add_flag("--stochastic", eval_stochastic, "Sample actions instead of using the mean");
  eval->add_option("--constant-demand", eval_constant_demand, "Pin demand to this fraction of max inflow");
  eval->add_option("--trajectory", eval_trajectory, "Write the first episode's trajectory CSV (+ .json sidecar)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*train) {
    ExperimentConfig cfg = resolve_config(train_opts);
    const auto seeds = train_seeds.empty() ? cfg.advisor_seeds : train_seeds;
    const auto results = train_advisors(cfg, seeds);
    for (const auto& r : results)
      std::cout << "advisor seed " << r.curve.run_id << ": " << r.policy_path.string() << " (final return "
                << (r.curve.returns.empty() ? 0.0 : r.curve.returns.back()) << " kJ)\n";
    return kOk;
  }

  if (*run) {
    const ExperimentConfig cfg = resolve_config(run_opts);
    const auto curves = run_condition(cfg);
    for (const auto& c : curves)
      std::cout << c.condition << " run " << c.run_id << ": mean return " << window_mean(c.returns) << " kJ over "
                << c.returns.size() << " episodes\n";
    return kOk;
  }

  if (*agg) {
    const fs::path input = agg_input.empty() ? fs::path(default_output_dir()) : fs::path(agg_input);
    const fs::path output = agg_output.empty() ? input / "summary.json" : fs::path(agg_output);
    auto curves = read_curves(input);
    if (curves.empty()) throw MissingArtifactError("no run_*.csv curves found below " + input.string());
    write_json_file(output, summary_to_json(aggregate(curves)));
    std::cout << output.string() << "\n";
    return kOk;
  }

  if (*plot) {
    const fs::path summary = plot_summary.empty() ? fs::path(default_output_dir()) / "summary.json" : fs::path(plot_summary);
    const fs::path output = plot_output.empty() ? summary.parent_path() / "plot" : fs::path(plot_output);
    for (const auto& p : emit_plot_data(summary_from_json(read_json_file(summary)), output, plot_window))
      std::cout << p.string() << "\n";
    return kOk;
  }

  if (*eval) {
    const auto artifact = load_policy<Real>(eval_policy);
    if (artifact.actor.obs_dim() != kObservationDim || artifact.actor.action_dim() != kActionDim)
      throw ConfigError("policy dimensions do not match the environment");
    EnvOptions opts;
    if (eval_constant_demand >= 0.0) opts.constant_demand_fraction = eval_constant_demand;
    const VariantSpec variant = make_variant(eval_seed, eval_lambda);
    CompressorEnv env(variant, opts);
    const SampleMode mode = eval_stochastic ? SampleMode::stochastic : SampleMode::deterministic;
    const double mean = evaluate_actor(artifact.actor, env, eval_episodes, eval_rng_seed, mode);

    if (!eval_trajectory.empty()) {
      std::ofstream out(eval_trajectory, std::ios::trunc);
      if (!out) throw IoError("cannot open for writing: " + eval_trajectory);
      TrajectoryLog log(out);
      Rng rng(derive_seed(eval_rng_seed, 7));
      const std::uint64_t episode_seed = derive_seed(eval_rng_seed, 100);
      Observation obs = env.reset(episode_seed);
      for (int t = 0; !env.done(); ++t) {
        const StepResult r = env.step(to_action(artifact.actor.sample(to_vector(obs), rng, mode).action));
        log.record(t, r);
        obs = r.observation;
      }
      if (!out) throw IoError("write failed: " + eval_trajectory);
      write_json_file(fs::path(eval_trajectory).replace_extension(".json"), episode_provenance(variant, episode_seed));
    }
    nlohmann::json result = {{"policy", eval_policy},
                             {"policy_variant_seed", artifact.variant_seed},
                             {"variant_seed", eval_seed},
                             {"episodes", eval_episodes},
                             {"mode", eval_stochastic ? "stochastic" : "deterministic"},
                             {"mean_return_kj", mean}};
    std::cout << result.dump(1) << "\n";
    return kOk;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_main(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const MissingArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return kMissingArtifact;
  } catch (const IoError& e) {
    std::cerr << "I/O failure: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  }
}
