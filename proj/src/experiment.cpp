#include "pirl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "pirl/training.hpp"

namespace pirl {

namespace fs = std::filesystem;

namespace {

std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

std::string condition_name(Condition c, int multi_advisors) {
  switch (c) {
    case Condition::scratch: return "scratch";
    case Condition::load: return "load";
    case Condition::pi_single: return "pi_single";
    case Condition::pi_multi: return "pi_multi_" + std::to_string(multi_advisors);
  }
  return "unknown";
}

Condition parse_condition(const std::string& s) {
  if (s == "scratch") return Condition::scratch;
  if (s == "load") return Condition::load;
  if (s == "pi_single") return Condition::pi_single;
  if (s == "pi_multi" || s.rfind("pi_multi_", 0) == 0) return Condition::pi_multi;
  throw ConfigError("unknown condition '" + s + "' (expected scratch, load, pi_single or pi_multi)");
}

std::string condition_label(const ExperimentConfig& cfg) { return condition_name(cfg.condition, cfg.multi_advisors); }

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  const auto& s = cfg.sac;
  nlohmann::json sac = {{"gamma", s.gamma},
                        {"tau", s.tau},
                        {"actor_lr", s.actor_lr},
                        {"critic_lr", s.critic_lr},
                        {"alpha_lr", s.alpha_lr},
                        {"batch_size", s.batch_size},
                        {"buffer_capacity", s.buffer_capacity},
                        {"warmup_steps", s.warmup_steps},
                        {"updates_per_step", s.updates_per_step},
                        {"auto_alpha", s.auto_alpha},
                        {"init_alpha", s.init_alpha},
                        {"target_entropy", s.target_entropy},
                        {"reward_scale", s.reward_scale},
                        {"hidden", s.hidden}};
  nlohmann::json j = {{"condition", cfg.condition == Condition::pi_multi ? "pi_multi" : condition_name(cfg.condition)},
                      {"multi_advisors", cfg.multi_advisors},
                      {"advisee_seed", cfg.advisee_seed},
                      {"advisor_seeds", cfg.advisor_seeds},
                      {"single_advisor_seed", cfg.single_advisor_seed},
                      {"lambda", cfg.lambda},
                      {"base_rho", cfg.base_rho},
                      {"advisor_episodes", cfg.advisor_episodes},
                      {"episodes", cfg.episodes},
                      {"runs", cfg.runs},
                      {"candidates", cfg.candidates},
                      {"sac", std::move(sac)},
                      {"master_seed", cfg.master_seed},
                      {"output_dir", cfg.output_dir},
                      {"advisor_dir", cfg.advisor_dir},
                      {"jobs", cfg.jobs}};
  j["constant_demand_fraction"] =
      cfg.constant_demand_fraction ? nlohmann::json(*cfg.constant_demand_fraction) : nlohmann::json(nullptr);
  return j;
}

void apply_config_json(ExperimentConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (j.contains("condition")) cfg.condition = parse_condition(get_or<std::string>(j, "condition", ""));
  cfg.multi_advisors = get_or(j, "multi_advisors", cfg.multi_advisors);
  cfg.advisee_seed = get_or(j, "advisee_seed", cfg.advisee_seed);
  cfg.advisor_seeds = get_or(j, "advisor_seeds", cfg.advisor_seeds);
  cfg.single_advisor_seed = get_or(j, "single_advisor_seed", cfg.single_advisor_seed);
  cfg.lambda = get_or(j, "lambda", cfg.lambda);
  cfg.base_rho = get_or(j, "base_rho", cfg.base_rho);
  cfg.advisor_episodes = get_or(j, "advisor_episodes", cfg.advisor_episodes);
  cfg.episodes = get_or(j, "episodes", cfg.episodes);
  cfg.runs = get_or(j, "runs", cfg.runs);
  cfg.candidates = get_or(j, "candidates", cfg.candidates);
  cfg.master_seed = get_or(j, "master_seed", cfg.master_seed);
  cfg.output_dir = get_or(j, "output_dir", cfg.output_dir);
  cfg.advisor_dir = get_or(j, "advisor_dir", cfg.advisor_dir);
  cfg.jobs = get_or(j, "jobs", cfg.jobs);
  if (j.contains("constant_demand_fraction")) {
    if (j.at("constant_demand_fraction").is_null())
      cfg.constant_demand_fraction.reset();
    else
      cfg.constant_demand_fraction = get_or(j, "constant_demand_fraction", 0.0);
  }
  if (j.contains("sac")) {
    const auto& s = j.at("sac");
    auto& c = cfg.sac;
    c.gamma = get_or(s, "gamma", c.gamma);
    c.tau = get_or(s, "tau", c.tau);
    c.actor_lr = get_or(s, "actor_lr", c.actor_lr);
    c.critic_lr = get_or(s, "critic_lr", c.critic_lr);
    c.alpha_lr = get_or(s, "alpha_lr", c.alpha_lr);
    c.batch_size = get_or(s, "batch_size", c.batch_size);
    c.buffer_capacity = get_or(s, "buffer_capacity", c.buffer_capacity);
    c.warmup_steps = get_or(s, "warmup_steps", c.warmup_steps);
    c.updates_per_step = get_or(s, "updates_per_step", c.updates_per_step);
    c.auto_alpha = get_or(s, "auto_alpha", c.auto_alpha);
    c.init_alpha = get_or(s, "init_alpha", c.init_alpha);
    c.target_entropy = get_or(s, "target_entropy", c.target_entropy);
    c.reward_scale = get_or(s, "reward_scale", c.reward_scale);
    c.hidden = get_or(s, "hidden", c.hidden);
  }
}

nlohmann::json config_identity_json(const ExperimentConfig& cfg) {
  nlohmann::json j = config_to_json(cfg);
  j.erase("output_dir");
  j.erase("advisor_dir");
  j.erase("jobs");
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a64(config_identity_json(cfg).dump())); }

void validate(const ExperimentConfig& cfg) {
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (!(cfg.base_rho > 0.0)) throw ConfigError("base_rho must be positive");
  if (cfg.advisee_seed < 1) throw ConfigError("advisee seed must be >= 1");
  for (auto s : cfg.advisor_seeds)
    if (s < 1) throw ConfigError("advisor seeds must be >= 1");
  if (cfg.episodes < 0 || cfg.advisor_episodes < 0) throw ConfigError("episode counts must be non-negative");
  if (cfg.runs < 1) throw ConfigError("runs must be >= 1");
  if (cfg.candidates < 1) throw ConfigError("candidates (K) must be >= 1");
  if (cfg.multi_advisors < 1) throw ConfigError("pi_multi needs at least one advisor");
  if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
  const auto& s = cfg.sac;
  if (!(s.gamma >= 0.0 && s.gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(s.tau > 0.0 && s.tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  if (s.batch_size < 1 || s.buffer_capacity < s.batch_size) throw ConfigError("need 1 <= batch_size <= buffer_capacity");
  if (s.updates_per_step < 0 || s.warmup_steps < 0) throw ConfigError("warmup/update counts must be non-negative");
  if (!(s.init_alpha > 0.0)) throw ConfigError("init_alpha must be positive");
  if (s.hidden.empty()) throw ConfigError("need at least one hidden layer");
  if (cfg.constant_demand_fraction && !(*cfg.constant_demand_fraction >= 0.0 && *cfg.constant_demand_fraction <= 1.0))
    throw ConfigError("constant_demand_fraction must lie in [0, 1]");
  if ((cfg.condition == Condition::pi_single || cfg.condition == Condition::load) &&
      cfg.single_advisor_seed == cfg.advisee_seed)
    throw ConfigError("advisor seed " + std::to_string(cfg.single_advisor_seed) + " collides with the advisee seed");
  if (cfg.condition != Condition::scratch && eligible_advisor_seeds(cfg).empty() && cfg.single_advisor_seed == 0)
    throw ConfigError("no advisor seed differs from the advisee seed");
}

fs::path advisor_directory(const ExperimentConfig& cfg) {
  return cfg.advisor_dir.empty() ? fs::path(cfg.output_dir) / "advisors" : fs::path(cfg.advisor_dir);
}
fs::path advisor_policy_path(const fs::path& dir, std::int64_t seed) {
  return dir / ("advisor_seed" + std::to_string(seed) + ".policy.json");
}
fs::path advisor_state_path(const fs::path& dir, std::int64_t seed) {
  return dir / ("advisor_seed" + std::to_string(seed) + ".state.json");
}

std::uint64_t run_seed(std::uint64_t master_seed, int run) {
  return derive_seed(master_seed, 0x1000 + static_cast<std::uint64_t>(run));
}
std::uint64_t advisor_training_seed(std::uint64_t master_seed, std::int64_t variant_seed) {
  return derive_seed(master_seed, 0x100000 + static_cast<std::uint64_t>(variant_seed));
}

EnvOptions env_options(const ExperimentConfig& cfg) { return EnvOptions{cfg.constant_demand_fraction}; }

void write_curve_csv(const fs::path& path, const std::vector<double>& returns) {
  std::string text = "episode,return_kj\n";
  for (std::size_t e = 0; e < returns.size(); ++e) text += std::to_string(e + 1) + "," + format_number(returns[e]) + "\n";
  write_text_file(path, text);
}

std::vector<double> read_curve_csv(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::getline(in, line);
  if (line.rfind("episode,return_kj", 0) != 0) throw IoError("not a learning curve CSV: " + path.string());
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("malformed row in " + path.string());
    try {
      out.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw IoError("malformed value in " + path.string());
    }
  }
  return out;
}

AdvisorResult train_advisor(const ExperimentConfig& cfg, std::int64_t seed, const fs::path& dir) {
  if (seed < 1) throw ConfigError("advisor seed must be >= 1");
  const VariantSpec variant = make_variant(seed, cfg.lambda, cfg.base_rho);
  CompressorEnv env(variant, env_options(cfg));
  const RunSeeds seeds = RunSeeds::from(advisor_training_seed(cfg.master_seed, seed));
  SacAgent<Real> agent(cfg.sac, seeds.agent);

  AdvisorResult result;
  result.curve.condition = "advisor";
  result.curve.run_id = static_cast<int>(seed);
  result.curve.returns = train_agent(agent, env, cfg.advisor_episodes, seeds);

  result.policy_path = advisor_policy_path(dir, seed);
  result.state_path = advisor_state_path(dir, seed);
  save_policy(result.policy_path, PolicyArtifact<Real>{seed, cfg.lambda, agent.actor()});
  write_json_file(result.state_path, agent_state_to_json(agent, seed));
  write_curve_csv(dir / ("advisor_seed" + std::to_string(seed) + ".curve.csv"), result.curve.returns);
  return result;
}

namespace {

/// Runs body(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
template <typename Body>
void parallel_for(int n, int jobs, Body&& body) {
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

std::vector<AdvisorResult> train_advisors(const ExperimentConfig& cfg, const std::vector<std::int64_t>& seeds) {
  validate(cfg);
  const fs::path dir = advisor_directory(cfg);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create advisor directory " + dir.string() + ": " + ec.message());
  std::vector<AdvisorResult> results(seeds.size());
  parallel_for(static_cast<int>(seeds.size()), cfg.jobs,
               [&](int i) { results[static_cast<std::size_t>(i)] = train_advisor(cfg, seeds[static_cast<std::size_t>(i)], dir); });
  write_manifest(dir, config_identity_json(cfg), config_hash(cfg), {{"advisor_seeds_trained", seeds}});
  return results;
}

std::vector<std::int64_t> eligible_advisor_seeds(const ExperimentConfig& cfg) {
  std::vector<std::int64_t> out;
  for (auto s : cfg.advisor_seeds)
    if (s != cfg.advisee_seed && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  return out;
}

std::vector<std::int64_t> advisors_for_run(const ExperimentConfig& cfg, int run) {
  const auto eligible = eligible_advisor_seeds(cfg);
  switch (cfg.condition) {
    case Condition::scratch: return {};
    case Condition::load:
    case Condition::pi_single:
      if (cfg.single_advisor_seed != 0) return {cfg.single_advisor_seed};
      return {eligible.at(static_cast<std::size_t>(run) % eligible.size())};
    case Condition::pi_multi: {
      const auto n = std::min<std::size_t>(static_cast<std::size_t>(cfg.multi_advisors), eligible.size());
      return {eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(n)};
    }
  }
  return {};
}

namespace {

using ActorT = SquashedGaussianActor<Real>;

struct RunOutcome {
  LearningCurve curve;
  nlohmann::json meta;
};

RunOutcome execute_run(const ExperimentConfig& cfg, int run, const VariantSpec& variant,
                       const std::map<std::int64_t, std::shared_ptr<const ActorT>>& advisors, const fs::path& dir) {
  const std::uint64_t seed = run_seed(cfg.master_seed, run);
  const RunSeeds seeds = RunSeeds::from(seed);
  CompressorEnv env(variant, env_options(cfg));
  SacAgent<Real> agent(cfg.sac, seeds.agent);
  const auto used = advisors_for_run(cfg, run);

  RunOutcome out;
  out.curve.condition = condition_label(cfg);
  out.curve.run_id = run;
  out.meta = {{"run", run}, {"run_seed", seed}, {"condition", out.curve.condition}, {"advisors", used}};

  IntersectionConfig<ActorT> shaping;
  shaping.candidates = cfg.candidates;
  if (cfg.condition == Condition::load) {
    const auto adv_dir = advisor_directory(cfg);
    agent.actor() = *advisors.at(used.front());
    const auto state = advisor_state_path(adv_dir, used.front());
    if (fs::exists(state)) {
      restore_agent_state(agent, read_json_file(state));
      out.meta["load_restore"] = "actor+critics+optimizer";
    } else {
      out.meta["load_restore"] = "actor_only";
    }
  } else if (cfg.condition == Condition::pi_single || cfg.condition == Condition::pi_multi) {
    for (auto s : used) shaping.advisors.push_back({advisors.at(s), s});
  }

  const fs::path curve_path = dir / ("run_" + std::to_string(run) + ".csv");
  std::ofstream csv(curve_path, std::ios::trunc);
  if (!csv) throw IoError("cannot open for writing: " + curve_path.string());
  csv << "episode,return_kj\n" << std::flush;
  auto on_episode = [&](int e, double ret) {
    csv << (e + 1) << ',' << format_number(ret) << '\n' << std::flush;
    if (!csv) throw IoError("write failed: " + curve_path.string());
    return true;
  };
  out.curve.returns = train_agent(agent, env, cfg.episodes, seeds, shaping.advisors.empty() ? nullptr : &shaping, on_episode);
  csv.close();
  out.meta["episodes_completed"] = out.curve.returns.size();
  out.meta["final_actor_checksum"] = hex64(parameter_checksum(agent.actor().network()));
  write_json_file(dir / ("run_" + std::to_string(run) + ".json"), out.meta);
  return out;
}

}  // namespace

std::vector<LearningCurve> run_condition(const ExperimentConfig& cfg) {
  validate(cfg);
  const fs::path dir = fs::path(cfg.output_dir) / condition_label(cfg);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

  const VariantSpec variant = make_variant(cfg.advisee_seed, cfg.lambda, cfg.base_rho);

  // Load every advisor artifact the condition needs up front.
  std::map<std::int64_t, std::shared_ptr<const ActorT>> advisors;
  const auto adv_dir = advisor_directory(cfg);
  for (int r = 0; r < cfg.runs; ++r) {
    for (auto s : advisors_for_run(cfg, r)) {
      if (advisors.count(s)) continue;
      const auto path = advisor_policy_path(adv_dir, s);
      if (!fs::exists(path)) throw MissingArtifactError("missing advisor artifact: " + path.string());
      auto artifact = load_policy<Real>(path);
      if (artifact.actor.obs_dim() != kObservationDim || artifact.actor.action_dim() != kActionDim)
        throw ConfigError("advisor " + path.string() + " does not match the environment's dimensions");
      advisors.emplace(s, std::make_shared<const ActorT>(std::move(artifact.actor)));
    }
  }

  std::vector<RunOutcome> outcomes(static_cast<std::size_t>(cfg.runs));
  parallel_for(cfg.runs, cfg.jobs,
               [&](int r) { outcomes[static_cast<std::size_t>(r)] = execute_run(cfg, r, variant, advisors, dir); });

  std::vector<LearningCurve> curves;
  for (auto& o : outcomes) curves.push_back(std::move(o.curve));

  nlohmann::json extra = {{"condition", condition_label(cfg)}, {"advisee_seed", cfg.advisee_seed}};
  const auto used0 = advisors_for_run(cfg, 0);
  if (cfg.condition == Condition::pi_multi) {
    extra["advisor_set"] = used0;
    extra["advisors_requested"] = cfg.multi_advisors;
    extra["advisors_used"] = used0.size();
    extra["advisor_set_reduced"] = used0.size() < static_cast<std::size_t>(cfg.multi_advisors);
    extra["advisee_excluded"] = std::find(cfg.advisor_seeds.begin(), cfg.advisor_seeds.end(), cfg.advisee_seed) !=
                                cfg.advisor_seeds.end();
  }
  if (cfg.condition == Condition::load) {
    bool full = true;
    for (int r = 0; r < cfg.runs; ++r)
      full = full && fs::exists(advisor_state_path(adv_dir, advisors_for_run(cfg, r).front()));
    extra["load_restore"] = full ? "actor+critics+optimizer" : "actor_only";
  }
  nlohmann::json checksums = nlohmann::json::object();
  for (const auto& [s, actor] : advisors) checksums[std::to_string(s)] = hex64(parameter_checksum(actor->network()));
  extra["advisor_parameter_checksums"] = std::move(checksums);
  write_manifest(dir, config_identity_json(cfg), config_hash(cfg), extra);
  return curves;
}

std::map<std::string, std::vector<LearningCurve>> read_curves(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw MissingArtifactError("run directory not found: " + dir.string());
  std::map<std::string, std::vector<LearningCurve>> out;
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.rfind("run_", 0) == 0 && entry.path().extension() == ".csv")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    LearningCurve c;
    c.condition = f.parent_path().filename().string();
    c.run_id = std::stoi(f.stem().string().substr(4));
    c.returns = read_curve_csv(f);
    out[c.condition].push_back(std::move(c));
  }
  for (auto& [name, curves] : out)
    std::sort(curves.begin(), curves.end(), [](const auto& a, const auto& b) { return a.run_id < b.run_id; });
  return out;
}

Summary aggregate(const std::map<std::string, std::vector<LearningCurve>>& curves) {
  Summary s;
  for (const auto& [name, runs] : curves) {
    if (runs.empty()) continue;
    std::size_t len = runs.front().returns.size();
    for (const auto& r : runs) len = std::min(len, r.returns.size());
    ConditionSummary cs;
    cs.runs = static_cast<int>(runs.size());
    cs.mean.resize(len);
    cs.std.resize(len);
    for (std::size_t e = 0; e < len; ++e) {
      // Sorted accumulation keeps the result independent of run order.
      std::vector<double> xs;
      for (const auto& r : runs) xs.push_back(r.returns[e]);
      std::sort(xs.begin(), xs.end());
      double sum = 0.0;
      for (double x : xs) sum += x;
      const double mean = sum / static_cast<double>(xs.size());
      double var = 0.0;
      for (double x : xs) var += (x - mean) * (x - mean);
      cs.mean[e] = mean;
      cs.std[e] = std::sqrt(var / static_cast<double>(xs.size()));
    }
    s[name] = std::move(cs);
  }
  return s;
}

nlohmann::json summary_to_json(const Summary& s) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, c] : s) j[name] = {{"runs", c.runs}, {"mean", c.mean}, {"std", c.std}};
  return {{"format_version", kFormatVersion}, {"kind", "pirl.summary"}, {"conditions", std::move(j)}};
}

Summary summary_from_json(const nlohmann::json& j) {
  Summary s;
  try {
    for (const auto& [name, c] : j.at("conditions").items()) {
      ConditionSummary cs;
      cs.runs = c.at("runs").get<int>();
      cs.mean = c.at("mean").get<std::vector<double>>();
      cs.std = c.at("std").get<std::vector<double>>();
      s[name] = std::move(cs);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed summary: ") + e.what());
  }
  return s;
}

std::vector<double> smooth(const std::vector<double>& xs, int window) {
  std::vector<double> out(xs.size());
  const auto w = static_cast<std::size_t>(std::max(window, 1));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::size_t lo = i + 1 >= w ? i + 1 - w : 0;
    double sum = 0.0;
    for (std::size_t k = lo; k <= i; ++k) sum += xs[k];
    out[i] = sum / static_cast<double>(i - lo + 1);
  }
  return out;
}

std::vector<fs::path> emit_plot_data(const Summary& s, const fs::path& dir, int window) {
  if (s.empty()) throw ConfigError("emit_plot_data: empty summary");
  std::vector<fs::path> written;
  std::size_t rows = 0;
  std::map<std::string, std::vector<double>> smoothed;
  for (const auto& [name, c] : s) {
    smoothed[name] = smooth(c.mean, window);
    std::string text = "episode,mean_return_kj,std_return_kj,smoothed_mean\n";
    for (std::size_t e = 0; e < c.mean.size(); ++e)
      text += std::to_string(e + 1) + "," + format_number(c.mean[e]) + "," + format_number(c.std[e]) + "," +
              format_number(smoothed[name][e]) + "\n";
    const fs::path p = dir / (name + ".csv");
    write_text_file(p, text);
    written.push_back(p);
    rows = std::max(rows, c.mean.size());
  }

  std::string combined = "episode";
  for (const auto& [name, c] : s) combined += "," + name + "_mean," + name + "_std," + name + "_smoothed";
  combined += "\n";
  for (std::size_t e = 0; e < rows; ++e) {
    combined += std::to_string(e + 1);
    for (const auto& [name, c] : s) {
      if (e < c.mean.size())
        combined += "," + format_number(c.mean[e]) + "," + format_number(c.std[e]) + "," + format_number(smoothed[name][e]);
      else
        combined += ",,,";
    }
    combined += "\n";
  }
  const fs::path cp = dir / "combined.csv";
  write_text_file(cp, combined);
  written.push_back(cp);

  std::string index = "# series\tfile\n";
  for (const auto& [name, c] : s) index += name + "\t" + name + ".csv\n";
  index += "combined\tcombined.csv\n";
  const fs::path ip = dir / "index.txt";
  write_text_file(ip, index);
  written.push_back(ip);
  return written;
}

void write_manifest(const fs::path& dir, const nlohmann::json& config, const std::string& hash,
                    const nlohmann::json& extra) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  nlohmann::json listing = nlohmann::json::array();
  for (const auto& f : files)
    listing.push_back({{"path", fs::relative(f, dir).generic_string()},
                       {"bytes", fs::file_size(f)},
                       {"fnv1a64", file_checksum(f)}});
  nlohmann::json j = {{"format_version", kFormatVersion},
                      {"kind", "pirl.manifest"},
                      {"config", config},
                      {"config_hash", hash},
                      {"files", std::move(listing)}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  write_json_file(dir / "manifest.json", j);
}

}  // namespace pirl
