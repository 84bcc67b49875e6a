// Acceptance suite: one PASS/FAIL line per criterion.
//
//   pirl_acceptance [--out DIR] [--reuse] [criterion ...]
//
// With no criteria every one of them runs. --reuse lets criteria 7 and 8 pick
// up advisor and run artifacts from DIR when their manifest's config hash
// matches the configuration below.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pirl/experiment.hpp"
#include "pirl/policy_shaping.hpp"
#include "pirl/training.hpp"
#include "test_support.hpp"

using namespace pirl;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Discrete intersection.
Verdict discrete_oracle() {
  const auto t0 = Clock::now();
  Eigen::VectorXd pl(2), pa(2);
  pl << 0.6, 0.4;
  pa << 0.25, 0.75;
  const auto r = intersect_discrete(pl, pa);
  const double err = std::max(std::abs(r.probs(0) - 1.0 / 3.0), std::abs(r.probs(1) - 2.0 / 3.0));

  Rng rng(1);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(15));
    Eigen::VectorXd p(n);
    for (Eigen::Index i = 0; i < n; ++i) p(i) = -std::log(1.0 - rng.uniform());
    p /= p.sum();
    const auto id = intersect_discrete(p, Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
    worst = std::max(worst, (id.probs - p).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  return {err <= 1e-12 && worst <= 1e-12 && secs < 1.0,
          fmt("reference error %.2e, uniform-advisor max deviation %.2e over 1000 draws, %.3f s", err, worst, secs)};
}

// 2. Continuous intersection against the Gaussian product.
Verdict gaussian_product() {
  const auto t0 = Clock::now();
  const pirl::test::Gaussian1D actor{0.0, 1.0};
  const pirl::test::Gaussian1D advisor{1.0, 0.5};
  const double oracle_mean = (0.0 / 1.0 + 1.0 / 0.25) / (1.0 / 1.0 + 1.0 / 0.25);
  const double oracle_var = 1.0 / (1.0 / 1.0 + 1.0 / 0.25);
  const Eigen::VectorXd obs = Eigen::VectorXd::Zero(1);

  auto moments = [&](Eigen::Index k) {
    Rng rng(derive_seed(2, static_cast<std::uint64_t>(k)));
    double s = 0.0, s2 = 0.0;
    const int n = 100'000;
    for (int i = 0; i < n; ++i) {
      const double a = intersect_continuous(actor, advisor, obs, k, std::numeric_limits<double>::min(), rng).action(0);
      s += a;
      s2 += a * a;
    }
    const double m = s / n;
    return std::pair{m, s2 / n - m * m};
  };

  std::string detail;
  bool decreasing = true, close = false;
  double prev = std::numeric_limits<double>::infinity();
  for (Eigen::Index k : {8, 64, 1024}) {
    const auto [m, v] = moments(k);
    const double dist = std::abs(m - oracle_mean) + std::abs(v - oracle_var);
    decreasing = decreasing && dist < prev;
    prev = dist;
    detail += fmt("K=%ld mean %.4f var %.4f dist %.4f; ", static_cast<long>(k), m, v, dist);
    if (k == 1024) close = std::abs(m - oracle_mean) <= 0.02 && std::abs(v - oracle_var) <= 0.02;
  }
  const double secs = seconds_since(t0);
  return {close && decreasing && secs < 120.0,
          detail + fmt("oracle mean %.3f var %.3f, %.1f s", oracle_mean, oracle_var, secs)};
}

// 3. Gradient check. The central differences are evaluated by a plain
// scalar-loop network in extended precision; only the perturbed unit and the
// layers after it are recomputed.
struct ReferenceNet {
  std::vector<Eigen::Index> sizes;
  std::vector<std::vector<long double>> w;  // w[l][i * fan_in + k], row-major
  std::vector<std::vector<long double>> b;

  explicit ReferenceNet(const Mlp<double>& net) : sizes(net.sizes()) {
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      const auto W = net.weight(l);
      std::vector<long double> wl;
      for (Eigen::Index i = 0; i < W.rows(); ++i)
        for (Eigen::Index k = 0; k < W.cols(); ++k) wl.push_back(W(i, k));
      w.push_back(std::move(wl));
      std::vector<long double> bl;
      for (Eigen::Index i = 0; i < W.rows(); ++i) bl.push_back(net.bias(l)(i));
      b.push_back(std::move(bl));
    }
  }

  std::size_t layers() const { return w.size(); }

  // pre[l] is the pre-activation of layer l; act[l] its input.
  void forward(const std::vector<long double>& x, std::vector<std::vector<long double>>& act,
               std::vector<std::vector<long double>>& pre) const {
    act.assign(layers() + 1, {});
    pre.assign(layers(), {});
    act[0] = x;
    for (std::size_t l = 0; l < layers(); ++l) {
      const auto out = static_cast<std::size_t>(sizes[l + 1]), in = static_cast<std::size_t>(sizes[l]);
      pre[l].assign(out, 0.0L);
      for (std::size_t i = 0; i < out; ++i) {
        long double z = b[l][i];
        for (std::size_t k = 0; k < in; ++k) z += w[l][i * in + k] * act[l][k];
        pre[l][i] = z;
      }
      act[l + 1] = pre[l];
      if (l + 1 < layers())
        for (auto& a : act[l + 1]) a = a > 0.0L ? a : 0.0L;
    }
  }

  /// <output, og> after changing pre-activation `unit` of layer `l` by `dz`.
  long double perturbed(const std::vector<std::vector<long double>>& act, const std::vector<std::vector<long double>>& pre,
                        std::size_t l, std::size_t unit, long double dz, const std::vector<long double>& og,
                        bool& kink) const {
    std::vector<long double> z = pre[l];
    z[unit] += dz;
    for (std::size_t m = l;; ++m) {
      const bool last = m + 1 == layers();
      if (!last)
        for (std::size_t i = 0; i < z.size(); ++i)
          if ((z[i] > 0.0L) != (pre[m][i] > 0.0L)) kink = true;
      std::vector<long double> a = z;
      if (!last)
        for (auto& v : a) v = v > 0.0L ? v : 0.0L;
      if (last) {
        long double f = 0.0L;
        for (std::size_t i = 0; i < a.size(); ++i) f += a[i] * og[i];
        return f;
      }
      const auto out = static_cast<std::size_t>(sizes[m + 2]), in = static_cast<std::size_t>(sizes[m + 1]);
      std::vector<long double> next(out);
      if (m == l) {
        // Only one input of the next layer moved.
        const long double da = a[unit] - act[m + 1][unit];
        for (std::size_t i = 0; i < out; ++i) next[i] = pre[m + 1][i] + w[m + 1][i * in + unit] * da;
      } else {
        for (std::size_t i = 0; i < out; ++i) {
          long double s = b[m + 1][i];
          for (std::size_t k = 0; k < in; ++k) s += w[m + 1][i * in + k] * a[k];
          next[i] = s;
        }
      }
      z = std::move(next);
    }
  }
};

Verdict gradient_check() {
  const auto t0 = Clock::now();
  const std::vector<std::vector<Eigen::Index>> archs{{14, 64, 64, 1}, {14, 64, 64, 3}, {14, 64, 64, 6}, {17, 64, 64, 1}};
  const long double h = 1e-5L;
  double worst = 0.0;
  long checked = 0, skipped = 0;
  Rng rng(3);
  std::uint64_t net_seed = 0;
  for (const auto& sizes : archs) {
    for (int net_i = 0; net_i < 10; ++net_i) {
      const Mlp<double> net(sizes, derive_seed(3, ++net_seed));
      const ReferenceNet ref(net);
      for (int in_i = 0; in_i < 10; ++in_i) {
        const Eigen::MatrixXd x = pirl::test::normal_matrix(sizes.front(), 1, rng);
        const Eigen::MatrixXd og = pirl::test::normal_matrix(sizes.back(), 1, rng);
        auto g = backward(net, x, og);
        std::vector<long double> xl(x.data(), x.data() + x.size()), ogl(og.data(), og.data() + og.size());
        std::vector<std::vector<long double>> act, pre;
        ref.forward(xl, act, pre);

        bool kink = false;
        auto record = [&](double analytic, long double up, long double down) {
          // A step that flips a ReLU has no central-difference derivative.
          if (kink) {
            ++skipped;
            kink = false;
            return;
          }
          const double fd = static_cast<double>((up - down) / (2 * h));
          worst = std::max(worst, std::abs(analytic - fd) / (std::abs(analytic) + 1e-8));
          ++checked;
        };
        for (std::size_t l = 0; l < ref.layers(); ++l) {
          const auto in = static_cast<std::size_t>(sizes[l]), out = static_cast<std::size_t>(sizes[l + 1]);
          const auto Wg = net.weight_in(g.params, l);
          const auto bg = net.bias_in(g.params, l);
          for (std::size_t i = 0; i < out; ++i) {
            for (std::size_t k = 0; k < in; ++k)
              record(Wg(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)),
                     ref.perturbed(act, pre, l, i, h * act[l][k], ogl, kink),
                     ref.perturbed(act, pre, l, i, -h * act[l][k], ogl, kink));
            record(bg(static_cast<Eigen::Index>(i)), ref.perturbed(act, pre, l, i, h, ogl, kink),
                   ref.perturbed(act, pre, l, i, -h, ogl, kink));
          }
        }
        for (Eigen::Index k = 0; k < x.rows(); ++k) {
          auto shifted = [&](long double d) {
            std::vector<long double> xs = xl;
            xs[static_cast<std::size_t>(k)] += d;
            std::vector<std::vector<long double>> a2, p2;
            ref.forward(xs, a2, p2);
            for (std::size_t m = 0; m + 1 < p2.size(); ++m)
              for (std::size_t i = 0; i < p2[m].size(); ++i)
                if ((p2[m][i] > 0.0L) != (pre[m][i] > 0.0L)) kink = true;
            long double f = 0.0L;
            for (std::size_t i = 0; i < ogl.size(); ++i) f += a2.back()[i] * ogl[i];
            return f;
          };
          record(g.input(k, 0), shifted(h), shifted(-h));
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  // Kink crossings must stay rare or the check loses coverage.
  const bool coverage = skipped * 1000 < checked;
  return {worst < 1e-4 && coverage && secs < 60.0,
          fmt("max relative error %.3e over %ld partials (4 shapes x 10 nets x 10 inputs), %ld skipped at ReLU kinks, "
              "%.1f s",
              worst, checked, skipped, secs)};
}

// 4. Environment fuzzing.
Verdict env_fuzz() {
  const auto t0 = Clock::now();
  long violations = 0, steps = 0, backups = 0;
  Rng rng(4);
  std::vector<VariantSpec> variants;
  for (std::int64_t s = 1; s <= 17; ++s) variants.push_back(make_variant(s, 0.5));
  for (int e = 0; e < 10'000; ++e) {
    const VariantSpec& v = variants[static_cast<std::size_t>(e) % variants.size()];
    CompressorEnv env(v);
    env.reset(derive_seed(4, static_cast<std::uint64_t>(e)));
    bool pending = false;
    for (int t = 0; t < kEpisodeSteps; ++t) {
      const Action a{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      const StepResult r = env.step(a);
      ++steps;
      if (r.reward > 0.0) ++violations;
      if (r.info.pressure_bar < 0.0) ++violations;
      if (pending) {
        ++backups;
        if (r.info.executed_rpm != RpmTriple{600, 600, 600} || !r.info.backup) ++violations;
      } else if (r.info.executed_rpm != map_action(a, v) || r.info.backup) {
        ++violations;
      }
      pending = r.info.pressure_bar < kBackupPressureBar;
    }
  }
  const VariantSpec flat = make_variant(1, 0.0);
  const double max_power = power_watts(flat.compressors[0].power_table, kMaxRpm);
  const double penalty = -reward_breakdown({0, 0, 0}, {600, 0, 0}, flat).turn_on_penalty_kj;
  const double secs = seconds_since(t0);
  return {violations == 0 && max_power == 2000.0 && penalty == -120.0 && secs < 300.0,
          fmt("%ld steps, %ld backup steps, %ld violations; turn-on penalty at %.0f W = %.6f kJ; %.1f s", steps, backups,
              violations, max_power, penalty, secs)};
}

// 5. Determinism of the whole pipeline.
ExperimentConfig pipeline_config(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.output_dir = out.string();
  cfg.advisor_seeds = {1, 2, 3, 4};
  cfg.multi_advisors = 4;
  cfg.advisor_episodes = 6;
  cfg.episodes = 6;
  cfg.runs = 2;
  return cfg;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_text_file(e.path());
  return out;
}

Verdict determinism(const fs::path& base) {
  const auto t0 = Clock::now();
  auto pipeline = [](const fs::path& out) {
    fs::remove_all(out);
    ExperimentConfig cfg = pipeline_config(out);
    train_advisors(cfg, cfg.advisor_seeds);
    for (auto c : {Condition::scratch, Condition::load, Condition::pi_single, Condition::pi_multi}) {
      cfg.condition = c;
      run_condition(cfg);
    }
    const Summary s = aggregate(read_curves(out));
    write_json_file(out / "summary.json", summary_to_json(s));
    emit_plot_data(s, out / "plot");
  };
  pipeline(base / "determinism_a");
  pipeline(base / "determinism_b");
  const auto a = tree(base / "determinism_a");
  const auto b = tree(base / "determinism_b");
  std::size_t differing = 0;
  for (const auto& [k, v] : a)
    if (!b.count(k) || b.at(k) != v) ++differing;
  const bool same = a == b;
  return {same && a.size() > 30,
          fmt("%zu files per tree, %zu differ, %.1f s", a.size(), differing + (a.size() != b.size()), seconds_since(t0))};
}

// 6. SAC against the best constant controller on constant demand.
Verdict sac_sanity() {
  const auto t0 = Clock::now();
  const VariantSpec v = make_variant(17, 0.5);
  EnvOptions opts;
  opts.constant_demand_fraction = 0.4;
  CompressorEnv grid_env(v, opts);

  double best = -std::numeric_limits<double>::infinity();
  RpmTriple best_rpm{};
  std::set<RpmTriple> tried;
  for (int a = 0; a <= 600; a += 25)
    for (int b = 0; b <= 600; b += 25)
      for (int c = 0; c <= 600; c += 25) {
        const Action act{a / 300.0 - 1.0, b / 300.0 - 1.0, c / 300.0 - 1.0};
        const RpmTriple rpm = map_action(act, v);
        if (!tried.insert(rpm).second) continue;
        const double ret = evaluate_constant_action(act, grid_env, 1, 1);
        if (ret > best) {
          best = ret;
          best_rpm = rpm;
        }
      }
  const double target = 1.15 * -best;

  int reached = 0;
  std::string per_seed;
  const SacConfig sac;
  for (int seed = 1; seed <= 10; ++seed) {
    const RunSeeds seeds = RunSeeds::from(derive_seed(6, static_cast<std::uint64_t>(seed)));
    SacAgent<Real> agent(sac, seeds.agent);
    CompressorEnv env(v, opts), eval_env(v, opts);
    int hit = -1;
    double last = 0.0;
    train_agent(agent, env, 200, seeds, static_cast<const IntersectionConfig<SquashedGaussianActor<Real>>*>(nullptr),
                [&](int e, double) {
                  last = -evaluate_actor(agent.actor(), eval_env, 1, 1);
                  if (last <= target) hit = e + 1;
                  return hit < 0;
                });
    if (hit > 0) ++reached;
    per_seed += hit > 0 ? fmt(" %d:ep%d", seed, hit) : fmt(" %d:miss(%.0f)", seed, last);
  }
  const double secs = seconds_since(t0);
  return {reached >= 8 && secs < 3600.0,
          fmt("best constant (%g,%g,%g) costs %.1f kJ, target %.1f; %d/10 seeds within 200 episodes [%s ]; %.0f s",
              best_rpm[0], best_rpm[1], best_rpm[2], -best, target, reached, per_seed.c_str(), secs)};
}

// 7 and 8. Transfer conditions at desk scale.
ExperimentConfig transfer_config(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.output_dir = out.string();
  cfg.advisor_episodes = 150;
  cfg.episodes = 150;
  cfg.runs = 10;
  cfg.multi_advisors = 16;
  return cfg;
}

bool cache_valid(const fs::path& dir, const std::string& hash) {
  const fs::path m = dir / "manifest.json";
  if (!fs::exists(m)) return false;
  const auto j = read_json_file(m);
  if (j.value("config_hash", std::string()) != hash) return false;
  for (const auto& f : j.at("files"))
    if (!fs::exists(dir / f.at("path").get<std::string>()) ||
        file_checksum(dir / f.at("path").get<std::string>()) != f.at("fnv1a64").get<std::string>())
      return false;
  return true;
}

struct TransferData {
  std::map<std::string, std::vector<LearningCurve>> curves;
  double seconds = 0.0;
};

TransferData transfer_runs(const fs::path& base, bool reuse) {
  const auto t0 = Clock::now();
  const fs::path out = base / "transfer";
  ExperimentConfig cfg = transfer_config(out);
  if (!reuse) fs::remove_all(out);
  if (!(reuse && cache_valid(advisor_directory(cfg), config_hash(cfg)))) train_advisors(cfg, cfg.advisor_seeds);

  TransferData data;
  for (auto c : {Condition::load, Condition::pi_single, Condition::pi_multi}) {
    cfg.condition = c;
    const fs::path dir = out / condition_label(cfg);
    if (reuse && cache_valid(dir, config_hash(cfg)))
      data.curves[condition_label(cfg)] = read_curves(out).at(condition_label(cfg));
    else
      data.curves[condition_label(cfg)] = run_condition(cfg);
    std::printf("  [info] %s done after %.0f s\n", condition_label(cfg).c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  const Summary s = aggregate(data.curves);
  write_json_file(out / "summary.json", summary_to_json(s));
  emit_plot_data(s, out / "plot");
  data.seconds = seconds_since(t0);
  return data;
}

double window_mean(const std::vector<double>& xs, std::size_t first, std::size_t last) {
  double s = 0.0;
  for (std::size_t e = first; e <= last; ++e) s += xs[e - 1];
  return s / static_cast<double>(last - first + 1);
}

Verdict transfer_ordering(const TransferData& d) {
  const auto& load = d.curves.at("load");
  const auto& single = d.curves.at("pi_single");
  const auto& multi = d.curves.at("pi_multi_16");
  int ordered = 0;
  std::string detail;
  double sl = 0, ss = 0, sm = 0;
  for (std::size_t r = 0; r < load.size(); ++r) {
    const double l = window_mean(load[r].returns, 50, 150);
    const double s = window_mean(single[r].returns, 50, 150);
    const double m = window_mean(multi[r].returns, 50, 150);
    sl += l, ss += s, sm += m;
    const bool ok = m >= s && s >= l;
    ordered += ok;
    detail += fmt(" r%zu:%s", r, ok ? "ok" : (m < s ? "multi<single" : "single<load"));
  }
  const double n = static_cast<double>(load.size());
  return {ordered >= 7, fmt("mean return ep 50-150: load %.0f, pi_single %.0f, pi_multi_16 %.0f kJ; %d/10 runs ordered [%s ]; %.0f s",
                            sl / n, ss / n, sm / n, ordered, detail.c_str(), d.seconds)};
}

Verdict dip(const TransferData& d) {
  const auto& load = d.curves.at("load");
  double load_mean = 0.0;
  for (const auto& c : load) load_mean += window_mean(c.returns, 2, 20);
  load_mean /= static_cast<double>(load.size());
  std::string detail;
  bool pass = true;
  for (const char* name : {"pi_single", "pi_multi_16"}) {
    int dips = 0;
    double min_sum = 0.0;
    const auto& runs = d.curves.at(name);
    for (const auto& c : runs) {
      double lo = c.returns[1];
      for (std::size_t e = 2; e <= 20; ++e) lo = std::min(lo, c.returns[e - 1]);
      min_sum += lo;
      dips += lo < load_mean;
    }
    pass = pass && 2 * dips > static_cast<int>(runs.size());
    detail += fmt("%s %d/%zu runs dip (mean minimum %.0f); ", name, dips, runs.size(), min_sum / static_cast<double>(runs.size()));
  }
  return {pass, detail + fmt("load mean over ep 2-20 %.0f kJ", load_mean)};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out = fs::path("acceptance_out");
  bool reuse = false;
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--out") == 0 && i + 1 < argc) {
      out = argv[++i];
    } else if (std::strcmp(argv[i], "--reuse") == 0) {
      reuse = true;
    } else {
      const int c = std::atoi(argv[i]);
      if (c < 1 || c > 8) {
        std::fprintf(stderr, "usage: %s [--out DIR] [--reuse] [1-8 ...]\n", argv[0]);
        return 2;
      }
      wanted.insert(c);
    }
  }
  if (wanted.empty()) wanted = {1, 2, 3, 4, 5, 6, 7, 8};
  fs::create_directories(out);

  const std::map<int, std::string> names{{1, "discrete intersection oracle"},
                                         {2, "continuous intersection vs Gaussian product"},
                                         {3, "gradient correctness"},
                                         {4, "environment invariant fuzzing"},
                                         {5, "pipeline determinism"},
                                         {6, "SAC sanity vs best constant controller"},
                                         {7, "transfer ordering pi_multi >= pi_single >= load"},
                                         {8, "early dip under policy intersection"}};
  int failures = 0;
  auto report = [&](int c, const Verdict& v) {
    std::printf("[%s] criterion %d: %s | %s\n", v.pass ? "PASS" : "FAIL", c, names.at(c).c_str(), v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
  };
  auto guarded = [&](int c, const std::function<Verdict()>& f) {
    try {
      report(c, f());
    } catch (const std::exception& e) {
      report(c, {false, std::string("exception: ") + e.what()});
    }
  };

  if (wanted.count(1)) guarded(1, discrete_oracle);
  if (wanted.count(2)) guarded(2, gaussian_product);
  if (wanted.count(3)) guarded(3, gradient_check);
  if (wanted.count(4)) guarded(4, env_fuzz);
  if (wanted.count(5)) guarded(5, [&] { return determinism(out); });
  if (wanted.count(6)) guarded(6, sac_sanity);
  if (wanted.count(7) || wanted.count(8)) {
    std::optional<TransferData> data;
    try {
      data = transfer_runs(out, reuse);
    } catch (const std::exception& e) {
      for (int c : {7, 8})
        if (wanted.count(c)) report(c, {false, std::string("exception: ") + e.what()});
    }
    if (data) {
      if (wanted.count(7)) guarded(7, [&] { return transfer_ordering(*data); });
      if (wanted.count(8)) guarded(8, [&] { return dip(*data); });
    }
  }
  return failures == 0 ? 0 : 1;
}
