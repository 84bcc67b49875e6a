#include "doctest.h"
#include "pirl/sac.hpp"
#include "pirl/training.hpp"
#include "test_support.hpp"

using namespace pirl;

namespace {

/// Actor whose heads ignore the observation: mean and log std come from the
/// output biases alone.
SquashedGaussianActor<double> constant_actor(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                                             Eigen::Index obs_dim = kObservationDim) {
  const Eigen::Index d = mean.size();
  Mlp<double> net({obs_dim, 2 * d});
  net.bias(0).head(d) = mean;
  net.bias(0).tail(d) = log_std;
  return SquashedGaussianActor<double>(std::move(net));
}

Observation random_obs(Rng& rng) {
  Observation o{};
  for (double& x : o) x = rng.uniform(-1, 1);
  return o;
}

ReplayBuffer<double> random_buffer(Eigen::Index n, Rng& rng, double reward = -1.0, bool random_reward = true) {
  ReplayBuffer<double> buf(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = random_reward ? rng.uniform(-3, 0) : reward;
    buf.push({random_obs(rng), {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}, r, random_obs(rng), false});
  }
  return buf;
}

/// Deterministic "sample everything once" batch.
Batch<double> whole(const ReplayBuffer<double>& buf) {
  Rng rng(0);
  return buf.sample(buf.size(), rng);
}

SacConfig small_config(Eigen::Index batch) {
  SacConfig cfg;
  cfg.batch_size = batch;
  cfg.hidden = {32, 32};
  return cfg;
}

}  // namespace

TEST_SUITE("sac_agent") {
  TEST_CASE("tiny sigma: stochastic and deterministic samples agree") {
    const auto actor = constant_actor(Eigen::Vector3d(0.3, -0.2, 0.9), Eigen::Vector3d::Constant(-30.0));
    Rng rng(1);
    const Eigen::VectorXd obs = Eigen::VectorXd::Zero(kObservationDim);
    const auto det = actor.sample(obs, rng, SampleMode::deterministic);
    for (int k = 0; k < 100; ++k) CHECK((actor.sample(obs, rng).action - det.action).cwiseAbs().maxCoeff() < 1e-7);
    CHECK(actor.heads(obs).log_std(0) == -20.0);
    CHECK(det.action(0) == doctest::Approx(std::tanh(0.3)));
  }

  TEST_CASE("pre-squash sample mean matches the Gaussian mean") {
    const Eigen::Vector3d mean(0.4, -1.0, 0.0), log_std(-0.5, 0.3, 0.0);
    const auto actor = constant_actor(mean, log_std);
    Rng rng(2);
    const Eigen::VectorXd obs = Eigen::VectorXd::Zero(kObservationDim);
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    const int n = 100'000;
    for (int k = 0; k < n; ++k) {
      const auto s = actor.sample(obs, rng);
      CHECK_FALSE(((s.action.array().abs() >= 1.0).any()));
      sum += s.pre_squash;
    }
    for (int d = 0; d < 3; ++d) CHECK(std::abs(sum(d) / n - mean(d)) < 4.0 * std::exp(log_std(d)) / std::sqrt(n));
  }

  TEST_CASE("squashed density integrates to one") {
    for (const auto& [mu, ls] : {std::pair{0.0, -0.5}, std::pair{0.5, -1.0}, std::pair{-0.3, 0.0}}) {
      const auto actor = constant_actor(Eigen::VectorXd::Constant(1, mu), Eigen::VectorXd::Constant(1, ls), 1);
      const int n = 200'000;
      Eigen::MatrixXd grid(1, n + 1);
      for (int i = 0; i <= n; ++i) grid(0, i) = -1.0 + 2.0 * i / n;
      const Eigen::VectorXd lp = actor.log_prob_batch(Eigen::VectorXd::Zero(1), grid);
      double integral = 0.0;
      for (int i = 0; i < n; ++i) integral += 0.5 * (std::exp(lp(i)) + std::exp(lp(i + 1))) * (2.0 / n);
      CHECK(std::abs(integral - 1.0) < 1e-3);
    }
  }

  TEST_CASE("log_prob agrees with the sampled log density") {
    SquashedGaussianActor<double> actor(kObservationDim, kActionDim, {16}, 3);
    Rng rng(3);
    for (int k = 0; k < 20; ++k) {
      const Eigen::VectorXd obs = to_vector(random_obs(rng));
      const auto s = actor.sample(obs, rng);
      CHECK(std::isfinite(s.log_prob));
      CHECK(actor.log_prob(obs, s.action) == doctest::Approx(s.log_prob).epsilon(1e-6));
    }
  }

  TEST_CASE("replay buffer capacity and sampling contract") {
    ReplayBuffer<double> buf(10);
    Rng rng(4);
    CHECK_THROWS_AS(buf.sample(1, rng), std::logic_error);
    for (int i = 0; i < 25; ++i) buf.push({random_obs(rng), {0, 0, 0}, static_cast<double>(i), random_obs(rng), i == 3});
    CHECK(buf.size() == 10);
    const auto b = buf.sample(8, rng);
    CHECK(b.size() == 8);
    CHECK(b.reward.minCoeff() >= 15.0);
    CHECK(b.not_done.minCoeff() == 1.0);
    CHECK_THROWS_AS(buf.sample(11, rng), std::logic_error);
  }

  TEST_CASE("critic loss falls on a frozen batch") {
    Rng rng(5);
    const auto buf = random_buffer(64, rng);
    const Batch<double> batch = whole(buf);
    SacAgent<double> agent(small_config(64), 7);
    // Same noise stream every update, so only the networks change between steps.
    const Rng frozen(6);
    std::vector<double> losses;
    for (int k = 0; k < 51; ++k) {
      Rng learn = frozen;
      losses.push_back(agent.update(batch, learn).critic_loss);
    }
    int violations = 0;
    for (std::size_t k = 1; k < losses.size(); ++k) violations += losses[k] >= losses[k - 1];
    CHECK(violations <= 5);
    CHECK(losses.back() < losses.front());
  }

  TEST_CASE("gamma zero: critics converge to the immediate reward") {
    Rng rng(8);
    const auto buf = random_buffer(64, rng, -1.0, false);
    const Batch<double> batch = whole(buf);
    SacConfig cfg = small_config(64);
    cfg.gamma = 0.0;
    SacAgent<double> agent(cfg, 9);
    Rng learn(10);
    for (int k = 0; k < 2000; ++k) agent.update(batch, learn);
    const Eigen::MatrixXd x = SacAgent<double>::stack(batch.obs, batch.action);
    CHECK(std::abs(forward(agent.q1(), x).mean() + 1.0) < 0.05);
    CHECK(std::abs(forward(agent.q2(), x).mean() + 1.0) < 0.05);
    CHECK(agent.critic_targets(batch, learn).isApprox(batch.reward));
  }

  TEST_CASE("tau one copies the critics into the targets") {
    Rng rng(11);
    const auto buf = random_buffer(32, rng);
    SacConfig cfg = small_config(32);
    cfg.tau = 1.0;
    SacAgent<double> agent(cfg, 12);
    Rng learn(13);
    agent.update(whole(buf), learn);
    CHECK(agent.target1() == agent.q1());
    CHECK(agent.target2() == agent.q2());
  }

  TEST_CASE("actor objective gradient matches finite differences") {
    Rng rng(14);
    const auto buf = random_buffer(16, rng);
    const Batch<double> batch = whole(buf);
    SacAgent<double> agent(small_config(16), 15);
    agent.set_log_alpha(std::log(0.3));
    const Eigen::MatrixXd noise = agent.standard_normal(kActionDim, 16, rng);
    const auto obj = agent.actor_objective(batch.obs, noise);
    Eigen::VectorXd& p = agent.actor().network().params();
    const double h = 1e-6;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < p.size(); i += 7) {
      const double keep = p(i);
      p(i) = keep + h;
      const double up = agent.actor_objective(batch.obs, noise).loss;
      p(i) = keep - h;
      const double down = agent.actor_objective(batch.obs, noise).loss;
      p(i) = keep;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(obj.grad(i) - fd) / (std::abs(obj.grad(i)) + 1e-6));
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("actor loss decomposes into entropy and value terms") {
    Rng rng(16);
    const auto buf = random_buffer(32, rng);
    const Batch<double> batch = whole(buf);
    SacAgent<double> agent(small_config(32), 17);
    const Eigen::MatrixXd noise = agent.standard_normal(kActionDim, 32, rng);
    agent.set_log_alpha(std::log(0.1));
    const auto lo = agent.actor_objective(batch.obs, noise);
    agent.set_log_alpha(std::log(0.5));
    const auto hi = agent.actor_objective(batch.obs, noise);
    CHECK(lo.q_term == hi.q_term);
    CHECK(lo.loss == doctest::Approx(0.1 * lo.log_prob.mean() - lo.q_term));
    CHECK(hi.loss - lo.loss == doctest::Approx(0.4 * lo.log_prob.mean()));
  }

  TEST_CASE("temperature moves toward the entropy target") {
    Rng rng(18);
    const auto buf = random_buffer(32, rng);
    SacAgent<double> agent(small_config(32), 19);
    const double before = agent.log_alpha();
    const auto diag = agent.update(whole(buf), rng);
    // Entropy above target (log pi below 3) should lower alpha.
    if (diag.actor_log_prob + agent.config().target_entropy < 0.0)
      CHECK(agent.log_alpha() < before);
    else
      CHECK(agent.log_alpha() > before);
  }

  TEST_CASE("update contracts: batch size and finiteness") {
    Rng rng(20);
    const auto buf = random_buffer(32, rng);
    SacAgent<double> agent(small_config(64), 21);
    CHECK_THROWS_AS(agent.update(whole(buf), rng), std::invalid_argument);

    SacAgent<double> ok(small_config(32), 21);
    for (int k = 0; k < 20; ++k) {
      ok.update(whole(buf), rng);
      CHECK(ok.all_finite());
    }
    ok.q1().params()(0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(ok.update(whole(buf), rng), std::runtime_error);
  }

  TEST_CASE("agents are reproducible from their seed") {
    Rng a(22), b(22);
    const auto buf = random_buffer(32, a);
    random_buffer(32, b);
    SacAgent<double> x(small_config(32), 23), y(small_config(32), 23);
    for (int k = 0; k < 5; ++k) {
      x.update(whole(buf), a);
      y.update(whole(buf), b);
    }
    CHECK(x.actor().network() == y.actor().network());
    CHECK(x.q1() == y.q1());
  }

  TEST_CASE("stored action keeps the agent's choice unless overridden") {
    const auto v = make_variant(2, 0.5);
    StepInfo info;
    info.executed_rpm = map_action({0.1, -0.5, -0.99}, v);
    CHECK(stored_action({0.1, -0.5, -0.99}, info, v) == Action{0.1, -0.5, -0.99});
    info.executed_rpm = {600, 600, 600};
    info.backup = true;
    CHECK(stored_action({0.1, -0.5, -0.99}, info, v) == Action{1.0, 1.0, 1.0});
  }
}
