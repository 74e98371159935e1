#include <doctest.h>

#include <cmath>
#include <set>

#include "cepminer/constructor.hpp"
#include "cepminer/stream.hpp"
#include "support/oracles.hpp"

using namespace cepminer;

namespace {

EventSchema bandit_schema() { return {{"A", "B"}, {"x"}, {CmpOp::Eq}}; }

// Two event types; only patterns that start with A pay off.
double bandit_probability(std::uint64_t seed, std::size_t episodes) {
  Agent agent(bandit_schema(), 1, 1, AgentConfig{}, seed);
  nn::Rng rng(seed);
  const Eigen::VectorXd emb = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(window_embedding_size(agent.schema())));
  const RewardFn reward = [](const Pattern& p) { return p.events.front().event_type == "A" ? 1.0 : 0.0; };
  for (std::size_t e = 0; e < episodes; ++e) {
    Episode ep = run_episode(agent, emb, reward, rng);
    if (!ep.steps.empty()) update_agent(agent, ep);
  }
  const std::vector<bool> mask(agent.event_action_count(), true);
  return agent.event_probs(agent.hidden(agent.state(emb, Pattern{})), mask)[0];
}

}  // namespace

TEST_CASE("ucb bonus and reweighting") {
  CHECK(ucb_score(0.5, 2.0, std::exp(1.0), 4.0) == doctest::Approx(1.5));
  const Eigen::Vector3d p(0.6, 0.3, 0.1);
  const std::vector<std::uint64_t> counts{10, 5, 1};
  // c = 0 turns the exploration term off entirely
  CHECK(ucb_reweight(p, counts, 16, 0.0).isApprox(p));
  const Eigen::VectorXd q = ucb_reweight(p, counts, 16, 1.0);
  CHECK(q.sum() == doctest::Approx(1.0));
  // least-tried action gets the full half bonus, most-tried none
  const double mid = (1.0 / std::sqrt(5.0) - 1.0 / std::sqrt(10.0)) / (1.0 - 1.0 / std::sqrt(10.0));
  const double z = 1.0 + 0.5 * (mid + 1.0);
  CHECK(q[2] == doctest::Approx((0.1 + 0.5) / z));
  CHECK(q[1] == doctest::Approx((0.3 + 0.5 * mid) / z));
  CHECK(q[0] == doctest::Approx(0.6 / z));
  // normalization cancels the magnitude of c
  CHECK(ucb_reweight(p, counts, 16, 7.0).isApprox(q));
  // untried actions dominate the bonus
  const std::vector<std::uint64_t> fresh{3, 0, 3};
  const Eigen::VectorXd r = ucb_reweight(p, fresh, 7, 1.0);
  CHECK(r[1] == doctest::Approx(0.8 / 1.5));
  CHECK(r[0] == doctest::Approx(0.6 / 1.5));
  // masked entries stay at zero
  const std::vector<bool> mask{true, false, true};
  const Eigen::VectorXd m = ucb_reweight(Eigen::Vector3d(0.5, 0.0, 0.5), counts, 16, 1.0, &mask);
  CHECK(m[1] == 0.0);
  CHECK(m.sum() == doctest::Approx(1.0));
  CHECK_THROWS(ucb_reweight(p, std::vector<std::uint64_t>{1, 2}, 3, 1.0));
}

TEST_CASE("dynamic learning rate follows policy entropy") {
  CHECK(dynamic_lr(Eigen::Vector4d::Constant(0.25), 1e-3) == doctest::Approx(1e-3));
  CHECK(dynamic_lr(Eigen::Vector4d(1, 0, 0, 0), 1e-3) == doctest::Approx(1e-4));
  const double mid = dynamic_lr(Eigen::Vector4d(0.7, 0.1, 0.1, 0.1), 1e-3);
  CHECK(mid > 1e-4);
  CHECK(mid < 1e-3);
}

TEST_CASE("combined log averages the condition terms") {
  CHECK(combined_log(-1.0, std::vector<double>{}) == -1.0);
  CHECK(combined_log(-1.0, std::vector<double>{-2.0, -4.0}) == doctest::Approx(-4.0));
}

TEST_CASE("returns bootstrap only when the episode was cut at max length") {
  Episode ep;
  ep.steps.resize(3);
  ep.steps[0].reward = 1;
  ep.steps[1].reward = 2;
  ep.steps[2].reward = 3;
  for (auto& s : ep.steps) s.value = 0.5;
  ep.terminal_reason = TerminalReason::ZeroReward;
  ep.bootstrap_value = 100.0;
  auto t = compute_targets(ep, 0.5);
  CHECK(t.returns[2] == doctest::Approx(3.0));
  CHECK(t.returns[1] == doctest::Approx(3.5));
  CHECK(t.returns[0] == doctest::Approx(2.75));
  CHECK(t.advantages[0] == doctest::Approx(2.25));
  ep.terminal_reason = TerminalReason::MaxLen;
  t = compute_targets(ep, 0.5);
  CHECK(t.returns[2] == doctest::Approx(53.0));
}

TEST_CASE("episodes build valid formulas and respect the limits") {
  const EventSchema s = oracle::small_schema();
  AgentConfig cfg;
  cfg.trunk_hidden = 32;
  cfg.head_hidden = 16;
  Agent agent(s, 3, 2, cfg, 1);
  nn::Rng rng(1);
  const Eigen::VectorXd emb = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(window_embedding_size(s)), 0.1);
  std::set<TerminalReason> reasons;
  for (int i = 0; i < 200; ++i) {
    int calls = 0;
    const RewardFn reward = [&](const Pattern& p) {
      ++calls;
      CHECK_NOTHROW(validate_pattern(p, s, {3, 2}));
      return i % 3 == 0 ? 0.0 : 1.0;
    };
    const Episode ep = run_episode(agent, emb, reward, rng);
    reasons.insert(ep.terminal_reason);
    CHECK(static_cast<std::size_t>(calls) == ep.steps.size());
    CHECK(ep.pattern.size() == ep.steps.size());
    CHECK(ep.steps.size() <= 3);
    if (ep.terminal_reason == TerminalReason::ZeroReward) CHECK(ep.steps.back().reward == 0.0);
    if (ep.terminal_reason == TerminalReason::MaxLen) CHECK(ep.steps.size() == 3);
    // constants always enter as numbered holes
    const auto holes = ep.pattern.hole_ids();
    for (std::size_t k = 0; k < holes.size(); ++k) CHECK(holes[k] == static_cast<int>(k + 1));
    for (std::size_t t = 0; t < ep.steps.size(); ++t) {
      const auto& st = ep.steps[t];
      CHECK(st.event_logp <= 0.0);
      CHECK(st.conditions.size() <= 2);
      for (const auto& c : ep.pattern.events[t].conditions) {
        if (const auto* r = std::get_if<EventRef>(&c.target)) CHECK(r->index < t);
      }
      std::vector<double> logs;
      for (const auto& c : st.conditions) logs.push_back(c.logp);
      CHECK(st.cl == doctest::Approx(combined_log(st.event_logp, logs)));
    }
  }
  CHECK(reasons.size() == 3);
  std::uint64_t total = 0;
  for (auto c : agent.event_counts) total += c;
  CHECK(total == agent.event_selections);
}

TEST_CASE("condition masks forbid forward references and repeats") {
  const EventSchema s = oracle::small_schema();
  Agent agent(s, 3, 2, AgentConfig{}, 0);
  const auto& acts = agent.actions().condition_actions;
  const auto m0 = agent.condition_mask(0, {});
  const auto m1 = agent.condition_mask(1, std::vector<std::size_t>{0});
  CHECK(m0[agent.actions().condition_nop()]);
  for (std::size_t i = 0; i + 1 < acts.size(); ++i) {
    CHECK(m0[i] == !acts[i].event_slot.has_value());
    if (acts[i].event_slot) CHECK(m1[i] == (*acts[i].event_slot < 1));
  }
  CHECK_FALSE(m1[0]);
}

TEST_CASE("agent checkpoints round-trip") {
  const EventSchema s = oracle::small_schema();
  AgentConfig cfg;
  cfg.trunk_hidden = 8;
  Agent a(s, 2, 1, cfg, 3);
  const Agent b = Agent::from_checkpoint(nlohmann::json::parse(a.checkpoint().dump()), s, 2, 1, cfg);
  CHECK(b.trunk == a.trunk);
  CHECK(b.event_head == a.event_head);
  CHECK(b.critic_head == a.critic_head);
  CHECK(b.condition_heads[0] == a.condition_heads[0]);
  CHECK_THROWS(Agent::from_checkpoint(a.checkpoint(), s, 3, 1, cfg));
}

TEST_CASE("policy learns the paying event in a two-event bandit") {
  for (std::uint64_t seed : {0u, 10u, 50u}) {
    CAPTURE(seed);
    CHECK(bandit_probability(seed, 500) > 0.9);
  }
}
