#include "cepminer/constructor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cepminer/nn_io.hpp"
#include "cepminer/stream.hpp"

namespace cepminer {

double ucb_score(double q, double c, double t, double n) { return q + c * std::sqrt(std::log(t) / n); }

Eigen::VectorXd ucb_reweight(const Eigen::VectorXd& probs, std::span<const std::uint64_t> counts, std::uint64_t t,
                             double c, const std::vector<bool>* mask) {
  const auto n = probs.size();
  if (static_cast<std::size_t>(n) != counts.size()) throw std::invalid_argument("ucb_reweight: size mismatch");
  if (c == 0.0) return probs;
  auto valid = [&](Eigen::Index i) { return !mask || (*mask)[static_cast<std::size_t>(i)]; };
  const double log_t = std::log(static_cast<double>(std::max<std::uint64_t>(t, 1)));

  constexpr double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd bonus = Eigen::VectorXd::Zero(n);
  double lo = inf, hi = -inf;
  bool any_infinite = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!valid(i)) continue;
    const auto count = counts[static_cast<std::size_t>(i)];
    bonus[i] = count == 0 ? inf : c * std::sqrt(log_t / static_cast<double>(count));
    if (std::isinf(bonus[i])) {
      any_infinite = true;
    } else {
      lo = std::min(lo, bonus[i]);
      hi = std::max(hi, bonus[i]);
    }
  }
  Eigen::VectorXd out = probs;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!valid(i)) {
      out[i] = 0.0;
      continue;
    }
    double normalized = 0.0;
    if (std::isinf(bonus[i])) {
      normalized = 1.0;
    } else if (!any_infinite && hi > lo) {
      normalized = (bonus[i] - lo) / (hi - lo);
    }
    out[i] += 0.5 * normalized;
  }
  return out / out.sum();
}

double dynamic_lr(const Eigen::VectorXd& probs, double base_lr) {
  const auto n = probs.size();
  if (n <= 1) return 0.1 * base_lr;
  double h = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (probs[i] > 0.0) h -= probs[i] * std::log(probs[i]);
  }
  return base_lr * std::max(0.1, std::min(1.0, h / std::log(static_cast<double>(n))));
}

double combined_log(double event_logp, std::span<const double> condition_logps) {
  if (condition_logps.empty()) return event_logp;
  double sum = 0.0;
  for (double l : condition_logps) sum += l;
  return event_logp + sum / static_cast<double>(condition_logps.size());
}

const char* terminal_name(TerminalReason r) {
  switch (r) {
    case TerminalReason::NopEvent: return "nop_event";
    case TerminalReason::ZeroReward: return "zero_reward";
    case TerminalReason::MaxLen: return "max_len";
  }
  return "?";
}

namespace {

std::size_t sample(const Eigen::VectorXd& p, nn::Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last_positive = static_cast<std::size_t>(i);
    if (x < acc) return last_positive;
  }
  return last_positive;
}

}  // namespace

Agent::Agent(EventSchema schema, std::size_t max_len, std::size_t max_conds, AgentConfig config, std::uint64_t seed)
    : schema_(std::move(schema)),
      max_len_(max_len),
      max_conds_(max_conds),
      config_(config),
      actions_(enumerate_actions(schema_, max_len)) {
  schema_.validate();
  if (max_len_ < 1 || max_conds_ < 1) throw std::invalid_argument("agent needs max_len >= 1 and max_conds >= 1");
  if (!(config_.gamma > 0.0 && config_.gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
  nn::Rng rng(seed);
  using nn::Activation;
  std::vector<std::size_t> trunk_dims{state_dim()};
  for (std::size_t i = 0; i < config_.trunk_layers; ++i) trunk_dims.push_back(config_.trunk_hidden);
  trunk = nn::DenseNet<double>::make(trunk_dims, Activation::Relu, Activation::Relu, 0.0, rng);
  const std::size_t h = trunk_dims.back();
  const std::size_t ne = event_action_count();
  const std::size_t nc = condition_action_count();
  event_head = nn::DenseNet<double>::make({h, config_.head_hidden, ne}, Activation::Relu, Activation::Linear, 0.0, rng);
  for (std::size_t j = 0; j < max_conds_; ++j) {
    condition_heads.push_back(nn::DenseNet<double>::make({h + ne + j * nc, config_.head_hidden, nc}, Activation::Relu,
                                                         Activation::Linear, 0.0, rng));
  }
  critic_head = nn::DenseNet<double>::make({h, config_.head_hidden, 1}, Activation::Relu, Activation::Linear, 0.0, rng);
  event_counts.assign(ne, 0);
  condition_counts.assign(nc, 0);
  optimizers_.assign(3 + max_conds_, nn::Optimizer<double>(config_.optimizer, config_.base_lr));
}

std::size_t Agent::state_dim() const { return cepminer::state_size(schema_, max_len_, max_conds_); }

Eigen::VectorXd Agent::state(const Eigen::VectorXd& window_embedding, const Pattern& partial) const {
  const Eigen::VectorXd enc = encode_partial_pattern(partial, schema_, max_len_, max_conds_);
  if (static_cast<std::size_t>(window_embedding.size() + enc.size()) != state_dim()) {
    throw std::invalid_argument("window embedding has the wrong size");
  }
  Eigen::VectorXd s(state_dim());
  s << window_embedding, enc;
  return s;
}

Eigen::VectorXd Agent::hidden(const Eigen::VectorXd& s) const { return trunk.forward(s); }

Eigen::VectorXd Agent::event_probs(const Eigen::VectorXd& h, const std::vector<bool>& mask) const {
  return nn::masked_softmax<double>(event_head.forward(h), mask);
}

Eigen::VectorXd Agent::condition_input(const Eigen::VectorXd& h, std::size_t event_action,
                                       std::span<const std::size_t> prior) const {
  const std::size_t ne = event_action_count();
  const std::size_t nc = condition_action_count();
  Eigen::VectorXd in = Eigen::VectorXd::Zero(h.size() + static_cast<Eigen::Index>(ne + prior.size() * nc));
  in.head(h.size()) = h;
  in[h.size() + static_cast<Eigen::Index>(event_action)] = 1.0;
  for (std::size_t j = 0; j < prior.size(); ++j) {
    in[h.size() + static_cast<Eigen::Index>(ne + j * nc + prior[j])] = 1.0;
  }
  return in;
}

Eigen::VectorXd Agent::condition_probs(std::size_t branch, const Eigen::VectorXd& input,
                                       const std::vector<bool>& mask) const {
  return nn::masked_softmax<double>(condition_heads.at(branch).forward(input), mask);
}

double Agent::value(const Eigen::VectorXd& h) const { return critic_head.forward(h)[0]; }

std::pair<std::size_t, double> Agent::select_event(const Eigen::VectorXd& h, const std::vector<bool>& mask,
                                                   nn::Rng& rng) {
  const Eigen::VectorXd logits = event_head.forward(h);
  const Eigen::VectorXd p = nn::masked_softmax<double>(logits, mask);
  const Eigen::VectorXd q = ucb_reweight(p, event_counts, event_selections + 1, config_.ucb_c, &mask);
  const std::size_t a = sample(q, rng);
  ++event_counts[a];
  ++event_selections;
  return {a, nn::masked_log_softmax<double>(logits, mask, static_cast<Eigen::Index>(a))};
}

std::pair<std::size_t, double> Agent::select_condition(std::size_t branch, const Eigen::VectorXd& input,
                                                       const std::vector<bool>& mask, nn::Rng& rng) {
  const Eigen::VectorXd logits = condition_heads.at(branch).forward(input);
  const Eigen::VectorXd p = nn::masked_softmax<double>(logits, mask);
  const Eigen::VectorXd q = ucb_reweight(p, condition_counts, condition_selections + 1, config_.ucb_c, &mask);
  const std::size_t a = sample(q, rng);
  ++condition_counts[a];
  ++condition_selections;
  return {a, nn::masked_log_softmax<double>(logits, mask, static_cast<Eigen::Index>(a))};
}

std::vector<bool> Agent::condition_mask(std::size_t position, std::span<const std::size_t> chosen) const {
  const auto& acts = actions_.condition_actions;
  std::vector<bool> mask(acts.size(), true);
  for (std::size_t i = 0; i + 1 < acts.size(); ++i) {
    if (acts[i].event_slot && *acts[i].event_slot >= position) mask[i] = false;
  }
  for (std::size_t c : chosen) {
    if (c + 1 < acts.size()) mask[c] = false;
  }
  return mask;
}

Condition Agent::to_condition(std::size_t action, int hole_id) const {
  const auto& a = actions_.condition_actions.at(action);
  if (a.nop) throw std::invalid_argument("nop is not a condition");
  Condition c{schema_.attributes[a.attribute], schema_.operators[a.op], Hole{hole_id}};
  if (a.event_slot) c.target = EventRef{*a.event_slot};
  return c;
}

nlohmann::json Agent::checkpoint() const {
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& c : condition_heads) heads.push_back(nn::to_json(c));
  return {{"format", "cepminer-agent"},
          {"version", 1},
          {"trunk", nn::to_json(trunk)},
          {"event_head", nn::to_json(event_head)},
          {"condition_heads", heads},
          {"critic_head", nn::to_json(critic_head)},
          {"event_counts", event_counts},
          {"condition_counts", condition_counts},
          {"event_selections", event_selections},
          {"condition_selections", condition_selections}};
}

Agent Agent::from_checkpoint(const nlohmann::json& doc, EventSchema schema, std::size_t max_len,
                             std::size_t max_conds, AgentConfig config) {
  Agent agent(std::move(schema), max_len, max_conds, config, 0);
  try {
    if (doc.at("format") != "cepminer-agent" || doc.at("version") != 1) throw std::runtime_error("not an agent checkpoint");
    agent.trunk = nn::net_from_json(doc.at("trunk"), nn::layer_dims(agent.trunk));
    agent.event_head = nn::net_from_json(doc.at("event_head"), nn::layer_dims(agent.event_head));
    agent.critic_head = nn::net_from_json(doc.at("critic_head"), nn::layer_dims(agent.critic_head));
    const auto& heads = doc.at("condition_heads");
    if (heads.size() != agent.condition_heads.size()) throw std::runtime_error("condition head count mismatch");
    for (std::size_t j = 0; j < heads.size(); ++j) {
      agent.condition_heads[j] = nn::net_from_json(heads[j], nn::layer_dims(agent.condition_heads[j]));
    }
    agent.event_counts = doc.at("event_counts").get<std::vector<std::uint64_t>>();
    agent.condition_counts = doc.at("condition_counts").get<std::vector<std::uint64_t>>();
    agent.event_selections = doc.at("event_selections").get<std::uint64_t>();
    agent.condition_selections = doc.at("condition_selections").get<std::uint64_t>();
    if (agent.event_counts.size() != agent.event_action_count() ||
        agent.condition_counts.size() != agent.condition_action_count()) {
      throw std::runtime_error("action count table size mismatch");
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed agent checkpoint: ") + e.what());
  }
  return agent;
}

// --- episodes ---------------------------------------------------------------

Episode run_episode(Agent& agent, const Eigen::VectorXd& window_embedding, const RewardFn& reward, nn::Rng& rng) {
  Episode ep;
  const std::size_t nop_event = agent.actions().event_nop();
  const std::size_t nop_cond = agent.actions().condition_nop();
  const std::vector<bool> event_mask(agent.event_action_count(), true);
  int next_hole = 1;
  ep.terminal_reason = TerminalReason::MaxLen;

  for (std::size_t t = 0; t < agent.max_len(); ++t) {
    EventStep step;
    step.state = agent.state(window_embedding, ep.pattern);
    const Eigen::VectorXd h = agent.hidden(step.state);
    step.event_mask = event_mask;
    std::tie(step.event_action, step.event_logp) = agent.select_event(h, event_mask, rng);
    if (step.event_action == nop_event) {
      ep.terminal_reason = TerminalReason::NopEvent;
      break;
    }
    const std::size_t type = *agent.actions().event_actions[step.event_action].type;
    ep.pattern.events.push_back({agent.schema().event_types[type], default_alias(t), {}});

    std::vector<std::size_t> chosen;
    for (std::size_t j = 0; j < agent.max_conds(); ++j) {
      ConditionChoice choice;
      choice.mask = agent.condition_mask(t, chosen);
      const Eigen::VectorXd in = agent.condition_input(h, step.event_action, chosen);
      std::tie(choice.action, choice.logp) = agent.select_condition(j, in, choice.mask, rng);
      const std::size_t action = choice.action;
      step.conditions.push_back(std::move(choice));
      if (action == nop_cond) break;
      chosen.push_back(action);
      ep.pattern.events.back().conditions.push_back(agent.to_condition(action, next_hole));
      if (std::holds_alternative<Hole>(ep.pattern.events.back().conditions.back().target)) ++next_hole;
    }

    std::vector<double> cond_logps;
    for (const auto& c : step.conditions) cond_logps.push_back(c.logp);
    step.cl = combined_log(step.event_logp, cond_logps);
    step.value = agent.value(h);
    step.reward = reward(ep.pattern);
    ep.total_return += step.reward;
    ep.steps.push_back(std::move(step));
    if (ep.steps.back().reward == 0.0) {
      ep.terminal_reason = TerminalReason::ZeroReward;
      break;
    }
  }
  if (ep.terminal_reason == TerminalReason::MaxLen && !ep.steps.empty()) {
    ep.bootstrap_value = agent.value(agent.hidden(agent.state(window_embedding, ep.pattern)));
  }
  return ep;
}

EpisodeTargets compute_targets(const Episode& episode, double gamma) {
  EpisodeTargets out;
  const std::size_t n = episode.steps.size();
  out.returns.assign(n, 0.0);
  out.advantages.assign(n, 0.0);
  double R = episode.terminal() ? 0.0 : episode.bootstrap_value;
  for (std::size_t t = n; t-- > 0;) {
    R = episode.steps[t].reward + gamma * R;
    out.returns[t] = R;
    out.advantages[t] = R - episode.steps[t].value;
  }
  return out;
}

namespace {

// Forward/backward over one episode. When `grads` is null only losses are computed.
LossTerms episode_pass(const Agent& agent, const Episode& episode, const EpisodeTargets& targets,
                       AgentGradients* grads) {
  LossTerms loss;
  const std::size_t n = episode.steps.size();
  if (n == 0) return loss;
  const double value_coef = agent.config().value_coef;
  if (grads) {
    grads->trunk = agent.trunk.zero_gradients();
    grads->event_head = agent.event_head.zero_gradients();
    grads->critic_head = agent.critic_head.zero_gradients();
    grads->condition_heads.clear();
    for (const auto& c : agent.condition_heads) grads->condition_heads.push_back(c.zero_gradients());
  }
  for (std::size_t t = 0; t < n; ++t) {
    const auto& step = episode.steps[t];
    const double adv = targets.advantages[t];
    nn::ForwardCache<double> trunk_cache, event_cache, critic_cache;
    const Eigen::MatrixXd h = agent.trunk.forward(Eigen::MatrixXd(step.state), &trunk_cache);
    const Eigen::VectorXd h_vec = h.col(0);

    const Eigen::VectorXd logits = agent.event_head.forward(h, &event_cache).col(0);
    const Eigen::VectorXd p = nn::masked_softmax<double>(logits, step.event_mask);
    double cl = nn::masked_log_softmax<double>(logits, step.event_mask, static_cast<Eigen::Index>(step.event_action));

    Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(h.rows(), 1);
    if (grads) {
      // d(-A * log p_a)/dlogits = -A * (onehot_a - p)
      Eigen::MatrixXd g = adv * p;
      g(static_cast<Eigen::Index>(step.event_action), 0) -= adv;
      Eigen::MatrixXd din;
      grads->event_head += agent.event_head.backward(event_cache, g, &din);
      dh += din;
    }

    const std::size_t k = step.conditions.size();
    std::vector<std::size_t> prior;
    for (std::size_t j = 0; j < k; ++j) {
      const auto& choice = step.conditions[j];
      nn::ForwardCache<double> cache;
      const Eigen::VectorXd in = agent.condition_input(h_vec, step.event_action, prior);
      const Eigen::VectorXd cl_logits = agent.condition_heads[j].forward(Eigen::MatrixXd(in), &cache).col(0);
      const Eigen::VectorXd pc = nn::masked_softmax<double>(cl_logits, choice.mask);
      cl += nn::masked_log_softmax<double>(cl_logits, choice.mask, static_cast<Eigen::Index>(choice.action)) /
            static_cast<double>(k);
      if (grads) {
        const double w = adv / static_cast<double>(k);
        Eigen::MatrixXd g = w * pc;
        g(static_cast<Eigen::Index>(choice.action), 0) -= w;
        Eigen::MatrixXd din;
        grads->condition_heads[j] += agent.condition_heads[j].backward(cache, g, &din);
        dh += din.topRows(h.rows());
      }
      prior.push_back(choice.action);
    }
    loss.actor -= cl * adv;

    const double v = agent.critic_head.forward(h, &critic_cache)(0, 0);
    const double err = v - targets.returns[t];
    loss.critic += err * err / static_cast<double>(n);
    if (grads) {
      Eigen::MatrixXd g(1, 1);
      g(0, 0) = value_coef * 2.0 * err / static_cast<double>(n);
      Eigen::MatrixXd din;
      grads->critic_head += agent.critic_head.backward(critic_cache, g, &din);
      dh += din;
      grads->trunk += agent.trunk.backward(trunk_cache, dh);
    }
  }
  return loss;
}

}  // namespace

LossTerms episode_losses(const Agent& agent, const Episode& episode, const EpisodeTargets& targets) {
  return episode_pass(agent, episode, targets, nullptr);
}

AgentGradients episode_gradients(const Agent& agent, const Episode& episode, const EpisodeTargets& targets,
                                 LossTerms* losses) {
  AgentGradients g;
  const LossTerms l = episode_pass(agent, episode, targets, &g);
  if (losses) *losses = l;
  return g;
}

UpdateMetrics update_agent(Agent& agent, Episode& episode) {
  if (episode.steps.empty()) throw std::invalid_argument("update_agent needs a non-empty episode");
  const EpisodeTargets targets = compute_targets(episode, agent.config().gamma);
  for (std::size_t t = 0; t < episode.steps.size(); ++t) episode.steps[t].advantage = targets.advantages[t];

  LossTerms loss;
  const AgentGradients g = episode_gradients(agent, episode, targets, &loss);
  if (!std::isfinite(loss.actor) || !std::isfinite(loss.critic)) {
    throw std::runtime_error("non-finite loss (actor " + std::to_string(loss.actor) + ", critic " +
                             std::to_string(loss.critic) + ", return " + std::to_string(episode.total_return) + ")");
  }

  UpdateMetrics m{loss.actor, loss.critic, agent.config().base_lr};
  if (agent.config().dynamic_lr) {
    double lr = 0.0;
    for (const auto& step : episode.steps) {
      lr += dynamic_lr(agent.event_probs(agent.hidden(step.state), step.event_mask), agent.config().base_lr);
    }
    m.lr_used = lr / static_cast<double>(episode.steps.size());
  }
  auto& opt = agent.optimizers();
  opt[0].apply(agent.trunk, g.trunk, m.lr_used);
  opt[1].apply(agent.event_head, g.event_head, m.lr_used);
  opt[2].apply(agent.critic_head, g.critic_head, m.lr_used);
  for (std::size_t j = 0; j < agent.condition_heads.size(); ++j) {
    opt[3 + j].apply(agent.condition_heads[j], g.condition_heads[j], m.lr_used);
  }
  return m;
}

}  // namespace cepminer
