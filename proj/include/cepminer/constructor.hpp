#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <json.hpp>
#include <span>
#include <vector>

#include "cepminer/nn.hpp"
#include "cepminer/pattern.hpp"

namespace cepminer {

struct AgentConfig {
  std::size_t trunk_hidden = 128;
  std::size_t trunk_layers = 2;
  std::size_t head_hidden = 64;
  double gamma = 0.99;
  double ucb_c = 1.0;  // 0 disables the UCB re-weighting
  double base_lr = 1e-3;
  nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
  double value_coef = 0.5;
  bool dynamic_lr = true;
};

// Raw UCB1 score q + c * sqrt(ln t / n).
double ucb_score(double q, double c, double t, double n);

// Adds half of the min-max normalized UCB bonus c*sqrt(ln t / N(a)) to each
// valid action's probability and renormalizes. Never-selected actions have
// an infinite bonus. Masked-out actions keep probability 0.
Eigen::VectorXd ucb_reweight(const Eigen::VectorXd& probs, std::span<const std::uint64_t> counts, std::uint64_t t,
                             double c, const std::vector<bool>* mask = nullptr);

// base_lr * max(0.1, H(p) / ln n).
double dynamic_lr(const Eigen::VectorXd& probs, double base_lr);

// event_logp + mean(condition_logps); the empty mean is 0.
double combined_log(double event_logp, std::span<const double> condition_logps);

struct ConditionChoice {
  std::size_t action = 0;
  double logp = 0.0;
  std::vector<bool> mask;
};

struct EventStep {
  Eigen::VectorXd state;
  std::size_t event_action = 0;
  double event_logp = 0.0;
  std::vector<bool> event_mask;
  std::vector<ConditionChoice> conditions;
  double reward = 0.0;
  double value = 0.0;
  double cl = 0.0;
  double advantage = 0.0;
};

enum class TerminalReason { NopEvent, ZeroReward, MaxLen };
const char* terminal_name(TerminalReason r);

struct Episode {
  std::vector<EventStep> steps;
  Pattern pattern;  // formula as built (constants are holes)
  double total_return = 0.0;
  TerminalReason terminal_reason = TerminalReason::NopEvent;
  double bootstrap_value = 0.0;  // V(s_{T+1}) when the last state is not terminal

  bool terminal() const { return terminal_reason != TerminalReason::MaxLen; }
};

struct EpisodeTargets {
  std::vector<double> returns;
  std::vector<double> advantages;
};

struct UpdateMetrics {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double lr_used = 0.0;
};

using RewardFn = std::function<double(const Pattern& formula)>;

class Agent {
 public:
  Agent(EventSchema schema, std::size_t max_len, std::size_t max_conds, AgentConfig config, std::uint64_t seed);

  const EventSchema& schema() const { return schema_; }
  std::size_t max_len() const { return max_len_; }
  std::size_t max_conds() const { return max_conds_; }
  const AgentConfig& config() const { return config_; }
  const ActionSet& actions() const { return actions_; }
  std::size_t event_action_count() const { return actions_.event_actions.size(); }
  std::size_t condition_action_count() const { return actions_.condition_actions.size(); }
  std::size_t state_dim() const;

  // Network blocks. Condition branch j (0-based) sees the trunk output, the
  // chosen event one-hot and the j previously chosen condition one-hots.
  nn::DenseNet<double> trunk;
  nn::DenseNet<double> event_head;
  std::vector<nn::DenseNet<double>> condition_heads;
  nn::DenseNet<double> critic_head;

  std::vector<std::uint64_t> event_counts;
  std::vector<std::uint64_t> condition_counts;
  std::uint64_t event_selections = 0;
  std::uint64_t condition_selections = 0;

  Eigen::VectorXd state(const Eigen::VectorXd& window_embedding, const Pattern& partial) const;
  Eigen::VectorXd hidden(const Eigen::VectorXd& state) const;
  Eigen::VectorXd event_probs(const Eigen::VectorXd& hidden, const std::vector<bool>& mask) const;
  Eigen::VectorXd condition_input(const Eigen::VectorXd& hidden, std::size_t event_action,
                                  std::span<const std::size_t> prior_conditions) const;
  Eigen::VectorXd condition_probs(std::size_t branch, const Eigen::VectorXd& input, const std::vector<bool>& mask) const;
  double value(const Eigen::VectorXd& hidden) const;

  // Sample from the UCB re-weighted policy; returns (action, log pi(action)).
  std::pair<std::size_t, double> select_event(const Eigen::VectorXd& hidden, const std::vector<bool>& mask,
                                              nn::Rng& rng);
  std::pair<std::size_t, double> select_condition(std::size_t branch, const Eigen::VectorXd& input,
                                                  const std::vector<bool>& mask, nn::Rng& rng);

  // Valid condition actions for event position `position` given those
  // already chosen on it. The nop action is always valid.
  std::vector<bool> condition_mask(std::size_t position, std::span<const std::size_t> chosen) const;

  Condition to_condition(std::size_t action, int hole_id) const;

  nlohmann::json checkpoint() const;
  static Agent from_checkpoint(const nlohmann::json& doc, EventSchema schema, std::size_t max_len,
                               std::size_t max_conds, AgentConfig config);

  // One optimizer per network block.
  std::vector<nn::Optimizer<double>>& optimizers() { return optimizers_; }

 private:
  EventSchema schema_;
  std::size_t max_len_;
  std::size_t max_conds_;
  AgentConfig config_;
  ActionSet actions_;
  std::vector<nn::Optimizer<double>> optimizers_;
};

struct AgentGradients {
  nn::GradientSet<double> trunk;
  nn::GradientSet<double> event_head;
  std::vector<nn::GradientSet<double>> condition_heads;
  nn::GradientSet<double> critic_head;
};

struct LossTerms {
  double actor = 0.0;   // -sum_t CL(t) * A_t
  double critic = 0.0;  // mean_t (V_t - R_t)^2
};

// Builds one pattern event-by-event and condition-by-condition. The reward
// of the pattern so far is requested after every event step.
Episode run_episode(Agent& agent, const Eigen::VectorXd& window_embedding, const RewardFn& reward, nn::Rng& rng);

EpisodeTargets compute_targets(const Episode& episode, double gamma);

// Losses and gradients with the advantages and returns held fixed.
LossTerms episode_losses(const Agent& agent, const Episode& episode, const EpisodeTargets& targets);
AgentGradients episode_gradients(const Agent& agent, const Episode& episode, const EpisodeTargets& targets,
                                 LossTerms* losses = nullptr);

UpdateMetrics update_agent(Agent& agent, Episode& episode);

}  // namespace cepminer
