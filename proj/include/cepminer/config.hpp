#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cepminer/bayes.hpp"
#include "cepminer/constructor.hpp"
#include "cepminer/matcher.hpp"
#include "cepminer/pattern.hpp"
#include "cepminer/rank_predictor.hpp"

namespace cepminer {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExpertKind { Simulated, Live };

struct ExpertConfig {
  ExpertKind kind = ExpertKind::Simulated;
  double sigma = 0.0;
  // Planted target formulas. They drive the simulated expert and the
  // ground-truth-weighted reward metric; a live run may leave them empty.
  std::vector<std::string> targets;
  double timeout_seconds = 600.0;
};

struct ScheduleConfig {
  std::size_t epochs = 20;
  std::size_t episodes_per_epoch = 500;
  std::size_t interact_every_episodes = 100;
  int query_min = 5;
  int query_max = 20;
  std::size_t max_per_rank = 5;
  std::size_t predictor_epochs = 20;
};

struct PathsConfig {
  std::filesystem::path data;
  std::optional<std::filesystem::path> d0;
  std::optional<std::filesystem::path> dprime;
  std::optional<std::filesystem::path> targets;  // JSON written by gen-data
  std::filesystem::path output_dir;
};

struct RunConfig {
  MiningConfig mining;
  ExpertConfig expert;
  ScheduleConfig schedule;
  AgentConfig agent;
  double reward_scale = 1.0;  // multiplies freq * rating before it reaches the agent
  PredictorConfig predictor;
  CompletionBudget bayes;
  MatchOptions matcher;
  PathsConfig paths;
  std::uint64_t seed = 0;
};

nlohmann::json schema_to_json(const EventSchema& s);
EventSchema schema_from_json(const nlohmann::json& doc);

// Unknown keys anywhere in the document are rejected. Relative paths are
// resolved against `base_dir`. Does not touch the filesystem otherwise.
RunConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const RunConfig& c);

// Reads, parses and checks that every referenced input file exists.
RunConfig load_config(const std::filesystem::path& path);
void check_inputs_exist(const RunConfig& c);

// Target texts from the config, or from paths.targets when given there.
std::vector<Pattern> load_targets(const RunConfig& c);

}  // namespace cepminer
