#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "cepminer/active_learning.hpp"
#include "cepminer/config.hpp"
#include "cepminer/constructor.hpp"
#include "cepminer/matcher.hpp"
#include "cepminer/pareto.hpp"
#include "cepminer/rank_predictor.hpp"
#include "cepminer/stream.hpp"

namespace cepminer {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One line of metrics.jsonl. Wall-clock time is kept out of this record (it
// goes to timings.jsonl) so that equal seeds give byte-identical metrics.
struct MetricsRecord {
  std::size_t epoch = 0;
  std::optional<double> mean_weighted_reward;  // ground-truth rated; absent without targets
  std::optional<double> balanced_accuracy_train;
  std::optional<double> balanced_accuracy_dprime;
  std::uint64_t queries = 0;
  std::size_t unique_patterns = 0;
};

nlohmann::json to_json(const MetricsRecord& m);
MetricsRecord metrics_from_json(const nlohmann::json& doc);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

// Immutable view of a run handed to observers between iterations.
struct TrainerSnapshot {
  std::string status;  // "training", "finished" or "failed"
  std::vector<MetricsRecord> metrics;
  std::vector<ScoredPattern> ranked_front;
  std::uint64_t queries = 0;
};

// Replaces each hole by the window median of its attribute (0 when the
// attribute never occurs in the window).
Pattern resolve_with_medians(const Pattern& formula, const Window& w, const EventSchema& schema);

class Trainer {
 public:
  // A live run needs `expert`; a simulated run builds its own from the targets.
  explicit Trainer(RunConfig config, std::unique_ptr<ExpertOracle> expert = nullptr);
  ~Trainer();

  // Writes the initial checkpoints, then runs every configured epoch.
  void run();
  // Loads agent.json, predictor.json and labels.jsonl from an earlier run.
  void warm_start(const std::filesystem::path& dir);

  std::function<void(const TrainerSnapshot&)> on_progress;

  const RunConfig& config() const { return config_; }
  const Agent& agent() const { return agent_; }
  const RankPredictor& predictor() const { return predictor_; }
  const LabeledSet& labels() const { return labels_; }
  const PatternArchive& archive() const { return archive_; }
  const std::vector<MetricsRecord>& metrics() const { return metrics_; }
  std::uint64_t queries() const { return queries_; }
  std::size_t initial_label_count() const { return initial_labels_; }
  TrainerSnapshot snapshot(const std::string& status) const;

 private:
  struct EpisodeOutcome {
    std::optional<double> weighted_reward;
  };

  void write_initial_outputs();
  void write_checkpoints() const;
  void run_epoch(std::size_t epoch);
  EpisodeOutcome run_one_episode(std::size_t epoch);
  void interact();
  double window_frequency(const Pattern& p, std::size_t window);
  int rating_for(const Pattern& p) const;
  std::optional<double> accuracy_on(std::span<const LabeledPattern> data) const;
  void publish(const std::string& status) const;

  RunConfig config_;
  std::vector<Record> stream_;
  std::size_t windows_ = 0;
  AttributeScale attribute_scale_;
  Agent agent_;
  RankPredictor predictor_;
  LabeledSet labels_;
  std::size_t initial_labels_ = 0;
  std::vector<LabeledPattern> dprime_;
  std::optional<GroundTruth> truth_;
  std::unique_ptr<ExpertOracle> expert_;
  PatternArchive archive_;
  FrequencyCache cache_;
  std::vector<MetricsRecord> metrics_;
  std::vector<Pattern> since_interaction_;
  std::unordered_set<std::string> pending_texts_;
  std::unordered_set<std::string> mined_;
  std::optional<double> last_batch_accuracy_;
  std::uint64_t queries_ = 0;
  std::size_t episode_counter_ = 0;
  nn::Rng episode_rng_;
  nn::Rng bayes_rng_;
  nn::Rng predictor_rng_;
};

struct EvaluationResult {
  std::optional<double> balanced_accuracy_train;
  double balanced_accuracy_dprime = 0.0;
  std::size_t dprime_size = 0;
};

// Scores a finished run's predictor on its labels and on a D' file. When
// `predictions_out` is set, writes one {pattern, label, predicted, certainty}
// line per D' item.
EvaluationResult evaluate(const std::filesystem::path& checkpoint_dir, const std::filesystem::path& dprime,
                          const std::optional<std::filesystem::path>& predictions_out = std::nullopt);

}  // namespace cepminer
