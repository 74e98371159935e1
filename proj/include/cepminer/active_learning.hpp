#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cepminer/nn.hpp"
#include "cepminer/pattern.hpp"
#include "cepminer/rank_predictor.hpp"

namespace cepminer {

// Uncertainty ordering with a per-rank cap: indices sorted by ascending
// certainty; a pattern whose predicted rank already has `max_per_rank`
// kept patterns ahead of it moves to the tail (stable among the moved).
std::vector<std::size_t> order_candidates(std::span<const RankPrediction> predictions, std::size_t max_per_rank);

std::vector<Pattern> select_candidates(std::span<const Pattern> patterns, const RankPredictor& rp,
                                       std::size_t max_per_rank);

struct QueryBudget {
  int min_queries = 0;
  int max_queries = 0;
  void validate() const;
};

// x1 + round((x2 - x1) * (1 - accuracy)), clamped to [x1, x2].
int choose_query_count(const QueryBudget& budget, double recent_balanced_accuracy);

// Ratings for the synthetic corpus: scale * similarity to the nearest planted
// target, where similarity = 0.6 * event-sequence overlap + 0.4 * condition overlap.
class GroundTruth {
 public:
  GroundTruth(std::vector<Pattern> targets, int scale);

  static double similarity(const Pattern& p, const Pattern& target);
  int rate(const Pattern& p) const;
  int scale() const { return scale_; }
  const std::vector<Pattern>& targets() const { return targets_; }

 private:
  std::vector<Pattern> targets_;
  int scale_;
};

struct QueryItem {
  Pattern pattern;
  int predicted_rank = 1;
  double certainty = 0.0;
};

class ExpertOracle {
 public:
  virtual ~ExpertOracle() = default;
  // One rating per item, or nullopt when the expert did not answer in time.
  virtual std::optional<std::vector<int>> rate(std::span<const QueryItem> items) = 0;
};

class SimulatedExpert final : public ExpertOracle {
 public:
  SimulatedExpert(GroundTruth truth, double sigma, std::uint64_t seed);

  // clip(round(truth + N(0, sigma)), 1, scale)
  int rate_one(const Pattern& p);
  std::optional<std::vector<int>> rate(std::span<const QueryItem> items) override;
  const GroundTruth& truth() const { return truth_; }
  double sigma() const { return sigma_; }

 private:
  GroundTruth truth_;
  double sigma_;
  nn::Rng rng_;
};

// Pending-query queue shared between the training loop and the HTTP service.
class QueryBroker {
 public:
  struct Pending {
    std::uint64_t id;
    std::string pattern_text;
    int predicted_rank;
    double certainty;
  };
  enum class SubmitStatus { Accepted, NotFound, AlreadyAnswered, OutOfRange };

  explicit QueryBroker(int scale) : scale_(scale) {}

  // Posts a batch and blocks until every item is rated or the timeout
  // elapses. Unanswered items are withdrawn on timeout.
  std::optional<std::vector<int>> ask(std::span<const QueryItem> items, std::chrono::milliseconds timeout);

  std::vector<Pending> pending() const;
  SubmitStatus submit(std::uint64_t id, int rating);
  std::uint64_t answered() const;
  int scale() const { return scale_; }

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  int scale_;
  std::uint64_t next_id_ = 1;
  std::map<std::uint64_t, Pending> pending_;
  std::map<std::uint64_t, int> answers_;
  std::map<std::uint64_t, bool> closed_;  // ids whose batch finished
  std::uint64_t answered_ = 0;
};

class LiveExpert final : public ExpertOracle {
 public:
  LiveExpert(QueryBroker& broker, std::chrono::milliseconds timeout) : broker_(broker), timeout_(timeout) {}
  std::optional<std::vector<int>> rate(std::span<const QueryItem> items) override {
    return broker_.ask(items, timeout_);
  }

 private:
  QueryBroker& broker_;
  std::chrono::milliseconds timeout_;
};

struct InteractionConfig {
  QueryBudget budget;
  std::size_t max_per_rank = 5;
  std::size_t train_epochs = 20;
};

struct InteractionResult {
  std::size_t queried = 0;      // ratings received
  std::size_t new_labels = 0;   // growth of the labeled set
  std::optional<double> batch_accuracy;  // predictor vs. expert on the queried batch
  bool skipped = false;
};

// Picks the query count, orders candidates, asks the expert, merges the
// answers into `labels` and retrains `rp` incrementally.
InteractionResult interaction_point(LabeledSet& labels, std::span<const Pattern> new_patterns, RankPredictor& rp,
                                    ExpertOracle& oracle, const InteractionConfig& config,
                                    double recent_balanced_accuracy, nn::Rng& rng);

}  // namespace cepminer
