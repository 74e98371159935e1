#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <json.hpp>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cepminer/nn.hpp"
#include "cepminer/pattern.hpp"

namespace cepminer {

struct LabeledPattern {
  Pattern pattern;
  int rating = 1;
};

// D_i. Keyed by canonical pattern text; re-rating a pattern keeps the newest label.
class LabeledSet {
 public:
  // Returns true when the pattern was not in the set before.
  bool insert(const Pattern& p, int rating);
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const std::vector<LabeledPattern>& items() const { return items_; }
  const LabeledPattern* find(const std::string& canonical) const;

  // JSON lines: {"pattern": "<text>", "rating": r}
  void save(const std::filesystem::path& path) const;
  static LabeledSet load(const std::filesystem::path& path, const EventSchema& schema, int scale);

 private:
  std::vector<LabeledPattern> items_;
  std::vector<std::string> keys_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct PredictorConfig {
  std::vector<std::size_t> hidden{256, 128, 64};
  double dropout = 0.2;
  nn::Activation activation = nn::Activation::Relu;
  double lr = 1e-3;
  nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
  std::size_t batch_size = 32;
};

struct RankPrediction {
  int rank = 1;
  double certainty = 0.0;
};

std::size_t feature_size(const EventSchema& schema, std::size_t max_len, std::size_t max_conds);

// Partial-pattern encoding followed by one slot per (event, condition) that
// holds the constant divided by its attribute scale (0 for references).
Eigen::VectorXd featurize(const Pattern& p, const EventSchema& schema, std::size_t max_len, std::size_t max_conds,
                          std::span<const double> attribute_scale = {});

class RankPredictor {
 public:
  RankPredictor(EventSchema schema, std::size_t max_len, std::size_t max_conds, int scale, PredictorConfig config,
                std::uint64_t seed);

  int scale() const { return scale_; }
  std::size_t feature_dim() const { return feature_size(schema_, max_len_, max_conds_); }
  const EventSchema& schema() const { return schema_; }

  void set_attribute_scale(std::vector<double> s) { attribute_scale_ = std::move(s); }
  const std::vector<double>& attribute_scale() const { return attribute_scale_; }

  Eigen::VectorXd features(const Pattern& p) const;
  Eigen::VectorXd probabilities(const Pattern& p) const;
  RankPrediction predict(const Pattern& p) const;

  // Cross-entropy over the set, warm-started from the current parameters.
  // Returns the mean training loss of each epoch.
  std::vector<double> train(std::span<const LabeledPattern> data, std::size_t epochs, nn::Rng& rng);

  nn::DenseNet<double>& net() { return net_; }
  const nn::DenseNet<double>& net() const { return net_; }

  nlohmann::json checkpoint() const;
  static RankPredictor from_checkpoint(const nlohmann::json& doc, EventSchema schema, std::size_t max_len,
                                       std::size_t max_conds, int scale, PredictorConfig config);

 private:
  EventSchema schema_;
  std::size_t max_len_;
  std::size_t max_conds_;
  int scale_;
  PredictorConfig config_;
  std::vector<double> attribute_scale_;
  nn::DenseNet<double> net_;
  nn::Optimizer<double> optimizer_;
};

// Mean recall over the ranks present in `labels` (Eq. 4.1 for two classes).
double balanced_accuracy(std::span<const int> predictions, std::span<const int> labels, int scale);

}  // namespace cepminer
