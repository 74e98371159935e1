#include "cepminer/active_learning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

namespace cepminer {

std::vector<std::size_t> order_candidates(std::span<const RankPrediction> predictions, std::size_t max_per_rank) {
  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return predictions[a].certainty < predictions[b].certainty;
  });
  std::vector<std::size_t> kept, demoted;
  std::map<int, std::size_t> count;
  for (std::size_t i : order) {
    auto& c = count[predictions[i].rank];
    if (c >= max_per_rank) {
      demoted.push_back(i);
    } else {
      ++c;
      kept.push_back(i);
    }
  }
  kept.insert(kept.end(), demoted.begin(), demoted.end());
  return kept;
}

std::vector<Pattern> select_candidates(std::span<const Pattern> patterns, const RankPredictor& rp,
                                       std::size_t max_per_rank) {
  std::vector<RankPrediction> preds;
  preds.reserve(patterns.size());
  for (const auto& p : patterns) preds.push_back(rp.predict(p));
  std::vector<Pattern> out;
  for (std::size_t i : order_candidates(preds, max_per_rank)) out.push_back(patterns[i]);
  return out;
}

void QueryBudget::validate() const {
  if (min_queries < 0 || max_queries < min_queries) throw std::invalid_argument("query budget needs 0 <= x1 <= x2");
}

int choose_query_count(const QueryBudget& budget, double acc) {
  budget.validate();
  acc = std::clamp(acc, 0.0, 1.0);
  const int n = budget.min_queries + static_cast<int>(std::lround((budget.max_queries - budget.min_queries) * (1.0 - acc)));
  return std::clamp(n, budget.min_queries, budget.max_queries);
}

// --- ground truth ----------------------------------------------------------

GroundTruth::GroundTruth(std::vector<Pattern> targets, int scale) : targets_(std::move(targets)), scale_(scale) {
  if (targets_.empty()) throw std::invalid_argument("ground truth needs at least one target pattern");
  if (scale_ < 2) throw std::invalid_argument("rating scale must be >= 2");
}

namespace {

std::size_t lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::vector<std::size_t>> dp(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1 : std::max(dp[i - 1][j], dp[i][j - 1]);
    }
  }
  return dp[a.size()][b.size()];
}

// (owner position, attribute, operator, referenced position or -1 for constants)
using Signature = std::tuple<std::size_t, std::string, int, long>;

std::set<Signature> signatures(const Pattern& raw) {
  const Pattern p = normalize_references(raw);
  std::set<Signature> out;
  for (std::size_t i = 0; i < p.events.size(); ++i) {
    for (const auto& c : p.events[i].conditions) {
      long ref = -1;
      if (const auto* r = std::get_if<EventRef>(&c.target)) ref = static_cast<long>(r->index);
      out.insert({i, c.attribute, static_cast<int>(c.op), ref});
    }
  }
  return out;
}

}  // namespace

double GroundTruth::similarity(const Pattern& p, const Pattern& target) {
  std::vector<std::string> a, b;
  for (const auto& e : p.events) a.push_back(e.event_type);
  for (const auto& e : target.events) b.push_back(e.event_type);
  const std::size_t longest = std::max(a.size(), b.size());
  const double events = longest == 0 ? 1.0 : static_cast<double>(lcs(a, b)) / static_cast<double>(longest);

  const auto sp = signatures(p);
  const auto st = signatures(target);
  std::size_t common = 0;
  for (const auto& s : sp) common += st.count(s);
  const std::size_t uni = sp.size() + st.size() - common;
  const double conds = uni == 0 ? 1.0 : static_cast<double>(common) / static_cast<double>(uni);
  return 0.6 * events + 0.4 * conds;
}

int GroundTruth::rate(const Pattern& p) const {
  double best = 0.0;
  for (const auto& t : targets_) best = std::max(best, similarity(p, t));
  return std::clamp(static_cast<int>(std::lround(scale_ * best)), 1, scale_);
}

SimulatedExpert::SimulatedExpert(GroundTruth truth, double sigma, std::uint64_t seed)
    : truth_(std::move(truth)), sigma_(sigma), rng_(seed) {
  if (!(sigma_ >= 0.0)) throw std::invalid_argument("expert sigma must be >= 0");
}

int SimulatedExpert::rate_one(const Pattern& p) {
  double r = truth_.rate(p);
  if (sigma_ > 0.0) r += std::normal_distribution<double>(0.0, sigma_)(rng_);
  return std::clamp(static_cast<int>(std::lround(r)), 1, truth_.scale());
}

std::optional<std::vector<int>> SimulatedExpert::rate(std::span<const QueryItem> items) {
  std::vector<int> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(rate_one(item.pattern));
  return out;
}

// --- live broker -----------------------------------------------------------

std::optional<std::vector<int>> QueryBroker::ask(std::span<const QueryItem> items, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  std::vector<std::uint64_t> ids;
  for (const auto& item : items) {
    const std::uint64_t id = next_id_++;
    pending_[id] = {id, render_pattern(item.pattern), item.predicted_rank, item.certainty};
    ids.push_back(id);
  }
  const bool done = cv_.wait_for(lock, timeout, [&] {
    return std::all_of(ids.begin(), ids.end(), [&](std::uint64_t id) { return answers_.count(id) > 0; });
  });
  for (std::uint64_t id : ids) {
    pending_.erase(id);
    closed_[id] = true;
  }
  if (!done) return std::nullopt;
  std::vector<int> out;
  for (std::uint64_t id : ids) out.push_back(answers_.at(id));
  return out;
}

std::vector<QueryBroker::Pending> QueryBroker::pending() const {
  std::lock_guard lock(mutex_);
  std::vector<Pending> out;
  for (const auto& [id, p] : pending_) {
    if (!answers_.count(id)) out.push_back(p);
  }
  return out;
}

QueryBroker::SubmitStatus QueryBroker::submit(std::uint64_t id, int rating) {
  std::lock_guard lock(mutex_);
  if (answers_.count(id)) return SubmitStatus::AlreadyAnswered;
  if (!pending_.count(id)) return closed_.count(id) ? SubmitStatus::AlreadyAnswered : SubmitStatus::NotFound;
  if (rating < 1 || rating > scale_) return SubmitStatus::OutOfRange;
  answers_[id] = rating;
  ++answered_;
  cv_.notify_all();
  return SubmitStatus::Accepted;
}

std::uint64_t QueryBroker::answered() const {
  std::lock_guard lock(mutex_);
  return answered_;
}

// --- interaction point -----------------------------------------------------

InteractionResult interaction_point(LabeledSet& labels, std::span<const Pattern> new_patterns, RankPredictor& rp,
                                    ExpertOracle& oracle, const InteractionConfig& config,
                                    double recent_balanced_accuracy, nn::Rng& rng) {
  InteractionResult result;
  const int n = choose_query_count(config.budget, recent_balanced_accuracy);
  if (n == 0 || new_patterns.empty()) return result;

  std::vector<RankPrediction> preds;
  for (const auto& p : new_patterns) preds.push_back(rp.predict(p));
  const auto order = order_candidates(preds, config.max_per_rank);
  std::vector<QueryItem> batch;
  for (std::size_t k = 0; k < order.size() && batch.size() < static_cast<std::size_t>(n); ++k) {
    const std::size_t i = order[k];
    batch.push_back({new_patterns[i], preds[i].rank, preds[i].certainty});
  }

  const auto ratings = oracle.rate(batch);
  if (!ratings) {
    result.skipped = true;
    return result;
  }
  std::vector<int> predicted, given;
  const std::size_t before = labels.size();
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const int r = (*ratings)[k];
    if (r < 1 || r > rp.scale()) throw std::runtime_error("expert returned a rating outside the scale");
    labels.insert(batch[k].pattern, r);
    predicted.push_back(batch[k].predicted_rank);
    given.push_back(r);
  }
  result.queried = batch.size();
  result.new_labels = labels.size() - before;
  result.batch_accuracy = balanced_accuracy(predicted, given, rp.scale());
  rp.train(labels.items(), config.train_epochs, rng);
  return result;
}

}  // namespace cepminer
