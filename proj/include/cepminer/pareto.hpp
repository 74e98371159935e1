#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "cepminer/pattern.hpp"

namespace cepminer {

struct ScoredPattern {
  Pattern pattern;
  double frequency = 0.0;
  double rating = 0.0;
  std::size_t epoch = 0;
};

// a dominates b when it is no worse on both objectives and better on one.
bool dominates(const ScoredPattern& a, const ScoredPattern& b);

// Non-dominated subset. Duplicates (same canonical text) collapse to one entry
// carrying the best frequency and rating seen and the earliest epoch.
std::vector<ScoredPattern> pareto_front(const std::vector<ScoredPattern>& items);

// Top-k of the front by frequency/max_frequency + rating/scale. Ties go to the
// earlier epoch, then to the lexicographically smaller pattern text.
std::vector<ScoredPattern> rank_front(std::vector<ScoredPattern> front, std::size_t k, int scale,
                                      double max_frequency);

// Bounded store of everything the run has scored. When full, a dominated
// entry is evicted first, otherwise the oldest.
class PatternArchive {
 public:
  explicit PatternArchive(std::size_t capacity = 10000);

  void add(ScoredPattern item);
  std::size_t size() const { return items_.size(); }
  const std::vector<ScoredPattern>& items() const { return items_; }
  double max_frequency() const;
  std::vector<ScoredPattern> top(std::size_t k, int scale) const;

 private:
  std::size_t capacity_;
  std::vector<ScoredPattern> items_;
};

nlohmann::json to_json(const std::vector<ScoredPattern>& items);

}  // namespace cepminer
