#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "cepminer/pattern.hpp"
#include "cepminer/stream.hpp"

namespace cepminer {

struct MatchCount {
  std::uint64_t count = 0;
  bool capped = false;
  bool operator==(const MatchCount&) const = default;
};

struct MatchOptions {
  std::uint64_t cap = 10000;
  // '=' holds when |lhs - rhs| <= equality_eps; the other operators are
  // defined consistently with it (e.g. '<' is "less and not equal").
  double equality_eps = 1e-6;
};

bool compare(double lhs, CmpOp op, double rhs, double equality_eps);

// Pattern compiled against a schema; reusable across windows.
class CompiledPattern {
 public:
  CompiledPattern(const Pattern& p, const EventSchema& schema);

  MatchCount count(const Window& w, const MatchOptions& opts = {}) const;

 private:
  struct Check {
    std::size_t attribute;
    CmpOp op;
    std::size_t lhs_pos;                 // event position holding the lhs attribute
    std::optional<std::size_t> rhs_pos;  // event position for the rhs, or constant
    double constant = 0.0;
  };

  std::vector<std::size_t> types_;
  // checks_[k]: conditions that can be evaluated once position k is bound.
  std::vector<std::vector<Check>> checks_;
  double within_ = 0.0;
};

// Number of strictly ts-increasing record tuples matching the pattern,
// stopping at opts.cap. Throws PatternError for formulas with holes.
MatchCount count_matches(const Pattern& p, const Window& w, const EventSchema& schema, const MatchOptions& opts = {});

// 0.5 * app(w_i) + 0.25 * app(w_{i-j}) + 0.25 * app(w_{i-2j}); windows before
// the stream start are replaced by window 0, the nearest available one.
double frequency(std::size_t i, const std::function<double(std::size_t)>& appearances, std::size_t jump_interval);

// Eq. Rew = freq * rating.
inline double pattern_reward(double freq, double rating) { return freq * rating; }

// Memo of (canonical pattern text, window index) -> MatchCount.
class FrequencyCache {
 public:
  std::optional<MatchCount> find(const std::string& key, std::size_t window) const;
  void insert(const std::string& key, std::size_t window, MatchCount count);
  std::size_t size() const;
  void clear();

 private:
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::size_t>, MatchCount> entries_;
};

}  // namespace cepminer
