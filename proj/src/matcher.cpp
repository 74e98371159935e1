#include "cepminer/matcher.hpp"

#include <algorithm>
#include <cmath>

namespace cepminer {

bool compare(double lhs, CmpOp op, double rhs, double equality_eps) {
  const bool eq = std::abs(lhs - rhs) <= equality_eps;
  switch (op) {
    case CmpOp::Eq: return eq;
    case CmpOp::Ne: return !eq;
    case CmpOp::Lt: return !eq && lhs < rhs;
    case CmpOp::Gt: return !eq && lhs > rhs;
    case CmpOp::Le: return eq || lhs < rhs;
    case CmpOp::Ge: return eq || lhs > rhs;
  }
  return false;
}

CompiledPattern::CompiledPattern(const Pattern& p, const EventSchema& schema) : within_(p.within_seconds) {
  if (p.events.empty()) throw PatternError("cannot match an empty pattern");
  if (p.has_holes()) throw PatternError("pattern formula not completed");
  checks_.resize(p.events.size());
  for (std::size_t i = 0; i < p.events.size(); ++i) {
    const auto& ev = p.events[i];
    const auto t = schema.type_index(ev.event_type);
    if (!t) throw PatternError("unknown event type '" + ev.event_type + "'");
    types_.push_back(*t);
    for (const auto& c : ev.conditions) {
      const auto a = schema.attribute_index(c.attribute);
      if (!a) throw PatternError("unknown attribute '" + c.attribute + "'");
      Check chk{*a, c.op, i, std::nullopt, 0.0};
      std::size_t ready = i;
      if (const auto* r = std::get_if<EventRef>(&c.target)) {
        if (r->index >= p.events.size() || r->index == i) throw PatternError("bad event reference");
        chk.rhs_pos = r->index;
        ready = std::max(i, r->index);
      } else {
        chk.constant = std::get<Constant>(c.target).value;
      }
      checks_[ready].push_back(chk);
    }
  }
}

MatchCount CompiledPattern::count(const Window& w, const MatchOptions& opts) const {
  const auto& recs = w.records;
  const std::size_t k = types_.size();
  std::vector<std::size_t> bound(k, 0);
  MatchCount result;

  auto satisfied = [&](std::size_t pos) {
    for (const auto& c : checks_[pos]) {
      const auto lhs = recs[bound[c.lhs_pos]].attr(c.attribute);
      if (!lhs) return false;
      double rhs = c.constant;
      if (c.rhs_pos) {
        const auto v = recs[bound[*c.rhs_pos]].attr(c.attribute);
        if (!v) return false;
        rhs = *v;
      }
      if (!compare(*lhs, c.op, rhs, opts.equality_eps)) return false;
    }
    return true;
  };

  // Depth-first over positions; returns false once the cap is reached.
  auto extend = [&](auto&& self, std::size_t pos, std::size_t from) -> bool {
    for (std::size_t r = from; r < recs.size(); ++r) {
      if (recs[r].type != types_[pos]) continue;
      if (pos > 0) {
        if (!(recs[r].ts > recs[bound[pos - 1]].ts)) continue;
        if (recs[r].ts - recs[bound[0]].ts > within_) break;
      }
      bound[pos] = r;
      if (!satisfied(pos)) continue;
      if (pos + 1 == k) {
        if (++result.count >= opts.cap) {
          result.capped = true;
          return false;
        }
      } else if (!self(self, pos + 1, r + 1)) {
        return false;
      }
    }
    return true;
  };
  if (opts.cap == 0) return {0, true};
  extend(extend, 0, 0);
  return result;
}

MatchCount count_matches(const Pattern& p, const Window& w, const EventSchema& schema, const MatchOptions& opts) {
  return CompiledPattern(p, schema).count(w, opts);
}

double frequency(std::size_t i, const std::function<double(std::size_t)>& appearances, std::size_t jump_interval) {
  auto back = [&](std::size_t steps) { return i >= steps * jump_interval ? i - steps * jump_interval : 0; };
  return 0.5 * appearances(i) + 0.25 * appearances(back(1)) + 0.25 * appearances(back(2));
}

std::optional<MatchCount> FrequencyCache::find(const std::string& key, std::size_t window) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find({key, window});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void FrequencyCache::insert(const std::string& key, std::size_t window, MatchCount count) {
  std::lock_guard lock(mutex_);
  entries_[{key, window}] = count;
}

std::size_t FrequencyCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

void FrequencyCache::clear() {
  std::lock_guard lock(mutex_);
  entries_.clear();
}

}  // namespace cepminer
