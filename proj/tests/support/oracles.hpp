#pragma once

// Independent reference implementations used to check the library. None of
// these call into the code they verify beyond plain data types.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cepminer/pattern.hpp"
#include "cepminer/stream.hpp"

namespace oracle {

using cepminer::CmpOp;
using Rng = std::mt19937_64;

inline cepminer::EventSchema small_schema() {
  return {{"A", "B", "C"}, {"x", "y"}, {CmpOp::Lt, CmpOp::Gt, CmpOp::Eq, CmpOp::Ne, CmpOp::Le, CmpOp::Ge}};
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline bool coin(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

// Random valid pattern. Constants come from a small integer grid so that
// equality conditions actually fire on random windows. With forward_refs off
// every reference points to an earlier event, so the per-event condition
// count is the same before and after normalization.
inline cepminer::Pattern random_pattern(Rng& rng, const cepminer::EventSchema& s, std::size_t max_len,
                                        std::size_t max_conds, bool holes = false, bool forward_refs = true) {
  cepminer::Pattern p;
  const std::size_t n = 1 + uniform_index(rng, max_len);
  p.within_seconds = static_cast<double>(1 + uniform_index(rng, 8));
  int next_hole = 1;
  for (std::size_t i = 0; i < n; ++i) {
    cepminer::PatternEvent ev;
    ev.event_type = s.event_types[uniform_index(rng, s.event_types.size())];
    ev.alias = cepminer::default_alias(i);
    p.events.push_back(ev);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = uniform_index(rng, max_conds + 1);
    for (std::size_t j = 0; j < k; ++j) {
      cepminer::Condition c;
      c.attribute = s.attributes[uniform_index(rng, s.attributes.size())];
      c.op = s.operators[uniform_index(rng, s.operators.size())];
      if (forward_refs && n > 1 && coin(rng, 0.5)) {
        std::size_t other = uniform_index(rng, n - 1);
        if (other >= i) ++other;
        c.target = cepminer::EventRef{other};
      } else if (!forward_refs && i > 0 && coin(rng, 0.5)) {
        c.target = cepminer::EventRef{uniform_index(rng, i)};
      } else if (holes && coin(rng, 0.5)) {
        c.target = cepminer::Hole{next_hole++};
      } else {
        c.target = cepminer::Constant{static_cast<double>(uniform_index(rng, 5))};
      }
      p.events[i].conditions.push_back(c);
    }
  }
  return p;
}

// Short window with small integer values, repeated timestamps and missing cells.
inline cepminer::Window random_window(Rng& rng, const cepminer::EventSchema& s, std::size_t max_records) {
  cepminer::Window w;
  double ts = 0.0;
  const std::size_t n = uniform_index(rng, max_records + 1);
  for (std::size_t i = 0; i < n; ++i) {
    ts += static_cast<double>(uniform_index(rng, 3));
    cepminer::Record r;
    r.ts = ts;
    r.type = uniform_index(rng, s.event_types.size());
    for (std::size_t a = 0; a < s.attributes.size(); ++a) {
      if (coin(rng, 0.1)) {
        r.attrs.push_back(std::nullopt);
      } else {
        r.attrs.push_back(static_cast<double>(uniform_index(rng, 5)));
      }
    }
    w.records.push_back(r);
  }
  return w;
}

inline bool holds(double l, CmpOp op, double r, double eps) {
  const bool eq = std::fabs(l - r) <= eps;
  switch (op) {
    case CmpOp::Eq: return eq;
    case CmpOp::Ne: return !eq;
    case CmpOp::Lt: return !eq && l < r;
    case CmpOp::Le: return eq || l < r;
    case CmpOp::Gt: return !eq && l > r;
    case CmpOp::Ge: return eq || l > r;
  }
  return false;
}

// Enumerates every increasing index tuple and checks the full predicate.
inline std::uint64_t brute_force_count(const cepminer::Pattern& p, const cepminer::Window& w,
                                       const cepminer::EventSchema& s, double eps = 1e-6) {
  const std::size_t k = p.events.size();
  const std::size_t n = w.records.size();
  if (k == 0 || k > n) return 0;
  std::vector<std::size_t> idx(k);
  std::uint64_t total = 0;
  auto attr_of = [&](const cepminer::Record& r, const std::string& name) -> std::optional<double> {
    for (std::size_t a = 0; a < s.attributes.size(); ++a) {
      if (s.attributes[a] == name) return a < r.attrs.size() ? r.attrs[a] : std::nullopt;
    }
    return std::nullopt;
  };
  auto ok = [&]() {
    for (std::size_t i = 0; i < k; ++i) {
      const auto& r = w.records[idx[i]];
      if (s.event_types[r.type] != p.events[i].event_type) return false;
      if (i > 0 && !(r.ts > w.records[idx[i - 1]].ts)) return false;
    }
    if (w.records[idx[k - 1]].ts - w.records[idx[0]].ts > p.within_seconds) return false;
    for (std::size_t i = 0; i < k; ++i) {
      for (const auto& c : p.events[i].conditions) {
        const auto lhs = attr_of(w.records[idx[i]], c.attribute);
        if (!lhs) return false;
        double rhs = 0.0;
        if (const auto* ref = std::get_if<cepminer::EventRef>(&c.target)) {
          const auto v = attr_of(w.records[idx[ref->index]], c.attribute);
          if (!v) return false;
          rhs = *v;
        } else {
          rhs = std::get<cepminer::Constant>(c.target).value;
        }
        if (!holds(*lhs, c.op, rhs, eps)) return false;
      }
    }
    return true;
  };
  // Odometer over strictly increasing index vectors.
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    if (ok()) ++total;
    std::size_t pos = k;
    while (pos > 0 && idx[pos - 1] == n - k + pos - 1) --pos;
    if (pos == 0) break;
    ++idx[pos - 1];
    for (std::size_t i = pos; i < k; ++i) idx[i] = idx[i - 1] + 1;
  }
  return total;
}

struct Prediction {
  int rank;
  double certainty;
};

// Reference for the uncertainty ordering: an element is kept when fewer than
// `cap` same-rank elements precede it in (certainty, index) order.
inline std::vector<std::size_t> brute_force_order(const std::vector<Prediction>& preds, std::size_t cap) {
  const std::size_t n = preds.size();
  auto before = [&](std::size_t a, std::size_t b) {
    return preds[a].certainty < preds[b].certainty || (preds[a].certainty == preds[b].certainty && a < b);
  };
  std::vector<std::size_t> kept, demoted;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && preds[j].rank == preds[i].rank && before(j, i)) ++ahead;
    }
    (ahead < cap ? kept : demoted).push_back(i);
  }
  std::sort(kept.begin(), kept.end(), before);
  std::sort(demoted.begin(), demoted.end(), before);
  kept.insert(kept.end(), demoted.begin(), demoted.end());
  return kept;
}

struct Scored {
  std::string key;
  double f;
  double r;
};

// O(n^2) non-dominated scan after merging duplicate keys by max objective.
inline std::set<std::string> brute_force_front(const std::vector<Scored>& items) {
  std::map<std::string, std::pair<double, double>> merged;
  for (const auto& it : items) {
    auto [pos, fresh] = merged.try_emplace(it.key, it.f, it.r);
    if (!fresh) {
      pos->second.first = std::max(pos->second.first, it.f);
      pos->second.second = std::max(pos->second.second, it.r);
    }
  }
  std::set<std::string> front;
  for (const auto& [k, a] : merged) {
    bool dominated = false;
    for (const auto& [k2, b] : merged) {
      if (b.first >= a.first && b.second >= a.second && (b.first > a.first || b.second > a.second)) dominated = true;
    }
    if (!dominated) front.insert(k);
  }
  return front;
}

}  // namespace oracle
