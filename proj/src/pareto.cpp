#include "cepminer/pareto.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace cepminer {

bool dominates(const ScoredPattern& a, const ScoredPattern& b) {
  return a.frequency >= b.frequency && a.rating >= b.rating &&
         (a.frequency > b.frequency || a.rating > b.rating);
}

namespace {

std::vector<std::pair<std::string, ScoredPattern>> collapse(const std::vector<ScoredPattern>& items) {
  std::map<std::string, std::size_t> index;
  std::vector<std::pair<std::string, ScoredPattern>> out;
  for (const auto& it : items) {
    std::string key = render_pattern(it.pattern);
    auto [pos, fresh] = index.try_emplace(key, out.size());
    if (fresh) {
      out.emplace_back(std::move(key), it);
      continue;
    }
    auto& kept = out[pos->second].second;
    kept.frequency = std::max(kept.frequency, it.frequency);
    kept.rating = std::max(kept.rating, it.rating);
    kept.epoch = std::min(kept.epoch, it.epoch);
  }
  return out;
}

}  // namespace

std::vector<ScoredPattern> pareto_front(const std::vector<ScoredPattern>& items) {
  const auto unique = collapse(items);
  std::vector<ScoredPattern> front;
  for (const auto& [key, a] : unique) {
    const bool beaten =
        std::any_of(unique.begin(), unique.end(), [&](const auto& other) { return dominates(other.second, a); });
    if (!beaten) front.push_back(a);
  }
  return front;
}

std::vector<ScoredPattern> rank_front(std::vector<ScoredPattern> front, std::size_t k, int scale,
                                      double max_frequency) {
  if (scale < 1) throw std::invalid_argument("rating scale must be positive");
  if (front.empty()) throw std::invalid_argument("cannot rank an empty front");
  if (k == 0) throw std::invalid_argument("rank_front needs k >= 1");
  const double fmax = max_frequency > 0.0 ? max_frequency : 1.0;
  struct Keyed {
    double score;
    std::string text;
    ScoredPattern item;
  };
  std::vector<Keyed> keyed;
  for (auto& p : front) {
    const double score = p.frequency / fmax + p.rating / static_cast<double>(scale);
    keyed.push_back({score, render_pattern(p.pattern), std::move(p)});
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.item.epoch != b.item.epoch) return a.item.epoch < b.item.epoch;
    return a.text < b.text;
  });
  std::vector<ScoredPattern> out;
  for (std::size_t i = 0; i < keyed.size() && i < k; ++i) out.push_back(std::move(keyed[i].item));
  return out;
}

PatternArchive::PatternArchive(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("archive capacity must be positive");
}

void PatternArchive::add(ScoredPattern item) {
  if (items_.size() == capacity_) {
    std::size_t victim = 0;  // oldest unless something is dominated
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (dominates(item, items_[i])) {
        victim = i;
        break;
      }
    }
    items_.erase(items_.begin() + static_cast<std::ptrdiff_t>(victim));
  }
  items_.push_back(std::move(item));
}

double PatternArchive::max_frequency() const {
  double m = 0.0;
  for (const auto& it : items_) m = std::max(m, it.frequency);
  return m;
}

std::vector<ScoredPattern> PatternArchive::top(std::size_t k, int scale) const {
  if (items_.empty() || k == 0) return {};
  return rank_front(pareto_front(items_), k, scale, max_frequency());
}

nlohmann::json to_json(const std::vector<ScoredPattern>& items) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& it : items) {
    out.push_back({{"pattern", render_pattern(it.pattern)},
                   {"frequency", it.frequency},
                   {"rating", it.rating},
                   {"epoch", it.epoch}});
  }
  return out;
}

}  // namespace cepminer
