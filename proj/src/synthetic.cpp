#include "cepminer/synthetic.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "cepminer/active_learning.hpp"
#include "cepminer/matcher.hpp"

namespace cepminer {

EventSchema default_synthetic_schema() { return {{"A", "B", "C", "D"}, {"x", "y"}, {CmpOp::Lt, CmpOp::Gt, CmpOp::Eq}}; }

std::vector<Pattern> default_targets(const EventSchema& schema, double within_seconds) {
  const std::string w = " WITHIN " + format_number(within_seconds) + "s";
  return {parse_pattern("EVENTS SEQ(A a, B b) WHERE a.x < b.x" + w, schema),
          parse_pattern("EVENTS SEQ(C a, D b, A c) WHERE b.y > a.y AND c.x < b.x" + w, schema),
          parse_pattern("EVENTS SEQ(D a, C b) WHERE b.x > 7" + w, schema)};
}

namespace {

double uniform(nn::Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Record random_record(const EventSchema& schema, double ts, const PlantingOptions& o, nn::Rng& rng) {
  Record r;
  r.ts = ts;
  r.type = std::uniform_int_distribution<std::size_t>(0, schema.event_types.size() - 1)(rng);
  for (std::size_t a = 0; a < schema.attributes.size(); ++a) r.attrs.push_back(uniform(rng, o.value_lo, o.value_hi));
  return r;
}

// Values for one instance of `target`, by rejection sampling with equality
// conditions pinned directly.
std::vector<Record> instance(const EventSchema& schema, const Pattern& target, const PlantingOptions& o,
                             nn::Rng& rng) {
  const Pattern p = normalize_references(target);
  std::vector<Record> recs(p.size());
  for (int attempt = 0; attempt < 10000; ++attempt) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      recs[i].type = *schema.type_index(p.events[i].event_type);
      recs[i].attrs.assign(schema.attributes.size(), std::nullopt);
      for (std::size_t a = 0; a < schema.attributes.size(); ++a) recs[i].attrs[a] = uniform(rng, o.value_lo, o.value_hi);
      for (const auto& c : p.events[i].conditions) {
        if (c.op != CmpOp::Eq) continue;
        const std::size_t a = *schema.attribute_index(c.attribute);
        if (const auto* k = std::get_if<Constant>(&c.target)) recs[i].attrs[a] = k->value;
        if (const auto* r = std::get_if<EventRef>(&c.target)) recs[i].attrs[a] = recs[r->index].attrs[a];
      }
    }
    bool ok = true;
    for (std::size_t i = 0; i < p.size() && ok; ++i) {
      for (const auto& c : p.events[i].conditions) {
        const std::size_t a = *schema.attribute_index(c.attribute);
        const double rhs = std::holds_alternative<EventRef>(c.target)
                               ? *recs[std::get<EventRef>(c.target).index].attrs[a]
                               : std::get<Constant>(c.target).value;
        if (!compare(*recs[i].attrs[a], c.op, rhs, 1e-9)) ok = false;
      }
    }
    if (ok) return recs;
  }
  throw std::runtime_error("could not plant an instance of " + render_pattern(target));
}

}  // namespace

std::vector<Record> generate_planted_stream(const EventSchema& schema, const std::vector<Pattern>& targets,
                                            const PlantingOptions& o) {
  schema.validate();
  if (!(o.value_hi > o.value_lo)) throw std::invalid_argument("value range is empty");
  if (!(o.mean_gap > 0.0)) throw std::invalid_argument("mean gap must be positive");
  for (const auto& t : targets) {
    validate_pattern(t, schema);
    if (t.has_holes()) throw std::invalid_argument("targets must not contain holes");
  }
  nn::Rng rng(o.seed);
  std::exponential_distribution<double> gap(1.0 / o.mean_gap);
  std::bernoulli_distribution plant(o.plant_rate);
  std::vector<Record> out;
  double ts = 0.0;
  while (out.size() < o.rows) {
    if (!targets.empty() && plant(rng)) {
      const auto& t = targets[std::uniform_int_distribution<std::size_t>(0, targets.size() - 1)(rng)];
      auto recs = instance(schema, t, o, rng);
      // keep the instance inside its time window
      const double step = std::min(o.mean_gap, t.within_seconds / static_cast<double>(recs.size() + 1));
      for (auto& r : recs) {
        if (out.size() == o.rows) break;
        ts += step;
        r.ts = ts;
        out.push_back(std::move(r));
      }
      continue;
    }
    ts += gap(rng) + 1e-3;
    out.push_back(random_record(schema, ts, o, rng));
  }
  return out;
}

Pattern random_mined_pattern(const EventSchema& schema, std::size_t max_len, std::size_t max_conds,
                             double within_seconds, double value_lo, double value_hi, nn::Rng& rng) {
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  Pattern p;
  p.within_seconds = within_seconds;
  const std::size_t n = 1 + pick(max_len);
  for (std::size_t i = 0; i < n; ++i) {
    PatternEvent ev{schema.event_types[pick(schema.event_types.size())], default_alias(i), {}};
    const std::size_t k = pick(max_conds + 1);
    for (std::size_t j = 0; j < k; ++j) {
      Condition c{schema.attributes[pick(schema.attributes.size())], schema.operators[pick(schema.operators.size())], {}};
      if (i > 0 && std::bernoulli_distribution(0.6)(rng)) {
        c.target = EventRef{pick(i)};
      } else {
        c.target = Constant{std::round(uniform(rng, value_lo, value_hi))};
      }
      ev.conditions.push_back(c);
    }
    p.events.push_back(std::move(ev));
  }
  return p;
}

namespace {

// One random edit of a target that keeps the pattern valid.
Pattern mutate(const Pattern& target, const EventSchema& schema, std::size_t max_len, std::size_t max_conds,
               nn::Rng& rng) {
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  Pattern p = normalize_references(target);
  for (int attempt = 0; attempt < 100; ++attempt) {
    Pattern q = p;
    switch (pick(5)) {
      case 0:  // change an event type
        q.events[pick(q.size())].event_type = schema.event_types[pick(schema.event_types.size())];
        break;
      case 1: {  // drop a condition
        auto& ev = q.events[pick(q.size())];
        if (!ev.conditions.empty()) ev.conditions.erase(ev.conditions.begin() + static_cast<long>(pick(ev.conditions.size())));
        break;
      }
      case 2: {  // change an operator
        auto& ev = q.events[pick(q.size())];
        if (!ev.conditions.empty()) ev.conditions[pick(ev.conditions.size())].op = schema.operators[pick(schema.operators.size())];
        break;
      }
      case 3:  // append an event
        if (q.size() < max_len) q.events.push_back({schema.event_types[pick(schema.event_types.size())], default_alias(q.size()), {}});
        break;
      case 4: {  // drop the last event and any references to it
        if (q.size() < 2) break;
        q.events.pop_back();
        break;
      }
    }
    try {
      validate_pattern(q, schema, {max_len, max_conds});
      if (!(q == p)) return q;
    } catch (const PatternError&) {
    }
  }
  return p;
}

}  // namespace

std::vector<LabeledPattern> make_labeled_set(const EventSchema& schema, const GroundTruth& truth, std::size_t max_len,
                                             std::size_t max_conds, double within_seconds, std::size_t count,
                                             nn::Rng& rng) {
  std::vector<LabeledPattern> out;
  std::set<std::string> seen;
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > 100 * count + 1000) throw std::runtime_error("could not generate enough distinct patterns");
    Pattern p;
    if (attempts % 2 == 0) {
      p = random_mined_pattern(schema, max_len, max_conds, within_seconds, 0.0, 10.0, rng);
    } else {
      const auto& t = truth.targets()[std::uniform_int_distribution<std::size_t>(0, truth.targets().size() - 1)(rng)];
      p = mutate(t, schema, max_len, max_conds, rng);
      p.within_seconds = within_seconds;
    }
    if (!seen.insert(render_pattern(p)).second) continue;
    out.push_back({p, truth.rate(p)});
  }
  return out;
}

EventSchema constant_benchmark_schema() { return {{"B", "C"}, {"value"}, {CmpOp::Eq}}; }

std::vector<Record> planted_constant_stream(std::size_t pairs, double peak, double spread, double lo, double hi,
                                            std::uint64_t seed) {
  nn::Rng rng(seed);
  std::normal_distribution<double> hill(peak, spread);
  std::vector<Record> out;
  for (std::size_t i = 0; i < pairs; ++i) {
    const double t = 2.0 * static_cast<double>(i);
    out.push_back({t, 0, {uniform(rng, lo, hi)}});
    out.push_back({t + 1.0, 1, {std::clamp(hill(rng), lo, hi)}});
  }
  return out;
}

}  // namespace cepminer
