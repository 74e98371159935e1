#include "cepminer/pattern.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_set>

namespace cepminer {

namespace {

constexpr std::pair<CmpOp, std::string_view> kOps[] = {
    {CmpOp::Lt, "<"}, {CmpOp::Gt, ">"}, {CmpOp::Eq, "="}, {CmpOp::Ne, "!="}, {CmpOp::Le, "<="}, {CmpOp::Ge, ">="},
};

template <typename T>
void require_unique(const std::vector<T>& items, const char* what) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      if (items[i] == items[j]) throw std::invalid_argument(std::string("duplicate entry in ") + what);
    }
  }
}

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  auto alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
  if (!alpha(s[0])) return false;
  return std::all_of(s.begin() + 1, s.end(), [&](char c) { return alpha(c) || (c >= '0' && c <= '9'); });
}

}  // namespace

std::string_view op_symbol(CmpOp op) {
  for (const auto& [o, s] : kOps) {
    if (o == op) return s;
  }
  return "?";
}

std::optional<CmpOp> op_from_symbol(std::string_view sym) {
  for (const auto& [o, s] : kOps) {
    if (s == sym) return o;
  }
  return std::nullopt;
}

CmpOp mirror(CmpOp op) {
  switch (op) {
    case CmpOp::Lt: return CmpOp::Gt;
    case CmpOp::Gt: return CmpOp::Lt;
    case CmpOp::Le: return CmpOp::Ge;
    case CmpOp::Ge: return CmpOp::Le;
    default: return op;
  }
}

void EventSchema::validate() const {
  if (event_types.empty()) throw std::invalid_argument("schema needs at least one event type");
  if (attributes.empty()) throw std::invalid_argument("schema needs at least one attribute");
  if (operators.empty()) throw std::invalid_argument("schema needs at least one operator");
  require_unique(event_types, "event types");
  require_unique(attributes, "attributes");
  require_unique(operators, "operators");
  for (const auto& n : event_types) {
    if (!is_identifier(n)) throw std::invalid_argument("event type is not an identifier: '" + n + "'");
  }
  for (const auto& n : attributes) {
    if (!is_identifier(n)) throw std::invalid_argument("attribute is not an identifier: '" + n + "'");
  }
}

std::optional<std::size_t> EventSchema::type_index(std::string_view name) const {
  for (std::size_t i = 0; i < event_types.size(); ++i) {
    if (event_types[i] == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> EventSchema::attribute_index(std::string_view name) const {
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    if (attributes[i] == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> EventSchema::operator_index(CmpOp op) const {
  for (std::size_t i = 0; i < operators.size(); ++i) {
    if (operators[i] == op) return i;
  }
  return std::nullopt;
}

void MiningConfig::validate() const {
  schema.validate();
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  if (max_conds < 1) throw std::invalid_argument("max_conds must be >= 1");
  if (!(within_seconds > 0.0) || !std::isfinite(within_seconds)) {
    throw std::invalid_argument("within_seconds must be positive");
  }
  if (scale < 2) throw std::invalid_argument("scale must be >= 2");
  if (jump_interval < 1) throw std::invalid_argument("jump_interval must be >= 1");
  if (window_len < 1) throw std::invalid_argument("window_len must be >= 1");
}

bool Pattern::has_holes() const { return !hole_ids().empty(); }

std::vector<int> Pattern::hole_ids() const {
  std::vector<int> ids;
  for (const auto& ev : events) {
    for (const auto& c : ev.conditions) {
      if (const auto* h = std::get_if<Hole>(&c.target)) ids.push_back(h->id);
    }
  }
  return ids;
}

std::size_t Pattern::condition_count() const {
  std::size_t n = 0;
  for (const auto& ev : events) n += ev.conditions.size();
  return n;
}

ParseError::ParseError(std::size_t position, const std::string& message)
    : PatternError("parse error at " + std::to_string(position) + ": " + message), position_(position) {}

std::string default_alias(std::size_t position) {
  if (position < 26) return std::string(1, static_cast<char>('a' + position));
  return "e" + std::to_string(position);
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void validate_pattern(const Pattern& p, const EventSchema& schema, PatternLimits limits) {
  if (p.events.empty()) throw PatternError("pattern has no events");
  if (limits.max_len && p.events.size() > limits.max_len) {
    throw PatternError("pattern has " + std::to_string(p.events.size()) + " events, limit is " +
                       std::to_string(limits.max_len));
  }
  if (!(p.within_seconds > 0.0) || !std::isfinite(p.within_seconds)) {
    throw PatternError("time window must be a positive number of seconds");
  }
  std::set<std::string> aliases;
  std::set<int> holes;
  for (std::size_t i = 0; i < p.events.size(); ++i) {
    const auto& ev = p.events[i];
    if (!schema.type_index(ev.event_type)) throw PatternError("unknown event type '" + ev.event_type + "'");
    if (!is_identifier(ev.alias)) throw PatternError("invalid alias '" + ev.alias + "'");
    if (!aliases.insert(ev.alias).second) throw PatternError("duplicate alias '" + ev.alias + "'");
    for (const auto& c : ev.conditions) {
      if (!schema.attribute_index(c.attribute)) throw PatternError("unknown attribute '" + c.attribute + "'");
      if (!schema.operator_index(c.op)) {
        throw PatternError("operator '" + std::string(op_symbol(c.op)) + "' is not in the schema");
      }
      if (const auto* r = std::get_if<EventRef>(&c.target)) {
        if (r->index >= p.events.size()) throw PatternError("condition references a missing event");
        if (r->index == i) throw PatternError("condition compares an event with itself");
      } else if (const auto* k = std::get_if<Constant>(&c.target)) {
        if (!std::isfinite(k->value)) throw PatternError("constant is not finite");
      } else if (const auto* h = std::get_if<Hole>(&c.target)) {
        if (!holes.insert(h->id).second) throw PatternError("duplicate hole ?" + std::to_string(h->id));
      }
    }
  }
  if (limits.max_conds) {
    // A cross-event condition belongs to the later of its two events.
    const Pattern n = normalize_references(p);
    for (const auto& ev : n.events) {
      if (ev.conditions.size() > limits.max_conds) {
        throw PatternError("event '" + ev.alias + "' carries " + std::to_string(ev.conditions.size()) +
                           " conditions (counting references from earlier events), limit is " +
                           std::to_string(limits.max_conds));
      }
    }
  }
}

Pattern normalize_references(const Pattern& p) {
  Pattern out;
  out.within_seconds = p.within_seconds;
  out.events.reserve(p.events.size());
  for (const auto& ev : p.events) out.events.push_back({ev.event_type, ev.alias, {}});
  std::vector<std::vector<Condition>> moved(p.events.size());
  for (std::size_t i = 0; i < p.events.size(); ++i) {
    for (const auto& c : p.events[i].conditions) {
      const auto* r = std::get_if<EventRef>(&c.target);
      if (r && r->index > i) {
        moved[r->index].push_back({c.attribute, mirror(c.op), EventRef{i}});
      } else {
        out.events[i].conditions.push_back(c);
      }
    }
  }
  for (std::size_t i = 0; i < moved.size(); ++i) {
    for (auto& c : moved[i]) out.events[i].conditions.push_back(std::move(c));
  }
  return out;
}

Pattern substitute_holes(const Pattern& p, const std::vector<double>& values) {
  Pattern out = p;
  std::size_t k = 0;
  for (auto& ev : out.events) {
    for (auto& c : ev.conditions) {
      if (std::holds_alternative<Hole>(c.target)) {
        if (k >= values.size()) throw std::invalid_argument("not enough values for the pattern's holes");
        c.target = Constant{values[k++]};
      }
    }
  }
  if (k != values.size()) throw std::invalid_argument("more values than holes");
  return out;
}

// --- sizes -----------------------------------------------------------------

namespace {

using u128 = unsigned __int128;

u128 checked_mul(u128 a, u128 b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
    throw std::overflow_error("action space size exceeds 64 bits");
  }
  return a * b;
}

}  // namespace

std::uint64_t action_space_size(const EventSchema& schema, std::size_t max_len, std::size_t max_conds) {
  if (schema.event_types.empty() || schema.attributes.empty() || schema.operators.empty() || max_len == 0) {
    throw std::invalid_argument("action_space_size needs non-empty E, A, O and L >= 1");
  }
  const u128 n = checked_mul(checked_mul(schema.attributes.size(), schema.operators.size()), max_len);
  u128 binom = 1;
  u128 sum = 1;
  for (std::size_t i = 1; i <= max_conds && i <= n; ++i) {
    // binom * (n - i + 1) is always divisible by i.
    binom = checked_mul(binom, n - i + 1) / i;
    sum += binom;
    if (sum > std::numeric_limits<std::uint64_t>::max()) throw std::overflow_error("action space size exceeds 64 bits");
  }
  const u128 total = checked_mul(sum, schema.event_types.size());
  return static_cast<std::uint64_t>(total);
}

double pattern_space_size(const EventSchema& schema, std::size_t max_len, std::size_t max_conds) {
  const double n = static_cast<double>(schema.attributes.size() * schema.operators.size() * std::max<std::size_t>(max_len, 1));
  double binom = 1.0, sum = 1.0;
  for (std::size_t i = 1; i <= max_conds && static_cast<double>(i) <= n; ++i) {
    binom = binom * (n - static_cast<double>(i) + 1.0) / static_cast<double>(i);
    sum += binom;
  }
  const double actions = sum * static_cast<double>(schema.event_types.size());
  double total = 0.0, power = 1.0;
  for (std::size_t i = 0; i <= max_len; ++i) {
    total += power;
    power *= actions;
  }
  return total;
}

// --- actions ---------------------------------------------------------------

std::size_t condition_action_count(const EventSchema& schema, std::size_t max_len) {
  return schema.attributes.size() * schema.operators.size() * max_len;
}

ActionSet enumerate_actions(const EventSchema& schema, std::size_t max_len) {
  ActionSet set;
  for (std::size_t t = 0; t < schema.event_types.size(); ++t) set.event_actions.push_back({t});
  set.event_actions.push_back({std::nullopt});
  for (std::size_t a = 0; a < schema.attributes.size(); ++a) {
    for (std::size_t o = 0; o < schema.operators.size(); ++o) {
      set.condition_actions.push_back({false, a, o, std::nullopt});
      for (std::size_t k = 0; k + 1 < max_len; ++k) set.condition_actions.push_back({false, a, o, k});
    }
  }
  set.condition_actions.push_back({true, 0, 0, std::nullopt});
  return set;
}

std::size_t condition_action_index(const EventSchema& schema, std::size_t max_len, const ConditionAction& a) {
  if (a.nop) return condition_action_count(schema, max_len);
  const std::size_t target = a.event_slot ? *a.event_slot + 1 : 0;
  return (a.attribute * schema.operators.size() + a.op) * max_len + target;
}

std::size_t condition_action_index(const EventSchema& schema, std::size_t max_len, const Condition& c,
                                   std::size_t owner) {
  ConditionAction a;
  const auto attr = schema.attribute_index(c.attribute);
  const auto op = schema.operator_index(c.op);
  if (!attr || !op) throw PatternError("condition not expressible in schema");
  a.attribute = *attr;
  a.op = *op;
  if (const auto* r = std::get_if<EventRef>(&c.target)) {
    if (r->index >= owner) throw PatternError("condition must reference an earlier event");
    if (r->index + 1 >= max_len) throw PatternError("event reference outside max_len");
    a.event_slot = r->index;
  }
  return condition_action_index(schema, max_len, a);
}

}  // namespace cepminer
