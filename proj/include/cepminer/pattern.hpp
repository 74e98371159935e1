#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cepminer {

enum class CmpOp { Lt, Gt, Eq, Ne, Le, Ge };

std::string_view op_symbol(CmpOp op);
std::optional<CmpOp> op_from_symbol(std::string_view sym);
// Operator seen from the other operand: a < b  <=>  b > a.
CmpOp mirror(CmpOp op);

// The sets E, A and O a mining run works over.
struct EventSchema {
  std::vector<std::string> event_types;
  std::vector<std::string> attributes;
  std::vector<CmpOp> operators;

  // Throws std::invalid_argument on duplicates or empty sets.
  void validate() const;

  std::optional<std::size_t> type_index(std::string_view name) const;
  std::optional<std::size_t> attribute_index(std::string_view name) const;
  std::optional<std::size_t> operator_index(CmpOp op) const;

  bool operator==(const EventSchema&) const = default;
};

struct MiningConfig {
  EventSchema schema;
  std::size_t max_len = 3;
  std::size_t max_conds = 2;
  double within_seconds = 10.0;
  int scale = 50;
  std::size_t jump_interval = 1;
  std::size_t window_len = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EventRef {
  std::size_t index = 0;
  bool operator==(const EventRef&) const = default;
};
struct Constant {
  double value = 0.0;
  bool operator==(const Constant&) const = default;
};
struct Hole {
  int id = 0;
  bool operator==(const Hole&) const = default;
};

using ConditionTarget = std::variant<EventRef, Constant, Hole>;

struct Condition {
  std::string attribute;
  CmpOp op = CmpOp::Eq;
  ConditionTarget target;
  bool operator==(const Condition&) const = default;
};

struct PatternEvent {
  std::string event_type;
  std::string alias;
  std::vector<Condition> conditions;
  bool operator==(const PatternEvent&) const = default;
};

// A SEQ pattern over typed events, constrained to a time window. A pattern
// holding any Hole is a formula and cannot be matched until completed.
struct Pattern {
  std::vector<PatternEvent> events;
  double within_seconds = 1.0;

  bool empty() const { return events.empty(); }
  std::size_t size() const { return events.size(); }
  bool has_holes() const;
  std::vector<int> hole_ids() const;
  std::size_t condition_count() const;

  bool operator==(const Pattern&) const = default;
};

struct PatternLimits {
  std::size_t max_len = 0;    // 0 = unbounded
  std::size_t max_conds = 0;  // 0 = unbounded
};

class PatternError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public PatternError {
 public:
  ParseError(std::size_t position, const std::string& message);
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

// Checks every structural invariant of a pattern against a schema.
void validate_pattern(const Pattern& p, const EventSchema& schema, PatternLimits limits = {});

Pattern parse_pattern(std::string_view text, const EventSchema& schema, PatternLimits limits = {});
std::string render_pattern(const Pattern& p);
std::string format_number(double v);

// Default alias for the event at a position: a, b, ..., z, e26, e27, ...
std::string default_alias(std::size_t position);

// Rewrites conditions that point at a later event so that they live on
// that later event with the mirrored operator. The matched set is unchanged.
Pattern normalize_references(const Pattern& p);

// Replaces every hole by the given value (indexed by hole id order in hole_ids()).
Pattern substitute_holes(const Pattern& p, const std::vector<double>& values);

// --- combinatorial sizes -------------------------------------------------

// |E| * sum_{i=0}^{max_conds} C(|A||O|L, i). Throws std::overflow_error.
std::uint64_t action_space_size(const EventSchema& schema, std::size_t max_len, std::size_t max_conds);
// sum_{i=0}^{L} |Action-Space|^i; +inf when out of double range.
double pattern_space_size(const EventSchema& schema, std::size_t max_len, std::size_t max_conds);

// --- action indexing ------------------------------------------------------

struct EventAction {
  std::optional<std::size_t> type;  // nullopt = nop
};

struct ConditionAction {
  // All fields unset for nop.
  bool nop = false;
  std::size_t attribute = 0;
  std::size_t op = 0;  // index into schema.operators
  // nullopt = constant target, otherwise the k-th previously selected event.
  std::optional<std::size_t> event_slot;
  bool operator==(const ConditionAction&) const = default;
};

struct ActionSet {
  std::vector<EventAction> event_actions;
  std::vector<ConditionAction> condition_actions;

  std::size_t event_nop() const { return event_actions.size() - 1; }
  std::size_t condition_nop() const { return condition_actions.size() - 1; }
};

// Order: event types then nop; conditions attribute-major, then operator,
// then target (constant first, then event slots 0..L-2), then nop.
ActionSet enumerate_actions(const EventSchema& schema, std::size_t max_len);

std::size_t condition_action_count(const EventSchema& schema, std::size_t max_len);
std::size_t condition_action_index(const EventSchema& schema, std::size_t max_len, const ConditionAction& a);

// Index of an existing condition of the event at `owner` (references must
// point backwards; see normalize_references).
std::size_t condition_action_index(const EventSchema& schema, std::size_t max_len, const Condition& c,
                                   std::size_t owner);

}  // namespace cepminer
