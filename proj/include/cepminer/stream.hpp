#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cepminer/pattern.hpp"

namespace cepminer {

// One timestamped event. Attributes are indexed by schema attribute order;
// an empty optional means the attribute is missing on this record.
struct Record {
  double ts = 0.0;
  std::size_t type = 0;
  std::vector<std::optional<double>> attrs;

  std::optional<double> attr(std::size_t a) const { return a < attrs.size() ? attrs[a] : std::nullopt; }
};

struct Window {
  std::size_t index = 0;
  std::vector<Record> records;
};

class StreamError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<Record> read_stream(std::istream& in, const EventSchema& schema);
std::vector<Record> read_stream(const std::filesystem::path& path, const EventSchema& schema);

// Schema implied by a CSV file: attribute columns from the header, event
// types in order of first appearance, every comparison operator.
EventSchema infer_schema(std::istream& in);
EventSchema infer_schema(const std::filesystem::path& path);

void write_stream(std::ostream& out, std::span<const Record> records, const EventSchema& schema);

// Tumbling window i: records [i*len, (i+1)*len). The last window may be short.
std::optional<Window> window_at(std::span<const Record> stream, std::size_t i, std::size_t window_len);
std::size_t window_count(std::size_t stream_size, std::size_t window_len);

// Running per-attribute normalizer: max(|value|, 1) over everything observed.
class AttributeScale {
 public:
  explicit AttributeScale(std::size_t attribute_count) : scale_(attribute_count, 1.0) {}

  void observe(const Record& r);
  void observe(const Window& w);
  double operator()(std::size_t attribute) const { return scale_.at(attribute); }
  const std::vector<double>& values() const { return scale_; }

 private:
  std::vector<double> scale_;
};

std::size_t window_embedding_size(const EventSchema& schema);
std::size_t pattern_encoding_size(const EventSchema& schema, std::size_t max_len, std::size_t max_conds);
std::size_t state_size(const EventSchema& schema, std::size_t max_len, std::size_t max_conds);

// Per type: count fraction; per (type, attribute): mean, min, max divided by
// the running attribute scale. Missing attributes contribute zero.
Eigen::VectorXd embed_window(const Window& w, const EventSchema& schema, const AttributeScale& scale);

// L slots, each a one-hot over |E|+1 (last = empty) followed by max_conds
// one-hots over the |C|+1 condition actions (last = empty).
Eigen::VectorXd encode_partial_pattern(const Pattern& p, const EventSchema& schema, std::size_t max_len,
                                       std::size_t max_conds);

// Median of an attribute over a window; nullopt if never present.
std::optional<double> attribute_median(const Window& w, std::size_t attribute);

}  // namespace cepminer
