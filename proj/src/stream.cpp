#include "cepminer/stream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

namespace cepminer {

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_real(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw StreamError("line " + std::to_string(line) + ": " + msg);
}

}  // namespace

std::vector<Record> read_stream(std::istream& in, const EventSchema& schema) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw StreamError("empty stream: missing header");
  ++line_no;
  const auto header = split(trim(line));
  if (header.size() < 2 || trim(header[0]) != "ts" || trim(header[1]) != "type") {
    fail(line_no, "header must start with 'ts,type'");
  }
  std::vector<std::size_t> column_attr;
  for (std::size_t c = 2; c < header.size(); ++c) {
    const auto name = trim(header[c]);
    const auto a = schema.attribute_index(name);
    if (!a) fail(line_no, "unknown attribute column '" + std::string(name) + "'");
    column_attr.push_back(*a);
  }

  std::vector<Record> out;
  double last_ts = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto cells = split(body);
    if (cells.size() != header.size()) {
      fail(line_no, "expected " + std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
    }
    Record r;
    const auto ts = parse_real(trim(cells[0]));
    if (!ts) fail(line_no, "timestamp is not a number");
    r.ts = *ts;
    if (r.ts < last_ts) fail(line_no, "timestamp goes backwards");
    last_ts = r.ts;
    const auto type = trim(cells[1]);
    const auto t = schema.type_index(type);
    if (!t) fail(line_no, "unknown event type '" + std::string(type) + "'");
    r.type = *t;
    r.attrs.assign(schema.attributes.size(), std::nullopt);
    for (std::size_t c = 2; c < cells.size(); ++c) {
      const auto cell = trim(cells[c]);
      if (cell.empty()) continue;
      const auto v = parse_real(cell);
      if (!v) fail(line_no, "attribute '" + std::string(trim(header[c])) + "' is not numeric: '" + std::string(cell) + "'");
      r.attrs[column_attr[c - 2]] = *v;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<Record> read_stream(const std::filesystem::path& path, const EventSchema& schema) {
  std::ifstream in(path);
  if (!in) throw StreamError("cannot open " + path.string());
  return read_stream(in, schema);
}

EventSchema infer_schema(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw StreamError("empty stream: missing header");
  const auto header = split(trim(line));
  if (header.size() < 2 || trim(header[0]) != "ts" || trim(header[1]) != "type") {
    fail(1, "header must start with 'ts,type'");
  }
  EventSchema s;
  for (std::size_t c = 2; c < header.size(); ++c) s.attributes.emplace_back(trim(header[c]));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto cells = split(body);
    if (cells.size() < 2) fail(line_no, "missing event type");
    const std::string type(trim(cells[1]));
    if (!s.type_index(type)) s.event_types.push_back(type);
  }
  s.operators = {CmpOp::Lt, CmpOp::Gt, CmpOp::Eq, CmpOp::Ne, CmpOp::Le, CmpOp::Ge};
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw StreamError(std::string("cannot infer a schema: ") + e.what());
  }
  return s;
}

EventSchema infer_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StreamError("cannot open " + path.string());
  return infer_schema(in);
}

void write_stream(std::ostream& out, std::span<const Record> records, const EventSchema& schema) {
  out << "ts,type";
  for (const auto& a : schema.attributes) out << ',' << a;
  out << '\n';
  for (const auto& r : records) {
    out << format_number(r.ts) << ',' << schema.event_types.at(r.type);
    for (std::size_t a = 0; a < schema.attributes.size(); ++a) {
      out << ',';
      if (const auto v = r.attr(a)) out << format_number(*v);
    }
    out << '\n';
  }
}

std::size_t window_count(std::size_t stream_size, std::size_t window_len) {
  return window_len == 0 ? 0 : (stream_size + window_len - 1) / window_len;
}

std::optional<Window> window_at(std::span<const Record> stream, std::size_t i, std::size_t window_len) {
  if (window_len == 0 || i >= window_count(stream.size(), window_len)) return std::nullopt;
  const std::size_t begin = i * window_len;
  const std::size_t end = std::min(stream.size(), begin + window_len);
  return Window{i, std::vector<Record>(stream.begin() + static_cast<std::ptrdiff_t>(begin),
                                       stream.begin() + static_cast<std::ptrdiff_t>(end))};
}

void AttributeScale::observe(const Record& r) {
  for (std::size_t a = 0; a < scale_.size(); ++a) {
    if (const auto v = r.attr(a)) scale_[a] = std::max(scale_[a], std::abs(*v));
  }
}

void AttributeScale::observe(const Window& w) {
  for (const auto& r : w.records) observe(r);
}

std::size_t window_embedding_size(const EventSchema& schema) {
  const std::size_t e = schema.event_types.size();
  return e + 3 * e * schema.attributes.size();
}

std::size_t pattern_encoding_size(const EventSchema& schema, std::size_t max_len, std::size_t max_conds) {
  const std::size_t slot = (schema.event_types.size() + 1) + max_conds * (condition_action_count(schema, max_len) + 1);
  return max_len * slot;
}

std::size_t state_size(const EventSchema& schema, std::size_t max_len, std::size_t max_conds) {
  return window_embedding_size(schema) + pattern_encoding_size(schema, max_len, max_conds);
}

Eigen::VectorXd embed_window(const Window& w, const EventSchema& schema, const AttributeScale& scale) {
  const std::size_t ne = schema.event_types.size();
  const std::size_t na = schema.attributes.size();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(window_embedding_size(schema)));
  if (w.records.empty()) return v;

  std::vector<double> count(ne, 0.0);
  std::vector<double> sum(ne * na, 0.0), lo(ne * na, 0.0), hi(ne * na, 0.0);
  std::vector<std::size_t> seen(ne * na, 0);
  for (const auto& r : w.records) {
    count[r.type] += 1.0;
    for (std::size_t a = 0; a < na; ++a) {
      const auto x = r.attr(a);
      if (!x) continue;
      const std::size_t k = r.type * na + a;
      if (seen[k] == 0) {
        lo[k] = hi[k] = *x;
      } else {
        lo[k] = std::min(lo[k], *x);
        hi[k] = std::max(hi[k], *x);
      }
      sum[k] += *x;
      ++seen[k];
    }
  }
  const double n = static_cast<double>(w.records.size());
  for (std::size_t t = 0; t < ne; ++t) v[static_cast<Eigen::Index>(t)] = count[t] / n;
  for (std::size_t t = 0; t < ne; ++t) {
    for (std::size_t a = 0; a < na; ++a) {
      const std::size_t k = t * na + a;
      if (seen[k] == 0) continue;
      const double s = scale(a);
      const auto base = static_cast<Eigen::Index>(ne + 3 * k);
      v[base] = sum[k] / static_cast<double>(seen[k]) / s;
      v[base + 1] = lo[k] / s;
      v[base + 2] = hi[k] / s;
    }
  }
  return v;
}

Eigen::VectorXd encode_partial_pattern(const Pattern& raw, const EventSchema& schema, std::size_t max_len,
                                       std::size_t max_conds) {
  if (raw.events.size() > max_len) throw PatternError("pattern longer than max_len");
  const Pattern p = normalize_references(raw);
  const std::size_t ne = schema.event_types.size();
  const std::size_t nc = condition_action_count(schema, max_len);
  const std::size_t slot = (ne + 1) + max_conds * (nc + 1);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(max_len * slot));
  for (std::size_t i = 0; i < max_len; ++i) {
    const std::size_t base = i * slot;
    if (i >= p.events.size()) {
      v[static_cast<Eigen::Index>(base + ne)] = 1.0;
      for (std::size_t j = 0; j < max_conds; ++j) v[static_cast<Eigen::Index>(base + ne + 1 + j * (nc + 1) + nc)] = 1.0;
      continue;
    }
    const auto& ev = p.events[i];
    const auto t = schema.type_index(ev.event_type);
    if (!t) throw PatternError("unknown event type '" + ev.event_type + "'");
    if (ev.conditions.size() > max_conds) throw PatternError("event '" + ev.alias + "' has more than " + std::to_string(max_conds) +
                                                          " conditions after normalization");
    v[static_cast<Eigen::Index>(base + *t)] = 1.0;
    for (std::size_t j = 0; j < max_conds; ++j) {
      const std::size_t idx = j < ev.conditions.size() ? condition_action_index(schema, max_len, ev.conditions[j], i) : nc;
      v[static_cast<Eigen::Index>(base + ne + 1 + j * (nc + 1) + idx)] = 1.0;
    }
  }
  return v;
}

std::optional<double> attribute_median(const Window& w, std::size_t attribute) {
  std::vector<double> xs;
  for (const auto& r : w.records) {
    if (const auto v = r.attr(attribute)) xs.push_back(*v);
  }
  if (xs.empty()) return std::nullopt;
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

}  // namespace cepminer
