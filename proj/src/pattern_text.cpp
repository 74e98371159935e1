#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <set>

#include "cepminer/pattern.hpp"

namespace cepminer {

namespace {

enum class Tok { Ident, Number, LParen, RParen, Comma, Dot, Question, Op, End };

struct Token {
  Tok kind;
  std::string_view text;
  std::size_t pos;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    const std::size_t start = pos_;
    if (pos_ >= src_.size()) return {Tok::End, {}, start};
    const char c = src_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
      return {Tok::Ident, src_.substr(start, pos_ - start), start};
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || ((c == '-' || c == '+' || c == '.') && starts_number(pos_ + 1))) {
      return lex_number();
    }
    ++pos_;
    switch (c) {
      case '(': return {Tok::LParen, src_.substr(start, 1), start};
      case ')': return {Tok::RParen, src_.substr(start, 1), start};
      case ',': return {Tok::Comma, src_.substr(start, 1), start};
      case '.': return {Tok::Dot, src_.substr(start, 1), start};
      case '?': return {Tok::Question, src_.substr(start, 1), start};
      case '<':
      case '>':
      case '!':
        if (pos_ < src_.size() && src_[pos_] == '=') ++pos_;
        if (c == '!' && pos_ == start + 1) throw ParseError(start, "expected '!='");
        return {Tok::Op, src_.substr(start, pos_ - start), start};
      case '=': return {Tok::Op, src_.substr(start, 1), start};
      default: throw ParseError(start, std::string("unexpected character '") + c + "'");
    }
  }

 private:
  bool starts_number(std::size_t at) const {
    if (at >= src_.size()) return false;
    if (std::isdigit(static_cast<unsigned char>(src_[at]))) return true;
    return src_[at] == '.' && at + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[at + 1]));
  }

  Token lex_number() {
    const std::size_t start = pos_;
    auto digit = [&](std::size_t i) { return i < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i])); };
    if (src_[pos_] == '-' || src_[pos_] == '+') ++pos_;
    while (digit(pos_)) ++pos_;
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      while (digit(pos_)) ++pos_;
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
      if (digit(p)) {
        pos_ = p;
        while (digit(pos_)) ++pos_;
      }
    }
    return {Tok::Number, src_.substr(start, pos_ - start), start};
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

bool is_keyword(std::string_view s) {
  for (std::string_view kw : {"events", "seq", "where", "within", "true", "and"}) {
    if (iequals(s, kw)) return true;
  }
  return false;
}

double to_double(const Token& t) {
  std::string_view s = t.text;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParseError(t.pos, "bad number '" + std::string(t.text) + "'");
  return v;
}

class Parser {
 public:
  Parser(std::string_view text, const EventSchema& schema) : lex_(text), schema_(schema) { advance(); }

  Pattern parse() {
    keyword("EVENTS");
    keyword("SEQ");
    expect(Tok::LParen, "'('");
    parse_event();
    while (cur_.kind == Tok::Comma) {
      advance();
      parse_event();
    }
    expect(Tok::RParen, "')'");
    keyword("WHERE");
    if (cur_.kind == Tok::Ident && iequals(cur_.text, "true")) {
      advance();
    } else {
      parse_condition();
      while (cur_.kind == Tok::Ident && iequals(cur_.text, "and")) {
        advance();
        parse_condition();
      }
    }
    keyword("WITHIN");
    if (cur_.kind != Tok::Number) fail("expected time window length");
    const Token num = cur_;
    pattern_.within_seconds = to_double(num);
    advance();
    if (cur_.kind != Tok::Ident || cur_.text != "s") fail("expected 's' after time window length");
    advance();
    if (cur_.kind != Tok::End) fail("trailing input");
    if (!(pattern_.within_seconds > 0.0)) throw ParseError(num.pos, "time window must be positive");
    return std::move(pattern_);
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(cur_.pos, msg); }

  void advance() { cur_ = lex_.next(); }

  void keyword(std::string_view kw) {
    if (cur_.kind != Tok::Ident || !iequals(cur_.text, kw)) fail("expected " + std::string(kw));
    advance();
  }

  Token expect(Tok kind, const char* what) {
    if (cur_.kind != kind) fail(std::string("expected ") + what);
    Token t = cur_;
    advance();
    return t;
  }

  void parse_event() {
    const Token type = expect(Tok::Ident, "event type");
    const Token alias = expect(Tok::Ident, "event alias");
    if (!schema_.type_index(type.text)) throw ParseError(type.pos, "unknown event type '" + std::string(type.text) + "'");
    if (is_keyword(alias.text)) throw ParseError(alias.pos, "alias may not be a keyword");
    const std::string name(alias.text);
    if (aliases_.count(name)) throw ParseError(alias.pos, "duplicate alias '" + name + "'");
    aliases_[name] = pattern_.events.size();
    pattern_.events.push_back({std::string(type.text), name, {}});
  }

  std::pair<std::size_t, std::string> parse_attr_ref() {
    const Token alias = expect(Tok::Ident, "alias");
    auto it = aliases_.find(std::string(alias.text));
    if (it == aliases_.end()) throw ParseError(alias.pos, "unknown alias '" + std::string(alias.text) + "'");
    expect(Tok::Dot, "'.'");
    const Token attr = expect(Tok::Ident, "attribute");
    if (!schema_.attribute_index(attr.text)) throw ParseError(attr.pos, "unknown attribute '" + std::string(attr.text) + "'");
    return {it->second, std::string(attr.text)};
  }

  void parse_condition() {
    const std::size_t start = cur_.pos;
    auto [owner, attr] = parse_attr_ref();
    const Token op_tok = expect(Tok::Op, "comparison operator");
    const auto op = op_from_symbol(op_tok.text);
    if (!op || !schema_.operator_index(*op)) {
      throw ParseError(op_tok.pos, "operator '" + std::string(op_tok.text) + "' is not in the schema");
    }
    Condition cond{attr, *op, Constant{}};
    if (cur_.kind == Tok::Number) {
      cond.target = Constant{to_double(cur_)};
      advance();
    } else if (cur_.kind == Tok::Question) {
      advance();
      const Token id = expect(Tok::Number, "hole number");
      int v = 0;
      auto res = std::from_chars(id.text.data(), id.text.data() + id.text.size(), v);
      if (res.ec != std::errc() || res.ptr != id.text.data() + id.text.size() || v < 0) {
        throw ParseError(id.pos, "hole number must be a non-negative integer");
      }
      if (!holes_.insert(v).second) throw ParseError(id.pos, "duplicate hole ?" + std::to_string(v));
      cond.target = Hole{v};
    } else {
      const std::size_t rhs_pos = cur_.pos;
      auto [other, other_attr] = parse_attr_ref();
      if (other_attr != attr) {
        throw ParseError(rhs_pos, "cross-event conditions must compare the same attribute ('" + attr + "' vs '" +
                                      other_attr + "')");
      }
      if (other == owner) throw ParseError(start, "condition compares an event with itself");
      cond.target = EventRef{other};
    }
    pattern_.events[owner].conditions.push_back(std::move(cond));
  }

  Lexer lex_;
  const EventSchema& schema_;
  Token cur_{Tok::End, {}, 0};
  Pattern pattern_;
  std::map<std::string, std::size_t> aliases_;
  std::set<int> holes_;
};

}  // namespace

Pattern parse_pattern(std::string_view text, const EventSchema& schema, PatternLimits limits) {
  Pattern p = Parser(text, schema).parse();
  validate_pattern(p, schema, limits);
  return p;
}

std::string render_pattern(const Pattern& p) {
  std::string out = "EVENTS SEQ(";
  for (std::size_t i = 0; i < p.events.size(); ++i) {
    if (i) out += ", ";
    out += p.events[i].event_type;
    out += ' ';
    out += p.events[i].alias;
  }
  out += ") WHERE ";
  bool first = true;
  for (const auto& ev : p.events) {
    for (const auto& c : ev.conditions) {
      if (!first) out += " AND ";
      first = false;
      out += ev.alias + "." + c.attribute + " " + std::string(op_symbol(c.op)) + " ";
      if (const auto* r = std::get_if<EventRef>(&c.target)) {
        out += (r->index < p.events.size() ? p.events[r->index].alias : "?") + "." + c.attribute;
      } else if (const auto* k = std::get_if<Constant>(&c.target)) {
        out += format_number(k->value);
      } else {
        out += "?" + std::to_string(std::get<Hole>(c.target).id);
      }
    }
  }
  if (first) out += "true";
  out += " WITHIN " + format_number(p.within_seconds) + "s";
  return out;
}

}  // namespace cepminer
