#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medbt/dsl/lexer.hpp"
#include "medbt/validate.hpp"

namespace medbt::dsl {

struct ParseResult {
  std::optional<BehaviorTree> tree;
  std::vector<ParseDiagnostic> diagnostics;

  bool ok() const { return tree.has_value(); }

  bool has_errors() const
  {
    for (const auto& d : diagnostics) {
      if (d.severity == Severity::Error) return true;
    }
    return false;
  }

  std::string format_diagnostics() const
  {
    std::string s;
    for (const auto& d : diagnostics) s += d.format() + "\n";
    return s;
  }
};

class ParseError : public Error {
 public:
  ParseError(std::string what, std::vector<ParseDiagnostic> diags) : Error(std::move(what)), diagnostics(std::move(diags)) {}
  std::vector<ParseDiagnostic> diagnostics;
};

namespace detail {

inline bool is_key(std::string_view s)
{
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
  }
  return true;
}

/// Parses one node line. Errors are reported as diagnostics and make the
/// returned node empty.
class LineParser {
 public:
  LineParser(std::vector<Token> tokens, std::size_t line_no, std::size_t line_end, std::vector<ParseDiagnostic>& diags)
      : toks_(std::move(tokens)), line_(line_no), end_col_(line_end), diags_(diags)
  {
  }

  std::optional<Node> parse_node()
  {
    const Token& kw = toks_.front();
    pos_ = 1;
    Node n;
    const std::string& k = kw.text;
    if (kw.type != TokenType::Word) return fail_at(kw, "expected a node keyword");
    if (k == "root") n.kind = kind::Root{};
    else if (k == "sequence") n.kind = kind::Sequence{};
    else if (k == "selector") n.kind = kind::Selector{};
    else if (k == "recovery") n.kind = kind::Recovery{};
    else if (k == "parallel") {
      auto t = count("parallel threshold");
      if (!t) return std::nullopt;
      n.kind = kind::Parallel{*t};
    } else if (k == "retry") {
      auto t = count("retry limit");
      if (!t) return std::nullopt;
      n.kind = kind::Decorator{policy::RetryLimit{static_cast<std::uint32_t>(*t)}};
    } else if (k == "every") {
      auto key = expect_key("period key");
      if (!key) return std::nullopt;
      n.kind = kind::Decorator{policy::PeriodicTimer{*key}};
    } else if (k == "repeat-until") {
      auto p = predicate();
      if (!p) return std::nullopt;
      policy::RepeatUntil r{std::move(*p)};
      if (peek_word("max")) {
        ++pos_;
        auto m = count("iteration cap");
        if (!m) return std::nullopt;
        r.max_iterations = static_cast<std::uint32_t>(*m);
      }
      n.kind = kind::Decorator{std::move(r)};
    } else if (k == "action" || k == "query") {
      auto name = expect_name();
      if (!name) return std::nullopt;
      if (k == "action") n.kind = kind::Action{*name, {}};
      else n.kind = kind::Query{*name, std::nullopt};
    } else {
      return fail_at(kw, "unknown keyword '" + k + "'");
    }

    if (!tail(n)) return std::nullopt;

    if (auto* a = std::get_if<kind::Action>(&n.kind)) {
      while (peek_word("set")) {
        ++pos_;
        auto key = expect_key("blackboard key");
        if (!key) return std::nullopt;
        if (!expect_op("=")) return std::nullopt;
        auto v = literal();
        if (!v) return std::nullopt;
        a->effects.push_back({*key, *v});
      }
    } else if (auto* q = std::get_if<kind::Query>(&n.kind)) {
      if (peek_word("when")) {
        ++pos_;
        auto p = predicate();
        if (!p) return std::nullopt;
        q->condition = std::move(*p);
      }
    }
    if (pos_ < toks_.size()) return fail_at(toks_[pos_], "unexpected '" + toks_[pos_].text + "'");
    return n;
  }

  /// `meta <key> "<value>"`
  std::optional<std::pair<std::string, std::string>> parse_meta()
  {
    pos_ = 1;
    if (pos_ >= toks_.size() || toks_[pos_].type != TokenType::Word) return fail_end("expected a metadata key");
    std::string key = toks_[pos_].text;
    if (key != "name" && key != "version" && key != "source") {
      return fail_at(toks_[pos_], "unknown metadata key '" + key + "' (expected name, version or source)");
    }
    ++pos_;
    if (pos_ >= toks_.size() || toks_[pos_].type != TokenType::String) return fail_end("expected a quoted metadata value");
    std::string value = toks_[pos_].text;
    ++pos_;
    if (pos_ < toks_.size()) return fail_at(toks_[pos_], "unexpected '" + toks_[pos_].text + "'");
    return std::make_pair(key, value);
  }

  std::optional<Token> id_token;

 private:
  bool tail(Node& n)
  {
    bool have_label = false;
    while (pos_ < toks_.size()) {
      const Token& t = toks_[pos_];
      if (t.type == TokenType::Id) {
        if (id_token) {
          fail_at(t, "node id given twice");
          return false;
        }
        id_token = t;
        n.id = t.text;
      } else if (t.type == TokenType::String) {
        if (have_label) {
          fail_at(t, "label given twice");
          return false;
        }
        have_label = true;
        n.label = t.text;
      } else if (t.type == TokenType::Word && t.text == "approx") {
        if (n.approx) {
          fail_at(t, "approx given twice");
          return false;
        }
        n.approx = true;
      } else {
        break;
      }
      ++pos_;
    }
    return true;
  }

  std::optional<std::size_t> count(std::string_view what)
  {
    if (pos_ >= toks_.size()) return fail_end("expected " + std::string(what));
    const Token& t = toks_[pos_];
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (t.type != TokenType::Word || ec != std::errc{} || p != t.text.data() + t.text.size()) {
      return fail_at(t, "expected " + std::string(what) + " (a non-negative integer)");
    }
    ++pos_;
    return v;
  }

  std::optional<std::string> expect_key(std::string_view what)
  {
    if (pos_ >= toks_.size()) return fail_end("expected " + std::string(what));
    const Token& t = toks_[pos_];
    if (t.type != TokenType::Word || !is_key(t.text)) return fail_at(t, "expected " + std::string(what));
    ++pos_;
    return t.text;
  }

  std::optional<std::string> expect_name()
  {
    if (pos_ >= toks_.size()) return fail_end("expected a leaf name");
    const Token& t = toks_[pos_];
    if (t.type != TokenType::Word || !medbt::detail::is_identifier(t.text)) return fail_at(t, "expected a leaf name");
    ++pos_;
    return t.text;
  }

  bool expect_op(std::string_view op)
  {
    if (pos_ >= toks_.size()) {
      fail_end("expected '" + std::string(op) + "'");
      return false;
    }
    const Token& t = toks_[pos_];
    if (t.type != TokenType::Op || t.text != op) {
      fail_at(t, "expected '" + std::string(op) + "'");
      return false;
    }
    ++pos_;
    return true;
  }

  std::optional<Predicate> predicate()
  {
    auto key = expect_key("blackboard key");
    if (!key) return std::nullopt;
    if (pos_ >= toks_.size()) return fail_end("expected a comparison operator");
    const Token& t = toks_[pos_];
    auto op = t.type == TokenType::Op ? parse_compare_op(t.text) : std::nullopt;
    if (!op) return fail_at(t, "expected a comparison operator (<, <=, >, >=, ==, !=)");
    ++pos_;
    auto v = literal();
    if (!v) return std::nullopt;
    return Predicate{*key, *op, *v};
  }

  std::optional<Value> literal()
  {
    if (pos_ >= toks_.size()) return fail_end("expected a literal");
    const Token& t = toks_[pos_];
    std::optional<Value> v;
    if (t.type == TokenType::String) v = Value{t.text};
    else if (t.type == TokenType::Word) {
      if (t.text == "true") v = Value{true};
      else if (t.text == "false") v = Value{false};
      else if (auto d = parse_duration(t.text)) v = Value{*d};
      else if (auto x = parse_number(t.text)) v = Value{*x};
    }
    if (!v) return fail_at(t, "expected a literal (number, duration, true/false or quoted text)");
    ++pos_;
    return v;
  }

  bool peek_word(std::string_view w) const
  {
    return pos_ < toks_.size() && toks_[pos_].type == TokenType::Word && toks_[pos_].text == w;
  }

  std::nullopt_t fail_at(const Token& t, std::string msg)
  {
    diags_.push_back({Severity::Error, std::move(msg), {line_, t.column, t.length}});
    return std::nullopt;
  }

  std::nullopt_t fail_end(std::string msg)
  {
    diags_.push_back({Severity::Error, std::move(msg), {line_, end_col_, 1}});
    return std::nullopt;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::size_t line_;
  std::size_t end_col_;
  std::vector<ParseDiagnostic>& diags_;
};

inline std::string rtrim(std::string_view s)
{
  std::size_t e = s.size();
  while (e > 0 && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(0, e));
}

}  // namespace detail

/// Parses `.bt` source. On success the tree validates, nodes appear in
/// source order, and ids not given explicitly are preorder ids n0, n1, ...
inline ParseResult parse(std::string_view text)
{
  ParseResult result;
  auto& diags = result.diagnostics;
  BehaviorTree tree;

  struct Open {
    std::string id;  // empty for a line that failed to parse
  };
  std::vector<Open> stack;
  std::map<std::string, SourceSpan> spans;
  std::vector<std::string> pending_comments;
  bool seen_content = false;
  bool seen_root = false;
  std::size_t counter = 0;
  std::size_t line_no = 0;

  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view raw = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    if (nl == text.size() && raw.empty()) break;

    std::size_t indent = 0;
    while (indent < raw.size() && raw[indent] == ' ') ++indent;
    if (indent == raw.size()) {
      if (!raw.empty()) diags.push_back({Severity::Warning, "whitespace-only line", {line_no, 1, raw.size()}});
      continue;
    }
    if (raw[indent] == '\t') {
      diags.push_back({Severity::Error, "tabs are not allowed in indentation", {line_no, indent + 1, 1}});
      continue;
    }
    if (raw[indent] == '#' && (indent + 1 == raw.size() || raw[indent + 1] == ' ' || raw[indent + 1] == '#')) {
      std::string comment = detail::rtrim(raw.substr(indent));
      if (!seen_content) tree.metadata.header_comments.push_back(std::move(comment));
      else pending_comments.push_back(std::move(comment));
      continue;
    }

    auto tokens = tokenize_line(raw, indent, line_no, diags);
    if (tokens.empty()) continue;
    const Token& kw = tokens.front();
    const SourceSpan line_span{line_no, indent + 1, raw.size() - indent};

    if (indent % 2 != 0) {
      diags.push_back({Severity::Error, "indentation must be a multiple of two spaces", {line_no, 1, indent}});
      continue;
    }
    const std::size_t depth = indent / 2;

    if (kw.type == TokenType::Word && kw.text == "meta") {
      seen_content = true;
      if (seen_root || depth != 0) {
        diags.push_back({Severity::Error, "meta lines must precede the root at column 1", {line_no, kw.column, kw.length}});
        continue;
      }
      detail::LineParser lp(std::move(tokens), line_no, raw.size() + 1, diags);
      if (auto m = lp.parse_meta()) {
        std::string& slot = m->first == "name" ? tree.metadata.name
                            : m->first == "version" ? tree.metadata.version
                                                    : tree.metadata.source;
        if (!slot.empty()) diags.push_back({Severity::Error, "duplicate meta " + m->first, line_span});
        slot = m->second;
      }
      continue;
    }
    seen_content = true;

    if (!seen_root) {
      if (depth != 0) {
        diags.push_back({Severity::Error, "the first node must be an unindented root", {line_no, 1, indent}});
        continue;
      }
      if (!(kw.type == TokenType::Word && kw.text == "root")) {
        diags.push_back({Severity::Error, "the first node must be 'root'", {line_no, kw.column, kw.length}});
        seen_root = true;  // recover: treat it as the root line
        stack.assign(1, Open{});
        ++counter;
        continue;
      }
    } else {
      if (depth == 0) {
        diags.push_back({Severity::Error, "a tree has exactly one root; unexpected unindented line", {line_no, kw.column, kw.length}});
        continue;
      }
      if (depth > stack.size()) {
        diags.push_back({Severity::Error, "unexpected indentation (more than one level deeper than the parent)",
                         {line_no, 1, indent}});
        continue;
      }
    }

    const std::size_t index = counter++;
    detail::LineParser lp(std::move(tokens), line_no, raw.size() + 1, diags);
    std::optional<Node> node = lp.parse_node();
    if (depth == 0) seen_root = true;
    stack.resize(depth);
    if (!node) {
      stack.push_back(Open{});
      pending_comments.clear();
      continue;
    }
    if (depth > 0 && std::holds_alternative<kind::Root>(node->kind)) {
      diags.push_back({Severity::Error, "'root' may only appear once, at the top", {line_no, kw.column, kw.length}});
      stack.push_back(Open{});
      continue;
    }
    if (node->id.empty()) node->id = auto_id(index);
    if (tree.find(node->id) != nullptr) {
      const SourceSpan span = lp.id_token ? SourceSpan{line_no, lp.id_token->column, lp.id_token->length} : line_span;
      diags.push_back({Severity::Error, "duplicate node id '" + node->id + "'", span});
      stack.push_back(Open{});
      continue;
    }
    node->comments = std::move(pending_comments);
    pending_comments.clear();
    const std::string id = node->id;
    spans[id] = line_span;
    if (depth == 0) tree.root_id = id;
    else if (!stack.back().id.empty()) tree.at(stack.back().id).children.push_back(id);
    tree.add(std::move(*node));
    stack.push_back(Open{id});
  }
  tree.metadata.trailing_comments = std::move(pending_comments);

  if (!seen_root && !result.has_errors()) {
    diags.push_back({Severity::Error, "missing root", {std::max<std::size_t>(line_no, 1), 1, 0}});
  }
  if (result.has_errors()) return result;

  for (const auto& v : validate(tree)) {
    auto it = spans.find(v.node_id);
    const SourceSpan span = it != spans.end() ? it->second : SourceSpan{1, 1, 0};
    diags.push_back({Severity::Error, v.message, span});
  }
  if (result.has_errors()) return result;
  result.tree = std::move(tree);
  return result;
}

inline BehaviorTree parse_or_throw(std::string_view text)
{
  ParseResult r = parse(text);
  if (!r.ok()) throw ParseError("parse failed:\n" + r.format_diagnostics(), std::move(r.diagnostics));
  return std::move(*r.tree);
}

}  // namespace medbt::dsl
