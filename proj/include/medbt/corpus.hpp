#pragma once

#include <filesystem>

#include "medbt/dsl/parser.hpp"
#include "medbt/normalize.hpp"
#include "medbt/sim/scenario.hpp"

namespace medbt::corpus {

class CorpusError : public Error {
 public:
  using Error::Error;
};

/// One protocol from corpus/index.json. `assertions` are kept as JSON and
/// evaluated by check_assertions().
struct Entry {
  std::string name;
  std::filesystem::path dsl_path;
  std::string figure;
  BehaviorTree tree;
  std::vector<nlohmann::json> assertions;
  std::vector<std::filesystem::path> scenarios;
};

struct Corpus {
  std::filesystem::path dir;
  std::vector<Entry> entries;

  const Entry* find(std::string_view name) const
  {
    for (const auto& e : entries) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }

  const Entry& at(std::string_view name) const
  {
    if (const Entry* e = find(name)) return *e;
    throw CorpusError("no corpus entry named '" + std::string(name) + "'");
  }
};

/// Reads the manifest and parses every referenced tree. Parse errors are
/// reported with the file name.
inline Corpus load_corpus(const std::filesystem::path& dir)
{
  Corpus c;
  c.dir = dir;
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(sim::read_file(dir / "index.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw CorpusError((dir / "index.json").string() + ": " + e.what());
  }
  try {
    for (const auto& j : index.at("entries")) {
      Entry e;
      e.name = j.at("name").get<std::string>();
      e.dsl_path = dir / j.at("dsl").get<std::string>();
      e.figure = j.value("figure", std::string{});
      auto parsed = dsl::parse(sim::read_file(e.dsl_path));
      if (!parsed.ok()) {
        std::string msg = e.dsl_path.string() + ":";
        for (const auto& d : parsed.diagnostics) msg += "\n  " + d.format();
        throw CorpusError(msg);
      }
      e.tree = std::move(*parsed.tree);
      if (j.contains("assertions")) e.assertions = j["assertions"].get<std::vector<nlohmann::json>>();
      if (j.contains("scenarios")) {
        for (const auto& s : j["scenarios"]) e.scenarios.push_back(dir / s.get<std::string>());
      }
      if (c.find(e.name) != nullptr) throw CorpusError("duplicate corpus entry '" + e.name + "'");
      c.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorpusError(std::string("malformed corpus index: ") + e.what());
  }
  return c;
}

struct AssertionResult {
  std::string check;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline bool within(const BehaviorTree& t, const Node& n, std::string_view ancestor)
{
  bool found = false;
  std::function<bool(const Node&)> contains = [&](const Node& a) {
    for (const auto& c : a.children) {
      if (c == n.id || contains(t.at(c))) return true;
    }
    return false;
  };
  if (const Node* a = t.find(ancestor)) found = contains(*a);
  return found;
}

inline std::size_t count_kind(const BehaviorTree& t, std::string_view kind)
{
  std::size_t n = 0;
  for_each_preorder(t, [&](const Node& node, std::size_t) { n += kind_name(node.kind) == kind ? 1 : 0; });
  return n;
}

inline AssertionResult check_one(const Entry& e, const std::filesystem::path& dir, const nlohmann::json& a)
{
  const BehaviorTree& t = e.tree;
  AssertionResult r;
  r.check = a.at("check").get<std::string>();
  const auto nodes = preorder(t);
  auto any = [&](auto pred) { return std::any_of(nodes.begin(), nodes.end(), [&](const Node* n) { return pred(*n); }); };

  if (r.check == "top-kind") {
    const std::string want = a.at("kind").get<std::string>();
    const std::string got(kind_name(t.at(t.root().children.front()).kind));
    r.passed = got == want;
    r.detail = "top-level node is " + got;
  } else if (r.check == "kind-count") {
    const std::string kind = a.at("kind").get<std::string>();
    const std::size_t got = count_kind(t, kind);
    r.passed = got == a.at("count").get<std::size_t>();
    r.detail = std::to_string(got) + " " + kind + " nodes";
  } else if (r.check == "leaf-count") {
    const std::size_t got = leaf_count(t);
    r.passed = got == a.at("count").get<std::size_t>();
    r.detail = std::to_string(got) + " leaves";
  } else if (r.check == "has-leaf") {
    const std::string name = a.at("name").get<std::string>();
    r.passed = any([&](const Node& n) { return is_leaf(n) && leaf_name(n) == name; });
    r.detail = "leaf " + name;
  } else if (r.check == "has-node") {
    const std::string id = a.at("id").get<std::string>();
    const Node* n = t.find(id);
    r.passed = n != nullptr;
    r.detail = "node #" + id;
    if (n != nullptr && a.contains("label")) {
      r.passed = n->label == a["label"].get<std::string>();
      r.detail += " labelled '" + n->label + "'";
    }
    if (n != nullptr && a.contains("within")) {
      const std::string anc = a["within"].get<std::string>();
      r.passed = r.passed && within(t, *n, anc);
      r.detail += " under #" + anc;
    }
  } else if (r.check == "predicate") {
    const std::string key = a.at("key").get<std::string>();
    const Value lit = from_json_value(a.at("literal"));
    r.passed = any([&](const Node& n) {
      auto* q = std::get_if<kind::Query>(&n.kind);
      return q && q->condition && q->condition->key == key && q->condition->literal == lit;
    });
    r.detail = "query predicate on " + key + " against " + to_display(lit);
  } else if (r.check == "timer-key") {
    const std::string key = a.at("key").get<std::string>();
    r.passed = any([&](const Node& n) {
      auto* d = std::get_if<kind::Decorator>(&n.kind);
      auto* p = d ? std::get_if<policy::PeriodicTimer>(&d->policy) : nullptr;
      return p && p->period_key == key;
    });
    r.detail = "periodic timer keyed on " + key;
  } else if (r.check == "retry-limit") {
    const std::string leaf = a.at("leaf").get<std::string>();
    const auto attempts = a.at("attempts").get<std::uint32_t>();
    r.passed = any([&](const Node& n) {
      auto* d = std::get_if<kind::Decorator>(&n.kind);
      auto* p = d ? std::get_if<policy::RetryLimit>(&d->policy) : nullptr;
      if (!p || p->max_attempts != attempts) return false;
      const Node& c = t.at(n.children.front());
      return is_leaf(c) && leaf_name(c) == leaf;
    });
    r.detail = "retry " + std::to_string(attempts) + " over " + leaf;
  } else if (r.check == "selector-of-leaves") {
    const auto count = a.at("count").get<std::size_t>();
    r.passed = any([&](const Node& n) {
      if (!std::holds_alternative<kind::Selector>(n.kind) || n.children.size() != count) return false;
      return std::all_of(n.children.begin(), n.children.end(), [&](const std::string& c) { return is_leaf(t.at(c)); });
    });
    r.detail = "selector over " + std::to_string(count) + " leaves";
  } else if (r.check == "normalizes-from") {
    const auto path = dir / a.at("file").get<std::string>();
    const BehaviorTree drawn = dsl::parse_or_throw(sim::read_file(path));
    r.passed = !is_normalized(drawn) && structurally_equal(normalize(drawn), t);
    r.detail = "normalize(" + path.filename().string() + ")";
  } else {
    r.detail = "unknown check";
  }
  return r;
}

}  // namespace detail

inline std::vector<AssertionResult> check_assertions(const Corpus& c, const Entry& e)
{
  std::vector<AssertionResult> out;
  for (const auto& a : e.assertions) {
    try {
      out.push_back(detail::check_one(e, c.dir, a));
    } catch (const std::exception& ex) {
      out.push_back({a.value("check", std::string("?")), false, ex.what()});
    }
  }
  return out;
}

}  // namespace medbt::corpus
