#include <gtest/gtest.h>

#include "medbt/dsl/dot.hpp"
#include "medbt/dsl/parser.hpp"
#include "medbt/dsl/serializer.hpp"
#include "support/generators.hpp"

using namespace medbt;
using namespace medbt::build;

namespace {

const char* kSample = R"(# Sample protocol
meta name "Sample"
meta version "1.0"
root
  sequence "Main"
    action Prepare
    # pick a site
    selector #site
      query LeftOk when SpO2 >= 90
      action UseRight set Side = "right" set Wait = 2h
    parallel 1
      every Tca
        action Recheck
      retry 3
        action Draw approx
    repeat-until Count >= 3 max 50
      action Inc
    recovery
      action Risky
      action Repair
)";

std::size_t first_error_line(const dsl::ParseResult& r)
{
  for (const auto& d : r.diagnostics) {
    if (d.severity == dsl::Severity::Error) return d.span.line;
  }
  return 0;
}

}  // namespace

TEST(Parse, SampleTree)
{
  auto r = dsl::parse(kSample);
  ASSERT_TRUE(r.ok()) << r.format_diagnostics();
  const BehaviorTree& t = *r.tree;
  EXPECT_EQ(t.metadata.name, "Sample");
  EXPECT_EQ(t.metadata.header_comments, std::vector<std::string>{"# Sample protocol"});
  EXPECT_EQ(t.root_id, "n0");
  EXPECT_EQ(t.at("n1").label, "Main");
  ASSERT_NE(t.find("site"), nullptr);
  EXPECT_EQ(t.at("site").comments, std::vector<std::string>{"# pick a site"});
  const auto& q = std::get<kind::Query>(t.at("n4").kind);
  ASSERT_TRUE(q.condition);
  EXPECT_EQ(q.condition->op, CompareOp::GreaterEqual);
  const auto& a = std::get<kind::Action>(t.at("n5").kind);
  ASSERT_EQ(a.effects.size(), 2u);
  EXPECT_EQ(a.effects[1].value, Value{Duration{7200}});
  EXPECT_TRUE(t.at("n10").approx);
  const auto& rep = std::get<policy::RepeatUntil>(std::get<kind::Decorator>(t.at("n11").kind).policy);
  EXPECT_EQ(rep.max_iterations, 50u);
  EXPECT_EQ(leaf_count(t), 8u);
}

TEST(Parse, CanonicalTextIsAFixpoint)
{
  auto t = dsl::parse_or_throw(kSample);
  const std::string text = dsl::serialize(t);
  EXPECT_EQ(text, kSample);
  EXPECT_EQ(dsl::parse_or_throw(text), t);
}

TEST(Parse, NonCanonicalInputNormalizesOnce)
{
  const char* loose = "root\n\n  sequence   #n1\n    action A  \"first\"\n    query B   when X == true\n";
  auto t = dsl::parse_or_throw(loose);
  const std::string canon = dsl::serialize(t);
  EXPECT_EQ(canon, "root\n  sequence\n    action A \"first\"\n    query B when X == true\n");
  EXPECT_EQ(dsl::serialize(dsl::parse_or_throw(canon)), canon);
}

struct BadInput {
  const char* text;
  std::size_t line;
  std::size_t column;
  const char* fragment;
};

class Diagnostics : public ::testing::TestWithParam<BadInput> {};

TEST_P(Diagnostics, PointAtTheOffendingLine)
{
  const BadInput& in = GetParam();
  auto r = dsl::parse(in.text);
  EXPECT_FALSE(r.ok());
  ASSERT_TRUE(r.has_errors());
  const auto& d = r.diagnostics.front();
  EXPECT_EQ(d.span.line, in.line) << r.format_diagnostics();
  if (in.column != 0) {
    EXPECT_EQ(d.span.column, in.column) << r.format_diagnostics();
  }
  EXPECT_NE(d.message.find(in.fragment), std::string::npos) << d.message;
}

INSTANTIATE_TEST_SUITE_P(
  Dsl, Diagnostics,
  ::testing::Values(
    BadInput{"root\n  sequence\n\taction A\n", 3, 1, "tabs"},
    BadInput{"root\n   action A\n", 2, 1, "multiple of two"},
    BadInput{"root\n  sequnce\n    action A\n", 2, 3, "unknown keyword 'sequnce'"},
    BadInput{"root\n  parallel 3\n    action A\n    action B\n", 2, 3, "threshold exceeds"},
    BadInput{"root\n  parallel 0\n    action A\n", 2, 3, "at least 1"},
    BadInput{"root\n  sequence\n", 2, 3, "at least one child"},
    BadInput{"root\n  action A\n  action B\n", 1, 1, "exactly one child"},
    BadInput{"root\n  sequence #x\n    action A #x\n", 3, 14, "duplicate node id 'x'"},
    BadInput{"root\n  sequence\n      action A\n", 3, 1, "more than one level"},
    BadInput{"root\n  query Q when SpO2 ~ 3\n", 2, 21, "comparison operator"},
    BadInput{"root\n  query Q when SpO2 <\n", 2, 0, "expected a literal"},
    BadInput{"root\n  action A \"unterminated\n", 2, 12, "unterminated string"},
    BadInput{"root\n  retry x\n    action A\n", 2, 9, "retry limit"},
    BadInput{"root\n  action A\n    action B\n", 2, 3, "leaf"},
    BadInput{"meta name \"x\"\nmeta color \"red\"\nroot\n  action A\n", 2, 6, "unknown metadata key"},
    BadInput{"  root\n", 1, 1, "unindented root"},
    BadInput{"sequence\n  action A\n", 1, 1, "must be 'root'"},
    BadInput{"root\n  sequence\n    root\n", 3, 5, "only appear once"},
    BadInput{"", 1, 1, "missing root"}));

TEST(Parse, WhitespaceOnlyLineIsAWarning)
{
  auto r = dsl::parse("root\n   \n  action A\n");
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.diagnostics[0].severity, dsl::Severity::Warning);
  EXPECT_EQ(r.diagnostics[0].span.line, 2u);
}

TEST(Parse, ReportsSeveralIndependentErrors)
{
  auto r = dsl::parse("root\n  sequence\n    bogus A\n    action\n    action C\n");
  ASSERT_FALSE(r.ok());
  std::vector<std::size_t> lines;
  for (const auto& d : r.diagnostics) lines.push_back(d.span.line);
  EXPECT_EQ(lines, (std::vector<std::size_t>{3, 4}));
}

TEST(Property, RandomTreesRoundTrip)
{
  gen::Rng rng(2024);
  gen::RichTreeGen generate;
  for (int i = 0; i < 300; ++i) {
    const BehaviorTree t = generate(rng);
    ASSERT_TRUE(validate(t).empty()) << describe(validate(t));
    const std::string text = dsl::serialize(t);
    auto r = dsl::parse(text);
    ASSERT_TRUE(r.ok()) << r.format_diagnostics() << text;
    EXPECT_EQ(*r.tree, t) << text;
    EXPECT_EQ(dsl::serialize(*r.tree), text);
  }
}

// Corrupting the keyword of any one node line yields a first error on that
// line, whatever the rest of the tree looks like.
TEST(Property, SingleLineCorruptionIsReportedLocally)
{
  gen::Rng rng(99);
  gen::RichTreeGen generate;
  for (int i = 0; i < 200; ++i) {
    const std::string text = dsl::serialize(generate(rng));
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t nl = text.find('\n', pos);
      lines.push_back(text.substr(pos, nl - pos));
      pos = nl + 1;
    }
    std::vector<std::size_t> node_lines;
    for (std::size_t l = 0; l < lines.size(); ++l) {
      const auto first = lines[l].find_first_not_of(' ');
      if (lines[l][first] != '#' && lines[l].compare(first, 5, "meta ") != 0 && lines[l].compare(first, 4, "root") != 0) {
        node_lines.push_back(l);
      }
    }
    const std::size_t victim = node_lines[gen::pick(rng, 0, node_lines.size() - 1)];
    std::string& line = lines[victim];
    const auto kw = line.find_first_not_of(' ');
    const auto end = line.find(' ', kw);
    line.replace(kw, end == std::string::npos ? std::string::npos : end - kw, "frobnicate");
    std::string broken;
    for (const auto& l : lines) broken += l + "\n";
    auto r = dsl::parse(broken);
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(first_error_line(r), victim + 1) << broken << r.format_diagnostics();
  }
}

TEST(Dot, UsesGlyphsAndLeafStyles)
{
  auto t = dsl::parse_or_throw(kSample);
  const std::string dot = dsl::export_dot(t);
  EXPECT_NE(dot.find("digraph \"Sample\""), std::string::npos);
  EXPECT_NE(dot.find("label=\"Φ\""), std::string::npos);
  EXPECT_NE(dot.find("label=\"→\\nMain\""), std::string::npos);
  EXPECT_NE(dot.find("label=\"?\""), std::string::npos);
  EXPECT_NE(dot.find("label=\"⇉ 1\""), std::string::npos);
  EXPECT_NE(dot.find("label=\"Prepare\", shape=box"), std::string::npos);
  EXPECT_NE(dot.find("label=\"LeftOk\", shape=ellipse"), std::string::npos);
  EXPECT_NE(dot.find("\"n1\" -> \"n2\""), std::string::npos);

  std::map<std::string, Status> st{{"n2", Status::Success}};
  EXPECT_NE(dsl::export_dot(t, &st).find("color=\"#2ca02c\""), std::string::npos);
}
