#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "adaptometer/treebank.hpp"

using namespace adaptometer;

namespace {

const char* kLikeTea = "(S (NP (PRP I)) (VP (VBP like) (NP (NN tea))))";

std::vector<std::string> rule_strings(const std::vector<ProductionRule>& rules) {
  std::vector<std::string> out;
  for (const auto& r : rules) out.push_back(r.to_string());
  return out;
}

// Random trees over a small label set, for the round-trip properties.
SyntaxTree random_tree(std::mt19937& rng, int depth) {
  static const char* labels[] = {"S", "NP", "VP", "PP", "SBAR", "ADJP"};
  static const char* tags[] = {"NN", "VBZ", "DT", "IN", "PRP", "JJ"};
  static const char* words[] = {"tea", "is", "the", "of", "it", "hot", "(", ")"};
  if (depth == 0 || rng() % 3 == 0) {
    std::string word = words[rng() % 8];
    if (word == "(") word = "-LRB-";
    if (word == ")") word = "-RRB-";
    return SyntaxTree::leaf(tags[rng() % 6], word);
  }
  std::vector<SyntaxTree> kids;
  const int n = 1 + static_cast<int>(rng() % 3);
  for (int i = 0; i < n; ++i) kids.push_back(random_tree(rng, depth - 1));
  return SyntaxTree::node(labels[rng() % 6], std::move(kids));
}

}  // namespace

TEST(ParseBracketed, ReadsRootAndChildren) {
  const SyntaxTree t = parse_bracketed(kLikeTea);
  EXPECT_EQ(t.label(), "S");
  ASSERT_EQ(t.children().size(), 2u);
  EXPECT_EQ(t.children()[0].label(), "NP");
  EXPECT_EQ(t.children()[1].label(), "VP");
  EXPECT_EQ(t.children()[0].children()[0].word(), "I");
}

TEST(ParseBracketed, WhitespaceIsInsignificant) {
  EXPECT_EQ(parse_bracketed("(S\n  (NP (PRP I))\t(VP (VBP like)\n (NP (NN tea))) )"), parse_bracketed(kLikeTea));
}

TEST(ParseBracketed, UnwrapsUnlabeledOuterPair) {
  EXPECT_EQ(parse_bracketed(std::string("( ") + kLikeTea + " )"), parse_bracketed(kLikeTea));
}

TEST(ParseBracketed, UnbalancedReportsEndOfInput) {
  try {
    parse_bracketed("(S (NP");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("end of input"), std::string::npos) << e.what();
    EXPECT_EQ(e.offset(), 6u);
  }
}

TEST(ParseBracketed, Errors) {
  EXPECT_THROW(parse_bracketed(""), ParseError);
  EXPECT_THROW(parse_bracketed("   "), ParseError);
  EXPECT_THROW(parse_bracketed("(S)"), ParseError);
  EXPECT_THROW(parse_bracketed("(S (NN tea)) x"), ParseError);
  EXPECT_THROW(parse_bracketed("(S tea (NN tea))"), ParseError);
  EXPECT_THROW(parse_bracketed("(S (NN tea)))"), ParseError);
}

TEST(ParseBracketed, StripsFunctionTagsByDefault) {
  const auto t = parse_bracketed("(S (NP-SBJ-1 (PRP I)) (VP=2 (VBP like)))");
  EXPECT_EQ(t.children()[0].label(), "NP");
  EXPECT_EQ(t.children()[1].label(), "VP");
  const auto kept = parse_bracketed("(S (NP-SBJ (PRP I)))", {.strip_function_tags = false, .drop_traces = true});
  EXPECT_EQ(kept.children()[0].label(), "NP-SBJ");
  // Bracket tokens keep their leading-dash labels.
  EXPECT_EQ(parse_bracketed("(S (-LRB- -LRB-) (NN x))").children()[0].label(), "-LRB-");
}

TEST(ParseBracketed, DropsTracesAndEmptiedNodes) {
  const auto t = parse_bracketed("(S (NP-SBJ (-NONE- *T*-1)) (VP (VBD ran)))");
  ASSERT_EQ(t.children().size(), 1u);
  EXPECT_EQ(t.children()[0].label(), "VP");
  const auto kept = parse_bracketed("(S (NP (-NONE- *)) (VP (VBD ran)))", {.strip_function_tags = true, .drop_traces = false});
  EXPECT_EQ(kept.children().size(), 2u);
}

TEST(SyntaxTree, RejectsEmptyLabelAtConstruction) {
  EXPECT_THROW(SyntaxTree::leaf("", "tea"), DataError);
  EXPECT_THROW(SyntaxTree::leaf("NN", ""), DataError);
  EXPECT_THROW(SyntaxTree::node("S", {}), DataError);
}

TEST(Serialize, CanonicalForm) {
  EXPECT_EQ(serialize(SyntaxTree::node("S", {SyntaxTree::leaf("NN", "tea")})), "(S (NN tea))");
  EXPECT_EQ(serialize(parse_bracketed("( (S   (NP (PRP I))\n(VP (VBP like) (NP (NN tea)))) )")), kLikeTea);
}

TEST(Serialize, RoundTripOnRandomTrees) {
  std::mt19937 rng(7);
  for (int i = 0; i < 300; ++i) {
    const SyntaxTree t = random_tree(rng, 5);
    const std::string s = serialize(t);
    EXPECT_EQ(parse_bracketed(s), t) << s;
    EXPECT_EQ(serialize(parse_bracketed(s)), s);
  }
}

TEST(ExtractRules, WithoutLexical) {
  EXPECT_EQ(rule_strings(extract_rules(parse_bracketed(kLikeTea), false)),
            (std::vector<std::string>{"S→NP VP", "NP→PRP", "VP→VBP NP", "NP→NN"}));
}

TEST(ExtractRules, WithLexical) {
  const auto rules = rule_strings(extract_rules(parse_bracketed(kLikeTea), true));
  EXPECT_EQ(rules.size(), 7u);
  for (const char* r : {"PRP→I", "VBP→like", "NN→tea"})
    EXPECT_NE(std::find(rules.begin(), rules.end(), r), rules.end()) << r;
}

TEST(ExtractRules, SingleLeafHasOnlyALexicalRule) {
  EXPECT_TRUE(extract_rules(parse_bracketed("(NN tea)"), false).empty());
  EXPECT_EQ(extract_rules(parse_bracketed("(NN tea)"), true).size(), 1u);
}

TEST(ExtractRules, PropertiesOnRandomTrees) {
  std::mt19937 rng(11);
  for (int i = 0; i < 300; ++i) {
    const SyntaxTree t = random_tree(rng, 5);
    const auto all = extract_rules(t, true);
    const auto syntactic = extract_rules(t, false);
    EXPECT_EQ(all.size(), t.node_count());
    // Sub-multiset check via counts.
    const auto all_counts = count_rules(all);
    for (const auto& [rule, n] : count_rules(syntactic)) EXPECT_LE(n, all_counts.at(rule));
    EXPECT_EQ(rule_strings(extract_rules(parse_bracketed(serialize(t)), true)), rule_strings(all));
  }
}

TEST(ProductionRule, EqualityIgnoresLexicalFlag) {
  ProductionRule a{"NN", {"tea"}, true};
  ProductionRule b{"NN", {"tea"}, false};
  EXPECT_EQ(a, b);
  EXPECT_NE(a, (ProductionRule{"NN", {"coffee"}, true}));
}

TEST(ParseRule, AcceptsBothArrows) {
  EXPECT_EQ(parse_rule("S→NP VP"), (ProductionRule{"S", {"NP", "VP"}, false}));
  EXPECT_EQ(parse_rule("S -> NP VP"), (ProductionRule{"S", {"NP", "VP"}, false}));
  EXPECT_EQ(parse_rule("S→NP VP").to_string(), "S→NP VP");
  EXPECT_THROW(parse_rule("S NP VP"), DataError);
  EXPECT_THROW(parse_rule("S→"), DataError);
}
