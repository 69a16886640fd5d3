#pragma once

// Penn-Treebank-style bracketed trees and context-free production rules.

#include <compare>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "adaptometer/error.hpp"

namespace adaptometer {

/// Raised on malformed bracketed input; offset is a byte position into the
/// text that was being parsed.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : DataError(what + " at byte " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// A constituency tree node. A node either carries a terminal word (a
/// preterminal such as `(NN tea)`) or one or more child nodes, never both.
class SyntaxTree {
 public:
  static SyntaxTree leaf(std::string label, std::string word) {
    if (label.empty()) throw DataError("syntax tree node with empty label");
    if (word.empty()) throw DataError("leaf '" + label + "' has an empty word");
    SyntaxTree t;
    t.label_ = std::move(label);
    t.word_ = std::move(word);
    return t;
  }

  static SyntaxTree node(std::string label, std::vector<SyntaxTree> children) {
    if (label.empty()) throw DataError("syntax tree node with empty label");
    if (children.empty()) throw DataError("node '" + label + "' has no children");
    SyntaxTree t;
    t.label_ = std::move(label);
    t.children_ = std::move(children);
    return t;
  }

  const std::string& label() const noexcept { return label_; }
  const std::string& word() const noexcept { return word_; }
  const std::vector<SyntaxTree>& children() const noexcept { return children_; }
  bool is_leaf() const noexcept { return children_.empty(); }

  /// Number of labeled nodes, preterminals included.
  std::size_t node_count() const {
    std::size_t n = 1;
    for (const auto& c : children_) n += c.node_count();
    return n;
  }

  bool operator==(const SyntaxTree&) const = default;

 private:
  SyntaxTree() = default;

  std::string label_;
  std::string word_;
  std::vector<SyntaxTree> children_;
};

/// LHS -> RHS. Identity is (lhs, rhs); `lexical` is derived information.
struct ProductionRule {
  std::string lhs;
  std::vector<std::string> rhs;
  bool lexical = false;

  bool operator==(const ProductionRule& o) const { return lhs == o.lhs && rhs == o.rhs; }
  std::strong_ordering operator<=>(const ProductionRule& o) const {
    if (auto c = lhs <=> o.lhs; c != 0) return c;
    return rhs <=> o.rhs;
  }

  /// "S→NP VP"
  std::string to_string() const {
    std::string s = lhs + "→";
    for (std::size_t i = 0; i < rhs.size(); ++i) {
      if (i) s += ' ';
      s += rhs[i];
    }
    return s;
  }
};

/// Parses "LHS→A B" (an ASCII "->" is accepted as well).
inline ProductionRule parse_rule(std::string_view text) {
  std::size_t arrow = text.find("→");
  std::size_t arrow_len = std::string_view("→").size();
  if (arrow == std::string_view::npos) {
    arrow = text.find("->");
    arrow_len = 2;
  }
  if (arrow == std::string_view::npos) throw DataError("rule without arrow: '" + std::string(text) + "'");
  auto trim = [](std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
  };
  ProductionRule rule;
  rule.lhs = std::string(trim(text.substr(0, arrow)));
  std::string_view rest = text.substr(arrow + arrow_len);
  std::size_t i = 0;
  while (i < rest.size()) {
    while (i < rest.size() && (rest[i] == ' ' || rest[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < rest.size() && rest[j] != ' ' && rest[j] != '\t') ++j;
    if (j > i) rule.rhs.emplace_back(rest.substr(i, j - i));
    i = j;
  }
  if (rule.lhs.empty() || rule.rhs.empty()) throw DataError("incomplete rule: '" + std::string(text) + "'");
  return rule;
}

struct TreebankOptions {
  /// "NP-SBJ-1" -> "NP", "NP=2" -> "NP". Labels starting with '-' such as
  /// "-NONE-" or "-LRB-" are left alone.
  bool strip_function_tags = true;
  /// Remove "-NONE-" empty elements and any node left without children.
  bool drop_traces = true;
};

namespace detail {

inline std::string strip_function_tag(const std::string& label) {
  std::size_t cut = label.find_first_of("-=", 1);
  if (label.empty() || label.front() == '-' || cut == std::string::npos) return label;
  return label.substr(0, cut);
}

class BracketParser {
 public:
  BracketParser(std::string_view text, const TreebankOptions& opts) : text_(text), opts_(opts) {}

  SyntaxTree parse() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("empty input", pos_);
    std::vector<SyntaxTree> top = parse_node(/*allow_unlabeled=*/true);
    skip_ws();
    if (pos_ < text_.size()) throw ParseError("trailing characters after tree", pos_);
    if (top.empty()) throw ParseError("tree is empty after removing empty elements", 0);
    if (top.size() != 1) throw ParseError("wrapper node holds more than one tree", 0);
    return std::move(top.front());
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' ||
                                   text_[pos_] == '\n' || text_[pos_] == '\r'))
      ++pos_;
  }

  std::string_view atom() {
    std::size_t start = pos_;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '(' || c == ')' || c == ' ' || c == '\t' || c == '\n' || c == '\r') break;
      ++pos_;
    }
    return text_.substr(start, pos_ - start);
  }

  void expect_close(std::size_t open_at) {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unbalanced parentheses: '(' at byte " + std::to_string(open_at) + " never closed, end of input", pos_);
    if (text_[pos_] != ')') throw ParseError("expected ')'", pos_);
    ++pos_;
  }

  // Returns zero or one tree (zero when trace removal empties the node), or
  // the children of an unlabeled wrapper.
  std::vector<SyntaxTree> parse_node(bool allow_unlabeled) {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unbalanced parentheses: unexpected end of input", pos_);
    if (text_[pos_] != '(') throw ParseError("expected '('", pos_);
    const std::size_t open_at = pos_++;
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unbalanced parentheses: unexpected end of input", pos_);

    std::string label;
    if (text_[pos_] != '(' && text_[pos_] != ')') label = std::string(atom());
    if (label.empty() && !allow_unlabeled) throw ParseError("node without label", open_at);

    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unbalanced parentheses: unexpected end of input", pos_);

    if (text_[pos_] == ')') throw ParseError("node '" + label + "' has neither children nor word", open_at);

    if (text_[pos_] != '(') {
      // Preterminal: (TAG word)
      const std::size_t word_at = pos_;
      std::string word(atom());
      skip_ws();
      if (pos_ < text_.size() && text_[pos_] == '(') throw ParseError("node mixes a word with subtrees", word_at);
      expect_close(open_at);
      if (label.empty()) throw ParseError("word without a label", word_at);
      if (opts_.drop_traces && label == "-NONE-") return {};
      if (opts_.strip_function_tags) label = strip_function_tag(label);
      return {SyntaxTree::leaf(std::move(label), std::move(word))};
    }

    std::vector<SyntaxTree> children;
    for (;;) {
      skip_ws();
      if (pos_ >= text_.size()) throw ParseError("unbalanced parentheses: '(' at byte " + std::to_string(open_at) + " never closed, end of input", pos_);
      if (text_[pos_] == ')') break;
      if (text_[pos_] != '(') throw ParseError("node mixes a word with subtrees", pos_);
      for (auto& c : parse_node(false)) children.push_back(std::move(c));
    }
    ++pos_;

    if (label.empty()) return children;
    if (children.empty()) return {};  // every child was an empty element
    if (opts_.strip_function_tags) label = strip_function_tag(label);
    return {SyntaxTree::node(std::move(label), std::move(children))};
  }

  std::string_view text_;
  const TreebankOptions& opts_;
  std::size_t pos_ = 0;
};

inline void serialize_into(const SyntaxTree& t, std::string& out) {
  out += '(';
  out += t.label();
  if (t.is_leaf()) {
    out += ' ';
    out += t.word();
  } else {
    for (const auto& c : t.children()) {
      out += ' ';
      serialize_into(c, out);
    }
  }
  out += ')';
}

inline void extract_into(const SyntaxTree& t, bool include_lexical, std::vector<ProductionRule>& out) {
  if (t.is_leaf()) {
    if (include_lexical) out.push_back(ProductionRule{t.label(), {t.word()}, true});
    return;
  }
  ProductionRule rule{t.label(), {}, false};
  rule.rhs.reserve(t.children().size());
  for (const auto& c : t.children()) rule.rhs.push_back(c.label());
  out.push_back(std::move(rule));
  for (const auto& c : t.children()) extract_into(c, include_lexical, out);
}

}  // namespace detail

/// Reads one bracketed tree. An outer unlabeled "( ... )" wrapper is
/// removed; whitespace between tokens is insignificant.
inline SyntaxTree parse_bracketed(std::string_view text, const TreebankOptions& opts = {}) {
  return detail::BracketParser(text, opts).parse();
}

/// Canonical form: single spaces, no wrapper.
inline std::string serialize(const SyntaxTree& tree) {
  std::string out;
  detail::serialize_into(tree, out);
  return out;
}

/// One rule per labeled node in preorder. Preterminal nodes produce the
/// lexical rule TAG→word, which is omitted unless include_lexical is set.
inline std::vector<ProductionRule> extract_rules(const SyntaxTree& tree, bool include_lexical) {
  std::vector<ProductionRule> out;
  detail::extract_into(tree, include_lexical, out);
  return out;
}

using RuleCounts = std::map<std::string, std::size_t>;

/// Token counts keyed by the rule's canonical string.
inline RuleCounts count_rules(const std::vector<ProductionRule>& rules) {
  RuleCounts counts;
  for (const auto& r : rules) ++counts[r.to_string()];
  return counts;
}

}  // namespace adaptometer
