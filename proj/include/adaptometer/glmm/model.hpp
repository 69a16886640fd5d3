#pragma once

// Model formulas and design matrices for the prime regression.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "adaptometer/error.hpp"
#include "adaptometer/sampling.hpp"

namespace adaptometer::glmm {

/// Random coefficients attached to the levels of a (possibly nested)
/// grouping factor, e.g. path {"conv_id", "speaker_id"}. Every coefficient
/// gets its own variance; coefficients are uncorrelated.
struct RandomTerm {
  std::vector<std::string> group_path;
  bool intercept = true;
  std::vector<std::string> slopes;

  std::string group_name() const {
    std::string s;
    for (std::size_t i = 0; i < group_path.size(); ++i) s += (i ? ":" : "") + group_path[i];
    return s;
  }
  bool operator==(const RandomTerm&) const = default;
};

struct ModelFormula {
  std::string response = "prime";
  bool intercept = true;
  /// Main effects ("ln_freq") and pairwise interactions ("ln_freq:same_conv").
  std::vector<std::string> fixed_terms;
  std::vector<RandomTerm> random_terms;

  bool operator==(const ModelFormula&) const = default;

  /// All pairwise interactions of ln_freq, same_conv, ln_size with the nested
  /// conversation / speaker intercepts and a per-conversation ln_freq slope.
  static ModelFormula full_pairwise() {
    ModelFormula f;
    f.fixed_terms = {"ln_freq", "same_conv", "ln_size", "ln_freq:same_conv", "ln_freq:ln_size", "same_conv:ln_size"};
    f.random_terms = {RandomTerm{{"conv_id"}, true, {"ln_freq"}}, RandomTerm{{"conv_id", "speaker_id"}, true, {}}};
    return f;
  }

  ModelFormula without_random() const {
    ModelFormula f = *this;
    f.random_terms.clear();
    return f;
  }

  std::string to_string() const {
    std::string s = response + " ~ " + (intercept ? "1" : "0");
    for (const auto& t : fixed_terms) s += " + " + t;
    for (const auto& r : random_terms) {
      s += " + (";
      s += r.intercept ? "1" : "0";
      for (const auto& sl : r.slopes) s += " + " + sl;
      s += r.slopes.empty() ? " | " : " || ";
      s += r.group_name() + ")";
    }
    return s;
  }
};

inline bool is_interaction(std::string_view term) { return term.find(':') != std::string_view::npos; }

inline std::vector<std::string> split_interaction(std::string_view term) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    std::size_t colon = term.find(':', start);
    parts.emplace_back(term.substr(start, colon - start));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  return parts;
}

namespace detail {

inline std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

// Splits on '+' outside parentheses.
inline std::vector<std::string> split_top_level(std::string_view s) {
  std::vector<std::string> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '(') ++depth;
    if (s[i] == ')') --depth;
    if (depth < 0) throw UsageError("unbalanced parentheses in formula");
    if (s[i] == '+' && depth == 0) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  if (depth != 0) throw UsageError("unbalanced parentheses in formula");
  out.push_back(trim(s.substr(start)));
  return out;
}

}  // namespace detail

/// Parses "prime ~ ln_freq + same_conv + ln_freq:same_conv + (1 + ln_freq || conv_id) + (1 | conv_id:speaker_id)".
/// "|" and "||" both denote uncorrelated coefficients.
inline ModelFormula parse_formula(std::string_view text) {
  const std::size_t tilde = text.find('~');
  if (tilde == std::string_view::npos) throw UsageError("formula needs '~'");
  ModelFormula f;
  f.response = detail::trim(text.substr(0, tilde));
  f.intercept = true;
  for (const std::string& term : detail::split_top_level(text.substr(tilde + 1))) {
    if (term.empty()) throw UsageError("empty term in formula");
    if (term.front() == '(') {
      if (term.back() != ')') throw UsageError("malformed random term: " + term);
      std::string inner = term.substr(1, term.size() - 2);
      std::size_t bar = inner.find('|');
      if (bar == std::string::npos) throw UsageError("random term without '|': " + term);
      std::size_t group_at = bar + 1;
      if (group_at < inner.size() && inner[group_at] == '|') ++group_at;
      RandomTerm r;
      r.intercept = false;
      for (const std::string& coef : detail::split_top_level(inner.substr(0, bar))) {
        if (coef == "1")
          r.intercept = true;
        else if (coef != "0" && !coef.empty())
          r.slopes.push_back(coef);
      }
      r.group_path = split_interaction(detail::trim(inner.substr(group_at)));
      f.random_terms.push_back(std::move(r));
    } else if (term == "1") {
      f.intercept = true;
    } else if (term == "0" || term == "-1") {
      f.intercept = false;
    } else {
      f.fixed_terms.push_back(term);
    }
  }
  return f;
}

/// Checks marginality (interactions only over present main effects) and that
/// random terms are nested inside one common outer factor.
inline void validate_formula(const ModelFormula& f) {
  for (const auto& t : f.fixed_terms) {
    if (!is_interaction(t)) continue;
    auto parts = split_interaction(t);
    if (parts.size() != 2) throw UsageError("only pairwise interactions are supported: " + t);
    for (const auto& p : parts)
      if (std::find(f.fixed_terms.begin(), f.fixed_terms.end(), p) == f.fixed_terms.end())
        throw UsageError("interaction " + t + " requires main effect " + p);
  }
  for (std::size_t i = 0; i < f.fixed_terms.size(); ++i)
    for (std::size_t j = i + 1; j < f.fixed_terms.size(); ++j)
      if (f.fixed_terms[i] == f.fixed_terms[j]) throw UsageError("duplicate term " + f.fixed_terms[i]);
  for (const auto& r : f.random_terms) {
    if (r.group_path.empty()) throw UsageError("random term without grouping factor");
    if (!r.intercept && r.slopes.empty()) throw UsageError("random term for " + r.group_name() + " has no coefficients");
    if (r.group_path.front() != f.random_terms.front().group_path.front())
      throw UsageError("random terms must be nested in one outer grouping factor (" +
                       f.random_terms.front().group_path.front() + " vs " + r.group_path.front() + ")");
  }
}

/// Per-row grouping levels for one random term.
struct GroupingData {
  RandomTerm term;
  std::vector<std::string> levels;
  std::vector<int> level_of_row;
  Eigen::MatrixXd slope_values;  ///< rows x slopes
};

struct DesignMatrix {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> column_names;
  std::vector<GroupingData> groupings;

  Eigen::Index rows() const { return x.rows(); }
};

/// Numeric sample columns by formula name; the CSV names ln_freq_c /
/// ln_size_c are accepted as aliases.
inline std::vector<double> numeric_column(const std::vector<PrimeSample>& samples, std::string_view name) {
  std::vector<double> v;
  v.reserve(samples.size());
  if (name == "prime")
    for (const auto& s : samples) v.push_back(s.prime);
  else if (name == "same_conv")
    for (const auto& s : samples) v.push_back(s.same_conv);
  else if (name == "ln_freq" || name == "ln_freq_c")
    for (const auto& s : samples) v.push_back(s.ln_freq);
  else if (name == "ln_size" || name == "ln_size_c")
    for (const auto& s : samples) v.push_back(s.ln_size);
  else
    throw DataError("unknown numeric column '" + std::string(name) + "'");
  return v;
}

inline const std::string& id_field(const PrimeSample& s, std::string_view name) {
  if (name == "conv_id") return s.conv_id;
  if (name == "speaker_id") return s.speaker_id;
  if (name == "rule") return s.rule;
  throw DataError("unknown grouping column '" + std::string(name) + "'");
}

/// Column order: intercept, main effects in formula order, then
/// interactions in formula order. Interaction columns are products of the
/// (already centered) parent columns.
inline DesignMatrix build_design(const std::vector<PrimeSample>& samples, const ModelFormula& formula) {
  validate_formula(formula);
  if (samples.empty()) throw DataError("design matrix needs at least one row");
  const auto n = static_cast<Eigen::Index>(samples.size());

  std::vector<std::string> ordered;
  for (const auto& t : formula.fixed_terms)
    if (!is_interaction(t)) ordered.push_back(t);
  for (const auto& t : formula.fixed_terms)
    if (is_interaction(t)) ordered.push_back(t);

  DesignMatrix d;
  d.x.resize(n, static_cast<Eigen::Index>(ordered.size() + (formula.intercept ? 1 : 0)));
  Eigen::Index col = 0;
  if (formula.intercept) {
    d.x.col(col++).setOnes();
    d.column_names.push_back("Intercept");
  }
  std::map<std::string, std::vector<double>> cache;
  auto column = [&](const std::string& name) -> const std::vector<double>& {
    auto it = cache.find(name);
    if (it == cache.end()) it = cache.emplace(name, numeric_column(samples, name)).first;
    return it->second;
  };
  for (const auto& term : ordered) {
    auto parts = split_interaction(term);
    for (Eigen::Index i = 0; i < n; ++i) {
      double v = 1.0;
      for (const auto& p : parts) v *= column(p)[static_cast<std::size_t>(i)];
      d.x(i, col) = v;
    }
    d.column_names.push_back(term);
    ++col;
  }
  const auto& response = column(formula.response);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = response[static_cast<std::size_t>(i)];
    if (v != 0.0 && v != 1.0) throw DataError("response must be binary (row " + std::to_string(i) + ")");
    d.y(i) = v;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d.x.cols(); ++j)
      if (!std::isfinite(d.x(i, j)))
        throw DataError("non-finite value in column " + d.column_names[static_cast<std::size_t>(j)] + " at row " +
                        std::to_string(i));

  for (const auto& term : formula.random_terms) {
    GroupingData g;
    g.term = term;
    std::map<std::string, int> index;
    g.level_of_row.resize(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      std::string key;
      for (std::size_t k = 0; k < term.group_path.size(); ++k) {
        if (k) key += '\x1f';
        key += id_field(samples[i], term.group_path[k]);
      }
      auto [it, fresh] = index.try_emplace(key, static_cast<int>(g.levels.size()));
      if (fresh) g.levels.push_back(key);
      g.level_of_row[i] = it->second;
    }
    g.slope_values.resize(n, static_cast<Eigen::Index>(term.slopes.size()));
    for (std::size_t k = 0; k < term.slopes.size(); ++k) {
      const auto& v = column(term.slopes[k]);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::isfinite(v[static_cast<std::size_t>(i)]))
          throw DataError("non-finite slope value in " + term.slopes[k] + " at row " + std::to_string(i));
        g.slope_values(i, static_cast<Eigen::Index>(k)) = v[static_cast<std::size_t>(i)];
      }
    }
    d.groupings.push_back(std::move(g));
  }
  return d;
}

/// Display label used in text reports.
inline std::string pretty_term(std::string_view name) {
  auto one = [](std::string_view p) -> std::string {
    if (p == "ln_freq") return "ln(Freq)";
    if (p == "ln_size") return "ln(Size)";
    if (p == "same_conv") return "SameConv";
    return std::string(p);
  };
  std::string out;
  auto parts = split_interaction(name);
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? ":" : "") + one(parts[i]);
  return out;
}

}  // namespace adaptometer::glmm
