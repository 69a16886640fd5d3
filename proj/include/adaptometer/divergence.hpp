#pragma once

// Rule distributions, Jensen-Shannon divergence, agent-pair JSD matrices and
// per-split adaptation trajectories with bootstrap error bars.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "adaptometer/corpus.hpp"
#include "adaptometer/error.hpp"
#include "adaptometer/util/io.hpp"
#include "adaptometer/util/parallel.hpp"
#include "adaptometer/util/rng.hpp"

namespace adaptometer {

struct RuleDistribution {
  std::map<std::string, double> probabilities;

  std::size_t support_size() const { return probabilities.size(); }
  double operator()(const std::string& rule) const {
    auto it = probabilities.find(rule);
    return it == probabilities.end() ? 0.0 : it->second;
  }
};

inline RuleDistribution rule_distribution(const RuleCounts& counts) {
  std::size_t total = 0;
  for (const auto& [r, n] : counts) total += n;
  if (total == 0) throw DataError("cannot normalize an empty rule count table");
  RuleDistribution d;
  for (const auto& [r, n] : counts)
    if (n > 0) d.probabilities.emplace(r, static_cast<double>(n) / static_cast<double>(total));
  return d;
}

namespace detail {

// ½ a log2(a/m) + ½ b log2(b/m), with 0 log 0 = 0.
inline double jsd_term(double a, double b) {
  const double m = 0.5 * (a + b);
  double t = 0.0;
  if (a > 0) t += 0.5 * a * std::log2(a / m);
  if (b > 0) t += 0.5 * b * std::log2(b / m);
  return t;
}

inline double clamp_unit(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace detail

/// Jensen-Shannon divergence in bits, so the value lies in [0, 1]. Rules
/// missing from one distribution carry probability 0 there.
inline double jsd(const RuleDistribution& p, const RuleDistribution& q) {
  double total = 0.0;
  auto ip = p.probabilities.begin();
  auto iq = q.probabilities.begin();
  while (ip != p.probabilities.end() || iq != q.probabilities.end()) {
    if (iq == q.probabilities.end() || (ip != p.probabilities.end() && ip->first < iq->first)) {
      total += detail::jsd_term(ip->second, 0.0);
      ++ip;
    } else if (ip == p.probabilities.end() || iq->first < ip->first) {
      total += detail::jsd_term(0.0, iq->second);
      ++iq;
    } else {
      total += detail::jsd_term(ip->second, iq->second);
      ++ip;
      ++iq;
    }
  }
  return detail::clamp_unit(total);
}

/// Same measure on dense count vectors over one rule index.
inline double jsd_counts(const std::vector<double>& a, const std::vector<double>& b) {
  double ta = 0, tb = 0;
  for (double v : a) ta += v;
  for (double v : b) tb += v;
  if (ta <= 0 || tb <= 0) throw DataError("JSD of an empty distribution");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += detail::jsd_term(a[i] / ta, b[i] / tb);
  return detail::clamp_unit(total);
}

// ---------------------------------------------------------------------------
// Agent matrix

struct JsdMatrix {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> values;
};

namespace detail {

/// Numeric ids sort numerically ("2" < "10"), everything else lexically.
inline bool id_less(const std::string& a, const std::string& b) {
  auto numeric = [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  if (numeric(a) && numeric(b) && a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

}  // namespace detail

/// One distribution per agent (persona id, or speaker id when untagged) from
/// all of that agent's utterances, and the JSD between every pair.
inline JsdMatrix pairwise_jsd_matrix(const Corpus& corpus, bool include_lexical = false) {
  std::map<std::string, RuleCounts> by_agent;
  for (const auto& conv : corpus)
    for (const auto& u : conv.utterances) {
      RuleCounts& counts = by_agent[conv.agent_of(u.speaker)];
      for (const auto& r : utterance_rules(u, include_lexical)) ++counts[r.to_string()];
    }
  if (by_agent.size() < 2) throw DataError("JSD matrix needs at least two personas");
  JsdMatrix m;
  std::vector<RuleDistribution> dists;
  for (const auto& [id, counts] : by_agent) m.ids.push_back(id);
  std::sort(m.ids.begin(), m.ids.end(), detail::id_less);
  for (const auto& id : m.ids) {
    const RuleCounts& counts = by_agent.at(id);
    if (counts.empty()) throw DataError("persona " + id + " has no rules");
    dists.push_back(rule_distribution(counts));
  }
  const std::size_t k = m.ids.size();
  m.values.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) m.values[i][j] = m.values[j][i] = jsd(dists[i], dists[j]);
  return m;
}

inline std::string jsd_matrix_csv(const JsdMatrix& m) {
  std::string out = "persona";
  for (const auto& id : m.ids) out += "," + util::csv_field(id);
  out += "\n";
  for (std::size_t i = 0; i < m.ids.size(); ++i) {
    out += util::csv_field(m.ids[i]);
    for (double v : m.values[i]) out += "," + util::format_double(v);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Split trajectories

using AgentPair = std::pair<std::string, std::string>;

/// Per-split aggregated counts for the two agents of a fixed pair.
struct SplitDistributions {
  std::size_t split_index = 0;
  RuleCounts first;
  RuleCounts second;
  /// Conversations that reach this split.
  std::size_t n_conversations = 0;
  /// Undefined when either agent has no rules in the split.
  std::optional<double> jsd;
};

namespace detail {

/// Rule-interned per-conversation split counts, reused across bootstrap
/// resamples.
class TrajectoryData {
 public:
  TrajectoryData(const Corpus& corpus, const AgentPair& pair, std::size_t split_words, bool include_lexical) {
    if (split_words == 0) throw UsageError("split width must be positive");
    convs_.reserve(corpus.size());
    for (const auto& conv : corpus) {
      const std::string& a0 = conv.agent_of(conv.participants[0].speaker);
      const std::string& a1 = conv.agent_of(conv.participants[1].speaker);
      if (!((a0 == pair.first && a1 == pair.second) || (a0 == pair.second && a1 == pair.first)))
        throw DataError("conversation " + conv.id + " is between " + a0 + " and " + a1 + ", not " + pair.first +
                        " and " + pair.second);
      PerConversation pc;
      std::size_t start = 0;
      for (const auto& u : conv.utterances) {
        const std::size_t wc = u.word_count();
        const double mid = static_cast<double>(start) + 0.5 * static_cast<double>(wc);
        start += wc;
        const auto split = static_cast<std::size_t>(std::floor(mid / static_cast<double>(split_words)));
        if (pc.splits.size() <= split) pc.splits.resize(split + 1);
        const int agent = conv.agent_of(u.speaker) == pair.first ? 0 : 1;
        for (const auto& r : utterance_rules(u, include_lexical)) pc.splits[split][agent].push_back(intern(r.to_string()));
      }
      for (auto& s : pc.splits)
        for (auto& v : s) std::sort(v.begin(), v.end());
      n_splits_ = std::max(n_splits_, pc.splits.size());
      convs_.push_back(std::move(pc));
    }
  }

  std::size_t n_conversations() const { return convs_.size(); }
  std::size_t n_splits() const { return n_splits_; }
  std::size_t n_rules() const { return names_.size(); }
  const std::string& rule_name(std::size_t id) const { return names_[id]; }

  std::size_t reach(std::size_t conv) const { return convs_[conv].splits.size(); }

  /// counts[split][agent][rule] over the given conversations (repeats allowed).
  std::vector<std::array<std::vector<double>, 2>> aggregate(const std::vector<std::size_t>& picks) const {
    std::vector<std::array<std::vector<double>, 2>> out(n_splits_);
    for (auto& s : out)
      for (auto& v : s) v.assign(names_.size(), 0.0);
    for (std::size_t c : picks) {
      const auto& pc = convs_[c];
      for (std::size_t s = 0; s < pc.splits.size(); ++s)
        for (int a = 0; a < 2; ++a)
          for (std::size_t r : pc.splits[s][a]) out[s][a][r] += 1.0;
    }
    return out;
  }

  /// JSD per split, empty where undefined.
  std::vector<std::optional<double>> jsd_per_split(const std::vector<std::size_t>& picks) const {
    auto counts = aggregate(picks);
    std::vector<std::optional<double>> out(n_splits_);
    for (std::size_t s = 0; s < n_splits_; ++s) {
      double ta = 0, tb = 0;
      for (double v : counts[s][0]) ta += v;
      for (double v : counts[s][1]) tb += v;
      if (ta > 0 && tb > 0) out[s] = jsd_counts(counts[s][0], counts[s][1]);
    }
    return out;
  }

 private:
  struct PerConversation {
    std::vector<std::array<std::vector<std::size_t>, 2>> splits;
  };

  std::size_t intern(const std::string& rule) {
    auto [it, fresh] = ids_.try_emplace(rule, names_.size());
    if (fresh) names_.push_back(rule);
    return it->second;
  }

  std::vector<PerConversation> convs_;
  std::unordered_map<std::string, std::size_t> ids_;
  std::vector<std::string> names_;
  std::size_t n_splits_ = 0;
};

}  // namespace detail

/// Assigns each utterance to the split holding its midpoint word position
/// and aggregates per-agent rule counts over all conversations.
inline std::vector<SplitDistributions> split_trajectory(const Corpus& corpus, const AgentPair& pair,
                                                        std::size_t split_words = 200, bool include_lexical = false) {
  detail::TrajectoryData data(corpus, pair, split_words, include_lexical);
  std::vector<std::size_t> all(data.n_conversations());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto counts = data.aggregate(all);
  const auto values = data.jsd_per_split(all);
  std::vector<SplitDistributions> out(data.n_splits());
  for (std::size_t s = 0; s < out.size(); ++s) {
    out[s].split_index = s;
    for (int a = 0; a < 2; ++a) {
      RuleCounts& target = a == 0 ? out[s].first : out[s].second;
      for (std::size_t r = 0; r < data.n_rules(); ++r)
        if (counts[s][a][r] > 0) target[data.rule_name(r)] = static_cast<std::size_t>(counts[s][a][r]);
    }
    for (std::size_t c = 0; c < data.n_conversations(); ++c)
      if (data.reach(c) > s) ++out[s].n_conversations;
    out[s].jsd = values[s];
  }
  return out;
}

struct SplitStat {
  std::size_t split_index = 0;
  double mean_jsd = 0.0;
  double std_jsd = 0.0;
  std::size_t n_conversations = 0;
  /// Resamples in which the split's JSD was defined.
  std::size_t n_defined = 0;
};

struct TrajectoryReport {
  std::size_t split_words = 200;
  std::size_t bootstrap_count = 100;
  std::vector<SplitStat> splits;
};

/// B resamples of the conversations, with replacement and of the corpus
/// size; per split, the mean and (population) standard deviation of the JSD
/// over the resamples where it is defined. Resample b draws from its own
/// substream, so thread count never changes the result.
inline TrajectoryReport bootstrap_trajectory(const Corpus& corpus, const AgentPair& pair, std::size_t resamples = 100,
                                             std::uint64_t seed = 1, std::size_t split_words = 200,
                                             bool include_lexical = false, unsigned threads = 1) {
  if (corpus.size() < 2) throw DataError("bootstrap needs at least two conversations");
  if (resamples == 0) throw UsageError("bootstrap count must be positive");
  detail::TrajectoryData data(corpus, pair, split_words, include_lexical);
  const std::size_t n = data.n_conversations();
  std::vector<std::vector<std::optional<double>>> per_resample(resamples);
  util::parallel_for(resamples, threads, [&](std::size_t b) {
    auto rng = util::substream(seed, "bootstrap", static_cast<std::uint64_t>(b));
    std::vector<std::size_t> picks(n);
    for (auto& p : picks) p = util::uniform_index(rng, n);
    per_resample[b] = data.jsd_per_split(picks);
  });

  TrajectoryReport report;
  report.split_words = split_words;
  report.bootstrap_count = resamples;
  for (std::size_t s = 0; s < data.n_splits(); ++s) {
    std::vector<double> values;
    for (const auto& r : per_resample)
      if (s < r.size() && r[s]) values.push_back(*r[s]);
    if (values.empty()) continue;
    SplitStat st;
    st.split_index = s;
    double sum = 0;
    for (double v : values) sum += v;
    st.mean_jsd = sum / static_cast<double>(values.size());
    double ss = 0;
    for (double v : values) ss += (v - st.mean_jsd) * (v - st.mean_jsd);
    st.std_jsd = std::sqrt(ss / static_cast<double>(values.size()));
    st.n_defined = values.size();
    for (std::size_t c = 0; c < n; ++c)
      if (data.reach(c) > s) ++st.n_conversations;
    report.splits.push_back(st);
  }
  return report;
}

inline std::string trajectory_csv(const TrajectoryReport& report) {
  std::string out = "split_index,mean_jsd,std_jsd,n_conversations\n";
  for (const auto& s : report.splits)
    out += std::to_string(s.split_index) + "," + util::format_double(s.mean_jsd) + "," +
           util::format_double(s.std_jsd) + "," + std::to_string(s.n_conversations) + "\n";
  return out;
}

}  // namespace adaptometer
