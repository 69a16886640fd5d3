#pragma once

// Regression dataset construction: for every (conversation, target speaker,
// eligible rule) unit, one row checking the partner's PRIME of the same
// conversation and one row checking the PRIME of a random other conversation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "adaptometer/corpus.hpp"
#include "adaptometer/error.hpp"
#include "adaptometer/util/io.hpp"
#include "adaptometer/util/rng.hpp"

namespace adaptometer {

struct RuleFrequencyTable {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;

  std::size_t count(const std::string& rule) const {
    auto it = counts.find(rule);
    return it == counts.end() ? 0 : it->second;
  }
};

/// How the "disproportionately frequent" rules are chosen.
enum class HighFrequencyMode {
  /// Drop the ceil(fraction * #types) most frequent rule types.
  kTopTypes,
  /// Drop every rule whose share of all tokens is at least `fraction`.
  kRelativeFrequency,
};

struct SamplingConfig {
  std::uint64_t seed = 1;
  bool exclude_hapax = true;
  double high_freq_exclusion_fraction = 0.003;
  HighFrequencyMode high_freq_mode = HighFrequencyMode::kTopTypes;
  /// Only takes effect when the corpus carries persona ids.
  bool exclude_same_persona_pairs = true;

  /// The "all rules" variant: no hapax or high-frequency filtering.
  static SamplingConfig all_rules(std::uint64_t seed) {
    SamplingConfig cfg;
    cfg.seed = seed;
    cfg.exclude_hapax = false;
    cfg.high_freq_exclusion_fraction = 0.0;
    return cfg;
  }
};

struct PrimeSample {
  int prime = 0;
  int same_conv = 0;
  double ln_freq = 0.0;
  double ln_size = 0.0;
  std::string conv_id;
  std::string speaker_id;
  std::string rule;

  bool operator==(const PrimeSample&) const = default;
};

struct SamplingReport {
  std::size_t units = 0;
  /// Units dropped because the partner's PRIME set was empty.
  std::size_t skipped_empty_prime = 0;
};

struct CenteringReport {
  double ln_freq_mean = 0.0;
  double ln_size_mean = 0.0;
};

/// Corpus-wide token counts over the PRIME and TARGET sections of both
/// speakers in every conversation.
inline RuleFrequencyTable build_frequency_table(const std::vector<SplitSections>& sections) {
  RuleFrequencyTable table;
  auto add = [&](const std::map<std::string, RuleCounts>& per_speaker) {
    for (const auto& [speaker, counts] : per_speaker)
      for (const auto& [rule, n] : counts) {
        table.counts[rule] += n;
        table.total += n;
      }
  };
  for (const auto& s : sections) {
    add(s.prime);
    add(s.target);
  }
  return table;
}

/// Rules eligible for sampling after the hapax and high-frequency filters.
/// Ties in the frequency ranking are broken by rule string.
inline std::set<std::string> filter_rules(const RuleFrequencyTable& table, const SamplingConfig& cfg) {
  if (table.counts.empty()) throw DataError("rule frequency table is empty");
  if (!(cfg.high_freq_exclusion_fraction >= 0.0 && cfg.high_freq_exclusion_fraction < 1.0))
    throw UsageError("high_freq_exclusion_fraction must lie in [0, 1)");

  // Hapax rules leave first; the high-frequency ranking covers what remains.
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (const auto& [rule, n] : table.counts)
    if (!(cfg.exclude_hapax && n == 1)) ranked.emplace_back(rule, n);

  std::set<std::string> removed;
  if (cfg.high_freq_mode == HighFrequencyMode::kTopTypes) {
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    const auto n_drop = static_cast<std::size_t>(
        std::ceil(cfg.high_freq_exclusion_fraction * static_cast<double>(ranked.size()) - 1e-12));
    for (std::size_t i = 0; i < std::min(n_drop, ranked.size()); ++i) removed.insert(ranked[i].first);
  } else if (cfg.high_freq_exclusion_fraction > 0.0) {
    for (const auto& [rule, n] : ranked)
      if (static_cast<double>(n) >= cfg.high_freq_exclusion_fraction * static_cast<double>(table.total))
        removed.insert(rule);
  }

  std::set<std::string> eligible;
  for (const auto& [rule, n] : ranked)
    if (!removed.count(rule)) eligible.insert(rule);
  if (eligible.empty()) throw DataError("every rule was filtered out; nothing left to sample");
  return eligible;
}

namespace detail {

inline bool shares_persona(const SplitSections& a, const SplitSections& b) {
  for (const auto& pa : a.participants)
    for (const auto& pb : b.participants)
      if (pa.persona && pb.persona && *pa.persona == *pb.persona) return true;
  return false;
}

inline bool persona_tagged(const std::vector<SplitSections>& sections) {
  for (const auto& s : sections)
    for (const auto& p : s.participants)
      if (p.persona) return true;
  return false;
}

}  // namespace detail

/// Builds uncentered rows, two per sampling unit (same_conv=1 then 0).
/// Units are visited in corpus order, target speakers in participant order
/// and rules in lexicographic order. Each unit draws its foreign PRIME set
/// from its own substream keyed by (conv_id, speaker, rule).
inline std::vector<PrimeSample> build_samples(const std::vector<SplitSections>& sections,
                                              const RuleFrequencyTable& table,
                                              const std::set<std::string>& eligible, const SamplingConfig& cfg,
                                              SamplingReport* report = nullptr) {
  if (eligible.empty()) throw DataError("no eligible rules");
  struct PrimeSet {
    std::size_t conv;
    const RuleCounts* rules;
  };
  const bool by_persona = cfg.exclude_same_persona_pairs && detail::persona_tagged(sections);

  std::vector<PrimeSet> all_primes;
  for (std::size_t c = 0; c < sections.size(); ++c)
    for (const auto& p : sections[c].participants) {
      const RuleCounts& rules = sections[c].prime.at(p.speaker);
      if (!rules.empty()) all_primes.push_back({c, &rules});
    }

  SamplingReport local;
  std::vector<PrimeSample> rows;
  std::vector<const PrimeSet*> candidates;
  for (std::size_t c = 0; c < sections.size(); ++c) {
    const SplitSections& conv = sections[c];
    candidates.clear();
    for (const auto& ps : all_primes) {
      if (ps.conv == c) continue;
      if (by_persona && detail::shares_persona(conv, sections[ps.conv])) continue;
      candidates.push_back(&ps);
    }

    for (const auto& participant : conv.participants) {
      const std::string& speaker = participant.speaker;
      const RuleCounts& target = conv.target.at(speaker);
      const RuleCounts& partner_prime = conv.prime.at(conv.partner_of(speaker));
      for (const auto& [rule, n] : target) {
        if (!eligible.count(rule)) continue;
        if (partner_prime.empty()) {
          ++local.skipped_empty_prime;
          continue;
        }
        if (candidates.empty())
          throw DataError("conversation " + conv.conv_id + ": no eligible conversation to draw a foreign PRIME from");
        ++local.units;
        const double ln_freq = std::log(static_cast<double>(table.count(rule)));

        PrimeSample same;
        same.prime = partner_prime.count(rule) ? 1 : 0;
        same.same_conv = 1;
        same.ln_freq = ln_freq;
        same.ln_size = std::log(static_cast<double>(partner_prime.size()));
        same.conv_id = conv.conv_id;
        same.speaker_id = speaker;
        same.rule = rule;

        auto rng = util::substream(cfg.seed, conv.conv_id, speaker, rule);
        const PrimeSet& foreign = *candidates[util::uniform_index(rng, candidates.size())];
        PrimeSample other = same;
        other.prime = foreign.rules->count(rule) ? 1 : 0;
        other.same_conv = 0;
        other.ln_size = std::log(static_cast<double>(foreign.rules->size()));

        rows.push_back(std::move(same));
        rows.push_back(std::move(other));
      }
    }
  }
  if (report) *report = local;
  return rows;
}

/// Mean-centers ln_freq and ln_size over all rows; same_conv is untouched.
inline std::vector<PrimeSample> center(std::vector<PrimeSample> samples, CenteringReport* report = nullptr) {
  if (samples.empty()) throw DataError("cannot center an empty sample table");
  // Two passes: the second removes the rounding left by the first, which
  // keeps re-centering a fixed point.
  CenteringReport total;
  for (int pass = 0; pass < 2; ++pass) {
    long double sf = 0, ss = 0;
    for (const auto& s : samples) {
      sf += s.ln_freq;
      ss += s.ln_size;
    }
    const double mf = static_cast<double>(sf / samples.size());
    const double ms = static_cast<double>(ss / samples.size());
    for (auto& s : samples) {
      s.ln_freq -= mf;
      s.ln_size -= ms;
    }
    total.ln_freq_mean += mf;
    total.ln_size_mean += ms;
  }
  if (report) *report = total;
  return samples;
}

inline constexpr const char* kSampleCsvHeader = "prime,same_conv,ln_freq_c,ln_size_c,conv_id,speaker_id,rule";

inline std::string samples_to_csv(const std::vector<PrimeSample>& samples) {
  std::string out = kSampleCsvHeader;
  out += '\n';
  for (const auto& s : samples) {
    out += std::to_string(s.prime);
    out += ',';
    out += std::to_string(s.same_conv);
    out += ',';
    out += util::format_double(s.ln_freq);
    out += ',';
    out += util::format_double(s.ln_size);
    out += ',';
    out += util::csv_field(s.conv_id);
    out += ',';
    out += util::csv_field(s.speaker_id);
    out += ',';
    out += util::csv_field(s.rule);
    out += '\n';
  }
  return out;
}

inline std::vector<PrimeSample> read_samples_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("sample table is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kSampleCsvHeader) throw DataError("unexpected sample table header: " + line);
  std::vector<PrimeSample> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto f = util::split_csv_line(line);
    if (f.size() != 7) throw DataError("sample table line " + std::to_string(lineno) + ": expected 7 fields");
    PrimeSample s;
    try {
      s.prime = std::stoi(f[0]);
      s.same_conv = std::stoi(f[1]);
      s.ln_freq = std::stod(f[2]);
      s.ln_size = std::stod(f[3]);
    } catch (const std::exception&) {
      throw DataError("sample table line " + std::to_string(lineno) + ": non-numeric field");
    }
    if ((s.prime != 0 && s.prime != 1) || (s.same_conv != 0 && s.same_conv != 1))
      throw DataError("sample table line " + std::to_string(lineno) + ": prime/same_conv must be 0 or 1");
    s.conv_id = f[4];
    s.speaker_id = f[5];
    s.rule = f[6];
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace adaptometer
