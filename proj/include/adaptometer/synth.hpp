#pragma once

// Synthetic rule-level corpora with a planted cross-speaker adaptation
// effect. Each speaker draws rules from an urn; every rule a speaker emits
// multiplies the partner's weight on it by (1 + lambda) for the rest of the
// conversation.

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaptometer/corpus.hpp"
#include "adaptometer/error.hpp"
#include "adaptometer/treebank.hpp"
#include "adaptometer/util/parallel.hpp"
#include "adaptometer/util/rng.hpp"

namespace adaptometer {

struct SynthConfig {
  std::size_t vocabulary = 50;
  double zipf_exponent = 1.1;
  double lambda = 0.0;
  std::size_t conversations = 500;
  std::size_t turns = 10;
  std::size_t rules_per_turn = 8;
  std::size_t words_per_turn = 80;
  std::uint64_t seed = 1;
  /// Both speakers in every conversation are the same two agents "A" and
  /// "B" (persona-tagged), each with a fixed tilt of the base distribution.
  bool fixed_pair = false;
  /// Standard deviation of the log-weight tilt per agent; 0 keeps speakers
  /// exchangeable.
  double persona_spread = 0.0;
};

inline void validate(const SynthConfig& cfg) {
  if (cfg.vocabulary < 2) throw UsageError("synthetic vocabulary needs at least two rules");
  if (!(cfg.zipf_exponent >= 0) || !std::isfinite(cfg.zipf_exponent)) throw UsageError("Zipf exponent must be >= 0");
  if (!(cfg.lambda >= 0) || !std::isfinite(cfg.lambda)) throw UsageError("adaptation strength must be >= 0");
  if (!(cfg.persona_spread >= 0) || !std::isfinite(cfg.persona_spread)) throw UsageError("persona spread must be >= 0");
  if (cfg.conversations == 0 || cfg.turns == 0 || cfg.rules_per_turn == 0)
    throw UsageError("conversations, turns and rules per turn must be positive");
}

/// Normalized Zipf weights: rank r (0-based) gets 1/(r+1)^s.
inline std::vector<double> zipf_distribution(std::size_t v, double s) {
  std::vector<double> w(v);
  double total = 0;
  for (std::size_t r = 0; r < v; ++r) total += w[r] = std::pow(static_cast<double>(r + 1), -s);
  for (double& x : w) x /= total;
  return w;
}

/// "X<r>→Y<2r> Y<2r+1>": opaque but production-shaped.
inline ProductionRule synth_rule(std::size_t r) {
  return ProductionRule{"X" + std::to_string(r), {"Y" + std::to_string(2 * r), "Y" + std::to_string(2 * r + 1)}, false};
}

/// Weighted draw with replacement over rule indices.
class RuleUrn {
 public:
  explicit RuleUrn(std::vector<double> weights) : weights_(std::move(weights)) {
    if (weights_.empty()) throw UsageError("urn needs at least one rule");
    for (double w : weights_)
      if (!(w >= 0) || !std::isfinite(w)) throw UsageError("urn weights must be finite and non-negative");
    renormalize();
  }

  std::size_t draw(std::mt19937_64& rng) const {
    double u = util::uniform01(rng) * total_;
    for (std::size_t r = 0; r < weights_.size(); ++r) {
      if (u < weights_[r]) return r;
      u -= weights_[r];
    }
    // Rounding left u just past the end; take the last positive weight.
    for (std::size_t r = weights_.size(); r-- > 0;)
      if (weights_[r] > 0) return r;
    return 0;
  }

  void boost(std::size_t r, double factor) {
    total_ += weights_[r] * (factor - 1.0);
    weights_[r] *= factor;
  }

  /// Rescales to sum 1; keeps repeated boosts from overflowing.
  void renormalize() {
    double t = 0;
    for (double w : weights_) t += w;
    if (!(t > 0)) throw UsageError("urn weights sum to zero");
    for (double& w : weights_) w /= t;
    total_ = 1.0;
  }

  double probability(std::size_t r) const { return weights_[r] / total_; }
  std::size_t size() const { return weights_.size(); }

 private:
  std::vector<double> weights_;
  double total_ = 0.0;
};

namespace detail {

inline double standard_normal(std::mt19937_64& rng) {
  // Box-Muller on the fixed uniform mapping, so streams match across
  // standard libraries.
  const double u1 = 1.0 - util::uniform01(rng);
  const double u2 = util::uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline std::vector<double> tilted(const std::vector<double>& base, double spread, std::mt19937_64 rng) {
  std::vector<double> w = base;
  if (spread > 0)
    for (double& x : w) x *= std::exp(spread * standard_normal(rng));
  return w;
}

}  // namespace detail

inline Conversation generate_conversation(const SynthConfig& cfg, std::size_t index, const std::vector<double>& base) {
  static const std::array<std::string, 2> kSpeakers = {"A", "B"};
  Conversation conv;
  char id[32];
  std::snprintf(id, sizeof id, "synth-%05zu", index);
  conv.id = id;

  std::vector<RuleUrn> urns;
  for (int s = 0; s < 2; ++s) {
    conv.participants[s].speaker = kSpeakers[s];
    if (cfg.fixed_pair) conv.participants[s].persona = kSpeakers[s];
    auto tilt_rng = cfg.fixed_pair ? util::substream(cfg.seed, "persona", kSpeakers[s])
                                   : util::substream(cfg.seed, "persona", static_cast<std::uint64_t>(index), kSpeakers[s]);
    urns.emplace_back(detail::tilted(base, cfg.persona_spread, tilt_rng));
  }

  auto rng = util::substream(cfg.seed, "conversation", static_cast<std::uint64_t>(index));
  const double factor = 1.0 + cfg.lambda;
  for (std::size_t t = 0; t < cfg.turns; ++t) {
    const std::size_t s = t % 2;
    Utterance u;
    u.speaker = kSpeakers[s];
    u.index = t;
    u.explicit_word_count = cfg.words_per_turn;
    std::vector<ProductionRule> rules;
    rules.reserve(cfg.rules_per_turn);
    for (std::size_t k = 0; k < cfg.rules_per_turn; ++k) {
      const std::size_t r = urns[s].draw(rng);
      rules.push_back(synth_rule(r));
      if (factor != 1.0) urns[1 - s].boost(r, factor);
    }
    urns[1 - s].renormalize();
    u.rules = std::move(rules);
    conv.utterances.push_back(std::move(u));
  }
  return conv;
}

/// Conversations are generated independently from per-conversation
/// substreams, so the corpus does not depend on the thread count.
inline Corpus generate_corpus(const SynthConfig& cfg, unsigned threads = 1) {
  validate(cfg);
  const auto base = zipf_distribution(cfg.vocabulary, cfg.zipf_exponent);
  Corpus corpus(cfg.conversations);
  util::parallel_for(cfg.conversations, threads,
                     [&](std::size_t i) { corpus[i] = generate_conversation(cfg, i, base); });
  return corpus;
}

inline nlohmann::ordered_json synth_config_json(const SynthConfig& cfg) {
  return {{"vocabulary", cfg.vocabulary},       {"zipf_exponent", cfg.zipf_exponent},
          {"lambda", cfg.lambda},               {"conversations", cfg.conversations},
          {"turns", cfg.turns},                 {"rules_per_turn", cfg.rules_per_turn},
          {"words_per_turn", cfg.words_per_turn}, {"seed", cfg.seed},
          {"fixed_pair", cfg.fixed_pair},       {"persona_spread", cfg.persona_spread}};
}

/// Increase in the probability that a rule of probability p occurs at least
/// once when the number of independent draws doubles from 1 to 2.
inline double expected_repetition_gain(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw UsageError("probability must lie in [0, 1]");
  return p - p * p;
}

/// Fraction of `trials` size-n draw sets (with replacement, no adaptation)
/// that contain rule `rule`.
inline double simulate_occurrence_rate(const std::vector<double>& weights, std::size_t rule, std::size_t n,
                                       std::size_t trials, std::uint64_t seed) {
  RuleUrn urn(weights);
  if (rule >= urn.size()) throw UsageError("rule index out of range");
  auto rng = util::substream(seed, "occurrence");
  std::size_t hits = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    bool seen = false;
    for (std::size_t k = 0; k < n; ++k) seen |= urn.draw(rng) == rule;
    hits += seen;
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

}  // namespace adaptometer
