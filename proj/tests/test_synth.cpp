#include <cmath>

#include <gtest/gtest.h>

#include "adaptometer/divergence.hpp"
#include "adaptometer/pipeline.hpp"
#include "adaptometer/synth.hpp"

using namespace adaptometer;

namespace {

// Rule-index weights putting probability p on index 0.
std::vector<double> two_point(double p) { return {p, 1.0 - p}; }

RuleCounts speaker_counts(const Corpus& corpus, const std::string& speaker) {
  RuleCounts c;
  for (const auto& conv : corpus)
    for (const auto& u : conv.utterances)
      if (u.speaker == speaker)
        for (const auto& r : *u.rules) ++c[r.to_string()];
  return c;
}

RuleDistribution base_distribution(const SynthConfig& cfg) {
  const auto w = zipf_distribution(cfg.vocabulary, cfg.zipf_exponent);
  RuleDistribution d;
  for (std::size_t r = 0; r < w.size(); ++r) d.probabilities[synth_rule(r).to_string()] = w[r];
  return d;
}

}  // namespace

TEST(RepetitionGain, Values) {
  EXPECT_EQ(expected_repetition_gain(0.2), 0.16);
  EXPECT_EQ(expected_repetition_gain(0.0), 0.0);
  EXPECT_EQ(expected_repetition_gain(1.0), 0.0);
  EXPECT_NEAR(expected_repetition_gain(0.3), 1 - 0.7 * 0.7 - 0.3, 1e-15);
  EXPECT_THROW(expected_repetition_gain(1.5), UsageError);
  EXPECT_THROW(expected_repetition_gain(-0.1), UsageError);
}

TEST(RepetitionGain, MonteCarloAtPointThree) {
  const std::size_t trials = 1000000;
  const double one = simulate_occurrence_rate(two_point(0.3), 0, 1, trials, 1);
  const double two = simulate_occurrence_rate(two_point(0.3), 0, 2, trials, 2);
  // Independent estimates: SE of the difference from both binomial variances.
  const double se = std::sqrt(0.3 * 0.7 / trials + 0.51 * 0.49 / trials);
  EXPECT_NEAR(two - one, 0.21, 3 * se);
}

TEST(OccurrenceModel, MatchesOneMinusComplementPower) {
  const std::size_t trials = 200000;
  for (double p : {0.05, 0.2, 0.5}) {
    for (std::size_t n : {1u, 3u, 8u}) {
      const double expected = 1 - std::pow(1 - p, static_cast<double>(n));
      const double rate = simulate_occurrence_rate(two_point(p), 0, n, trials, 11);
      EXPECT_NEAR(rate, expected, 3 * std::sqrt(expected * (1 - expected) / trials)) << p << " " << n;
    }
  }
}

TEST(Zipf, Normalizes) {
  const auto w = zipf_distribution(50, 1.1);
  double total = 0;
  for (double x : w) total += x;
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_NEAR(w[0] / w[1], std::pow(2.0, 1.1), 1e-12);
  const auto flat = zipf_distribution(4, 0.0);
  for (double x : flat) EXPECT_DOUBLE_EQ(x, 0.25);
}

TEST(RuleUrn, BoostAndRenormalize) {
  RuleUrn urn({1.0, 1.0, 2.0});
  EXPECT_DOUBLE_EQ(urn.probability(2), 0.5);
  urn.boost(0, 3.0);
  EXPECT_DOUBLE_EQ(urn.probability(0), 0.5);
  urn.renormalize();
  EXPECT_DOUBLE_EQ(urn.probability(0), 0.5);
  EXPECT_DOUBLE_EQ(urn.probability(1), 1.0 / 6);
  EXPECT_THROW(RuleUrn({0.0, 0.0}), UsageError);
  EXPECT_THROW(RuleUrn({}), UsageError);
}

TEST(SynthCorpus, Shape) {
  SynthConfig cfg;
  cfg.conversations = 3;
  const auto corpus = generate_corpus(cfg);
  ASSERT_EQ(corpus.size(), 3u);
  EXPECT_EQ(corpus[1].id, "synth-00001");
  for (const auto& c : corpus) {
    ASSERT_EQ(c.utterances.size(), 10u);
    EXPECT_EQ(c.word_count(), 800u);
    for (std::size_t t = 0; t < 10; ++t) {
      EXPECT_EQ(c.utterances[t].speaker, t % 2 ? "B" : "A");
      EXPECT_EQ(c.utterances[t].rules->size(), 8u);
    }
  }
  EXPECT_EQ(synth_rule(3).to_string(), "X3→Y6 Y7");
}

TEST(SynthCorpus, SeedDeterminesBytes) {
  SynthConfig cfg;
  cfg.conversations = 20;
  cfg.lambda = 0.5;
  cfg.seed = 4;
  const auto a = write_corpus_jsonl(generate_corpus(cfg), CorpusFormat::kRules);
  EXPECT_EQ(a, write_corpus_jsonl(generate_corpus(cfg, 3), CorpusFormat::kRules));
  cfg.seed = 5;
  EXPECT_NE(a, write_corpus_jsonl(generate_corpus(cfg), CorpusFormat::kRules));
}

TEST(SynthCorpus, InvalidConfig) {
  SynthConfig cfg;
  cfg.vocabulary = 1;
  EXPECT_THROW(generate_corpus(cfg), UsageError);
  cfg = {};
  cfg.lambda = -0.1;
  EXPECT_THROW(generate_corpus(cfg), UsageError);
  cfg = {};
  cfg.turns = 0;
  EXPECT_THROW(generate_corpus(cfg), UsageError);
}

TEST(SynthCorpus, NullModelConvergesToBase) {
  SynthConfig cfg;
  const auto base = base_distribution(cfg);
  double previous = 1.0;
  for (std::size_t n : {20u, 200u, 2000u}) {
    cfg.conversations = n;
    const auto corpus = generate_corpus(cfg);
    const double a = jsd(rule_distribution(speaker_counts(corpus, "A")), base);
    const double b = jsd(rule_distribution(speaker_counts(corpus, "B")), base);
    EXPECT_LT(std::max(a, b), previous) << n;
    previous = std::max(a, b);
  }
  EXPECT_LT(previous, 0.002);
}

TEST(SynthCorpus, AdaptationRaisesCrossSpeakerReuse) {
  // With λ > 0 the responder's next turn shares more rules with the turn it
  // answers than under the null model.
  auto overlap = [](double lambda) {
    SynthConfig cfg;
    cfg.conversations = 300;
    cfg.lambda = lambda;
    std::size_t shared = 0;
    for (const auto& c : generate_corpus(cfg))
      for (std::size_t t = 1; t < c.utterances.size(); ++t) {
        std::set<std::string> prev;
        for (const auto& r : *c.utterances[t - 1].rules) prev.insert(r.to_string());
        for (const auto& r : *c.utterances[t].rules) shared += prev.count(r.to_string());
      }
    return shared;
  };
  EXPECT_GT(overlap(0.5), overlap(0.0));
}

TEST(SynthPipeline, SameConvEffectGrowsWithLambda) {
  // 20 seeds per λ through the analysis pipeline; a smaller corpus and a
  // conversation-intercept model keep this quick.
  RunConfig run;
  run.formula = "prime ~ ln_freq + same_conv + ln_size + (1 | conv_id)";
  std::vector<double> means;
  std::vector<double> null_betas;
  for (double lambda : {0.0, 0.25, 0.5}) {
    double sum = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      SynthConfig cfg;
      cfg.conversations = 120;
      cfg.lambda = lambda;
      cfg.seed = seed;
      run.seed = seed;
      const auto r = analyze_corpus(generate_corpus(cfg), run);
      const double beta = r.selection.fit.term("same_conv").beta;
      sum += beta;
      if (lambda == 0.0) null_betas.push_back(beta);
    }
    means.push_back(sum / 20);
  }
  EXPECT_LT(means[0], means[1]);
  EXPECT_LT(means[1], means[2]);
  // Exchangeable speakers under the null: the mean effect sits near zero.
  double sd = 0;
  for (double b : null_betas) sd += (b - means[0]) * (b - means[0]);
  sd = std::sqrt(sd / 19);
  EXPECT_LT(std::abs(means[0]), 3 * sd / std::sqrt(20.0));
}
