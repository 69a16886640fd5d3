#pragma once

// End-to-end commands shared by the command-line tool and the tests. Each
// cmd_* function reads its inputs, writes every artifact atomically into the
// output directory and returns the paths it wrote.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaptometer/corpus.hpp"
#include "adaptometer/divergence.hpp"
#include "adaptometer/error.hpp"
#include "adaptometer/genconv.hpp"
#include "adaptometer/glmm.hpp"
#include "adaptometer/sampling.hpp"
#include "adaptometer/synth.hpp"
#include "adaptometer/util/io.hpp"

namespace adaptometer {

enum class JsdMode { kMatrix, kTrajectory };

struct RunConfig {
  std::filesystem::path corpus;
  CorpusFormat format = CorpusFormat::kParsed;
  TreebankOptions tree;

  SplitOptions split;
  SamplingConfig sampling;
  bool all_rules = false;
  /// Empty means the full pairwise formula.
  std::string formula;
  double alpha = 0.05;
  glmm::GlmmOptions glmm;

  JsdMode jsd_mode = JsdMode::kMatrix;
  AgentPair pair;
  std::size_t split_words = 200;
  std::size_t bootstrap = 100;

  genconv::GenerationConfig generation;
  bool dry_run = false;
  /// Bundled persona ids to pair up; empty means all of them.
  std::vector<int> personas;
  /// Fixed-pair mode: (persona a, persona b) repeated `fixed_pair_count` times.
  std::optional<std::pair<int, int>> fixed_pair;
  std::size_t fixed_pair_count = 0;

  SynthConfig synth;

  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
  unsigned threads = 1;
};

namespace detail {

/// Re-raises an error with the failing stage prepended, keeping its kind.
template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(name) + ": " + e.what());
  }
}

inline std::filesystem::path write_artifact(const RunConfig& cfg, const std::string& name, std::string_view contents,
                                            std::vector<std::filesystem::path>& written) {
  auto path = cfg.out_dir / name;
  util::atomic_write(path, contents);
  written.push_back(path);
  return path;
}

inline void require_corpus(const RunConfig& cfg) {
  if (cfg.corpus.empty()) throw UsageError("no corpus path given");
  if (!std::filesystem::exists(cfg.corpus)) throw UsageError("corpus file not found: " + cfg.corpus.string());
}

}  // namespace detail

/// The configuration as recorded in provenance.json. Deterministic, so
/// identical runs produce identical provenance files.
inline nlohmann::ordered_json provenance_json(const RunConfig& cfg, std::string_view command) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["tool"] = "adaptometer";
  j["command"] = command;
  j["seed"] = cfg.seed;
  if (!cfg.corpus.empty()) {
    j["corpus"] = cfg.corpus.string();
    j["format"] = to_string(cfg.format);
  }
  if (command == "analyze") {
    j["split"] = {{"prime_frac", cfg.split.prime_frac}, {"gap_frac", cfg.split.gap_frac},
                  {"include_lexical", cfg.split.include_lexical}};
    j["all_rules"] = cfg.all_rules;
    j["high_freq_exclusion_fraction"] = cfg.sampling.high_freq_exclusion_fraction;
    j["high_freq_mode"] = cfg.sampling.high_freq_mode == HighFrequencyMode::kTopTypes ? "top-types" : "relative";
    j["formula"] = cfg.formula.empty() ? glmm::ModelFormula::full_pairwise().to_string() : cfg.formula;
    j["alpha"] = cfg.alpha;
  } else if (command == "jsd") {
    j["mode"] = cfg.jsd_mode == JsdMode::kMatrix ? "matrix" : "trajectory";
    if (cfg.jsd_mode == JsdMode::kTrajectory) {
      j["pair"] = {cfg.pair.first, cfg.pair.second};
      j["split_words"] = cfg.split_words;
      j["bootstrap"] = cfg.bootstrap;
    }
  } else if (command == "generate") {
    j["endpoint"] = cfg.dry_run ? "dry-run" : cfg.generation.endpoint;
    j["model"] = cfg.generation.model;
    j["topic"] = cfg.generation.topic;
    j["word_threshold"] = cfg.generation.word_threshold;
    j["max_turns"] = cfg.generation.max_turns;
    j["repetition_threshold"] = cfg.generation.repetition_threshold;
    j["repetition_window"] = cfg.generation.repetition_window;
  } else if (command == "synth") {
    j["synth"] = synth_config_json(cfg.synth);
  }
  return j;
}

// ---------------------------------------------------------------------------
// stats

inline std::vector<std::filesystem::path> cmd_stats(const RunConfig& cfg) {
  detail::require_corpus(cfg);
  const Corpus corpus = detail::stage("load", [&] { return load_corpus(cfg.corpus, cfg.format, cfg.tree); });
  const CorpusStats st = corpus_stats(corpus, cfg.split.include_lexical);
  std::vector<std::filesystem::path> out;
  detail::write_artifact(cfg, "conversation_lengths.csv", histogram_csv(st.conversation_lengths, "words", "conversations"), out);
  detail::write_artifact(cfg, "utterance_lengths.csv", histogram_csv(st.utterance_lengths, "words", "utterances"), out);
  detail::write_artifact(cfg, "speaker_turns.csv", histogram_csv(st.speaker_turns, "turns", "speakers"), out);
  std::string summary = "metric,value\n";
  summary += "conversations," + std::to_string(st.conversations) + "\n";
  summary += "utterances," + std::to_string(st.utterances) + "\n";
  summary += "words," + std::to_string(st.words) + "\n";
  summary += "rule_types," + std::to_string(st.rule_types) + "\n";
  summary += "rule_tokens," + std::to_string(st.rule_tokens) + "\n";
  detail::write_artifact(cfg, "summary.csv", summary, out);
  detail::write_artifact(cfg, "provenance.json", provenance_json(cfg, "stats").dump(2) + "\n", out);
  return out;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalysisResult {
  SplitCorpus split;
  RuleFrequencyTable frequencies;
  std::set<std::string> eligible;
  SamplingReport sampling;
  CenteringReport centering;
  std::vector<PrimeSample> samples;  ///< centered
  glmm::SelectionResult selection;
};

/// split → frequency table → filter → sample → center → backward selection.
inline AnalysisResult analyze_corpus(const Corpus& corpus, const RunConfig& cfg) {
  AnalysisResult r;
  SamplingConfig sampling = cfg.all_rules ? SamplingConfig::all_rules(cfg.seed) : cfg.sampling;
  sampling.seed = cfg.seed;
  r.split = detail::stage("split", [&] {
    auto s = split_corpus(corpus, cfg.split);
    if (s.conversations.size() < 2) throw DataError("fewer than two conversations survive the split");
    return s;
  });
  r.frequencies = build_frequency_table(r.split.conversations);
  r.eligible = detail::stage("filter", [&] { return filter_rules(r.frequencies, sampling); });
  auto raw = detail::stage("sample", [&] {
    return build_samples(r.split.conversations, r.frequencies, r.eligible, sampling, &r.sampling);
  });
  r.samples = detail::stage("center", [&] { return center(std::move(raw), &r.centering); });
  const glmm::ModelFormula formula =
      cfg.formula.empty() ? glmm::ModelFormula::full_pairwise() : glmm::parse_formula(cfg.formula);
  glmm::GlmmOptions gopts = cfg.glmm;
  gopts.threads = cfg.threads;
  r.selection = detail::stage("fit", [&] { return glmm::backward_select(r.samples, formula, cfg.alpha, gopts); });
  return r;
}

inline std::vector<std::filesystem::path> cmd_analyze(const RunConfig& cfg) {
  detail::require_corpus(cfg);
  const Corpus corpus = detail::stage("load", [&] { return load_corpus(cfg.corpus, cfg.format, cfg.tree); });
  const AnalysisResult r = analyze_corpus(corpus, cfg);
  std::vector<std::filesystem::path> out;

  nlohmann::ordered_json split = {{"conversations", r.split.conversations.size()},
                                  {"excluded", nlohmann::ordered_json::array()}};
  for (const auto& [id, reason] : r.split.excluded) split["excluded"].push_back({{"conv_id", id}, {"reason", reason}});
  detail::write_artifact(cfg, "split_report.json", split.dump(2) + "\n", out);

  std::string freq = "rule,count,eligible\n";
  for (const auto& [rule, n] : r.frequencies.counts)
    freq += util::csv_field(rule) + "," + std::to_string(n) + "," + (r.eligible.count(rule) ? "1" : "0") + "\n";
  detail::write_artifact(cfg, "rule_frequencies.csv", freq, out);

  detail::write_artifact(cfg, "samples.csv", samples_to_csv(r.samples), out);

  auto report = glmm::wald_report_json(r.selection.fit, &r.selection.trace);
  report["formula"] = r.selection.formula.to_string();
  report["units"] = r.sampling.units;
  report["skipped_empty_prime"] = r.sampling.skipped_empty_prime;
  report["centering"] = {{"ln_freq_mean", r.centering.ln_freq_mean}, {"ln_size_mean", r.centering.ln_size_mean}};
  detail::write_artifact(cfg, "fit_report.json", report.dump(2) + "\n", out);
  detail::write_artifact(cfg, "fit_report.txt", glmm::wald_report_text(r.selection.fit), out);
  detail::write_artifact(cfg, "provenance.json", provenance_json(cfg, "analyze").dump(2) + "\n", out);
  return out;
}

// ---------------------------------------------------------------------------
// jsd

inline std::vector<std::filesystem::path> cmd_jsd(const RunConfig& cfg) {
  detail::require_corpus(cfg);
  const Corpus corpus = detail::stage("load", [&] { return load_corpus(cfg.corpus, cfg.format, cfg.tree); });
  std::vector<std::filesystem::path> out;
  if (cfg.jsd_mode == JsdMode::kMatrix) {
    const auto m = detail::stage("jsd", [&] { return pairwise_jsd_matrix(corpus, cfg.split.include_lexical); });
    detail::write_artifact(cfg, "jsd_matrix.csv", jsd_matrix_csv(m), out);
  } else {
    if (cfg.pair.first.empty() || cfg.pair.second.empty()) throw UsageError("trajectory mode needs an agent pair");
    const auto t = detail::stage("trajectory", [&] {
      return bootstrap_trajectory(corpus, cfg.pair, cfg.bootstrap, cfg.seed, cfg.split_words,
                                  cfg.split.include_lexical, cfg.threads);
    });
    detail::write_artifact(cfg, "trajectory.csv", trajectory_csv(t), out);
  }
  detail::write_artifact(cfg, "provenance.json", provenance_json(cfg, "jsd").dump(2) + "\n", out);
  return out;
}

// ---------------------------------------------------------------------------
// generate

inline std::vector<genconv::PersonaSpec> selected_personas(const RunConfig& cfg) {
  if (cfg.personas.empty()) return genconv::bundled_personas();
  std::vector<genconv::PersonaSpec> out;
  for (int id : cfg.personas) out.push_back(genconv::persona_by_id(id));
  return out;
}

/// With `transport` null, an HTTP transport is built from the config (or a
/// canned one for dry runs).
inline std::vector<std::filesystem::path> cmd_generate(const RunConfig& cfg,
                                                       genconv::ChatTransport* transport = nullptr) {
  std::unique_ptr<genconv::ChatTransport> owned;
  if (!transport) {
    if (cfg.dry_run) {
      owned = genconv::canned_transport(cfg.seed);
    } else {
      const char* key = std::getenv(cfg.generation.api_key_env.c_str());
      if (!key || !*key)
        throw UsageError("environment variable " + cfg.generation.api_key_env + " holding the API key is not set");
      genconv::HttpTransportConfig http;
      http.endpoint = cfg.generation.endpoint;
      http.api_key = key;
      http.timeout_s = cfg.generation.timeout_s;
      http.retry = cfg.generation.retry;
      http.requests_per_minute = cfg.generation.requests_per_minute;
      owned = std::make_unique<genconv::HttpChatTransport>(std::move(http));
    }
    transport = owned.get();
  }
  const auto result = detail::stage("generate", [&] {
    if (cfg.fixed_pair)
      return genconv::generate_fixed_pair(genconv::persona_by_id(cfg.fixed_pair->first),
                                          genconv::persona_by_id(cfg.fixed_pair->second), cfg.fixed_pair_count,
                                          cfg.generation, *transport);
    return genconv::generate_round_robin(selected_personas(cfg), cfg.generation, *transport);
  });
  std::vector<std::filesystem::path> out;
  detail::write_artifact(cfg, "raw_transcripts.jsonl", write_corpus_jsonl(result.raw_corpus(), CorpusFormat::kTranscript),
                         out);
  detail::write_artifact(cfg, "transcripts.jsonl",
                         write_corpus_jsonl(result.analysis_corpus(), CorpusFormat::kTranscript), out);
  detail::write_artifact(cfg, "exclusion_report.json", genconv::exclusion_report_json(result).dump(2) + "\n", out);
  detail::write_artifact(cfg, "provenance.json", provenance_json(cfg, "generate").dump(2) + "\n", out);
  return out;
}

// ---------------------------------------------------------------------------
// synth

inline std::vector<std::filesystem::path> cmd_synth(const RunConfig& cfg) {
  SynthConfig sc = cfg.synth;
  sc.seed = cfg.seed;
  const Corpus corpus = detail::stage("synth", [&] { return generate_corpus(sc, cfg.threads); });
  std::vector<std::filesystem::path> out;
  detail::write_artifact(cfg, "synth_corpus.jsonl", write_corpus_jsonl(corpus, CorpusFormat::kRules), out);
  RunConfig recorded = cfg;
  recorded.synth = sc;
  detail::write_artifact(cfg, "synth_config.json", synth_config_json(sc).dump(2) + "\n", out);
  detail::write_artifact(cfg, "provenance.json", provenance_json(recorded, "synth").dump(2) + "\n", out);
  return out;
}

}  // namespace adaptometer
