// adaptometer: corpus statistics, adaptation analysis, divergence
// trajectories, LLM conversation generation and synthetic corpora.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numerical failure.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adaptometer/adaptometer.hpp"

namespace {

using adaptometer::RunConfig;

std::pair<std::string, std::string> parse_pair(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos || comma == 0 || comma + 1 == text.size())
    throw adaptometer::UsageError("expected two comma-separated ids, got '" + text + "'");
  return {text.substr(0, comma), text.substr(comma + 1)};
}

void add_corpus_options(CLI::App* cmd, RunConfig& cfg, std::string& format) {
  cmd->add_option("--corpus", cfg.corpus, "Corpus JSONL file")->required();
  cmd->add_option("--format", format, "Corpus schema: transcript-jsonl, parsed-jsonl or rules-jsonl")
      ->check(CLI::IsMember({"transcript-jsonl", "parsed-jsonl", "rules-jsonl"}));
  cmd->add_flag("--include-lexical", cfg.split.include_lexical, "Count preterminal-to-word rules too");
  cmd->add_flag("!--keep-function-tags", cfg.tree.strip_function_tags, "Keep function tags such as NP-SBJ");
  cmd->add_flag("!--keep-traces", cfg.tree.drop_traces, "Keep -NONE- trace leaves");
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"Syntactic adaptation analysis for dialogue corpora"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI or TOML config file; command-line flags take precedence");
  app.add_option("--seed", cfg.seed, "Root seed for every stochastic stage")->capture_default_str();
  app.add_option("--out-dir", cfg.out_dir, "Output directory")->capture_default_str();
  app.add_option("--threads", cfg.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  std::string format = "parsed-jsonl";

  auto* stats = app.add_subcommand("stats", "Conversation, utterance and turn histograms");
  add_corpus_options(stats, cfg, format);

  auto* analyze = app.add_subcommand("analyze", "PRIME/TARGET sampling and mixed-model fit");
  add_corpus_options(analyze, cfg, format);
  analyze->add_option("--prime-frac", cfg.split.prime_frac, "Share of words in PRIME and in TARGET")
      ->capture_default_str();
  analyze->add_option("--gap-frac", cfg.split.gap_frac, "Share of words discarded between them")
      ->capture_default_str();
  analyze->add_flag("--all-rules", cfg.all_rules, "Disable hapax and high-frequency filtering");
  analyze->add_option("--high-freq-fraction", cfg.sampling.high_freq_exclusion_fraction,
                      "High-frequency exclusion fraction")
      ->capture_default_str();
  std::string high_freq_mode = "top-types";
  analyze->add_option("--high-freq-mode", high_freq_mode,
                      "top-types: drop that fraction of rule types; relative: drop rules above that share of tokens")
      ->check(CLI::IsMember({"top-types", "relative"}))
      ->capture_default_str();
  analyze->add_option("--formula", cfg.formula, "Model formula (default: full pairwise model)");
  analyze->add_option("--alpha", cfg.alpha, "Backward-selection threshold")->capture_default_str();
  analyze->add_option("--max-iter", cfg.glmm.max_iter, "Outer optimizer iterations")->capture_default_str();

  auto* jsd = app.add_subcommand("jsd", "Jensen-Shannon divergence matrix or split trajectory");
  add_corpus_options(jsd, cfg, format);
  std::string jsd_mode = "matrix";
  std::string pair;
  jsd->add_option("--mode", jsd_mode, "matrix or trajectory")
      ->check(CLI::IsMember({"matrix", "trajectory"}))
      ->capture_default_str();
  jsd->add_option("--pair", pair, "Agent pair for trajectories, e.g. 5,6");
  jsd->add_option("--split-words", cfg.split_words, "Words per split")->capture_default_str()->check(CLI::PositiveNumber);
  jsd->add_option("--bootstrap", cfg.bootstrap, "Bootstrap resamples")->capture_default_str()->check(CLI::PositiveNumber);

  auto* generate = app.add_subcommand("generate", "LLM-LLM conversations over a chat-completions API");
  auto& gen = cfg.generation;
  std::string fixed_pair;
  generate->add_option("--personas", cfg.personas, "Bundled persona ids to pair up (default: all 17)")->delimiter(',');
  generate->add_option("--fixed-pair", fixed_pair, "Generate --count conversations for one pair, e.g. 5,6");
  generate->add_option("--count", cfg.fixed_pair_count, "Conversations in fixed-pair mode");
  generate->add_flag("--dry-run", cfg.dry_run, "Use an offline canned transport; no network calls");
  generate->add_option("--endpoint", gen.endpoint, "Chat-completions URL")->capture_default_str();
  generate->add_option("--model", gen.model, "Model name")->capture_default_str();
  generate->add_option("--api-key-env", gen.api_key_env, "Environment variable holding the API key")
      ->capture_default_str();
  generate->add_option("--topic", gen.topic, "Conversation topic")->capture_default_str();
  generate->add_option("--threshold", gen.word_threshold, "Stop after the turn that passes this many words")
      ->capture_default_str();
  generate->add_option("--max-turns", gen.max_turns, "Safety cap on turns")->capture_default_str();
  generate->add_option("--timeout", gen.timeout_s, "Request timeout in seconds")->capture_default_str();
  generate->add_option("--max-attempts", gen.retry.max_attempts, "Attempts per request")->capture_default_str();
  generate->add_option("--backoff-base", gen.retry.backoff_base_s, "First retry delay in seconds")
      ->capture_default_str();
  generate->add_option("--rpm", gen.requests_per_minute, "Request rate limit; 0 disables")->capture_default_str();
  generate->add_option("--concurrency", gen.concurrency, "Conversations in flight")->capture_default_str();
  double temperature = 0, top_p = 0;
  int max_tokens = 0;
  auto* temp_opt = generate->add_option("--temperature", temperature, "Sampling temperature (default: provider's)");
  auto* top_p_opt = generate->add_option("--top-p", top_p, "Nucleus sampling (default: provider's)");
  auto* max_tokens_opt = generate->add_option("--max-tokens", max_tokens, "Reply token cap (default: provider's)");
  generate->add_option("--repetition-threshold", gen.repetition_threshold, "Trigram Jaccard threshold")
      ->capture_default_str();
  generate->add_option("--repetition-window", gen.repetition_window, "Trailing turns compared")
      ->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Synthetic rule-level corpus with a planted adaptation effect");
  auto& sc = cfg.synth;
  synth->add_option("--vocabulary", sc.vocabulary, "Rule types")->capture_default_str();
  synth->add_option("--zipf", sc.zipf_exponent, "Zipf exponent of the base distribution")->capture_default_str();
  synth->add_option("--lambda", sc.lambda, "Adaptation strength; 0 is the null model")->capture_default_str();
  synth->add_option("--conversations", sc.conversations, "Conversations")->capture_default_str();
  synth->add_option("--turns", sc.turns, "Turns per conversation")->capture_default_str();
  synth->add_option("--rules-per-turn", sc.rules_per_turn, "Rules drawn per turn")->capture_default_str();
  synth->add_option("--words-per-turn", sc.words_per_turn, "Nominal words per turn")->capture_default_str();
  synth->add_flag("--fixed-pair", sc.fixed_pair, "Same two persona-tagged agents in every conversation");
  synth->add_option("--persona-spread", sc.persona_spread, "Log-weight tilt per agent")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    cfg.format = adaptometer::parse_corpus_format(format);
    cfg.sampling.high_freq_mode = high_freq_mode == "relative" ? adaptometer::HighFrequencyMode::kRelativeFrequency
                                                               : adaptometer::HighFrequencyMode::kTopTypes;
    if (*temp_opt) gen.sampling.temperature = temperature;
    if (*top_p_opt) gen.sampling.top_p = top_p;
    if (*max_tokens_opt) gen.sampling.max_tokens = max_tokens;

    std::vector<std::filesystem::path> written;
    if (*stats) {
      written = adaptometer::cmd_stats(cfg);
    } else if (*analyze) {
      written = adaptometer::cmd_analyze(cfg);
    } else if (*jsd) {
      cfg.jsd_mode = jsd_mode == "trajectory" ? adaptometer::JsdMode::kTrajectory : adaptometer::JsdMode::kMatrix;
      if (!pair.empty()) cfg.pair = parse_pair(pair);
      written = adaptometer::cmd_jsd(cfg);
    } else if (*generate) {
      if (!fixed_pair.empty()) {
        auto [a, b] = parse_pair(fixed_pair);
        cfg.fixed_pair = {std::stoi(a), std::stoi(b)};
        if (cfg.fixed_pair_count == 0) throw adaptometer::UsageError("--fixed-pair needs --count");
      }
      written = adaptometer::cmd_generate(cfg);
    } else if (*synth) {
      written = adaptometer::cmd_synth(cfg);
    }
    for (const auto& p : written) std::cout << p.string() << "\n";
    return 0;
  } catch (const adaptometer::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid number: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
