#pragma once

// Two-agent conversation loop, repetition screening and round-robin /
// fixed-pair batch generation.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaptometer/corpus.hpp"
#include "adaptometer/error.hpp"
#include "adaptometer/genconv/personas.hpp"
#include "adaptometer/genconv/transport.hpp"
#include "adaptometer/util/parallel.hpp"

namespace adaptometer::genconv {

struct GenerationConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o-2024-08-06";
  std::string api_key_env = "ADAPTOMETER_API_KEY";
  std::string topic = std::string(kDefaultTopic);
  std::size_t word_threshold = 800;
  std::size_t max_turns = 60;
  double timeout_s = 120.0;
  RetryPolicy retry;
  double requests_per_minute = 60.0;
  unsigned concurrency = 4;
  SamplingParameters sampling;
  double repetition_threshold = 0.8;
  std::size_t repetition_window = 4;
};

inline void validate(const GenerationConfig& cfg) {
  if (cfg.word_threshold == 0) throw UsageError("word threshold must be positive");
  if (cfg.max_turns == 0) throw UsageError("max turns must be positive");
  if (cfg.retry.max_attempts < 1) throw UsageError("retry policy needs at least one attempt");
  if (cfg.model.empty()) throw UsageError("model name is empty");
}

inline constexpr const char* kSpeakerA = "SpeakerA";
inline constexpr const char* kSpeakerB = "SpeakerB";

struct GeneratedConversation {
  Conversation conversation;
  /// Set when the conversation was aborted; the transcript is then partial.
  std::optional<std::string> error;
};

/// The request for the agent about to speak: its own system prompt, then the
/// history with its own turns as "assistant" and the partner's as "user".
inline ChatRequest build_request(const std::string& system_prompt, const Conversation& conv,
                                 const std::string& speaker, const GenerationConfig& cfg) {
  ChatRequest req;
  req.model = cfg.model;
  req.sampling = cfg.sampling;
  req.tag = conv.id;
  req.messages.push_back({"system", system_prompt});
  for (const auto& u : conv.utterances)
    req.messages.push_back({u.speaker == speaker ? "assistant" : "user", u.text.value_or("")});
  return req;
}

/// Agent A opens; turns alternate until the total word count first exceeds
/// the threshold or max_turns is reached. Transport failures (after the
/// transport's own retries) and persistently empty replies abort the
/// conversation and keep the partial transcript.
inline GeneratedConversation run_conversation(const PersonaSpec& a, const PersonaSpec& b, const GenerationConfig& cfg,
                                              ChatTransport& transport, std::string conv_id = {}) {
  validate(cfg);
  GeneratedConversation out;
  Conversation& conv = out.conversation;
  conv.id = conv_id.empty() ? "p" + std::to_string(a.id) + "-p" + std::to_string(b.id) : std::move(conv_id);
  conv.participants[0] = {kSpeakerA, std::to_string(a.id)};
  conv.participants[1] = {kSpeakerB, std::to_string(b.id)};
  conv.topic = cfg.topic;
  const std::string prompts[2] = {build_system_prompt(a, cfg.topic), build_system_prompt(b, cfg.topic)};

  std::size_t words = 0;
  while (conv.utterances.size() < cfg.max_turns && words <= cfg.word_threshold) {
    const std::size_t turn = conv.utterances.size();
    const std::string speaker = turn % 2 == 0 ? kSpeakerA : kSpeakerB;
    const ChatRequest req = build_request(prompts[turn % 2], conv, speaker, cfg);
    std::string reply;
    try {
      for (int attempt = 0; attempt < cfg.retry.max_attempts && count_words(reply) == 0; ++attempt)
        reply = transport.complete(req);
    } catch (const std::exception& e) {
      out.error = "turn " + std::to_string(turn) + ": " + e.what();
      break;
    }
    if (count_words(reply) == 0) {
      out.error = "turn " + std::to_string(turn) + ": empty reply after " + std::to_string(cfg.retry.max_attempts) +
                  " attempts";
      break;
    }
    Utterance u;
    u.speaker = speaker;
    u.index = turn;
    u.text = std::move(reply);
    words += u.word_count();
    conv.utterances.push_back(std::move(u));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Repetition screening

struct RepetitionVerdict {
  bool flagged = false;
  /// Turn indices of the most similar pair and its similarity (1 for a
  /// verbatim repeat). Present whenever flagged.
  std::optional<std::pair<std::size_t, std::size_t>> turns;
  double similarity = 0.0;
};

/// Lowercased alphanumeric tokens; punctuation splits and is dropped.
inline std::vector<std::string> normalized_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '\'' || c >= 0x80) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::set<std::string> word_trigrams(std::string_view text) {
  const auto w = normalized_words(text);
  std::set<std::string> out;
  for (std::size_t i = 0; i + 2 < w.size(); ++i) out.insert(w[i] + ' ' + w[i + 1] + ' ' + w[i + 2]);
  return out;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t shared = 0;
  for (const auto& t : a) shared += b.count(t);
  return static_cast<double>(shared) / static_cast<double>(a.size() + b.size() - shared);
}

inline std::string collapse_whitespace(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty() && out.back() != ' ') out += ' ';
    } else {
      out += c;
    }
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

/// Flags a verbatim (whitespace-normalized) repeat of any turn, or two
/// same-speaker turns within the trailing window whose trigram Jaccard
/// similarity reaches the threshold. Fewer than two turns never flag.
inline RepetitionVerdict detect_repetition(const Conversation& conv, double threshold = 0.8, std::size_t window = 4) {
  RepetitionVerdict v;
  const auto& us = conv.utterances;
  std::map<std::string, std::size_t> first_seen;
  for (std::size_t i = 0; i < us.size(); ++i) {
    const std::string key = collapse_whitespace(us[i].text.value_or(""));
    if (key.empty()) continue;
    auto [it, fresh] = first_seen.emplace(key, i);
    if (!fresh) {
      v.flagged = true;
      v.turns = {it->second, i};
      v.similarity = 1.0;
      return v;
    }
  }
  const std::size_t start = us.size() > window ? us.size() - window : 0;
  std::vector<std::set<std::string>> grams;
  for (std::size_t i = start; i < us.size(); ++i) grams.push_back(word_trigrams(us[i].text.value_or("")));
  for (std::size_t i = start; i < us.size(); ++i)
    for (std::size_t j = i + 1; j < us.size(); ++j) {
      if (us[i].speaker != us[j].speaker) continue;
      const double s = jaccard(grams[i - start], grams[j - start]);
      if (s >= threshold - 1e-12 && (!v.flagged || s > v.similarity)) {
        v.flagged = true;
        v.turns = {i, j};
        v.similarity = s;
      }
    }
  return v;
}

// ---------------------------------------------------------------------------
// Batch generation

struct GenerationRecord {
  GeneratedConversation generated;
  RepetitionVerdict verdict;

  bool excluded() const { return generated.error.has_value() || verdict.flagged; }
};

struct GenerationResult {
  std::vector<GenerationRecord> records;
  std::size_t requests = 0;

  /// Conversations kept for analysis: complete and not flagged.
  Corpus analysis_corpus() const {
    Corpus out;
    for (const auto& r : records)
      if (!r.excluded()) out.push_back(r.generated.conversation);
    return out;
  }

  /// Everything with at least two turns, including flagged and aborted ones.
  Corpus raw_corpus() const {
    Corpus out;
    for (const auto& r : records)
      if (r.generated.conversation.utterances.size() >= 2) out.push_back(r.generated.conversation);
    return out;
  }
};

inline GenerationResult generate_pairs(const std::vector<std::pair<PersonaSpec, PersonaSpec>>& pairs,
                                       const std::vector<std::string>& ids, const GenerationConfig& cfg,
                                       ChatTransport& transport) {
  validate(cfg);
  GenerationResult result;
  result.records.resize(pairs.size());
  const std::size_t before = transport.request_count();
  util::parallel_for(pairs.size(), std::max(1u, cfg.concurrency), [&](std::size_t i) {
    auto& rec = result.records[i];
    rec.generated = run_conversation(pairs[i].first, pairs[i].second, cfg, transport, ids[i]);
    if (rec.generated.conversation.utterances.size() >= 2)
      rec.verdict = detect_repetition(rec.generated.conversation, cfg.repetition_threshold, cfg.repetition_window);
  });
  result.requests = transport.request_count() - before;
  return result;
}

/// One conversation per unordered pair; the lower-listed persona speaks
/// first.
inline GenerationResult generate_round_robin(const std::vector<PersonaSpec>& personas, const GenerationConfig& cfg,
                                             ChatTransport& transport) {
  if (personas.size() < 2) throw UsageError("round robin needs at least two personas");
  std::vector<std::pair<PersonaSpec, PersonaSpec>> pairs;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < personas.size(); ++i)
    for (std::size_t j = i + 1; j < personas.size(); ++j) {
      pairs.emplace_back(personas[i], personas[j]);
      char id[32];
      std::snprintf(id, sizeof id, "p%02d-p%02d", personas[i].id, personas[j].id);
      ids.emplace_back(id);
    }
  return generate_pairs(pairs, ids, cfg, transport);
}

/// n conversations between the same two agents.
inline GenerationResult generate_fixed_pair(const PersonaSpec& a, const PersonaSpec& b, std::size_t n,
                                            const GenerationConfig& cfg, ChatTransport& transport) {
  if (n == 0) throw UsageError("fixed-pair mode needs at least one conversation");
  std::vector<std::pair<PersonaSpec, PersonaSpec>> pairs(n, {a, b});
  std::vector<std::string> ids;
  for (std::size_t k = 0; k < n; ++k) {
    char id[48];
    std::snprintf(id, sizeof id, "p%02d-p%02d-%04zu", a.id, b.id, k);
    ids.emplace_back(id);
  }
  return generate_pairs(pairs, ids, cfg, transport);
}

inline nlohmann::ordered_json exclusion_report_json(const GenerationResult& result) {
  using nlohmann::ordered_json;
  ordered_json excluded = ordered_json::array();
  std::size_t flagged = 0, aborted = 0;
  for (const auto& r : result.records) {
    if (!r.excluded()) continue;
    const Conversation& c = r.generated.conversation;
    ordered_json e;
    e["conv_id"] = c.id;
    e["personas"] = {c.participants[0].persona.value_or(""), c.participants[1].persona.value_or("")};
    e["turns"] = c.utterances.size();
    if (r.generated.error) {
      ++aborted;
      e["reason"] = "aborted";
      e["error"] = *r.generated.error;
    } else {
      ++flagged;
      e["reason"] = "repetition";
    }
    if (r.verdict.flagged) {
      e["evidence"] = {{"turns", {r.verdict.turns->first, r.verdict.turns->second}},
                       {"similarity", r.verdict.similarity}};
    }
    excluded.push_back(std::move(e));
  }
  ordered_json j;
  j["attempted"] = result.records.size();
  j["kept"] = result.records.size() - flagged - aborted;
  j["flagged"] = flagged;
  j["aborted"] = aborted;
  j["requests"] = result.requests;
  j["excluded"] = std::move(excluded);
  return j;
}

}  // namespace adaptometer::genconv
