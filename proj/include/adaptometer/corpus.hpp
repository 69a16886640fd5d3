#pragma once

// Two-speaker conversation corpora: JSONL ingestion, prime/target splitting
// and descriptive statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaptometer/error.hpp"
#include "adaptometer/treebank.hpp"
#include "adaptometer/util/io.hpp"

namespace adaptometer {

enum class CorpusFormat { kTranscript, kParsed, kRules };

inline CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "transcript-jsonl") return CorpusFormat::kTranscript;
  if (name == "parsed-jsonl") return CorpusFormat::kParsed;
  if (name == "rules-jsonl") return CorpusFormat::kRules;
  throw UsageError("unknown corpus format '" + std::string(name) +
                   "' (expected transcript-jsonl, parsed-jsonl or rules-jsonl)");
}

inline std::string_view to_string(CorpusFormat f) {
  switch (f) {
    case CorpusFormat::kTranscript: return "transcript-jsonl";
    case CorpusFormat::kParsed: return "parsed-jsonl";
    case CorpusFormat::kRules: return "rules-jsonl";
  }
  return "?";
}

/// Whitespace-delimited token count.
inline std::size_t count_words(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!ws && !in_word) ++n;
    in_word = !ws;
  }
  return n;
}

struct Utterance {
  std::string speaker;
  std::size_t index = 0;
  std::optional<std::string> text;
  std::optional<std::vector<SyntaxTree>> trees;
  std::optional<std::vector<ProductionRule>> rules;
  /// Required when there is no text (rules-jsonl); overrides counting.
  std::optional<std::size_t> explicit_word_count;

  std::size_t word_count() const {
    if (explicit_word_count) return *explicit_word_count;
    return text ? count_words(*text) : 0;
  }
};

struct Participant {
  std::string speaker;
  std::optional<std::string> persona;
};

struct Conversation {
  std::string id;
  std::array<Participant, 2> participants;
  std::vector<Utterance> utterances;
  std::optional<std::string> topic;

  std::size_t word_count() const {
    std::size_t n = 0;
    for (const auto& u : utterances) n += u.word_count();
    return n;
  }

  const Participant& participant(std::string_view speaker) const {
    for (const auto& p : participants)
      if (p.speaker == speaker) return p;
    throw DataError("conversation " + id + " has no speaker '" + std::string(speaker) + "'");
  }

  const std::string& partner_of(std::string_view speaker) const {
    return participants[0].speaker == speaker ? participants[1].speaker : participants[0].speaker;
  }

  /// Persona id when tagged, otherwise the speaker id.
  const std::string& agent_of(std::string_view speaker) const {
    const Participant& p = participant(speaker);
    return p.persona ? *p.persona : p.speaker;
  }
};

using Corpus = std::vector<Conversation>;

/// Rules carried by an utterance: pre-extracted ones when present,
/// otherwise extracted from its trees. Transcript-only utterances have none.
inline std::vector<ProductionRule> utterance_rules(const Utterance& u, bool include_lexical) {
  std::vector<ProductionRule> out;
  if (u.rules) {
    for (const auto& r : *u.rules)
      if (include_lexical || !r.lexical) out.push_back(r);
  } else if (u.trees) {
    for (const auto& t : *u.trees) {
      auto rs = extract_rules(t, include_lexical);
      out.insert(out.end(), std::make_move_iterator(rs.begin()), std::make_move_iterator(rs.end()));
    }
  }
  return out;
}

/// Checks alternation, consecutive indices and the two-speaker constraint,
/// and fills `participants` from the utterances when unset.
inline void validate_conversation(Conversation& conv) {
  if (conv.utterances.empty()) throw DataError("conversation " + conv.id + " has no utterances");
  std::vector<std::string> speakers;
  for (std::size_t i = 0; i < conv.utterances.size(); ++i) {
    const Utterance& u = conv.utterances[i];
    if (u.index != i)
      throw DataError("conversation " + conv.id + ": turn indices are not consecutive from 0 (found " +
                      std::to_string(u.index) + " at position " + std::to_string(i) + ")");
    if (!u.text && !u.trees && !u.rules)
      throw DataError("conversation " + conv.id + " turn " + std::to_string(i) + ": no text, trees or rules");
    if (std::find(speakers.begin(), speakers.end(), u.speaker) == speakers.end()) speakers.push_back(u.speaker);
    if (speakers.size() > 2)
      throw DataError("conversation " + conv.id + " has more than two speakers ('" + u.speaker + "' is the third)");
    if (i > 0 && conv.utterances[i - 1].speaker == u.speaker)
      throw DataError("conversation " + conv.id + ": speakers do not alternate at turn " + std::to_string(i));
  }
  if (speakers.size() != 2) throw DataError("conversation " + conv.id + " has only one speaker");
  if (conv.participants[0].speaker.empty()) {
    conv.participants[0].speaker = speakers[0];
    conv.participants[1].speaker = speakers[1];
  }
}

/// Reads a corpus in one of the three JSONL schemas. Lines may interleave
/// conversations; utterances are ordered by their "turn" field.
inline Corpus read_corpus_jsonl(std::istream& in, CorpusFormat format, const TreebankOptions& tree_opts = {},
                                const std::string& source = "<stream>") {
  using nlohmann::json;
  Corpus corpus;
  std::unordered_map<std::string, std::size_t> by_id;
  std::vector<std::map<std::size_t, std::size_t>> turn_seen;  // turn -> line
  std::vector<std::map<std::string, std::string>> personas;   // speaker -> persona
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + ": invalid JSON: " + e.what());
    }
    if (!obj.is_object()) throw DataError(where + ": expected a JSON object");
    auto need = [&](const char* key, json::value_t type, const std::string& conv) -> const json& {
      auto it = obj.find(key);
      bool ok = it != obj.end();
      if (ok) {
        if (type == json::value_t::number_integer)
          ok = it->is_number_integer();
        else
          ok = it->type() == type;
      }
      if (!ok)
        throw DataError(where + ": conversation " + (conv.empty() ? "?" : conv) + ": missing or mistyped field '" + key + "'");
      return *it;
    };
    const std::string conv_id = need("conv_id", json::value_t::string, "").get<std::string>();
    const auto turn_value = need("turn", json::value_t::number_integer, conv_id).get<long long>();
    if (turn_value < 0) throw DataError(where + ": conversation " + conv_id + ": negative turn");
    const std::string speaker = need("speaker", json::value_t::string, conv_id).get<std::string>();
    if (speaker.empty()) throw DataError(where + ": conversation " + conv_id + ": empty speaker id");

    Utterance u;
    u.speaker = speaker;
    u.index = static_cast<std::size_t>(turn_value);
    try {
      switch (format) {
        case CorpusFormat::kTranscript:
          u.text = need("text", json::value_t::string, conv_id).get<std::string>();
          break;
        case CorpusFormat::kParsed: {
          u.text = need("text", json::value_t::string, conv_id).get<std::string>();
          const json& trees = need("trees", json::value_t::array, conv_id);
          std::vector<SyntaxTree> parsed;
          for (const auto& t : trees) {
            if (!t.is_string()) throw DataError("tree entries must be strings");
            parsed.push_back(parse_bracketed(t.get<std::string>(), tree_opts));
          }
          u.trees = std::move(parsed);
          break;
        }
        case CorpusFormat::kRules: {
          const json& rules = need("rules", json::value_t::array, conv_id);
          const auto wc = need("word_count", json::value_t::number_integer, conv_id).get<long long>();
          if (wc < 0) throw DataError("negative word_count");
          std::vector<ProductionRule> parsed;
          for (const auto& r : rules) {
            if (!r.is_string()) throw DataError("rule entries must be strings");
            parsed.push_back(parse_rule(r.get<std::string>()));
          }
          u.rules = std::move(parsed);
          u.explicit_word_count = static_cast<std::size_t>(wc);
          if (auto it = obj.find("text"); it != obj.end() && it->is_string()) u.text = it->get<std::string>();
          break;
        }
      }
    } catch (const DataError& e) {
      if (std::string_view(e.what()).starts_with(where)) throw;
      throw DataError(where + ": conversation " + conv_id + ": " + e.what());
    }

    auto [it, inserted] = by_id.try_emplace(conv_id, corpus.size());
    if (inserted) {
      corpus.push_back(Conversation{conv_id, {}, {}, std::nullopt});
      turn_seen.emplace_back();
      personas.emplace_back();
    }
    Conversation& conv = corpus[it->second];
    if (!turn_seen[it->second].emplace(u.index, lineno).second)
      throw DataError(where + ": conversation " + conv_id + ": duplicate turn " + std::to_string(u.index));
    if (auto p = obj.find("persona"); p != obj.end() && !p->is_null()) {
      if (!p->is_string() && !p->is_number_integer())
        throw DataError(where + ": conversation " + conv_id + ": persona must be a string");
      std::string persona = p->is_string() ? p->get<std::string>() : std::to_string(p->get<long long>());
      auto [slot, fresh] = personas[it->second].try_emplace(speaker, persona);
      if (!fresh && slot->second != persona)
        throw DataError(where + ": conversation " + conv_id + ": speaker " + speaker + " has two personas");
    }
    if (auto t = obj.find("topic"); t != obj.end() && t->is_string()) conv.topic = t->get<std::string>();
    conv.utterances.push_back(std::move(u));
  }

  for (std::size_t c = 0; c < corpus.size(); ++c) {
    Conversation& conv = corpus[c];
    std::stable_sort(conv.utterances.begin(), conv.utterances.end(),
                     [](const Utterance& a, const Utterance& b) { return a.index < b.index; });
    validate_conversation(conv);
    for (auto& p : conv.participants)
      if (auto found = personas[c].find(p.speaker); found != personas[c].end()) p.persona = found->second;
  }
  return corpus;
}

inline Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format, const TreebankOptions& tree_opts = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  return read_corpus_jsonl(in, format, tree_opts, path.string());
}

/// Serializes a corpus in the given JSONL schema (one utterance per line).
inline std::string write_corpus_jsonl(const Corpus& corpus, CorpusFormat format) {
  using nlohmann::ordered_json;
  std::string out;
  for (const auto& conv : corpus) {
    for (const auto& u : conv.utterances) {
      ordered_json obj;
      obj["conv_id"] = conv.id;
      obj["turn"] = u.index;
      obj["speaker"] = u.speaker;
      const Participant& p = conv.participant(u.speaker);
      if (p.persona) obj["persona"] = *p.persona;
      if (conv.topic) obj["topic"] = *conv.topic;
      if (format != CorpusFormat::kRules || u.text) obj["text"] = u.text.value_or("");
      if (format == CorpusFormat::kParsed) {
        ordered_json trees = ordered_json::array();
        if (u.trees)
          for (const auto& t : *u.trees) trees.push_back(serialize(t));
        obj["trees"] = std::move(trees);
      }
      if (format == CorpusFormat::kRules) {
        ordered_json rules = ordered_json::array();
        for (const auto& r : utterance_rules(u, true)) rules.push_back(r.to_string());
        obj["rules"] = std::move(rules);
        obj["word_count"] = u.word_count();
      }
      out += obj.dump();
      out += '\n';
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prime / target split

struct WordSpan {
  std::size_t begin = 0;  ///< first word position, 0-based
  std::size_t end = 0;    ///< one past the last word
  std::size_t words() const { return end - begin; }
};

struct SplitOptions {
  double prime_frac = 0.49;
  double gap_frac = 0.02;
  bool include_lexical = false;
};

/// One conversation after splitting. Rule counts are per speaker and keyed
/// by canonical rule string.
struct SplitSections {
  std::string conv_id;
  std::array<Participant, 2> participants;
  std::map<std::string, RuleCounts> prime;
  std::map<std::string, RuleCounts> target;
  std::vector<std::size_t> prime_utterances;
  std::vector<std::size_t> target_utterances;
  std::vector<std::size_t> discarded_utterances;
  std::size_t prime_words = 0;
  std::size_t target_words = 0;
  std::size_t discarded_words = 0;
  std::size_t total_words = 0;

  const std::string& partner_of(std::string_view speaker) const {
    return participants[0].speaker == speaker ? participants[1].speaker : participants[0].speaker;
  }
};

class SplitTooShort : public DataError {
 public:
  explicit SplitTooShort(const std::string& what) : DataError(what) {}
};

/// Assigns whole utterances to PRIME when their last word falls inside the
/// first prime_frac of the conversation's words and to TARGET when their first
/// word falls inside the last prime_frac; everything else is the gap.
inline SplitSections split_prime_target(const Conversation& conv, const SplitOptions& opts = {}) {
  if (!(opts.prime_frac > 0.0) || !(opts.gap_frac >= 0.0) ||
      std::abs(2.0 * opts.prime_frac + opts.gap_frac - 1.0) > 1e-9)
    throw UsageError("split fractions must satisfy 2*prime_frac + gap_frac = 1 (got prime_frac=" +
                     util::format_double(opts.prime_frac) + ", gap_frac=" + util::format_double(opts.gap_frac) + ")");
  if (conv.utterances.size() < 2)
    throw SplitTooShort("conversation " + conv.id + " has fewer than 2 utterances");

  SplitSections s;
  s.conv_id = conv.id;
  s.participants = conv.participants;
  for (const auto& p : conv.participants) {
    s.prime[p.speaker];
    s.target[p.speaker];
  }
  const double total = static_cast<double>(conv.word_count());
  s.total_words = conv.word_count();
  const double prime_end = opts.prime_frac * total + 1e-9;
  const double target_begin = (1.0 - opts.prime_frac) * total - 1e-9;

  std::size_t pos = 0;
  for (std::size_t i = 0; i < conv.utterances.size(); ++i) {
    const Utterance& u = conv.utterances[i];
    const std::size_t wc = u.word_count();
    const WordSpan span{pos, pos + wc};
    pos += wc;
    // 1-based positions: last word = span.end, first word = span.begin + 1.
    RuleCounts* bucket = nullptr;
    if (wc > 0 && static_cast<double>(span.end) <= prime_end) {
      s.prime_utterances.push_back(i);
      s.prime_words += wc;
      bucket = &s.prime[u.speaker];
    } else if (wc > 0 && static_cast<double>(span.begin + 1) > target_begin) {
      s.target_utterances.push_back(i);
      s.target_words += wc;
      bucket = &s.target[u.speaker];
    } else {
      s.discarded_utterances.push_back(i);
      s.discarded_words += wc;
    }
    if (bucket)
      for (const auto& r : utterance_rules(u, opts.include_lexical)) ++(*bucket)[r.to_string()];
  }
  if (s.prime_utterances.empty() || s.target_utterances.empty())
    throw SplitTooShort("conversation " + conv.id + " is too short to place an utterance in both PRIME and TARGET");
  return s;
}

struct SplitCorpus {
  std::vector<SplitSections> conversations;
  /// (conv_id, reason) for conversations that could not be split.
  std::vector<std::pair<std::string, std::string>> excluded;
};

inline SplitCorpus split_corpus(const Corpus& corpus, const SplitOptions& opts = {}) {
  SplitCorpus out;
  for (const auto& conv : corpus) {
    try {
      out.conversations.push_back(split_prime_target(conv, opts));
    } catch (const SplitTooShort& e) {
      out.excluded.emplace_back(conv.id, e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Statistics

/// Histogram-ready tables: value -> number of items with that value.
struct CorpusStats {
  std::map<std::size_t, std::size_t> conversation_lengths;  ///< words per conversation
  std::map<std::size_t, std::size_t> utterance_lengths;     ///< words per utterance
  std::map<std::size_t, std::size_t> speaker_turns;         ///< utterances per speaker per conversation
  std::size_t conversations = 0;
  std::size_t utterances = 0;
  std::size_t words = 0;
  std::size_t rule_types = 0;
  std::size_t rule_tokens = 0;
};

inline CorpusStats corpus_stats(const Corpus& corpus, bool include_lexical = false) {
  CorpusStats st;
  RuleCounts rules;
  for (const auto& conv : corpus) {
    ++st.conversations;
    const std::size_t words = conv.word_count();
    st.words += words;
    ++st.conversation_lengths[words];
    std::map<std::string, std::size_t> turns;
    for (const auto& p : conv.participants) turns[p.speaker] = 0;
    for (const auto& u : conv.utterances) {
      ++st.utterances;
      ++st.utterance_lengths[u.word_count()];
      ++turns[u.speaker];
      for (const auto& r : utterance_rules(u, include_lexical)) ++rules[r.to_string()];
    }
    for (const auto& [speaker, n] : turns) ++st.speaker_turns[n];
  }
  st.rule_types = rules.size();
  for (const auto& [r, n] : rules) st.rule_tokens += n;
  return st;
}

/// "header\nvalue,count\n..." for one histogram table.
inline std::string histogram_csv(const std::map<std::size_t, std::size_t>& table, std::string_view value_name,
                                 std::string_view count_name) {
  std::string out = std::string(value_name) + "," + std::string(count_name) + "\n";
  for (const auto& [v, n] : table) out += std::to_string(v) + "," + std::to_string(n) + "\n";
  return out;
}

}  // namespace adaptometer
