#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "adaptometer/corpus.hpp"

using namespace adaptometer;

namespace {

Corpus read(const std::string& text, CorpusFormat format) {
  std::istringstream in(text);
  return read_corpus_jsonl(in, format);
}

std::string words(std::size_t n, const std::string& w = "w") {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + w;
  return s;
}

Conversation conversation_with_lengths(const std::vector<std::size_t>& lengths) {
  Conversation c;
  c.id = "c";
  c.participants = {Participant{"A", {}}, Participant{"B", {}}};
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    Utterance u;
    u.speaker = i % 2 ? "B" : "A";
    u.index = i;
    u.rules = std::vector<ProductionRule>{ProductionRule{"S", {"R" + std::to_string(i)}, false}};
    u.explicit_word_count = lengths[i];
    c.utterances.push_back(std::move(u));
  }
  return c;
}

}  // namespace

TEST(CountWords, Whitespace) {
  EXPECT_EQ(count_words(""), 0u);
  EXPECT_EQ(count_words("  a  b\tc\n"), 3u);
}

TEST(LoadCorpus, TwoLineTranscript) {
  const auto corpus = read(R"J({"conv_id":"c1","turn":0,"speaker":"A","text":"hello there"}
{"conv_id":"c1","turn":1,"speaker":"B","text":"hi"}
)J",
                           CorpusFormat::kTranscript);
  ASSERT_EQ(corpus.size(), 1u);
  EXPECT_EQ(corpus[0].utterances.size(), 2u);
  EXPECT_EQ(corpus[0].participants[0].speaker, "A");
  EXPECT_EQ(corpus[0].participants[1].speaker, "B");
  EXPECT_EQ(corpus[0].word_count(), 3u);
}

TEST(LoadCorpus, OrdersByTurnAcrossInterleavedLines) {
  const auto corpus = read(R"J({"conv_id":"c1","turn":1,"speaker":"B","text":"b"}
{"conv_id":"c2","turn":0,"speaker":"X","text":"x"}
{"conv_id":"c1","turn":0,"speaker":"A","text":"a"}
{"conv_id":"c2","turn":1,"speaker":"Y","text":"y"}
)J",
                           CorpusFormat::kTranscript);
  ASSERT_EQ(corpus.size(), 2u);
  EXPECT_EQ(corpus[0].utterances[0].speaker, "A");
}

TEST(LoadCorpus, RejectsThreeSpeakers) {
  try {
    read(R"J({"conv_id":"c1","turn":0,"speaker":"A","text":"a"}
{"conv_id":"c1","turn":1,"speaker":"B","text":"b"}
{"conv_id":"c1","turn":2,"speaker":"C","text":"c"}
)J",
         CorpusFormat::kTranscript);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("c1"), std::string::npos);
  }
}

TEST(LoadCorpus, RejectsNonAlternation) {
  EXPECT_THROW(read(R"J({"conv_id":"c1","turn":0,"speaker":"A","text":"a"}
{"conv_id":"c1","turn":1,"speaker":"A","text":"b"}
{"conv_id":"c1","turn":2,"speaker":"B","text":"c"}
)J",
                    CorpusFormat::kTranscript),
               DataError);
}

TEST(LoadCorpus, SchemaErrorNamesLineAndConversation) {
  try {
    read("{\"conv_id\":\"c9\",\"turn\":0,\"speaker\":\"A\"}\n", CorpusFormat::kTranscript);
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(":1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("c9"), std::string::npos) << msg;
    EXPECT_NE(msg.find("text"), std::string::npos) << msg;
  }
  EXPECT_THROW(read("not json\n", CorpusFormat::kTranscript), DataError);
  EXPECT_THROW(read(R"J({"conv_id":"c","turn":0,"speaker":"A","text":"a","trees":["(S (NP"]})J"
                    "\n",
                    CorpusFormat::kParsed),
               DataError);
}

TEST(LoadCorpus, RulesFormat) {
  const auto corpus = read(R"J({"conv_id":"c","turn":0,"speaker":"A","rules":["S→NP VP"],"word_count":5}
{"conv_id":"c","turn":1,"speaker":"B","rules":[],"word_count":2}
)J",
                           CorpusFormat::kRules);
  const auto& u = corpus[0].utterances[0];
  ASSERT_TRUE(u.rules);
  ASSERT_EQ(u.rules->size(), 1u);
  EXPECT_EQ((*u.rules)[0].to_string(), "S→NP VP");
  EXPECT_EQ(u.word_count(), 5u);
  EXPECT_THROW(read(R"J({"conv_id":"c","turn":0,"speaker":"A","rules":[]})J"
                    "\n",
                    CorpusFormat::kRules),
               DataError);
}

TEST(LoadCorpus, ParsedFormatAttachesTreesAndPersonas) {
  const auto corpus = read(
      R"J({"conv_id":"c","turn":0,"speaker":"A","persona":"5","text":"I like tea","trees":["(S (NP (PRP I)) (VP (VBP like) (NP (NN tea))))"]}
{"conv_id":"c","turn":1,"speaker":"B","persona":6,"text":"ok","trees":[]}
)J",
      CorpusFormat::kParsed);
  EXPECT_EQ(utterance_rules(corpus[0].utterances[0], false).size(), 4u);
  EXPECT_EQ(corpus[0].agent_of("A"), "5");
  EXPECT_EQ(corpus[0].agent_of("B"), "6");
}

TEST(LoadCorpus, MissingFile) {
  EXPECT_THROW(load_corpus("/nonexistent/corpus.jsonl", CorpusFormat::kRules), DataError);
}

TEST(WriteCorpus, RoundTripsRulesFormat) {
  const Conversation c = conversation_with_lengths({3, 4, 5});
  const std::string text = write_corpus_jsonl({c}, CorpusFormat::kRules);
  const auto back = read(text, CorpusFormat::kRules);
  EXPECT_EQ(write_corpus_jsonl(back, CorpusFormat::kRules), text);
}

TEST(Split, FortyNineTwoFortyNine) {
  const auto s = split_prime_target(conversation_with_lengths({49, 2, 49}));
  EXPECT_EQ(s.prime_utterances, std::vector<std::size_t>{0});
  EXPECT_EQ(s.discarded_utterances, std::vector<std::size_t>{1});
  EXPECT_EQ(s.target_utterances, std::vector<std::size_t>{2});
  EXPECT_EQ(s.prime.at("A").count("S→R0"), 1u);
  EXPECT_EQ(s.target.at("A").count("S→R2"), 1u);
  EXPECT_TRUE(s.prime.at("B").empty());
}

TEST(Split, StraddlingUtteranceIsDiscarded) {
  // Utterance 1 covers words 41..55 and straddles word 49.
  const auto s = split_prime_target(conversation_with_lengths({40, 15, 45}));
  EXPECT_EQ(s.prime_utterances, std::vector<std::size_t>{0});
  EXPECT_EQ(s.discarded_utterances, std::vector<std::size_t>{1});
  EXPECT_EQ(s.target_utterances, std::vector<std::size_t>{2});
}

TEST(Split, WordCountsPartitionTheConversation) {
  for (const auto& lengths : std::vector<std::vector<std::size_t>>{{10, 20, 30, 40, 50}, {5, 5, 5, 5, 5, 5, 5, 5}, {80, 3, 1, 90, 10}}) {
    const auto c = conversation_with_lengths(lengths);
    const auto s = split_prime_target(c);
    EXPECT_EQ(s.prime_words + s.target_words + s.discarded_words, c.word_count());
    EXPECT_EQ(s.prime_utterances.size() + s.target_utterances.size() + s.discarded_utterances.size(), lengths.size());
  }
}

TEST(Split, Errors) {
  EXPECT_THROW(split_prime_target(conversation_with_lengths({100})), SplitTooShort);
  EXPECT_THROW(split_prime_target(conversation_with_lengths({100, 10})), SplitTooShort);
  EXPECT_THROW(split_prime_target(conversation_with_lengths({49, 2, 49}), {0.4, 0.1, false}), UsageError);
}

TEST(Split, CorpusReportsExclusions) {
  Corpus corpus = {conversation_with_lengths({49, 2, 49}), conversation_with_lengths({100, 10})};
  corpus[1].id = "short";
  const auto split = split_corpus(corpus);
  EXPECT_EQ(split.conversations.size(), 1u);
  ASSERT_EQ(split.excluded.size(), 1u);
  EXPECT_EQ(split.excluded[0].first, "short");
}

TEST(Stats, OneTenWordConversation) {
  Conversation c;
  c.id = "c";
  for (int i = 0; i < 2; ++i) {
    Utterance u;
    u.speaker = i ? "B" : "A";
    u.index = static_cast<std::size_t>(i);
    u.text = words(5);
    c.utterances.push_back(u);
  }
  validate_conversation(c);
  const auto st = corpus_stats({c});
  EXPECT_EQ(st.conversation_lengths, (std::map<std::size_t, std::size_t>{{10, 1}}));
  EXPECT_EQ(st.utterance_lengths, (std::map<std::size_t, std::size_t>{{5, 2}}));
  EXPECT_EQ(st.speaker_turns, (std::map<std::size_t, std::size_t>{{1, 2}}));
  EXPECT_EQ(histogram_csv(st.conversation_lengths, "words", "conversations"), "words,conversations\n10,1\n");
}

TEST(Stats, EmptyCorpus) {
  const auto st = corpus_stats({});
  EXPECT_TRUE(st.conversation_lengths.empty());
  EXPECT_TRUE(st.utterance_lengths.empty());
  EXPECT_TRUE(st.speaker_turns.empty());
  EXPECT_EQ(st.conversations, 0u);
}
