#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "adaptometer/error.hpp"

namespace adaptometer::genconv {

struct PersonaSpec {
  int id = 0;
  std::string text;
};

inline const std::vector<PersonaSpec>& bundled_personas() {
  static const std::vector<PersonaSpec> personas = {
      {1, "Your language is precise, and unambiguous. You use clear and simple sentences."},
      {2, "Your language is gentle and thoughtful. You use concise and not overly complex sentences, to convey "
          "meaning efficiently."},
      {3, "Your language is dynamic, and provocative. You often use vivid metaphors."},
      {4, "Your language is introspective, and deliberate. You use contemplative phrasing."},
      {5, "Your language is smooth and reassuring. You employ gentle pauses and a steady rhythm."},
      {6, "Your language is analytical and precise. You use complex sentence structures sparingly, preferring "
          "clear, well-organized sentences."},
      {7, "Your language is conversational and warm. You use relaxed, varied sentence structures that mirror "
          "casual speech, inviting readers into an open, friendly dialogue."},
      {8, "Your language is inquisitive and reflective. You frequently use open-ended questions and layered "
          "sentences that encourage readers to pause and ponder."},
      {9, "Your language is poetic and evocative. You lean into complex, image-rich sentences that build vivid "
          "scenes and sensations, letting metaphors flow freely."},
      {10, "Your language is structured and methodical. You rely on orderly, sequential sentences that build upon "
           "each other in a clear, logical progression, guiding readers through a well-defined thought process."},
      {11, "Your language is hesitant and unsure. You use fragmented sentences and trailing thoughts, leaving ideas "
           "partially formed, as if questioning each phrase."},
      {12, "Your language is overly cautious and repetitive. You tend to rephrase ideas multiple times in a single "
           "sentence."},
      {13, "Your language is anxious and scattered. You jump between ideas mid-sentence, creating a disjointed flow "
           "that feels hurried and restless."},
      {14, "Your language is straightforward, and no-nonsense. You avoid fluff and filler."},
      {15, "Your language is crisp and engaging. You use short, impactful sentences to create emphasis."},
      {16, "Your language is bold and unapologetic. You rely on direct, declarative sentences that avoid "
           "qualifiers."},
      {17, "Your language is understated and subtle. You use concise sentences that suggest rather than state."},
  };
  return personas;
}

inline const PersonaSpec& persona_by_id(int id) {
  for (const auto& p : bundled_personas())
    if (p.id == id) return p;
  throw UsageError("no bundled persona with id " + std::to_string(id));
}

inline constexpr std::string_view kDefaultTopic = "What makes a day a good day?";

inline constexpr std::string_view kSystemPromptTemplate =
    "You are in a conversation. There are two speakers, SpeakerA and SpeakerB.\n"
    "You are SpeakerA. The conversation will consists of turns in the form:\n"
    "[SpeakerA's utterances]\n"
    "[SpeakerB's utterances]\n"
    "[SpeakerA's utterances]\n"
    "\xE2\x80\xA6\n"
    "You need to only give [SpeakerA's utterances]. You will be prompted by [Language] that will instruct you on "
    "the language that you shall use as SpeakerA. Further, you will be prompted by [Topic], the topic of the "
    "conversation. Behave as in a normal conversation with SpeakerB to discuss the [Topic].\n";

/// Every agent sees itself as SpeakerA; only the [Language] line differs
/// between agents.
inline std::string build_system_prompt(const PersonaSpec& persona, std::string_view topic = kDefaultTopic) {
  if (persona.text.empty()) throw UsageError("persona " + std::to_string(persona.id) + " has no text");
  std::string out(kSystemPromptTemplate);
  out += "[Language] ";
  out += persona.text;
  out += " [Topic] ";
  out += topic;
  return out;
}

}  // namespace adaptometer::genconv
