#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "voxrag/clients.hpp"
#include "voxrag/error.hpp"
#include "voxrag/hash.hpp"
#include "voxrag/segmentation.hpp"

namespace voxrag {

inline constexpr std::string_view kDefaultInstructionHeader =
    "You are answering a question about a podcast. Answer using only the podcast segments "
    "provided below. Each segment is labeled with its number and speaker. Cite the segment "
    "numbers you rely on, for example (Segment 3). If the segments do not contain the answer, "
    "say so.";

struct Prompt {
  std::string text;
  std::vector<std::string> segment_order;
};

struct Answer {
  std::string text;
  std::string model_id;
  std::string prompt_hash;
};

/// Layout:
///   <header>
///   <blank>
///   Segment 1 [speaker]: transcript
///   ...
///   <blank>
///   Question: <query>
inline Prompt build_prompt(std::string_view query_text, const std::vector<Segment>& segments,
                           std::string_view header = kDefaultInstructionHeader) {
  Prompt prompt;
  std::string& text = prompt.text;
  text.append(header);
  text.append("\n\n");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Segment& seg = segments[i];
    if (!seg.transcript) throw Error(Errc::MissingTranscript, seg.segment_id);
    text += "Segment " + std::to_string(i + 1) + " [" + seg.speaker_id + "]: " + *seg.transcript + "\n";
    prompt.segment_order.push_back(seg.segment_id);
  }
  text += "\nQuestion: ";
  text.append(query_text);
  text += "\n";
  return prompt;
}

inline Answer generate(const Prompt& prompt, ChatClient& client) {
  ChatRequest request;
  request.messages.push_back({"user", prompt.text});
  request.tags["task"] = "generate";
  std::string text = client.complete(request);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw Error(Errc::EmptyCompletion, "model returned no text");
  return {std::move(text), client.model_id(), sha256_hex(prompt.text)};
}

}  // namespace voxrag
