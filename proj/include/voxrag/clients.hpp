#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voxrag/audio.hpp"

namespace voxrag {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  // Out-of-band labels (query_id, segment_id, mode, ...). Live clients ignore
  // them; scripted stubs key their replies on them.
  std::map<std::string, std::string> tags;
};

/// OpenAI-style chat completion, used for generation and judging.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::string model_id() const = 0;
};

/// Cross-encoder style (query, passage) scorer.
class RerankClient {
 public:
  virtual ~RerankClient() = default;
  virtual std::vector<double> score(std::string_view query, std::span<const std::string> passages) = 0;
};

class Transcriber {
 public:
  virtual ~Transcriber() = default;
  virtual std::string transcribe(const AudioBuffer& audio) = 0;
};

}  // namespace voxrag
