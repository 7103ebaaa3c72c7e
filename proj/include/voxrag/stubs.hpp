#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "voxrag/clients.hpp"
#include "voxrag/embedding.hpp"
#include "voxrag/error.hpp"
#include "voxrag/eval/types.hpp"
#include "voxrag/hash.hpp"

// Deterministic in-process stand-ins for every external model service.

namespace voxrag {

/// Seeded 64-bit hash of the float32 sample bytes, expanded to `dim`
/// uniform values in [-1, 1]. Not normalized.
inline Embedding stub_raw_vector(const AudioBuffer& buf, std::uint64_t seed, std::size_t dim) {
  const auto bytes = std::as_bytes(std::span(buf.samples));
  std::uint64_t state = fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()), seed);
  Embedding e;
  e.values.resize(dim);
  for (auto& v : e.values) v = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
  return e;
}

inline Embedding stub_embed(const AudioBuffer& buf, std::uint64_t seed = 0, std::size_t dim = kDefaultDim) {
  return l2_normalize(stub_raw_vector(buf, seed, dim));
}

class StubEmbedder final : public Embedder {
 public:
  explicit StubEmbedder(std::uint64_t seed = 0, std::size_t dim = kDefaultDim) : seed_(seed), dim_(dim) {}

  std::vector<Embedding> embed_batch(std::span<const EmbedItem> items) override {
    std::vector<Embedding> out;
    out.reserve(items.size());
    for (const auto& item : items) out.push_back(stub_raw_vector(*item.audio, seed_, dim_));
    return out;
  }
  std::size_t dim() const override { return dim_; }

 private:
  std::uint64_t seed_;
  std::size_t dim_;
};

/// Scores each passage by its length in bytes.
class LengthReranker final : public RerankClient {
 public:
  std::vector<double> score(std::string_view, std::span<const std::string> passages) override {
    std::vector<double> out;
    out.reserve(passages.size());
    for (const auto& p : passages) out.push_back(static_cast<double>(p.size()));
    return out;
  }
};

/// Replies with the last non-empty line of the final message.
class EchoChatClient final : public ChatClient {
 public:
  std::string complete(const ChatRequest& request) override {
    if (request.messages.empty()) return {};
    const std::string& text = request.messages.back().content;
    std::size_t end = text.find_last_not_of(" \t\r\n");
    if (end == std::string::npos) return {};
    const std::size_t begin = text.rfind('\n', end);
    return text.substr(begin == std::string::npos ? 0 : begin + 1, end - (begin == std::string::npos ? 0 : begin + 1) + 1);
  }
  std::string model_id() const override { return "stub-echo"; }
};

/// Pseudo-transcript: a seeded word sequence whose length grows with the
/// audio duration (about two words per second).
class StubTranscriber final : public Transcriber {
 public:
  explicit StubTranscriber(std::uint64_t seed = 0) : seed_(seed) {}

  std::string transcribe(const AudioBuffer& audio) override {
    static constexpr std::string_view kWords[] = {"podcast", "episode", "guest",  "market", "history", "science",
                                                  "music",   "travel",  "health", "design", "climate", "startup",
                                                  "sports",  "cooking", "space",  "privacy"};
    const auto bytes = std::as_bytes(std::span(audio.samples));
    std::uint64_t state = fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()), seed_);
    const auto count = 1 + static_cast<std::size_t>(audio.duration_s() * 2.0);
    std::string out;
    for (std::size_t i = 0; i < count; ++i) {
      if (i) out += ' ';
      out += kWords[splitmix64(state) % std::size(kWords)];
    }
    return out;
  }

 private:
  std::uint64_t seed_;
};

// ─── Scripted judge ──────────────────────────────────────────────────────────

enum class ReplyStyle { Plain, Padded };

struct StubPolicy {
  std::uint64_t seed = 0;
  bool strict = false;
  ReplyStyle style = ReplyStyle::Plain;
  // (query_id, segment_id, mode) -> label; empty mode matches both.
  std::map<std::tuple<std::string, std::string, std::string>, int> judge_script;
  std::map<std::string, eval::AnswerScores> answer_script;

  static StubPolicy from_json(const nlohmann::json& j) {
    StubPolicy p;
    try {
      p.seed = j.value("seed", std::uint64_t{0});
      p.strict = j.value("strict", false);
      p.style = j.value("style", std::string("plain")) == "padded" ? ReplyStyle::Padded : ReplyStyle::Plain;
      for (const auto& row : j.value("judge", nlohmann::json::array())) {
        p.judge_script[{row.at("query_id").get<std::string>(), row.at("segment_id").get<std::string>(),
                        row.value("mode", std::string{})}] = row.at("label").get<int>();
      }
      for (const auto& row : j.value("answers", nlohmann::json::array())) {
        p.answer_script[row.at("query_id").get<std::string>()] = {
            row.at("relevance").get<int>(), row.at("accuracy").get<int>(), row.at("completeness").get<int>(),
            row.at("precision").get<int>()};
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ConfigError, std::string("stub policy: ") + e.what());
    }
    return p;
  }

  static StubPolicy load(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
      return from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::ConfigError, std::string("stub policy: ") + e.what());
    }
  }
};

/// Judge stand-in. Relevance requests (tag task=relevance) get a single
/// digit; answer requests (task=answer) get a reasoning line followed by a
/// single-line JSON object. Unscripted keys fall back to a seeded hash in
/// which every very-relevant pair is also somewhat relevant.
class StubJudge final : public ChatClient {
 public:
  explicit StubJudge(StubPolicy policy = {}) : policy_(std::move(policy)) {}

  std::string complete(const ChatRequest& request) override {
    const auto tag = [&](const char* key) {
      auto it = request.tags.find(key);
      return it == request.tags.end() ? std::string{} : it->second;
    };
    const std::string task = tag("task");
    const std::string query_id = tag("query_id");
    if (task == "relevance") {
      const int label = relevance_label(query_id, tag("segment_id"), tag("mode"));
      const std::string digit = std::to_string(label);
      return policy_.style == ReplyStyle::Padded ? " " + digit + "\n" : digit;
    }
    if (task == "answer") {
      const auto s = answer_scores(query_id);
      nlohmann::ordered_json j;
      j["relevance"] = s.relevance;
      j["accuracy"] = s.accuracy;
      j["completeness"] = s.completeness;
      j["precision"] = s.precision;
      return "The user wants to know about the topic of query " + query_id + "; the answer is graded below.\n" + j.dump();
    }
    throw Error(Errc::ScriptMiss, "stub judge got a request without a known task tag");
  }

  std::string model_id() const override { return "stub-judge"; }

  int relevance_label(const std::string& query_id, const std::string& segment_id, const std::string& mode) const {
    if (auto it = policy_.judge_script.find({query_id, segment_id, mode}); it != policy_.judge_script.end()) return it->second;
    if (auto it = policy_.judge_script.find({query_id, segment_id, ""}); it != policy_.judge_script.end()) return it->second;
    if (policy_.strict) throw Error(Errc::ScriptMiss, "(" + query_id + ", " + segment_id + ")");
    const auto bucket = fnv1a64(query_id + '\x1f' + segment_id, policy_.seed) % 3;
    return mode == "vr" ? static_cast<int>(bucket == 0) : static_cast<int>(bucket != 2);
  }

  eval::AnswerScores answer_scores(const std::string& query_id) const {
    if (auto it = policy_.answer_script.find(query_id); it != policy_.answer_script.end()) return it->second;
    if (policy_.strict) throw Error(Errc::ScriptMiss, "answer for " + query_id);
    std::uint64_t state = fnv1a64(query_id, policy_.seed);
    const int relevance = static_cast<int>(splitmix64(state) % 3);
    auto at_most = [&](int cap) { return static_cast<int>(splitmix64(state) % static_cast<std::uint64_t>(cap + 1)); };
    return {relevance, at_most(relevance), at_most(relevance), at_most(relevance)};
  }

 private:
  StubPolicy policy_;
};

}  // namespace voxrag
