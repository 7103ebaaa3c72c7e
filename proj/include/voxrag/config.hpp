#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "voxrag/audio.hpp"
#include "voxrag/embedding.hpp"
#include "voxrag/error.hpp"
#include "voxrag/segmentation.hpp"

namespace voxrag {

enum class ServiceBackend { Stub, Live, None };

struct ChatSection {
  ServiceBackend backend = ServiceBackend::Stub;
  std::string endpoint;
  std::string model;
  std::string api_key;
  double temperature = 0.0;
  std::size_t max_in_flight = 4;
};

/// Every tunable in one place; retrieval variants share it so only the
/// switch under test differs between runs.
struct EngineConfig {
  int sample_rate = kPipelineRate;
  FuseConfig fuse;
  std::size_t k = 10;
  VadConfig vad;

  EmbedderConfig embedding;

  ServiceBackend transcription = ServiceBackend::None;
  std::string transcription_endpoint = "http://127.0.0.1:8088";

  ServiceBackend rerank = ServiceBackend::Stub;
  std::string rerank_endpoint = "http://127.0.0.1:8088";
  std::size_t rerank_max_in_flight = 4;

  ChatSection generator;
  std::filesystem::path generation_header;  // empty: built-in header

  ChatSection judge;
  std::filesystem::path judge_policy;  // stub judge script (JSON)
  std::filesystem::path vr_prompt, sr_prompt, answer_prompt;  // empty: shipped prompts
  double alpha = 0.05;

  std::string host = "127.0.0.1";
  int port = 8080;
  int server_threads = 8;

  void validate() const {
    auto positive = [](bool ok, const char* what) {
      if (!ok) throw Error(Errc::ConfigError, std::string(what) + " must be positive");
    };
    positive(sample_rate > 0, "pipeline.sample_rate");
    positive(fuse.max_segment_s > 0.0, "pipeline.max_segment_s");
    positive(fuse.merge_gap_s >= 0.0, "pipeline.merge_gap_s");
    positive(k > 0, "pipeline.k");
    positive(vad.frame_ms > 0.0, "vad.frame_ms");
    positive(embedding.dim > 0, "embedding.dim");
    positive(embedding.batch_size > 0, "embedding.batch_size");
    positive(embedding.max_in_flight > 0, "embedding.max_in_flight");
    positive(rerank_max_in_flight > 0, "rerank.max_in_flight");
    positive(generator.max_in_flight > 0, "generator.max_in_flight");
    positive(judge.max_in_flight > 0, "judge.max_in_flight");
    positive(port > 0 && port < 65536, "server.port");
    positive(server_threads > 0, "server.threads");
    positive(alpha > 0.0 && alpha < 1.0, "judge.alpha");
    if (embedding.backend == EmbedBackend::File && embedding.path.empty()) {
      throw Error(Errc::ConfigError, "embedding.backend = file needs embedding.path");
    }
  }
};

namespace detail {

inline std::string strip(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && (out.front() == '"' || out.front() == '\'') && out.back() == out.front()) {
    out = out.substr(1, out.size() - 2);
  }
  return out;
}

inline ServiceBackend parse_service_backend(const std::string& v, const std::string& key) {
  if (v == "stub") return ServiceBackend::Stub;
  if (v == "sidecar" || v == "openai" || v == "live") return ServiceBackend::Live;
  if (v == "none") return ServiceBackend::None;
  throw Error(Errc::ConfigError, key + ": unknown backend '" + v + "'");
}

}  // namespace detail

/// Applies CHAT_ENDPOINT / CHAT_MODEL / CHAT_API_KEY to the generator, and to
/// the judge wherever the judge section left a field blank.
inline void apply_environment(EngineConfig& cfg) {
  auto env = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? v : "";
  };
  if (auto v = env("CHAT_ENDPOINT"); !v.empty()) cfg.generator.endpoint = v;
  if (auto v = env("CHAT_MODEL"); !v.empty()) cfg.generator.model = v;
  if (auto v = env("CHAT_API_KEY"); !v.empty()) cfg.generator.api_key = v;
  if (cfg.judge.endpoint.empty()) cfg.judge.endpoint = cfg.generator.endpoint;
  if (cfg.judge.model.empty()) cfg.judge.model = cfg.generator.model;
  if (cfg.judge.api_key.empty()) cfg.judge.api_key = cfg.generator.api_key;
}

/// INI/TOML-style text: [section] headers, key = value lines, '#' comments.
inline EngineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {}) {
  EngineConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line, section;
  std::size_t line_no = 0;
  auto resolve = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto where = "config line " + std::to_string(line_no);
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string trimmed = detail::strip(line);
    if (trimmed.empty()) continue;
    if (trimmed.front() == '[') {
      if (trimmed.back() != ']') throw Error(Errc::ConfigError, where + ": unterminated section header");
      section = detail::strip(std::string_view(trimmed).substr(1, trimmed.size() - 2));
      continue;
    }
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) throw Error(Errc::ConfigError, where + ": expected key = value");
    const std::string key = section + "." + detail::strip(std::string_view(trimmed).substr(0, eq));
    const std::string value = detail::strip(std::string_view(trimmed).substr(eq + 1));

    auto as_double = [&] {
      try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
      } catch (const std::logic_error&) {
        throw Error(Errc::ConfigError, where + ": " + key + " expects a number");
      }
    };
    auto as_size = [&] {
      const double v = as_double();
      if (v < 0 || v != static_cast<double>(static_cast<long long>(v))) {
        throw Error(Errc::ConfigError, where + ": " + key + " expects a non-negative integer");
      }
      return static_cast<std::size_t>(v);
    };

    if (key == "pipeline.sample_rate") cfg.sample_rate = static_cast<int>(as_size());
    else if (key == "pipeline.max_segment_s") cfg.fuse.max_segment_s = as_double();
    else if (key == "pipeline.merge_gap_s") cfg.fuse.merge_gap_s = as_double();
    else if (key == "pipeline.k") cfg.k = as_size();
    else if (key == "vad.frame_ms") cfg.vad.frame_ms = as_double();
    else if (key == "vad.threshold_db") cfg.vad.threshold_db = as_double();
    else if (key == "vad.min_silence_ms") cfg.vad.min_silence_ms = as_double();
    else if (key == "vad.min_speech_ms") cfg.vad.min_speech_ms = as_double();
    else if (key == "embedding.backend") {
      if (value == "stub") cfg.embedding.backend = EmbedBackend::Stub;
      else if (value == "sidecar") cfg.embedding.backend = EmbedBackend::Sidecar;
      else if (value == "file") cfg.embedding.backend = EmbedBackend::File;
      else throw Error(Errc::ConfigError, where + ": unknown embedding backend '" + value + "'");
    }
    else if (key == "embedding.endpoint") cfg.embedding.endpoint = value;
    else if (key == "embedding.path") cfg.embedding.path = resolve(value);
    else if (key == "embedding.dim") cfg.embedding.dim = as_size();
    else if (key == "embedding.seed") cfg.embedding.seed = as_size();
    else if (key == "embedding.batch_size") cfg.embedding.batch_size = as_size();
    else if (key == "embedding.max_in_flight") cfg.embedding.max_in_flight = as_size();
    else if (key == "transcription.backend") cfg.transcription = detail::parse_service_backend(value, key);
    else if (key == "transcription.endpoint") cfg.transcription_endpoint = value;
    else if (key == "rerank.backend") cfg.rerank = detail::parse_service_backend(value, key);
    else if (key == "rerank.endpoint") cfg.rerank_endpoint = value;
    else if (key == "rerank.max_in_flight") cfg.rerank_max_in_flight = as_size();
    else if (key == "generator.backend") cfg.generator.backend = detail::parse_service_backend(value, key);
    else if (key == "generator.endpoint") cfg.generator.endpoint = value;
    else if (key == "generator.model") cfg.generator.model = value;
    else if (key == "generator.temperature") cfg.generator.temperature = as_double();
    else if (key == "generator.max_in_flight") cfg.generator.max_in_flight = as_size();
    else if (key == "generator.header_file") cfg.generation_header = resolve(value);
    else if (key == "judge.backend") cfg.judge.backend = detail::parse_service_backend(value, key);
    else if (key == "judge.endpoint") cfg.judge.endpoint = value;
    else if (key == "judge.model") cfg.judge.model = value;
    else if (key == "judge.temperature") cfg.judge.temperature = as_double();
    else if (key == "judge.max_in_flight") cfg.judge.max_in_flight = as_size();
    else if (key == "judge.policy") cfg.judge_policy = resolve(value);
    else if (key == "judge.vr_prompt") cfg.vr_prompt = resolve(value);
    else if (key == "judge.sr_prompt") cfg.sr_prompt = resolve(value);
    else if (key == "judge.answer_prompt") cfg.answer_prompt = resolve(value);
    else if (key == "judge.alpha") cfg.alpha = as_double();
    else if (key == "server.host") cfg.host = value;
    else if (key == "server.port") cfg.port = static_cast<int>(as_size());
    else if (key == "server.threads") cfg.server_threads = static_cast<int>(as_size());
    else throw Error(Errc::ConfigError, where + ": unknown key '" + key + "'");
  }
  return cfg;
}

inline EngineConfig load_config(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path.parent_path());
}

}  // namespace voxrag
