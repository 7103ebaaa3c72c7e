#pragma once

#include <chrono>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "voxrag/clients.hpp"
#include "voxrag/embedding.hpp"
#include "voxrag/error.hpp"
#include "voxrag/hash.hpp"

namespace voxrag {

/// "scheme://host[:port][/prefix]" split into what httplib::Client wants.
struct HttpEndpoint {
  std::string origin;
  std::string prefix;

  static HttpEndpoint parse(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw Error(Errc::ConfigError, "endpoint needs a scheme: " + std::string(url));
    const auto path_start = url.find('/', scheme_end + 3);
    HttpEndpoint ep;
    ep.origin = std::string(url.substr(0, path_start));
    if (path_start != std::string_view::npos) ep.prefix = std::string(url.substr(path_start));
    while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
    return ep;
  }
};

struct HttpPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{120};
  std::ptrdiff_t max_in_flight = 4;
};

/// Thin JSON/bytes transport with bounded concurrency and retry-with-backoff
/// on transport errors, 429 and 5xx. A fresh connection per request keeps it
/// safe to share across threads.
class HttpTransport {
 public:
  HttpTransport(std::string_view url, HttpPolicy policy = {}, httplib::Headers headers = {})
      : endpoint_(HttpEndpoint::parse(url)),
        policy_(policy),
        headers_(std::move(headers)),
        slots_(std::max<std::ptrdiff_t>(1, policy.max_in_flight)) {}

  nlohmann::json post_json(std::string_view path, const nlohmann::json& body) {
    return send(path, body.dump(), "application/json");
  }
  nlohmann::json post_bytes(std::string_view path, std::string body, std::string_view content_type) {
    return send(path, std::move(body), content_type);
  }
  nlohmann::json get_json(std::string_view path) { return send(path, std::nullopt, {}); }

  const HttpEndpoint& endpoint() const noexcept { return endpoint_; }

 private:
  nlohmann::json send(std::string_view path, std::optional<std::string> body, std::string_view content_type) {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<1024>& s;
      ~Release() { s.release(); }
    } release{slots_};

    const std::string full_path = endpoint_.prefix + std::string(path);
    auto backoff = policy_.initial_backoff;
    std::string last_error;
    for (int attempt = 0; attempt <= policy_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
      httplib::Client client(endpoint_.origin);
      client.set_connection_timeout(std::chrono::seconds(10));
      client.set_read_timeout(policy_.timeout);
      client.set_write_timeout(policy_.timeout);
      auto res = body ? client.Post(full_path, headers_, *body, std::string(content_type))
                      : client.Get(full_path, headers_);
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        throw Error(Errc::BackendUnavailable, endpoint_.origin + full_path + " returned HTTP " +
                                                  std::to_string(res->status) + ": " + res->body.substr(0, 200));
      }
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::parse_error&) {
        throw Error(Errc::BackendUnavailable, endpoint_.origin + full_path + " returned non-JSON body");
      }
    }
    throw Error(Errc::BackendUnavailable, endpoint_.origin + full_path + ": " + last_error);
  }

  HttpEndpoint endpoint_;
  HttpPolicy policy_;
  httplib::Headers headers_;
  std::counting_semaphore<1024> slots_;
};

// ─── Model sidecar ───────────────────────────────────────────────────────────

/// POST /embed {"wavs": [base64 WAV, ...]} -> {"vectors": [[...]], "dim": D}
class SidecarEmbedder final : public Embedder {
 public:
  SidecarEmbedder(std::string_view url, std::size_t dim, HttpPolicy policy = {}) : http_(url, policy), dim_(dim) {}

  std::vector<Embedding> embed_batch(std::span<const EmbedItem> items) override {
    nlohmann::json body;
    body["wavs"] = nlohmann::json::array();
    for (const auto& item : items) body["wavs"].push_back(base64_encode(encode_wav_f32(*item.audio)));
    const auto reply = http_.post_json("/embed", body);
    std::vector<Embedding> out;
    try {
      const auto& vectors = reply.at("vectors");
      if (vectors.size() != items.size()) {
        throw Error(Errc::BackendUnavailable, "sidecar returned " + std::to_string(vectors.size()) + " vectors for " +
                                                  std::to_string(items.size()) + " payloads");
      }
      for (const auto& v : vectors) {
        Embedding e;
        for (const auto& x : v) e.values.push_back(x.is_number() ? x.get<double>() : std::numeric_limits<double>::quiet_NaN());
        validate_raw(e, dim_);
        out.push_back(std::move(e));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::BackendUnavailable, std::string("malformed /embed reply: ") + e.what());
    }
    return out;
  }

  std::size_t dim() const override { return dim_; }

  /// GET /info; the engine refuses to index against a model of another width.
  void verify() override {
    const auto info = http_.get_json("/info");
    if (!info.contains("dim") || !info["dim"].is_number_unsigned()) {
      throw Error(Errc::BackendUnavailable, "sidecar /info lacks an integer dim");
    }
    const auto served = info["dim"].get<std::size_t>();
    if (served != dim_) {
      throw Error(Errc::DimensionMismatch, "sidecar serves dim " + std::to_string(served) + ", config expects " + std::to_string(dim_));
    }
  }

 private:
  HttpTransport http_;
  std::size_t dim_;
};

/// POST /rerank {"query", "passages"} -> {"scores"}
class SidecarReranker final : public RerankClient {
 public:
  explicit SidecarReranker(std::string_view url, HttpPolicy policy = {}) : http_(url, policy) {}

  std::vector<double> score(std::string_view query, std::span<const std::string> passages) override {
    nlohmann::json body{{"query", query}, {"passages", std::vector<std::string>(passages.begin(), passages.end())}};
    const auto reply = http_.post_json("/rerank", body);
    try {
      auto scores = reply.at("scores").get<std::vector<double>>();
      if (scores.size() != passages.size()) throw Error(Errc::BackendUnavailable, "score count mismatch from /rerank");
      return scores;
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::BackendUnavailable, std::string("malformed /rerank reply: ") + e.what());
    }
  }

 private:
  HttpTransport http_;
};

/// POST /transcribe (raw WAV body) -> {"text"}
class SidecarTranscriber final : public Transcriber {
 public:
  explicit SidecarTranscriber(std::string_view url, HttpPolicy policy = {}) : http_(url, policy) {}

  std::string transcribe(const AudioBuffer& audio) override {
    const auto wav = encode_wav_pcm16(audio);
    const auto reply = http_.post_bytes("/transcribe", std::string(wav.begin(), wav.end()), "audio/wav");
    if (!reply.contains("text") || !reply["text"].is_string()) throw Error(Errc::BackendUnavailable, "malformed /transcribe reply");
    return reply["text"].get<std::string>();
  }

 private:
  HttpTransport http_;
};

// ─── OpenAI-compatible chat ──────────────────────────────────────────────────

struct ChatConfig {
  std::string endpoint;  // full URL of the chat-completions route
  std::string model;
  std::string api_key;
  double temperature = 0.0;
};

class OpenAIChatClient final : public ChatClient {
 public:
  explicit OpenAIChatClient(ChatConfig cfg, HttpPolicy policy = {})
      : cfg_(std::move(cfg)), http_(origin_of(cfg_.endpoint), policy, auth_headers(cfg_.api_key)),
        path_(HttpEndpoint::parse(cfg_.endpoint).prefix) {}

  std::string complete(const ChatRequest& request) override {
    nlohmann::json body;
    body["model"] = cfg_.model;
    body["temperature"] = cfg_.temperature;
    body["messages"] = nlohmann::json::array();
    for (const auto& m : request.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    const auto reply = http_.post_json(path_, body);
    try {
      const auto& content = reply.at("choices").at(0).at("message").at("content");
      return content.is_null() ? std::string{} : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::BackendUnavailable, std::string("malformed chat completion: ") + e.what());
    }
  }

  std::string model_id() const override { return cfg_.model; }

 private:
  static std::string origin_of(const std::string& url) { return HttpEndpoint::parse(url).origin; }
  static httplib::Headers auth_headers(const std::string& key) {
    httplib::Headers h;
    if (!key.empty()) h.emplace("Authorization", "Bearer " + key);
    return h;
  }

  ChatConfig cfg_;
  HttpTransport http_;
  std::string path_;
};

}  // namespace voxrag
