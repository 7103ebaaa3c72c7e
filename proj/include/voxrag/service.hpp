#pragma once

#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "voxrag/engine.hpp"

namespace voxrag {

namespace detail {

inline int http_status(Errc code) {
  switch (code) {
    case Errc::NotFound:
    case Errc::UnknownSegmentId:
      return 404;
    case Errc::BackendUnavailable:
      return 502;
    case Errc::CorruptStore:
    case Errc::PartialIngest:
      return 500;
    default:
      return 400;
  }
}

inline void send_json(httplib::Response& res, const nlohmann::ordered_json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
  nlohmann::ordered_json body;
  body["error"] = code;
  body["message"] = message;
  send_json(res, body, status);
}

inline bool truthy(const std::string& v) { return v == "1" || v == "true" || v == "yes"; }

/// Scratch directory for multipart uploads, removed on scope exit.
class UploadDir {
 public:
  UploadDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "voxrag-upload-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw Error(Errc::PartialIngest, "cannot create upload directory");
    path_ = tmpl;
  }
  ~UploadDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  UploadDir(const UploadDir&) = delete;
  UploadDir& operator=(const UploadDir&) = delete;

  std::filesystem::path write(const std::string& name, const std::string& bytes) const {
    const auto p = path_ / name;
    write_file_atomic(p, bytes);
    return p;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace detail

/// HTTP front end over one store. Ingest takes the store lock exclusively;
/// everything else shares it.
class Service {
 public:
  Service(EngineConfig cfg, SegmentStore& store, Backends& backends)
      : cfg_(cfg), store_(store), backends_(backends), engine_(std::move(cfg), store, backends) {
    server_.new_task_queue = [n = cfg_.server_threads] { return new httplib::ThreadPool(static_cast<std::size_t>(n)); };
    // httplib defaults to SO_REUSEPORT, which would let a second server share the port.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    routes();
  }

  ~Service() { stop(); }

  Engine& engine() noexcept { return engine_; }

  /// Binds the listening socket; port 0 picks a free port. Returns the port.
  int bind(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
      bound = server_.bind_to_any_port(host);
    } else if (!server_.bind_to_port(host, port)) {
      bound = -1;
    }
    if (bound < 0) throw Error(Errc::PortInUse, "cannot bind " + host + ":" + std::to_string(port));
    port_ = bound;
    return bound;
  }

  /// Serves until stop(); call bind() first.
  void run() { server_.listen_after_bind(); }

  void start() {
    thread_ = std::thread([this] { run(); });
    server_.wait_until_ready();
  }

  void stop() {
    if (server_.is_running()) server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const noexcept { return port_; }

 private:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static Handler guarded(Handler fn) {
    return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        detail::send_error(res, detail::http_status(e.code()), errc_name(e.code()), e.what());
      } catch (const nlohmann::json::exception& e) {
        detail::send_error(res, 400, "ParseError", e.what());
      } catch (const std::exception& e) {
        detail::send_error(res, 500, "Internal", e.what());
      }
    };
  }

  QueryOptions query_options(const httplib::Request& req, const nlohmann::json* body) const {
    QueryOptions opts;
    opts.k = cfg_.k;
    if (req.has_param("k")) {
      const auto v = req.get_param_value("k");
      char* end = nullptr;
      const long k = std::strtol(v.c_str(), &end, 10);
      if (v.empty() || *end != '\0' || k <= 0) throw Error(Errc::ConfigError, "k must be a positive integer");
      opts.k = static_cast<std::size_t>(k);
    }
    opts.rerank = req.has_param("rerank") && detail::truthy(req.get_param_value("rerank"));
    opts.query_text = req.get_param_value("text");
    opts.query_id = req.get_param_value("query_id");
    if (body != nullptr) {
      if (body->contains("k")) opts.k = body->at("k").get<std::size_t>();
      if (body->contains("rerank")) opts.rerank = body->at("rerank").get<bool>();
      if (body->contains("text")) opts.query_text = body->at("text").get<std::string>();
      if (body->contains("query_id")) opts.query_id = body->at("query_id").get<std::string>();
    }
    if (opts.k == 0) throw Error(Errc::ConfigError, "k must be positive");
    return opts;
  }

  static bool is_json(const httplib::Request& req) {
    return req.get_header_value("Content-Type").starts_with("application/json");
  }

  /// JSON {"embedding": [...]} or a WAV body.
  template <typename Fn>
  void with_query(const httplib::Request& req, bool needs_text, Fn&& fn) {
    if (is_json(req)) {
      const auto body = nlohmann::json::parse(req.body);
      const auto opts = query_options(req, &body);
      Embedding raw{body.at("embedding").get<std::vector<double>>(), false};
      const auto q = finish_embedding(std::move(raw), cfg_.embedding.dim);
      std::shared_lock lock(store_mu_);
      fn(q, opts);
      return;
    }
    const auto bytes = std::span(reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size());
    const AudioBuffer audio = decode_wav(bytes);
    auto opts = query_options(req, nullptr);
    const auto q = engine_.embed_query(audio, opts.query_id);
    if ((opts.rerank || needs_text) && opts.query_text.empty()) opts.query_text = engine_.resolve_query_text(audio, opts);
    std::shared_lock lock(store_mu_);
    fn(q, opts);
  }

  std::vector<eval::EvalQuery> eval_queries(const nlohmann::json& body) const {
    if (body.contains("queries_file")) return eval::read_queries(body.at("queries_file").get<std::string>());
    std::vector<eval::EvalQuery> out;
    for (const auto& q : body.at("queries")) out.push_back(eval::query_from_json(q));
    return out;
  }

  void routes() {
    server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });

    server_.Post("/episodes", guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (!req.is_multipart_form_data() || !req.has_file("audio")) {
        throw Error(Errc::ParseError, "expected multipart form with an 'audio' file");
      }
      detail::UploadDir dir;
      const auto audio = req.get_file_value("audio");
      IngestRequest ingest;
      ingest.audio = dir.write("audio.wav", audio.content);
      if (req.has_file("episode_id")) {
        ingest.episode_id = req.get_file_value("episode_id").content;
      } else {
        ingest.episode_id = std::filesystem::path(audio.filename).stem().string();
      }
      if (ingest.episode_id.empty()) throw Error(Errc::InvariantViolation, "episode_id required");
      if (req.has_file("rttm")) ingest.rttm = dir.write("turns.rttm", req.get_file_value("rttm").content);
      if (req.has_file("transcripts")) ingest.transcripts = dir.write("transcripts.jsonl", req.get_file_value("transcripts").content);
      if (req.has_file("spans")) ingest.spans = dir.write("spans.txt", req.get_file_value("spans").content);

      auto prepared = prepare_episode(ingest, cfg_, *backends_.embedder, backends_.transcriber.get());
      IngestSummary summary;
      {
        std::unique_lock lock(store_mu_);
        summary = store_.commit(prepared);
      }
      nlohmann::ordered_json body;
      body["episode_id"] = summary.episode_id;
      body["segment_count"] = summary.segment_count;
      body["duration_s"] = summary.duration_s;
      body["speech_s"] = summary.speech_s;
      detail::send_json(res, body, 201);
    }));

    server_.Post("/query", guarded([this](const httplib::Request& req, httplib::Response& res) {
      with_query(req, false, [&](const Embedding& q, const QueryOptions& opts) { detail::send_json(res, to_json(engine_.query(q, opts))); });
    }));

    server_.Post("/answer", guarded([this](const httplib::Request& req, httplib::Response& res) {
      with_query(req, true, [&](const Embedding& q, const QueryOptions& opts) {
        const auto result = engine_.answer(q, opts);
        nlohmann::ordered_json body;
        body["answer"] = result.answer.text;
        body["model"] = result.answer.model_id;
        body["segments"] = result.prompt.segment_order;
        body["prompt_hash"] = result.answer.prompt_hash;
        body["retrieval"] = to_json(result.retrieval);
        detail::send_json(res, body);
      });
    }));

    server_.Get(R"(/segments/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      std::shared_lock lock(store_mu_);
      detail::send_json(res, segment_to_json(store_.table().at(req.matches[1].str())));
    }));

    server_.Get(R"(/segments/([^/]+)/audio)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      std::shared_lock lock(store_mu_);
      const auto bytes = read_file_bytes(store_.segment_audio_path(req.matches[1].str()));
      res.set_content(std::string(bytes.begin(), bytes.end()), "audio/wav");
    }));

    server_.Post("/eval/retrieval", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      const auto mode = eval::parse_mode(body.value("mode", std::string("vr")));
      const bool with_rerank = body.value("rerank", false);
      const auto queries = eval_queries(body);
      std::scoped_lock eval_lock(eval_mu_);
      std::shared_lock lock(store_mu_);
      auto cache = eval::JudgmentCache::load(store_.judgments_path());
      const auto report = engine_.eval_retrieval(queries, mode, with_rerank, cache);
      write_file_atomic(store_.judgments_path(), cache.serialize());
      nlohmann::ordered_json out = eval::to_json(report.row);
      out["per_query"] = nlohmann::ordered_json::array();
      for (const auto& q : report.per_query) {
        out["per_query"].push_back({{"query_id", q.query_id}, {"recall", q.recall}, {"ndcg", q.ndcg}, {"relevant", q.relevant}});
      }
      detail::send_json(res, out);
    }));

    server_.Post("/eval/answers", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      const auto queries = eval_queries(body);
      std::shared_lock lock(store_mu_);
      detail::send_json(res, eval::to_json(engine_.eval_answers(queries, body.value("rerank", false))));
    }));
  }

  EngineConfig cfg_;
  SegmentStore& store_;
  Backends& backends_;
  Engine engine_;
  httplib::Server server_;
  std::thread thread_;
  std::shared_mutex store_mu_;
  std::mutex eval_mu_;
  int port_ = 0;
};

}  // namespace voxrag
