#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "voxrag/config.hpp"
#include "voxrag/eval/harness.hpp"
#include "voxrag/generation.hpp"
#include "voxrag/http_clients.hpp"
#include "voxrag/retrieval.hpp"
#include "voxrag/store.hpp"
#include "voxrag/stubs.hpp"

namespace voxrag {

/// The live or stub clients selected by an EngineConfig.
struct Backends {
  std::unique_ptr<Embedder> embedder;
  std::unique_ptr<RerankClient> reranker;
  std::unique_ptr<ChatClient> generator;
  std::unique_ptr<ChatClient> judge;
  std::unique_ptr<Transcriber> transcriber;  // may be null

  static Backends from_config(const EngineConfig& cfg) {
    Backends b;
    switch (cfg.embedding.backend) {
      case EmbedBackend::Stub:
        b.embedder = std::make_unique<StubEmbedder>(cfg.embedding.seed, cfg.embedding.dim);
        break;
      case EmbedBackend::File:
        b.embedder = std::make_unique<FileEmbedder>(FileEmbedder::open(cfg.embedding.path, cfg.embedding.dim));
        break;
      case EmbedBackend::Sidecar: {
        HttpPolicy policy;
        policy.max_in_flight = static_cast<std::ptrdiff_t>(cfg.embedding.max_in_flight);
        b.embedder = std::make_unique<SidecarEmbedder>(cfg.embedding.endpoint, cfg.embedding.dim, policy);
        break;
      }
    }

    if (cfg.rerank == ServiceBackend::Live) {
      HttpPolicy policy;
      policy.max_in_flight = static_cast<std::ptrdiff_t>(cfg.rerank_max_in_flight);
      b.reranker = std::make_unique<SidecarReranker>(cfg.rerank_endpoint, policy);
    } else {
      b.reranker = std::make_unique<LengthReranker>();
    }

    if (cfg.transcription == ServiceBackend::Live) {
      b.transcriber = std::make_unique<SidecarTranscriber>(cfg.transcription_endpoint);
    } else if (cfg.transcription == ServiceBackend::Stub) {
      b.transcriber = std::make_unique<StubTranscriber>(cfg.embedding.seed);
    }

    b.generator = make_chat(cfg.generator, [] { return std::make_unique<EchoChatClient>(); });
    b.judge = make_chat(cfg.judge, [&] {
      return std::make_unique<StubJudge>(cfg.judge_policy.empty() ? StubPolicy{} : StubPolicy::load(cfg.judge_policy));
    });
    return b;
  }

 private:
  template <typename MakeStub>
  static std::unique_ptr<ChatClient> make_chat(const ChatSection& section, MakeStub make_stub) {
    if (section.backend != ServiceBackend::Live) return make_stub();
    if (section.endpoint.empty() || section.model.empty()) {
      throw Error(Errc::ConfigError, "live chat backend needs an endpoint and model (CHAT_ENDPOINT, CHAT_MODEL)");
    }
    HttpPolicy policy;
    policy.max_in_flight = static_cast<std::ptrdiff_t>(section.max_in_flight);
    return std::make_unique<OpenAIChatClient>(
        ChatConfig{section.endpoint, section.model, section.api_key, section.temperature}, policy);
  }
};

struct QueryOptions {
  std::size_t k = kDefaultTopK;
  bool rerank = false;
  std::string query_text;  // needed for rerank and answer; transcribed when empty and possible
  std::string query_id;
};

struct AnswerResult {
  RetrievalResult retrieval;
  Prompt prompt;
  Answer answer;
};

/// Query-time pipeline over an opened store.
class Engine {
 public:
  Engine(EngineConfig cfg, SegmentStore& store, Backends& backends)
      : cfg_(std::move(cfg)), store_(store), backends_(backends) {
    if (!cfg_.generation_header.empty()) header_ = read_text_file(cfg_.generation_header);
  }

  const EngineConfig& config() const noexcept { return cfg_; }

  /// Swaps in an externally supplied index (e.g. `query --index`). Every id
  /// must resolve in the store.
  void use_index(FlatIndex index) {
    for (const auto& id : index.ids()) {
      if (!store_.table().find(id)) throw Error(Errc::UnknownSegmentId, "index id " + id + " not in store manifest");
    }
    if (index.dim() != cfg_.embedding.dim) throw Error(Errc::DimensionMismatch, "index dim " + std::to_string(index.dim()));
    index_override_ = std::move(index);
  }

  const FlatIndex& index() const { return index_override_ ? *index_override_ : store_.index(); }

  Embedding embed_query(const AudioBuffer& audio, const std::string& query_id = {}) {
    return process_query(audio, *backends_.embedder, cfg_.sample_rate, query_id);
  }

  std::string resolve_query_text(const AudioBuffer& audio, const QueryOptions& opts) {
    if (!opts.query_text.empty()) return opts.query_text;
    if (backends_.transcriber) return backends_.transcriber->transcribe(preprocess(audio, cfg_.sample_rate));
    throw Error(Errc::MissingTranscript, "query text required (no transcription backend configured)");
  }

  RetrievalResult query(const Embedding& q, const QueryOptions& opts) {
    auto result = retrieve(index(), store_.table(), q, opts.k, opts.query_id);
    if (opts.rerank) {
      if (opts.query_text.empty()) throw Error(Errc::MissingTranscript, "rerank needs the query text");
      result = rerank(opts.query_text, std::move(result), store_.table(), *backends_.reranker);
    }
    return result;
  }

  RetrievalResult query(const AudioBuffer& audio, QueryOptions opts) {
    if (opts.rerank && opts.query_text.empty()) opts.query_text = resolve_query_text(audio, opts);
    return query(embed_query(audio, opts.query_id), opts);
  }

  AnswerResult answer(const Embedding& q, const QueryOptions& opts) {
    if (opts.query_text.empty()) throw Error(Errc::MissingTranscript, "answer needs the query text");
    AnswerResult out;
    out.retrieval = query(q, opts);
    std::vector<Segment> context;
    for (const auto& id : out.retrieval.context_segments) context.push_back(store_.table().at(id));
    out.prompt = build_prompt(opts.query_text, context, header_.empty() ? kDefaultInstructionHeader : std::string_view(header_));
    out.answer = generate(out.prompt, *backends_.generator);
    return out;
  }

  AnswerResult answer(const AudioBuffer& audio, QueryOptions opts) {
    opts.query_text = resolve_query_text(audio, opts);
    return answer(embed_query(audio, opts.query_id), opts);
  }

  eval::RetrievalEvalReport eval_retrieval(const std::vector<eval::EvalQuery>& queries, eval::RelevanceMode mode,
                                           bool with_rerank, eval::JudgmentCache& cache) {
    eval::RetrievalEvalOptions opts;
    opts.mode = mode;
    opts.with_rerank = with_rerank;
    opts.k = cfg_.k;
    opts.max_in_flight = cfg_.judge.max_in_flight;
    const auto& prompt_path = mode == eval::RelevanceMode::VeryRelevant ? cfg_.vr_prompt : cfg_.sr_prompt;
    if (!prompt_path.empty()) opts.rubric = read_text_file(prompt_path);
    return eval::run_retrieval_eval(
        queries,
        [&](const eval::EvalQuery& q) {
          QueryOptions qo;
          qo.k = cfg_.k;
          qo.rerank = with_rerank;
          qo.query_text = q.text;
          qo.query_id = q.query_id;
          return query(load_audio(q.audio), qo);
        },
        store_.table(), *backends_.judge, cache, opts);
  }

  /// Retrieves and answers every query, then has the judge grade the answers.
  eval::StatsReport eval_answers(const std::vector<eval::EvalQuery>& queries, bool with_rerank = false) {
    std::vector<eval::AnswerCase> cases;
    for (const auto& q : queries) {
      QueryOptions qo;
      qo.k = cfg_.k;
      qo.rerank = with_rerank;
      qo.query_text = q.text;
      qo.query_id = q.query_id;
      auto result = answer(load_audio(q.audio), qo);
      eval::AnswerCase c{q.query_id, q.text, result.answer.text, {}};
      for (const auto& id : result.retrieval.context_segments) c.documents.push_back(store_.table().at(id).transcript.value_or(""));
      cases.push_back(std::move(c));
    }
    const std::string rubric = cfg_.answer_prompt.empty() ? std::string(eval::kAnswerJudgePrompt) : read_text_file(cfg_.answer_prompt);
    return eval::run_answer_eval(cases, *backends_.judge, cfg_.judge.max_in_flight, rubric, cfg_.alpha);
  }

 private:
  EngineConfig cfg_;
  SegmentStore& store_;
  Backends& backends_;
  std::optional<FlatIndex> index_override_;
  std::string header_;
};

}  // namespace voxrag
