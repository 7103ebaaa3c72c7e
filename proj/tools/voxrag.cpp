#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "voxrag/voxrag.hpp"

namespace fs = std::filesystem;
using namespace voxrag;

namespace {

struct Globals {
  std::string config;
  std::string store = "store";
};

EngineConfig make_config(const Globals& g) {
  EngineConfig cfg = g.config.empty() ? EngineConfig{} : load_config(g.config);
  apply_environment(cfg);
  cfg.validate();
  return cfg;
}

void print_json(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << "\n"; }

nlohmann::ordered_json answer_json(const AnswerResult& r) {
  nlohmann::ordered_json j;
  j["answer"] = r.answer.text;
  j["model"] = r.answer.model_id;
  j["segments"] = r.prompt.segment_order;
  j["prompt_hash"] = r.answer.prompt_hash;
  return j;
}

void write_report(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

/// Blocks SIGINT/SIGTERM and stops the server when one arrives.
void serve_until_signal(Service& service) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    service.stop();
  });
  waiter.detach();
  service.run();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxrag: speech-to-speech retrieval and answer generation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Config file (key = value sections)")->check(CLI::ExistingFile);
  app.add_option("--store", g.store, "Store directory");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Segment, embed and store one episode");
  IngestRequest ingest_req;
  std::string audio_path, rttm_path, transcripts_path, spans_path;
  ingest->add_option("--audio", audio_path, "Episode WAV")->required();
  ingest->add_option("--rttm", rttm_path, "Diarization turns (RTTM)");
  ingest->add_option("--transcripts", transcripts_path, "JSON Lines {segment_id, text}");
  ingest->add_option("--spans", spans_path, "External speech spans (start end per line)");
  ingest->add_option("--episode-id", ingest_req.episode_id, "Episode id (default: audio file stem)");

  // query / answer share retrieval flags
  QueryOptions qopts;
  std::string index_path, query_audio;
  auto* query = app.add_subcommand("query", "Retrieve segments for a spoken query");
  query->add_option("--audio", query_audio, "Query WAV")->required();
  query->add_option("--index", index_path, "Index file (default: the store's index)");
  query->add_flag("--rerank", qopts.rerank, "Rerank with the cross-encoder backend");
  query->add_option("--k", qopts.k, "Top-k")->check(CLI::PositiveNumber);
  query->add_option("--text", qopts.query_text, "Query transcript (for rerank)");

  auto* answer = app.add_subcommand("answer", "Retrieve and generate an answer");
  answer->add_option("--query-audio", query_audio, "Query WAV")->required();
  answer->add_option("--index", index_path, "Index file (default: the store's index)");
  answer->add_flag("--rerank", qopts.rerank, "Rerank with the cross-encoder backend");
  answer->add_option("--k", qopts.k, "Top-k")->check(CLI::PositiveNumber);
  answer->add_option("--text", qopts.query_text, "Query transcript");

  // evaluation
  std::string mode_name = "vr", queries_path, out_dir = "reports", cache_path;
  bool eval_rerank = false;
  auto* eval_ret = app.add_subcommand("eval-retrieval", "Judge retrieved segments and report Recall@k / nDCG@k");
  eval_ret->add_option("--mode", mode_name, "Relevance mode")->check(CLI::IsMember({"vr", "sr"}));
  eval_ret->add_flag("--rerank", eval_rerank, "Evaluate the reranked variant");
  eval_ret->add_option("--queries", queries_path, "JSON Lines {query_id, audio, text}")->required();
  eval_ret->add_option("--out", out_dir, "Report directory");
  eval_ret->add_option("--cache", cache_path, "Judgment cache (default: <store>/judgments.jsonl)");

  auto* eval_ans = app.add_subcommand("eval-answers", "Generate answers, judge them and report statistics");
  eval_ans->add_option("--queries", queries_path, "JSON Lines {query_id, audio, text}")->required();
  eval_ans->add_option("--out", out_dir, "Report directory");
  eval_ans->add_flag("--rerank", eval_rerank, "Answer from the reranked context");

  // serve
  std::optional<std::string> host;
  std::optional<int> port;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0: any free port)");

  CLI11_PARSE(app, argc, argv);

  try {
    EngineConfig cfg = make_config(g);
    if (host) cfg.host = *host;
    if (port) cfg.port = *port;
    Backends backends = Backends::from_config(cfg);

    if (*ingest) {
      backends.embedder->verify();
      ingest_req.audio = audio_path;
      if (!rttm_path.empty()) ingest_req.rttm = rttm_path;
      if (!transcripts_path.empty()) ingest_req.transcripts = transcripts_path;
      if (!spans_path.empty()) ingest_req.spans = spans_path;
      auto store = SegmentStore::open(g.store, cfg.embedding.dim);
      const auto summary = store.ingest(ingest_req, cfg, *backends.embedder, backends.transcriber.get());
      nlohmann::ordered_json j;
      j["episode_id"] = summary.episode_id;
      j["segment_count"] = summary.segment_count;
      j["duration_s"] = summary.duration_s;
      j["speech_s"] = summary.speech_s;
      print_json(j);
      return 0;
    }

    auto store = SegmentStore::open(g.store, cfg.embedding.dim);
    Engine engine(cfg, store, backends);
    if (!index_path.empty()) engine.use_index(FlatIndex::deserialize(read_file_bytes(index_path)));

    if (*query) {
      print_json(to_json(engine.query(load_audio(query_audio), qopts)));
    } else if (*answer) {
      print_json(answer_json(engine.answer(load_audio(query_audio), qopts)));
    } else if (*eval_ret) {
      const fs::path cache_file = cache_path.empty() ? store.judgments_path() : fs::path(cache_path);
      auto cache = eval::JudgmentCache::load(cache_file);
      const auto report = engine.eval_retrieval(eval::read_queries(queries_path), eval::parse_mode(mode_name), eval_rerank, cache);
      write_report(cache_file, cache.serialize());
      const fs::path table = fs::path(out_dir) / "table1.csv";
      const std::string existing = fs::exists(table) ? read_text_file(table) : std::string{};
      write_report(table, existing.empty() ? eval::retrieval_table_csv({report.row})
                                           : eval::merge_retrieval_table_csv(existing, {report.row}));
      print_json(eval::to_json(report.row));
    } else if (*eval_ans) {
      const auto report = engine.eval_answers(eval::read_queries(queries_path), eval_rerank);
      write_report(fs::path(out_dir) / "table2.csv", eval::answer_table_csv(report));
      write_report(fs::path(out_dir) / "correlations.csv", eval::correlation_csv(report));
      write_report(fs::path(out_dir) / "answers.json", eval::to_json(report).dump(2) + "\n");
      std::cout << eval::answer_table_csv(report);
    } else if (*serve) {
      backends.embedder->verify();
      Service service(cfg, store, backends);
      const int bound = service.bind(cfg.host, cfg.port);
      std::fprintf(stderr, "voxrag: listening on %s:%d\n", cfg.host.c_str(), bound);
      serve_until_signal(service);
    }
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
