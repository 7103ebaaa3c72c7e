#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "voxrag/audio.hpp"
#include "voxrag/clients.hpp"
#include "voxrag/embedding.hpp"
#include "voxrag/index.hpp"
#include "voxrag/segmentation.hpp"

namespace voxrag {

inline constexpr std::size_t kDefaultTopK = 10;

struct RetrievalResult {
  std::string query_id;
  std::vector<SearchHit> hits;  // core hits; score stays the cosine score
  std::vector<std::string> context_segments;
  bool reranked = false;
  std::vector<double> rerank_scores;  // parallel to hits when reranked
};

/// Same front end as episode segments: mono, pipeline rate, embed, normalize.
inline Embedding process_query(const AudioBuffer& audio, Embedder& embedder, int pipeline_rate = kPipelineRate,
                               std::string query_id = {}) {
  return embed(embedder, quantize_pcm16(preprocess(audio, pipeline_rate)), std::move(query_id));
}

inline Embedding process_query(const std::filesystem::path& audio_path, Embedder& embedder,
                               int pipeline_rate = kPipelineRate, std::string query_id = {}) {
  return process_query(load_audio(audio_path), embedder, pipeline_rate, std::move(query_id));
}

/// For each hit in rank order emits prev, hit, next (absent neighbours
/// skipped), keeping the first occurrence of every id.
inline std::vector<std::string> expand_neighbors(const std::vector<SearchHit>& hits, const SegmentTable& table) {
  std::vector<std::string> context;
  std::unordered_set<std::string> seen;
  auto emit = [&](const std::string& id) {
    if (seen.insert(id).second) context.push_back(id);
  };
  for (const auto& hit : hits) {
    const Segment& seg = table.at(hit.segment_id);
    if (seg.prev_id && table.find(*seg.prev_id)) emit(*seg.prev_id);
    emit(seg.segment_id);
    if (seg.next_id && table.find(*seg.next_id)) emit(*seg.next_id);
  }
  return context;
}

inline RetrievalResult retrieve(const FlatIndex& index, const SegmentTable& table, const Embedding& query,
                                std::size_t k = kDefaultTopK, std::string query_id = {}) {
  RetrievalResult result;
  result.query_id = std::move(query_id);
  result.hits = index.search(query, k);
  result.context_segments = expand_neighbors(result.hits, table);
  return result;
}

/// Reorders the core hits by descending scorer score over (query, transcript)
/// pairs; ties keep the prior rank. Neighbour context follows the new order.
inline RetrievalResult rerank(std::string_view query_text, RetrievalResult result, const SegmentTable& table,
                              RerankClient& scorer) {
  std::vector<std::string> passages;
  passages.reserve(result.hits.size());
  for (const auto& hit : result.hits) {
    const Segment& seg = table.at(hit.segment_id);
    if (!seg.transcript) throw Error(Errc::MissingTranscript, seg.segment_id);
    passages.push_back(*seg.transcript);
  }
  if (passages.empty()) {
    result.reranked = true;
    return result;
  }
  const auto scores = scorer.score(query_text, passages);
  if (scores.size() != passages.size()) throw Error(Errc::BackendUnavailable, "reranker returned wrong score count");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<SearchHit> hits;
  std::vector<double> rerank_scores;
  for (std::size_t r = 0; r < order.size(); ++r) {
    SearchHit hit = result.hits[order[r]];
    hit.rank = r + 1;
    hits.push_back(std::move(hit));
    rerank_scores.push_back(scores[order[r]]);
  }
  result.hits = std::move(hits);
  result.rerank_scores = std::move(rerank_scores);
  result.context_segments = expand_neighbors(result.hits, table);
  result.reranked = true;
  return result;
}

inline nlohmann::ordered_json to_json(const RetrievalResult& r) {
  nlohmann::ordered_json j;
  j["query_id"] = r.query_id;
  j["hits"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.hits.size(); ++i) {
    nlohmann::ordered_json h;
    h["segment_id"] = r.hits[i].segment_id;
    h["score"] = r.hits[i].score;
    h["rank"] = r.hits[i].rank;
    if (r.reranked && i < r.rerank_scores.size()) h["rerank_score"] = r.rerank_scores[i];
    j["hits"].push_back(std::move(h));
  }
  j["context_segments"] = r.context_segments;
  j["reranked"] = r.reranked;
  return j;
}

}  // namespace voxrag
