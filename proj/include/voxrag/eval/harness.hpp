#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "voxrag/clients.hpp"
#include "voxrag/error.hpp"
#include "voxrag/eval/judge.hpp"
#include "voxrag/eval/metrics.hpp"
#include "voxrag/eval/stats.hpp"
#include "voxrag/eval/types.hpp"
#include "voxrag/retrieval.hpp"
#include "voxrag/segmentation.hpp"

namespace voxrag::eval {

struct EvalQuery {
  std::string query_id;
  std::filesystem::path audio;
  std::string text;  // transcript of the spoken query, for judging and reranking
};

inline EvalQuery query_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  EvalQuery q;
  q.query_id = j.at("query_id").get<std::string>();
  q.audio = j.value("audio", std::string{});
  q.text = j.value("text", std::string{});
  if (!q.audio.empty() && q.audio.is_relative() && !base_dir.empty()) q.audio = base_dir / q.audio;
  return q;
}

/// JSON Lines of {"query_id", "audio", "text"}; relative audio paths resolve
/// against the directory of the queries file.
inline std::vector<EvalQuery> read_queries(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::vector<EvalQuery> queries;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto q = query_from_json(nlohmann::json::parse(line), path.parent_path());
      if (!ids.insert(q.query_id).second) throw Error(Errc::DuplicateId, q.query_id);
      queries.push_back(std::move(q));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, "queries line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return queries;
}

// ─── Judgment cache ──────────────────────────────────────────────────────────

/// Relevance judgments keyed by (query_id, segment_id, mode). Thread-safe;
/// persisted as JSON Lines sorted by key so a frozen cache is byte-stable.
class JudgmentCache {
 public:
  using Key = std::tuple<std::string, std::string, std::string>;

  JudgmentCache() = default;

  static JudgmentCache load(const std::filesystem::path& path) {
    JudgmentCache cache;
    if (!std::filesystem::exists(path)) return cache;
    const auto bytes = read_file_bytes(path);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        RelevanceJudgment r;
        r.query_id = j.at("query_id").get<std::string>();
        r.segment_id = j.at("segment_id").get<std::string>();
        r.mode = parse_mode(j.at("mode").get<std::string>());
        r.label = j.at("label").get<int>();
        r.raw_reply = j.at("raw_reply").get<std::string>();
        r.judge_model = j.at("judge_model").get<std::string>();
        r.prompt_hash = j.at("prompt_hash").get<std::string>();
        if (r.label != 0 && r.label != 1) throw Error(Errc::ParseError, "judgment label must be 0 or 1");
        cache.insert(std::move(r));
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, "judgment cache line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    return cache;
  }

  std::optional<RelevanceJudgment> find(const std::string& query_id, const std::string& segment_id,
                                        RelevanceMode mode) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find({query_id, segment_id, std::string(mode_name(mode))});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void insert(RelevanceJudgment r) {
    std::lock_guard lock(mu_);
    Key key{r.query_id, r.segment_id, std::string(mode_name(r.mode))};
    entries_.insert_or_assign(std::move(key), std::move(r));
  }

  /// Every judgment recorded for a query under a mode: the judged pool.
  std::vector<RelevanceJudgment> pool(const std::string& query_id, RelevanceMode mode) const {
    std::lock_guard lock(mu_);
    std::vector<RelevanceJudgment> out;
    for (const auto& [key, r] : entries_) {
      if (std::get<0>(key) == query_id && r.mode == mode) out.push_back(r);
    }
    return out;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

  std::string serialize() const {
    std::lock_guard lock(mu_);
    std::string out;
    for (const auto& [key, r] : entries_) {
      nlohmann::ordered_json j;
      j["query_id"] = r.query_id;
      j["segment_id"] = r.segment_id;
      j["mode"] = mode_name(r.mode);
      j["label"] = r.label;
      j["raw_reply"] = r.raw_reply;
      j["judge_model"] = r.judge_model;
      j["prompt_hash"] = r.prompt_hash;
      out += j.dump() + "\n";
    }
    return out;
  }

  JudgmentCache(JudgmentCache&& other) noexcept : entries_(std::move(other.entries_)) {}
  JudgmentCache& operator=(JudgmentCache&& other) noexcept {
    entries_ = std::move(other.entries_);
    return *this;
  }

 private:
  mutable std::mutex mu_;
  std::map<Key, RelevanceJudgment> entries_;
};

// ─── Bounded parallel map ────────────────────────────────────────────────────

/// Runs fn(i) for i in [0, n) on at most `workers` threads; rethrows the
/// first failure after all workers stop.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

// ─── Retrieval evaluation ────────────────────────────────────────────────────

struct MetricsRow {
  std::string setup;
  double recall_at_k = 0.0;
  double ndcg_at_k = 0.0;
  std::size_t k = kDefaultTopK;
  std::size_t n_queries = 0;
  std::size_t undefined = 0;  // queries whose judged pool held no relevant segment
  std::string judge_model;
  std::string prompt_hash;
};

struct QueryMetrics {
  std::string query_id;
  bool defined = false;
  double recall = 0.0;
  double ndcg = 0.0;
  std::size_t relevant = 0;
};

struct RetrievalEvalReport {
  MetricsRow row;
  std::vector<QueryMetrics> per_query;
};

struct RetrievalEvalOptions {
  RelevanceMode mode = RelevanceMode::VeryRelevant;
  bool with_rerank = false;
  std::size_t k = kDefaultTopK;
  std::size_t max_in_flight = 4;
  std::string rubric;  // empty: shipped prompt for the mode
};

inline std::string setup_name(bool with_rerank, RelevanceMode mode) {
  return std::string(with_rerank ? "cosine+ce" : "cosine") + " (" + std::string(mode_name(mode)) + ")";
}

/// `retrieve_fn` yields the (optionally reranked) core hits for a query.
/// Each core hit is judged once per (query, segment, mode); recall and nDCG
/// use the cache's judged pool for the query as the relevant set. Queries
/// with no relevant segment count 0 and increment `undefined`.
inline RetrievalEvalReport run_retrieval_eval(const std::vector<EvalQuery>& queries,
                                              const std::function<RetrievalResult(const EvalQuery&)>& retrieve_fn,
                                              const SegmentTable& table, ChatClient& judge, JudgmentCache& cache,
                                              const RetrievalEvalOptions& opts = {}) {
  const std::string rubric = opts.rubric.empty() ? std::string(default_relevance_prompt(opts.mode)) : opts.rubric;

  std::vector<RetrievalResult> results;
  results.reserve(queries.size());
  for (const auto& q : queries) {
    auto r = retrieve_fn(q);
    if (r.hits.size() > opts.k) r.hits.resize(opts.k);
    results.push_back(std::move(r));
  }

  struct Pending {
    std::size_t query;
    std::string segment_id;
  };
  std::vector<Pending> pending;
  std::set<std::pair<std::string, std::string>> queued;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    for (const auto& hit : results[qi].hits) {
      if (cache.find(queries[qi].query_id, hit.segment_id, opts.mode)) continue;
      if (queued.emplace(queries[qi].query_id, hit.segment_id).second) pending.push_back({qi, hit.segment_id});
    }
  }

  parallel_for(pending.size(), opts.max_in_flight, [&](std::size_t i) {
    const auto& job = pending[i];
    const auto& q = queries[job.query];
    const Segment& seg = table.at(job.segment_id);
    if (!seg.transcript) throw Error(Errc::MissingTranscript, seg.segment_id);
    cache.insert(judge_relevance(q.text, *seg.transcript, opts.mode, judge, {q.query_id, seg.segment_id}, rubric));
  });

  RetrievalEvalReport report;
  report.row.setup = setup_name(opts.with_rerank, opts.mode);
  report.row.k = opts.k;
  report.row.n_queries = queries.size();
  report.row.prompt_hash = sha256_hex(rubric);
  report.row.judge_model = judge.model_id();
  double recall_sum = 0.0, ndcg_sum = 0.0;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto& q = queries[qi];
    std::unordered_set<std::string> relevant;
    for (const auto& r : cache.pool(q.query_id, opts.mode)) {
      if (r.label == 1) relevant.insert(r.segment_id);
    }
    QueryMetrics m;
    m.query_id = q.query_id;
    m.relevant = relevant.size();
    if (!relevant.empty()) {
      std::vector<std::string> ranked;
      std::vector<int> labels;
      for (const auto& hit : results[qi].hits) {
        ranked.push_back(hit.segment_id);
        labels.push_back(relevant.contains(hit.segment_id) ? 1 : 0);
      }
      m.defined = true;
      m.recall = recall_at_k(ranked, relevant, opts.k);
      m.ndcg = ndcg_at_k(labels, relevant.size(), opts.k);
      recall_sum += m.recall;
      ndcg_sum += m.ndcg;
    } else {
      ++report.row.undefined;
    }
    report.per_query.push_back(std::move(m));
  }
  if (!queries.empty()) {
    report.row.recall_at_k = recall_sum / static_cast<double>(queries.size());
    report.row.ndcg_at_k = ndcg_sum / static_cast<double>(queries.size());
  }
  return report;
}

// ─── Answer evaluation ───────────────────────────────────────────────────────

struct AnswerCase {
  std::string query_id;
  std::string query_text;
  std::string answer_text;
  std::vector<std::string> documents;  // transcripts the answer was generated from
};

struct MetricStats {
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  // Versus relevance; unset on the relevance row itself.
  std::optional<double> delta;      // mean(metric) - mean(relevance)
  std::optional<double> d;          // paired d_z of (relevance - metric)
  std::optional<double> p;          // two-tailed paired t
  std::optional<double> t;
  bool degenerate = false;          // paired differences had zero variance
  bool significantly_lower = false;
};

struct StatsReport {
  std::size_t n = 0;
  std::vector<MetricStats> rows;                            // kAnswerAxes order
  std::vector<std::vector<std::optional<double>>> pearson;  // 4x4; unset when degenerate
  std::vector<std::pair<std::string, AnswerScores>> per_query;
  std::string prompt_hash;
  double alpha = 0.05;
};

inline StatsReport summarize_answer_scores(const std::vector<std::pair<std::string, AnswerScores>>& scores,
                                           double alpha = 0.05) {
  StatsReport report;
  report.n = scores.size();
  report.per_query = scores;
  report.alpha = alpha;
  std::vector<std::vector<double>> axes(kAnswerAxes.size());
  for (const auto& [id, s] : scores) {
    for (std::size_t a = 0; a < kAnswerAxes.size(); ++a) axes[a].push_back(static_cast<double>(s[a]));
  }
  const auto nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t a = 0; a < kAnswerAxes.size(); ++a) {
    MetricStats row;
    row.metric = std::string(kAnswerAxes[a]);
    row.mean = axes[a].empty() ? nan : mean(axes[a]);
    row.std = axes[a].size() < 2 ? nan : sample_std(axes[a]);
    if (a > 0 && !axes[a].empty()) {
      row.delta = row.mean - report.rows.front().mean;
      try {
        const auto ps = paired_stats(axes[0], axes[a]);
        row.d = ps.d_z;
        row.p = ps.p_two_tailed;
        row.t = ps.t;
        row.significantly_lower = ps.p_two_tailed < alpha && *row.delta < 0.0;
      } catch (const Error& e) {
        if (e.code() != Errc::DegenerateVariance && e.code() != Errc::LengthMismatch) throw;
        row.degenerate = true;
      }
    }
    report.rows.push_back(std::move(row));
  }
  report.pearson.assign(kAnswerAxes.size(), std::vector<std::optional<double>>(kAnswerAxes.size()));
  for (std::size_t a = 0; a < kAnswerAxes.size(); ++a) {
    for (std::size_t b = 0; b < kAnswerAxes.size(); ++b) {
      try {
        const double r = pearson_r(axes[a], axes[b]);
        report.pearson[a][b] = a == b ? 1.0 : r;
      } catch (const Error& e) {
        if (e.code() != Errc::DegenerateVariance && e.code() != Errc::LengthMismatch) throw;
        report.pearson[a][b].reset();
      }
    }
  }
  return report;
}

/// Judges every answer (bounded concurrency) and summarizes the four axes.
inline StatsReport run_answer_eval(const std::vector<AnswerCase>& cases, ChatClient& judge,
                                   std::size_t max_in_flight = 4, std::string_view rubric = kAnswerJudgePrompt,
                                   double alpha = 0.05) {
  std::vector<std::pair<std::string, AnswerScores>> scores(cases.size());
  parallel_for(cases.size(), max_in_flight, [&](std::size_t i) {
    const auto& c = cases[i];
    scores[i] = {c.query_id, judge_answer(c.query_text, c.documents, c.answer_text, judge, c.query_id, rubric)};
  });
  auto report = summarize_answer_scores(scores, alpha);
  report.prompt_hash = sha256_hex(rubric);
  return report;
}

// ─── Reports ─────────────────────────────────────────────────────────────────

namespace detail {

inline std::string fixed(double v, int digits = 6) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string general(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace detail

inline std::string retrieval_table_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "setup,recall_at_10,ndcg_at_10,k,n_queries,undefined,judge_model,prompt_sha256\n";
  for (const auto& r : rows) {
    out += r.setup + "," + detail::fixed(r.recall_at_k) + "," + detail::fixed(r.ndcg_at_k) + "," + std::to_string(r.k) + "," +
           std::to_string(r.n_queries) + "," + std::to_string(r.undefined) + "," + r.judge_model + "," + r.prompt_hash + "\n";
  }
  return out;
}

/// Upserts `rows` into an existing retrieval table, keyed by setup. Rows for
/// other setups keep their position; new setups are appended.
inline std::string merge_retrieval_table_csv(std::string_view existing, const std::vector<MetricsRow>& rows) {
  const std::string fresh = retrieval_table_csv(rows);
  const std::string header = fresh.substr(0, fresh.find('\n') + 1);
  std::map<std::string, std::string> updates;
  std::vector<std::string> order;
  {
    std::istringstream in(fresh.substr(header.size()));
    std::string line;
    while (std::getline(in, line)) {
      const auto setup = line.substr(0, line.find(','));
      updates[setup] = line;
      order.push_back(setup);
    }
  }
  std::string out = header;
  std::istringstream in{std::string(existing)};
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      if (line + "\n" != header) throw Error(Errc::ParseError, "existing retrieval table has an unexpected header");
      continue;
    }
    if (line.empty()) continue;
    const auto setup = line.substr(0, line.find(','));
    if (auto it = updates.find(setup); it != updates.end()) {
      out += it->second + "\n";
      updates.erase(it);
    } else {
      out += line + "\n";
    }
  }
  for (const auto& setup : order) {
    if (auto it = updates.find(setup); it != updates.end()) out += it->second + "\n";
  }
  return out;
}

inline std::string answer_table_csv(const StatsReport& report) {
  std::string out = "metric,mean,std,delta,d,p,significant\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    out += r.metric + "," + detail::fixed(r.mean) + "," + detail::fixed(r.std) + ",";
    if (i == 0) {
      out += ",,,\n";
      continue;
    }
    out += (r.delta ? detail::fixed(*r.delta) : "") + ",";
    out += (r.d ? detail::fixed(*r.d) : "") + ",";
    out += (r.p ? detail::general(*r.p) : "") + ",";
    out += r.degenerate ? "degenerate" : (r.significantly_lower ? "yes" : "no");
    out += "\n";
  }
  return out;
}

inline std::string correlation_csv(const StatsReport& report) {
  std::string out = "metric";
  for (auto axis : kAnswerAxes) out += "," + std::string(axis);
  out += "\n";
  for (std::size_t a = 0; a < report.pearson.size(); ++a) {
    out += std::string(kAnswerAxes[a]);
    for (const auto& r : report.pearson[a]) out += "," + (r ? detail::fixed(*r) : std::string{});
    out += "\n";
  }
  return out;
}

inline nlohmann::ordered_json to_json(const MetricsRow& r) {
  nlohmann::ordered_json j;
  j["setup"] = r.setup;
  j["recall_at_10"] = r.recall_at_k;
  j["ndcg_at_10"] = r.ndcg_at_k;
  j["k"] = r.k;
  j["n_queries"] = r.n_queries;
  j["undefined"] = r.undefined;
  j["judge_model"] = r.judge_model;
  j["prompt_sha256"] = r.prompt_hash;
  return j;
}

inline nlohmann::ordered_json to_json(const StatsReport& report) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
  auto num = [](double v) { return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v); };
  nlohmann::ordered_json j;
  j["n"] = report.n;
  j["prompt_sha256"] = report.prompt_hash;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json row;
    row["metric"] = r.metric;
    row["mean"] = num(r.mean);
    row["std"] = num(r.std);
    row["delta"] = opt(r.delta);
    row["d"] = opt(r.d);
    row["t"] = opt(r.t);
    row["p"] = opt(r.p);
    row["degenerate"] = r.degenerate;
    row["significantly_lower"] = r.significantly_lower;
    j["rows"].push_back(std::move(row));
  }
  j["pearson"] = nlohmann::ordered_json::array();
  for (const auto& line : report.pearson) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& v : line) arr.push_back(opt(v));
    j["pearson"].push_back(std::move(arr));
  }
  return j;
}

}  // namespace voxrag::eval
