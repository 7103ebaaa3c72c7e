#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "voxrag/audio.hpp"
#include "voxrag/clients.hpp"
#include "voxrag/config.hpp"
#include "voxrag/embedding.hpp"
#include "voxrag/error.hpp"
#include "voxrag/index.hpp"
#include "voxrag/segmentation.hpp"

namespace voxrag {

namespace fs = std::filesystem;

/// Writes `bytes` to a sibling temp file, fsyncs, then renames over `path`,
/// so readers observe either the old or the new content.
inline void write_file_atomic(const fs::path& path, std::string_view bytes) {
  const fs::path tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(Errc::PartialIngest, "cannot create " + tmp.string());
  std::size_t written = 0;
  while (written < bytes.size()) {
    const auto n = ::write(fd, bytes.data() + written, bytes.size() - written);
    if (n < 0) {
      ::close(fd);
      throw Error(Errc::PartialIngest, "write failed for " + tmp.string());
    }
    written += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::PartialIngest, "rename " + tmp.string() + ": " + ec.message());
}

inline void write_file_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline std::string read_text_file(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

inline void validate_episode_id(std::string_view id) {
  const bool ok = !id.empty() && id.front() != '.' &&
                  std::all_of(id.begin(), id.end(), [](char c) {
                    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
                  });
  if (!ok) throw Error(Errc::ConfigError, "episode id must be [A-Za-z0-9_.-]+: '" + std::string(id) + "'");
}

/// JSON Lines of {"segment_id", "text"}.
inline std::unordered_map<std::string, std::string> read_transcripts(const fs::path& path) {
  std::unordered_map<std::string, std::string> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out[j.at("segment_id").get<std::string>()] = j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, "transcripts line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

struct IngestRequest {
  fs::path audio;
  std::optional<fs::path> rttm;
  std::optional<fs::path> transcripts;
  std::optional<fs::path> spans;  // external VAD output; replaces the energy VAD
  std::string episode_id;         // empty: audio file stem
};

struct IngestSummary {
  std::string episode_id;
  std::size_t segment_count = 0;
  double duration_s = 0.0;
  double speech_s = 0.0;
};

/// A fully processed episode, ready to be committed to a store.
struct PreparedEpisode {
  std::string episode_id;
  std::vector<Segment> segments;
  std::vector<AudioBuffer> slices;
  std::vector<Embedding> embeddings;
  double duration_s = 0.0;
};

/// decode -> mono -> resample -> VAD -> fuse -> slice -> (transcribe) -> embed.
/// Touches no store state.
inline PreparedEpisode prepare_episode(const IngestRequest& req, const EngineConfig& cfg, Embedder& embedder,
                                       Transcriber* transcriber = nullptr) {
  PreparedEpisode ep;
  ep.episode_id = req.episode_id.empty() ? req.audio.stem().string() : req.episode_id;
  validate_episode_id(ep.episode_id);

  const AudioBuffer audio = preprocess(load_audio(req.audio), cfg.sample_rate);
  ep.duration_s = audio.duration_s();

  auto spans = req.spans ? import_spans(*req.spans) : detect_speech(audio, cfg.vad);
  std::erase_if(spans, [&](const SpeechSpan& s) { return s.start_s >= ep.duration_s; });
  for (auto& s : spans) s.end_s = std::min(s.end_s, ep.duration_s);
  const auto turns = req.rttm ? parse_rttm(read_text_file(*req.rttm)) : std::vector<SpeakerTurn>{};
  ep.segments = fuse(spans, turns, ep.episode_id, cfg.fuse);

  ep.slices.reserve(ep.segments.size());
  for (const auto& seg : ep.segments) ep.slices.push_back(quantize_pcm16(slice_audio(audio, seg)));

  if (req.transcripts) {
    const auto texts = read_transcripts(*req.transcripts);
    for (const auto& [id, text] : texts) {
      auto it = std::find_if(ep.segments.begin(), ep.segments.end(), [&](const Segment& s) { return s.segment_id == id; });
      if (it == ep.segments.end()) throw Error(Errc::UnknownSegmentId, "transcript for " + id + " matches no segment");
      it->transcript = text;
    }
  } else if (transcriber != nullptr) {
    for (std::size_t i = 0; i < ep.segments.size(); ++i) ep.segments[i].transcript = transcriber->transcribe(ep.slices[i]);
  }

  std::vector<EmbedItem> items;
  items.reserve(ep.segments.size());
  for (std::size_t i = 0; i < ep.segments.size(); ++i) items.push_back({ep.segments[i].segment_id, &ep.slices[i]});
  ep.embeddings = embed_all(embedder, items, cfg.embedding.batch_size, cfg.embedding.max_in_flight);
  return ep;
}

/// Filesystem store:
///   episodes/<ep>/manifest.jsonl      segment records
///   episodes/<ep>/embeddings.jsonl    {"id", "vector"} per segment
///   episodes/<ep>/audio/<id>.wav      16-bit PCM slice at the pipeline rate
///   manifest.jsonl                    all episodes, episode-id order
///   index.voxidx                      flat index over every segment
/// Episode replacement stages a directory and swaps it in by rename; the
/// global manifest and index are derived files rewritten atomically.
class SegmentStore {
 public:
  /// Opens (creating if needed). With `repair`, interrupted swaps are
  /// resolved and stale derived files regenerated.
  static SegmentStore open(const fs::path& root, std::size_t dim, bool repair = true) {
    SegmentStore store(root, dim);
    std::error_code ec;
    fs::create_directories(store.episodes_dir(), ec);
    if (ec) throw Error(Errc::CorruptStore, "cannot create " + store.episodes_dir().string());
    if (repair) store.recover();
    store.load(repair);
    return store;
  }

  const fs::path& root() const noexcept { return root_; }
  fs::path manifest_path() const { return root_ / "manifest.jsonl"; }
  fs::path index_path() const { return root_ / "index.voxidx"; }
  fs::path judgments_path() const { return root_ / "judgments.jsonl"; }
  fs::path episode_dir(std::string_view ep) const { return episodes_dir() / std::string(ep); }

  const SegmentTable& table() const noexcept { return table_; }
  const FlatIndex& index() const noexcept { return index_; }
  std::size_t dim() const noexcept { return dim_; }
  std::vector<std::string> episodes() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : episodes_) out.push_back(id);
    return out;
  }

  fs::path segment_audio_path(std::string_view segment_id) const {
    const Segment& seg = table_.at(segment_id);
    return episode_dir(seg.episode_id) / "audio" / (seg.segment_id + ".wav");
  }
  AudioBuffer segment_audio(std::string_view segment_id) const { return load_audio(segment_audio_path(segment_id)); }

  /// Replaces (or adds) one episode. `fault` is called with a stage name
  /// before each filesystem step; tests use it to inject crashes.
  IngestSummary commit(const PreparedEpisode& ep, const std::function<void(std::string_view)>& fault = {}) {
    validate_episode_id(ep.episode_id);
    auto hook = [&](std::string_view stage) {
      if (fault) fault(stage);
    };
    for (const auto& e : ep.embeddings) {
      if (e.dim() != dim_) throw Error(Errc::DimensionMismatch, "embedding dim " + std::to_string(e.dim()) + " vs store " + std::to_string(dim_));
    }

    const fs::path staging = episodes_dir() / (".staging-" + ep.episode_id);
    const fs::path trash = episodes_dir() / (".trash-" + ep.episode_id);
    const fs::path target = episode_dir(ep.episode_id);
    std::error_code ec;
    fs::remove_all(staging, ec);
    try {
      hook("stage");
      fs::create_directories(staging / "audio");
      for (std::size_t i = 0; i < ep.segments.size(); ++i) {
        write_file_atomic(staging / "audio" / (ep.segments[i].segment_id + ".wav"), encode_wav_pcm16(ep.slices[i]));
      }
      std::string vectors;
      for (std::size_t i = 0; i < ep.segments.size(); ++i) vectors += write_vector_line(ep.segments[i].segment_id, ep.embeddings[i]);
      write_file_atomic(staging / "embeddings.jsonl", vectors);
      hook("episode-manifest");
      write_file_atomic(staging / "manifest.jsonl", write_manifest(ep.segments));
    } catch (...) {
      fs::remove_all(staging, ec);
      throw;
    }

    hook("swap");
    fs::remove_all(trash, ec);
    if (fs::exists(target)) {
      fs::rename(target, trash, ec);
      if (ec) throw Error(Errc::PartialIngest, "cannot retire " + target.string() + ": " + ec.message());
    }
    hook("swap-in");
    fs::rename(staging, target, ec);
    if (ec) {
      std::error_code restore;
      if (fs::exists(trash)) fs::rename(trash, target, restore);
      throw Error(Errc::PartialIngest, "cannot install " + target.string() + ": " + ec.message());
    }
    hook("cleanup");
    fs::remove_all(trash, ec);

    episodes_[ep.episode_id] = ep.segments;
    embeddings_[ep.episode_id] = ep.embeddings;
    hook("derived");
    rebuild_derived(/*write=*/true);

    IngestSummary summary;
    summary.episode_id = ep.episode_id;
    summary.segment_count = ep.segments.size();
    summary.duration_s = ep.duration_s;
    for (const auto& s : ep.segments) summary.speech_s += s.length();
    return summary;
  }

  IngestSummary ingest(const IngestRequest& req, const EngineConfig& cfg, Embedder& embedder,
                       Transcriber* transcriber = nullptr, const std::function<void(std::string_view)>& fault = {}) {
    return commit(prepare_episode(req, cfg, embedder, transcriber), fault);
  }

 private:
  SegmentStore(fs::path root, std::size_t dim) : root_(std::move(root)), dim_(dim), index_(dim) {}

  fs::path episodes_dir() const { return root_ / "episodes"; }

  void recover() {
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(episodes_dir())) {
      const std::string name = entry.path().filename().string();
      if (name.starts_with(".staging-")) {
        fs::remove_all(entry.path(), ec);
      } else if (name.starts_with(".trash-")) {
        const fs::path target = episodes_dir() / name.substr(7);
        if (!fs::exists(target)) {
          fs::rename(entry.path(), target, ec);
        } else {
          fs::remove_all(entry.path(), ec);
        }
      }
    }
    for (const auto& p : {manifest_path(), index_path()}) fs::remove(p.string() + ".tmp", ec);
  }

  void load(bool repair) {
    for (const auto& entry : fs::directory_iterator(episodes_dir())) {
      const std::string name = entry.path().filename().string();
      if (!entry.is_directory() || name.starts_with(".")) continue;
      const fs::path manifest = entry.path() / "manifest.jsonl";
      if (!fs::exists(manifest)) throw Error(Errc::CorruptStore, "episode without manifest: " + name);
      auto segments = read_manifest(read_text_file(manifest));
      const auto vectors = read_vector_file(read_text_file(entry.path() / "embeddings.jsonl"));
      std::vector<Embedding> embeddings;
      for (const auto& seg : segments) {
        if (seg.episode_id != name) throw Error(Errc::CorruptStore, seg.segment_id + " filed under episode " + name);
        if (!fs::exists(entry.path() / "audio" / (seg.segment_id + ".wav"))) {
          throw Error(Errc::CorruptStore, "missing audio slice for " + seg.segment_id);
        }
        auto it = vectors.find(seg.segment_id);
        if (it == vectors.end()) throw Error(Errc::CorruptStore, "missing embedding for " + seg.segment_id);
        Embedding e = it->second;
        e.normalized = true;
        if (e.dim() != dim_) throw Error(Errc::DimensionMismatch, "store holds dim " + std::to_string(e.dim()) + ", config expects " + std::to_string(dim_));
        embeddings.push_back(std::move(e));
      }
      episodes_[name] = std::move(segments);
      embeddings_[name] = std::move(embeddings);
    }
    rebuild_derived(repair);
  }

  /// Recomputes the table and index from the per-episode data. When `write`
  /// is set, the global manifest and index files are refreshed if stale.
  void rebuild_derived(bool write) {
    std::vector<Segment> all;
    std::vector<std::pair<std::string, Embedding>> entries;
    for (const auto& [ep, segments] : episodes_) {
      const auto& embeddings = embeddings_.at(ep);
      for (std::size_t i = 0; i < segments.size(); ++i) {
        all.push_back(segments[i]);
        entries.emplace_back(segments[i].segment_id, embeddings[i]);
      }
    }
    table_ = SegmentTable(all);
    index_ = FlatIndex::build(entries, dim_);
    if (!write) return;
    const std::string manifest = write_manifest(all);
    const auto index_bytes = index_.serialize();
    if (!fs::exists(manifest_path()) || read_text_file(manifest_path()) != manifest) write_file_atomic(manifest_path(), manifest);
    if (!fs::exists(index_path()) || read_file_bytes(index_path()) != index_bytes) write_file_atomic(index_path(), index_bytes);
  }

  fs::path root_;
  std::size_t dim_;
  std::map<std::string, std::vector<Segment>> episodes_;
  std::map<std::string, std::vector<Embedding>> embeddings_;
  SegmentTable table_;
  FlatIndex index_;
};

}  // namespace voxrag
