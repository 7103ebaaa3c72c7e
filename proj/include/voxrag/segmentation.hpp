#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "voxrag/audio.hpp"
#include "voxrag/error.hpp"

namespace voxrag {

inline constexpr std::string_view kUnknownSpeaker = "UNK";

struct SpeakerTurn {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string speaker_id;
};

struct Segment {
  std::string segment_id;
  std::string episode_id;
  double start_s = 0.0;
  double end_s = 0.0;
  std::string speaker_id{kUnknownSpeaker};
  std::optional<std::string> transcript;
  std::optional<std::string> prev_id;
  std::optional<std::string> next_id;

  double length() const noexcept { return end_s - start_s; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

inline std::string make_segment_id(std::string_view episode_id, std::size_t index) {
  return "ep" + std::string(episode_id) + "_seg" + std::to_string(index);
}

// ─── RTTM ────────────────────────────────────────────────────────────────────

/// Reads SPEAKER records; other record types (SPKR-INFO, ...) and ';;'
/// comment lines are skipped.
inline std::vector<SpeakerTurn> parse_rttm(std::string_view text) {
  std::vector<SpeakerTurn> turns;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::vector<std::string> f;
    for (std::string tok; fields >> tok;) f.push_back(tok);
    if (f.empty() || f[0].starts_with(";;") || f[0].starts_with("#")) continue;
    if (f[0] != "SPEAKER") continue;
    if (f.size() < 8) {
      throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": SPEAKER record needs at least 8 fields");
    }
    double tbeg = 0.0, tdur = 0.0;
    try {
      tbeg = std::stod(f[3]);
      tdur = std::stod(f[4]);
    } catch (const std::logic_error&) {
      throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": bad onset/duration");
    }
    if (!std::isfinite(tbeg) || !std::isfinite(tdur) || tbeg < 0.0) {
      throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": bad onset/duration");
    }
    if (tdur < 0.0) throw Error(Errc::NegativeDuration, "line " + std::to_string(line_no));
    if (tdur == 0.0) continue;
    turns.push_back({tbeg, tbeg + tdur, f[7]});
  }
  std::stable_sort(turns.begin(), turns.end(),
                   [](const SpeakerTurn& a, const SpeakerTurn& b) { return a.start_s < b.start_s; });
  return turns;
}

// ─── Fusion ──────────────────────────────────────────────────────────────────

struct FuseConfig {
  double max_segment_s = 90.0;
  double merge_gap_s = 1.0;
};

namespace detail {

struct Piece {
  double start_s;
  double end_s;
  std::string speaker;
};

inline std::string dominant_speaker(double start, double end, const std::vector<SpeakerTurn>& turns) {
  double best = 0.0;
  const SpeakerTurn* winner = nullptr;
  for (const auto& turn : turns) {
    if (turn.start_s >= end) break;
    const double overlap = std::min(end, turn.end_s) - std::max(start, turn.start_s);
    // Turns are sorted by start, so strict '>' keeps the earlier turn on ties.
    if (overlap > best) {
      best = overlap;
      winner = &turn;
    }
  }
  return winner ? winner->speaker_id : std::string(kUnknownSpeaker);
}

}  // namespace detail

/// Fuses VAD spans with diarization turns: cut at turn boundaries, label by
/// maximal overlap, merge same-speaker neighbours across short gaps, then
/// split anything still longer than max_segment_s.
inline std::vector<Segment> fuse(const std::vector<SpeechSpan>& spans, const std::vector<SpeakerTurn>& turns,
                                 std::string_view episode_id, const FuseConfig& cfg = {}) {
  if (!(cfg.max_segment_s > 0.0)) throw Error(Errc::InvariantViolation, "max_segment_s must be positive");
  validate_spans(spans);
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (!(turns[i].start_s < turns[i].end_s)) throw Error(Errc::InvariantViolation, "empty or reversed turn");
    if (i > 0 && turns[i].start_s < turns[i - 1].start_s) throw Error(Errc::InvariantViolation, "turns not sorted");
  }

  std::vector<double> boundaries;
  boundaries.reserve(turns.size() * 2);
  for (const auto& t : turns) {
    boundaries.push_back(t.start_s);
    boundaries.push_back(t.end_s);
  }
  std::sort(boundaries.begin(), boundaries.end());
  boundaries.erase(std::unique(boundaries.begin(), boundaries.end()), boundaries.end());

  std::vector<detail::Piece> pieces;
  for (const auto& span : spans) {
    double cursor = span.start_s;
    auto it = std::upper_bound(boundaries.begin(), boundaries.end(), span.start_s);
    for (; it != boundaries.end() && *it < span.end_s; ++it) {
      pieces.push_back({cursor, *it, detail::dominant_speaker(cursor, *it, turns)});
      cursor = *it;
    }
    pieces.push_back({cursor, span.end_s, detail::dominant_speaker(cursor, span.end_s, turns)});
  }

  std::vector<detail::Piece> merged;
  for (auto& piece : pieces) {
    if (!merged.empty()) {
      auto& last = merged.back();
      if (last.speaker == piece.speaker && piece.start_s - last.end_s < cfg.merge_gap_s &&
          piece.end_s - last.start_s <= cfg.max_segment_s) {
        last.end_s = piece.end_s;
        continue;
      }
    }
    merged.push_back(std::move(piece));
  }

  auto make_piece = [](double start, double end, const std::string& speaker) {
    Segment s;
    s.start_s = start;
    s.end_s = end;
    s.speaker_id = speaker;
    return s;
  };
  std::vector<Segment> segments;
  for (const auto& piece : merged) {
    double start = piece.start_s;
    while (piece.end_s - start > cfg.max_segment_s) {
      double end = start + cfg.max_segment_s;
      while (end - start > cfg.max_segment_s) end = std::nextafter(end, start);
      segments.push_back(make_piece(start, end, piece.speaker));
      start = end;
    }
    segments.push_back(make_piece(start, piece.end_s, piece.speaker));
  }

  for (std::size_t i = 0; i < segments.size(); ++i) {
    auto& seg = segments[i];
    seg.episode_id = std::string(episode_id);
    seg.segment_id = make_segment_id(episode_id, i);
    if (i > 0) seg.prev_id = make_segment_id(episode_id, i - 1);
    if (i + 1 < segments.size()) seg.next_id = make_segment_id(episode_id, i + 1);
  }
  return segments;
}

inline AudioBuffer slice_audio(const AudioBuffer& buf, const Segment& seg) {
  const double rate = buf.sample_rate;
  const auto frames = static_cast<long long>(buf.frames());
  const long long begin = std::llround(seg.start_s * rate);
  const long long end = std::llround(seg.end_s * rate);
  if (seg.start_s < 0.0 || begin > end || end > frames) {
    throw Error(Errc::OutOfRange, seg.segment_id + " exceeds buffer of " + std::to_string(buf.duration_s()) + " s");
  }
  AudioBuffer out;
  out.sample_rate = buf.sample_rate;
  out.channel_count = buf.channel_count;
  const auto ch = static_cast<long long>(buf.channel_count);
  out.samples.assign(buf.samples.begin() + begin * ch, buf.samples.begin() + end * ch);
  return out;
}

// ─── Manifest (JSON Lines) ───────────────────────────────────────────────────

inline nlohmann::ordered_json segment_to_json(const Segment& s) {
  auto opt = [](const std::optional<std::string>& v) -> nlohmann::ordered_json {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["segment_id"] = s.segment_id;
  j["episode_id"] = s.episode_id;
  j["start_s"] = s.start_s;
  j["end_s"] = s.end_s;
  j["speaker_id"] = s.speaker_id;
  j["transcript"] = opt(s.transcript);
  j["prev_id"] = opt(s.prev_id);
  j["next_id"] = opt(s.next_id);
  return j;
}

inline Segment segment_from_json(const nlohmann::json& j) {
  auto opt = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
  };
  try {
    Segment s;
    s.segment_id = j.at("segment_id").get<std::string>();
    s.episode_id = j.at("episode_id").get<std::string>();
    s.start_s = j.at("start_s").get<double>();
    s.end_s = j.at("end_s").get<double>();
    s.speaker_id = j.at("speaker_id").get<std::string>();
    s.transcript = opt("transcript");
    s.prev_id = opt("prev_id");
    s.next_id = opt("next_id");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("segment record: ") + e.what());
  }
}

inline std::string write_manifest(const std::vector<Segment>& segments) {
  std::string out;
  for (const auto& s : segments) {
    out += segment_to_json(s).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<Segment> read_manifest(std::string_view text) {
  std::vector<Segment> segments;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      segments.push_back(segment_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::ParseError, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return segments;
}

/// Id-addressable view over an ordered segment list.
class SegmentTable {
 public:
  SegmentTable() = default;
  explicit SegmentTable(std::vector<Segment> segments) : segments_(std::move(segments)) {
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      if (!by_id_.emplace(segments_[i].segment_id, i).second) {
        throw Error(Errc::DuplicateId, segments_[i].segment_id);
      }
    }
  }

  const Segment* find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &segments_[it->second];
  }
  const Segment& at(std::string_view id) const {
    if (const auto* s = find(id)) return *s;
    throw Error(Errc::UnknownSegmentId, std::string(id));
  }
  const std::vector<Segment>& segments() const noexcept { return segments_; }
  std::size_t size() const noexcept { return segments_.size(); }

 private:
  std::vector<Segment> segments_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

}  // namespace voxrag
