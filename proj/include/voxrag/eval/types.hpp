#pragma once

#include <array>
#include <string>
#include <string_view>

#include "voxrag/error.hpp"

namespace voxrag::eval {

/// VR: strictly "very relevant"; SR: "somewhat relevant" (topical).
enum class RelevanceMode { VeryRelevant, SomewhatRelevant };

constexpr std::string_view mode_name(RelevanceMode m) noexcept {
  return m == RelevanceMode::VeryRelevant ? "vr" : "sr";
}

inline RelevanceMode parse_mode(std::string_view s) {
  if (s == "vr" || s == "VR") return RelevanceMode::VeryRelevant;
  if (s == "sr" || s == "SR") return RelevanceMode::SomewhatRelevant;
  throw Error(Errc::ConfigError, "relevance mode must be vr or sr, got '" + std::string(s) + "'");
}

struct RelevanceJudgment {
  std::string query_id;
  std::string segment_id;
  RelevanceMode mode = RelevanceMode::VeryRelevant;
  int label = 0;
  std::string raw_reply;
  std::string judge_model;
  std::string prompt_hash;

  friend bool operator==(const RelevanceJudgment&, const RelevanceJudgment&) = default;
};

inline constexpr std::array<std::string_view, 4> kAnswerAxes = {"relevance", "accuracy", "completeness", "precision"};

/// Four 0-2 grades, indexed in kAnswerAxes order.
struct AnswerScores {
  int relevance = 0;
  int accuracy = 0;
  int completeness = 0;
  int precision = 0;

  int operator[](std::size_t axis) const {
    switch (axis) {
      case 0: return relevance;
      case 1: return accuracy;
      case 2: return completeness;
      default: return precision;
    }
  }
  friend bool operator==(const AnswerScores&, const AnswerScores&) = default;
};

}  // namespace voxrag::eval
