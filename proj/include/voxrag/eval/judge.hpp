#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "voxrag/clients.hpp"
#include "voxrag/error.hpp"
#include "voxrag/eval/prompts.hpp"
#include "voxrag/eval/types.hpp"
#include "voxrag/hash.hpp"

namespace voxrag::eval {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace detail

/// Exactly "0" or "1" after trimming whitespace; nothing is coerced.
inline int parse_relevance_reply(std::string_view reply) {
  const auto body = detail::trim(reply);
  if (body == "0") return 0;
  if (body == "1") return 1;
  throw Error(Errc::UnparseableReply, "expected a single digit 0 or 1, got '" + std::string(reply.substr(0, 80)) + "'");
}

/// The last non-empty line must be a JSON object with the four integer axes.
inline AnswerScores parse_answer_reply(std::string_view reply) {
  const auto body = detail::trim(reply);
  if (body.empty()) throw Error(Errc::UnparseableReply, "empty judge reply");
  const auto nl = body.rfind('\n');
  const auto last = detail::trim(nl == std::string_view::npos ? body : body.substr(nl + 1));

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(last);
  } catch (const nlohmann::json::parse_error&) {
    throw Error(Errc::UnparseableReply, "last line is not JSON: '" + std::string(last.substr(0, 80)) + "'");
  }
  if (!j.is_object()) throw Error(Errc::UnparseableReply, "last line is not a JSON object");

  int values[4];
  for (std::size_t axis = 0; axis < kAnswerAxes.size(); ++axis) {
    const std::string key(kAnswerAxes[axis]);
    if (!j.contains(key)) throw Error(Errc::UnparseableReply, "missing key '" + key + "'");
    const auto& v = j.at(key);
    if (!v.is_number()) throw Error(Errc::UnparseableReply, "'" + key + "' is not a number");
    if (!v.is_number_integer()) throw Error(Errc::OutOfRangeScore, "'" + key + "' is not an integer grade");
    const auto grade = v.get<long long>();
    if (grade < 0 || grade > 2) throw Error(Errc::OutOfRangeScore, "'" + key + "' = " + std::to_string(grade));
    values[axis] = static_cast<int>(grade);
  }
  return {values[0], values[1], values[2], values[3]};
}

inline std::string relevance_user_message(std::string_view query_text, std::string_view transcript) {
  std::string msg = "User question: ";
  msg.append(query_text);
  msg += "\n\nPodcast transcript segment:\n";
  msg.append(transcript);
  return msg;
}

struct JudgeIds {
  std::string query_id;
  std::string segment_id;
};

/// Asks the judge whether one transcript answers one question under `mode`.
/// `rubric` defaults to the shipped prompt for the mode.
inline RelevanceJudgment judge_relevance(std::string_view query_text, std::string_view transcript, RelevanceMode mode,
                                         ChatClient& judge, const JudgeIds& ids = {}, std::string_view rubric = {}) {
  if (rubric.empty()) rubric = default_relevance_prompt(mode);
  ChatRequest request;
  request.messages.push_back({"system", std::string(rubric)});
  request.messages.push_back({"user", relevance_user_message(query_text, transcript)});
  request.tags = {{"task", "relevance"},
                  {"query_id", ids.query_id},
                  {"segment_id", ids.segment_id},
                  {"mode", std::string(mode_name(mode))}};

  RelevanceJudgment out;
  out.query_id = ids.query_id;
  out.segment_id = ids.segment_id;
  out.mode = mode;
  out.raw_reply = judge.complete(request);
  out.label = parse_relevance_reply(out.raw_reply);
  out.judge_model = judge.model_id();
  out.prompt_hash = sha256_hex(rubric);
  return out;
}

inline std::string format_documents(const std::vector<std::string>& documents) {
  std::string out;
  for (std::size_t i = 0; i < documents.size(); ++i) {
    if (i) out += "\n\n";
    out += "[Segment " + std::to_string(i + 1) + "] " + documents[i];
  }
  return out;
}

/// Grades an answer on the four 0-2 axes.
inline AnswerScores judge_answer(std::string_view query_text, const std::vector<std::string>& documents,
                                 std::string_view answer_text, ChatClient& judge, std::string_view query_id = {},
                                 std::string_view rubric = kAnswerJudgePrompt) {
  ChatRequest request;
  request.messages.push_back({"user", fill_answer_template(rubric, format_documents(documents), query_text, answer_text)});
  request.tags = {{"task", "answer"}, {"query_id", std::string(query_id)}};
  return parse_answer_reply(judge.complete(request));
}

}  // namespace voxrag::eval
