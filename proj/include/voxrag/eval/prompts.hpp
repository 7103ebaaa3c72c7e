#pragma once

#include <string>
#include <string_view>

#include "voxrag/error.hpp"
#include "voxrag/eval/types.hpp"

// Judge rubrics. Identical copies live in prompts/*.txt; the config can point
// at edited files, and reports pin whichever text was used by its SHA-256.

namespace voxrag::eval {

inline constexpr std::string_view kVeryRelevantPrompt = R"PROMPT(You are an expert annotator evaluating whether a *spoken podcast transcript segment* is *very relevant* to a user's question.
These transcripts may include humor, casual speech, tangents, or non-traditional structure.
Return **1** if the segment contains strong, clear, and direct information addressing the user's question. 
Return **0** if the segment is only loosely or partially related, or entirely off-topic. 
Only respond with a single digit: 1 or 0. Do not explain.
)PROMPT";

inline constexpr std::string_view kSomewhatRelevantPrompt = R"PROMPT(You are an expert annotator evaluating whether a *spoken podcast transcript segment* is *somewhat relevant* to a user's question.
These transcripts may include humor, casual speech, tangents, or non-traditional structure.
Return **1** if the segment has a loose or minor connection to the user's question - it may touch on a related theme, mention something adjacent, or vaguely resemble the topic, even if it is incomplete or off-target.
Return **0** if the segment has no real connection at all.
Only respond with a single digit: 1 or 0. Do not explain.
)PROMPT";

// Placeholders: {documents}, {query}, {answer}.
inline constexpr std::string_view kAnswerJudgePrompt = R"PROMPT(You are an impartial judge for evaluating the quality of the responses provided by an AI assistant tasked with answering users' questions about the *Trash Taste* podcast.

You will be given the user's question and the answer produced by the assistant. The assistant's answer was generated based on a set of audio-derived documents retrieved from episodes of the *Trash Taste* podcast.

You will be provided with the relevant podcast segments retrieved by the search engine.

Your task is to evaluate the answer's quality based on the response's **relevance**, **accuracy**, **completeness**, and **precision**, grounded in the retrieved podcast content.

## Rules for evaluating an answer:
- **Relevance**: Does the answer address the user's question?
- **Accuracy**: Is the answer factually correct, based on the retrieved podcast segments?
- **Completeness**: Does the answer provide all the information needed to address the user's question?
- **Precision**: If the user asks about a specific episode, moment, guest, or topic, does the answer correctly identify and reflect that specific context?

## Steps to evaluate an answer:
1. **Understand the user's intent**: Restate what the user is trying to find out, in your own words.
2. **Check if the answer is correct**: Think step-by-step about whether the answer truthfully and fully responds to the user's question.
3. **Evaluate the quality of the answer**: Judge the answer on relevance, factual accuracy (according to the retrieved podcast segments), and how completely it covers the query.
4. **Assign a score**: Produce a single-line JSON object with the following keys, each with a score from 0 to 2:

- "relevance"  
  - 0: The answer is not relevant to the user's question.  
  - 1: The answer is partially relevant.  
  - 2: The answer is fully relevant.

- "accuracy"  
  - 0: The answer is factually incorrect or contradicts the retrieved content.  
  - 1: The answer is partially correct but includes errors or misinterpretations.  
  - 2: The answer is factually correct based on the retrieved segments.

- "completeness"  
  - 0: The answer leaves out major parts of the question.  
  - 1: The answer addresses the question only in part.  
  - 2: The answer covers all key aspects of the user's question.

- "precision"  
  - 0: The answer refers to the wrong episode, topic, or context.  
  - 1: The answer is somewhat related but not specific enough.  
  - 2: The answer directly reflects the specific content or moment asked about.

The last line of your evaluation must be a SINGLE LINE JSON object with the keys "relevance", "accuracy", "completeness", and "precision", each assigned a score between 0 and 2.

[ DOCUMENTS RETRIEVED ]  
{documents}

[ User Query ]  
{query}

[ Agent Answer ]  
{answer}
)PROMPT";

inline constexpr std::string_view default_relevance_prompt(RelevanceMode mode) noexcept {
  return mode == RelevanceMode::VeryRelevant ? kVeryRelevantPrompt : kSomewhatRelevantPrompt;
}

/// Substitutes each {name} placeholder once, left to right, so placeholder-like
/// text inside substituted values is left alone.
inline std::string fill_answer_template(std::string_view tmpl, std::string_view documents, std::string_view query,
                                        std::string_view answer) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find('{', pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    out.append(tmpl.substr(pos, open - pos));
    const auto rest = tmpl.substr(open);
    if (rest.starts_with("{documents}")) {
      out.append(documents);
      pos = open + 11;
    } else if (rest.starts_with("{query}")) {
      out.append(query);
      pos = open + 7;
    } else if (rest.starts_with("{answer}")) {
      out.append(answer);
      pos = open + 8;
    } else {
      out.push_back('{');
      pos = open + 1;
    }
  }
  return out;
}

}  // namespace voxrag::eval
