#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "voxrag/eval/judge.hpp"
#include "voxrag/stubs.hpp"

using namespace voxrag;
using namespace voxrag::testing;

namespace {

AudioBuffer noise_clip(std::uint64_t seed, double secs = 1.0) {
  AudioBuffer b;
  b.sample_rate = kPipelineRate;
  Noise n(seed);
  for (int i = 0; i < static_cast<int>(secs * kPipelineRate); ++i) b.samples.push_back(static_cast<float>(0.2 * n.next()));
  return b;
}

double norm(const Embedding& e) {
  double s = 0.0;
  for (double v : e.values) s += v * v;
  return std::sqrt(s);
}

}  // namespace

TEST(StubEmbed, DeterministicAndUnitNorm) {
  const auto clip = noise_clip(1);
  const auto a = stub_embed(clip, 7, 512);
  const auto b = stub_embed(clip, 7, 512);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.dim(), 512u);
  EXPECT_NEAR(norm(a), 1.0, 1e-6);
  for (int seed = 0; seed < 50; ++seed) EXPECT_NEAR(norm(stub_embed(noise_clip(seed, 0.1), seed, 64)), 1.0, 1e-6);
}

TEST(StubEmbed, OneSampleChangesTheVector) {
  auto clip = noise_clip(2);
  const auto before = stub_embed(clip, 0, 32);
  clip.samples[clip.samples.size() / 2] += 1.0f / 32768.0f;
  EXPECT_NE(stub_embed(clip, 0, 32).values, before.values);
  EXPECT_NE(stub_embed(noise_clip(2), 1, 32).values, before.values);
}

TEST(StubEmbedder, RawVectorsMatchFreeFunction) {
  const auto clip = noise_clip(3);
  StubEmbedder embedder(5, 16);
  const auto e = embed(embedder, clip, "x");
  EXPECT_EQ(e.values, stub_embed(clip, 5, 16).values);
  EXPECT_TRUE(e.normalized);
}

TEST(StubTranscriber, DeterministicLengthTracksDuration) {
  StubTranscriber t(4);
  const auto a = t.transcribe(noise_clip(5, 3.0));
  EXPECT_EQ(a, t.transcribe(noise_clip(5, 3.0)));
  EXPECT_EQ(std::count(a.begin(), a.end(), ' ') + 1, 7);
  EXPECT_FALSE(t.transcribe(noise_clip(5, 0.01)).empty());
}

TEST(StubJudge, ScriptedLabelWins) {
  StubPolicy policy;
  policy.judge_script[{"q1", "s3", ""}] = 1;
  policy.judge_script[{"q1", "s4", "vr"}] = 0;
  StubJudge judge(policy);
  EXPECT_EQ(eval::judge_relevance("text", "seg", eval::RelevanceMode::VeryRelevant, judge, {"q1", "s3"}).raw_reply, "1");
  EXPECT_EQ(judge.relevance_label("q1", "s4", "vr"), 0);
}

TEST(StubJudge, FallbackKeepsVeryRelevantInsideSomewhatRelevant) {
  StubJudge judge;
  int vr_total = 0;
  for (int q = 0; q < 20; ++q) {
    for (int s = 0; s < 20; ++s) {
      const auto qid = "q" + std::to_string(q), sid = "s" + std::to_string(s);
      const int vr = judge.relevance_label(qid, sid, "vr");
      vr_total += vr;
      if (vr) {
        EXPECT_EQ(judge.relevance_label(qid, sid, "sr"), 1);
      }
    }
  }
  EXPECT_GT(vr_total, 0);
}

TEST(StubJudge, StrictModeRaisesScriptMiss) {
  StubPolicy policy;
  policy.strict = true;
  StubJudge judge(policy);
  try {
    eval::judge_relevance("t", "s", eval::RelevanceMode::VeryRelevant, judge, {"qx", "sx"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ScriptMiss);
  }
  EXPECT_THROW(judge.answer_scores("qx"), Error);
  ChatRequest untagged;
  untagged.messages.push_back({"user", "hi"});
  EXPECT_THROW(StubJudge().complete(untagged), Error);
}

TEST(StubJudge, AnswerReplyHasReasoningThenJson) {
  StubPolicy policy;
  policy.style = ReplyStyle::Padded;
  policy.answer_script["q2"] = {2, 1, 0, 2};
  StubJudge judge(policy);
  ChatRequest req;
  req.messages.push_back({"user", "x"});
  req.tags = {{"task", "answer"}, {"query_id", "q2"}};
  const auto reply = judge.complete(req);
  EXPECT_NE(reply.find('\n'), std::string::npos);
  EXPECT_EQ(eval::parse_answer_reply(reply), (eval::AnswerScores{2, 1, 0, 2}));
  req.tags = {{"task", "relevance"}, {"query_id", "q2"}, {"segment_id", "s"}, {"mode", "vr"}};
  const auto padded = judge.complete(req);
  EXPECT_EQ(padded.front(), ' ');
  EXPECT_NO_THROW(eval::parse_relevance_reply(padded));
  // Unscripted answers stay within 0-2 and never exceed relevance on other axes.
  for (int q = 0; q < 100; ++q) {
    const auto s = judge.answer_scores("u" + std::to_string(q));
    for (std::size_t a = 0; a < 4; ++a) {
      EXPECT_GE(s[a], 0);
      EXPECT_LE(s[a], s.relevance);
    }
  }
}

TEST(StubPolicy, LoadsFromJsonFile) {
  TempDir dir;
  write_text(dir / "policy.json",
             R"({"seed": 3, "strict": true, "style": "padded",
                 "judge": [{"query_id": "q1", "segment_id": "s3", "label": 1}],
                 "answers": [{"query_id": "q1", "relevance": 2, "accuracy": 2, "completeness": 1, "precision": 2}]})");
  const auto p = StubPolicy::load(dir / "policy.json");
  EXPECT_EQ(p.seed, 3u);
  EXPECT_TRUE(p.strict);
  EXPECT_EQ(p.style, ReplyStyle::Padded);
  EXPECT_EQ(p.judge_script.at({"q1", "s3", ""}), 1);
  EXPECT_EQ(p.answer_script.at("q1"), (eval::AnswerScores{2, 2, 1, 2}));
  write_text(dir / "bad.json", "{\"judge\": [{\"query_id\": 1}]}");
  EXPECT_THROW(StubPolicy::load(dir / "bad.json"), Error);
  write_text(dir / "broken.json", "{");
  EXPECT_THROW(StubPolicy::load(dir / "broken.json"), Error);
}

TEST(LengthReranker, ScoresByLength) {
  LengthReranker r;
  const std::vector<std::string> passages{"ab", "", "abcd"};
  EXPECT_EQ(r.score("q", passages), (std::vector<double>{2.0, 0.0, 4.0}));
}
