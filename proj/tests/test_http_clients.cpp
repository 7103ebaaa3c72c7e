#include <gtest/gtest.h>

#include <atomic>
#include <cmath>

#include "support.hpp"
#include "voxrag/http_clients.hpp"

using namespace voxrag;
using namespace voxrag::testing;
using nlohmann::json;

namespace {

HttpPolicy fast_policy(int retries = 3) {
  HttpPolicy p;
  p.max_retries = retries;
  p.initial_backoff = std::chrono::milliseconds(5);
  p.timeout = std::chrono::seconds(5);
  return p;
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return Errc::ParseError;
}

AudioBuffer clip(float value, int samples = 160) {
  AudioBuffer b;
  b.sample_rate = kPipelineRate;
  b.samples.assign(static_cast<std::size_t>(samples), value);
  return b;
}

// Sidecar stand-in: the vector for each WAV is [mean sample, 1, 0, ...] in `dim` values.
void install_embed(httplib::Server& s, std::size_t dim, std::size_t served_dim) {
  s.Post("/embed", [dim](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    json vectors = json::array();
    for (const auto& w : body.at("wavs")) {
      const auto bytes = base64_decode(w.get<std::string>());
      const auto audio = decode_wav(bytes);
      double sum = 0.0;
      for (float v : audio.samples) sum += v;
      std::vector<double> vec(dim, 0.0);
      vec[0] = sum / static_cast<double>(audio.samples.size());
      vec[1] = 1.0;
      vectors.push_back(vec);
    }
    res.set_content(json{{"vectors", vectors}, {"dim", dim}}.dump(), "application/json");
  });
  s.Get("/info", [served_dim](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"model", "fake"}, {"dim", served_dim}, {"sample_rate", 16000}}.dump(), "application/json");
  });
}

}  // namespace

TEST(Endpoint, SplitsOriginAndPrefix) {
  const auto ep = HttpEndpoint::parse("http://host:9000/v1/chat/completions/");
  EXPECT_EQ(ep.origin, "http://host:9000");
  EXPECT_EQ(ep.prefix, "/v1/chat/completions");
  EXPECT_EQ(HttpEndpoint::parse("http://h").prefix, "");
  EXPECT_EQ(code_of([] { HttpEndpoint::parse("host:9000"); }), Errc::ConfigError);
}

TEST(SidecarEmbedder, EmbedsBatchesInOrderAndVerifies) {
  FakeServer server([](httplib::Server& s) { install_embed(s, 8, 8); });
  SidecarEmbedder embedder(server.url(), 8, fast_policy());
  EXPECT_NO_THROW(embedder.verify());
  const auto a = clip(0.25f), b = clip(-0.5f);
  const std::vector<EmbedItem> items{{"a", &a}, {"b", &b}};
  const auto out = embed_all(embedder, items, 1, 2);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_NEAR(out[0].values[0], 0.25 / std::sqrt(1.0 + 0.0625), 1e-6);
  EXPECT_NEAR(out[1].values[0], -0.5 / std::sqrt(1.0 + 0.25), 1e-6);
  EXPECT_TRUE(out[0].normalized);
}

TEST(SidecarEmbedder, InfoDimensionMismatchRefused) {
  FakeServer server([](httplib::Server& s) { install_embed(s, 8, 16); });
  SidecarEmbedder embedder(server.url(), 8, fast_policy());
  EXPECT_EQ(code_of([&] { embedder.verify(); }), Errc::DimensionMismatch);
}

TEST(SidecarEmbedder, ReplyOfWrongWidthRejected) {
  FakeServer server([](httplib::Server& s) { install_embed(s, 4, 8); });
  SidecarEmbedder embedder(server.url(), 8, fast_policy());
  const auto a = clip(0.1f);
  EXPECT_EQ(code_of([&] { embed(embedder, a, "a"); }), Errc::DimensionMismatch);
}

TEST(SidecarEmbedder, MalformedInfoAndRefusedConnection) {
  FakeServer server([](httplib::Server& s) {
    s.Get("/info", [](const httplib::Request&, httplib::Response& res) { res.set_content("{\"dim\": \"big\"}", "application/json"); });
  });
  SidecarEmbedder embedder(server.url(), 8, fast_policy());
  EXPECT_EQ(code_of([&] { embedder.verify(); }), Errc::BackendUnavailable);

  int dead_port = 0;
  {
    FakeServer gone([](httplib::Server&) {});
    dead_port = gone.port();
  }
  SidecarEmbedder dead("http://127.0.0.1:" + std::to_string(dead_port), 8, fast_policy(1));
  EXPECT_EQ(code_of([&] { dead.verify(); }), Errc::BackendUnavailable);
}

TEST(Transport, RetriesTransientFailures) {
  std::atomic<int> calls{0};
  FakeServer server([&](httplib::Server& s) {
    s.Get("/info", [&](const httplib::Request&, httplib::Response& res) {
      if (++calls < 3) {
        res.status = calls == 1 ? 503 : 429;
        return;
      }
      res.set_content("{\"dim\": 8}", "application/json");
    });
  });
  SidecarEmbedder embedder(server.url(), 8, fast_policy(3));
  EXPECT_NO_THROW(embedder.verify());
  EXPECT_EQ(calls, 3);

  calls = 0;
  SidecarEmbedder impatient(server.url(), 8, fast_policy(1));
  EXPECT_EQ(code_of([&] { impatient.verify(); }), Errc::BackendUnavailable);
  EXPECT_EQ(calls, 2);
}

TEST(Transport, ClientErrorsAreNotRetried) {
  std::atomic<int> calls{0};
  FakeServer server([&](httplib::Server& s) {
    s.Post("/rerank", [&](const httplib::Request&, httplib::Response& res) {
      ++calls;
      res.status = 400;
      res.set_content("bad", "text/plain");
    });
  });
  SidecarReranker reranker(server.url(), fast_policy(3));
  const std::vector<std::string> passages{"x"};
  EXPECT_EQ(code_of([&] { reranker.score("q", passages); }), Errc::BackendUnavailable);
  EXPECT_EQ(calls, 1);
}

TEST(SidecarReranker, SendsQueryAndPassages) {
  FakeServer server([](httplib::Server& s) {
    s.Post("/rerank", [](const httplib::Request& req, httplib::Response& res) {
      const auto body = json::parse(req.body);
      std::vector<double> scores;
      for (const auto& p : body.at("passages")) {
        scores.push_back(p.get<std::string>().find(body.at("query").get<std::string>()) != std::string::npos ? 1.0 : 0.0);
      }
      res.set_content(json{{"scores", scores}}.dump(), "application/json");
    });
  });
  SidecarReranker reranker(server.url(), fast_policy());
  const std::vector<std::string> passages{"about cats", "about dogs", "cats again"};
  EXPECT_EQ(reranker.score("cats", passages), (std::vector<double>{1.0, 0.0, 1.0}));
}

TEST(SidecarReranker, CountMismatchRejected) {
  FakeServer server([](httplib::Server& s) {
    s.Post("/rerank", [](const httplib::Request&, httplib::Response& res) { res.set_content("{\"scores\": [1]}", "application/json"); });
  });
  SidecarReranker reranker(server.url(), fast_policy());
  const std::vector<std::string> passages{"a", "b"};
  EXPECT_EQ(code_of([&] { reranker.score("q", passages); }), Errc::BackendUnavailable);
}

TEST(SidecarTranscriber, PostsWavAndReadsText) {
  FakeServer server([](httplib::Server& s) {
    s.Post("/transcribe", [](const httplib::Request& req, httplib::Response& res) {
      const std::vector<std::uint8_t> bytes(req.body.begin(), req.body.end());
      const auto audio = decode_wav(bytes);
      res.set_content(json{{"text", "heard " + std::to_string(audio.samples.size()) + " samples"}}.dump(), "application/json");
    });
  });
  SidecarTranscriber t(server.url(), fast_policy());
  EXPECT_EQ(t.transcribe(clip(0.1f, 320)), "heard 320 samples");
}

TEST(OpenAIChat, SendsModelMessagesAndAuth) {
  json seen;
  std::string auth;
  FakeServer server([&](httplib::Server& s) {
    s.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
      seen = json::parse(req.body);
      auth = req.get_header_value("Authorization");
      res.set_content(R"({"choices": [{"message": {"role": "assistant", "content": "hello"}}]})", "application/json");
    });
  });
  OpenAIChatClient chat({server.url() + "/v1/chat/completions", "tiny-model", "k3y", 0.0}, fast_policy());
  ChatRequest req;
  req.messages = {{"system", "sys"}, {"user", "hi"}};
  EXPECT_EQ(chat.complete(req), "hello");
  EXPECT_EQ(chat.model_id(), "tiny-model");
  EXPECT_EQ(seen["model"], "tiny-model");
  EXPECT_EQ(seen["temperature"], 0.0);
  EXPECT_EQ(seen["messages"][1]["content"], "hi");
  EXPECT_EQ(auth, "Bearer k3y");
}

TEST(OpenAIChat, MalformedCompletionIsBackendError) {
  FakeServer server([](httplib::Server& s) {
    s.Post("/chat", [](const httplib::Request&, httplib::Response& res) { res.set_content("{\"choices\": []}", "application/json"); });
  });
  OpenAIChatClient chat({server.url() + "/chat", "m", "", 0.0}, fast_policy());
  EXPECT_EQ(code_of([&] { chat.complete({}); }), Errc::BackendUnavailable);
}
