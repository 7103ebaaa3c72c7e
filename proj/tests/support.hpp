#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "voxrag/audio.hpp"
#include "voxrag/hash.hpp"

namespace voxrag::testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "voxrag-test-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Deterministic uniform doubles in [-1, 1).
class Noise {
 public:
  explicit Noise(std::uint64_t seed) : state_(seed) {}
  double next() { return static_cast<double>(splitmix64(state_) >> 11) * 0x1.0p-52 - 1.0; }
  double uniform(double lo, double hi) { return lo + (next() + 1.0) * 0.5 * (hi - lo); }
  std::uint64_t bits() { return splitmix64(state_); }

 private:
  std::uint64_t state_;
};

inline AudioBuffer tone(double freq, double seconds, int rate, double amplitude = 0.5) {
  AudioBuffer buf;
  buf.sample_rate = rate;
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  buf.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    buf.samples[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate));
  }
  return buf;
}

inline AudioBuffer silence(double seconds, int rate) {
  AudioBuffer buf;
  buf.sample_rate = rate;
  buf.samples.assign(static_cast<std::size_t>(std::llround(seconds * rate)), 0.0f);
  return buf;
}

/// Writes a voiced burst (two partials, slow amplitude modulation, light
/// noise) over [start_s, end_s) of a mono buffer.
inline void add_burst(AudioBuffer& buf, double start_s, double end_s, double freq, Noise& noise) {
  const auto rate = static_cast<double>(buf.sample_rate);
  const auto begin = static_cast<std::size_t>(start_s * rate);
  const auto end = std::min(buf.samples.size(), static_cast<std::size_t>(end_s * rate));
  for (std::size_t i = begin; i < end; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double env = 0.6 + 0.4 * std::abs(std::sin(2.0 * std::numbers::pi * 3.0 * t));
    const double v = 0.18 * std::sin(2.0 * std::numbers::pi * freq * t) + 0.08 * std::sin(2.0 * std::numbers::pi * 2.3 * freq * t);
    buf.samples[i] = static_cast<float>(env * v + 0.02 * noise.next());
  }
}

struct Burst {
  double start_s, end_s;
};

struct FixtureEpisode {
  AudioBuffer audio;  // stereo, 22.05 kHz
  std::string rttm;
  std::vector<Burst> bursts;
};

/// Five-minute, two-speaker synthetic episode. Its bursts exercise gap
/// closing, merging, turn cuts, the length cap, short-burst removal and an
/// unattributed span.
inline FixtureEpisode make_fixture_episode(const std::string& episode = "fixture") {
  constexpr int rate = 22050;
  constexpr double duration = 300.0;
  FixtureEpisode ep;
  ep.bursts = {{1.0, 5.0},     {5.5, 13.0},    {13.2, 20.0},   {22.0, 22.1},  {25.0, 120.0},
               {121.0, 150.0}, {150.6, 170.0}, {175.0, 178.0}, {180.0, 290.0}};
  AudioBuffer mono;
  mono.sample_rate = rate;
  mono.samples.resize(static_cast<std::size_t>(duration * rate));
  Noise noise(0x5eed);
  for (auto& s : mono.samples) s = static_cast<float>(0.0005 * noise.next());
  for (std::size_t b = 0; b < ep.bursts.size(); ++b) add_burst(mono, ep.bursts[b].start_s, ep.bursts[b].end_s, 140.0 + 20.0 * b, noise);

  ep.audio.sample_rate = rate;
  ep.audio.channel_count = 2;
  ep.audio.samples.resize(mono.samples.size() * 2);
  for (std::size_t i = 0; i < mono.samples.size(); ++i) {
    ep.audio.samples[2 * i] = mono.samples[i];
    ep.audio.samples[2 * i + 1] = 0.9f * mono.samples[i];
  }

  struct Turn {
    double start, end;
    const char* who;
  };
  const Turn turns[] = {{0.9, 13.1, "host"},     {13.1, 21.0, "guest"},   {24.8, 120.2, "guest"}, {120.8, 150.3, "host"},
                        {150.3, 170.5, "guest"}, {179.5, 240.0, "host"},  {240.0, 291.0, "guest"}};
  for (const auto& t : turns) {
    char line[160];
    std::snprintf(line, sizeof line, "SPEAKER %s 1 %.3f %.3f <NA> <NA> %s <NA> <NA>\n", episode.c_str(), t.start, t.end - t.start, t.who);
    ep.rttm += line;
  }
  return ep;
}

struct FixtureFiles {
  fs::path audio;
  fs::path rttm;
};

/// Writes the fixture episode as <dir>/<episode>.wav (16-bit) and <episode>.rttm.
inline FixtureFiles write_fixture(const fs::path& dir, const std::string& episode = "fixture") {
  const auto ep = make_fixture_episode(episode);
  FixtureFiles files{dir / (episode + ".wav"), dir / (episode + ".rttm")};
  write_bytes(files.audio, encode_wav_pcm16(ep.audio));
  write_text(files.rttm, ep.rttm);
  return files;
}

/// In-process HTTP server on a free loopback port.
class FakeServer {
 public:
  explicit FakeServer(const std::function<void(httplib::Server&)>& setup) {
    setup(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int port() const noexcept { return port_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace voxrag::testing
