#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "voxrag/error.hpp"

namespace voxrag {

inline constexpr int kPipelineRate = 16000;

// Interleaved PCM in [-1, 1].
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = kPipelineRate;
  int channel_count = 1;

  std::size_t frames() const noexcept {
    return channel_count > 0 ? samples.size() / static_cast<std::size_t>(channel_count) : 0;
  }
  double duration_s() const noexcept {
    if (sample_rate <= 0 || channel_count <= 0) return 0.0;
    return static_cast<double>(samples.size()) /
           (static_cast<double>(sample_rate) * channel_count);
  }
};

struct SpeechSpan {
  double start_s = 0.0;
  double end_s = 0.0;

  double length() const noexcept { return end_s - start_s; }
  friend bool operator==(const SpeechSpan&, const SpeechSpan&) = default;
};

// ─── WAV codec ───────────────────────────────────────────────────────────────

namespace detail {

inline std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline float clamp_unit(float v) noexcept {
  if (!std::isfinite(v)) return 0.0f;
  return std::clamp(v, -1.0f, 1.0f);
}

inline std::int16_t to_pcm16(float v) noexcept {
  const double scaled = std::nearbyint(static_cast<double>(clamp_unit(v)) * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

}  // namespace detail

/// Decodes a RIFF/WAVE byte stream. Only PCM16 and IEEE float32 payloads are
/// accepted (including WAVE_FORMAT_EXTENSIBLE wrappers of either).
inline AudioBuffer decode_wav(std::span<const std::uint8_t> bytes) {
  using detail::read_u16;
  using detail::read_u32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(Errc::CorruptHeader, "missing RIFF/WAVE preamble");
  }

  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size()) throw Error(Errc::CorruptHeader, "truncated fmt chunk");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      block_align = read_u16(chunk + 20);
      bits = read_u16(chunk + 22);
      if (format == 0xFFFE) {
        if (size < 40 || body + 40 > bytes.size()) throw Error(Errc::CorruptHeader, "truncated extensible fmt chunk");
        format = read_u16(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // Streaming writers leave the size unset; take what is present.
      data_size = std::min<std::size_t>(size, bytes.size() - std::min(body, bytes.size()));
      break;
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt) throw Error(Errc::CorruptHeader, "no fmt chunk");
  if (data == nullptr) throw Error(Errc::CorruptHeader, "no data chunk");
  if (channels == 0 || rate == 0) throw Error(Errc::CorruptHeader, "zero channels or sample rate");

  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32) {
    throw Error(Errc::UnsupportedCodec,
                "format tag " + std::to_string(format) + " with " + std::to_string(bits) + " bits");
  }
  const std::size_t width = bits / 8;
  if (block_align != width * channels) throw Error(Errc::CorruptHeader, "inconsistent block alignment");

  AudioBuffer buf;
  buf.sample_rate = static_cast<int>(rate);
  buf.channel_count = channels;
  const std::size_t count = (data_size / block_align) * channels;
  buf.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* p = data + i * width;
    if (pcm16) {
      buf.samples[i] = static_cast<float>(static_cast<std::int16_t>(read_u16(p))) / 32768.0f;
    } else {
      const std::uint32_t raw = read_u32(p);
      float v;
      std::memcpy(&v, &raw, sizeof v);
      buf.samples[i] = detail::clamp_unit(v);
    }
  }
  return buf;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::NotFound, path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline AudioBuffer load_audio(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error(Errc::NotFound, path.string());
  const auto bytes = read_file_bytes(path);
  return decode_wav(bytes);
}

/// Encodes as 16-bit PCM WAV (the store's slice format).
inline std::vector<std::uint8_t> encode_wav_pcm16(const AudioBuffer& buf) {
  std::vector<std::uint8_t> out;
  const auto data_bytes = static_cast<std::uint32_t>(buf.samples.size() * 2);
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_u32(out, 16);
  detail::put_u16(out, 1);
  detail::put_u16(out, static_cast<std::uint16_t>(buf.channel_count));
  detail::put_u32(out, static_cast<std::uint32_t>(buf.sample_rate));
  detail::put_u32(out, static_cast<std::uint32_t>(buf.sample_rate * buf.channel_count * 2));
  detail::put_u16(out, static_cast<std::uint16_t>(buf.channel_count * 2));
  detail::put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put_u32(out, data_bytes);
  for (float s : buf.samples) detail::put_u16(out, static_cast<std::uint16_t>(detail::to_pcm16(s)));
  return out;
}

/// Encodes as 32-bit IEEE float WAV.
inline std::vector<std::uint8_t> encode_wav_f32(const AudioBuffer& buf) {
  std::vector<std::uint8_t> out;
  const auto data_bytes = static_cast<std::uint32_t>(buf.samples.size() * 4);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_u32(out, 16);
  detail::put_u16(out, 3);
  detail::put_u16(out, static_cast<std::uint16_t>(buf.channel_count));
  detail::put_u32(out, static_cast<std::uint32_t>(buf.sample_rate));
  detail::put_u32(out, static_cast<std::uint32_t>(buf.sample_rate * buf.channel_count * 4));
  detail::put_u16(out, static_cast<std::uint16_t>(buf.channel_count * 4));
  detail::put_u16(out, 32);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put_u32(out, data_bytes);
  for (float s : buf.samples) {
    std::uint32_t raw;
    std::memcpy(&raw, &s, sizeof raw);
    detail::put_u32(out, raw);
  }
  return out;
}

/// Rounds every sample to the nearest PCM16 level, i.e. the values a reader
/// of encode_wav_pcm16's output would decode.
inline AudioBuffer quantize_pcm16(AudioBuffer buf) {
  for (float& s : buf.samples) s = static_cast<float>(detail::to_pcm16(s)) / 32768.0f;
  return buf;
}

// ─── DSP ─────────────────────────────────────────────────────────────────────

inline AudioBuffer to_mono(const AudioBuffer& buf) {
  if (buf.channel_count <= 1) return buf;
  AudioBuffer out;
  out.sample_rate = buf.sample_rate;
  out.channel_count = 1;
  const std::size_t ch = static_cast<std::size_t>(buf.channel_count);
  const std::size_t frames = buf.frames();
  out.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < ch; ++c) acc += buf.samples[f * ch + c];
    out.samples[f] = detail::clamp_unit(static_cast<float>(acc / static_cast<double>(ch)));
  }
  return out;
}

struct ResamplerSpec {
  int taps = 64;
  double kaiser_beta = 8.6;
};

/// Band-limited resampling with a Kaiser-windowed sinc kernel. The kernel
/// spans `taps` zero crossings of the low-pass at the lower of the two rates,
/// so downsampling widens it in input samples.
inline AudioBuffer resample(const AudioBuffer& buf, int target_rate, ResamplerSpec spec = {}) {
  if (target_rate <= 0) throw Error(Errc::InvariantViolation, "target rate must be positive");
  if (buf.channel_count != 1) throw Error(Errc::InvariantViolation, "resample expects mono input");
  if (buf.sample_rate == target_rate) return buf;

  const auto src_rate = static_cast<std::int64_t>(buf.sample_rate);
  const auto dst_rate = static_cast<std::int64_t>(target_rate);
  const auto in_len = static_cast<std::int64_t>(buf.samples.size());
  const std::int64_t out_len = (in_len * dst_rate + src_rate / 2) / src_rate;

  const double cutoff = std::min(1.0, static_cast<double>(dst_rate) / static_cast<double>(src_rate));
  const double half_width = (spec.taps / 2) / cutoff;
  const double i0_beta = std::cyl_bessel_i(0.0, spec.kaiser_beta);

  auto kernel = [&](double x) {
    const double r = x / half_width;
    if (r <= -1.0 || r >= 1.0) return 0.0;
    const double window = std::cyl_bessel_i(0.0, spec.kaiser_beta * std::sqrt(1.0 - r * r)) / i0_beta;
    const double arg = cutoff * x;
    const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
    return cutoff * sinc * window;
  };

  AudioBuffer out;
  out.sample_rate = target_rate;
  out.channel_count = 1;
  out.samples.resize(static_cast<std::size_t>(out_len));

  // Output n sits at input time n*M/L; its fractional part cycles through L
  // phases, so the kernel is tabulated once per phase.
  const std::int64_t g = std::gcd(src_rate, dst_rate);
  const std::int64_t up = dst_rate / g, down = src_rate / g;
  const bool tabulate = up <= 4096;
  struct Phase {
    std::int64_t first = 0;  // offset of the first tap from floor(t)
    std::vector<double> weights;
  };
  std::vector<Phase> phases(tabulate ? static_cast<std::size_t>(up) : 0);
  for (std::size_t p = 0; p < phases.size(); ++p) {
    const double frac = static_cast<double>(p) / static_cast<double>(up);
    const auto lo = static_cast<std::int64_t>(std::ceil(frac - half_width));
    const auto hi = static_cast<std::int64_t>(std::floor(frac + half_width));
    phases[p].first = lo;
    for (std::int64_t k = lo; k <= hi; ++k) phases[p].weights.push_back(kernel(frac - static_cast<double>(k)));
  }

  for (std::int64_t n = 0; n < out_len; ++n) {
    double acc = 0.0;
    if (tabulate) {
      const std::int64_t base = n * down / up;
      const auto& ph = phases[static_cast<std::size_t>(n * down % up)];
      for (std::size_t k = 0; k < ph.weights.size(); ++k) {
        const std::int64_t i = base + ph.first + static_cast<std::int64_t>(k);
        if (i < 0 || i >= in_len) continue;
        acc += buf.samples[static_cast<std::size_t>(i)] * ph.weights[k];
      }
    } else {
      const double t = static_cast<double>(n * src_rate) / static_cast<double>(dst_rate);
      const auto lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(t - half_width)));
      const auto hi = std::min<std::int64_t>(in_len - 1, static_cast<std::int64_t>(std::floor(t + half_width)));
      for (std::int64_t i = lo; i <= hi; ++i) acc += buf.samples[static_cast<std::size_t>(i)] * kernel(t - static_cast<double>(i));
    }
    out.samples[static_cast<std::size_t>(n)] = detail::clamp_unit(static_cast<float>(acc));
  }
  return out;
}

/// Mono + pipeline rate: the shared front end for episodes and queries.
inline AudioBuffer preprocess(const AudioBuffer& buf, int pipeline_rate = kPipelineRate) {
  return resample(to_mono(buf), pipeline_rate);
}

// ─── Voice activity ──────────────────────────────────────────────────────────

struct VadConfig {
  double frame_ms = 30.0;
  double threshold_db = -40.0;  // dBFS RMS
  double min_silence_ms = 300.0;
  double min_speech_ms = 250.0;
};

inline double frame_rms_dbfs(std::span<const float> frame) {
  if (frame.empty()) return -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (float s : frame) acc += static_cast<double>(s) * s;
  const double rms = std::sqrt(acc / static_cast<double>(frame.size()));
  return rms > 0.0 ? 20.0 * std::log10(rms) : -std::numeric_limits<double>::infinity();
}

/// Energy VAD: frames above the threshold become speech; gaps shorter than
/// min_silence_ms are closed, then spans shorter than min_speech_ms dropped.
inline std::vector<SpeechSpan> detect_speech(const AudioBuffer& buf, const VadConfig& cfg = {}) {
  if (buf.channel_count != 1) throw Error(Errc::InvariantViolation, "detect_speech expects mono input");
  const std::size_t n = buf.samples.size();
  const double rate = static_cast<double>(buf.sample_rate);
  const auto frame_len = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.frame_ms * rate / 1000.0)));

  // Sample-index runs of consecutive speech frames.
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  for (std::size_t begin = 0; begin < n; begin += frame_len) {
    const std::size_t end = std::min(n, begin + frame_len);
    const bool speech = frame_rms_dbfs(std::span(buf.samples).subspan(begin, end - begin)) > cfg.threshold_db;
    if (!speech) continue;
    if (!runs.empty() && runs.back().second == begin) {
      runs.back().second = end;
    } else {
      runs.emplace_back(begin, end);
    }
  }

  const auto min_gap = static_cast<double>(cfg.min_silence_ms) * rate / 1000.0;
  std::vector<std::pair<std::size_t, std::size_t>> merged;
  for (const auto& run : runs) {
    if (!merged.empty() && static_cast<double>(run.first - merged.back().second) < min_gap) {
      merged.back().second = run.second;
    } else {
      merged.push_back(run);
    }
  }

  const auto min_len = static_cast<double>(cfg.min_speech_ms) * rate / 1000.0;
  std::vector<SpeechSpan> spans;
  for (const auto& [begin, end] : merged) {
    if (static_cast<double>(end - begin) < min_len) continue;
    spans.push_back({static_cast<double>(begin) / rate, static_cast<double>(end) / rate});
  }
  return spans;
}

inline void validate_spans(std::span<const SpeechSpan> spans) {
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto& s = spans[i];
    if (!std::isfinite(s.start_s) || !std::isfinite(s.end_s) || s.start_s < 0.0 || s.start_s >= s.end_s) {
      throw Error(Errc::InvariantViolation, "reversed or empty span at index " + std::to_string(i));
    }
    if (i > 0) {
      if (s.start_s < spans[i - 1].start_s) throw Error(Errc::InvariantViolation, "spans not sorted");
      if (s.start_s < spans[i - 1].end_s) throw Error(Errc::InvariantViolation, "overlapping spans");
    }
  }
}

/// Parses the external span-list format: one "<start_s> <end_s>" per line,
/// '#' starts a comment.
inline std::vector<SpeechSpan> parse_spans(std::string_view text) {
  std::vector<SpeechSpan> spans;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string a, b, extra;
    if (!(fields >> a)) continue;
    if (!(fields >> b) || (fields >> extra)) {
      throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": expected two fields");
    }
    try {
      std::size_t used_a = 0, used_b = 0;
      SpeechSpan span{std::stod(a, &used_a), std::stod(b, &used_b)};
      if (used_a != a.size() || used_b != b.size()) throw std::invalid_argument("trailing characters");
      if (!(span.start_s < span.end_s) || span.start_s < 0.0) {
        throw Error(Errc::InvariantViolation, "line " + std::to_string(line_no) + ": reversed span");
      }
      spans.push_back(span);
    } catch (const std::logic_error&) {
      throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": not a number");
    }
  }
  std::stable_sort(spans.begin(), spans.end(),
                   [](const SpeechSpan& x, const SpeechSpan& y) { return x.start_s < y.start_s; });
  validate_spans(spans);
  return spans;
}

inline std::vector<SpeechSpan> import_spans(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_spans(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace voxrag
