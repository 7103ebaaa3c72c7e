#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "support.hpp"
#include "voxrag/audio.hpp"

using namespace voxrag;
using namespace voxrag::testing;

namespace {

// Naive DFT magnitude peak (bins 1..n/2), the reference for resampler tests.
std::size_t dft_peak_bin(const std::vector<float>& x) {
  const std::size_t n = x.size();
  std::size_t best_bin = 0;
  double best = -1.0;
  for (std::size_t k = 1; k < n / 2; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const double phase = -2.0 * std::numbers::pi * static_cast<double>(k * i % n) / static_cast<double>(n);
      acc += static_cast<double>(x[i]) * std::complex<double>(std::cos(phase), std::sin(phase));
    }
    if (std::abs(acc) > best) {
      best = std::abs(acc);
      best_bin = k;
    }
  }
  return best_bin;
}

AudioBuffer concat(std::initializer_list<AudioBuffer> parts) {
  AudioBuffer out;
  out.sample_rate = parts.begin()->sample_rate;
  for (const auto& p : parts) out.samples.insert(out.samples.end(), p.samples.begin(), p.samples.end());
  return out;
}

}  // namespace

TEST(Wav, Pcm16RoundTrip) {
  AudioBuffer buf;
  buf.sample_rate = 22050;
  buf.channel_count = 2;
  buf.samples = {0.0f, 0.5f, -0.5f, 1.0f, -1.0f, 0.25f};
  const auto decoded = decode_wav(encode_wav_pcm16(buf));
  EXPECT_EQ(decoded.sample_rate, 22050);
  EXPECT_EQ(decoded.channel_count, 2);
  ASSERT_EQ(decoded.samples.size(), buf.samples.size());
  for (std::size_t i = 0; i < buf.samples.size(); ++i) EXPECT_NEAR(decoded.samples[i], buf.samples[i], 1.0 / 32768.0);
}

TEST(Wav, Float32RoundTripIsExact) {
  Noise noise(3);
  AudioBuffer buf;
  buf.sample_rate = 48000;
  for (int i = 0; i < 1000; ++i) buf.samples.push_back(static_cast<float>(noise.next()));
  EXPECT_EQ(decode_wav(encode_wav_f32(buf)).samples, buf.samples);
}

TEST(Wav, QuantizedBufferSurvivesPcm16Exactly) {
  Noise noise(4);
  AudioBuffer buf;
  for (int i = 0; i < 4096; ++i) buf.samples.push_back(static_cast<float>(noise.next()));
  const auto q = quantize_pcm16(buf);
  EXPECT_EQ(decode_wav(encode_wav_pcm16(q)).samples, q.samples);
  EXPECT_EQ(quantize_pcm16(q).samples, q.samples);
}

TEST(Wav, RejectsGarbageAndUnsupportedFormats) {
  const std::vector<std::uint8_t> junk = {'n', 'o', 't', ' ', 'a', ' ', 'w', 'a', 'v', 'e', '!', '!'};
  try {
    decode_wav(junk);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::CorruptHeader);
  }
  auto bytes = encode_wav_pcm16(silence(0.01, 16000));
  bytes[20] = 2;  // format tag ADPCM
  try {
    decode_wav(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnsupportedCodec);
  }
  auto truncated = encode_wav_pcm16(silence(0.01, 16000));
  truncated.resize(30);
  EXPECT_THROW(decode_wav(truncated), Error);
}

TEST(Wav, MissingFileIsNotFound) {
  try {
    load_audio("/nonexistent/episode.wav");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotFound);
  }
}

TEST(ToMono, MonoIsIdentity) {
  const auto buf = tone(300, 0.1, 16000);
  EXPECT_EQ(to_mono(buf).samples, buf.samples);
}

TEST(ToMono, AveragesChannelsAndIsIdempotent) {
  AudioBuffer st;
  st.channel_count = 2;
  st.samples = {1.0f, 0.0f, 0.3f, 0.3f, -1.0f, -0.5f};
  const auto m = to_mono(st);
  EXPECT_EQ(m.channel_count, 1);
  ASSERT_EQ(m.samples.size(), 3u);
  EXPECT_FLOAT_EQ(m.samples[0], 0.5f);
  EXPECT_FLOAT_EQ(m.samples[1], 0.3f);
  EXPECT_FLOAT_EQ(m.samples[2], -0.75f);
  EXPECT_EQ(to_mono(m).samples, m.samples);
}

TEST(ToMono, ClampsOutOfRangeInput) {
  AudioBuffer st;
  st.channel_count = 2;
  st.samples = {3.0f, 3.0f, -2.0f, -4.0f};
  const auto m = to_mono(st);
  EXPECT_FLOAT_EQ(m.samples[0], 1.0f);
  EXPECT_FLOAT_EQ(m.samples[1], -1.0f);
}

TEST(Resample, SameRateIsBitIdentical) {
  const auto buf = tone(440, 0.25, 16000);
  EXPECT_EQ(resample(buf, 16000).samples, buf.samples);
}

TEST(Resample, LengthFollowsRateRatio) {
  EXPECT_EQ(resample(silence(1.0, 32000), 16000).samples.size(), 16000u);
  EXPECT_EQ(resample(silence(1.0, 44100), 16000).samples.size(), 16000u);
  EXPECT_EQ(resample(silence(0.5, 8000), 16000).samples.size(), 8000u);
  AudioBuffer odd;
  odd.sample_rate = 44100;
  odd.samples.assign(1001, 0.0f);
  EXPECT_EQ(resample(odd, 16000).samples.size(), static_cast<std::size_t>(std::lround(1001.0 * 16000 / 44100)));
}

TEST(Resample, RepeatedResampleToSameRateIsStable) {
  const auto once = resample(tone(523, 0.2, 44100), 16000);
  EXPECT_EQ(resample(once, 16000).samples, once.samples);
}

TEST(Resample, SpectralPeakMatchesDirectReference) {
  const auto resampled = resample(tone(440, 0.5, 32000), 16000);
  const auto reference = tone(440, 0.5, 16000);
  ASSERT_EQ(resampled.samples.size(), reference.samples.size());
  const auto got = dft_peak_bin(resampled.samples);
  const auto want = dft_peak_bin(reference.samples);
  EXPECT_LE(std::abs(static_cast<long>(got) - static_cast<long>(want)), 1);
  EXPECT_EQ(want, 220u);  // 440 Hz at 2 Hz per bin
}

TEST(Resample, AttenuatesContentAboveNewNyquist) {
  // 12 kHz cannot survive at 16 kHz; the anti-alias filter must remove it.
  const auto out = resample(tone(12000, 0.5, 48000, 0.5), 16000);
  double energy = 0.0;
  for (std::size_t i = 200; i + 200 < out.samples.size(); ++i) energy += out.samples[i] * out.samples[i];
  const double rms = std::sqrt(energy / static_cast<double>(out.samples.size() - 400));
  EXPECT_LT(rms, 0.5 / std::sqrt(2.0) * 0.01);
}

TEST(Resample, RejectsMultichannelAndBadRate) {
  AudioBuffer st;
  st.channel_count = 2;
  st.samples.assign(10, 0.0f);
  EXPECT_THROW(resample(st, 16000), Error);
  EXPECT_THROW(resample(silence(0.1, 16000), 0), Error);
}

TEST(Vad, SilenceHasNoSpeech) { EXPECT_TRUE(detect_speech(silence(2.0, 16000)).empty()); }

TEST(Vad, FullScaleIsOneSpan) {
  AudioBuffer buf = silence(2.0, 16000);
  std::fill(buf.samples.begin(), buf.samples.end(), 1.0f);
  const auto spans = detect_speech(buf);
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_DOUBLE_EQ(spans[0].start_s, 0.0);
  EXPECT_DOUBLE_EQ(spans[0].end_s, 2.0);
}

TEST(Vad, ToneBetweenSilencesMatchesFrameEnergyReference) {
  const int rate = 16000;
  const auto buf = concat({silence(1.0, rate), tone(440, 2.0, rate), silence(1.0, rate)});
  const VadConfig cfg;
  const auto spans = detect_speech(buf, cfg);
  ASSERT_EQ(spans.size(), 1u);

  // Reference: first and last 30 ms frame whose RMS clears the threshold.
  const std::size_t frame = static_cast<std::size_t>(cfg.frame_ms * rate / 1000.0);
  double first = -1.0, last = -1.0;
  for (std::size_t start = 0; start < buf.samples.size(); start += frame) {
    const std::size_t len = std::min(frame, buf.samples.size() - start);
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) acc += buf.samples[start + i] * buf.samples[start + i];
    const double db = 10.0 * std::log10(acc / static_cast<double>(len) + 1e-300);
    if (db > cfg.threshold_db) {
      if (first < 0) first = static_cast<double>(start) / rate;
      last = static_cast<double>(start + len) / rate;
    }
  }
  const double frame_s = cfg.frame_ms / 1000.0;
  EXPECT_NEAR(spans[0].start_s, first, 1e-9);
  EXPECT_NEAR(spans[0].end_s, last, 1e-9);
  EXPECT_NEAR(spans[0].start_s, 1.0, frame_s);
  EXPECT_NEAR(spans[0].end_s, 3.0, frame_s);
}

TEST(Vad, ShortGapsCloseAndShortBurstsDrop) {
  const int rate = 16000;
  const auto buf = concat({tone(300, 1.0, rate), silence(0.12, rate), tone(300, 1.0, rate), silence(1.0, rate),
                           tone(300, 0.09, rate), silence(1.0, rate)});
  const auto spans = detect_speech(buf);
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_NEAR(spans[0].end_s, 2.12, 0.03);
}

TEST(Vad, PropertiesOnRandomBuffers) {
  Noise noise(11);
  for (int trial = 0; trial < 60; ++trial) {
    AudioBuffer buf = silence(noise.uniform(0.5, 4.0), 16000);
    // Piecewise-constant loudness blocks of random length and level.
    std::size_t i = 0;
    while (i < buf.samples.size()) {
      const auto len = static_cast<std::size_t>(noise.uniform(0.01, 0.6) * 16000);
      const double level = std::pow(10.0, noise.uniform(-70.0, 0.0) / 20.0);
      for (std::size_t j = i; j < std::min(buf.samples.size(), i + len); ++j) buf.samples[j] = static_cast<float>(level * noise.next());
      i += len;
    }
    const auto spans = detect_speech(buf);
    double total = 0.0;
    for (std::size_t s = 0; s < spans.size(); ++s) {
      EXPECT_GE(spans[s].start_s, 0.0);
      EXPECT_LE(spans[s].end_s, buf.duration_s() + 1e-12);
      EXPECT_LT(spans[s].start_s, spans[s].end_s);
      if (s) { EXPECT_LE(spans[s - 1].end_s, spans[s].start_s); }
      total += spans[s].length();
    }
    EXPECT_LE(total, buf.duration_s() + 1e-9);

    // Halving the signal can only shrink detected speech (see decisions on
    // why span *count* is not monotone under gap merging).
    AudioBuffer half = buf;
    for (auto& s : half.samples) s *= 0.5f;
    const auto quieter = detect_speech(half);
    for (const auto& q : quieter) {
      const bool inside = std::any_of(spans.begin(), spans.end(), [&](const SpeechSpan& s) {
        return s.start_s <= q.start_s + 1e-12 && q.end_s <= s.end_s + 1e-12;
      });
      EXPECT_TRUE(inside) << "trial " << trial;
    }
  }
}

TEST(Spans, ParsesSortsAndValidates) {
  const auto spans = parse_spans("# external VAD\n2.0 3.0\n0.0 1.5\n\n");
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0], (SpeechSpan{0.0, 1.5}));
  EXPECT_EQ(spans[1], (SpeechSpan{2.0, 3.0}));
  auto code_of = [](std::string_view text) {
    try {
      parse_spans(text);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::ConfigError;
  };
  EXPECT_EQ(code_of("3.0 2.0\n"), Errc::InvariantViolation);
  EXPECT_EQ(code_of("0 2\n1 3\n"), Errc::InvariantViolation);
  EXPECT_EQ(code_of("zero 1\n"), Errc::ParseError);
  EXPECT_EQ(code_of("1\n"), Errc::ParseError);
}

TEST(Spans, ImportsFromFile) {
  TempDir dir;
  write_text(dir / "spans.txt", "0.5 1.0\n");
  const auto spans = import_spans(dir / "spans.txt");
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_DOUBLE_EQ(spans[0].end_s, 1.0);
}
