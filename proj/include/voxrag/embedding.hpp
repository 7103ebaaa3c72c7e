#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <future>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "voxrag/audio.hpp"
#include "voxrag/error.hpp"

namespace voxrag {

inline constexpr std::size_t kDefaultDim = 512;
inline constexpr double kUnitNormTolerance = 1e-5;

struct Embedding {
  std::vector<double> values;
  bool normalized = false;

  std::size_t dim() const noexcept { return values.size(); }
};

inline double squared_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

inline double inner_product(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::DimensionMismatch, std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double denom = std::sqrt(squared_norm(a)) * std::sqrt(squared_norm(b));
  if (!(denom > 0.0)) throw Error(Errc::ZeroVector, "cosine of a zero vector");
  return inner_product(a, b) / denom;
}

inline bool is_unit(std::span<const double> v, double tol = kUnitNormTolerance) {
  return std::abs(std::sqrt(squared_norm(v)) - 1.0) <= tol;
}

inline Embedding l2_normalize(Embedding e) {
  const double norm = std::sqrt(squared_norm(e.values));
  if (!(norm > 0.0)) throw Error(Errc::ZeroVector, "cannot normalize a zero vector");
  for (double& x : e.values) x /= norm;
  e.normalized = true;
  return e;
}

/// Checks a backend-produced vector against the configured dimension.
inline void validate_raw(const Embedding& e, std::size_t dim) {
  if (e.dim() != dim) {
    throw Error(Errc::DimensionMismatch, "expected " + std::to_string(dim) + " values, got " + std::to_string(e.dim()));
  }
  for (double x : e.values) {
    if (!std::isfinite(x)) throw Error(Errc::NonFiniteValue, "embedding contains a non-finite value");
  }
}

// ─── Backends ────────────────────────────────────────────────────────────────

enum class EmbedBackend { Sidecar, File, Stub };

struct EmbedderConfig {
  EmbedBackend backend = EmbedBackend::Stub;
  std::string endpoint = "http://127.0.0.1:8088";
  std::filesystem::path path;
  std::size_t dim = kDefaultDim;
  std::uint64_t seed = 0;
  std::size_t batch_size = 16;
  std::size_t max_in_flight = 4;
};

/// One unit of embedding work. `id` is what the file backend keys on; audio
/// backends ignore it.
struct EmbedItem {
  std::string id;
  const AudioBuffer* audio = nullptr;
};

class Embedder {
 public:
  virtual ~Embedder() = default;

  /// Raw backend output, one vector per item, order preserved.
  virtual std::vector<Embedding> embed_batch(std::span<const EmbedItem> items) = 0;
  virtual std::size_t dim() const = 0;
  /// Confirms the backend serves vectors of dim(); throws DimensionMismatch
  /// or BackendUnavailable otherwise.
  virtual void verify() {}
};

/// Validates and L2-normalizes, whatever the backend claims about its output.
inline Embedding finish_embedding(Embedding raw, std::size_t dim) {
  validate_raw(raw, dim);
  raw.normalized = false;
  return l2_normalize(std::move(raw));
}

inline Embedding embed(Embedder& embedder, const AudioBuffer& buf, std::string id = {}) {
  const EmbedItem item{std::move(id), &buf};
  auto out = embedder.embed_batch(std::span(&item, 1));
  if (out.size() != 1) throw Error(Errc::BackendUnavailable, "backend returned " + std::to_string(out.size()) + " vectors for 1 item");
  return finish_embedding(std::move(out.front()), embedder.dim());
}

/// Embeds in batches of `batch_size` with at most `max_in_flight` batches
/// outstanding. Output order matches input order.
inline std::vector<Embedding> embed_all(Embedder& embedder, std::span<const EmbedItem> items,
                                        std::size_t batch_size = 16, std::size_t max_in_flight = 4) {
  batch_size = std::max<std::size_t>(1, batch_size);
  max_in_flight = std::max<std::size_t>(1, max_in_flight);
  std::vector<Embedding> out(items.size());
  std::vector<std::future<void>> pending;

  auto run_batch = [&](std::size_t begin) {
    const std::size_t end = std::min(items.size(), begin + batch_size);
    auto vectors = embedder.embed_batch(items.subspan(begin, end - begin));
    if (vectors.size() != end - begin) {
      throw Error(Errc::BackendUnavailable, "backend returned " + std::to_string(vectors.size()) + " vectors for " +
                                                std::to_string(end - begin) + " items");
    }
    for (std::size_t i = begin; i < end; ++i) out[i] = finish_embedding(std::move(vectors[i - begin]), embedder.dim());
  };

  for (std::size_t begin = 0; begin < items.size(); begin += batch_size) {
    if (pending.size() >= max_in_flight) {
      pending.front().get();
      pending.erase(pending.begin());
    }
    pending.push_back(std::async(std::launch::async, run_batch, begin));
  }
  for (auto& f : pending) f.get();
  return out;
}

// ─── Precomputed vectors ─────────────────────────────────────────────────────

/// JSON Lines of {"id": string, "vector": [floats]}.
inline std::unordered_map<std::string, Embedding> read_vector_file(std::string_view text) {
  std::unordered_map<std::string, Embedding> vectors;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Embedding e;
      e.values = j.at("vector").get<std::vector<double>>();
      auto id = j.at("id").get<std::string>();
      if (!vectors.emplace(id, std::move(e)).second) throw Error(Errc::DuplicateId, id);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, "vector file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return vectors;
}

inline std::string write_vector_line(std::string_view id, const Embedding& e) {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["vector"] = e.values;
  return j.dump() + "\n";
}

class FileEmbedder final : public Embedder {
 public:
  FileEmbedder(std::unordered_map<std::string, Embedding> vectors, std::size_t dim)
      : vectors_(std::move(vectors)), dim_(dim) {}

  static FileEmbedder open(const std::filesystem::path& path, std::size_t dim) {
    const auto bytes = read_file_bytes(path);
    return FileEmbedder(read_vector_file(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())), dim);
  }

  std::vector<Embedding> embed_batch(std::span<const EmbedItem> items) override {
    std::vector<Embedding> out;
    out.reserve(items.size());
    for (const auto& item : items) {
      auto it = vectors_.find(item.id);
      if (it == vectors_.end()) throw Error(Errc::NotFound, "no precomputed vector for '" + item.id + "'");
      out.push_back(it->second);
    }
    return out;
  }
  std::size_t dim() const override { return dim_; }
  void verify() override {
    for (const auto& [id, e] : vectors_) {
      if (e.dim() != dim_) throw Error(Errc::DimensionMismatch, "vector '" + id + "' has " + std::to_string(e.dim()) + " values");
    }
  }

 private:
  std::unordered_map<std::string, Embedding> vectors_;
  std::size_t dim_;
};

}  // namespace voxrag
