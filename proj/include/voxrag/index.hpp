#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include "voxrag/embedding.hpp"
#include "voxrag/error.hpp"

namespace voxrag {

struct SearchHit {
  std::string segment_id;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based

  friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

/// Exact flat inner-product index. Rows are stored as float32, row-major,
/// in insertion order; insertion order also breaks score ties.
class FlatIndex {
 public:
  FlatIndex() = default;
  explicit FlatIndex(std::size_t dim) : dim_(dim) {}

  static FlatIndex build(std::span<const std::pair<std::string, Embedding>> entries, std::size_t dim) {
    FlatIndex index(dim);
    index.ids_.reserve(entries.size());
    index.matrix_.reserve(entries.size() * dim);
    std::unordered_set<std::string> seen;
    for (const auto& [id, e] : entries) {
      if (!seen.insert(id).second) throw Error(Errc::DuplicateId, id);
      if (e.dim() != dim) throw Error(Errc::DimensionMismatch, id + " has dim " + std::to_string(e.dim()));
      if (!e.normalized || !is_unit(e.values)) throw Error(Errc::NotNormalized, id);
      index.ids_.push_back(id);
      for (double x : e.values) index.matrix_.push_back(static_cast<float>(x));
    }
    return index;
  }

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::span<const float> row(std::size_t i) const { return std::span(matrix_).subspan(i * dim_, dim_); }

  /// Exact top-min(k, N) by inner product, descending, ties by insertion
  /// order. Scoring is partitioned across `threads`; each row's score is
  /// computed identically regardless of the partition.
  std::vector<SearchHit> search(const Embedding& query, std::size_t k, unsigned threads = 1) const {
    if (query.dim() != dim_) {
      throw Error(Errc::DimensionMismatch, "query dim " + std::to_string(query.dim()) + " vs index dim " + std::to_string(dim_));
    }
    if (!query.normalized || !is_unit(query.values)) throw Error(Errc::NotNormalized, "query embedding");
    if (k == 0) throw Error(Errc::InvariantViolation, "k must be at least 1");
    const std::size_t n = size();
    if (n == 0) return {};

    std::vector<double> scores(n);
    auto score_range = [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const float* r = matrix_.data() + i * dim_;
        double acc = 0.0;
        for (std::size_t d = 0; d < dim_; ++d) acc += static_cast<double>(r[d]) * query.values[d];
        scores[i] = acc;
      }
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
    if (threads == 1) {
      score_range(0, n);
    } else {
      std::vector<std::jthread> workers;
      const std::size_t chunk = (n + threads - 1) / threads;
      for (std::size_t begin = 0; begin < n; begin += chunk) workers.emplace_back(score_range, begin, std::min(n, begin + chunk));
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    const std::size_t top = std::min(k, n);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                      [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });

    std::vector<SearchHit> hits;
    hits.reserve(top);
    for (std::size_t r = 0; r < top; ++r) hits.push_back({ids_[order[r]], scores[order[r]], r + 1});
    return hits;
  }

  // ─── Persistence ───────────────────────────────────────────────────────────
  // "VOXIDX1\0" | u32 dim | u64 count | count × (u32 len, id bytes) | count×dim f32
  // All integers and floats little-endian.

  std::vector<std::uint8_t> serialize() const {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + sizeof kMagic);
    put_le(out, static_cast<std::uint32_t>(dim_));
    put_le(out, static_cast<std::uint64_t>(ids_.size()));
    for (const auto& id : ids_) {
      put_le(out, static_cast<std::uint32_t>(id.size()));
      out.insert(out.end(), id.begin(), id.end());
    }
    for (float x : matrix_) put_le(out, std::bit_cast<std::uint32_t>(x));
    return out;
  }

  static FlatIndex deserialize(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
      if (bytes.size() - pos < n) throw Error(Errc::CorruptStore, "truncated index file");
    };
    need(sizeof kMagic);
    if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw Error(Errc::CorruptStore, "bad index magic");
    pos += sizeof kMagic;
    need(12);
    const auto dim = get_le<std::uint32_t>(bytes, pos);
    const auto count = get_le<std::uint64_t>(bytes, pos);
    FlatIndex index(dim);
    std::unordered_set<std::string> seen;
    for (std::uint64_t i = 0; i < count; ++i) {
      need(4);
      const auto len = get_le<std::uint32_t>(bytes, pos);
      need(len);
      std::string id(reinterpret_cast<const char*>(bytes.data() + pos), len);
      pos += len;
      if (!seen.insert(id).second) throw Error(Errc::CorruptStore, "duplicate id in index: " + id);
      index.ids_.push_back(std::move(id));
    }
    const std::size_t floats = static_cast<std::size_t>(count) * dim;
    need(floats * 4);
    index.matrix_.resize(floats);
    for (auto& x : index.matrix_) x = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
    if (pos != bytes.size()) throw Error(Errc::CorruptStore, "trailing bytes in index file");
    return index;
  }

  friend bool operator==(const FlatIndex&, const FlatIndex&) = default;

 private:
  static constexpr char kMagic[8] = {'V', 'O', 'X', 'I', 'D', 'X', '1', '\0'};

  template <typename T>
  static void put_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
  template <typename T>
  static T get_le(std::span<const std::uint8_t> bytes, std::size_t& pos) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[pos + i]) << (8 * i);
    pos += sizeof(T);
    return v;
  }

  std::size_t dim_ = kDefaultDim;
  std::vector<std::string> ids_;
  std::vector<float> matrix_;
};

}  // namespace voxrag
