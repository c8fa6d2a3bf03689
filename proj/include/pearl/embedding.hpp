#pragma once

// Embedding vectors, their keys, and the PRLE store format.
//
// Key text is "<episode>/<frame>/<tag>" with tag one of
//
//   full                      whole frame
//   grid2:<0..3>              cell of the 2x2 grid, row-major
//   grid4:<0..15>             cell of the 4x4 grid, row-major
//   masked:diff | masked:flow frame multiplied by an attention mask
//   aug:<kinds>:<view>        augmented view; kinds is a '-'-joined subset of
//                             crop, jitter, blur in that order
//   composed                  a whole composed representation
//
// PRLE layout (little-endian): "PRLE", u16 version, u32 width, u64 count,
// then per record u16 key length, key bytes, width x f32. Records are sorted
// by key bytes and keys are unique.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pearl/binary_io.hpp"
#include "pearl/errors.hpp"

namespace pearl {

struct Embedding {
  std::vector<float> values;

  std::size_t width() const noexcept { return values.size(); }
  bool operator==(const Embedding&) const = default;
};

namespace detail {

inline bool is_uint(std::string_view s) {
  return !s.empty() && s.size() <= 19 &&
         std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

inline std::uint64_t to_uint(std::string_view s) {
  std::uint64_t v = 0;
  for (char c : s) v = v * 10 + static_cast<std::uint64_t>(c - '0');
  return v;
}

}  // namespace detail

inline bool is_valid_tag(std::string_view tag) {
  if (tag == "full" || tag == "composed" || tag == "masked:diff" || tag == "masked:flow") {
    return true;
  }
  for (auto [prefix, cells] : {std::pair<std::string_view, std::uint64_t>{"grid2:", 4},
                               {"grid4:", 16}}) {
    if (tag.starts_with(prefix)) {
      const auto idx = tag.substr(prefix.size());
      return detail::is_uint(idx) && (idx.size() == 1 || idx[0] != '0') &&
             detail::to_uint(idx) < cells;
    }
  }
  if (tag.starts_with("aug:")) {
    const auto rest = tag.substr(4);
    const auto colon = rest.find(':');
    if (colon == std::string_view::npos) return false;
    const auto view = rest.substr(colon + 1);
    if (!detail::is_uint(view) || (view.size() > 1 && view[0] == '0')) return false;
    std::string_view kinds = rest.substr(0, colon);
    constexpr std::string_view order[] = {"crop", "jitter", "blur"};
    std::size_t next = 0;
    bool any = false;
    while (!kinds.empty()) {
      const auto dash = kinds.find('-');
      const auto kind = kinds.substr(0, dash);
      bool matched = false;
      for (; next < 3; ++next) {
        if (order[next] == kind) {
          matched = true;
          ++next;
          break;
        }
      }
      if (!matched) return false;
      any = true;
      if (dash == std::string_view::npos) break;
      kinds = kinds.substr(dash + 1);
      if (kinds.empty()) return false;
    }
    return any;
  }
  return false;
}

struct EmbeddingKey {
  std::size_t episode = 0;
  std::size_t frame = 0;
  std::string tag = "full";

  std::string str() const {
    return std::to_string(episode) + "/" + std::to_string(frame) + "/" + tag;
  }

  static EmbeddingKey parse(std::string_view text) {
    const auto a = text.find('/');
    const auto b = a == std::string_view::npos ? a : text.find('/', a + 1);
    if (b == std::string_view::npos) {
      throw FormatError("malformed embedding key '" + std::string(text) + "'");
    }
    const auto ep = text.substr(0, a);
    const auto fr = text.substr(a + 1, b - a - 1);
    EmbeddingKey k{0, 0, std::string(text.substr(b + 1))};
    if (!detail::is_uint(ep) || !detail::is_uint(fr) || !is_valid_tag(k.tag)) {
      throw FormatError("malformed embedding key '" + std::string(text) + "'");
    }
    k.episode = detail::to_uint(ep);
    k.frame = detail::to_uint(fr);
    if (k.str() != text) {
      throw FormatError("non-canonical embedding key '" + std::string(text) + "'");
    }
    return k;
  }

  auto operator<=>(const EmbeddingKey&) const = default;
};

inline bool is_valid_key(std::string_view text) {
  try {
    EmbeddingKey::parse(text);
    return true;
  } catch (const FormatError&) {
    return false;
  }
}

inline constexpr char kEmbeddingMagic[4] = {'P', 'R', 'L', 'E'};
inline constexpr std::uint16_t kEmbeddingVersion = 1;

// Read-only keyed embeddings of one width, ordered by key text.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::uint32_t width) : width_(width) {}

  std::uint32_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return records_.size(); }
  const std::map<std::string, Embedding>& records() const noexcept { return records_; }

  const Embedding* find(const std::string& key) const {
    auto it = records_.find(key);
    return it == records_.end() ? nullptr : &it->second;
  }
  const Embedding* find(const EmbeddingKey& key) const { return find(key.str()); }

  bool operator==(const EmbeddingStore&) const = default;

 private:
  friend EmbeddingStore decode_embeddings(const std::vector<std::uint8_t>&);
  std::uint32_t width_ = 0;
  std::map<std::string, Embedding> records_;
};

using EmbeddingEntry = std::pair<EmbeddingKey, Embedding>;

// Sorts entries by key text and serializes them. `width` is required when
// entries is empty and otherwise must agree with every entry.
inline std::vector<std::uint8_t> encode_embeddings(std::vector<EmbeddingEntry> entries,
                                                   std::optional<std::uint32_t> width = {}) {
  std::vector<std::pair<std::string, const Embedding*>> keyed;
  keyed.reserve(entries.size());
  for (const auto& [k, e] : entries) {
    if (!is_valid_tag(k.tag)) throw FormatError("invalid embedding tag '" + k.tag + "'");
    keyed.emplace_back(k.str(), &e);
  }
  std::sort(keyed.begin(), keyed.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < keyed.size(); ++i) {
    if (keyed[i].first == keyed[i - 1].first) {
      throw ContractError("duplicate embedding key '" + keyed[i].first + "'");
    }
  }
  std::uint32_t w = width.value_or(0);
  if (!width) {
    if (keyed.empty()) throw ContractError("width required to write an empty embedding file");
    w = static_cast<std::uint32_t>(keyed.front().second->width());
  }
  io::ByteWriter out;
  out.put_bytes(std::string_view(kEmbeddingMagic, 4));
  out.put_u16(kEmbeddingVersion);
  out.put_u32(w);
  out.put_u64(keyed.size());
  for (const auto& [key, e] : keyed) {
    if (e->width() != w) {
      throw DimensionError("embedding '" + key + "' has width " + std::to_string(e->width()) +
                           ", file width is " + std::to_string(w));
    }
    if (key.size() > 0xffff) throw ContractError("embedding key too long");
    out.put_u16(static_cast<std::uint16_t>(key.size()));
    out.put_bytes(key);
    for (float v : e->values) out.put_f32(v);
  }
  return out.bytes();
}

inline EmbeddingStore decode_embeddings(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes);
  if (r.remaining() < 4 || r.bytes(4, "magic") != std::string_view(kEmbeddingMagic, 4)) {
    throw FormatError("not a PRLE embedding file (bad magic)");
  }
  const std::uint16_t version = r.u16("version");
  if (version != kEmbeddingVersion) {
    throw FormatError("unsupported PRLE version " + std::to_string(version));
  }
  EmbeddingStore store(r.u32("width"));
  const std::uint64_t count = r.u64("record count");
  std::string previous;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t record_start = r.offset();
    const std::uint16_t len = r.u16("key length");
    std::string key = r.bytes(len, "key");
    if (!is_valid_key(key)) {
      throw CorruptionError("invalid key in record " + std::to_string(i), record_start);
    }
    if (i > 0 && key <= previous) {
      throw CorruptionError("keys not strictly ascending at '" + key + "'", record_start);
    }
    Embedding e;
    e.values.resize(store.width_);
    for (float& v : e.values) v = r.f32("embedding values");
    previous = key;
    store.records_.emplace(std::move(key), std::move(e));
  }
  if (r.remaining() != 0) {
    throw CorruptionError("trailing bytes after " + std::to_string(count) +
                              " records (width field inconsistent with record size?)",
                          r.offset());
  }
  return store;
}

inline void write_embeddings(const std::filesystem::path& path, std::vector<EmbeddingEntry> entries,
                             std::optional<std::uint32_t> width = {}) {
  io::write_file(path, encode_embeddings(std::move(entries), width));
}

inline EmbeddingStore read_embeddings(const std::filesystem::path& path) {
  return decode_embeddings(io::read_file(path));
}

}  // namespace pearl
