#pragma once

#include "coreset/error.hpp"
#include "coreset/rng.hpp"
#include "coreset/vecmath.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace coreset {

struct Face {
  std::uint32_t index = 0;
  FeatureVector feature;

  friend bool operator==(const Face&, const Face&) = default;
};

struct IdentityGroup {
  std::string id;
  std::vector<Face> faces;  // strictly increasing index

  std::size_t size() const noexcept { return faces.size(); }

  std::vector<FeatureVector> features() const {
    std::vector<FeatureVector> out;
    out.reserve(faces.size());
    for (const Face& f : faces) out.push_back(f.feature);
    return out;
  }

  friend bool operator==(const IdentityGroup&, const IdentityGroup&) = default;
};

namespace detail {

/// Byte-level writer for the canonical little-endian layout:
///   "CNMS" | u16 version=1 | u32 dim | u32 group_count
///   per group: u16 id_len | id bytes | u32 face_count
///   per face:  u32 face_index | dim x f32
/// The same encoder drives file output and the fingerprint hash.
template <typename Sink>
class LittleEndianEncoder {
public:
  explicit LittleEndianEncoder(Sink& sink) : sink_(sink) {}

  void bytes(const char* data, std::size_t n) { sink_(data, n); }

  template <typename UInt>
  void uint(UInt v) {
    char buf[sizeof(UInt)];
    for (std::size_t i = 0; i < sizeof(UInt); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    sink_(buf, sizeof(UInt));
  }

  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }

private:
  Sink& sink_;
};

inline constexpr char kMagic[4] = {'C', 'N', 'M', 'S'};
inline constexpr std::uint16_t kVersion = 1;

template <typename Sink>
void encode_binary(std::size_t dim, const std::vector<IdentityGroup>& groups, Sink& sink) {
  LittleEndianEncoder<Sink> enc(sink);
  enc.bytes(kMagic, 4);
  enc.uint(kVersion);
  enc.uint(static_cast<std::uint32_t>(dim));
  enc.uint(static_cast<std::uint32_t>(groups.size()));
  for (const IdentityGroup& g : groups) {
    enc.uint(static_cast<std::uint16_t>(g.id.size()));
    enc.bytes(g.id.data(), g.id.size());
    enc.uint(static_cast<std::uint32_t>(g.faces.size()));
    for (const Face& f : g.faces) {
      enc.uint(f.index);
      for (float v : f.feature.values()) enc.f32(v);
    }
  }
}

struct FnvSink {
  std::uint64_t hash = kFnvOffset;
  void operator()(const char* data, std::size_t n) noexcept { hash = fnv1a(std::string_view(data, n), hash); }
};

} // namespace detail

inline std::uint64_t compute_fingerprint(std::size_t dim, const std::vector<IdentityGroup>& groups) {
  detail::FnvSink sink;
  detail::encode_binary(dim, groups, sink);
  return sink.hash;
}

/// An immutable, validated collection of identity groups. Construction
/// checks every structural invariant and computes the content fingerprint.
class Dataset {
public:
  static constexpr double kUnitTolerance = 1e-4;

  Dataset(std::size_t dim, std::vector<IdentityGroup> groups, std::string source = {})
      : dim_(dim), groups_(std::move(groups)), source_(std::move(source)) {
    validate();
    fingerprint_ = compute_fingerprint(dim_, groups_);
    by_id_.resize(groups_.size());
    std::iota(by_id_.begin(), by_id_.end(), std::size_t{0});
    std::sort(by_id_.begin(), by_id_.end(),
              [&](std::size_t a, std::size_t b) { return groups_[a].id < groups_[b].id; });
  }

  std::size_t dim() const noexcept { return dim_; }
  const std::vector<IdentityGroup>& groups() const noexcept { return groups_; }
  const std::string& source() const noexcept { return source_; }
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }

  /// Group positions ordered by identity_id.
  const std::vector<std::size_t>& sorted_order() const noexcept { return by_id_; }

  std::size_t face_count() const noexcept {
    std::size_t n = 0;
    for (const auto& g : groups_) n += g.faces.size();
    return n;
  }

  const IdentityGroup* find(std::string_view id) const {
    auto it = std::lower_bound(by_id_.begin(), by_id_.end(), id,
                               [&](std::size_t pos, std::string_view key) { return groups_[pos].id < key; });
    if (it == by_id_.end() || groups_[*it].id != id) return nullptr;
    return &groups_[*it];
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.dim_ == b.dim_ && a.groups_ == b.groups_;
  }

private:
  void validate() const {
    if (dim_ < 2) throw Error(ErrorKind::InvalidDataset, "dimension must be at least 2");
    if (dim_ > std::numeric_limits<std::uint32_t>::max())
      throw Error(ErrorKind::InvalidDataset, "dimension exceeds u32");
    if (groups_.empty()) throw Error(ErrorKind::InvalidDataset, "dataset has no identities");

    std::vector<std::string_view> ids;
    ids.reserve(groups_.size());
    for (const IdentityGroup& g : groups_) {
      if (g.id.size() > std::numeric_limits<std::uint16_t>::max())
        throw Error(ErrorKind::InvalidDataset, "identity id longer than 65535 bytes");
      if (g.faces.empty()) throw Error(ErrorKind::EmptyGroup, "identity '" + g.id + "' has no faces");
      for (std::size_t i = 0; i < g.faces.size(); ++i) {
        const Face& f = g.faces[i];
        if (i > 0 && f.index <= g.faces[i - 1].index) {
          throw Error(ErrorKind::InvalidDataset,
                      "identity '" + g.id + "': face indices not strictly increasing at face " +
                          std::to_string(f.index));
        }
        if (f.feature.dim() != dim_) {
          throw Error(ErrorKind::DimensionMismatch, "identity '" + g.id + "' face " + std::to_string(f.index) +
                                                        " has dim " + std::to_string(f.feature.dim()));
        }
        for (float v : f.feature.values()) {
          if (!std::isfinite(v)) {
            throw Error(ErrorKind::NonFinite,
                        "identity '" + g.id + "' face " + std::to_string(f.index) + " has a non-finite component");
          }
        }
        if (!f.feature.is_unit(kUnitTolerance)) {
          throw Error(ErrorKind::NormError, "identity '" + g.id + "' face " + std::to_string(f.index) +
                                                " is not unit norm (norm " + std::to_string(f.feature.norm()) + ")");
        }
      }
      ids.push_back(g.id);
    }
    std::sort(ids.begin(), ids.end());
    auto dup = std::adjacent_find(ids.begin(), ids.end());
    if (dup != ids.end()) throw Error(ErrorKind::DuplicateIdentity, "identity '" + std::string(*dup) + "' repeated");
  }

  std::size_t dim_;
  std::vector<IdentityGroup> groups_;
  std::string source_;
  std::uint64_t fingerprint_ = 0;
  std::vector<std::size_t> by_id_;
};

} // namespace coreset
