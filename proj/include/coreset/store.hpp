#pragma once

#include "coreset/dataset.hpp"
#include "coreset/error.hpp"
#include "coreset/manifest.hpp"

#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

namespace coreset {

enum class Format { binary, jsonl };

inline Format parse_format(const std::string& s) {
  if (s == "binary") return Format::binary;
  if (s == "jsonl") return Format::jsonl;
  throw Error(ErrorKind::ConfigError, "unknown format '" + s + "' (expected binary or jsonl)");
}

/// ".jsonl" selects JSONL; anything else is the binary format.
inline Format format_for_path(const std::filesystem::path& p) {
  return p.extension() == ".jsonl" ? Format::jsonl : Format::binary;
}

struct ReadOptions {
  bool normalize = false;  // renormalize every feature instead of rejecting non-unit ones
};

namespace detail {

class ByteReader {
public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::string_view take(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) throw Error(ErrorKind::FormatError, std::string("truncated file while reading ") + what);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  template <typename UInt>
  UInt uint(const char* what) {
    auto raw = take(sizeof(UInt), what);
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(static_cast<unsigned char>(raw[i])) << (8 * i);
    return v;
  }

  float f32(const char* what) { return std::bit_cast<float>(uint<std::uint32_t>(what)); }

  bool done() const noexcept { return pos_ == data_.size(); }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline FeatureVector ingest(std::vector<float> values, const ReadOptions& opts, const std::string& id,
                            std::uint32_t index) {
  if (!opts.normalize) return FeatureVector(std::move(values));
  try {
    return normalize(values);
  } catch (const Error& e) {
    throw Error(e.kind(), "identity '" + id + "' face " + std::to_string(index) + ": " + e.what());
  }
}

struct StringSink {
  std::string& out;
  void operator()(const char* data, std::size_t n) { out.append(data, n); }
};

} // namespace detail

inline std::string encode_binary(const Dataset& ds) {
  std::string out;
  detail::StringSink sink{out};
  detail::encode_binary(ds.dim(), ds.groups(), sink);
  return out;
}

inline Dataset decode_binary(std::string_view bytes, const ReadOptions& opts = {}, std::string source = {}) {
  detail::ByteReader in(bytes);
  if (in.take(4, "magic") != std::string_view(detail::kMagic, 4)) throw Error(ErrorKind::FormatError, "bad magic bytes");
  const auto version = in.uint<std::uint16_t>("version");
  if (version != detail::kVersion) throw Error(ErrorKind::FormatError, "unsupported version " + std::to_string(version));
  const auto dim = in.uint<std::uint32_t>("dim");
  const auto group_count = in.uint<std::uint32_t>("group count");
  if (dim < 2) throw Error(ErrorKind::FormatError, "dimension must be at least 2");

  std::vector<IdentityGroup> groups;
  groups.reserve(std::min<std::size_t>(group_count, in.remaining() / 6));
  for (std::uint32_t g = 0; g < group_count; ++g) {
    IdentityGroup group;
    const auto id_len = in.uint<std::uint16_t>("identity id length");
    group.id = std::string(in.take(id_len, "identity id"));
    const auto face_count = in.uint<std::uint32_t>("face count");
    const std::size_t face_bytes = 4 + 4 * static_cast<std::size_t>(dim);
    if (in.remaining() / face_bytes < face_count) throw Error(ErrorKind::FormatError, "truncated file in identity '" + group.id + "'");
    group.faces.reserve(face_count);
    for (std::uint32_t f = 0; f < face_count; ++f) {
      const auto index = in.uint<std::uint32_t>("face index");
      std::vector<float> values(dim);
      for (auto& v : values) v = in.f32("feature");
      group.faces.push_back({index, detail::ingest(std::move(values), opts, group.id, index)});
    }
    groups.push_back(std::move(group));
  }
  if (!in.done()) throw Error(ErrorKind::FormatError, "trailing bytes after last identity");
  return Dataset(dim, std::move(groups), std::move(source));
}

/// One JSON object per identity: {"faces":[{"i":<index>,"v":[...]}],"id":"..."}.
inline std::string encode_jsonl(const Dataset& ds) {
  std::string out;
  for (const IdentityGroup& g : ds.groups()) {
    nlohmann::json faces = nlohmann::json::array();
    for (const Face& f : g.faces) {
      nlohmann::json v = nlohmann::json::array();
      for (float x : f.feature.values()) v.push_back(static_cast<double>(x));
      faces.push_back({{"i", f.index}, {"v", std::move(v)}});
    }
    nlohmann::json line = {{"id", g.id}, {"faces", std::move(faces)}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

inline Dataset decode_jsonl(std::string_view text, const ReadOptions& opts = {}, std::string source = {}) {
  std::vector<IdentityGroup> groups;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      IdentityGroup group;
      group.id = j.at("id").get<std::string>();
      for (const auto& face : j.at("faces")) {
        const auto index = face.at("i").get<std::uint32_t>();
        auto values = face.at("v").get<std::vector<float>>();
        if (dim == 0) dim = values.size();
        group.faces.push_back({index, detail::ingest(std::move(values), opts, group.id, index)});
      }
      groups.push_back(std::move(group));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::FormatError, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (groups.empty()) throw Error(ErrorKind::FormatError, "no identities in JSONL input");
  if (dim == 0) throw Error(ErrorKind::FormatError, "cannot infer dimension from JSONL input");
  return Dataset(dim, std::move(groups), std::move(source));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "' for reading");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::IoError, "failed reading '" + path.string() + "'");
  return data;
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorKind::IoError, "failed writing '" + path.string() + "'");
}

inline Dataset read_dataset(const std::filesystem::path& path, Format format, const ReadOptions& opts = {}) {
  const std::string data = read_file(path);
  return format == Format::binary ? decode_binary(data, opts, path.string()) : decode_jsonl(data, opts, path.string());
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& path, Format format) {
  write_file(path, format == Format::binary ? encode_binary(ds) : encode_jsonl(ds));
}

inline SelectionManifest read_manifest(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, "manifest '" + path.string() + "': " + e.what());
  }
  return manifest_from_json(j);
}

inline void write_manifest(const SelectionManifest& m, const std::filesystem::path& path) {
  write_file(path, dump_manifest(m));
}

/// Restricts ds to the faces retained by m, preserving group and face order.
inline Dataset apply_manifest(const Dataset& ds, const SelectionManifest& m) {
  m.validate(ds);
  std::vector<IdentityGroup> groups;
  groups.reserve(ds.groups().size());
  for (const IdentityGroup& g : ds.groups()) {
    const auto& keep = m.retained.at(g.id);
    IdentityGroup out{g.id, {}};
    out.faces.reserve(keep.size());
    auto k = keep.begin();
    for (const Face& f : g.faces) {
      if (k != keep.end() && *k == f.index) {
        out.faces.push_back(f);
        ++k;
      }
    }
    groups.push_back(std::move(out));
  }
  return Dataset(ds.dim(), std::move(groups), ds.source());
}

} // namespace coreset
