#pragma once

#include "coreset/dataset.hpp"
#include "coreset/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace coreset {

inline constexpr const char* kToolVersion = "0.1.0";

enum class Strategy { face_nms, away_center, sim_threshold, global_random, identity_random, k_center, score_file };

enum class ScoreOrder { higher_score_first, lower_score_first };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::face_nms: return "face_nms";
    case Strategy::away_center: return "away_center";
    case Strategy::sim_threshold: return "sim_threshold";
    case Strategy::global_random: return "global_random";
    case Strategy::identity_random: return "identity_random";
    case Strategy::k_center: return "k_center";
    case Strategy::score_file: return "score_file";
  }
  return "unknown";
}

inline Strategy parse_strategy(const std::string& s) {
  for (Strategy v : {Strategy::face_nms, Strategy::away_center, Strategy::sim_threshold, Strategy::global_random,
                     Strategy::identity_random, Strategy::k_center, Strategy::score_file}) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorKind::ConfigError, "unknown strategy '" + s + "'");
}

inline std::string to_string(ScoreOrder o) {
  return o == ScoreOrder::higher_score_first ? "higher_score_first" : "lower_score_first";
}

inline ScoreOrder parse_score_order(const std::string& s) {
  if (s == "higher_score_first") return ScoreOrder::higher_score_first;
  if (s == "lower_score_first") return ScoreOrder::lower_score_first;
  throw Error(ErrorKind::ConfigError, "unknown score order '" + s + "'");
}

constexpr bool uses_threshold(Strategy s) noexcept {
  return s == Strategy::face_nms || s == Strategy::sim_threshold;
}

constexpr bool uses_ratio(Strategy s) noexcept { return !uses_threshold(s); }

constexpr bool is_randomized(Strategy s) noexcept {
  return s == Strategy::sim_threshold || s == Strategy::global_random || s == Strategy::identity_random;
}

struct SamplerConfig {
  Strategy strategy = Strategy::face_nms;
  std::optional<double> n_t;
  std::optional<double> ratio;
  std::uint64_t seed = 0;
  std::optional<std::string> score_path;
  std::optional<ScoreOrder> order;
  std::size_t k_center_cap = 4096;

  /// Parameters must be present exactly when the strategy needs them.
  void validate() const {
    const std::string name = to_string(strategy);
    if (uses_threshold(strategy) != n_t.has_value())
      throw Error(ErrorKind::ConfigError, name + (n_t ? " does not take a threshold" : " requires a threshold (nt)"));
    if (uses_ratio(strategy) != ratio.has_value())
      throw Error(ErrorKind::ConfigError, name + (ratio ? " does not take a ratio" : " requires a ratio"));
    if (n_t && !(std::isfinite(*n_t) && *n_t >= -1.0))
      throw Error(ErrorKind::ConfigError, "threshold must be a finite value >= -1");
    if (ratio && !(*ratio > 0.0 && *ratio <= 1.0)) throw Error(ErrorKind::ConfigError, "ratio must be in (0, 1]");
    const bool scored = strategy == Strategy::score_file;
    if (scored != score_path.has_value() || scored != order.has_value())
      throw Error(ErrorKind::ConfigError, scored ? "score_file requires a score path and an order"
                                                 : name + " does not take a score path or order");
  }
};

/// The retained faces of a dataset, keyed by identity_id (sorted), each list
/// strictly increasing.
struct SelectionManifest {
  std::uint64_t dataset_fingerprint = 0;
  SamplerConfig sampler;
  std::map<std::string, std::vector<std::uint32_t>> retained;
  std::size_t retained_total = 0;
  std::size_t original_total = 0;
  double ratio = 0.0;

  /// Sorts each retained list and recomputes the totals.
  void canonicalize(std::size_t original) {
    retained_total = 0;
    for (auto& [id, indices] : retained) {
      std::sort(indices.begin(), indices.end());
      retained_total += indices.size();
    }
    original_total = original;
    ratio = original == 0 ? 0.0 : static_cast<double>(retained_total) / static_cast<double>(original);
  }

  void validate(const Dataset& ds) const {
    if (dataset_fingerprint != ds.fingerprint())
      throw Error(ErrorKind::FingerprintMismatch, "manifest was built for a different dataset");
    std::size_t total = 0;
    for (const auto& [id, indices] : retained) {
      const IdentityGroup* g = ds.find(id);
      if (g == nullptr) throw Error(ErrorKind::UnknownIdentity, "manifest names unknown identity '" + id + "'");
      if (indices.empty()) throw Error(ErrorKind::InvalidManifest, "identity '" + id + "' retains no faces");
      auto face = g->faces.begin();
      for (std::size_t i = 0; i < indices.size(); ++i) {
        if (i > 0 && indices[i] <= indices[i - 1])
          throw Error(ErrorKind::InvalidManifest, "identity '" + id + "': indices not strictly increasing");
        while (face != g->faces.end() && face->index < indices[i]) ++face;
        if (face == g->faces.end() || face->index != indices[i])
          throw Error(ErrorKind::UnknownFaceIndex,
                      "identity '" + id + "' has no face " + std::to_string(indices[i]));
      }
      total += indices.size();
    }
    if (retained.size() != ds.groups().size())
      throw Error(ErrorKind::InvalidManifest, "manifest does not cover every identity");
    if (total != retained_total || original_total != ds.face_count())
      throw Error(ErrorKind::InvalidManifest, "manifest totals are inconsistent with its lists");
  }
};

inline std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

inline std::uint64_t parse_fingerprint_hex(const std::string& s) {
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdef") != std::string::npos)
    throw Error(ErrorKind::FormatError, "fingerprint must be 16 lowercase hex digits");
  return std::stoull(s, nullptr, 16);
}

inline nlohmann::json to_json(const SamplerConfig& c) {
  nlohmann::json j;
  j["strategy"] = to_string(c.strategy);
  j["seed"] = c.seed;
  if (c.n_t) j["nt"] = *c.n_t;
  if (c.ratio) j["ratio"] = *c.ratio;
  if (c.score_path) j["score_path"] = *c.score_path;
  if (c.order) j["order"] = to_string(*c.order);
  if (c.strategy == Strategy::k_center) j["k_center_cap"] = c.k_center_cap;
  return j;
}

inline SamplerConfig sampler_config_from_json(const nlohmann::json& j) {
  SamplerConfig c;
  c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("nt")) c.n_t = j["nt"].get<double>();
  if (j.contains("ratio")) c.ratio = j["ratio"].get<double>();
  if (j.contains("score_path")) c.score_path = j["score_path"].get<std::string>();
  if (j.contains("order")) c.order = parse_score_order(j["order"].get<std::string>());
  if (j.contains("k_center_cap")) c.k_center_cap = j["k_center_cap"].get<std::size_t>();
  return c;
}

inline nlohmann::json to_json(const SelectionManifest& m) {
  nlohmann::json ids = nlohmann::json::object();
  for (const auto& [id, indices] : m.retained) ids[id] = indices;
  return {
      {"tool_version", kToolVersion},
      {"dataset_fingerprint", fingerprint_hex(m.dataset_fingerprint)},
      {"sampler", to_json(m.sampler)},
      {"identities", std::move(ids)},
      {"totals", {{"retained", m.retained_total}, {"original", m.original_total}, {"ratio", m.ratio}}},
  };
}

inline SelectionManifest manifest_from_json(const nlohmann::json& j) {
  try {
    SelectionManifest m;
    m.dataset_fingerprint = parse_fingerprint_hex(j.at("dataset_fingerprint").get<std::string>());
    m.sampler = sampler_config_from_json(j.at("sampler"));
    for (const auto& [id, indices] : j.at("identities").items())
      m.retained[id] = indices.get<std::vector<std::uint32_t>>();
    const auto& totals = j.at("totals");
    m.retained_total = totals.at("retained").get<std::size_t>();
    m.original_total = totals.at("original").get<std::size_t>();
    m.ratio = totals.at("ratio").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("malformed manifest: ") + e.what());
  }
}

/// Pretty JSON with sorted keys (nlohmann::json objects are key-ordered).
inline std::string dump_manifest(const SelectionManifest& m) { return to_json(m).dump(2) + "\n"; }

} // namespace coreset
