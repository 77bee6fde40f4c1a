#pragma once

#include "coreset/dataset.hpp"
#include "coreset/error.hpp"
#include "coreset/manifest.hpp"
#include "coreset/parallel.hpp"
#include "coreset/rng.hpp"
#include "coreset/store.hpp"
#include "coreset/vecmath.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace coreset {

/// Unit-length class templates: each train identity's mean direction, in
/// identity_id order.
struct ClassTemplates {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> directions;

  explicit ClassTemplates(const Dataset& train) {
    for (std::size_t pos : train.sorted_order()) {
      const IdentityGroup& g = train.groups()[pos];
      ClusterCenter c = cluster_center(g.features());
      const double n = center_norm(c);
      if (n < kZeroNormThreshold)
        throw Error(ErrorKind::DegenerateCenter, "identity '" + g.id + "' has a zero-norm class mean");
      for (double& v : c.mean) v /= n;
      ids.push_back(g.id);
      directions.push_back(std::move(c.mean));
    }
  }

  std::size_t size() const noexcept { return ids.size(); }

  std::size_t position(const std::string& id) const {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) throw Error(ErrorKind::MissingIdentity, "identity '" + id + "' is not in the train set");
    return static_cast<std::size_t>(it - ids.begin());
  }

  double score(const FeatureVector& f, std::size_t t) const {
    return clamp_unit(dot(f.values(), std::span<const double>(directions[t])));
  }
};

struct Probe {
  const FeatureVector* feature;
  std::size_t label;  // template position
};

/// Holdout faces in canonical (identity_id, face_index) order, so results do
/// not depend on how the holdout file happens to be ordered.
inline std::vector<Probe> canonical_probes(const Dataset& holdout, const ClassTemplates& templates) {
  if (holdout.dim() != templates.directions.front().size())
    throw Error(ErrorKind::DimensionMismatch, "train and holdout dimensions differ");
  std::vector<Probe> probes;
  for (std::size_t pos : holdout.sorted_order()) {
    const IdentityGroup& g = holdout.groups()[pos];
    const std::size_t label = templates.position(g.id);
    for (const Face& f : g.faces) probes.push_back({&f.feature, label});
  }
  return probes;
}

/// Nearest-class-mean rank-1 accuracy. Ties go to the smaller identity_id.
inline double ncm_identify(const Dataset& train, const Dataset& holdout, unsigned threads = 1) {
  const ClassTemplates templates(train);
  const auto probes = canonical_probes(holdout, templates);
  std::vector<char> correct(probes.size(), 0);
  parallel_for(probes.size(), threads, [&](std::size_t i) {
    std::size_t best = 0;
    double best_score = templates.score(*probes[i].feature, 0);
    for (std::size_t t = 1; t < templates.size(); ++t) {
      const double s = templates.score(*probes[i].feature, t);
      if (s > best_score) {
        best_score = s;
        best = t;
      }
    }
    correct[i] = best == probes[i].label;
  });
  std::size_t hits = 0;
  for (char c : correct) hits += static_cast<std::size_t>(c);
  return static_cast<double>(hits) / static_cast<double>(probes.size());
}

struct VerifyOptions {
  std::vector<double> far_levels{1e-2, 1e-3};
  std::size_t pair_budget = 1'000'000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct VerifyResult {
  std::vector<std::pair<double, double>> tar_at_far;  // (far, tar), in far_levels order
  std::vector<double> thresholds;
  std::size_t genuine_pairs = 0;
  std::size_t impostor_pairs = 0;
};

/// Threshold for one FAR level: with impostor scores sorted descending and
/// k = floor(far * M), the threshold is the (k+1)-th largest score, so exactly
/// k impostors (absent ties) score strictly above it.
inline double far_threshold(const std::vector<double>& impostor_desc, double far) {
  const double allowed = far * static_cast<double>(impostor_desc.size());
  const auto k = static_cast<std::size_t>(std::floor(allowed + 1e-9));
  if (k < 1 || k >= impostor_desc.size()) {
    throw Error(ErrorKind::InsufficientPairs, "FAR " + std::to_string(far) + " needs at least " +
                                                  std::to_string(static_cast<std::size_t>(std::ceil(1.0 / far))) +
                                                  " impostor pairs, have " + std::to_string(impostor_desc.size()));
  }
  return impostor_desc[k];
}

/// k distinct values from [0, n), sorted (Floyd's algorithm).
inline std::vector<std::uint64_t> sample_distinct(std::uint64_t n, std::uint64_t k, SplitMix64& rng) {
  std::vector<std::uint64_t> out;
  if (k >= n) {
    out.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) out[i] = i;
    return out;
  }
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(k * 2);
  for (std::uint64_t j = n - k; j < n; ++j) {
    const std::uint64_t t = rng.below(j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  out.assign(chosen.begin(), chosen.end());
  std::sort(out.begin(), out.end());
  return out;
}

/// Probe-versus-template verification. A genuine pair is a holdout face and
/// its own identity's train template; an impostor pair is a holdout face and
/// any other identity's template. Score = cosine. Up to pair_budget pairs of
/// each kind are drawn without replacement.
inline VerifyResult verify(const Dataset& train, const Dataset& holdout, const VerifyOptions& opts) {
  if (opts.far_levels.empty()) throw Error(ErrorKind::ConfigError, "no FAR levels given");
  for (double far : opts.far_levels)
    if (!(far > 0.0 && far < 1.0)) throw Error(ErrorKind::ConfigError, "FAR levels must lie in (0, 1)");
  const ClassTemplates templates(train);
  if (templates.size() < 2) throw Error(ErrorKind::InsufficientPairs, "verification needs at least 2 identities");
  const auto probes = canonical_probes(holdout, templates);

  const std::uint64_t others = templates.size() - 1;
  auto genuine_rng = make_stream(opts.seed, "verify/genuine");
  auto impostor_rng = make_stream(opts.seed, "verify/impostor");
  const auto genuine_ids = sample_distinct(probes.size(), opts.pair_budget, genuine_rng);
  const auto impostor_ids = sample_distinct(probes.size() * others, opts.pair_budget, impostor_rng);

  std::vector<double> genuine(genuine_ids.size());
  std::vector<double> impostor(impostor_ids.size());
  parallel_for(genuine.size(), opts.threads, [&](std::size_t i) {
    const Probe& p = probes[genuine_ids[i]];
    genuine[i] = templates.score(*p.feature, p.label);
  });
  parallel_for(impostor.size(), opts.threads, [&](std::size_t i) {
    const Probe& p = probes[impostor_ids[i] / others];
    std::size_t t = impostor_ids[i] % others;
    if (t >= p.label) ++t;
    impostor[i] = templates.score(*p.feature, t);
  });
  std::sort(impostor.begin(), impostor.end(), std::greater<>());

  VerifyResult r;
  r.genuine_pairs = genuine.size();
  r.impostor_pairs = impostor.size();
  for (double far : opts.far_levels) {
    const double thr = far_threshold(impostor, far);
    const auto accepted = std::count_if(genuine.begin(), genuine.end(), [&](double s) { return s > thr; });
    r.thresholds.push_back(thr);
    r.tar_at_far.emplace_back(far, static_cast<double>(accepted) / static_cast<double>(genuine.size()));
  }
  return r;
}

struct EvalReport {
  std::string strategy;
  double ratio = 1.0;
  double rank1_accuracy = 0.0;
  VerifyResult verification;
};

inline EvalReport evaluate(const std::string& label, double ratio, const Dataset& train, const Dataset& holdout,
                           const VerifyOptions& opts) {
  return {label, ratio, ncm_identify(train, holdout, opts.threads), verify(train, holdout, opts)};
}

/// One report for the full set followed by one per manifest.
inline std::vector<EvalReport> compare(const Dataset& full, const std::vector<SelectionManifest>& manifests,
                                       const Dataset& holdout, const VerifyOptions& opts) {
  std::vector<EvalReport> table;
  table.push_back(evaluate("full", 1.0, full, holdout, opts));
  for (const SelectionManifest& m : manifests)
    table.push_back(evaluate(to_string(m.sampler.strategy), m.ratio, apply_manifest(full, m), holdout, opts));
  return table;
}

inline std::string format_far(double far) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", far);
  return buf;
}

/// Columns: strategy, ratio, rank1, then tar@far=<level> per level.
inline std::string compare_csv(const std::vector<EvalReport>& table) {
  std::string out = "strategy,ratio,rank1";
  if (!table.empty())
    for (const auto& [far, tar] : table.front().verification.tar_at_far) out += ",tar@far=" + format_far(far);
  out += '\n';
  char buf[64];
  for (const EvalReport& r : table) {
    out += r.strategy;
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f", r.ratio, r.rank1_accuracy);
    out += buf;
    for (const auto& [far, tar] : r.verification.tar_at_far) {
      std::snprintf(buf, sizeof(buf), ",%.6f", tar);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

} // namespace coreset
