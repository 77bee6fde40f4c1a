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
#include <filesystem>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace coreset {

using IndexList = std::vector<std::uint32_t>;

/// Similarity of every face to the group's cluster center, computed once from
/// the full group. A degenerate (zero) center yields all-equal scores, so any
/// ranking built on them falls back to face-index order.
inline std::vector<double> center_scores(const IdentityGroup& group) {
  if (group.faces.empty()) throw Error(ErrorKind::EmptyGroup, "identity '" + group.id + "' has no faces");
  const ClusterCenter center = cluster_center(group.features());
  std::vector<double> scores(group.faces.size(), 0.0);
  try {
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = center_similarity(group.faces[i].feature, center);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DegenerateCenter) throw;
    std::fill(scores.begin(), scores.end(), 0.0);
  }
  return scores;
}

/// Face positions ordered by ascending center similarity, ties by ascending
/// face index (positions are already index-sorted, so a stable sort suffices).
inline std::vector<std::size_t> rank_by_center(const IdentityGroup& group) {
  const auto scores = center_scores(group);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

namespace detail {

inline IndexList to_indices(const IdentityGroup& group, const std::vector<std::size_t>& positions) {
  IndexList out;
  out.reserve(positions.size());
  for (std::size_t p : positions) out.push_back(group.faces[p].index);
  return out;
}

inline void require_nonempty(const IdentityGroup& group) {
  if (group.faces.empty()) throw Error(ErrorKind::EmptyGroup, "identity '" + group.id + "' has no faces");
}

inline void require_ratio(double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw Error(ErrorKind::ConfigError, "ratio must be in (0, 1]");
}

} // namespace detail

/// Face-NMS. Repeatedly retain the remaining face least similar to the
/// cluster center, then drop every remaining face whose cosine to it is
/// >= n_t. Returns retained indices in selection order.
inline IndexList face_nms(const IdentityGroup& group, double n_t) {
  detail::require_nonempty(group);
  const auto order = rank_by_center(group);
  std::vector<char> alive(order.size(), 1);
  std::vector<std::size_t> kept;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!alive[r]) continue;
    const FeatureVector& picked = group.faces[order[r]].feature;
    kept.push_back(order[r]);
    for (std::size_t s = r + 1; s < order.size(); ++s) {
      if (alive[s] && cosine(picked, group.faces[order[s]].feature) >= n_t) alive[s] = 0;
    }
  }
  return detail::to_indices(group, kept);
}

/// The k = max(1, round(ratio * N)) faces farthest from the cluster center.
inline IndexList away_center(const IdentityGroup& group, double ratio) {
  detail::require_nonempty(group);
  detail::require_ratio(ratio);
  auto order = rank_by_center(group);
  order.resize(budget_for(ratio, order.size()));
  return detail::to_indices(group, order);
}

/// Random-order greedy suppression: visit faces in a shuffled order and keep
/// a face iff its cosine to every face kept so far is < n_t.
inline IndexList sim_threshold(const IdentityGroup& group, double n_t, SplitMix64& rng) {
  detail::require_nonempty(group);
  std::vector<std::size_t> visit(group.faces.size());
  std::iota(visit.begin(), visit.end(), std::size_t{0});
  shuffle(visit, rng);

  std::vector<std::size_t> kept;
  for (std::size_t p : visit) {
    const FeatureVector& f = group.faces[p].feature;
    bool legal = true;
    for (std::size_t q : kept) {
      if (cosine(f, group.faces[q].feature) >= n_t) {
        legal = false;
        break;
      }
    }
    if (legal) kept.push_back(p);
  }
  return detail::to_indices(group, kept);
}

/// Uniform sample of max(1, round(ratio * N)) faces: partial Fisher-Yates
/// from the front, for i < k swap(pos[i], pos[i + below(N - i)]).
inline IndexList identity_random(const IdentityGroup& group, double ratio, SplitMix64& rng) {
  detail::require_nonempty(group);
  detail::require_ratio(ratio);
  const std::size_t n = group.faces.size();
  const std::size_t k = budget_for(ratio, n);
  std::vector<std::size_t> pos(n);
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(pos[i], pos[i + rng.below(n - i)]);
  pos.resize(k);
  return detail::to_indices(group, pos);
}

inline constexpr std::size_t kDefaultKCenterCap = 4096;

/// Greedy max-min (k-center) selection over cosine distance 1 - cos, seeded
/// with the face farthest from the cluster center. Quadratic in N, hence
/// the size cap.
inline IndexList k_center(const IdentityGroup& group, double ratio, std::size_t cap = kDefaultKCenterCap) {
  detail::require_nonempty(group);
  detail::require_ratio(ratio);
  const std::size_t n = group.faces.size();
  if (n > cap) {
    throw Error(ErrorKind::GroupTooLarge, "identity '" + group.id + "' has " + std::to_string(n) +
                                              " faces, above the k-center cap of " + std::to_string(cap));
  }
  const std::size_t k = budget_for(ratio, n);

  std::vector<std::size_t> chosen{rank_by_center(group).front()};
  std::vector<char> selected(n, 0);
  std::vector<double> min_dist(n, 0.0);
  selected[chosen[0]] = 1;
  for (std::size_t p = 0; p < n; ++p) min_dist[p] = 1.0 - cosine(group.faces[p].feature, group.faces[chosen[0]].feature);

  while (chosen.size() < k) {
    std::size_t best = n;
    for (std::size_t p = 0; p < n; ++p) {
      if (!selected[p] && (best == n || min_dist[p] > min_dist[best])) best = p;
    }
    selected[best] = 1;
    chosen.push_back(best);
    for (std::size_t p = 0; p < n; ++p) {
      min_dist[p] = std::min(min_dist[p], 1.0 - cosine(group.faces[p].feature, group.faces[best].feature));
    }
  }
  return detail::to_indices(group, chosen);
}

namespace detail {

inline SelectionManifest make_manifest(const Dataset& ds, const SamplerConfig& config,
                                       std::vector<IndexList> per_group) {
  SelectionManifest m;
  m.dataset_fingerprint = ds.fingerprint();
  m.sampler = config;
  for (std::size_t pos : ds.sorted_order()) m.retained[ds.groups()[pos].id] = std::move(per_group[pos]);
  m.canonicalize(ds.face_count());
  return m;
}

} // namespace detail

/// Uniform sample of round(ratio * total) faces over the whole dataset.
/// Identities left empty get their most central face back; the surplus is then
/// trimmed, one random face at a time, from the currently largest identity
/// (ties by identity_id) so the budget holds whenever budget >= identities.
inline SelectionManifest global_random(const Dataset& ds, double ratio, std::uint64_t seed) {
  detail::require_ratio(ratio);
  const auto& groups = ds.groups();
  const auto& order = ds.sorted_order();

  std::vector<std::pair<std::size_t, std::size_t>> flat;  // (sorted rank, face position)
  flat.reserve(ds.face_count());
  for (std::size_t r = 0; r < order.size(); ++r)
    for (std::size_t f = 0; f < groups[order[r]].faces.size(); ++f) flat.emplace_back(r, f);

  const std::size_t total = flat.size();
  const std::size_t budget = std::min(total, round_half_up(ratio * static_cast<double>(total)));
  auto rng = make_stream(seed, "global_random");
  for (std::size_t i = 0; i < budget; ++i) std::swap(flat[i], flat[i + rng.below(total - i)]);

  std::vector<std::vector<std::size_t>> kept(order.size());
  for (std::size_t i = 0; i < budget; ++i) kept[flat[i].first].push_back(flat[i].second);

  std::size_t retained = budget;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!kept[r].empty()) continue;
    const auto scores = center_scores(groups[order[r]]);
    std::size_t best = 0;
    for (std::size_t f = 1; f < scores.size(); ++f)
      if (scores[f] > scores[best]) best = f;
    kept[r].push_back(best);
    ++retained;
  }

  const std::size_t target = std::max(budget, order.size());
  auto cmp = [](const std::pair<std::size_t, std::size_t>& a, const std::pair<std::size_t, std::size_t>& b) {
    return a.first != b.first ? a.first < b.first : a.second > b.second;
  };
  std::priority_queue<std::pair<std::size_t, std::size_t>, std::vector<std::pair<std::size_t, std::size_t>>, decltype(cmp)>
      largest(cmp);
  if (retained > target)
    for (std::size_t r = 0; r < order.size(); ++r) largest.emplace(kept[r].size(), r);
  while (retained > target) {
    const std::size_t r = largest.top().second;
    largest.pop();
    auto& list = kept[r];
    const std::size_t victim = rng.below(list.size());
    list[victim] = list.back();
    list.pop_back();
    --retained;
    largest.emplace(list.size(), r);
  }

  std::vector<IndexList> per_group(groups.size());
  for (std::size_t r = 0; r < order.size(); ++r) per_group[order[r]] = detail::to_indices(groups[order[r]], kept[r]);

  SamplerConfig config;
  config.strategy = Strategy::global_random;
  config.ratio = ratio;
  config.seed = seed;
  return detail::make_manifest(ds, config, std::move(per_group));
}

/// Per-face scores keyed by identity_id then face_index.
using ScoreTable = std::map<std::string, std::map<std::uint32_t, double>>;

/// CSV with header `identity_id,face_index,score`. The last two fields of a
/// row are the index and score; everything before them is the identity id.
inline ScoreTable parse_scores(std::string_view text) {
  ScoreTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto strip = [](std::string& s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  };
  if (!std::getline(in, line)) throw Error(ErrorKind::MalformedScoreFile, "empty score file");
  ++line_no;
  strip(line);
  if (line != "identity_id,face_index,score")
    throw Error(ErrorKind::MalformedScoreFile, "expected header 'identity_id,face_index,score'");

  while (std::getline(in, line)) {
    ++line_no;
    strip(line);
    if (line.empty()) continue;
    const auto bad = [&](const std::string& why) {
      return Error(ErrorKind::MalformedScoreFile, "line " + std::to_string(line_no) + ": " + why);
    };
    const auto c2 = line.rfind(',');
    const auto c1 = c2 == std::string::npos || c2 == 0 ? std::string::npos : line.rfind(',', c2 - 1);
    if (c1 == std::string::npos) throw bad("expected three comma-separated fields");
    const std::string id = line.substr(0, c1);
    const std::string index_text = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string score_text = line.substr(c2 + 1);

    std::size_t used = 0;
    unsigned long index = 0;
    double score = 0.0;
    try {
      index = std::stoul(index_text, &used);
      if (used != index_text.size() || index > 0xffffffffUL || index_text.front() == '-') throw std::invalid_argument("");
      score = std::stod(score_text, &used);
      if (used != score_text.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw bad("cannot parse face_index/score");
    }
    if (!std::isfinite(score)) throw bad("score is not finite");
    if (!table[id].emplace(static_cast<std::uint32_t>(index), score).second)
      throw bad("duplicate score for identity '" + id + "' face " + index_text);
  }
  return table;
}

inline ScoreTable read_scores(const std::filesystem::path& path) { return parse_scores(read_file(path)); }

/// Per-identity top-k by score. Ties resolve to the lower face index.
inline IndexList score_select_group(const IdentityGroup& group, const ScoreTable& scores, double ratio,
                                    ScoreOrder order) {
  detail::require_nonempty(group);
  detail::require_ratio(ratio);
  const auto row = scores.find(group.id);
  std::vector<double> s(group.faces.size());
  for (std::size_t p = 0; p < s.size(); ++p) {
    const std::uint32_t index = group.faces[p].index;
    if (row == scores.end() || !row->second.contains(index))
      throw Error(ErrorKind::MissingScore, "no score for identity '" + group.id + "' face " + std::to_string(index));
    const double v = row->second.at(index);
    s[p] = order == ScoreOrder::higher_score_first ? -v : v;
  }
  std::vector<std::size_t> pos(s.size());
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
  pos.resize(budget_for(ratio, pos.size()));
  return detail::to_indices(group, pos);
}

inline SelectionManifest score_select(const Dataset& ds, const ScoreTable& scores, double ratio, ScoreOrder order,
                                      unsigned threads = 1) {
  std::vector<IndexList> per_group(ds.groups().size());
  parallel_for(per_group.size(), threads,
               [&](std::size_t i) { per_group[i] = score_select_group(ds.groups()[i], scores, ratio, order); });
  SamplerConfig config;
  config.strategy = Strategy::score_file;
  config.ratio = ratio;
  config.order = order;
  config.score_path = std::string{};
  return detail::make_manifest(ds, config, std::move(per_group));
}

inline SelectionManifest score_select(const Dataset& ds, const std::filesystem::path& score_path, double ratio,
                                      ScoreOrder order, unsigned threads = 1) {
  auto m = score_select(ds, read_scores(score_path), ratio, order, threads);
  m.sampler.score_path = score_path.string();
  return m;
}

/// Dispatches a configured strategy over the dataset. Per-identity strategies
/// run in parallel; random ones draw from the stream "<strategy>/<identity_id>".
/// The manifest does not depend on `threads`.
inline SelectionManifest run_sampler(const Dataset& ds, const SamplerConfig& config, unsigned threads = 1) {
  config.validate();
  if (config.strategy == Strategy::global_random) {
    auto m = global_random(ds, *config.ratio, config.seed);
    m.sampler = config;
    return m;
  }

  std::optional<ScoreTable> scores;
  if (config.strategy == Strategy::score_file) scores = read_scores(*config.score_path);

  const auto& groups = ds.groups();
  std::vector<IndexList> per_group(groups.size());
  parallel_for(groups.size(), threads, [&](std::size_t i) {
    const IdentityGroup& g = groups[i];
    auto stream = [&] { return make_stream(config.seed, to_string(config.strategy) + "/" + g.id); };
    switch (config.strategy) {
      case Strategy::face_nms: per_group[i] = face_nms(g, *config.n_t); break;
      case Strategy::away_center: per_group[i] = away_center(g, *config.ratio); break;
      case Strategy::sim_threshold: {
        auto rng = stream();
        per_group[i] = sim_threshold(g, *config.n_t, rng);
        break;
      }
      case Strategy::identity_random: {
        auto rng = stream();
        per_group[i] = identity_random(g, *config.ratio, rng);
        break;
      }
      case Strategy::k_center: per_group[i] = k_center(g, *config.ratio, config.k_center_cap); break;
      case Strategy::score_file: per_group[i] = score_select_group(g, *scores, *config.ratio, *config.order); break;
      case Strategy::global_random: break;
    }
  });
  return detail::make_manifest(ds, config, std::move(per_group));
}

/// Fraction of all faces Face-NMS keeps at threshold n_t.
inline double face_nms_ratio(const Dataset& ds, double n_t, unsigned threads = 1) {
  const auto& groups = ds.groups();
  std::vector<std::size_t> kept(groups.size());
  parallel_for(groups.size(), threads, [&](std::size_t i) { kept[i] = face_nms(groups[i], n_t).size(); });
  return static_cast<double>(std::accumulate(kept.begin(), kept.end(), std::size_t{0})) /
         static_cast<double>(ds.face_count());
}

struct Calibration {
  double n_t = 0.0;
  double achieved_ratio = 0.0;
  std::size_t iterations = 0;
  bool within_tol = false;
  std::vector<std::pair<double, double>> evaluated;  // (n_t, ratio) in evaluation order
};

inline constexpr double kCalibrationLow = -1.0;
inline constexpr double kCalibrationHigh = 1.01;

/// Bisection of n_t over [-1, 1.01], treating the Face-NMS retention ratio as
/// non-decreasing in n_t. Returns the evaluated threshold whose ratio lies
/// closest to the target (earliest wins on ties).
inline Calibration calibrate_threshold(const Dataset& ds, double target_ratio, double tol, std::size_t max_iters = 60,
                                       unsigned threads = 1) {
  if (!(target_ratio > 0.0 && target_ratio <= 1.0)) throw Error(ErrorKind::ConfigError, "target ratio must be in (0, 1]");
  if (!(tol > 0.0)) throw Error(ErrorKind::ConfigError, "tolerance must be positive");

  Calibration c;
  double best_gap = std::numeric_limits<double>::infinity();
  auto evaluate = [&](double n_t) {
    const double r = face_nms_ratio(ds, n_t, threads);
    c.evaluated.emplace_back(n_t, r);
    const double gap = std::abs(r - target_ratio);
    if (gap < best_gap) {
      best_gap = gap;
      c.n_t = n_t;
      c.achieved_ratio = r;
    }
    return r;
  };

  double lo = kCalibrationLow;
  double hi = kCalibrationHigh;
  evaluate(hi);
  if (best_gap > tol) evaluate(lo);
  while (best_gap > tol && c.iterations < max_iters) {
    ++c.iterations;
    const double mid = 0.5 * (lo + hi);
    if (evaluate(mid) < target_ratio) lo = mid;
    else hi = mid;
  }
  c.within_tol = best_gap <= tol;
  return c;
}

} // namespace coreset
