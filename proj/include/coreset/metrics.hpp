#pragma once

#include "coreset/dataset.hpp"
#include "coreset/error.hpp"
#include "coreset/parallel.hpp"
#include "coreset/rng.hpp"
#include "coreset/vecmath.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace coreset {

namespace detail {

inline std::vector<double> feature_sum(const IdentityGroup& group) {
  std::vector<double> sum(group.faces.front().feature.dim(), 0.0);
  for (const Face& f : group.faces) {
    if (f.feature.dim() != sum.size()) throw Error(ErrorKind::DimensionMismatch, "faces of mixed dimension");
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += static_cast<double>(f.feature[i]);
  }
  return sum;
}

} // namespace detail

/// Global sparsity of one identity: the negated mean of all ordered pair
/// similarities, self-pairs included. Evaluated as -||sum f||^2 / N^2.
inline double sparsity(const IdentityGroup& group) {
  if (group.faces.empty()) throw Error(ErrorKind::EmptyGroup, "sparsity of an empty group");
  const auto sum = detail::feature_sum(group);
  double sq = 0.0;
  for (double v : sum) sq += v * v;
  const double n = static_cast<double>(group.faces.size());
  return -sq / (n * n);
}

/// S(group + f) - S(group + f_prime) in closed form:
///   -2 / (N+1)^2 * sum_i f_i . (f - f_prime)
/// Exact for unit-norm f and f_prime.
inline double contribution_diff(const IdentityGroup& group, const FeatureVector& f, const FeatureVector& f_prime) {
  if (group.faces.empty()) throw Error(ErrorKind::EmptyGroup, "contribution differential of an empty group");
  const auto sum = detail::feature_sum(group);
  if (f.dim() != sum.size() || f_prime.dim() != sum.size())
    throw Error(ErrorKind::DimensionMismatch, "candidate faces do not match the group dimension");
  double acc = 0.0;
  for (std::size_t i = 0; i < sum.size(); ++i)
    acc += sum[i] * (static_cast<double>(f[i]) - static_cast<double>(f_prime[i]));
  const double n1 = static_cast<double>(group.faces.size()) + 1.0;
  return -2.0 / (n1 * n1) * acc;
}

struct SparsityReport {
  std::map<std::string, double> per_identity;
  double mean_S = 0.0;  // unweighted, reduced in identity_id order
  std::uint64_t pair_count = 0;  // ordered pairs including self-pairs: sum N^2
};

inline SparsityReport sparsity_report(const Dataset& ds, unsigned threads = 1) {
  const auto& groups = ds.groups();
  std::vector<double> values(groups.size());
  parallel_for(groups.size(), threads, [&](std::size_t i) { values[i] = sparsity(groups[i]); });

  SparsityReport r;
  double acc = 0.0;
  for (std::size_t pos : ds.sorted_order()) {
    r.per_identity[groups[pos].id] = values[pos];
    acc += values[pos];
    const auto n = static_cast<std::uint64_t>(groups[pos].faces.size());
    r.pair_count += n * n;
  }
  r.mean_S = acc / static_cast<double>(groups.size());
  return r;
}

struct SimilarityHistogram {
  std::vector<double> frequency;  // sums to 1 when pair_count > 0
  double mean = std::numeric_limits<double>::quiet_NaN();
  bool mean_defined = false;
  std::uint64_t pair_count = 0;  // pairs actually scored
  std::uint64_t total_pairs = 0;  // unordered within-identity pairs available
  bool sampled = false;

  std::size_t bins() const noexcept { return frequency.size(); }
  double bin_left(std::size_t b) const noexcept { return -1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(bins()); }
  double bin_right(std::size_t b) const noexcept { return -1.0 + 2.0 * static_cast<double>(b + 1) / static_cast<double>(bins()); }
};

struct HistogramOptions {
  std::size_t bins = 40;
  std::uint64_t pair_budget = 10'000'000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Bin b covers [-1 + 2b/B, -1 + 2(b+1)/B); 1.0 lands in the top bin.
inline std::size_t similarity_bin(double s, std::size_t bins) noexcept {
  const double pos = (clamp_unit(s) + 1.0) / 2.0 * static_cast<double>(bins);
  const auto b = static_cast<std::size_t>(std::floor(pos));
  return b >= bins ? bins - 1 : b;
}

/// Distribution of cosine similarity over unordered within-identity pairs
/// (i < j, no self-pairs). Exhaustive up to the pair budget; above it, the
/// budget is split across identities by pair-count weight and drawn with a
/// fixed per-identity stream.
inline SimilarityHistogram intra_similarity_histogram(const Dataset& ds, const HistogramOptions& opts = {}) {
  if (opts.bins < 2) throw Error(ErrorKind::ConfigError, "histogram needs at least 2 bins");
  const auto& groups = ds.groups();
  const auto& order = ds.sorted_order();

  SimilarityHistogram h;
  h.frequency.assign(opts.bins, 0.0);
  std::vector<std::uint64_t> pairs(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto n = static_cast<std::uint64_t>(groups[i].faces.size());
    pairs[i] = n * (n - 1) / 2;
    h.total_pairs += pairs[i];
  }
  h.sampled = h.total_pairs > opts.pair_budget;

  // per-identity quota, fixed before any parallel work
  std::vector<std::uint64_t> quota(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    quota[i] = !h.sampled ? pairs[i]
                          : static_cast<std::uint64_t>(std::llround(static_cast<double>(pairs[i]) *
                                                                    static_cast<double>(opts.pair_budget) /
                                                                    static_cast<double>(h.total_pairs)));
  }

  struct Partial {
    std::vector<std::uint64_t> counts;
    double sum = 0.0;
    std::uint64_t n = 0;
  };
  std::vector<Partial> partial(groups.size());
  parallel_for(groups.size(), opts.threads, [&](std::size_t gi) {
    const auto& faces = groups[gi].faces;
    Partial p{std::vector<std::uint64_t>(opts.bins, 0), 0.0, 0};
    auto add = [&](std::size_t a, std::size_t b) {
      const double s = cosine(faces[a].feature, faces[b].feature);
      ++p.counts[similarity_bin(s, opts.bins)];
      p.sum += s;
      ++p.n;
    };
    if (!h.sampled) {
      for (std::size_t a = 0; a < faces.size(); ++a)
        for (std::size_t b = a + 1; b < faces.size(); ++b) add(a, b);
    } else {
      auto rng = make_stream(opts.seed, "histogram/" + groups[gi].id);
      for (std::uint64_t q = 0; q < quota[gi]; ++q) {
        const std::size_t a = rng.below(faces.size());
        std::size_t b = rng.below(faces.size() - 1);
        if (b >= a) ++b;
        add(std::min(a, b), std::max(a, b));
      }
    }
    partial[gi] = std::move(p);
  });

  std::vector<std::uint64_t> counts(opts.bins, 0);
  double sum = 0.0;
  for (std::size_t pos : order) {
    const Partial& p = partial[pos];
    for (std::size_t b = 0; b < opts.bins; ++b) counts[b] += p.counts[b];
    sum += p.sum;
    h.pair_count += p.n;
  }
  if (h.pair_count > 0) {
    for (std::size_t b = 0; b < opts.bins; ++b)
      h.frequency[b] = static_cast<double>(counts[b]) / static_cast<double>(h.pair_count);
    h.mean = sum / static_cast<double>(h.pair_count);
    h.mean_defined = true;
  }
  return h;
}

struct CountStats {
  double mean = 0.0;
  double variance = 0.0;  // population
  double std = 0.0;
  std::map<std::size_t, std::size_t> histogram;  // faces-per-identity -> identities
};

inline CountStats count_stats(const Dataset& ds) {
  CountStats c;
  for (const IdentityGroup& g : ds.groups()) ++c.histogram[g.faces.size()];
  const double n = static_cast<double>(ds.groups().size());
  double sum = 0.0;
  for (const auto& [count, ids] : c.histogram) sum += static_cast<double>(count) * static_cast<double>(ids);
  c.mean = sum / n;
  double sq = 0.0;
  for (const auto& [count, ids] : c.histogram) {
    const double d = static_cast<double>(count) - c.mean;
    sq += d * d * static_cast<double>(ids);
  }
  c.variance = sq / n;
  c.std = std::sqrt(c.variance);
  return c;
}

} // namespace coreset
