#pragma once

#include "coreset/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace coreset {

constexpr double kZeroNormThreshold = 1e-12;

/// A face embedding. Stored as 32-bit floats; every reduction over it is
/// carried out in double precision, left to right.
class FeatureVector {
public:
  FeatureVector() = default;
  explicit FeatureVector(std::vector<float> values) : values_(std::move(values)) {}

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  float operator[](std::size_t i) const noexcept { return values_[i]; }

  double squared_norm() const noexcept {
    double acc = 0.0;
    for (float v : values_) acc += static_cast<double>(v) * static_cast<double>(v);
    return acc;
  }

  double norm() const noexcept { return std::sqrt(squared_norm()); }

  bool is_unit(double tol = 1e-4) const noexcept { return std::abs(norm() - 1.0) <= tol; }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

private:
  std::vector<float> values_;
};

struct ClusterCenter {
  std::vector<double> mean;  // plain mean of members, not renormalized
  std::size_t count = 0;
};

inline double dot(std::span<const float> a, std::span<const float> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

inline double dot(std::span<const float> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

inline double clamp_unit(double x) noexcept { return std::clamp(x, -1.0, 1.0); }

template <typename Range>
FeatureVector normalize(const Range& raw) {
  double acc = 0.0;
  for (auto v : raw) {
    const double x = static_cast<double>(v);
    if (!std::isfinite(x)) throw Error(ErrorKind::NonFinite, "vector has a NaN or infinite component");
    acc += x * x;
  }
  const double norm = std::sqrt(acc);
  if (norm < kZeroNormThreshold) throw Error(ErrorKind::ZeroNorm, "cannot normalize a zero-norm vector");

  std::vector<float> out;
  out.reserve(std::size(raw));
  for (auto v : raw) out.push_back(static_cast<float>(static_cast<double>(v) / norm));
  return FeatureVector(std::move(out));
}

inline FeatureVector normalize(std::initializer_list<double> raw) {
  return normalize(std::vector<double>(raw));
}

inline FeatureVector normalize(const FeatureVector& f) { return normalize(f.values()); }

inline double cosine(const FeatureVector& a, const FeatureVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorKind::DimensionMismatch,
                "cosine of vectors with dims " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
  }
  return clamp_unit(dot(a.values(), b.values()));
}

template <typename Range>
ClusterCenter cluster_center(const Range& faces) {
  if (std::empty(faces)) throw Error(ErrorKind::EmptyGroup, "cluster center of an empty group");
  const FeatureVector& first = *std::begin(faces);
  ClusterCenter c{std::vector<double>(first.dim(), 0.0), 0};
  for (const FeatureVector& f : faces) {
    if (f.dim() != first.dim()) throw Error(ErrorKind::DimensionMismatch, "faces of mixed dimension");
    for (std::size_t i = 0; i < f.dim(); ++i) c.mean[i] += static_cast<double>(f[i]);
    ++c.count;
  }
  for (double& v : c.mean) v /= static_cast<double>(c.count);
  return c;
}

inline double center_norm(const ClusterCenter& c) noexcept {
  double acc = 0.0;
  for (double v : c.mean) acc += v * v;
  return std::sqrt(acc);
}

/// Cosine between f and the direction of c.mean.
inline double center_similarity(const FeatureVector& f, const ClusterCenter& c) {
  if (f.dim() != c.mean.size()) throw Error(ErrorKind::DimensionMismatch, "face and center dims differ");
  const double n = center_norm(c);
  if (n < kZeroNormThreshold) throw Error(ErrorKind::DegenerateCenter, "cluster center has (near) zero norm");
  return clamp_unit(dot(f.values(), std::span<const double>(c.mean)) / n);
}

} // namespace coreset
