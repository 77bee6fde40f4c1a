#pragma once

#include "coreset/dataset.hpp"
#include "coreset/error.hpp"
#include "coreset/parallel.hpp"
#include "coreset/rng.hpp"
#include "coreset/vecmath.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace coreset {

/// Identity-clustered embeddings with injected near-duplicates.
///
/// Faces are Gaussian-perturbed centers projected back onto the sphere; this
/// is not a von Mises-Fisher sampler, it only gives a controllable
/// within-identity cosine spread.
struct SynthConfig {
  std::size_t dim = 64;
  std::size_t identities = 200;
  double faces_mean = 50.0;
  double faces_std = 30.0;
  double noise_sigma = 0.25;
  double dup_prob = 0.3;
  double dup_jitter = 0.02;
  std::uint64_t seed = 7;
  std::size_t holdout_per_identity = 0;

  void validate() const {
    auto fail = [](const std::string& why) { throw Error(ErrorKind::ConfigError, why); };
    if (dim < 2) fail("dim must be >= 2");
    if (identities < 1) fail("identities must be >= 1");
    if (!(faces_mean > 0.0) || !std::isfinite(faces_mean)) fail("faces_mean must be > 0");
    if (!(faces_std >= 0.0) || !std::isfinite(faces_std)) fail("faces_std must be >= 0");
    if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be > 0");
    if (!(dup_prob >= 0.0 && dup_prob < 1.0)) fail("dup_prob must be in [0, 1)");
    if (!(dup_jitter >= 0.0) || !std::isfinite(dup_jitter)) fail("dup_jitter must be >= 0");
  }
};

inline nlohmann::json to_json(const SynthConfig& c) {
  return {{"dim", c.dim},
          {"identities", c.identities},
          {"faces_mean", c.faces_mean},
          {"faces_std", c.faces_std},
          {"noise_sigma", c.noise_sigma},
          {"dup_prob", c.dup_prob},
          {"dup_jitter", c.dup_jitter},
          {"seed", c.seed},
          {"holdout_per_identity", c.holdout_per_identity}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "dim") c.dim = value.get<std::size_t>();
      else if (key == "identities") c.identities = value.get<std::size_t>();
      else if (key == "faces_mean") c.faces_mean = value.get<double>();
      else if (key == "faces_std") c.faces_std = value.get<double>();
      else if (key == "noise_sigma") c.noise_sigma = value.get<double>();
      else if (key == "dup_prob") c.dup_prob = value.get<double>();
      else if (key == "dup_jitter") c.dup_jitter = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "holdout_per_identity") c.holdout_per_identity = value.get<std::size_t>();
      else throw Error(ErrorKind::ConfigError, "unknown synth config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

struct SynthOutput {
  Dataset train;
  std::optional<Dataset> holdout;  // absent when holdout_per_identity == 0
};

inline std::string synth_identity_id(std::size_t i, std::size_t identities) {
  const std::size_t width = std::max<std::size_t>(5, std::to_string(identities - 1).size());
  std::string digits = std::to_string(i);
  return "id" + std::string(width - digits.size(), '0') + digits;
}

/// Face count for one identity: lognormal with the configured mean and std,
/// rounded half up and clamped to [1, 10 * faces_mean].
inline std::size_t synth_face_count(const SynthConfig& c, SplitMix64& rng) {
  const double upper = std::max(1.0, std::floor(10.0 * c.faces_mean));
  double x = c.faces_mean;
  if (c.faces_std > 0.0) {
    const double cv = c.faces_std / c.faces_mean;
    const double sigma2 = std::log1p(cv * cv);
    const double mu = std::log(c.faces_mean) - 0.5 * sigma2;
    x = std::exp(mu + std::sqrt(sigma2) * rng.gaussian());
  }
  return static_cast<std::size_t>(std::clamp(static_cast<double>(round_half_up(x)), 1.0, upper));
}

namespace detail {

inline FeatureVector perturb(const FeatureVector& base, double sigma, SplitMix64& rng) {
  std::vector<double> v(base.dim());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(base[i]) + sigma * rng.gaussian();
  return normalize(v);
}

} // namespace detail

inline SynthOutput generate(const SynthConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  std::vector<IdentityGroup> train(cfg.identities);
  std::vector<IdentityGroup> holdout(cfg.identities);

  parallel_for(cfg.identities, threads, [&](std::size_t i) {
    const std::string id = synth_identity_id(i, cfg.identities);
    auto rng = make_stream(cfg.seed, "synth/" + id);

    std::vector<double> raw(cfg.dim);
    for (double& v : raw) v = rng.gaussian();
    const FeatureVector center = normalize(raw);

    const std::size_t n = synth_face_count(cfg, rng);
    IdentityGroup g{id, {}};
    g.faces.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
      const bool dup = j > 0 && rng.uniform01() < cfg.dup_prob;
      FeatureVector f;
      if (dup) {
        const FeatureVector& prev = g.faces[rng.below(j)].feature;
        f = cfg.dup_jitter > 0.0 ? detail::perturb(prev, cfg.dup_jitter, rng) : prev;
      } else {
        f = detail::perturb(center, cfg.noise_sigma, rng);
      }
      g.faces.push_back({static_cast<std::uint32_t>(j), std::move(f)});
    }
    train[i] = std::move(g);

    IdentityGroup h{id, {}};
    for (std::size_t j = 0; j < cfg.holdout_per_identity; ++j)
      h.faces.push_back({static_cast<std::uint32_t>(j), detail::perturb(center, cfg.noise_sigma, rng)});
    holdout[i] = std::move(h);
  });

  const std::string source = "synth seed=" + std::to_string(cfg.seed);
  SynthOutput out{Dataset(cfg.dim, std::move(train), source), std::nullopt};
  if (cfg.holdout_per_identity > 0) out.holdout.emplace(cfg.dim, std::move(holdout), source + " holdout");
  return out;
}

} // namespace coreset
