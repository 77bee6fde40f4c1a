#pragma once

#include "coreset/coreset.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace coreset::cli {

/// Exit codes: 0 success, 1 validation error, 2 I/O error.
enum ExitCode : int { kOk = 0, kValidation = 1, kIo = 2 };

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::optional<std::string> format;
  bool normalize = false;
};

/// Inputs are sniffed by their magic bytes; anything that does not start with
/// "CNMS" is parsed as JSONL.
inline Dataset load_dataset(const std::filesystem::path& path, const GlobalOptions& g) {
  const std::string data = read_file(path);
  const ReadOptions opts{g.normalize};
  if (data.size() >= 4 && data.compare(0, 4, "CNMS") == 0) return decode_binary(data, opts, path.string());
  return decode_jsonl(data, opts, path.string());
}

/// Outputs use --format when given, otherwise the path extension.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& path, const GlobalOptions& g) {
  write_dataset(ds, path, g.format ? parse_format(*g.format) : format_for_path(path));
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  write_file(path, j.dump(2) + "\n");
}

inline std::uint64_t require_seed(const GlobalOptions& g, const std::string& what) {
  if (!g.seed) throw Error(ErrorKind::ConfigError, what + " is randomized and requires an explicit --seed");
  return *g.seed;
}

inline nlohmann::json metrics_report(const Dataset& ds, const HistogramOptions& hopts, const SparsityReport& sp,
                                     const CountStats& cs, const SimilarityHistogram& h) {
  nlohmann::json per_identity = nlohmann::json::object();
  for (const auto& [id, s] : sp.per_identity) per_identity[id] = s;
  nlohmann::json counts = nlohmann::json::array();
  for (const auto& [n, ids] : cs.histogram) counts.push_back({{"faces", n}, {"identities", ids}});

  nlohmann::json edges = nlohmann::json::array();
  for (std::size_t b = 0; b <= h.bins(); ++b) edges.push_back(b == h.bins() ? 1.0 : h.bin_left(b));

  return {
      {"tool_version", kToolVersion},
      {"dataset_fingerprint", fingerprint_hex(ds.fingerprint())},
      {"identities", ds.groups().size()},
      {"faces", ds.face_count()},
      {"sparsity",
       {{"mean_S", sp.mean_S},
        {"pair_count", sp.pair_count},
        {"per_identity", std::move(per_identity)},
        {"convention", "negated mean cosine over all ordered pairs, self-pairs included"}}},
      {"count_stats",
       {{"mean", cs.mean}, {"variance", cs.variance}, {"std", cs.std}, {"histogram", std::move(counts)}}},
      {"similarity_histogram",
       {{"bins", h.bins()},
        {"bin_edges", std::move(edges)},
        {"frequency", h.frequency},
        {"mean", h.mean_defined ? nlohmann::json(h.mean) : nlohmann::json(nullptr)},
        {"mean_defined", h.mean_defined},
        {"pair_count", h.pair_count},
        {"total_pairs", h.total_pairs},
        {"sampled", h.sampled},
        {"pair_budget", hopts.pair_budget},
        {"convention", "unordered within-identity pairs (i<j), self-pairs excluded; single-face identities skipped"}}},
  };
}

inline std::string histogram_csv(const SimilarityHistogram& h) {
  std::string out = "bin_left,bin_right,frequency\n";
  char buf[96];
  for (std::size_t b = 0; b < h.bins(); ++b) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.9f\n", h.bin_left(b), h.bin_right(b), h.frequency[b]);
    out += buf;
  }
  return out;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Core-set selection for identity-grouped embedding datasets"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kToolVersion));

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Master seed for randomized steps");
  app.add_option("--threads", g.threads, "Worker threads (0 = hardware concurrency)")->capture_default_str();
  app.add_option("--format", g.format, "Format of written datasets")->check(CLI::IsMember({"binary", "jsonl"}));
  app.add_flag("--normalize", g.normalize, "Renormalize features on ingestion instead of rejecting non-unit vectors");

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a synthetic train/holdout pair");
  std::string gen_config, gen_train;
  std::optional<std::string> gen_holdout;
  gen->add_option("--config", gen_config, "Synth config JSON")->required();
  gen->add_option("--out-train", gen_train)->required();
  gen->add_option("--out-holdout", gen_holdout);

  // sample
  auto* smp = app.add_subcommand("sample", "Select a core set and write a manifest");
  std::string smp_in, smp_strategy, smp_out;
  std::optional<double> smp_nt, smp_ratio;
  std::optional<std::string> smp_scores, smp_order;
  std::size_t smp_cap = kDefaultKCenterCap;
  smp->add_option("--in", smp_in)->required();
  smp->add_option("--strategy", smp_strategy)
      ->required()
      ->check(CLI::IsMember({"face_nms", "away_center", "sim_threshold", "global_random", "identity_random",
                             "k_center", "score_file"}));
  auto* nt_opt = smp->add_option("--nt", smp_nt, "Similarity threshold");
  smp->add_option("--ratio", smp_ratio, "Sampling ratio in (0, 1]")->excludes(nt_opt);
  smp->add_option("--scores", smp_scores, "Score CSV (score_file)");
  smp->add_option("--order", smp_order)->check(CLI::IsMember({"higher_score_first", "lower_score_first"}));
  smp->add_option("--k-center-cap", smp_cap)->capture_default_str();
  smp->add_option("--out", smp_out)->required();

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Find the Face-NMS threshold for a target ratio");
  std::string cal_in, cal_out;
  double cal_target = 0.0, cal_tol = 0.005;
  std::size_t cal_iters = 60;
  cal->add_option("--in", cal_in)->required();
  cal->add_option("--target-ratio", cal_target)->required();
  cal->add_option("--tol", cal_tol)->capture_default_str();
  cal->add_option("--max-iters", cal_iters)->capture_default_str();
  cal->add_option("--out", cal_out)->required();

  // apply
  auto* apl = app.add_subcommand("apply", "Materialize the core set named by a manifest");
  std::string apl_in, apl_manifest, apl_out;
  apl->add_option("--in", apl_in)->required();
  apl->add_option("--manifest", apl_manifest)->required();
  apl->add_option("--out", apl_out)->required();

  // metrics
  auto* met = app.add_subcommand("metrics", "Sparsity, face-count and similarity statistics");
  std::string met_in, met_out;
  std::optional<std::string> met_manifest, met_csv;
  std::size_t met_bins = 40;
  std::uint64_t met_budget = 10'000'000;
  met->add_option("--in", met_in)->required();
  met->add_option("--manifest", met_manifest);
  met->add_option("--bins", met_bins)->capture_default_str();
  met->add_option("--pair-budget", met_budget)->capture_default_str();
  met->add_option("--out", met_out)->required();
  met->add_option("--csv", met_csv);

  // eval
  auto* evl = app.add_subcommand("eval", "Nearest-class-mean and verification comparison");
  std::string evl_train, evl_holdout, evl_out;
  std::vector<std::string> evl_manifests;
  std::vector<double> evl_far{1e-2, 1e-3};
  std::size_t evl_budget = 1'000'000;
  evl->add_option("--train", evl_train)->required();
  evl->add_option("--holdout", evl_holdout)->required();
  evl->add_option("--manifests", evl_manifests)->delimiter(',');
  evl->add_option("--far", evl_far)->delimiter(',');
  evl->add_option("--pair-budget", evl_budget)->capture_default_str();
  evl->add_option("--out", evl_out)->required();

  // convert
  auto* cnv = app.add_subcommand("convert", "Transcode between binary and JSONL");
  std::string cnv_in, cnv_out;
  cnv->add_option("--in", cnv_in)->required();
  cnv->add_option("--out", cnv_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*gen) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(read_file(gen_config));
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("synth config: ") + e.what());
      }
      if (!g.seed && !j.contains("seed")) throw Error(ErrorKind::ConfigError, "generate needs a seed in the config or --seed");
      if (g.seed) j["seed"] = *g.seed;
      const SynthConfig cfg = synth_config_from_json(j);
      const SynthOutput synth = generate(cfg, g.threads);
      save_dataset(synth.train, gen_train, g);
      nlohmann::json sidecar = {{"tool_version", kToolVersion},
                                {"config", to_json(cfg)},
                                {"train_fingerprint", fingerprint_hex(synth.train.fingerprint())},
                                {"train_faces", synth.train.face_count()}};
      if (gen_holdout) {
        if (!synth.holdout) throw Error(ErrorKind::ConfigError, "--out-holdout given but holdout_per_identity is 0");
        save_dataset(*synth.holdout, *gen_holdout, g);
        sidecar["holdout_fingerprint"] = fingerprint_hex(synth.holdout->fingerprint());
        sidecar["holdout_faces"] = synth.holdout->face_count();
      }
      write_json(sidecar, gen_train + ".json");
      out << "generated " << synth.train.groups().size() << " identities, " << synth.train.face_count()
          << " train faces, fingerprint " << fingerprint_hex(synth.train.fingerprint()) << "\n";
    } else if (*smp) {
      const Dataset ds = load_dataset(smp_in, g);
      SamplerConfig config;
      config.strategy = parse_strategy(smp_strategy);
      config.n_t = smp_nt;
      config.ratio = smp_ratio;
      config.score_path = smp_scores;
      if (smp_order) config.order = parse_score_order(*smp_order);
      config.k_center_cap = smp_cap;
      if (is_randomized(config.strategy)) config.seed = require_seed(g, smp_strategy);
      const SelectionManifest m = run_sampler(ds, config, g.threads);
      write_manifest(m, smp_out);
      char ratio[32];
      std::snprintf(ratio, sizeof(ratio), "%.6f", m.ratio);
      out << smp_strategy << ": retained " << m.retained_total << " / " << m.original_total << " faces (ratio "
          << ratio << ")\n";
    } else if (*cal) {
      const Dataset ds = load_dataset(cal_in, g);
      const Calibration c = calibrate_threshold(ds, cal_target, cal_tol, cal_iters, g.threads);
      nlohmann::json evaluated = nlohmann::json::array();
      for (const auto& [nt, r] : c.evaluated) evaluated.push_back({nt, r});
      write_json({{"tool_version", kToolVersion},
                  {"dataset_fingerprint", fingerprint_hex(ds.fingerprint())},
                  {"target_ratio", cal_target},
                  {"tol", cal_tol},
                  {"nt", c.n_t},
                  {"achieved_ratio", c.achieved_ratio},
                  {"within_tol", c.within_tol},
                  {"iterations", c.iterations},
                  {"evaluated", std::move(evaluated)}},
                 cal_out);
      out << "nt " << nlohmann::json(c.n_t).dump() << " achieves ratio " << nlohmann::json(c.achieved_ratio).dump()
          << (c.within_tol ? "" : " (outside tolerance; best found)") << "\n";
    } else if (*apl) {
      const Dataset ds = load_dataset(apl_in, g);
      const Dataset core = apply_manifest(ds, read_manifest(apl_manifest));
      save_dataset(core, apl_out, g);
      out << "wrote " << core.face_count() << " faces, fingerprint " << fingerprint_hex(core.fingerprint()) << "\n";
    } else if (*met) {
      Dataset ds = load_dataset(met_in, g);
      if (met_manifest) ds = apply_manifest(ds, read_manifest(*met_manifest));
      HistogramOptions hopts{met_bins, met_budget, 0, g.threads};
      std::uint64_t pairs = 0;
      for (const auto& grp : ds.groups()) pairs += grp.faces.size() * (grp.faces.size() - 1) / 2;
      if (pairs > met_budget) hopts.seed = require_seed(g, "pair subsampling above --pair-budget");
      const SparsityReport sp = sparsity_report(ds, g.threads);
      const CountStats cs = count_stats(ds);
      const SimilarityHistogram h = intra_similarity_histogram(ds, hopts);
      auto report = metrics_report(ds, hopts, sp, cs, h);
      if (h.sampled) report["similarity_histogram"]["seed"] = hopts.seed;
      write_json(report, met_out);
      if (met_csv) write_file(*met_csv, histogram_csv(h));
      char line[160];
      std::snprintf(line, sizeof(line), "faces per identity: %.2f ± %.2f\nmean sparsity: %.6f\n", cs.mean, cs.std,
                    sp.mean_S);
      out << line;
      if (h.mean_defined) {
        std::snprintf(line, sizeof(line), "mean intra-class similarity: %.6f\n", h.mean);
        out << line;
      }
    } else if (*evl) {
      const Dataset train = load_dataset(evl_train, g);
      const Dataset holdout = load_dataset(evl_holdout, g);
      std::vector<SelectionManifest> manifests;
      for (const auto& path : evl_manifests) manifests.push_back(read_manifest(path));
      VerifyOptions vopts{evl_far, evl_budget, require_seed(g, "eval"), g.threads};
      const auto table = compare(train, manifests, holdout, vopts);
      const std::string csv = compare_csv(table);
      write_file(evl_out, csv);
      out << csv;
    } else if (*cnv) {
      const Dataset ds = load_dataset(cnv_in, g);
      save_dataset(ds, cnv_out, g);
      out << "converted " << ds.groups().size() << " identities, fingerprint " << fingerprint_hex(ds.fingerprint())
          << "\n";
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::IoError ? kIo : kValidation;
  }
  return kOk;
}

} // namespace coreset::cli
