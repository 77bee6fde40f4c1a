#include "test_support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

using namespace coreset;
using coreset::testing::Rng;

namespace {

IdentityGroup group_of(std::vector<FeatureVector> faces, std::string id = "g") {
  IdentityGroup g{std::move(id), {}};
  std::uint32_t i = 0;
  for (auto& f : faces) g.faces.push_back({i++, std::move(f)});
  return g;
}

std::vector<std::uint32_t> sorted(std::vector<std::uint32_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

std::vector<std::uint32_t> all_indices(const IdentityGroup& g) {
  std::vector<std::uint32_t> out;
  for (const auto& f : g.faces) out.push_back(f.index);
  return out;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorKind::IoError;
}

} // namespace

TEST(FaceNms, SingleFace) {
  const auto g = group_of({normalize({0.3, 0.4})});
  EXPECT_EQ(face_nms(g, 0.5), (IndexList{0}));
  EXPECT_EQ(face_nms(g, -1.0), (IndexList{0}));
  EXPECT_EQ(kind_of([] { face_nms(IdentityGroup{"e", {}}, 0.5); }), ErrorKind::EmptyGroup);
}

TEST(FaceNms, ThresholdAboveOneKeepsAllInCenterOrder) {
  Rng rng(1);
  const auto g = coreset::testing::random_group(15, 8, rng);
  const auto out = face_nms(g, 1.000001);
  ASSERT_EQ(out.size(), g.size());
  const auto scores = center_scores(g);
  for (std::size_t i = 1; i < out.size(); ++i) {
    EXPECT_LE(scores[coreset::testing::position_of(g, out[i - 1])],
              scores[coreset::testing::position_of(g, out[i])]);
  }
}

TEST(FaceNms, ThresholdMinusOneKeepsOnlyFarthestFace) {
  Rng rng(2);
  const auto g = coreset::testing::random_group(12, 8, rng);
  const auto out = face_nms(g, -1.0);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], g.faces[rank_by_center(g).front()].index);
}

TEST(FaceNms, MatchesTranscriptionOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 60; ++trial) {
    const auto g = coreset::testing::random_group(10, 16, rng);
    EXPECT_EQ(face_nms(g, 0.8), coreset::testing::oracle_face_nms(g, 0.8));
  }
}

TEST(FaceNms, RetainedPairBoundCoverageAndOrder) {
  Rng rng(4);
  for (int trial = 0; trial < 80; ++trial) {
    const auto g = coreset::testing::random_group(5 + trial % 40, 12, rng);
    for (double n_t : {0.3, 0.6, 0.8, 0.95}) {
      const auto out = face_nms(g, n_t);
      const auto scores = center_scores(g);
      std::vector<std::size_t> pos;
      for (auto idx : out) pos.push_back(coreset::testing::position_of(g, idx));
      for (std::size_t a = 0; a < pos.size(); ++a) {
        if (a > 0) {
          EXPECT_LE(scores[pos[a - 1]], scores[pos[a]]);
        }
        for (std::size_t b = a + 1; b < pos.size(); ++b)
          EXPECT_LT(cosine(g.faces[pos[a]].feature, g.faces[pos[b]].feature), n_t);
      }
      const std::set<std::uint32_t> kept(out.begin(), out.end());
      for (std::size_t p = 0; p < g.size(); ++p) {
        if (kept.contains(g.faces[p].index)) continue;
        bool explained = false;
        for (std::size_t q : pos)
          explained = explained || (scores[q] <= scores[p] && cosine(g.faces[q].feature, g.faces[p].feature) >= n_t);
        EXPECT_TRUE(explained) << "face " << g.faces[p].index << " dropped without cause";
      }
      EXPECT_EQ(face_nms(g, n_t), out);
    }
  }
}

TEST(FaceNms, DegenerateCenterFallsBackToIndexOrder) {
  const auto g = group_of({normalize({1.0, 0.0}), normalize({-1.0, 0.0}), normalize({0.0, 1.0}), normalize({0.0, -1.0})});
  EXPECT_EQ(face_nms(g, 1.01), (IndexList{0, 1, 2, 3}));
  EXPECT_EQ(away_center(g, 0.5), (IndexList{0, 1}));
}

TEST(AwayCenter, RatioOneAndKnownOrdering) {
  Rng rng(5);
  const auto g = coreset::testing::random_group(9, 8, rng);
  EXPECT_EQ(sorted(away_center(g, 1.0)), all_indices(g));

  // faces at 10, 90 and 0 degrees: center similarities high / low / middle
  const double rad = std::acos(-1.0) / 180.0;
  auto at = [&](double deg) { return normalize({std::cos(deg * rad), std::sin(deg * rad)}); };
  const auto three = group_of({at(10), at(90), at(0)});
  const auto s = center_scores(three);
  ASSERT_GT(s[0], s[2]);
  ASSERT_GT(s[2], s[1]);
  EXPECT_EQ(away_center(three, 1.0 / 3.0), (IndexList{1}));
}

TEST(AwayCenter, MatchesSortOracle) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = coreset::testing::random_group(3 + trial % 25, 10, rng);
    const double ratio = 0.1 + 0.015 * trial;
    const auto scores = coreset::testing::oracle_center_scores(g);
    std::vector<std::pair<double, std::uint32_t>> keyed;
    for (std::size_t p = 0; p < g.size(); ++p) keyed.emplace_back(scores[p], g.faces[p].index);
    std::sort(keyed.begin(), keyed.end());
    const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(ratio * g.size() + 0.5)));
    IndexList expected;
    for (std::size_t i = 0; i < k; ++i) expected.push_back(keyed[i].second);
    EXPECT_EQ(away_center(g, ratio), expected);
  }
}

TEST(AwayCenter, ExhaustiveSparsityGapIsMeasured) {
  Rng rng(7);
  int agree = 0, total = 0;
  double worst_gap = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 4 + trial % 7;
    const auto g = coreset::testing::random_group(n, 6, rng);
    const std::size_t k = 1 + trial % (n - 1);
    const auto chosen = away_center(g, static_cast<double>(k) / static_cast<double>(n));
    ASSERT_EQ(chosen.size(), k);

    auto subset_sparsity = [&](const std::vector<std::size_t>& pos) {
      std::vector<FeatureVector> f;
      for (std::size_t p : pos) f.push_back(g.faces[p].feature);
      return coreset::testing::oracle_sparsity(f);
    };
    std::vector<std::size_t> away_pos;
    for (auto idx : chosen) away_pos.push_back(coreset::testing::position_of(g, idx));
    const double away_s = subset_sparsity(away_pos);

    double best = -std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) != k) continue;
      std::vector<std::size_t> pos;
      for (std::size_t p = 0; p < n; ++p)
        if (mask & (1u << p)) pos.push_back(p);
      best = std::max(best, subset_sparsity(pos));
    }
    EXPECT_LE(away_s, best + 1e-12);
    worst_gap = std::max(worst_gap, best - away_s);
    agree += best - away_s <= 1e-12;
    ++total;
  }
  RecordProperty("exhaustive_agreement", std::to_string(agree) + "/" + std::to_string(total));
  RecordProperty("worst_gap", std::to_string(worst_gap));
  std::cout << "away_center attains the exhaustive Eq-1 optimum on " << agree << "/" << total
            << " groups; worst gap " << worst_gap << "\n";
}

TEST(SimThreshold, ExtremesAndDuplicates) {
  Rng rng(8);
  const auto g = coreset::testing::random_group(10, 8, rng);
  auto stream = make_stream(1, "x");
  EXPECT_EQ(sorted(sim_threshold(g, 1.000001, stream)), all_indices(g));

  const auto f = normalize({0.6, 0.8});
  auto s2 = make_stream(2, "x");
  EXPECT_EQ(sim_threshold(group_of({f, f}), 0.99, s2).size(), 1u);
}

TEST(SimThreshold, MatchesVisitationOracleAndIsLocallySparse) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = coreset::testing::random_group(10, 12, rng);
    const auto stream = make_stream(trial, "sim_threshold/g");
    auto s = stream;
    const auto out = sim_threshold(g, 0.7, s);
    EXPECT_EQ(out, coreset::testing::oracle_sim_threshold(g, 0.7, stream));
    for (std::size_t a = 0; a < out.size(); ++a)
      for (std::size_t b = a + 1; b < out.size(); ++b)
        EXPECT_LT(cosine(g.faces[coreset::testing::position_of(g, out[a])].feature,
                         g.faces[coreset::testing::position_of(g, out[b])].feature),
                  0.7);
  }
}

TEST(IdentityRandom, RatioOneSingletonAndReproducible) {
  Rng rng(10);
  const auto g = coreset::testing::random_group(20, 8, rng);
  auto s = make_stream(3, "a");
  EXPECT_EQ(sorted(identity_random(g, 1.0, s)), all_indices(g));

  const auto one = group_of({normalize({1.0, 2.0})});
  auto s1 = make_stream(3, "b");
  EXPECT_EQ(identity_random(one, 0.1, s1), (IndexList{0}));

  auto a = make_stream(4, "c");
  auto b = make_stream(4, "c");
  const auto first = identity_random(g, 0.4, a);
  EXPECT_EQ(first, identity_random(g, 0.4, b));
  EXPECT_EQ(first.size(), 8u);
  EXPECT_EQ(std::set<std::uint32_t>(first.begin(), first.end()).size(), 8u);
}

TEST(IdentityRandom, RoughlyUniform) {
  const auto g = group_of({normalize({1.0, 0.0}), normalize({0.0, 1.0}), normalize({1.0, 1.0}), normalize({1.0, -1.0})});
  std::vector<int> hits(4, 0);
  auto s = make_stream(5, "u");
  for (int i = 0; i < 4000; ++i)
    for (auto idx : identity_random(g, 0.5, s)) ++hits[idx];
  for (int h : hits) EXPECT_NEAR(h, 2000, 150);
}

TEST(KCenter, RatioOneAndForcedOrthogonalPick) {
  Rng rng(11);
  const auto g = coreset::testing::random_group(7, 8, rng);
  EXPECT_EQ(sorted(k_center(g, 1.0)), all_indices(g));

  const auto four = group_of({normalize({1.0, 0.01, 0.0}), normalize({1.0, 0.0, 0.01}), normalize({1.0, -0.01, 0.0}),
                              normalize({0.0, 0.0, 1.0})});
  const auto out = k_center(four, 0.5);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], four.faces[rank_by_center(four).front()].index);
  EXPECT_TRUE(out[0] == 3u || out[1] == 3u);
  EXPECT_NE(out[0], out[1]);
}

TEST(KCenter, GreedyStepsMatchExhaustiveArgmax) {
  Rng rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    const auto g = coreset::testing::random_group(20, 10, rng);
    const auto out = k_center(g, 0.5);
    std::vector<std::size_t> selected{coreset::testing::position_of(g, out[0])};
    for (std::size_t step = 1; step < out.size(); ++step) {
      double best = -1.0;
      std::size_t arg = g.size();
      for (std::size_t p = 0; p < g.size(); ++p) {
        if (std::find(selected.begin(), selected.end(), p) != selected.end()) continue;
        const double d = coreset::testing::oracle_min_distance(g, p, selected);
        if (d > best) {
          best = d;
          arg = p;
        }
      }
      EXPECT_EQ(coreset::testing::position_of(g, out[step]), arg);
      selected.push_back(arg);
    }
  }
}

TEST(KCenter, GroupTooLarge) {
  Rng rng(13);
  const auto g = coreset::testing::random_group(10, 4, rng);
  EXPECT_EQ(kind_of([&] { k_center(g, 0.5, 9); }), ErrorKind::GroupTooLarge);
}

TEST(GlobalRandom, RatioOneAndBudget) {
  Rng rng(14);
  const Dataset ds = coreset::testing::random_dataset(30, 40, 8, rng);
  const auto full = global_random(ds, 1.0, 1);
  EXPECT_EQ(full.retained_total, ds.face_count());

  const auto m = global_random(ds, 0.6, 9);
  EXPECT_EQ(m.retained_total, static_cast<std::size_t>(std::floor(0.6 * ds.face_count() + 0.5)));
  m.validate(ds);
  EXPECT_EQ(dump_manifest(m), dump_manifest(global_random(ds, 0.6, 9)));
}

TEST(GlobalRandom, TinyBudgetKeepsOnePerIdentity) {
  Rng rng(15);
  const Dataset ds = coreset::testing::random_dataset(25, 30, 8, rng);
  const auto m = global_random(ds, 0.001, 3);
  EXPECT_EQ(m.retained_total, ds.groups().size());
  for (const auto& [id, list] : m.retained) EXPECT_EQ(list.size(), 1u);
}

TEST(GlobalRandom, RestoresMostCentralFace) {
  // round(0.05 * 6) = 0 faces drawn, so both identities are restored
  const Dataset ds(2, {group_of({normalize({1.0, 0.0}), normalize({1.0, 0.9}), normalize({0.0, 1.0})}, "a"),
                       group_of({normalize({0.0, 1.0}), normalize({0.3, 1.0}), normalize({1.0, 0.2})}, "b")});
  const auto m = global_random(ds, 0.05, 4);
  EXPECT_EQ(m.retained_total, 2u);
  for (const auto& g : ds.groups()) {
    const auto scores = coreset::testing::oracle_center_scores(g);
    const auto best = std::max_element(scores.begin(), scores.end()) - scores.begin();
    EXPECT_EQ(m.retained.at(g.id), (IndexList{g.faces[best].index})) << g.id;
  }
}

TEST(ScoreFile, ParsingAndErrors) {
  const auto t = parse_scores("identity_id,face_index,score\na,0,0.5\na,1,-2\nweird,id,3,1e-3\n");
  EXPECT_EQ(t.at("a").at(1), -2.0);
  EXPECT_EQ(t.at("weird,id").at(3), 1e-3);
  EXPECT_EQ(kind_of([] { parse_scores("id,face,score\n"); }), ErrorKind::MalformedScoreFile);
  EXPECT_EQ(kind_of([] { parse_scores("identity_id,face_index,score\na,x,1\n"); }), ErrorKind::MalformedScoreFile);
  EXPECT_EQ(kind_of([] { parse_scores("identity_id,face_index,score\na,1\n"); }), ErrorKind::MalformedScoreFile);
  EXPECT_EQ(kind_of([] { parse_scores("identity_id,face_index,score\na,1,2\na,1,3\n"); }),
            ErrorKind::MalformedScoreFile);
  EXPECT_EQ(kind_of([] { parse_scores("identity_id,face_index,score\na,1,nan\n"); }), ErrorKind::MalformedScoreFile);
}

TEST(ScoreFile, TopKOrdersTiesAndMissing) {
  Rng rng(16);
  const Dataset ds = coreset::testing::random_dataset(6, 12, 6, rng);
  ScoreTable constant, random;
  std::uniform_real_distribution<double> u(-1, 1);
  for (const auto& g : ds.groups())
    for (const auto& f : g.faces) {
      constant[g.id][f.index] = 1.0;
      random[g.id][f.index] = u(rng);
    }
  const auto all = score_select(ds, random, 1.0, ScoreOrder::higher_score_first);
  EXPECT_EQ(all.retained_total, ds.face_count());

  const auto tied = score_select(ds, constant, 0.5, ScoreOrder::lower_score_first);
  for (const auto& g : ds.groups()) {
    const auto k = budget_for(0.5, g.size());
    IndexList lowest;
    for (std::size_t i = 0; i < k; ++i) lowest.push_back(g.faces[i].index);
    EXPECT_EQ(tied.retained.at(g.id), lowest);
  }

  for (ScoreOrder order : {ScoreOrder::higher_score_first, ScoreOrder::lower_score_first}) {
    const auto m = score_select(ds, random, 0.4, order);
    for (const auto& g : ds.groups()) {
      std::vector<std::pair<double, std::uint32_t>> keyed;
      for (const auto& f : g.faces)
        keyed.emplace_back(order == ScoreOrder::higher_score_first ? -random[g.id][f.index] : random[g.id][f.index],
                           f.index);
      std::sort(keyed.begin(), keyed.end());
      IndexList expected;
      for (std::size_t i = 0; i < budget_for(0.4, g.size()); ++i) expected.push_back(keyed[i].second);
      EXPECT_EQ(m.retained.at(g.id), sorted(expected));
    }
  }

  random.begin()->second.erase(random.begin()->second.begin());
  EXPECT_EQ(kind_of([&] { score_select(ds, random, 0.5, ScoreOrder::higher_score_first); }), ErrorKind::MissingScore);
}

TEST(Calibrate, TrivialTargets) {
  Rng rng(17);
  const Dataset ds = coreset::testing::random_dataset(10, 20, 8, rng);
  const auto full = calibrate_threshold(ds, 1.0, 0.001);
  EXPECT_EQ(full.n_t, 1.01);
  EXPECT_EQ(full.achieved_ratio, 1.0);

  std::vector<IdentityGroup> singles;
  for (int i = 0; i < 5; ++i) singles.push_back(group_of({coreset::testing::random_unit(4, rng)}, "s" + std::to_string(i)));
  const Dataset single(4, singles);
  for (double target : {0.2, 0.6}) EXPECT_EQ(calibrate_threshold(single, target, 0.01).achieved_ratio, 1.0);

  EXPECT_EQ(kind_of([&] { calibrate_threshold(ds, 0.0, 0.01); }), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of([&] { calibrate_threshold(ds, 0.5, 0.0); }), ErrorKind::ConfigError);
}

TEST(Calibrate, ReachesTargetOnSyntheticData) {
  SynthConfig cfg;
  cfg.identities = 60;
  cfg.seed = 3;
  const Dataset ds = generate(cfg).train;
  const auto c = calibrate_threshold(ds, 0.6, 0.005);
  EXPECT_TRUE(c.within_tol);
  EXPECT_NEAR(face_nms_ratio(ds, c.n_t), 0.6, 0.005);
  EXPECT_EQ(face_nms_ratio(ds, c.n_t), c.achieved_ratio);
}

TEST(RunSampler, ConfigValidation) {
  Rng rng(18);
  const Dataset ds = coreset::testing::random_dataset(4, 6, 4, rng);
  SamplerConfig c;
  c.strategy = Strategy::face_nms;
  EXPECT_EQ(kind_of([&] { run_sampler(ds, c); }), ErrorKind::ConfigError);
  c.n_t = 0.5;
  c.ratio = 0.5;
  EXPECT_EQ(kind_of([&] { run_sampler(ds, c); }), ErrorKind::ConfigError);
  c.strategy = Strategy::away_center;
  c.n_t.reset();
  c.ratio = 1.5;
  EXPECT_EQ(kind_of([&] { run_sampler(ds, c); }), ErrorKind::ConfigError);
  c.strategy = Strategy::score_file;
  c.ratio = 0.5;
  EXPECT_EQ(kind_of([&] { run_sampler(ds, c); }), ErrorKind::ConfigError);
}

TEST(RunSampler, EveryStrategyIsThreadIndependentAndCanonical) {
  Rng rng(19);
  const Dataset ds = coreset::testing::random_dataset(25, 30, 8, rng);
  const auto scores_path = std::filesystem::temp_directory_path() / "coreset_scores_unit.csv";
  {
    std::string csv = "identity_id,face_index,score\n";
    std::uniform_real_distribution<double> u;
    for (const auto& g : ds.groups())
      for (const auto& f : g.faces) csv += g.id + "," + std::to_string(f.index) + "," + std::to_string(u(rng)) + "\n";
    write_file(scores_path, csv);
  }
  for (Strategy s : {Strategy::face_nms, Strategy::away_center, Strategy::sim_threshold, Strategy::global_random,
                     Strategy::identity_random, Strategy::k_center, Strategy::score_file}) {
    SamplerConfig c;
    c.strategy = s;
    c.seed = 77;
    if (uses_threshold(s)) c.n_t = 0.7;
    else c.ratio = 0.6;
    if (s == Strategy::score_file) {
      c.score_path = scores_path.string();
      c.order = ScoreOrder::higher_score_first;
    }
    const auto m1 = run_sampler(ds, c, 1);
    const auto m4 = run_sampler(ds, c, 4);
    EXPECT_EQ(dump_manifest(m1), dump_manifest(m4)) << to_string(s);
    m1.validate(ds);
    for (const auto& [id, list] : m1.retained) {
      EXPECT_GE(list.size(), 1u);
      EXPECT_TRUE(std::is_sorted(list.begin(), list.end()));
    }
  }
  std::filesystem::remove(scores_path);
}
