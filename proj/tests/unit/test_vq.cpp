#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "../common/test_util.hpp"
#include "oracles.hpp"
#include "spkid/vq.hpp"

using namespace spkid;

namespace {

std::vector<std::vector<double>> clustered_pool(std::size_t n_clusters, std::size_t per_cluster,
                                                std::size_t dim, std::uint64_t seed,
                                                double spread = 0.05,
                                                std::vector<std::vector<double>>* centers_out =
                                                    nullptr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::vector<double>> centers(n_clusters, std::vector<double>(dim));
  for (auto& c : centers) {
    for (auto& v : c) v = 10.0 * u(rng);
  }
  std::vector<std::vector<double>> pool;
  for (std::size_t c = 0; c < n_clusters; ++c) {
    for (std::size_t i = 0; i < per_cluster; ++i) {
      std::vector<double> p = centers[c];
      for (auto& v : p) v += spread * u(rng);
      pool.push_back(std::move(p));
    }
  }
  if (centers_out) *centers_out = centers;
  return pool;
}

FeatureSequence constant_sequence(const std::vector<double>& v, std::size_t n) {
  FeatureSequence fs;
  fs.dim = v.size();
  fs.vectors.assign(n, v);
  return fs;
}

}  // namespace

TEST_CASE("distortion and similarity fixtures") {
  CHECK(distortion({1.0, 2.0}, {4.0, 6.0}) == Catch::Approx(25.0));
  CHECK(distortion({1.0}, {1.0}) == 0.0);
  CHECK(testutil::error_name([] { distortion({1.0}, {1.0, 2.0}); }) == "DimMismatch");

  CHECK(similarity({1.0, 0.0}, {0.0, 1.0}) == Catch::Approx(0.0).margin(1e-12));
  CHECK(similarity({2.0, 0.0}, {5.0, 0.0}) == Catch::Approx(1.0).margin(1e-12));
  CHECK(similarity({1.0, 0.0}, {-3.0, 0.0}) == Catch::Approx(-1.0).margin(1e-12));
  CHECK(testutil::error_name([] { similarity({0.0, 0.0}, {1.0, 0.0}); }) == "ZeroVector");
}

TEST_CASE("quantization agrees with brute-force nearest neighbour") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int instance = 0; instance < 200; ++instance) {
    const std::size_t dim = 1 + static_cast<std::size_t>(rng() % 6);
    const std::size_t k = 2 + static_cast<std::size_t>(rng() % 7);
    Codebook cb;
    cb.dim = dim;
    cb.codewords.assign(k, std::vector<double>(dim));
    for (auto& w : cb.codewords) {
      for (auto& v : w) v = u(rng);
    }
    cb.groups = {std::vector<std::size_t>(k)};
    for (std::size_t i = 0; i < k; ++i) cb.groups[0][i] = i;
    cb.leaders = {0};

    FeatureSequence fs;
    fs.dim = dim;
    fs.vectors.assign(4, std::vector<double>(dim));
    for (auto& v : fs.vectors) {
      for (auto& x : v) x = u(rng);
    }

    const QuantizeResult qr = quantize(fs, cb);
    REQUIRE(qr.symbols.size() == fs.size());
    double expect_avg = 0.0;
    for (std::size_t t = 0; t < fs.size(); ++t) {
      const std::size_t want = oracle::nearest(fs.vectors[t], cb.codewords);
      CHECK(qr.symbols[t] == want);
      expect_avg += distortion(fs.vectors[t], cb.codewords[want]);
    }
    CHECK(qr.avg_distortion ==
          Catch::Approx(expect_avg / static_cast<double>(fs.size())).margin(1e-12));
  }
}

TEST_CASE("quantization symbols are invariant under positive scaling") {
  const auto pool = clustered_pool(4, 20, 3, 7);
  const Codebook cb = lbg_train(pool, 4, 0.01, 1);

  FeatureSequence fs;
  fs.dim = 3;
  fs.vectors.assign(pool.begin(), pool.begin() + 30);
  const auto base = quantize(fs, cb).symbols;

  Codebook scaled_cb = cb;
  for (auto& w : scaled_cb.codewords) {
    for (auto& v : w) v *= 3.5;
  }
  FeatureSequence scaled_fs = fs;
  for (auto& v : scaled_fs.vectors) {
    for (auto& x : v) x *= 3.5;
  }
  CHECK(quantize(scaled_fs, scaled_cb).symbols == base);
}

TEST_CASE("codebook validation rejects broken partitions") {
  Codebook cb;
  cb.dim = 1;
  cb.codewords = {{0.0}, {1.0}};
  cb.groups = {{0}, {1}};
  cb.leaders = {0, 1};
  validate(cb);  // sane baseline

  Codebook missing = cb;
  missing.groups = {{0}};  // codeword 1 unassigned
  missing.leaders = {0};
  CHECK(testutil::error_name([&] { validate(missing); }) == "InvalidCodebook");

  Codebook overlap = cb;
  overlap.groups = {{0, 1}, {1}};
  CHECK(testutil::error_name([&] { validate(overlap); }) == "InvalidCodebook");

  Codebook foreign_leader = cb;
  foreign_leader.leaders = {1, 1};  // leader outside its own group
  CHECK(testutil::error_name([&] { validate(foreign_leader); }) == "InvalidCodebook");

  Codebook bad_meta = cb;
  bad_meta.member_meta = {{"a", "u1"}};
  CHECK(testutil::error_name([&] { validate(bad_meta); }) == "InvalidCodebook");
}

TEST_CASE("splitting trainer recovers well-separated clusters") {
  std::vector<std::vector<double>> centers;
  const auto pool = clustered_pool(4, 30, 2, 41, 0.05, &centers);
  std::vector<double> history;
  const Codebook cb = lbg_train(pool, 4, 0.01, 0, &history);
  validate(cb);
  REQUIRE(cb.size() == 4);
  CHECK(cb.leaders.size() == 1);
  CHECK(cb.groups.size() == 1);

  for (const auto& c : centers) {
    double best = 1e18;
    for (const auto& w : cb.codewords) best = std::min(best, distortion(c, w));
    CHECK(best < 0.01);  // a codeword sits on every cluster
  }
  for (std::size_t i = 1; i < history.size(); ++i) {
    CHECK(history[i] <= history[i - 1] + 1e-9);
  }
}

TEST_CASE("splitting trainer handles any codebook size") {
  const auto pool = clustered_pool(5, 25, 3, 8);
  for (const std::size_t k : {1ul, 3ul, 5ul, 6ul, 8ul}) {
    const Codebook cb = lbg_train(pool, k, 0.01, 0);
    validate(cb);
    CHECK(cb.size() == k);
  }

  const Codebook single = lbg_train(pool, 1, 0.01, 0);
  const auto centroid = single.codewords[0];
  std::vector<double> mean(3, 0.0);
  for (const auto& p : pool) {
    for (std::size_t i = 0; i < 3; ++i) mean[i] += p[i];
  }
  for (auto& m : mean) m /= static_cast<double>(pool.size());
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(centroid[i] == Catch::Approx(mean[i]).margin(1e-9));
  }

  CHECK(testutil::error_name([&] { lbg_train(pool, pool.size() + 1, 0.01, 0); }) ==
        "PoolTooSmall");
  CHECK(testutil::error_name([&] { lbg_train(pool, 4, 0.0, 0); }) == "ConfigInvalid");
}

TEST_CASE("chromosome fitness fixtures") {
  const std::vector<std::vector<double>> pool = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  GaConfig cfg;
  // Selecting the whole pool quantizes it perfectly.
  CHECK(ga_fitness({0, 1, 2}, pool, cfg) == Catch::Approx(0.0).margin(1e-15));
  CHECK(ga_fitness({1}, pool, cfg) < 0.0);

  GaConfig cos_cfg;
  cos_cfg.fitness_mode = FitnessMode::Similarity;
  const std::vector<std::vector<double>> rays = {{1.0, 0.0}, {2.0, 0.0}, {3.0, 0.0}};
  CHECK(ga_fitness({0}, rays, cos_cfg) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("genetic training never falls below its seeded chromosome") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto pool = clustered_pool(6, 20, 4, seed * 13, 0.5);
    GaConfig cfg;
    cfg.seed = seed;
    const GaTrainResult res = ga_train(pool, 8, cfg);
    validate(res.codebook);
    CHECK(res.best_fitness >= res.lbg_seed_fitness);
    REQUIRE(res.history.size() == cfg.generations);
    for (std::size_t g = 1; g < res.history.size(); ++g) {
      CHECK(res.history[g] >= res.history[g - 1] - 1e-12);
    }
    // Chromosomes index the pool, so every codeword is a pool vector.
    REQUIRE(res.best_genes.size() == 8);
    for (std::size_t i = 0; i < res.best_genes.size(); ++i) {
      CHECK(res.codebook.codewords[i] == pool[res.best_genes[i]]);
    }
    const auto sorted = [&] {
      auto g = res.best_genes;
      std::sort(g.begin(), g.end());
      return g;
    }();
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());  // distinct genes
  }
}

TEST_CASE("genetic training finds the exhaustive optimum on a tiny pool") {
  for (const std::uint64_t seed : {3ull, 11ull}) {
    const auto pool = clustered_pool(2, 3, 2, seed, 1.0);
    REQUIRE(pool.size() == 6);
    GaConfig cfg;
    cfg.seed = seed;
    cfg.generations = 20;
    cfg.mutation_prob = 0.2;

    double best = -1e18;
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = i + 1; j < 6; ++j) {
        best = std::max(best, ga_fitness({i, j}, pool, cfg));
      }
    }
    const GaTrainResult res = ga_train(pool, 2, cfg);
    CHECK(res.best_fitness == Catch::Approx(best).margin(1e-12));
  }
}

TEST_CASE("genetic training validates its inputs") {
  const std::vector<std::vector<double>> tiny = {{0.0}, {1.0}};
  CHECK(testutil::error_name([&] { ga_train(tiny, 3, GaConfig{}); }) == "PoolTooSmall");
  GaConfig bad;
  bad.population_size = 1;
  CHECK(testutil::error_name([&] { ga_train(tiny, 2, bad); }) == "ConfigInvalid");
  bad = {};
  bad.elitism_count = 0;
  CHECK(testutil::error_name([&] { ga_train(tiny, 2, bad); }) == "ConfigInvalid");
  bad = {};
  bad.mutation_prob = 1.5;
  CHECK(testutil::error_name([&] { ga_train(tiny, 2, bad); }) == "ConfigInvalid");
}

TEST_CASE("grouping splits utterances along their noise affinity") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  const auto family_vec = [&](std::size_t axis) {
    std::vector<double> v(3, 0.0);
    v[axis] = 1.0;
    for (auto& x : v) x += jitter(rng);
    return v;
  };

  std::vector<EnrolledUtterance> enrolled;
  for (std::size_t i = 0; i < 4; ++i) {
    enrolled.push_back({"sp" + std::to_string(i % 2 + 1), "a" + std::to_string(i),
                        constant_sequence(family_vec(0), 5)});
  }
  for (std::size_t i = 0; i < 4; ++i) {
    enrolled.push_back({"sp" + std::to_string(i % 2 + 3), "b" + std::to_string(i),
                        constant_sequence(family_vec(1), 5)});
  }
  const std::vector<FeatureSequence> refs = {constant_sequence({1.0, 0.0, 0.0}, 6),
                                             constant_sequence({0.0, 1.0, 0.0}, 6)};

  const Codebook cb = build_groups(enrolled, refs, 2, 1);
  validate(cb);
  REQUIRE(cb.size() == 8);
  REQUIRE(cb.groups.size() == 2);
  REQUIRE(cb.member_meta.size() == 8);

  // Each group holds exactly one family (first four indices vs last four).
  for (const auto& group : cb.groups) {
    REQUIRE(!group.empty());
    const bool first_family = group[0] < 4;
    for (const std::size_t idx : group) {
      CHECK((idx < 4) == first_family);
    }
  }
  for (std::size_t g = 0; g < cb.groups.size(); ++g) {
    CHECK(std::find(cb.groups[g].begin(), cb.groups[g].end(), cb.leaders[g]) !=
          cb.groups[g].end());
  }
}

TEST_CASE("grouping edge cases and errors") {
  std::vector<EnrolledUtterance> enrolled;
  for (std::size_t i = 0; i < 3; ++i) {
    enrolled.push_back({"sp" + std::to_string(i), "u" + std::to_string(i),
                        constant_sequence({static_cast<double>(i), 1.0}, 4)});
  }
  const std::vector<FeatureSequence> refs = {constant_sequence({1.0, 1.0}, 4)};

  const Codebook one = build_groups(enrolled, refs, 1, 9);
  REQUIRE(one.groups.size() == 1);
  CHECK(one.groups[0].size() == 3);

  const Codebook singletons = build_groups(enrolled, refs, 3, 9);
  REQUIRE(singletons.groups.size() == 3);
  for (const auto& g : singletons.groups) CHECK(g.size() == 1);

  CHECK(testutil::error_name([&] { build_groups(enrolled, refs, 4, 9); }) == "TooFewUtterances");
  CHECK(testutil::error_name([&] { build_groups(enrolled, refs, 0, 9); }) == "TooFewUtterances");
  CHECK(testutil::error_name([&] { build_groups(enrolled, {}, 2, 9); }) == "NoNoiseRefs");
  CHECK(testutil::error_name([&] { build_groups({}, refs, 1, 9); }) == "TooFewUtterances");
}

TEST_CASE("group encoding picks the closest leader, ties to the lowest") {
  Codebook cb;
  cb.dim = 1;
  cb.codewords = {{0.0}, {10.0}};
  cb.groups = {{0}, {1}};
  cb.leaders = {0, 1};
  CHECK(encode(constant_sequence({1.0}, 3), cb) == 0);
  CHECK(encode(constant_sequence({9.0}, 3), cb) == 1);
  CHECK(encode(constant_sequence({5.0}, 3), cb) == 0);  // equidistant
  CHECK(testutil::error_name([&] { encode(constant_sequence({1.0, 2.0}, 3), cb); }) ==
        "DimMismatch");
}

namespace {

RecognitionModel two_speaker_model() {
  RecognitionModel rm;
  rm.quantizer.dim = 1;
  rm.quantizer.codewords = {{0.0}, {1.0}};
  rm.quantizer.groups = {{0, 1}};
  rm.quantizer.leaders = {0};

  rm.grouping.dim = 1;
  rm.grouping.codewords = {{0.0}, {10.0}};
  rm.grouping.groups = {{0}, {1}};
  rm.grouping.leaders = {0, 1};
  rm.grouping.member_meta = {{"a", "u0"}, {"b", "u1"}};

  Dhmm likes0{{1.0}, {{1.0}}, {{0.9, 0.1}}};
  Dhmm likes1{{1.0}, {{1.0}}, {{0.1, 0.9}}};
  rm.models = {{"b", likes1}, {"a", likes0}};  // deliberately unsorted
  return rm;
}

}  // namespace

TEST_CASE("identification narrows by group or scores everyone") {
  const RecognitionModel rm = two_speaker_model();
  // Mean 0.9 encodes to group 0 (distance 0.81 vs 82.81), whose only member
  // is speaker a, even though the symbols favour speaker b.
  const FeatureSequence probe = constant_sequence({0.9}, 6);

  const IdentifyResult grouped = identify_detailed(probe, rm, IdentifyMode::Grouped);
  CHECK(grouped.speaker_id == "a");
  CHECK(grouped.group == 0);
  CHECK(grouped.scores.size() == 1);

  const IdentifyResult all = identify_detailed(probe, rm, IdentifyMode::Exhaustive);
  CHECK(all.speaker_id == "b");
  REQUIRE(all.scores.size() == 2);
  CHECK(all.scores[0].first == "a");  // score list is id-ordered
  CHECK(all.scores[1].first == "b");
  CHECK(all.scores[1].second > all.scores[0].second);

  CHECK(identify(probe, rm, IdentifyMode::Exhaustive) == "b");
}

TEST_CASE("identification ties break to the lowest speaker id") {
  RecognitionModel rm = two_speaker_model();
  rm.models[0].model = rm.models[1].model;  // b now scores exactly like a
  const FeatureSequence probe = constant_sequence({0.1}, 4);
  CHECK(identify(probe, rm, IdentifyMode::Exhaustive) == "a");
}

TEST_CASE("identification input validation") {
  RecognitionModel rm = two_speaker_model();
  const FeatureSequence probe = constant_sequence({0.2}, 4);

  RecognitionModel empty = rm;
  empty.models.clear();
  CHECK(testutil::error_name([&] { identify(probe, empty, IdentifyMode::Exhaustive); }) ==
        "EmptyModelSet");

  CHECK(testutil::error_name([&] {
          identify(constant_sequence({0.2, 0.3}, 4), rm, IdentifyMode::Exhaustive);
        }) == "DimMismatch");

  RecognitionModel no_meta = rm;
  no_meta.grouping.member_meta.clear();
  CHECK(testutil::error_name([&] { identify(probe, no_meta, IdentifyMode::Grouped); }) ==
        "ConfigInvalid");

  CHECK(parse_identify_mode("grouped") == IdentifyMode::Grouped);
  CHECK(parse_identify_mode("exhaustive") == IdentifyMode::Exhaustive);
  CHECK(testutil::error_name([] { parse_identify_mode("open_set"); }) == "ConfigInvalid");
}
