#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "../common/test_util.hpp"
#include "oracles.hpp"
#include "spkid/dhmm.hpp"

using namespace spkid;

namespace {

Dhmm random_model(std::size_t n_states, std::size_t n_symbols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Dhmm m;
  m.pi.resize(n_states);
  m.trans.assign(n_states, std::vector<double>(n_states));
  m.emis.assign(n_states, std::vector<double>(n_symbols));
  const auto fill = [&](std::vector<double>& row) {
    double sum = 0.0;
    for (auto& v : row) sum += (v = u(rng));
    for (auto& v : row) v /= sum;
  };
  fill(m.pi);
  for (auto& row : m.trans) fill(row);
  for (auto& row : m.emis) fill(row);
  return m;
}

std::vector<std::size_t> sample_sequence(const Dhmm& m, std::size_t len, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto pick = [&](const std::vector<double>& dist) {
    double r = u(rng), acc = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
      acc += dist[i];
      if (r <= acc) return i;
    }
    return dist.size() - 1;
  };
  std::vector<std::size_t> seq(len);
  std::size_t state = pick(m.pi);
  seq[0] = pick(m.emis[state]);
  for (std::size_t t = 1; t < len; ++t) {
    state = pick(m.trans[state]);
    seq[t] = pick(m.emis[state]);
  }
  return seq;
}

}  // namespace

TEST_CASE("fresh models have the requested topology") {
  HmmConfig cfg;
  const Dhmm ltr = init_model(4, 8, cfg);
  CHECK(ltr.pi[0] == 1.0);
  for (std::size_t i = 1; i < 4; ++i) CHECK(ltr.pi[i] == 0.0);
  for (std::size_t i = 0; i + 1 < 4; ++i) {
    CHECK(ltr.trans[i][i] == 0.5);
    CHECK(ltr.trans[i][i + 1] == 0.5);
    for (std::size_t j = 0; j < 4; ++j) {
      if (j != i && j != i + 1) CHECK(ltr.trans[i][j] == 0.0);
    }
  }
  CHECK(ltr.trans[3][3] == 1.0);

  cfg.topology = HmmTopology::Ergodic;
  const Dhmm erg = init_model(3, 4, cfg);
  for (const auto& row : erg.trans) {
    for (const double a : row) CHECK(a == Catch::Approx(1.0 / 3.0));
  }

  for (const Dhmm* m : {&ltr, &erg}) {
    for (const auto& row : m->emis) {
      double sum = 0.0;
      for (const double b : row) {
        CHECK(b > 0.0);
        sum += b;
      }
      CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    }
  }

  // Different seeds perturb the emissions differently.
  HmmConfig other = cfg;
  other.seed = 99;
  CHECK(init_model(3, 4, cfg).emis[0] != init_model(3, 4, other).emis[0]);

  CHECK(testutil::error_name([&] { init_model(0, 4, cfg); }) == "ConfigInvalid");
  CHECK(testutil::error_name([&] { init_model(3, 1, cfg); }) == "ConfigInvalid");
}

TEST_CASE("single-state likelihood is the sum of emission logs") {
  const Dhmm m{{1.0}, {{1.0}}, {{0.5, 0.5}}};
  CHECK(log_likelihood(m, {0, 1, 0, 1}) == Catch::Approx(4.0 * std::log(0.5)).margin(1e-12));

  const Dhmm biased{{1.0}, {{1.0}}, {{0.25, 0.75}}};
  CHECK(log_likelihood(biased, {1, 1, 0}) ==
        Catch::Approx(2.0 * std::log(0.75) + std::log(0.25)).margin(1e-12));
}

TEST_CASE("forward likelihood matches explicit path enumeration") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n_states = 1 + static_cast<std::size_t>(rng() % 3);
    const std::size_t n_symbols = 2 + static_cast<std::size_t>(rng() % 3);
    const std::size_t len = 1 + static_cast<std::size_t>(rng() % 6);
    const Dhmm m = random_model(n_states, n_symbols, rng);
    std::vector<std::size_t> seq(len);
    for (auto& s : seq) s = rng() % n_symbols;

    const double fast = log_likelihood(m, seq);
    const double slow = std::log(oracle::hmm_path_probability(m, seq));
    CHECK(fast == Catch::Approx(slow).margin(1e-10));
  }
}

TEST_CASE("scaling keeps a thousand-frame sequence finite") {
  std::mt19937_64 rng(7);
  const Dhmm m = random_model(3, 4, rng);
  std::vector<std::size_t> seq(1000);
  for (auto& s : seq) s = rng() % 4;
  const double ll = log_likelihood(m, seq);
  CHECK(std::isfinite(ll));
  CHECK(ll < 0.0);
}

TEST_CASE("impossible sequences score minus infinity") {
  const Dhmm m{{1.0}, {{1.0}}, {{1.0, 0.0}}};
  CHECK(log_likelihood(m, {0, 0}) == Catch::Approx(0.0).margin(1e-12));
  CHECK(log_likelihood(m, {0, 1}) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("relabelling the symbols permutes nothing but the emission columns") {
  std::mt19937_64 rng(31);
  const Dhmm m = random_model(3, 3, rng);
  Dhmm swapped = m;
  for (auto& row : swapped.emis) std::swap(row[0], row[2]);  // relabel 0 <-> 2

  std::vector<std::size_t> seq = {0, 2, 1, 2, 0, 0, 1};
  std::vector<std::size_t> relabelled = seq;
  for (auto& s : relabelled) s = (s == 0) ? 2 : (s == 2) ? 0 : s;

  CHECK(log_likelihood(m, seq) == Catch::Approx(log_likelihood(swapped, relabelled)).margin(1e-12));
}

TEST_CASE("sequence validation") {
  const Dhmm m{{1.0}, {{1.0}}, {{0.5, 0.5}}};
  CHECK(testutil::error_name([&] { log_likelihood(m, {}); }) == "EmptySequence");
  CHECK(testutil::error_name([&] { log_likelihood(m, {0, 3}); }) == "SymbolOutOfRange");
}

TEST_CASE("training is monotone and fits the data") {
  std::mt19937_64 rng(77);
  const Dhmm truth = random_model(2, 4, rng);
  std::vector<std::vector<std::size_t>> sequences;
  for (int i = 0; i < 6; ++i) sequences.push_back(sample_sequence(truth, 60, rng));

  HmmConfig cfg;
  cfg.n_states = 2;
  cfg.topology = HmmTopology::Ergodic;
  cfg.max_iters = 20;
  cfg.tol = 0.0;  // run every iteration
  std::vector<double> history;
  const Dhmm trained = baum_welch(sequences, 4, cfg, &history);

  REQUIRE(history.size() == 20);
  for (std::size_t i = 1; i < history.size(); ++i) {
    CHECK(history[i] >= history[i - 1] - 1e-6);
  }
  CHECK(history.back() > history.front());

  for (const auto& row : trained.trans) {
    double sum = 0.0;
    for (const double a : row) {
      CHECK(a > 0.0);  // floors keep every move possible
      sum += a;
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("a single-state model learns the empirical symbol frequencies") {
  HmmConfig cfg;
  cfg.n_states = 1;
  cfg.max_iters = 5;
  const std::vector<std::vector<std::size_t>> sequences = {{0, 0, 0, 1}, {0, 1, 0, 0}};
  const Dhmm m = baum_welch(sequences, 2, cfg);
  REQUIRE(m.n_states() == 1);
  CHECK(m.trans[0][0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(m.emis[0][0] == Catch::Approx(0.75).margin(1e-6));
  CHECK(m.emis[0][1] == Catch::Approx(0.25).margin(1e-6));
}

TEST_CASE("a generous tolerance stops training early") {
  std::mt19937_64 rng(15);
  const Dhmm truth = random_model(2, 3, rng);
  const std::vector<std::vector<std::size_t>> sequences = {sample_sequence(truth, 40, rng)};

  HmmConfig cfg;
  cfg.n_states = 2;
  cfg.max_iters = 50;
  cfg.tol = 1e9;
  std::vector<double> history;
  baum_welch(sequences, 3, cfg, &history);
  CHECK(history.size() == 2);  // the stop triggers on the first measurable gain

  CHECK(testutil::error_name([&] { baum_welch({}, 3, cfg); }) == "EmptySequence");
  HmmConfig bad = cfg;
  bad.max_iters = 0;
  CHECK(testutil::error_name([&] { baum_welch(sequences, 3, bad); }) == "ConfigInvalid");
}
