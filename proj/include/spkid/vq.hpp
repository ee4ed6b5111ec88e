#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "spkid/dhmm.hpp"
#include "spkid/error.hpp"
#include "spkid/features.hpp"
#include "spkid/rng.hpp"

namespace spkid {

// ---------------------------------------------------------------------------
// Distortion and similarity
// ---------------------------------------------------------------------------

/// Squared Euclidean distance.
inline double distortion(const std::vector<double>& v, const std::vector<double>& w) {
  require(v.size() == w.size(), "DimMismatch", "vector dimensions differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - w[i];
    acc += d * d;
  }
  return acc;
}

/// Cosine similarity (a.b)/(|a||b|).
inline double similarity(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), "DimMismatch", "vector dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  require(na > 0.0 && nb > 0.0, "ZeroVector", "cosine similarity of a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---------------------------------------------------------------------------
// Codebook
// ---------------------------------------------------------------------------

struct CodewordMeta {
  std::string speaker_id;
  std::string utterance_id;
};

/// Codeword vectors partitioned into groups, each group represented by one
/// leading codeword. Frame-level quantizer codebooks normally hold a single
/// group; utterance-level grouping codebooks carry per-codeword provenance.
struct Codebook {
  std::size_t dim = 0;
  std::vector<std::vector<double>> codewords;
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> leaders;
  std::vector<CodewordMeta> member_meta;  ///< empty, or one entry per codeword

  std::size_t size() const { return codewords.size(); }
};

/// Partition / leader / finiteness invariants; throws on violation.
inline void validate(const Codebook& cb) {
  require(!cb.codewords.empty(), "InvalidCodebook", "codebook has no codewords");
  for (const auto& cw : cb.codewords) {
    require(cw.size() == cb.dim, "InvalidCodebook", "codeword dimension mismatch");
    for (double x : cw) {
      require(std::isfinite(x), "InvalidCodebook", "non-finite codeword entry");
    }
  }
  require(!cb.groups.empty() && cb.groups.size() == cb.leaders.size(), "InvalidCodebook",
          "groups and leaders must pair up");
  std::vector<char> seen(cb.size(), 0);
  for (std::size_t g = 0; g < cb.groups.size(); ++g) {
    require(!cb.groups[g].empty(), "InvalidCodebook", "empty group");
    bool leader_in_group = false;
    for (std::size_t idx : cb.groups[g]) {
      require(idx < cb.size(), "InvalidCodebook", "group index out of range");
      require(!seen[idx], "InvalidCodebook", "groups overlap");
      seen[idx] = 1;
      leader_in_group |= (idx == cb.leaders[g]);
    }
    require(leader_in_group, "InvalidCodebook", "leader outside its group");
  }
  require(std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; }), "InvalidCodebook",
          "groups do not cover all codewords");
  require(cb.member_meta.empty() || cb.member_meta.size() == cb.size(), "InvalidCodebook",
          "member metadata must cover every codeword or none");
}

namespace detail {

inline std::vector<std::size_t> single_group(std::size_t k) {
  std::vector<std::size_t> all(k);
  std::iota(all.begin(), all.end(), 0);
  return all;
}

/// Index of the minimum-distortion codeword; ties to the lowest index.
inline std::size_t nearest_codeword(const std::vector<double>& v,
                                    const std::vector<std::vector<double>>& codewords,
                                    double* best_dist = nullptr) {
  std::size_t best = 0;
  double best_d = distortion(v, codewords[0]);
  for (std::size_t i = 1; i < codewords.size(); ++i) {
    const double d = distortion(v, codewords[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  if (best_dist) *best_dist = best_d;
  return best;
}

}  // namespace detail

struct QuantizeResult {
  std::vector<std::size_t> symbols;
  double avg_distortion = 0.0;
};

/// Map each frame to its minimum-distortion codeword index.
inline QuantizeResult quantize(const FeatureSequence& fs, const Codebook& cb) {
  require(!fs.empty(), "EmptySequence", "cannot quantize an empty feature sequence");
  require(fs.dim == cb.dim, "DimMismatch", "feature and codebook dimensions differ");
  QuantizeResult qr;
  qr.symbols.reserve(fs.size());
  double total = 0.0;
  for (const auto& v : fs.vectors) {
    double d = 0.0;
    qr.symbols.push_back(detail::nearest_codeword(v, cb.codewords, &d));
    total += d;
  }
  qr.avg_distortion = total / static_cast<double>(fs.size());
  return qr;
}

// ---------------------------------------------------------------------------
// LBG training
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> pool_centroid(const std::vector<std::vector<double>>& pool) {
  std::vector<double> c(pool[0].size(), 0.0);
  for (const auto& v : pool) {
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += v[i];
  }
  for (double& x : c) x /= static_cast<double>(pool.size());
  return c;
}

/// One assignment pass; returns average distortion and per-vector owners.
inline double assign_cells(const std::vector<std::vector<double>>& pool,
                           const std::vector<std::vector<double>>& codewords,
                           std::vector<std::size_t>& owner) {
  owner.resize(pool.size());
  double total = 0.0;
  for (std::size_t t = 0; t < pool.size(); ++t) {
    double d = 0.0;
    owner[t] = nearest_codeword(pool[t], codewords, &d);
    total += d;
  }
  return total / static_cast<double>(pool.size());
}

/// Re-seed codewords that own no pool vector at the pool vector farthest from
/// its current nearest codeword. Returns true if anything moved.
inline bool repair_empty_cells(const std::vector<std::vector<double>>& pool,
                               std::vector<std::vector<double>>& codewords,
                               std::vector<std::size_t>& owner) {
  bool repaired = false;
  for (std::size_t c = 0; c < codewords.size(); ++c) {
    if (std::find(owner.begin(), owner.end(), c) != owner.end()) continue;
    std::size_t far_t = 0;
    double far_d = -1.0;
    for (std::size_t t = 0; t < pool.size(); ++t) {
      double d = 0.0;
      nearest_codeword(pool[t], codewords, &d);
      if (d > far_d) {
        far_d = d;
        far_t = t;
      }
    }
    codewords[c] = pool[far_t];
    repaired = true;
    assign_cells(pool, codewords, owner);
  }
  return repaired;
}

}  // namespace detail

/// Splitting LBG: start from the pool centroid, perturb-split by (1 +/- epsilon)
/// until k codewords, Lloyd-refining after every split. When a full doubling
/// would overshoot k, only the highest-distortion cells split. Empty cells are
/// re-seeded at the farthest pool vector; aside from such repairs the recorded
/// average distortion is non-increasing within each refinement.
inline Codebook lbg_train(const std::vector<std::vector<double>>& pool, std::size_t k,
                          double epsilon, std::uint64_t seed,
                          std::vector<double>* distortion_history = nullptr) {
  require(k >= 1, "ConfigInvalid", "codebook size must be at least 1");
  require(pool.size() >= k, "PoolTooSmall",
          "pool of " + std::to_string(pool.size()) + " cannot fill " + std::to_string(k) +
              " codewords");
  require(epsilon > 0.0, "ConfigInvalid", "epsilon must be positive");
  (void)seed;  // kept for interface symmetry; splitting LBG is deterministic
  if (distortion_history) distortion_history->clear();

  std::vector<std::vector<double>> codewords{detail::pool_centroid(pool)};
  std::vector<std::size_t> owner;

  auto refine = [&]() {
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 100; ++it) {
      double d = detail::assign_cells(pool, codewords, owner);
      if (detail::repair_empty_cells(pool, codewords, owner)) {
        d = detail::assign_cells(pool, codewords, owner);
      }
      if (distortion_history) distortion_history->push_back(d);
      // prev is infinite on the first pass; inf - d <= 1e-12 * inf would hold
      if (std::isfinite(prev) && prev - d <= 1e-12 * std::max(1.0, prev)) break;
      prev = d;
      // centroid update
      std::vector<std::vector<double>> sums(codewords.size(),
                                            std::vector<double>(pool[0].size(), 0.0));
      std::vector<std::size_t> counts(codewords.size(), 0);
      for (std::size_t t = 0; t < pool.size(); ++t) {
        for (std::size_t i = 0; i < sums[owner[t]].size(); ++i) sums[owner[t]][i] += pool[t][i];
        ++counts[owner[t]];
      }
      for (std::size_t c = 0; c < codewords.size(); ++c) {
        if (counts[c] == 0) continue;
        for (std::size_t i = 0; i < sums[c].size(); ++i) {
          codewords[c][i] = sums[c][i] / static_cast<double>(counts[c]);
        }
      }
    }
  };

  refine();
  while (codewords.size() < k) {
    std::size_t n_split = std::min(codewords.size(), k - codewords.size());
    if (n_split < codewords.size()) {
      // split the cells contributing the most distortion
      detail::assign_cells(pool, codewords, owner);
      std::vector<double> cell_dist(codewords.size(), 0.0);
      for (std::size_t t = 0; t < pool.size(); ++t) {
        cell_dist[owner[t]] += distortion(pool[t], codewords[owner[t]]);
      }
      std::vector<std::size_t> order(codewords.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return cell_dist[a] > cell_dist[b]; });
      order.resize(n_split);
      std::sort(order.begin(), order.end());
      for (std::size_t c : order) {
        std::vector<double> up = codewords[c], down = codewords[c];
        for (double& x : up) x *= (1.0 + epsilon);
        for (double& x : down) x *= (1.0 - epsilon);
        codewords[c] = up;
        codewords.push_back(down);
      }
    } else {
      std::vector<std::vector<double>> next;
      next.reserve(codewords.size() * 2);
      for (const auto& c : codewords) {
        std::vector<double> up = c, down = c;
        for (double& x : up) x *= (1.0 + epsilon);
        for (double& x : down) x *= (1.0 - epsilon);
        next.push_back(up);
        next.push_back(down);
      }
      codewords = std::move(next);
    }
    refine();
  }

  Codebook cb;
  cb.dim = pool[0].size();
  cb.codewords = std::move(codewords);
  cb.groups = {detail::single_group(cb.size())};
  cb.leaders = {0};
  validate(cb);
  return cb;
}

// ---------------------------------------------------------------------------
// GA training
// ---------------------------------------------------------------------------

enum class FitnessMode { NegDistortion, Similarity };

struct GaConfig {
  std::size_t population_size = 30;
  std::size_t generations = 10;
  std::size_t crossover_points = 5;
  double mutation_prob = 0.05;
  std::size_t elitism_count = 2;
  std::uint64_t seed = 0;
  FitnessMode fitness_mode = FitnessMode::NegDistortion;
};

inline void validate(const GaConfig& cfg) {
  require(cfg.population_size >= 2, "ConfigInvalid", "population must hold at least 2 chromosomes");
  require(cfg.elitism_count >= 1 && cfg.elitism_count <= cfg.population_size, "ConfigInvalid",
          "elitism count must lie in [1, population_size]");
  require(cfg.crossover_points >= 1, "ConfigInvalid", "need at least one crossover point");
  require(cfg.mutation_prob >= 0.0 && cfg.mutation_prob <= 1.0, "ConfigInvalid",
          "mutation probability must lie in [0, 1]");
  require(cfg.generations >= 1, "ConfigInvalid", "need at least one generation");
}

/// Fitness of an index-chromosome over a training pool. NEG_DISTORTION is the
/// negative mean quantization distortion (0 is perfect); SIMILARITY is the
/// mean cosine between each pool vector and its nearest selected codeword.
inline double ga_fitness(const std::vector<std::size_t>& genes,
                         const std::vector<std::vector<double>>& pool, const GaConfig& cfg) {
  require(!genes.empty(), "ConfigInvalid", "empty chromosome");
  std::vector<std::vector<double>> codewords;
  codewords.reserve(genes.size());
  for (std::size_t g : genes) {
    require(g < pool.size(), "ConfigInvalid", "chromosome gene outside the pool");
    codewords.push_back(pool[g]);
  }
  double acc = 0.0;
  for (const auto& v : pool) {
    double d = 0.0;
    const std::size_t near = detail::nearest_codeword(v, codewords, &d);
    acc += (cfg.fitness_mode == FitnessMode::NegDistortion) ? -d
                                                            : similarity(v, codewords[near]);
  }
  return acc / static_cast<double>(pool.size());
}

struct GaTrainResult {
  Codebook codebook;
  std::vector<std::size_t> best_genes;
  double best_fitness = 0.0;
  double lbg_seed_fitness = 0.0;
  std::vector<double> history;  ///< best population fitness per generation
};

namespace detail {

/// k distinct indices drawn uniformly from [0, n) by partial Fisher-Yates.
inline std::vector<std::size_t> random_distinct(std::size_t n, std::size_t k,
                                                std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

/// Replace duplicate genes with random indices unused by the chromosome.
inline void repair_duplicates(std::vector<std::size_t>& genes, std::size_t pool_size,
                              std::mt19937_64& rng) {
  std::vector<char> used(pool_size, 0);
  for (std::size_t i = 0; i < genes.size(); ++i) {
    if (!used[genes[i]]) {
      used[genes[i]] = 1;
      continue;
    }
    std::size_t candidate;
    do {
      candidate = static_cast<std::size_t>(rng() % pool_size);
    } while (used[candidate]);
    genes[i] = candidate;
    used[candidate] = 1;
  }
}

/// Roulette pick over fitness values shifted so the worst chromosome still
/// has a small positive weight.
inline std::size_t roulette(const std::vector<double>& fitness, std::mt19937_64& rng) {
  const double lo = *std::min_element(fitness.begin(), fitness.end());
  const double hi = *std::max_element(fitness.begin(), fitness.end());
  const double floor_w = (hi - lo) * 1e-3 + 1e-12;
  std::vector<double> cum(fitness.size());
  double total = 0.0;
  for (std::size_t i = 0; i < fitness.size(); ++i) {
    total += (fitness[i] - lo) + floor_w;
    cum[i] = total;
  }
  const double u = unit_uniform(rng) * total;
  const auto it = std::upper_bound(cum.begin(), cum.end(), u);
  return static_cast<std::size_t>(std::min<std::ptrdiff_t>(
      std::distance(cum.begin(), it), static_cast<std::ptrdiff_t>(fitness.size()) - 1));
}

/// n-point crossover producing two children; cut positions are distinct and
/// capped at the number of gene boundaries.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> crossover(
    const std::vector<std::size_t>& p1, const std::vector<std::size_t>& p2, std::size_t n_points,
    std::mt19937_64& rng) {
  const std::size_t k = p1.size();
  if (k < 2) return {p1, p2};
  const std::size_t n_cuts = std::min(n_points, k - 1);
  std::vector<std::size_t> cuts = random_distinct(k - 1, n_cuts, rng);
  for (std::size_t& c : cuts) ++c;  // cut positions in [1, k-1]
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(k);

  std::vector<std::size_t> c1, c2;
  c1.reserve(k);
  c2.reserve(k);
  bool from_first = true;
  std::size_t start = 0;
  for (std::size_t cut : cuts) {
    const auto* a = from_first ? &p1 : &p2;
    const auto* b = from_first ? &p2 : &p1;
    c1.insert(c1.end(), a->begin() + static_cast<std::ptrdiff_t>(start),
              a->begin() + static_cast<std::ptrdiff_t>(cut));
    c2.insert(c2.end(), b->begin() + static_cast<std::ptrdiff_t>(start),
              b->begin() + static_cast<std::ptrdiff_t>(cut));
    start = cut;
    from_first = !from_first;
  }
  return {std::move(c1), std::move(c2)};
}

inline void mutate(std::vector<std::size_t>& genes, std::size_t pool_size, double prob,
                   std::mt19937_64& rng) {
  if (pool_size <= genes.size()) return;  // no unused index to mutate into
  std::vector<char> used(pool_size, 0);
  for (std::size_t g : genes) used[g] = 1;
  for (std::size_t& g : genes) {
    if (unit_uniform(rng) >= prob) continue;
    std::size_t candidate;
    do {
      candidate = static_cast<std::size_t>(rng() % pool_size);
    } while (used[candidate]);
    used[g] = 0;
    g = candidate;
    used[g] = 1;
  }
}

}  // namespace detail

/// Genetic codebook search over index-chromosomes. The initial population is
/// uniform random except for one chromosome seeded from the LBG solution
/// (nearest pool vector per LBG codeword). Roulette selection, n-point
/// crossover with duplicate repair, per-gene mutation and elitism; the best
/// chromosome ever seen is returned. Elitism makes the per-generation best
/// non-decreasing, and the result is never worse than the LBG seed.
inline GaTrainResult ga_train(const std::vector<std::vector<double>>& pool, std::size_t k,
                              const GaConfig& cfg) {
  validate(cfg);
  require(k >= 1, "ConfigInvalid", "codebook size must be at least 1");
  require(pool.size() >= k, "PoolTooSmall",
          "pool of " + std::to_string(pool.size()) + " cannot fill " + std::to_string(k) +
              " codewords");

  std::mt19937_64 rng(cfg.seed);

  // LBG-seeded chromosome: nearest unused pool index per LBG codeword.
  const Codebook lbg = lbg_train(pool, k, 0.01, cfg.seed);
  std::vector<std::size_t> lbg_genes;
  {
    std::vector<char> used(pool.size(), 0);
    for (const auto& cw : lbg.codewords) {
      std::size_t best = pool.size();
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < pool.size(); ++t) {
        if (used[t]) continue;
        const double d = distortion(cw, pool[t]);
        if (d < best_d) {
          best_d = d;
          best = t;
        }
      }
      used[best] = 1;
      lbg_genes.push_back(best);
    }
  }

  std::vector<std::vector<std::size_t>> population;
  population.reserve(cfg.population_size);
  population.push_back(lbg_genes);
  while (population.size() < cfg.population_size) {
    population.push_back(detail::random_distinct(pool.size(), k, rng));
  }

  GaTrainResult result;
  result.lbg_seed_fitness = ga_fitness(lbg_genes, pool, cfg);
  result.best_fitness = -std::numeric_limits<double>::infinity();

  std::vector<double> fitness(population.size());
  for (std::size_t gen = 0; gen < cfg.generations; ++gen) {
    for (std::size_t i = 0; i < population.size(); ++i) {
      fitness[i] = ga_fitness(population[i], pool, cfg);
    }
    std::vector<std::size_t> order(population.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fitness[a] > fitness[b]; });
    result.history.push_back(fitness[order[0]]);
    if (fitness[order[0]] > result.best_fitness) {
      result.best_fitness = fitness[order[0]];
      result.best_genes = population[order[0]];
    }
    if (gen + 1 == cfg.generations) break;

    std::vector<std::vector<std::size_t>> next;
    next.reserve(cfg.population_size);
    for (std::size_t e = 0; e < cfg.elitism_count; ++e) next.push_back(population[order[e]]);
    while (next.size() < cfg.population_size) {
      const auto& p1 = population[detail::roulette(fitness, rng)];
      const auto& p2 = population[detail::roulette(fitness, rng)];
      auto [c1, c2] = detail::crossover(p1, p2, cfg.crossover_points, rng);
      for (auto* child : {&c1, &c2}) {
        detail::repair_duplicates(*child, pool.size(), rng);
        detail::mutate(*child, pool.size(), cfg.mutation_prob, rng);
        if (next.size() < cfg.population_size) next.push_back(std::move(*child));
      }
    }
    population = std::move(next);
  }

  Codebook cb;
  cb.dim = pool[0].size();
  for (std::size_t g : result.best_genes) cb.codewords.push_back(pool[g]);
  cb.groups = {detail::single_group(cb.size())};
  cb.leaders = {0};
  validate(cb);
  result.codebook = std::move(cb);
  return result;
}

// ---------------------------------------------------------------------------
// Utterance grouping
// ---------------------------------------------------------------------------

struct EnrolledUtterance {
  std::string speaker_id;
  std::string utterance_id;
  FeatureSequence features;
};

/// Group enrolled utterances by how they relate to the acoustic environment:
/// each utterance becomes its time-averaged vector, its profile is the cosine
/// against each noise reference average, and profiles are Lloyd-clustered
/// into g groups. Within each group one utterance is elected leader by a
/// k = 1 genetic search over the group's members.
inline Codebook build_groups(const std::vector<EnrolledUtterance>& enrolled,
                             const std::vector<FeatureSequence>& noise_refs, std::size_t g,
                             std::uint64_t seed) {
  require(!noise_refs.empty(), "NoNoiseRefs", "grouping needs at least one noise reference");
  require(g >= 1 && g <= enrolled.size(), "TooFewUtterances",
          "need between 1 and " + std::to_string(enrolled.size()) + " groups");

  const std::size_t n = enrolled.size();
  std::vector<std::vector<double>> means(n);
  for (std::size_t i = 0; i < n; ++i) means[i] = mean_vector(enrolled[i].features);
  std::vector<std::vector<double>> noise_means;
  noise_means.reserve(noise_refs.size());
  for (const auto& nr : noise_refs) noise_means.push_back(mean_vector(nr));

  std::vector<std::vector<double>> profiles(n, std::vector<double>(noise_means.size()));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < noise_means.size(); ++j) {
      profiles[i][j] = similarity(means[i], noise_means[j]);
    }
  }

  // Seeded Lloyd clustering of the profiles.
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> centers_idx = detail::random_distinct(n, g, rng);
  std::vector<std::vector<double>> centers;
  centers.reserve(g);
  for (std::size_t c : centers_idx) centers.push_back(profiles[c]);
  std::vector<std::size_t> assign(n, 0);
  for (int it = 0; it < 100; ++it) {
    std::vector<std::size_t> next(n);
    for (std::size_t i = 0; i < n; ++i) next[i] = detail::nearest_codeword(profiles[i], centers);

    // Re-seed empty clusters with the farthest member of the fullest cluster.
    for (std::size_t c = 0; c < g; ++c) {
      if (std::find(next.begin(), next.end(), c) != next.end()) continue;
      std::vector<std::size_t> counts(g, 0);
      for (std::size_t a : next) ++counts[a];
      const std::size_t donor = static_cast<std::size_t>(
          std::max_element(counts.begin(), counts.end()) - counts.begin());
      std::size_t far_i = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (next[i] != donor) continue;
        const double d = distortion(profiles[i], centers[donor]);
        if (d > far_d) {
          far_d = d;
          far_i = i;
        }
      }
      next[far_i] = c;
      centers[c] = profiles[far_i];
    }

    const bool stable = (next == assign) && it > 0;
    assign = std::move(next);
    if (stable) break;
    std::vector<std::vector<double>> sums(g, std::vector<double>(noise_means.size(), 0.0));
    std::vector<std::size_t> counts(g, 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < sums[assign[i]].size(); ++j) sums[assign[i]][j] += profiles[i][j];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < g; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < sums[c].size(); ++j) {
        centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
      }
    }
  }

  Codebook cb;
  cb.dim = means[0].size();
  cb.codewords = means;
  cb.groups.assign(g, {});
  for (std::size_t i = 0; i < n; ++i) cb.groups[assign[i]].push_back(i);
  cb.leaders.assign(g, 0);
  for (std::size_t c = 0; c < g; ++c) {
    std::vector<std::vector<double>> group_pool;
    group_pool.reserve(cb.groups[c].size());
    for (std::size_t idx : cb.groups[c]) group_pool.push_back(means[idx]);
    GaConfig leader_cfg;
    leader_cfg.population_size = 8;
    leader_cfg.generations = 5;
    leader_cfg.crossover_points = 1;
    leader_cfg.mutation_prob = 0.2;
    leader_cfg.elitism_count = 1;
    leader_cfg.seed = seed ^ (0x9e3779b97f4a7c15ULL * (c + 1));
    leader_cfg.fitness_mode = FitnessMode::NegDistortion;
    const GaTrainResult lead = ga_train(group_pool, 1, leader_cfg);
    cb.leaders[c] = cb.groups[c][lead.best_genes[0]];
  }
  cb.member_meta.reserve(n);
  for (const auto& e : enrolled) cb.member_meta.push_back({e.speaker_id, e.utterance_id});
  validate(cb);
  return cb;
}

/// Group index whose leader codeword is nearest to the time-averaged probe.
inline std::size_t encode(const FeatureSequence& probe, const Codebook& cb) {
  const std::vector<double> mean = mean_vector(probe);
  require(mean.size() == cb.dim, "DimMismatch", "probe and codebook dimensions differ");
  std::size_t best = 0;
  double best_d = distortion(mean, cb.codewords[cb.leaders[0]]);
  for (std::size_t g = 1; g < cb.leaders.size(); ++g) {
    const double d = distortion(mean, cb.codewords[cb.leaders[g]]);
    if (d < best_d) {
      best_d = d;
      best = g;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Identification
// ---------------------------------------------------------------------------

struct SpeakerModel {
  std::string speaker_id;
  Dhmm model;
};

/// Everything needed to identify a probe: the utterance-level grouping
/// codebook narrowing the candidate set, the frame-level quantizer feeding
/// symbol streams, and one HMM per enrolled speaker.
struct RecognitionModel {
  Codebook grouping;
  Codebook quantizer;
  std::vector<SpeakerModel> models;
};

enum class IdentifyMode { Grouped, Exhaustive };

inline const char* to_string(IdentifyMode m) {
  return m == IdentifyMode::Grouped ? "grouped" : "exhaustive";
}

inline IdentifyMode parse_identify_mode(const std::string& s) {
  if (s == "grouped") return IdentifyMode::Grouped;
  if (s == "exhaustive") return IdentifyMode::Exhaustive;
  fail("ConfigInvalid", "unknown identify mode '" + s + "'");
}

struct IdentifyResult {
  std::string speaker_id;
  std::size_t group = 0;  ///< encoded group (GROUPED mode only, else 0)
  std::vector<std::pair<std::string, double>> scores;  ///< per scored speaker, id order
};

/// Closed-set identification: quantize the probe and return the enrolled
/// speaker whose HMM scores it highest, ties to the lowest speaker id. In
/// GROUPED mode only speakers owning utterances in the encoded group are
/// scored; EXHAUSTIVE mode scores everyone.
inline IdentifyResult identify_detailed(const FeatureSequence& probe, const RecognitionModel& rm,
                                        IdentifyMode mode) {
  require(!rm.models.empty(), "EmptyModelSet", "no speaker models to score");
  const QuantizeResult qr = quantize(probe, rm.quantizer);

  IdentifyResult result;
  std::vector<const SpeakerModel*> candidates;
  if (mode == IdentifyMode::Grouped) {
    require(!rm.grouping.member_meta.empty(), "ConfigInvalid",
            "grouping codebook carries no speaker metadata");
    result.group = encode(probe, rm.grouping);
    for (const auto& sm : rm.models) {
      const bool owns =
          std::any_of(rm.grouping.groups[result.group].begin(),
                      rm.grouping.groups[result.group].end(), [&](std::size_t idx) {
                        return rm.grouping.member_meta[idx].speaker_id == sm.speaker_id;
                      });
      if (owns) candidates.push_back(&sm);
    }
  }
  if (candidates.empty()) {
    for (const auto& sm : rm.models) candidates.push_back(&sm);
  }

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const SpeakerModel* a, const SpeakerModel* b) {
                     return a->speaker_id < b->speaker_id;
                   });
  std::size_t best = 0;
  result.scores.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    result.scores.emplace_back(candidates[i]->speaker_id,
                               log_likelihood(candidates[i]->model, qr.symbols));
    if (result.scores[i].second > result.scores[best].second) best = i;
  }
  result.speaker_id = candidates[best]->speaker_id;
  return result;
}

inline std::string identify(const FeatureSequence& probe, const RecognitionModel& rm,
                            IdentifyMode mode) {
  return identify_detailed(probe, rm, mode).speaker_id;
}

}  // namespace spkid
