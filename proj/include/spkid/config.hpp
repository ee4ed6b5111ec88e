#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spkid/dhmm.hpp"
#include "spkid/error.hpp"
#include "spkid/features.hpp"
#include "spkid/rng.hpp"
#include "spkid/vq.hpp"

namespace spkid {

// ---------------------------------------------------------------------------
// Flat run configuration. Every field maps 1:1 to a config file key and a
// CLI flag (underscores become dashes: frame_ms <-> --frame-ms).
// ---------------------------------------------------------------------------

struct Config {
  std::uint64_t seed = 1;

  std::size_t wiener_noise_frames = 6;
  double wiener_smoothing_alpha = 0.98;
  double wiener_gain_floor = 0.1;

  double endpoint_energy_floor_db = -25.0;
  double endpoint_threshold_offset_db = 10.0;
  std::size_t endpoint_min_speech_frames = 5;
  std::size_t endpoint_min_silence_frames = 10;

  double pre_emphasis_alpha = 0.97;
  double frame_ms = 23.2;
  double frame_overlap = 0.5;

  std::string feature_method = "mfcc";
  std::size_t mfcc_n_fft = 512;
  std::size_t mfcc_n_filters = 26;
  std::size_t mfcc_n_ceps = 12;
  double mfcc_fmin_hz = 0.0;
  double mfcc_fmax_hz = 0.0;  ///< 0 means Nyquist
  bool mfcc_include_c0 = false;
  std::size_t lpc_order = 12;
  std::size_t lpcc_n_ceps = 12;
  std::size_t rcc_n_ceps = 12;
  std::size_t delta_window = 2;
  bool delta_concat = false;

  std::string codebook_trainer = "ga";  ///< "ga" or "lbg"
  std::size_t codebook_size = 32;
  double lbg_epsilon = 0.01;
  std::size_t vq_pool_max = 4000;  ///< cap on pooled training frames (even subsample)
  std::size_t ga_population = 30;
  std::size_t ga_generations = 10;
  std::size_t ga_crossover_points = 5;
  double ga_mutation_prob = 0.05;
  std::size_t ga_elitism = 2;
  std::string ga_fitness = "neg_distortion";  ///< or "similarity"
  std::size_t groups = 2;

  std::size_t hmm_states = 5;
  std::string hmm_topology = "left_to_right";  ///< or "ergodic"
  std::size_t hmm_max_iters = 20;
  double hmm_tol = 1e-4;

  std::string identify_mode = "grouped";  ///< or "exhaustive"
  std::string eval_methods = "mfcc";      ///< comma-separated feature methods
  bool eval_exclude_failed = false;  ///< drop failed probes from totals instead of counting errors
  bool noise_offset_random = false;  ///< seeded random noise start offset per probe
  std::size_t jobs = 1;
};

inline FitnessMode parse_fitness_mode(const std::string& s) {
  if (s == "neg_distortion") return FitnessMode::NegDistortion;
  if (s == "similarity") return FitnessMode::Similarity;
  fail("ConfigInvalid", "unknown fitness mode '" + s + "'");
}

inline HmmTopology parse_topology(const std::string& s) {
  if (s == "left_to_right") return HmmTopology::LeftToRight;
  if (s == "ergodic") return HmmTopology::Ergodic;
  fail("ConfigInvalid", "unknown HMM topology '" + s + "'");
}

inline std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t comma = s.find(',', start);
    if (comma == std::string::npos) comma = s.size();
    std::string item = s.substr(start, comma - start);
    while (!item.empty() && item.front() == ' ') item.erase(item.begin());
    while (!item.empty() && item.back() == ' ') item.pop_back();
    if (!item.empty()) out.push_back(item);
    start = comma + 1;
  }
  return out;
}

inline void validate(const Config& c) {
  require(c.wiener_noise_frames >= 1, "ConfigInvalid", "wiener_noise_frames must be >= 1");
  require(c.wiener_smoothing_alpha >= 0.0 && c.wiener_smoothing_alpha < 1.0, "ConfigInvalid",
          "wiener_smoothing_alpha must lie in [0, 1)");
  require(c.wiener_gain_floor > 0.0 && c.wiener_gain_floor <= 1.0, "ConfigInvalid",
          "wiener_gain_floor must lie in (0, 1]");
  require(c.endpoint_threshold_offset_db > 0.0, "ConfigInvalid",
          "endpoint_threshold_offset_db must be positive");
  require(c.endpoint_min_speech_frames >= 1, "ConfigInvalid",
          "endpoint_min_speech_frames must be >= 1");
  require(c.pre_emphasis_alpha >= 0.0 && c.pre_emphasis_alpha < 1.0, "ConfigInvalid",
          "pre_emphasis_alpha must lie in [0, 1)");
  require(c.frame_ms >= 10.0 && c.frame_ms <= 30.0, "ConfigInvalid",
          "frame_ms must lie in [10, 30]");
  require(c.frame_overlap >= 0.25 && c.frame_overlap <= 0.75, "ConfigInvalid",
          "frame_overlap must lie in [0.25, 0.75]");
  parse_feature_method(c.feature_method);
  require(dsp::is_power_of_two(c.mfcc_n_fft), "ConfigInvalid", "mfcc_n_fft must be a power of two");
  require(c.mfcc_n_ceps >= 1 && c.mfcc_n_ceps <= c.mfcc_n_filters, "ConfigInvalid",
          "need 1 <= mfcc_n_ceps <= mfcc_n_filters");
  require(c.lpc_order >= 1, "ConfigInvalid", "lpc_order must be >= 1");
  require(c.lpcc_n_ceps >= 1, "ConfigInvalid", "lpcc_n_ceps must be >= 1");
  require(c.rcc_n_ceps >= 1, "ConfigInvalid", "rcc_n_ceps must be >= 1");
  require(c.delta_window >= 1, "ConfigInvalid", "delta_window must be >= 1");
  require(c.codebook_trainer == "ga" || c.codebook_trainer == "lbg", "ConfigInvalid",
          "codebook_trainer must be 'ga' or 'lbg'");
  require(c.codebook_size >= 2, "ConfigInvalid", "codebook_size must be >= 2");
  require(c.lbg_epsilon > 0.0, "ConfigInvalid", "lbg_epsilon must be positive");
  require(c.vq_pool_max >= c.codebook_size, "ConfigInvalid",
          "vq_pool_max must cover the codebook size");
  parse_fitness_mode(c.ga_fitness);
  require(c.groups >= 1, "ConfigInvalid", "groups must be >= 1");
  require(c.hmm_states >= 1, "ConfigInvalid", "hmm_states must be >= 1");
  parse_topology(c.hmm_topology);
  require(c.hmm_max_iters >= 1, "ConfigInvalid", "hmm_max_iters must be >= 1");
  require(c.hmm_tol >= 0.0, "ConfigInvalid", "hmm_tol must be non-negative");
  parse_identify_mode(c.identify_mode);
  const auto methods = split_csv_list(c.eval_methods);
  require(!methods.empty(), "ConfigInvalid", "eval_methods must name at least one method");
  for (const auto& m : methods) parse_feature_method(m);
  require(c.jobs >= 1, "ConfigInvalid", "jobs must be >= 1");

  GaConfig ga;
  ga.population_size = c.ga_population;
  ga.generations = std::max<std::size_t>(c.ga_generations, 1);
  ga.crossover_points = c.ga_crossover_points;
  ga.mutation_prob = c.ga_mutation_prob;
  ga.elitism_count = c.ga_elitism;
  validate(ga);
}

// ---------------------------------------------------------------------------
// JSON round-trip; unknown keys are rejected so typos cannot silently no-op.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail("ConfigInvalid", std::string("config key '") + key + "' has the wrong type");
  }
}

template <typename Fn>
void for_each_config_key(Config& c, Fn&& fn) {
  fn("seed", c.seed);
  fn("wiener_noise_frames", c.wiener_noise_frames);
  fn("wiener_smoothing_alpha", c.wiener_smoothing_alpha);
  fn("wiener_gain_floor", c.wiener_gain_floor);
  fn("endpoint_energy_floor_db", c.endpoint_energy_floor_db);
  fn("endpoint_threshold_offset_db", c.endpoint_threshold_offset_db);
  fn("endpoint_min_speech_frames", c.endpoint_min_speech_frames);
  fn("endpoint_min_silence_frames", c.endpoint_min_silence_frames);
  fn("pre_emphasis_alpha", c.pre_emphasis_alpha);
  fn("frame_ms", c.frame_ms);
  fn("frame_overlap", c.frame_overlap);
  fn("feature_method", c.feature_method);
  fn("mfcc_n_fft", c.mfcc_n_fft);
  fn("mfcc_n_filters", c.mfcc_n_filters);
  fn("mfcc_n_ceps", c.mfcc_n_ceps);
  fn("mfcc_fmin_hz", c.mfcc_fmin_hz);
  fn("mfcc_fmax_hz", c.mfcc_fmax_hz);
  fn("mfcc_include_c0", c.mfcc_include_c0);
  fn("lpc_order", c.lpc_order);
  fn("lpcc_n_ceps", c.lpcc_n_ceps);
  fn("rcc_n_ceps", c.rcc_n_ceps);
  fn("delta_window", c.delta_window);
  fn("delta_concat", c.delta_concat);
  fn("codebook_trainer", c.codebook_trainer);
  fn("codebook_size", c.codebook_size);
  fn("lbg_epsilon", c.lbg_epsilon);
  fn("vq_pool_max", c.vq_pool_max);
  fn("ga_population", c.ga_population);
  fn("ga_generations", c.ga_generations);
  fn("ga_crossover_points", c.ga_crossover_points);
  fn("ga_mutation_prob", c.ga_mutation_prob);
  fn("ga_elitism", c.ga_elitism);
  fn("ga_fitness", c.ga_fitness);
  fn("groups", c.groups);
  fn("hmm_states", c.hmm_states);
  fn("hmm_topology", c.hmm_topology);
  fn("hmm_max_iters", c.hmm_max_iters);
  fn("hmm_tol", c.hmm_tol);
  fn("identify_mode", c.identify_mode);
  fn("eval_methods", c.eval_methods);
  fn("eval_exclude_failed", c.eval_exclude_failed);
  fn("noise_offset_random", c.noise_offset_random);
  fn("jobs", c.jobs);
}

}  // namespace detail

inline Config config_from_json(const nlohmann::json& j) {
  require(j.is_object(), "ConfigInvalid", "config root must be a JSON object");
  Config c;
  std::vector<std::string> known;
  detail::for_each_config_key(c, [&](const char* key, auto& field) {
    known.emplace_back(key);
    detail::read_key(j, key, field);
  });
  for (const auto& [key, value] : j.items()) {
    (void)value;
    require(std::find(known.begin(), known.end(), key) != known.end(), "ConfigInvalid",
            "unknown config key '" + key + "'");
  }
  validate(c);
  return c;
}

inline nlohmann::json config_to_json(const Config& c) {
  nlohmann::json j = nlohmann::json::object();
  detail::for_each_config_key(const_cast<Config&>(c),
                              [&](const char* key, auto& field) { j[key] = field; });
  return j;
}

inline Config load_config(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "MissingFile", "cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    fail("ConfigInvalid", "config file '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Projections onto the module configs
// ---------------------------------------------------------------------------

inline WienerConfig wiener_config(const Config& c) {
  WienerConfig w;
  w.noise_estimate_frames = c.wiener_noise_frames;
  w.smoothing_alpha = c.wiener_smoothing_alpha;
  w.gain_floor = c.wiener_gain_floor;
  return w;
}

inline EndpointConfig endpoint_config(const Config& c) {
  EndpointConfig e;
  e.energy_floor_db = c.endpoint_energy_floor_db;
  e.threshold_offset_db = c.endpoint_threshold_offset_db;
  e.min_speech_frames = c.endpoint_min_speech_frames;
  e.min_silence_frames = c.endpoint_min_silence_frames;
  return e;
}

inline ExtractConfig extract_config(const Config& c) {
  ExtractConfig x;
  x.wiener = wiener_config(c);
  x.endpoint = endpoint_config(c);
  x.pre_emphasis_alpha = c.pre_emphasis_alpha;
  x.frame_ms = c.frame_ms;
  x.overlap_fraction = c.frame_overlap;
  x.mfcc.n_fft = c.mfcc_n_fft;
  x.mfcc.n_filters = c.mfcc_n_filters;
  x.mfcc.n_ceps = c.mfcc_n_ceps;
  x.mfcc.fmin_hz = c.mfcc_fmin_hz;
  x.mfcc.fmax_hz = c.mfcc_fmax_hz;
  x.mfcc.include_c0 = c.mfcc_include_c0;
  x.lpc_order = c.lpc_order;
  x.lpcc_n_ceps = c.lpcc_n_ceps;
  x.rcc_n_ceps = c.rcc_n_ceps;
  x.delta_window = c.delta_window;
  x.delta_concat = c.delta_concat;
  return x;
}

inline GaConfig ga_config(const Config& c) {
  GaConfig g;
  g.population_size = c.ga_population;
  // 0 generations means "best of the initial population": one evaluation pass
  g.generations = std::max<std::size_t>(c.ga_generations, 1);
  g.crossover_points = c.ga_crossover_points;
  g.mutation_prob = c.ga_mutation_prob;
  g.elitism_count = c.ga_elitism;
  g.seed = stage_seed(c.seed, "ga");
  g.fitness_mode = parse_fitness_mode(c.ga_fitness);
  return g;
}

inline HmmConfig hmm_config(const Config& c, std::string_view speaker_id) {
  HmmConfig h;
  h.n_states = c.hmm_states;
  h.topology = parse_topology(c.hmm_topology);
  h.max_iters = c.hmm_max_iters;
  h.tol = c.hmm_tol;
  h.seed = stage_seed(c.seed, std::string("hmm:") + std::string(speaker_id));
  return h;
}

}  // namespace spkid
