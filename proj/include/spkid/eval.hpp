#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "spkid/audio.hpp"
#include "spkid/config.hpp"
#include "spkid/error.hpp"
#include "spkid/features.hpp"
#include "spkid/rng.hpp"
#include "spkid/vq.hpp"

namespace spkid {

// ---------------------------------------------------------------------------
// Corpus manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string speaker_id;
  std::string utterance_id;
  std::string wav_path;  ///< resolved to an absolute path at load time
  bool is_enroll = true;
};

struct NoiseFile {
  std::string name;
  std::string wav_path;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::vector<NoiseFile> noise_files;
  std::vector<double> snr_levels_db;
};

namespace detail {

inline void require_clean_token(const std::string& s, const char* what) {
  require(!s.empty(), "ManifestInvalid", std::string(what) + " must not be empty");
  for (char c : s) {
    require(c != ',' && c != '\n' && c != '\r', "ManifestInvalid",
            std::string(what) + " '" + s + "' must not contain commas or line breaks");
  }
}

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                                const char* where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* k : known) ok |= (key == k);
    require(ok, "ManifestInvalid",
            std::string("unknown key '") + key + "' in " + where);
  }
}

}  // namespace detail

/// Load and validate a manifest; wav paths are resolved relative to the
/// manifest's own directory and must exist.
inline CorpusManifest load_manifest(const std::string& path) {
  namespace fs = std::filesystem;
  std::ifstream is(path);
  require(is.good(), "MissingFile", "cannot open manifest '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    fail("ManifestInvalid", "manifest '" + path + "' is not valid JSON: " + e.what());
  }
  require(j.is_object(), "ManifestInvalid", "manifest root must be a JSON object");
  detail::reject_unknown_keys(j, {"entries", "noise_files", "snr_levels_db"}, "manifest");
  require(j.contains("entries") && j.at("entries").is_array(), "ManifestInvalid",
          "manifest needs an 'entries' array");

  const fs::path base = fs::absolute(fs::path(path)).parent_path();
  auto resolve = [&](const std::string& rel) {
    fs::path p(rel);
    if (p.is_relative()) p = base / p;
    require(fs::exists(p), "ManifestInvalid", "wav path '" + rel + "' does not exist");
    return p.string();
  };

  CorpusManifest mf;
  std::set<std::pair<std::string, std::string>> seen_ids;
  for (const auto& e : j.at("entries")) {
    require(e.is_object(), "ManifestInvalid", "each entry must be an object");
    detail::reject_unknown_keys(e, {"speaker_id", "utterance_id", "wav_path", "split"}, "entry");
    ManifestEntry me;
    try {
      me.speaker_id = e.at("speaker_id").get<std::string>();
      me.utterance_id = e.at("utterance_id").get<std::string>();
      me.wav_path = e.at("wav_path").get<std::string>();
      const std::string split = e.at("split").get<std::string>();
      require(split == "ENROLL" || split == "TEST", "ManifestInvalid",
              "split must be ENROLL or TEST, got '" + split + "'");
      me.is_enroll = (split == "ENROLL");
    } catch (const nlohmann::json::exception&) {
      fail("ManifestInvalid", "entry missing speaker_id/utterance_id/wav_path/split");
    }
    detail::require_clean_token(me.speaker_id, "speaker_id");
    detail::require_clean_token(me.utterance_id, "utterance_id");
    require(seen_ids.insert({me.speaker_id, me.utterance_id}).second, "ManifestInvalid",
            "duplicate utterance " + me.speaker_id + "/" + me.utterance_id);
    me.wav_path = resolve(me.wav_path);
    mf.entries.push_back(std::move(me));
  }
  require(!mf.entries.empty(), "ManifestInvalid", "manifest has no entries");

  if (j.contains("noise_files")) {
    require(j.at("noise_files").is_array(), "ManifestInvalid", "'noise_files' must be an array");
    std::set<std::string> names;
    for (const auto& n : j.at("noise_files")) {
      detail::reject_unknown_keys(n, {"name", "wav_path"}, "noise file");
      NoiseFile nf;
      try {
        nf.name = n.at("name").get<std::string>();
        nf.wav_path = n.at("wav_path").get<std::string>();
      } catch (const nlohmann::json::exception&) {
        fail("ManifestInvalid", "noise file missing name/wav_path");
      }
      detail::require_clean_token(nf.name, "noise name");
      require(names.insert(nf.name).second, "ManifestInvalid",
              "duplicate noise name '" + nf.name + "'");
      nf.wav_path = resolve(nf.wav_path);
      mf.noise_files.push_back(std::move(nf));
    }
  }
  if (j.contains("snr_levels_db")) {
    require(j.at("snr_levels_db").is_array(), "ManifestInvalid", "'snr_levels_db' must be an array");
    for (const auto& s : j.at("snr_levels_db")) {
      require(s.is_number(), "ManifestInvalid", "SNR levels must be numbers");
      mf.snr_levels_db.push_back(s.get<double>());
    }
  }
  return mf;
}

// ---------------------------------------------------------------------------
// Enrollment: features -> grouping codebook -> quantizer -> per-speaker HMMs
// ---------------------------------------------------------------------------

namespace detail {

/// Evenly subsample pooled frames down to at most max_n.
inline std::vector<std::vector<double>> cap_pool(std::vector<std::vector<double>> pool,
                                                 std::size_t max_n) {
  if (pool.size() <= max_n) return pool;
  std::vector<std::vector<double>> out;
  out.reserve(max_n);
  for (std::size_t i = 0; i < max_n; ++i) {
    out.push_back(std::move(pool[i * pool.size() / max_n]));
  }
  return out;
}

}  // namespace detail

/// Train the full recognition model from the manifest's ENROLL entries.
inline RecognitionModel enroll(const CorpusManifest& mf, FeatureMethod method,
                               const Config& cfg) {
  validate(cfg);
  const ExtractConfig xc = extract_config(cfg);

  std::vector<EnrolledUtterance> enrolled;
  for (const auto& e : mf.entries) {
    if (!e.is_enroll) continue;
    enrolled.push_back({e.speaker_id, e.utterance_id, extract(read_wav(e.wav_path), method, xc)});
  }
  require(!enrolled.empty(), "ManifestInvalid", "manifest has no ENROLL entries");

  std::vector<FeatureSequence> noise_refs;
  for (const auto& nf : mf.noise_files) {
    noise_refs.push_back(extract_noise_reference(read_wav(nf.wav_path), method, xc));
  }

  RecognitionModel rm;
  rm.grouping = build_groups(enrolled, noise_refs, std::min(cfg.groups, enrolled.size()),
                             stage_seed(cfg.seed, "grouping"));

  std::vector<std::vector<double>> pool;
  for (const auto& e : enrolled) {
    pool.insert(pool.end(), e.features.vectors.begin(), e.features.vectors.end());
  }
  pool = detail::cap_pool(std::move(pool), cfg.vq_pool_max);
  if (cfg.codebook_trainer == "ga") {
    rm.quantizer = ga_train(pool, cfg.codebook_size, ga_config(cfg)).codebook;
  } else {
    rm.quantizer = lbg_train(pool, cfg.codebook_size, cfg.lbg_epsilon, stage_seed(cfg.seed, "lbg"));
  }

  std::map<std::string, std::vector<std::vector<std::size_t>>> sequences;
  for (const auto& e : enrolled) {
    sequences[e.speaker_id].push_back(quantize(e.features, rm.quantizer).symbols);
  }
  for (const auto& [speaker_id, seqs] : sequences) {
    rm.models.push_back(
        {speaker_id, baum_welch(seqs, rm.quantizer.size(), hmm_config(cfg, speaker_id))});
  }
  return rm;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalCell {
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t failed = 0;  ///< probes that raised a pipeline error
  double rate = 0.0;       ///< percent
};

struct EvalReport {
  std::vector<std::string> methods;  ///< column order
  std::vector<std::string> noises;   ///< table order
  std::vector<double> snrs;          ///< row order as evaluated
  std::map<std::string, std::map<double, std::map<std::string, EvalCell>>> cells;
  std::map<std::string, std::map<std::string, double>> noise_avg;  ///< noise -> method -> mean
  std::map<std::string, double> method_avg;                        ///< method -> grand mean
  bool averages_filled = false;
  nlohmann::json run_meta;
};

/// Plain means: per (noise, method) over SNR cells, then per method over
/// noises. Full precision; rounding happens only at render time.
inline void average_rates(EvalReport& report) {
  require(!report.cells.empty(), "EmptyReport", "no cells to average");
  report.noise_avg.clear();
  report.method_avg.clear();
  for (const auto& method : report.methods) {
    double grand = 0.0;
    std::size_t n_noise = 0;
    for (const auto& noise : report.noises) {
      double acc = 0.0;
      std::size_t n = 0;
      for (const double snr : report.snrs) {
        const auto noise_it = report.cells.find(noise);
        if (noise_it == report.cells.end()) continue;
        const auto snr_it = noise_it->second.find(snr);
        if (snr_it == noise_it->second.end()) continue;
        const auto cell_it = snr_it->second.find(method);
        if (cell_it == snr_it->second.end()) continue;
        acc += cell_it->second.rate;
        ++n;
      }
      if (n == 0) continue;
      report.noise_avg[noise][method] = acc / static_cast<double>(n);
      grand += report.noise_avg[noise][method];
      ++n_noise;
    }
    require(n_noise > 0, "EmptyReport", "method '" + method + "' has no cells");
    report.method_avg[method] = grand / static_cast<double>(n_noise);
  }
  report.averages_filled = true;
}

namespace detail {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Percent with exactly two decimals, half-up (79.805 -> "79.81"). The tiny
/// nudge compensates for values like 79.805 that sit just below the midpoint
/// in binary.
inline std::string format_rate(double v) {
  const auto scaled = static_cast<long long>(std::floor(v * 100.0 + 0.5 + 1e-6));
  std::string out = std::to_string(scaled / 100);
  const long long frac = scaled % 100;
  out += '.';
  out += static_cast<char>('0' + frac / 10);
  out += static_cast<char>('0' + frac % 10);
  return out;
}

}  // namespace detail

/// Evaluate several feature methods over every (noise, SNR) condition.
/// Enrollment happens once per method on clean data; each TEST utterance is
/// then mixed with noise at the target SNR and identified. A probe that fails
/// anywhere in the pipeline counts against the rate (or is excluded when
/// eval_exclude_failed is set).
inline EvalReport run_evaluation(const CorpusManifest& mf,
                                 const std::vector<FeatureMethod>& methods, const Config& cfg) {
  validate(cfg);
  require(!methods.empty(), "ConfigInvalid", "no feature methods to evaluate");
  require(!mf.noise_files.empty(), "ManifestInvalid", "evaluation needs noise files");
  require(!mf.snr_levels_db.empty(), "ManifestInvalid", "evaluation needs SNR levels");

  std::map<std::string, bool> has_enroll, has_test;
  for (const auto& e : mf.entries) {
    (e.is_enroll ? has_enroll : has_test)[e.speaker_id] = true;
  }
  require(!has_test.empty(), "ManifestInvalid", "manifest has no TEST entries");
  for (const auto& [sp, dummy] : has_enroll) {
    (void)dummy;
    require(has_test.count(sp) > 0, "ManifestInvalid", "speaker " + sp + " has no TEST entry");
  }
  for (const auto& [sp, dummy] : has_test) {
    (void)dummy;
    require(has_enroll.count(sp) > 0, "ManifestInvalid", "speaker " + sp + " has no ENROLL entry");
  }

  std::vector<const ManifestEntry*> tests;
  for (const auto& e : mf.entries) {
    if (!e.is_enroll) tests.push_back(&e);
  }
  std::vector<AudioBuffer> test_bufs;
  test_bufs.reserve(tests.size());
  for (const auto* e : tests) test_bufs.push_back(read_wav(e->wav_path));
  std::vector<AudioBuffer> noise_bufs;
  noise_bufs.reserve(mf.noise_files.size());
  for (const auto& nf : mf.noise_files) noise_bufs.push_back(read_wav(nf.wav_path));

  const ExtractConfig xc = extract_config(cfg);
  const IdentifyMode mode = parse_identify_mode(cfg.identify_mode);

  EvalReport report;
  for (const auto& m : methods) report.methods.push_back(to_string(m));
  for (const auto& nf : mf.noise_files) report.noises.push_back(nf.name);
  report.snrs = mf.snr_levels_db;
  report.run_meta = {{"config", config_to_json(cfg)},
                     {"methods", report.methods},
                     {"noises", report.noises},
                     {"snr_levels_db", report.snrs}};

  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    const FeatureMethod method = methods[mi];
    const RecognitionModel rm = enroll(mf, method, cfg);

    const std::size_t n_cells = mf.noise_files.size() * mf.snr_levels_db.size();
    std::vector<EvalCell> cells(n_cells);
    detail::parallel_for(n_cells, cfg.jobs, [&](std::size_t ci) {
      const std::size_t ni = ci / mf.snr_levels_db.size();
      const double snr = mf.snr_levels_db[ci % mf.snr_levels_db.size()];
      const AudioBuffer& noise = noise_bufs[ni];
      EvalCell cell;
      for (std::size_t ti = 0; ti < tests.size(); ++ti) {
        ++cell.total;
        try {
          std::size_t offset = 0;
          if (cfg.noise_offset_random) {
            require(noise.size() >= test_bufs[ti].size(), "NoiseTooShort",
                    "noise '" + mf.noise_files[ni].name + "' shorter than the probe");
            std::mt19937_64 rng(stage_seed(
                cfg.seed, "mix:" + mf.noise_files[ni].name + ":" + detail::format_double(snr) +
                              ":" + tests[ti]->speaker_id + ":" + tests[ti]->utterance_id));
            offset = static_cast<std::size_t>(rng() %
                                              (noise.size() - test_bufs[ti].size() + 1));
          }
          const AudioBuffer mixed = mix_at_snr(test_bufs[ti], noise, snr, nullptr, offset);
          const FeatureSequence fs = extract(mixed, method, xc);
          if (identify(fs, rm, mode) == tests[ti]->speaker_id) ++cell.correct;
        } catch (const Error&) {
          ++cell.failed;
        }
      }
      const std::size_t denom = cfg.eval_exclude_failed ? cell.total - cell.failed : cell.total;
      cell.rate = denom == 0 ? 0.0
                             : 100.0 * static_cast<double>(cell.correct) /
                                   static_cast<double>(denom);
      cells[ci] = cell;
    });

    for (std::size_t ci = 0; ci < n_cells; ++ci) {
      const std::size_t ni = ci / mf.snr_levels_db.size();
      const double snr = mf.snr_levels_db[ci % mf.snr_levels_db.size()];
      report.cells[mf.noise_files[ni].name][snr][report.methods[mi]] = cells[ci];
    }
  }
  average_rates(report);
  return report;
}

/// Single-method evaluation (the building block the sweeps reuse).
inline EvalReport run_identification(const CorpusManifest& mf, FeatureMethod method,
                                     const Config& cfg) {
  return run_evaluation(mf, {method}, cfg);
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

/// CSV: one row per cell, full-precision rates (round-trips exactly).
inline void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.good(), "IoFailure", "cannot open '" + path + "' for writing");
  os << "noise,snr_db,method,rate,correct,total,failed\n";
  for (const auto& noise : report.noises) {
    for (const double snr : report.snrs) {
      for (const auto& method : report.methods) {
        const EvalCell& c = report.cells.at(noise).at(snr).at(method);
        os << noise << ',' << detail::format_double(snr) << ',' << method << ','
           << detail::format_double(c.rate) << ',' << c.correct << ',' << c.total << ','
           << c.failed << "\n";
      }
    }
  }
  require(os.good(), "IoFailure", "short write to '" + path + "'");
}

/// Inverse of write_report_csv (orders recovered in first-seen order).
inline EvalReport parse_report_csv(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "MissingFile", "cannot open report '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), "UnsupportedFormat", "empty report CSV");
  require(line == "noise,snr_db,method,rate,correct,total,failed", "UnsupportedFormat",
          "unexpected report CSV header");
  EvalReport report;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    require(fields.size() == 7, "UnsupportedFormat", "malformed report CSV row");
    EvalCell cell;
    const double snr = std::stod(fields[1]);
    cell.rate = std::stod(fields[3]);
    cell.correct = static_cast<std::size_t>(std::stoull(fields[4]));
    cell.total = static_cast<std::size_t>(std::stoull(fields[5]));
    cell.failed = static_cast<std::size_t>(std::stoull(fields[6]));
    if (std::find(report.noises.begin(), report.noises.end(), fields[0]) == report.noises.end()) {
      report.noises.push_back(fields[0]);
    }
    if (std::find(report.snrs.begin(), report.snrs.end(), snr) == report.snrs.end()) {
      report.snrs.push_back(snr);
    }
    if (std::find(report.methods.begin(), report.methods.end(), fields[2]) ==
        report.methods.end()) {
      report.methods.push_back(fields[2]);
    }
    report.cells[fields[0]][snr][fields[2]] = cell;
  }
  return report;
}

/// Markdown: per noise one table (SNR rows high to low, then Average), plus a
/// summary table of per-noise averages with a final Average row.
inline void write_report_md(const EvalReport& report, const std::string& path) {
  require(report.averages_filled, "EmptyReport", "averages must be computed before rendering");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.good(), "IoFailure", "cannot open '" + path + "' for writing");

  std::vector<double> snrs_desc = report.snrs;
  std::sort(snrs_desc.rbegin(), snrs_desc.rend());

  os << "# Identification rate (%)\n";
  for (const auto& noise : report.noises) {
    os << "\n## Noise: " << noise << "\n\n";
    os << "| SNR (dB) |";
    for (const auto& m : report.methods) os << ' ' << m << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < report.methods.size(); ++i) os << "---|";
    os << "\n";
    for (const double snr : snrs_desc) {
      os << "| " << detail::format_double(snr) << " |";
      for (const auto& m : report.methods) {
        os << ' ' << detail::format_rate(report.cells.at(noise).at(snr).at(m).rate) << " |";
      }
      os << "\n";
    }
    os << "| Average |";
    for (const auto& m : report.methods) {
      os << ' ' << detail::format_rate(report.noise_avg.at(noise).at(m)) << " |";
    }
    os << "\n";
  }

  os << "\n## Average over noises\n\n";
  os << "| Noise |";
  for (const auto& m : report.methods) os << ' ' << m << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < report.methods.size(); ++i) os << "---|";
  os << "\n";
  for (const auto& noise : report.noises) {
    os << "| " << noise << " |";
    for (const auto& m : report.methods) {
      os << ' ' << detail::format_rate(report.noise_avg.at(noise).at(m)) << " |";
    }
    os << "\n";
  }
  os << "| Average |";
  for (const auto& m : report.methods) {
    os << ' ' << detail::format_rate(report.method_avg.at(m)) << " |";
  }
  os << "\n";
  require(os.good(), "IoFailure", "short write to '" + path + "'");
}

/// Write report.csv, report.md and run_meta.json into out_dir.
inline void render_report(const EvalReport& report, const std::string& out_dir) {
  require(report.averages_filled, "EmptyReport", "averages must be computed before rendering");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, "IoFailure", "cannot create directory '" + out_dir + "'");
  write_report_csv(report, (fs::path(out_dir) / "report.csv").string());
  write_report_md(report, (fs::path(out_dir) / "report.md").string());
  std::ofstream os(fs::path(out_dir) / "run_meta.json", std::ios::binary | std::ios::trunc);
  require(os.good(), "IoFailure", "cannot write run_meta.json");
  os << report.run_meta.dump(2) << "\n";
  require(os.good(), "IoFailure", "short write of run_meta.json");
}

// ---------------------------------------------------------------------------
// GA parameter sweeps
// ---------------------------------------------------------------------------

struct SweepPoint {
  std::size_t value = 0;
  double rate = 0.0;  ///< grand average over all (noise, snr) cells
};

inline std::vector<SweepPoint> sweep_crossover(const CorpusManifest& mf, FeatureMethod method,
                                               const Config& base,
                                               const std::vector<std::size_t>& points) {
  require(!points.empty(), "ConfigInvalid", "sweep needs at least one value");
  std::vector<SweepPoint> curve;
  curve.reserve(points.size());
  for (const std::size_t p : points) {
    Config cfg = base;
    cfg.ga_crossover_points = p;
    EvalReport report = run_identification(mf, method, cfg);
    curve.push_back({p, report.method_avg.at(to_string(method))});
  }
  return curve;
}

inline std::vector<SweepPoint> sweep_generations(const CorpusManifest& mf, FeatureMethod method,
                                                 const Config& base,
                                                 const std::vector<std::size_t>& gens) {
  require(!gens.empty(), "ConfigInvalid", "sweep needs at least one value");
  std::vector<SweepPoint> curve;
  curve.reserve(gens.size());
  for (const std::size_t g : gens) {
    Config cfg = base;
    cfg.ga_generations = g;
    EvalReport report = run_identification(mf, method, cfg);
    curve.push_back({g, report.method_avg.at(to_string(method))});
  }
  return curve;
}

inline void write_sweep_csv(const std::vector<SweepPoint>& curve, const std::string& param_name,
                            const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.good(), "IoFailure", "cannot open '" + path + "' for writing");
  os << param_name << ",rate\n";
  for (const auto& p : curve) {
    os << p.value << ',' << detail::format_double(p.rate) << "\n";
  }
  require(os.good(), "IoFailure", "short write to '" + path + "'");
}

// ---------------------------------------------------------------------------
// Model store: one versioned JSON container per trained system
// ---------------------------------------------------------------------------

inline constexpr int kModelStoreVersion = 1;

inline nlohmann::json codebook_to_json(const Codebook& cb) {
  nlohmann::json j = {{"dim", cb.dim},
                      {"codewords", cb.codewords},
                      {"groups", cb.groups},
                      {"leaders", cb.leaders}};
  if (!cb.member_meta.empty()) {
    nlohmann::json meta = nlohmann::json::array();
    for (const auto& m : cb.member_meta) {
      meta.push_back({{"speaker_id", m.speaker_id}, {"utterance_id", m.utterance_id}});
    }
    j["member_meta"] = meta;
  }
  return j;
}

inline Codebook codebook_from_json(const nlohmann::json& j) {
  Codebook cb;
  try {
    cb.dim = j.at("dim").get<std::size_t>();
    cb.codewords = j.at("codewords").get<std::vector<std::vector<double>>>();
    cb.groups = j.at("groups").get<std::vector<std::vector<std::size_t>>>();
    cb.leaders = j.at("leaders").get<std::vector<std::size_t>>();
    if (j.contains("member_meta")) {
      for (const auto& m : j.at("member_meta")) {
        cb.member_meta.push_back({m.at("speaker_id").get<std::string>(),
                                  m.at("utterance_id").get<std::string>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail("UnsupportedFormat", std::string("malformed codebook: ") + e.what());
  }
  validate(cb);
  return cb;
}

inline nlohmann::json dhmm_to_json(const Dhmm& m) {
  return {{"pi", m.pi}, {"trans", m.trans}, {"emis", m.emis}};
}

inline Dhmm dhmm_from_json(const nlohmann::json& j) {
  Dhmm m;
  try {
    m.pi = j.at("pi").get<std::vector<double>>();
    m.trans = j.at("trans").get<std::vector<std::vector<double>>>();
    m.emis = j.at("emis").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    fail("UnsupportedFormat", std::string("malformed model: ") + e.what());
  }
  return m;
}

struct ModelStore {
  RecognitionModel model;
  FeatureMethod method = FeatureMethod::Mfcc;
  Config config;
};

/// Write models.json (config, grouping and quantizer codebooks, per-speaker
/// HMMs) into dir. The embedded config carries the trainer settings and the
/// global seed, so a stored model is fully reproducible.
inline void save_models(const std::string& dir, const RecognitionModel& rm, FeatureMethod method,
                        const Config& cfg) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, "IoFailure", "cannot create directory '" + dir + "'");
  nlohmann::json models = nlohmann::json::array();
  for (const auto& sm : rm.models) {
    nlohmann::json m = dhmm_to_json(sm.model);
    m["speaker_id"] = sm.speaker_id;
    models.push_back(std::move(m));
  }
  const nlohmann::json j = {{"version", kModelStoreVersion},
                            {"feature_method", to_string(method)},
                            {"config", config_to_json(cfg)},
                            {"grouping", codebook_to_json(rm.grouping)},
                            {"quantizer", codebook_to_json(rm.quantizer)},
                            {"models", models}};
  std::ofstream os(fs::path(dir) / "models.json", std::ios::binary | std::ios::trunc);
  require(os.good(), "IoFailure", "cannot write models.json in '" + dir + "'");
  os << j.dump(2) << "\n";
  require(os.good(), "IoFailure", "short write of models.json");
}

inline ModelStore load_models(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string path = (fs::path(dir) / "models.json").string();
  std::ifstream is(path);
  require(is.good(), "MissingFile", "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    fail("UnsupportedFormat", std::string("models.json is not valid JSON: ") + e.what());
  }
  ModelStore store;
  try {
    require(j.at("version").get<int>() == kModelStoreVersion, "UnsupportedFormat",
            "unsupported model store version");
    store.method = parse_feature_method(j.at("feature_method").get<std::string>());
    store.config = config_from_json(j.at("config"));
    store.model.grouping = codebook_from_json(j.at("grouping"));
    store.model.quantizer = codebook_from_json(j.at("quantizer"));
    for (const auto& m : j.at("models")) {
      store.model.models.push_back({m.at("speaker_id").get<std::string>(), dhmm_from_json(m)});
    }
  } catch (const nlohmann::json::exception& e) {
    fail("UnsupportedFormat", std::string("malformed models.json: ") + e.what());
  }
  require(!store.model.models.empty(), "UnsupportedFormat", "models.json lists no speakers");
  return store;
}

}  // namespace spkid
