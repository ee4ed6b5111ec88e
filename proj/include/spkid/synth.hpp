#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "spkid/audio.hpp"
#include "spkid/dsp.hpp"
#include "spkid/error.hpp"
#include "spkid/rng.hpp"

namespace spkid {

/// Synthetic corpus layout: per speaker, a few enrollment and test utterances
/// built from speaker-specific tone stacks, plus stationary noise files for
/// mixing. Small enough to evaluate in seconds, separable enough to identify.
struct SynthConfig {
  std::size_t n_speakers = 5;
  std::size_t enroll_per_speaker = 3;
  std::size_t test_per_speaker = 2;
  int sample_rate_hz = 11025;
  double utterance_s = 1.2;
  double pad_s = 0.15;  ///< leading/trailing near-silence
  std::uint64_t seed = 1;
};

/// One utterance: three speaker-specific tones (frequencies step up with the
/// speaker index, jittered ~1% per utterance) under a slow syllabic envelope,
/// padded with near-silence and covered by weak white noise (~40 dB SNR) so
/// denoising and endpointing operate on realistic input.
inline AudioBuffer synth_utterance(const SynthConfig& cfg, std::size_t speaker,
                                   std::size_t utterance) {
  require(speaker < cfg.n_speakers, "ConfigInvalid", "speaker index out of range");
  require(cfg.utterance_s > 2.0 * cfg.pad_s + 0.2, "ConfigInvalid",
          "utterance too short for its silence pads");

  std::mt19937_64 rng(stage_seed(cfg.seed, "synth:s" + std::to_string(speaker) + ":u" +
                                               std::to_string(utterance)));
  const double sr = static_cast<double>(cfg.sample_rate_hz);
  const auto total = static_cast<std::size_t>(std::llround(cfg.utterance_s * sr));
  const auto pad = static_cast<std::size_t>(std::llround(cfg.pad_s * sr));
  const std::size_t voiced_len = total - 2 * pad;

  const double base[3] = {300.0 + 80.0 * static_cast<double>(speaker),
                          1200.0 + 120.0 * static_cast<double>(speaker),
                          2500.0 + 160.0 * static_cast<double>(speaker)};
  const double amp[3] = {1.0, 0.6, 0.35};
  double freq[3], phase[3];
  for (int k = 0; k < 3; ++k) {
    freq[k] = base[k] * (1.0 + 0.01 * (2.0 * detail::unit_uniform(rng) - 1.0));
    phase[k] = 2.0 * dsp::kPi * detail::unit_uniform(rng);
  }
  const double env_phase = 2.0 * dsp::kPi * detail::unit_uniform(rng);

  std::vector<double> voiced(voiced_len, 0.0);
  const auto fade = static_cast<std::size_t>(std::llround(0.01 * sr));
  double peak = 0.0;
  for (std::size_t t = 0; t < voiced_len; ++t) {
    const double ts = static_cast<double>(t) / sr;
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += amp[k] * std::sin(2.0 * dsp::kPi * freq[k] * ts + phase[k]);
    s *= 0.75 + 0.25 * std::sin(2.0 * dsp::kPi * 3.0 * ts + env_phase);
    if (t < fade) s *= static_cast<double>(t) / static_cast<double>(fade);
    if (voiced_len - 1 - t < fade) {
      s *= static_cast<double>(voiced_len - 1 - t) / static_cast<double>(fade);
    }
    voiced[t] = s;
    peak = std::max(peak, std::abs(s));
  }
  for (double& s : voiced) s *= 0.3 / peak;

  AudioBuffer buf;
  buf.sample_rate_hz = cfg.sample_rate_hz;
  buf.samples.assign(total, 0.0);
  std::copy(voiced.begin(), voiced.end(), buf.samples.begin() + static_cast<std::ptrdiff_t>(pad));

  double energy = 0.0;
  for (double s : voiced) energy += s * s;
  const double voiced_rms = std::sqrt(energy / static_cast<double>(voiced_len));
  const double noise_amp = std::sqrt(3.0) * voiced_rms * std::pow(10.0, -40.0 / 20.0);
  for (double& s : buf.samples) s += noise_amp * (2.0 * detail::unit_uniform(rng) - 1.0);
  return buf;
}

/// Stationary noise: "white" (uniform) or "lowpass" (one-pole filtered white).
inline AudioBuffer synth_noise(const SynthConfig& cfg, const std::string& kind, double duration_s) {
  std::mt19937_64 rng(stage_seed(cfg.seed, "synth:noise:" + kind));
  const auto n = static_cast<std::size_t>(
      std::llround(duration_s * static_cast<double>(cfg.sample_rate_hz)));
  AudioBuffer buf;
  buf.sample_rate_hz = cfg.sample_rate_hz;
  buf.samples.resize(n);
  if (kind == "white") {
    for (double& s : buf.samples) s = 0.3 * (2.0 * detail::unit_uniform(rng) - 1.0);
  } else if (kind == "lowpass") {
    double y = 0.0;
    for (double& s : buf.samples) {
      y = 0.95 * y + 0.05 * (2.0 * detail::unit_uniform(rng) - 1.0);
      s = y;
    }
    double peak = 1e-12;
    for (double s : buf.samples) peak = std::max(peak, std::abs(s));
    for (double& s : buf.samples) s *= 0.5 / peak;
  } else {
    fail("ConfigInvalid", "unknown noise kind '" + kind + "'");
  }
  return buf;
}

/// Write the wav files and a manifest into out_dir. The manifest references
/// the wavs by paths relative to its own location.
inline void write_synthetic_corpus(const SynthConfig& cfg, const std::string& out_dir) {
  require(cfg.n_speakers >= 2, "ConfigInvalid", "need at least two speakers");
  require(cfg.enroll_per_speaker >= 1 && cfg.test_per_speaker >= 1, "ConfigInvalid",
          "need at least one enrollment and one test utterance per speaker");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, "IoFailure", "cannot create directory '" + out_dir + "'");

  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t sp = 0; sp < cfg.n_speakers; ++sp) {
    const std::string speaker_id = "sp" + std::to_string(sp + 1);
    for (std::size_t u = 0; u < cfg.enroll_per_speaker + cfg.test_per_speaker; ++u) {
      const bool is_enroll = u < cfg.enroll_per_speaker;
      const std::string utt_id =
          (is_enroll ? "e" : "t") +
          std::to_string(is_enroll ? u + 1 : u - cfg.enroll_per_speaker + 1);
      const std::string name = speaker_id + "_" + utt_id + ".wav";
      write_wav((fs::path(out_dir) / name).string(), synth_utterance(cfg, sp, u));
      entries.push_back({{"speaker_id", speaker_id},
                         {"utterance_id", utt_id},
                         {"wav_path", name},
                         {"split", is_enroll ? "ENROLL" : "TEST"}});
    }
  }

  nlohmann::json noise_files = nlohmann::json::array();
  for (const std::string kind : {"white", "lowpass"}) {
    const std::string name = "noise_" + kind + ".wav";
    write_wav((fs::path(out_dir) / name).string(), synth_noise(cfg, kind, 3.0));
    noise_files.push_back({{"name", kind}, {"wav_path", name}});
  }

  nlohmann::json manifest = {{"entries", entries},
                             {"noise_files", noise_files},
                             {"snr_levels_db", {15.0, 10.0, 5.0, 0.0}}};
  std::ofstream os(fs::path(out_dir) / "manifest.json");
  require(os.good(), "IoFailure", "cannot write manifest in '" + out_dir + "'");
  os << manifest.dump(2) << "\n";
  require(os.good(), "IoFailure", "short write of manifest");
}

}  // namespace spkid
