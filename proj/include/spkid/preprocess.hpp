#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "spkid/audio.hpp"
#include "spkid/dsp.hpp"
#include "spkid/error.hpp"

namespace spkid {

/// Overlapping frames cut from one signal. Frame i covers source samples
/// [i*hop, i*hop + frame_len).
struct FrameMatrix {
  std::vector<std::vector<double>> frames;
  std::size_t frame_len = 0;
  std::size_t hop = 0;
  int sample_rate_hz = 11025;

  std::size_t size() const { return frames.size(); }
};

struct EndpointConfig {
  /// Absolute frame energy (dB) above which a frame always counts as speech,
  /// even when the adaptive noise floor sits high (e.g. a tone with no pauses).
  double energy_floor_db = -25.0;
  double threshold_offset_db = 10.0;
  std::size_t min_speech_frames = 5;
  std::size_t min_silence_frames = 10;
};

struct WienerConfig {
  std::size_t noise_estimate_frames = 6;  ///< leading frames assumed noise-only
  double smoothing_alpha = 0.98;          ///< decision-directed a-priori SNR smoothing
  double gain_floor = 0.1;
};

/// Half-open sample range of one speech segment.
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
};

/// Short-term log energy of one frame: 10*log10(sum s^2 + 1e-12).
inline double short_term_log_energy(const std::vector<double>& frame) {
  require(!frame.empty(), "EmptyFrame", "log energy of an empty frame");
  double acc = 0.0;
  for (double s : frame) acc += s * s;
  return 10.0 * std::log10(acc + 1e-12);
}

/// Symmetric Hamming window w(n) = 0.54 - 0.46*cos(2*pi*n/(n_len-1)).
/// The second half mirrors the first so w(n) == w(n_len-1-n) bit-exactly.
inline std::vector<double> hamming_window(std::size_t n_len) {
  require(n_len >= 2, "TooShort", "Hamming window needs at least 2 points");
  std::vector<double> w(n_len);
  for (std::size_t n = 0; n <= (n_len - 1) / 2; ++n) {
    const double v = 0.54 - 0.46 * std::cos(2.0 * dsp::kPi * static_cast<double>(n) /
                                            static_cast<double>(n_len - 1));
    w[n] = v;
    w[n_len - 1 - n] = v;
  }
  return w;
}

/// First-order pre-emphasis y[t] = x[t] - alpha*x[t-1], y[0] = x[0].
inline AudioBuffer pre_emphasize(const AudioBuffer& buf, double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, "AlphaOutOfRange",
          "pre-emphasis alpha must lie in [0, 1]");
  AudioBuffer out;
  out.sample_rate_hz = buf.sample_rate_hz;
  out.samples.resize(buf.size());
  if (buf.empty()) return out;
  out.samples[0] = buf.samples[0];
  for (std::size_t t = 1; t < buf.size(); ++t) {
    out.samples[t] = buf.samples[t] - alpha * buf.samples[t - 1];
  }
  return out;
}

/// Cuts overlapping frames. frame_ms must lie in [10, 30] ms and
/// overlap_fraction in [0.25, 0.75]; trailing samples that do not fill a
/// whole frame are dropped.
inline FrameMatrix frame_signal(const AudioBuffer& buf, double frame_ms, double overlap_fraction) {
  require(frame_ms >= 10.0 && frame_ms <= 30.0, "FrameMsOutOfRange",
          "frame length must lie in [10, 30] ms");
  require(overlap_fraction >= 0.25 && overlap_fraction <= 0.75, "OverlapOutOfRange",
          "overlap must lie in [0.25, 0.75]");
  const auto frame_len = static_cast<std::size_t>(
      std::llround(frame_ms * static_cast<double>(buf.sample_rate_hz) / 1000.0));
  const auto hop = static_cast<std::size_t>(
      std::llround(static_cast<double>(frame_len) * (1.0 - overlap_fraction)));
  require(buf.size() >= frame_len && frame_len > 0, "TooShort",
          "signal shorter than one frame");

  FrameMatrix fm;
  fm.frame_len = frame_len;
  fm.hop = hop;
  fm.sample_rate_hz = buf.sample_rate_hz;
  const std::size_t count = (buf.size() - frame_len) / hop + 1;
  fm.frames.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto begin = buf.samples.begin() + static_cast<std::ptrdiff_t>(i * hop);
    fm.frames.emplace_back(begin, begin + static_cast<std::ptrdiff_t>(frame_len));
  }
  return fm;
}

/// Element-wise window applied to every frame.
inline FrameMatrix apply_window(const FrameMatrix& fm, const std::vector<double>& window) {
  require(window.size() == fm.frame_len, "LengthMismatch",
          "window length does not match frame length");
  FrameMatrix out = fm;
  for (auto& frame : out.frames) {
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] *= window[i];
  }
  return out;
}

/// Energy-threshold speech segmentation. The adaptive noise floor is the
/// median energy of the quietest 10% of frames; frames above
/// min(floor + threshold_offset_db, energy_floor_db) are speech candidates.
/// Candidate runs shorter than min_speech_frames are dropped, then gaps
/// shorter than min_silence_frames bridged. Segments come back in sample
/// units, ascending and disjoint.
inline std::vector<Segment> detect_endpoints(const AudioBuffer& buf, std::size_t frame_len,
                                             std::size_t hop, const EndpointConfig& cfg) {
  require(frame_len > 0 && hop > 0 && hop <= frame_len, "ConfigInvalid",
          "need 0 < hop <= frame_len");
  require(buf.size() >= frame_len, "TooShort", "signal shorter than one frame");

  const std::size_t n_frames = (buf.size() - frame_len) / hop + 1;
  std::vector<double> energies(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (std::size_t t = 0; t < frame_len; ++t) {
      const double s = buf.samples[i * hop + t];
      acc += s * s;
    }
    energies[i] = 10.0 * std::log10(acc + 1e-12);
  }

  std::vector<double> sorted = energies;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t quiet = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(n_frames))));
  const double noise_floor = (quiet % 2 == 1)
                                 ? sorted[quiet / 2]
                                 : 0.5 * (sorted[quiet / 2 - 1] + sorted[quiet / 2]);
  const double threshold =
      std::min(noise_floor + cfg.threshold_offset_db, cfg.energy_floor_db);

  std::vector<bool> speech(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) speech[i] = energies[i] > threshold;

  // Frame-index runs of consecutive speech candidates.
  struct Run {
    std::size_t first, last;  // inclusive
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < n_frames;) {
    if (!speech[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n_frames && speech[j + 1]) ++j;
    if (j - i + 1 >= cfg.min_speech_frames) runs.push_back({i, j});
    i = j + 1;
  }
  require(!runs.empty(), "NoSpeech", "no frame run exceeds the energy threshold");

  std::vector<Run> merged;
  merged.push_back(runs.front());
  for (std::size_t r = 1; r < runs.size(); ++r) {
    const std::size_t gap = runs[r].first - merged.back().last - 1;
    if (gap < cfg.min_silence_frames) {
      merged.back().last = runs[r].last;
    } else {
      merged.push_back(runs[r]);
    }
  }

  std::vector<Segment> segments;
  segments.reserve(merged.size());
  for (const Run& run : merged) {
    Segment seg;
    seg.start = run.first * hop;
    seg.end = std::min(buf.size(), run.last * hop + frame_len);
    segments.push_back(seg);
  }
  return segments;
}

/// Concatenates the speech segments, dropping everything between them.
inline AudioBuffer remove_silence(const AudioBuffer& buf, const std::vector<Segment>& segments) {
  require(!segments.empty(), "EmptySegments", "no segments to keep");
  AudioBuffer out;
  out.sample_rate_hz = buf.sample_rate_hz;
  for (const Segment& seg : segments) {
    require(seg.start <= seg.end && seg.end <= buf.size(), "EmptySegments",
            "segment out of bounds");
    out.samples.insert(out.samples.end(),
                       buf.samples.begin() + static_cast<std::ptrdiff_t>(seg.start),
                       buf.samples.begin() + static_cast<std::ptrdiff_t>(seg.end));
  }
  return out;
}

namespace detail {
inline constexpr std::size_t kWienerFrameLen = 256;
inline constexpr std::size_t kWienerHop = 128;
}  // namespace detail

/// STFT-domain Wiener denoiser. The noise PSD comes from the leading
/// noise_estimate_frames frames; the a-priori SNR xi follows the
/// decision-directed update
///   xi_t = alpha * G_{t-1}^2 * gamma_{t-1} + (1 - alpha) * max(gamma_t - 1, 0)
/// and the gain G = xi / (1 + xi) is clamped to [gain_floor, 1] before
/// weighted overlap-add resynthesis. Output length equals input length and
/// the output never carries more energy than the input.
inline AudioBuffer wiener_filter(const AudioBuffer& buf, const WienerConfig& cfg) {
  require(cfg.noise_estimate_frames >= 1, "ConfigInvalid", "need at least one noise frame");
  require(cfg.smoothing_alpha >= 0.0 && cfg.smoothing_alpha < 1.0, "ConfigInvalid",
          "smoothing_alpha must lie in [0, 1)");
  require(cfg.gain_floor > 0.0 && cfg.gain_floor < 1.0, "ConfigInvalid",
          "gain_floor must lie in (0, 1)");
  const std::size_t flen = detail::kWienerFrameLen;
  const std::size_t hop = detail::kWienerHop;
  require(buf.size() >= cfg.noise_estimate_frames * flen, "TooShort",
          "signal shorter than the noise-estimation window");

  const std::vector<double> window = hamming_window(flen);
  const std::size_t n_bins = flen / 2 + 1;
  const std::size_t n_frames = (buf.size() - 1) / hop + 1;

  // Leading-frame noise PSD estimate.
  std::vector<double> noise_psd(n_bins, 0.0);
  std::vector<std::vector<std::complex<double>>> spectra(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    std::vector<std::complex<double>> frame(flen, {0.0, 0.0});
    for (std::size_t t = 0; t < flen; ++t) {
      const std::size_t src = i * hop + t;
      frame[t] = {src < buf.size() ? buf.samples[src] * window[t] : 0.0, 0.0};
    }
    dsp::fft(frame);
    spectra[i] = std::move(frame);
    if (i < cfg.noise_estimate_frames) {
      for (std::size_t k = 0; k < n_bins; ++k) noise_psd[k] += std::norm(spectra[i][k]);
    }
  }
  for (double& p : noise_psd) {
    p = std::max(p / static_cast<double>(cfg.noise_estimate_frames), 1e-20);
  }

  std::vector<double> acc(buf.size(), 0.0);
  std::vector<double> norm(buf.size(), 0.0);
  std::vector<double> prev_gain(n_bins, 1.0);
  std::vector<double> prev_gamma(n_bins, 1.0);
  for (std::size_t i = 0; i < n_frames; ++i) {
    auto& spec = spectra[i];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double gamma = std::norm(spec[k]) / noise_psd[k];
      const double xi = (i == 0)
                            ? std::max(gamma - 1.0, 0.0)
                            : cfg.smoothing_alpha * prev_gain[k] * prev_gain[k] * prev_gamma[k] +
                                  (1.0 - cfg.smoothing_alpha) * std::max(gamma - 1.0, 0.0);
      const double gain = std::clamp(xi / (1.0 + xi), cfg.gain_floor, 1.0);
      spec[k] *= gain;
      if (k > 0 && k < flen - k) spec[flen - k] *= gain;  // keep conjugate symmetry
      prev_gain[k] = gain;
      prev_gamma[k] = gamma;
    }
    dsp::fft(spec, true);
    for (std::size_t t = 0; t < flen; ++t) {
      const std::size_t dst = i * hop + t;
      if (dst >= buf.size()) break;
      acc[dst] += spec[t].real() * window[t];
      norm[dst] += window[t] * window[t];
    }
  }

  AudioBuffer out;
  out.sample_rate_hz = buf.sample_rate_hz;
  out.samples.resize(buf.size());
  for (std::size_t t = 0; t < buf.size(); ++t) {
    out.samples[t] = acc[t] / std::max(norm[t], 1e-12);
  }

  // Gains never exceed 1; guard the overlap-add against adding energy anyway.
  double e_in = 0.0, e_out = 0.0;
  for (double s : buf.samples) e_in += s * s;
  for (double s : out.samples) e_out += s * s;
  if (e_out > e_in && e_out > 0.0) {
    const double scale = std::sqrt(e_in / e_out);
    for (double& s : out.samples) s *= scale;
  }
  return out;
}

}  // namespace spkid
