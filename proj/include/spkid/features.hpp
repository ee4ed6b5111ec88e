#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "spkid/dsp.hpp"
#include "spkid/error.hpp"
#include "spkid/preprocess.hpp"

namespace spkid {

enum class FeatureMethod { Lpc, Lpcc, Rcc, Mfcc, Dmfcc, Ddmfcc };

inline const char* to_string(FeatureMethod m) {
  switch (m) {
    case FeatureMethod::Lpc: return "lpc";
    case FeatureMethod::Lpcc: return "lpcc";
    case FeatureMethod::Rcc: return "rcc";
    case FeatureMethod::Mfcc: return "mfcc";
    case FeatureMethod::Dmfcc: return "dmfcc";
    case FeatureMethod::Ddmfcc: return "ddmfcc";
  }
  return "?";
}

inline FeatureMethod parse_feature_method(const std::string& s) {
  if (s == "lpc") return FeatureMethod::Lpc;
  if (s == "lpcc") return FeatureMethod::Lpcc;
  if (s == "rcc") return FeatureMethod::Rcc;
  if (s == "mfcc") return FeatureMethod::Mfcc;
  if (s == "dmfcc") return FeatureMethod::Dmfcc;
  if (s == "ddmfcc") return FeatureMethod::Ddmfcc;
  fail("ConfigInvalid", "unknown feature method '" + s + "'");
}

/// One feature vector per frame; every vector has exactly `dim` entries.
struct FeatureSequence {
  std::vector<std::vector<double>> vectors;
  std::size_t dim = 0;
  FeatureMethod method = FeatureMethod::Mfcc;

  std::size_t size() const { return vectors.size(); }
  bool empty() const { return vectors.empty(); }
};

/// Time average over all frames of a sequence.
inline std::vector<double> mean_vector(const FeatureSequence& fs) {
  require(!fs.empty(), "EmptySequence", "cannot average an empty feature sequence");
  std::vector<double> mean(fs.dim, 0.0);
  for (const auto& v : fs.vectors) {
    for (std::size_t i = 0; i < fs.dim; ++i) mean[i] += v[i];
  }
  for (double& m : mean) m /= static_cast<double>(fs.size());
  return mean;
}

struct MfccConfig {
  std::size_t n_fft = 512;
  std::size_t n_filters = 26;
  std::size_t n_ceps = 12;
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;  ///< 0 means Nyquist
  bool include_c0 = false;
};

// ---------------------------------------------------------------------------
// Linear prediction
// ---------------------------------------------------------------------------

/// r[k] = sum_{t=0}^{N-1-k} s[t]*s[t+k] for k = 0..max_lag.
inline std::vector<double> autocorrelation(const std::vector<double>& frame, std::size_t max_lag) {
  require(max_lag < frame.size(), "LagTooLarge", "max_lag must be below the frame length");
  std::vector<double> r(max_lag + 1, 0.0);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double acc = 0.0;
    for (std::size_t t = 0; t + k < frame.size(); ++t) acc += frame[t] * frame[t + k];
    r[k] = acc;
  }
  return r;
}

struct LpcResult {
  std::vector<double> coeffs;  ///< a[1..order] stored at [0..order-1]
  double gain = 0.0;           ///< sqrt of the residual energy
};

/// Levinson-Durbin recursion for the predictor s[t] ~ sum_k a[k]*s[t-k].
inline LpcResult lpc(const std::vector<double>& frame, std::size_t order) {
  require(order >= 1, "ConfigInvalid", "LPC order must be at least 1");
  std::vector<double> r = autocorrelation(frame, order);
  require(r[0] > 0.0, "ZeroEnergy", "LPC of a zero-energy frame");

  std::vector<double> a(order + 1, 0.0);
  std::vector<double> prev(order + 1, 0.0);
  double err = r[0];
  for (std::size_t m = 1; m <= order; ++m) {
    double acc = r[m];
    for (std::size_t k = 1; k < m; ++k) acc -= prev[k] * r[m - k];
    const double reflection = acc / err;
    require(std::abs(reflection) <= 1.0 + 1e-9, "UnstableRecursion",
            "reflection coefficient outside [-1, 1]");
    a = prev;
    a[m] = reflection;
    for (std::size_t k = 1; k < m; ++k) a[k] = prev[k] - reflection * prev[m - k];
    err *= (1.0 - reflection * reflection);
    err = std::max(err, 0.0);
    prev = a;
  }

  LpcResult result;
  result.coeffs.assign(a.begin() + 1, a.end());
  result.gain = std::sqrt(err);
  return result;
}

/// Cepstral recursion from LPC coefficients a[1..p]:
///   c[1] = a[1]
///   c[m] = a[m] + sum_{k=1}^{m-1} (k/m) c[k] a[m-k]          for m <= p
///   c[m] = sum_{k=m-p}^{m-1} (k/m) c[k] a[m-k]               for m > p
inline std::vector<double> lpcc(const std::vector<double>& lpc_coeffs, std::size_t n_ceps) {
  require(n_ceps >= 1, "ConfigInvalid", "need at least one cepstral coefficient");
  const std::size_t p = lpc_coeffs.size();
  require(p >= 1, "ConfigInvalid", "LPC coefficient vector is empty");
  auto a = [&](std::size_t i) { return lpc_coeffs[i - 1]; };  // a[1..p]

  std::vector<double> c(n_ceps + 1, 0.0);  // c[1..n_ceps]
  for (std::size_t m = 1; m <= n_ceps; ++m) {
    double acc = (m <= p) ? a(m) : 0.0;
    const std::size_t k_lo = (m > p) ? m - p : 1;
    for (std::size_t k = k_lo; k < m; ++k) {
      acc += (static_cast<double>(k) / static_cast<double>(m)) * c[k] * a(m - k);
    }
    c[m] = acc;
  }
  return {c.begin() + 1, c.end()};
}

// ---------------------------------------------------------------------------
// Cepstra from the spectrum
// ---------------------------------------------------------------------------

/// Real cepstrum: first n_ceps coefficients of IDFT(log(|DFT(frame)| + 1e-10)).
inline std::vector<double> rcc(const std::vector<double>& frame, std::size_t n_ceps,
                               std::size_t n_fft) {
  require(n_fft >= frame.size(), "ConfigInvalid", "n_fft must cover the frame");
  require(n_ceps <= n_fft, "ConfigInvalid", "n_ceps must not exceed n_fft");
  const bool all_zero = std::all_of(frame.begin(), frame.end(), [](double s) { return s == 0.0; });
  require(!all_zero, "ZeroFrame", "real cepstrum of an all-zero frame");

  auto spec = dsp::fft_real(frame, n_fft);
  std::vector<std::complex<double>> logmag(n_fft);
  for (std::size_t k = 0; k < n_fft; ++k) logmag[k] = {std::log(std::abs(spec[k]) + 1e-10), 0.0};
  dsp::fft(logmag, true);
  std::vector<double> c(n_ceps);
  for (std::size_t n = 0; n < n_ceps; ++n) c[n] = logmag[n].real();
  return c;
}

// ---------------------------------------------------------------------------
// MFCC
// ---------------------------------------------------------------------------

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

/// Triangular mel filterbank, n_filters x (n_fft/2 + 1). Centers are equally
/// spaced on the mel scale between fmin and fmax; each row is peak-normalized
/// to 1.0 and adjacent triangles overlap at half their base.
inline std::vector<std::vector<double>> mel_filterbank(const MfccConfig& cfg, int sample_rate_hz) {
  const double nyquist = static_cast<double>(sample_rate_hz) / 2.0;
  const double fmax = (cfg.fmax_hz > 0.0) ? cfg.fmax_hz : nyquist;
  require(dsp::is_power_of_two(cfg.n_fft), "ConfigInvalid", "n_fft must be a power of two");
  require(cfg.n_filters >= 1, "ConfigInvalid", "need at least one filter");
  require(cfg.n_ceps >= 1 && cfg.n_ceps <= cfg.n_filters, "ConfigInvalid",
          "need 1 <= n_ceps <= n_filters");
  require(cfg.fmin_hz >= 0.0 && cfg.fmin_hz < fmax && fmax <= nyquist + 1e-9, "ConfigInvalid",
          "need 0 <= fmin < fmax <= Nyquist");

  const std::size_t n_bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(cfg.n_filters + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(cfg.n_filters + 1));
  }

  std::vector<std::vector<double>> fb(cfg.n_filters, std::vector<double>(n_bins, 0.0));
  const double bin_hz = static_cast<double>(sample_rate_hz) / static_cast<double>(cfg.n_fft);
  for (std::size_t f = 0; f < cfg.n_filters; ++f) {
    const double left = edges[f], center = edges[f + 1], right = edges[f + 2];
    double peak = 0.0;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double hz = static_cast<double>(k) * bin_hz;
      double w = 0.0;
      if (hz > left && hz < right) {
        w = (hz <= center) ? (hz - left) / (center - left) : (right - hz) / (right - center);
      }
      fb[f][k] = w;
      peak = std::max(peak, w);
    }
    require(peak > 0.0, "ConfigInvalid",
            "mel filter " + std::to_string(f) + " covers no FFT bin");
    for (double& w : fb[f]) w /= peak;
  }
  return fb;
}

/// Per-filter energies of one power spectrum.
inline std::vector<double> filterbank_energies(const std::vector<std::vector<double>>& fb,
                                               const std::vector<double>& power) {
  std::vector<double> energies(fb.size(), 0.0);
  for (std::size_t f = 0; f < fb.size(); ++f) {
    require(fb[f].size() == power.size(), "LengthMismatch",
            "power spectrum does not match filterbank width");
    double acc = 0.0;
    for (std::size_t k = 0; k < power.size(); ++k) acc += fb[f][k] * power[k];
    energies[f] = acc;
  }
  return energies;
}

/// log -> DCT-II stage of MFCC, fed with raw filterbank energies.
inline std::vector<double> mfcc_from_energies(const std::vector<double>& energies,
                                              const MfccConfig& cfg) {
  std::vector<double> logs(energies.size());
  for (std::size_t i = 0; i < energies.size(); ++i) logs[i] = std::log(energies[i] + 1e-10);
  const std::size_t keep = cfg.n_ceps + (cfg.include_c0 ? 0 : 1);
  std::vector<double> dct = dsp::dct2(logs, keep);
  if (cfg.include_c0) return dct;
  return {dct.begin() + 1, dct.end()};
}

/// MFCC of windowed frames: power spectrum -> mel filterbank -> log -> DCT-II,
/// keeping coefficients 1..n_ceps (c0 excluded unless configured otherwise).
inline FeatureSequence mfcc(const FrameMatrix& fm, const MfccConfig& cfg) {
  require(cfg.n_fft >= fm.frame_len, "ConfigInvalid", "n_fft must cover the frame length");
  const auto fb = mel_filterbank(cfg, fm.sample_rate_hz);
  FeatureSequence fs;
  fs.method = FeatureMethod::Mfcc;
  fs.dim = cfg.n_ceps;
  fs.vectors.reserve(fm.size());
  for (const auto& frame : fm.frames) {
    const auto power = dsp::power_spectrum(frame, cfg.n_fft);
    fs.vectors.push_back(mfcc_from_energies(filterbank_energies(fb, power), cfg));
  }
  return fs;
}

// ---------------------------------------------------------------------------
// Dynamic features
// ---------------------------------------------------------------------------

/// Regression delta d[t] = sum_k k*(c[t+k] - c[t-k]) / (2*sum_k k^2) with
/// edge frames replicated. Advances the method tag MFCC -> DMFCC -> DDMFCC.
inline FeatureSequence delta(const FeatureSequence& fs, std::size_t k_window) {
  require(k_window >= 1, "ConfigInvalid", "delta window must be at least 1");
  require(!fs.empty(), "EmptySequence", "delta of an empty sequence");

  double denom = 0.0;
  for (std::size_t k = 1; k <= k_window; ++k) denom += static_cast<double>(k * k);
  denom *= 2.0;

  const auto t_max = static_cast<std::ptrdiff_t>(fs.size()) - 1;
  auto at = [&](std::ptrdiff_t t) -> const std::vector<double>& {
    return fs.vectors[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(t, 0, t_max))];
  };

  FeatureSequence out;
  out.dim = fs.dim;
  out.method = (fs.method == FeatureMethod::Mfcc)    ? FeatureMethod::Dmfcc
               : (fs.method == FeatureMethod::Dmfcc) ? FeatureMethod::Ddmfcc
                                                     : fs.method;
  out.vectors.assign(fs.size(), std::vector<double>(fs.dim, 0.0));
  for (std::ptrdiff_t t = 0; t <= t_max; ++t) {
    for (std::size_t i = 0; i < fs.dim; ++i) {
      double acc = 0.0;
      for (std::size_t k = 1; k <= k_window; ++k) {
        const auto dk = static_cast<std::ptrdiff_t>(k);
        acc += static_cast<double>(k) * (at(t + dk)[i] - at(t - dk)[i]);
      }
      out.vectors[static_cast<std::size_t>(t)][i] = acc / denom;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full extraction pipeline
// ---------------------------------------------------------------------------

struct ExtractConfig {
  WienerConfig wiener;
  EndpointConfig endpoint;
  double pre_emphasis_alpha = 0.97;
  double frame_ms = 23.2;  // 256 samples at 11025 Hz
  double overlap_fraction = 0.5;
  MfccConfig mfcc;
  std::size_t lpc_order = 12;
  std::size_t lpcc_n_ceps = 12;
  std::size_t rcc_n_ceps = 12;
  std::size_t delta_window = 2;
  bool delta_concat = false;  ///< append deltas to the base MFCCs instead of standalone
};

namespace detail {

inline FeatureSequence concat_features(const std::vector<const FeatureSequence*>& parts) {
  FeatureSequence out;
  out.method = parts.back()->method;
  for (const auto* p : parts) out.dim += p->dim;
  out.vectors.assign(parts.front()->size(), {});
  for (std::size_t t = 0; t < out.vectors.size(); ++t) {
    out.vectors[t].reserve(out.dim);
    for (const auto* p : parts) {
      out.vectors[t].insert(out.vectors[t].end(), p->vectors[t].begin(), p->vectors[t].end());
    }
  }
  return out;
}

inline FeatureSequence extract_from_frames(const FrameMatrix& windowed, FeatureMethod method,
                                           const ExtractConfig& cfg) {
  FeatureSequence fs;
  switch (method) {
    case FeatureMethod::Lpc: {
      fs.method = FeatureMethod::Lpc;
      fs.dim = cfg.lpc_order;
      for (const auto& frame : windowed.frames) fs.vectors.push_back(lpc(frame, cfg.lpc_order).coeffs);
      return fs;
    }
    case FeatureMethod::Lpcc: {
      fs.method = FeatureMethod::Lpcc;
      fs.dim = cfg.lpcc_n_ceps;
      for (const auto& frame : windowed.frames) {
        fs.vectors.push_back(lpcc(lpc(frame, cfg.lpc_order).coeffs, cfg.lpcc_n_ceps));
      }
      return fs;
    }
    case FeatureMethod::Rcc: {
      fs.method = FeatureMethod::Rcc;
      fs.dim = cfg.rcc_n_ceps;
      for (const auto& frame : windowed.frames) {
        fs.vectors.push_back(rcc(frame, cfg.rcc_n_ceps, cfg.mfcc.n_fft));
      }
      return fs;
    }
    case FeatureMethod::Mfcc:
      return mfcc(windowed, cfg.mfcc);
    case FeatureMethod::Dmfcc: {
      const FeatureSequence base = mfcc(windowed, cfg.mfcc);
      const FeatureSequence d = delta(base, cfg.delta_window);
      return cfg.delta_concat ? concat_features({&base, &d}) : d;
    }
    case FeatureMethod::Ddmfcc: {
      const FeatureSequence base = mfcc(windowed, cfg.mfcc);
      const FeatureSequence d = delta(base, cfg.delta_window);
      const FeatureSequence dd = delta(d, cfg.delta_window);
      return cfg.delta_concat ? concat_features({&base, &d, &dd}) : dd;
    }
  }
  fail("ConfigInvalid", "unhandled feature method");
}

}  // namespace detail

/// Full front end: Wiener denoising, endpoint detection and silence removal,
/// pre-emphasis, framing, Hamming windowing, then the selected extractor.
inline FeatureSequence extract(const AudioBuffer& buf, FeatureMethod method,
                               const ExtractConfig& cfg) {
  const AudioBuffer denoised = wiener_filter(buf, cfg.wiener);
  const auto frame_len = static_cast<std::size_t>(std::llround(
      cfg.frame_ms * static_cast<double>(buf.sample_rate_hz) / 1000.0));
  const auto hop = static_cast<std::size_t>(
      std::llround(static_cast<double>(frame_len) * (1.0 - cfg.overlap_fraction)));
  const auto segments = detect_endpoints(denoised, frame_len, hop, cfg.endpoint);
  const AudioBuffer speech = remove_silence(denoised, segments);
  const AudioBuffer emphasized = pre_emphasize(speech, cfg.pre_emphasis_alpha);
  const FrameMatrix frames = frame_signal(emphasized, cfg.frame_ms, cfg.overlap_fraction);
  const FrameMatrix windowed = apply_window(frames, hamming_window(frames.frame_len));
  return detail::extract_from_frames(windowed, method, cfg);
}

/// Reduced chain for stationary noise references: pre-emphasis, framing and
/// windowing only. Denoising would strip the reference itself and endpoint
/// detection expects speech pauses that noise does not have.
inline FeatureSequence extract_noise_reference(const AudioBuffer& buf, FeatureMethod method,
                                               const ExtractConfig& cfg) {
  const AudioBuffer emphasized = pre_emphasize(buf, cfg.pre_emphasis_alpha);
  const FrameMatrix frames = frame_signal(emphasized, cfg.frame_ms, cfg.overlap_fraction);
  const FrameMatrix windowed = apply_window(frames, hamming_window(frames.frame_len));
  return detail::extract_from_frames(windowed, method, cfg);
}

// ---------------------------------------------------------------------------
// Feature file container: magic "SPKF", u32 version, u32 method, u32 dim,
// u32 frame count, then row-major f64 values, all little-endian.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace detail

inline constexpr std::uint32_t kFeatureFileVersion = 1;

inline void write_feature_file(const std::string& path, const FeatureSequence& fs) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.good(), "IoFailure", "cannot open '" + path + "' for writing");
  os.write("SPKF", 4);
  detail::put_u32(os, kFeatureFileVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(fs.method));
  detail::put_u32(os, static_cast<std::uint32_t>(fs.dim));
  detail::put_u32(os, static_cast<std::uint32_t>(fs.size()));
  for (const auto& v : fs.vectors) {
    for (double x : v) detail::put_f64(os, x);
  }
  require(os.good(), "IoFailure", "short write to '" + path + "'");
}

inline FeatureSequence read_feature_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "MissingFile", "cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  require(is.good() && std::string(magic, 4) == "SPKF", "UnsupportedFormat",
          "'" + path + "' is not a feature file");
  const std::uint32_t version = detail::get_u32(is);
  require(version == kFeatureFileVersion, "UnsupportedFormat",
          "unsupported feature file version " + std::to_string(version));
  FeatureSequence fs;
  fs.method = static_cast<FeatureMethod>(detail::get_u32(is));
  fs.dim = detail::get_u32(is);
  const std::uint32_t count = detail::get_u32(is);
  fs.vectors.assign(count, std::vector<double>(fs.dim));
  for (auto& v : fs.vectors) {
    for (double& x : v) x = detail::get_f64(is);
  }
  require(is.good(), "UnsupportedFormat", "'" + path + "' truncated");
  return fs;
}

}  // namespace spkid
