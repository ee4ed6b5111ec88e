#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "spkid/error.hpp"

namespace spkid {

/// Mono audio, samples normalized to [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate_hz = 11025;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate_hz);
  }
};

inline double rms(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double s : x) acc += s * s;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

inline double rms(const AudioBuffer& buf) { return rms(buf.samples); }

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(static_cast<std::uint32_t>(p[0]) |
                                    (static_cast<std::uint32_t>(p[1]) << 8));
}

inline void put_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

inline void put_u16le(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

}  // namespace detail

/// Reads a 16-bit PCM mono RIFF/WAVE file. Samples are scaled by 1/32768,
/// so the full int16 range maps into [-1.0, 1.0) with -32768 -> -1.0 exact.
inline AudioBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "MissingFile", "cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  require(bytes.size() >= 44, "UnsupportedFormat", "'" + path + "' too small for a WAV header");
  require(std::equal(bytes.begin(), bytes.begin() + 4, "RIFF") &&
              std::equal(bytes.begin() + 8, bytes.begin() + 12, "WAVE"),
          "UnsupportedFormat", "'" + path + "' is not a RIFF/WAVE file");

  AudioBuffer buf;
  bool have_fmt = false;
  bool have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(bytes.begin() + pos, bytes.begin() + pos + 4);
    const std::uint32_t chunk_size = detail::read_u32le(&bytes[pos + 4]);
    const std::size_t body = pos + 8;
    if (body + chunk_size > bytes.size()) break;
    if (id == "fmt ") {
      require(chunk_size >= 16, "UnsupportedFormat", "fmt chunk truncated");
      const std::uint16_t format = detail::read_u16le(&bytes[body]);
      const std::uint16_t channels = detail::read_u16le(&bytes[body + 2]);
      const std::uint32_t rate = detail::read_u32le(&bytes[body + 4]);
      const std::uint16_t bits = detail::read_u16le(&bytes[body + 14]);
      require(format == 1, "UnsupportedFormat", "only PCM (format 1) is supported");
      require(channels == 1, "UnsupportedFormat", "only mono audio is supported");
      require(bits == 16, "UnsupportedFormat", "only 16-bit samples are supported");
      require(rate > 0, "UnsupportedFormat", "sample rate must be positive");
      buf.sample_rate_hz = static_cast<int>(rate);
      have_fmt = true;
    } else if (id == "data") {
      require(have_fmt, "UnsupportedFormat", "data chunk precedes fmt chunk");
      const std::size_t n = chunk_size / 2;
      buf.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto raw = static_cast<std::int16_t>(detail::read_u16le(&bytes[body + 2 * i]));
        buf.samples[i] = static_cast<double>(raw) / 32768.0;
      }
      have_data = true;
    }
    pos = body + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }
  require(have_fmt && have_data, "UnsupportedFormat", "'" + path + "' lacks fmt or data chunk");
  return buf;
}

/// Writes a 16-bit PCM mono WAV. Values are rounded and clamped to int16.
inline void write_wav(const std::string& path, const AudioBuffer& buf) {
  require(!buf.empty(), "IoFailure", "refusing to write an empty buffer to '" + path + "'");
  const std::uint32_t data_size = static_cast<std::uint32_t>(buf.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32le(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  detail::put_u32le(out, 16);
  detail::put_u16le(out, 1);  // PCM
  detail::put_u16le(out, 1);  // mono
  detail::put_u32le(out, static_cast<std::uint32_t>(buf.sample_rate_hz));
  detail::put_u32le(out, static_cast<std::uint32_t>(buf.sample_rate_hz) * 2);
  detail::put_u16le(out, 2);   // block align
  detail::put_u16le(out, 16);  // bits per sample
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put_u32le(out, data_size);
  for (double s : buf.samples) {
    double scaled = std::round(s * 32768.0);
    scaled = std::clamp(scaled, -32768.0, 32767.0);
    detail::put_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.good(), "IoFailure", "cannot open '" + path + "' for writing");
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  require(os.good(), "IoFailure", "short write to '" + path + "'");
}

/// Mixes noise into clean at the requested SNR (dB). The noise segment starting
/// at `noise_offset` is scaled by g = rms(clean) / (rms(noise) * 10^(snr/20))
/// and added; the result is clamped to [-1, 1] with the clip count reported
/// through `clipped` when given.
inline AudioBuffer mix_at_snr(const AudioBuffer& clean, const AudioBuffer& noise, double snr_db,
                              std::size_t* clipped = nullptr, std::size_t noise_offset = 0) {
  require(clean.sample_rate_hz == noise.sample_rate_hz, "RateMismatch",
          "clean and noise sample rates differ");
  require(noise.size() >= noise_offset && noise.size() - noise_offset >= clean.size(),
          "NoiseTooShort", "noise shorter than clean signal");
  std::vector<double> segment(noise.samples.begin() + static_cast<std::ptrdiff_t>(noise_offset),
                              noise.samples.begin() +
                                  static_cast<std::ptrdiff_t>(noise_offset + clean.size()));
  const double noise_rms = rms(segment);
  require(noise_rms > 0.0, "SilentNoise", "noise segment has zero RMS");
  const double gain = rms(clean) / (noise_rms * std::pow(10.0, snr_db / 20.0));

  AudioBuffer out;
  out.sample_rate_hz = clean.sample_rate_hz;
  out.samples.resize(clean.size());
  std::size_t clip_count = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double v = clean.samples[i] + gain * segment[i];
    const double c = std::clamp(v, -1.0, 1.0);
    if (c != v) ++clip_count;
    out.samples[i] = c;
  }
  if (clipped) *clipped = clip_count;
  return out;
}

}  // namespace spkid
