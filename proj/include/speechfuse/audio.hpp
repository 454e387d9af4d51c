#pragma once

// Audio buffers, 16-bit PCM WAV I/O, and the parametric synthetic voice used
// by inline "synth:" audio references.

#include "speechfuse/common.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <map>

namespace speechfuse {

struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate_hz = 16000;

  void validate() const {
    if (samples.empty()) throw DataError("audio buffer is empty");
    if (sample_rate_hz <= 0) throw DataError("sample rate must be positive");
    for (double s : samples) {
      if (!(std::abs(s) <= 1.0)) throw DataError("audio sample outside [-1, 1]");
    }
  }

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace detail

inline std::string encode_wav(const AudioBuffer& audio) {
  std::string out;
  const auto n = static_cast<std::uint32_t>(audio.samples.size());
  out += "RIFF";
  detail::put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, 1);  // PCM
  detail::put_u16(out, 1);  // mono
  detail::put_u32(out, static_cast<std::uint32_t>(audio.sample_rate_hz));
  detail::put_u32(out, static_cast<std::uint32_t>(audio.sample_rate_hz) * 2);
  detail::put_u16(out, 2);
  detail::put_u16(out, 16);
  out += "data";
  detail::put_u32(out, 2 * n);
  for (double s : audio.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lround(c * 32767.0));
    detail::put_u16(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, const AudioBuffer& audio) {
  write_file_atomic(path, encode_wav(audio));
}

// Accepts PCM 16-bit mono only. expected_rate = 0 accepts any rate.
inline AudioBuffer decode_wav(std::string_view bytes, int expected_rate, const std::string& name) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw DataError(name + ": not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  int channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (pos + 8 <= bytes.size()) {
    const std::string_view id(bytes.data() + pos, 4);
    const std::uint32_t len = detail::get_u32(p + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) throw DataError(name + ": truncated chunk '" + std::string(id) + "'");
    if (id == "fmt ") {
      if (len < 16) throw DataError(name + ": short fmt chunk");
      format = detail::get_u16(p + body);
      channels = detail::get_u16(p + body + 2);
      rate = detail::get_u32(p + body + 4);
      bits = detail::get_u16(p + body + 14);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw DataError(name + ": data chunk before fmt chunk");
      if (format != 1 || bits != 16) throw DataError(name + ": only 16-bit PCM is supported");
      if (channels != 1) throw DataError(name + ": only mono audio is supported");
      if (expected_rate != 0 && static_cast<int>(rate) != expected_rate) {
        throw DataError(name + ": sample rate " + std::to_string(rate) + " Hz does not match configured " +
                        std::to_string(expected_rate) + " Hz");
      }
      AudioBuffer out;
      out.sample_rate_hz = static_cast<int>(rate);
      out.samples.resize(len / 2);
      for (std::size_t i = 0; i < out.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(detail::get_u16(p + body + 2 * i));
        out.samples[i] = std::max(-1.0, v / 32767.0);
      }
      return out;
    }
    pos = body + len + (len & 1);
  }
  throw DataError(name + ": no data chunk");
}

inline AudioBuffer read_wav(const std::filesystem::path& path, int expected_rate = 0) {
  return decode_wav(read_text_file(path), expected_rate, path.string());
}

// Parameters of the synthetic voice. Encoded in corpora as
// "synth:key=value;key=value;..." so no audio has to be stored on disk.
struct SynthVoice {
  int sample_rate_hz = 8000;
  double duration_s = 0.75;
  double f0_hz = 140.0;
  double amplitude = 0.4;
  double vibrato_depth = 0.0;  // relative f0 modulation
  double jitter = 0.0;         // relative random period perturbation
  double tone_hz = 0.0;        // 0 = no added tone
  double tone_amplitude = 0.0;
  double noise_amplitude = 0.01;
  std::uint64_t seed = 1;

  std::string to_uri() const {
    std::string s = "synth:sr=" + std::to_string(sample_rate_hz);
    s += ";dur=" + fmt_double(duration_s);
    s += ";f0=" + fmt_double(f0_hz);
    s += ";amp=" + fmt_double(amplitude);
    s += ";vib=" + fmt_double(vibrato_depth);
    s += ";jit=" + fmt_double(jitter);
    s += ";tone=" + fmt_double(tone_hz);
    s += ";tamp=" + fmt_double(tone_amplitude);
    s += ";namp=" + fmt_double(noise_amplitude);
    s += ";seed=" + std::to_string(seed);
    return s;
  }

  static bool is_uri(std::string_view s) { return s.starts_with("synth:"); }

  static SynthVoice from_uri(std::string_view uri) {
    if (!is_uri(uri)) throw DataError("not a synth audio reference: " + std::string(uri));
    SynthVoice v;
    for (const auto& kv : split(uri.substr(6), ';')) {
      if (kv.empty()) continue;
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw DataError("bad synth parameter '" + kv + "'");
      const std::string key = kv.substr(0, eq);
      const std::string val = kv.substr(eq + 1);
      if (key == "sr") v.sample_rate_hz = static_cast<int>(parse_double(val, key));
      else if (key == "dur") v.duration_s = parse_double(val, key);
      else if (key == "f0") v.f0_hz = parse_double(val, key);
      else if (key == "amp") v.amplitude = parse_double(val, key);
      else if (key == "vib") v.vibrato_depth = parse_double(val, key);
      else if (key == "jit") v.jitter = parse_double(val, key);
      else if (key == "tone") v.tone_hz = parse_double(val, key);
      else if (key == "tamp") v.tone_amplitude = parse_double(val, key);
      else if (key == "namp") v.noise_amplitude = parse_double(val, key);
      else if (key == "seed") v.seed = std::stoull(val);
      else throw DataError("unknown synth parameter '" + key + "'");
    }
    if (v.sample_rate_hz <= 0 || v.duration_s <= 0) throw DataError("synth audio needs positive rate and duration");
    return v;
  }
};

// Band-limited harmonic source (1/k harmonic amplitudes) under a short
// attack/release envelope, plus an optional pure tone and white noise.
inline AudioBuffer render_voice(const SynthVoice& v) {
  AudioBuffer out;
  out.sample_rate_hz = v.sample_rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(v.duration_s * v.sample_rate_hz));
  out.samples.assign(n, 0.0);
  Rng rng(v.seed);
  const double sr = v.sample_rate_hz;
  const double nyquist = sr / 2.0;
  const double ramp = std::min(0.03 * sr, n / 4.0);
  double phase = 0.0;
  double period_scale = 1.0;
  double next_jitter_at = 0.0;
  const double vib_rate = 5.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = i / sr;
    if (v.jitter > 0 && phase >= next_jitter_at) {
      period_scale = 1.0 + v.jitter * (2.0 * rng.uniform() - 1.0);
      next_jitter_at = std::floor(phase) + 1.0;
    }
    const double f0 = v.f0_hz * (1.0 + v.vibrato_depth * std::sin(2 * std::numbers::pi * vib_rate * t)) / period_scale;
    double s = 0.0;
    if (v.f0_hz > 0) {
      for (int k = 1; k * f0 < nyquist * 0.9; ++k) s += std::sin(2 * std::numbers::pi * k * phase) / k;
      s *= 0.5;
    }
    phase += f0 / sr;
    double env = 1.0;
    if (i < ramp) env = i / ramp;
    else if (n - i < ramp) env = (n - i) / ramp;
    double x = v.amplitude * env * s;
    if (v.tone_hz > 0) x += v.tone_amplitude * env * std::sin(2 * std::numbers::pi * v.tone_hz * t);
    x += v.noise_amplitude * rng.normal();
    out.samples[i] = x;
  }
  double peak = 0.0;
  for (double s : out.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.95) {
    for (double& s : out.samples) s *= 0.95 / peak;
  }
  return out;
}

inline AudioBuffer sine_wave(double freq_hz, double seconds, int sample_rate, double amplitude = 0.5) {
  AudioBuffer a;
  a.sample_rate_hz = sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  a.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) a.samples[i] = amplitude * std::sin(2 * std::numbers::pi * freq_hz * i / sample_rate);
  return a;
}

// Resolves a segment audio reference: inline synth URI or WAV path
// (relative paths resolve against base_dir).
inline AudioBuffer load_audio_ref(const std::string& ref, const std::filesystem::path& base_dir, int expected_rate) {
  if (SynthVoice::is_uri(ref)) {
    auto a = render_voice(SynthVoice::from_uri(ref));
    if (expected_rate != 0 && a.sample_rate_hz != expected_rate) {
      throw DataError(ref.substr(0, 32) + "...: sample rate " + std::to_string(a.sample_rate_hz) +
                      " Hz does not match configured " + std::to_string(expected_rate) + " Hz");
    }
    return a;
  }
  std::filesystem::path p(ref);
  if (p.is_relative()) p = base_dir / p;
  return read_wav(p, expected_rate);
}

}  // namespace speechfuse
