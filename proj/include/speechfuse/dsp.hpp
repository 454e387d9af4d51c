#pragma once

// Acoustic features: framing, power spectra, HTK mel filterbanks, MFCCs with
// aggregate statistics, per-frame time-domain features, and the 17-column
// voice-quality feature set used by the audio emotion branch.

#include "speechfuse/audio.hpp"
#include "speechfuse/feature.hpp"

#include <complex>
#include <numeric>

namespace speechfuse::dsp {

enum class Window { hann, hamming, rectangular };

struct FrameConfig {
  double frame_len_ms = 25.0;
  double hop_ms = 10.0;
  Window window = Window::hann;

  void validate() const {
    if (!(hop_ms > 0.0 && hop_ms <= frame_len_ms)) throw ConfigError("frame config needs 0 < hop_ms <= frame_len_ms");
  }
  int frame_samples(int sample_rate) const {
    return static_cast<int>(std::lround(frame_len_ms * sample_rate / 1000.0));
  }
  int hop_samples(int sample_rate) const { return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0)); }
};

inline std::vector<double> make_window(Window w, int len) {
  std::vector<double> out(static_cast<std::size_t>(len), 1.0);
  if (len <= 1 || w == Window::rectangular) return out;
  const double a0 = w == Window::hann ? 0.5 : 0.54;
  for (int n = 0; n < len; ++n) out[n] = a0 - (1.0 - a0) * std::cos(2.0 * std::numbers::pi * n / (len - 1));
  return out;
}

inline int frame_count(std::size_t n_samples, int frame_len, int hop) {
  if (static_cast<std::size_t>(frame_len) > n_samples) return 0;
  return static_cast<int>((n_samples - frame_len) / hop) + 1;
}

// Frames as rows, each multiplied by the window.
// Row count = floor((N - L) / H) + 1.
inline Mat frame_signal(const AudioBuffer& audio, const FrameConfig& cfg) {
  cfg.validate();
  const int len = cfg.frame_samples(audio.sample_rate_hz);
  const int hop = cfg.hop_samples(audio.sample_rate_hz);
  if (len < 1 || hop < 1) throw ConfigError("frame or hop shorter than one sample");
  const int frames = frame_count(audio.samples.size(), len, hop);
  if (frames < 1) {
    throw DataError("audio of " + std::to_string(audio.samples.size()) + " samples is shorter than one frame (" +
                    std::to_string(len) + ")");
  }
  const auto win = make_window(cfg.window, len);
  Mat out(frames, len);
  for (int f = 0; f < frames; ++f) {
    for (int n = 0; n < len; ++n) out(f, n) = audio.samples[static_cast<std::size_t>(f) * hop + n] * win[n];
  }
  return out;
}

inline int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// |X_k|^2 for k = 0..nfft/2 of a zero-padded real frame.
inline Vec power_spectrum(const Eigen::Ref<const Vec>& frame, int nfft) {
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(nfft));
  for (Eigen::Index i = 0; i < frame.size() && i < nfft; ++i) buf[i] = frame(i);
  fft(buf);
  Vec p(nfft / 2 + 1);
  for (int k = 0; k <= nfft / 2; ++k) p(k) = std::norm(buf[k]);
  return p;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters on the HTK mel scale, each with unit peak.
// edges_hz has n_mels + 2 entries; filter m spans edges m..m+2.
struct MelFilterbank {
  std::vector<double> edges_hz;
  Mat weights;  // n_mels x (nfft/2 + 1)

  static MelFilterbank build(int n_mels, int nfft, int sample_rate, double fmin = 0.0, double fmax = -1.0) {
    if (n_mels < 2) throw ConfigError("n_mels must be >= 2");
    if (fmax <= 0) fmax = sample_rate / 2.0;
    MelFilterbank fb;
    const double mlo = hz_to_mel(fmin), mhi = hz_to_mel(fmax);
    for (int i = 0; i < n_mels + 2; ++i) fb.edges_hz.push_back(mel_to_hz(mlo + (mhi - mlo) * i / (n_mels + 1)));
    const int bins = nfft / 2 + 1;
    fb.weights = Mat::Zero(n_mels, bins);
    for (int m = 0; m < n_mels; ++m) {
      const double lo = fb.edges_hz[m], c = fb.edges_hz[m + 1], hi = fb.edges_hz[m + 2];
      for (int k = 0; k < bins; ++k) {
        const double f = static_cast<double>(k) * sample_rate / nfft;
        double w = 0.0;
        if (f > lo && f <= c) w = (f - lo) / (c - lo);
        else if (f > c && f < hi) w = (hi - f) / (hi - c);
        fb.weights(m, k) = w;
      }
    }
    return fb;
  }
};

struct MelSpectrogram {
  Mat matrix;  // frames x n_mels, power
  std::vector<double> mel_edges_hz;
  int sample_rate_hz = 0;
  int nfft = 0;

  int n_mels() const { return static_cast<int>(matrix.cols()); }
  int frames() const { return static_cast<int>(matrix.rows()); }
};

inline MelSpectrogram mel_spectrogram(const AudioBuffer& audio, const FrameConfig& cfg, int n_mels) {
  if (n_mels < 2) throw ConfigError("n_mels must be >= 2");
  const Mat frames = frame_signal(audio, cfg);
  const int nfft = next_pow2(static_cast<int>(frames.cols()));
  const auto fb = MelFilterbank::build(n_mels, nfft, audio.sample_rate_hz);
  MelSpectrogram out;
  out.matrix.resize(frames.rows(), n_mels);
  for (Eigen::Index f = 0; f < frames.rows(); ++f) {
    const Vec p = power_spectrum(frames.row(f).transpose(), nfft);
    out.matrix.row(f) = (fb.weights * p).transpose();
  }
  out.mel_edges_hz = fb.edges_hz;
  out.sample_rate_hz = audio.sample_rate_hz;
  out.nfft = nfft;
  return out;
}

// Orthonormal DCT-II, rows = output coefficients (n_out x n_in).
inline Mat dct_matrix(int n_out, int n_in) {
  Mat d(n_out, n_in);
  for (int k = 0; k < n_out; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / n_in) : std::sqrt(2.0 / n_in);
    for (int m = 0; m < n_in; ++m) d(k, m) = s * std::cos(std::numbers::pi * k * (m + 0.5) / n_in);
  }
  return d;
}

inline constexpr double kLogFloor = 1e-10;

// Aggregate statistics across frames, columns in this order.
inline constexpr std::array<const char*, 5> kStatNames{"mean", "std", "range", "skewness", "kurtosis"};

// Population moments; skewness and excess kurtosis are 0 for a constant series.
inline std::array<double, 5> series_stats(const Eigen::Ref<const Vec>& x) {
  const double n = static_cast<double>(x.size());
  const double mean = x.mean();
  const Vec c = x.array() - mean;
  const double m2 = c.squaredNorm() / n;
  const double sd = std::sqrt(m2);
  const double range = x.maxCoeff() - x.minCoeff();
  double skew = 0.0, kurt = 0.0;
  if (m2 > 1e-300) {
    skew = c.array().cube().sum() / n / std::pow(m2, 1.5);
    kurt = c.array().square().square().sum() / n / (m2 * m2) - 3.0;
  }
  return {mean, sd, range, skew, kurt};
}

struct MfccBlock {
  Mat per_frame;  // frames x n_mfcc
  Mat stats;      // n_mfcc x 5

  Vec flat_stats() const {
    Vec v(stats.size());
    for (Eigen::Index r = 0; r < stats.rows(); ++r) v.segment(r * 5, 5) = stats.row(r).transpose();
    return v;
  }
};

inline Mat log_mel(const MelSpectrogram& spec) { return (spec.matrix.array() + kLogFloor).log().matrix(); }

inline MfccBlock mfcc(const MelSpectrogram& spec, int n_mfcc) {
  if (n_mfcc < 1 || n_mfcc > spec.n_mels()) throw ConfigError("n_mfcc must lie in [1, n_mels]");
  if (spec.frames() < 2) throw DataError("MFCC statistics need at least 2 frames");
  const Mat d = dct_matrix(n_mfcc, spec.n_mels());
  MfccBlock out;
  out.per_frame = log_mel(spec) * d.transpose();
  out.stats.resize(n_mfcc, 5);
  for (int k = 0; k < n_mfcc; ++k) {
    const auto s = series_stats(out.per_frame.col(k));
    for (int j = 0; j < 5; ++j) out.stats(k, j) = s[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Time-domain features

inline constexpr std::array<const char*, 8> kTimeFeatureNames{
    "pitch_hz", "energy", "zero_crossing_rate", "voicing_prob", "peak_slope", "naq_proxy", "jitter_proxy",
    "shimmer_proxy"};

struct PitchConfig {
  double min_hz = 60.0;
  double max_hz = 400.0;
  double voicing_threshold = 0.5;
  double silence_energy = 1e-10;
};

struct PitchEstimate {
  double pitch_hz = 0.0;
  double voicing_prob = 0.0;
};

// Normalized autocorrelation over the overlap region; the first local peak
// within 90% of the global maximum wins (guards against subharmonics), with
// parabolic refinement of the lag.
inline PitchEstimate estimate_pitch(std::span<const double> frame, int sample_rate, const PitchConfig& pc) {
  const int n = static_cast<int>(frame.size());
  double energy = 0.0;
  for (double v : frame) energy += v * v;
  if (energy / std::max(n, 1) < pc.silence_energy) return {};
  const double mean = std::accumulate(frame.begin(), frame.end(), 0.0) / n;
  std::vector<double> x(frame.begin(), frame.end());
  for (double& v : x) v -= mean;
  const int lag_lo = std::max(1, static_cast<int>(std::floor(sample_rate / pc.max_hz)));
  const int lag_hi = std::min(n - 2, static_cast<int>(std::ceil(sample_rate / pc.min_hz)));
  if (lag_hi <= lag_lo + 1) return {};
  std::vector<double> r(static_cast<std::size_t>(lag_hi + 2), 0.0);
  for (int lag = lag_lo - 1; lag <= lag_hi + 1; ++lag) {
    if (lag < 1 || lag >= n) continue;
    double num = 0.0, e0 = 0.0, e1 = 0.0;
    for (int i = 0; i + lag < n; ++i) {
      num += x[i] * x[i + lag];
      e0 += x[i] * x[i];
      e1 += x[i + lag] * x[i + lag];
    }
    r[lag] = e0 > 0 && e1 > 0 ? num / std::sqrt(e0 * e1) : 0.0;
  }
  double best = -1.0;
  for (int lag = lag_lo; lag <= lag_hi; ++lag) best = std::max(best, r[lag]);
  if (best <= 0.0) return {0.0, 0.0};
  int peak = -1;
  for (int lag = lag_lo; lag <= lag_hi; ++lag) {
    const bool local = r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1];
    if (local && r[lag] >= 0.9 * best) {
      peak = lag;
      break;
    }
  }
  if (peak < 0) {
    for (int lag = lag_lo; lag <= lag_hi; ++lag) {
      if (r[lag] == best) {
        peak = lag;
        break;
      }
    }
  }
  double lag = peak;
  if (peak > lag_lo && peak < lag_hi) {
    const double a = r[peak - 1], b = r[peak], c = r[peak + 1];
    const double den = a - 2 * b + c;
    if (den < 0) lag += 0.5 * (a - c) / den;
  }
  PitchEstimate est;
  est.voicing_prob = std::clamp(r[peak], 0.0, 1.0);
  est.pitch_hz = est.voicing_prob >= pc.voicing_threshold ? sample_rate / lag : 0.0;
  return est;
}

// Haar detail bands at three octaves: (max |detail| per band, position of
// that maximum in input samples). Band j covers roughly [sr/2^(j+2), sr/2^(j+1)].
struct BandMaxima {
  std::array<double, 3> amplitude{};
  std::array<double, 3> position{};
};

inline BandMaxima haar_band_maxima(std::span<const double> frame) {
  BandMaxima out;
  std::vector<double> approx(frame.begin(), frame.end());
  for (int j = 0; j < 3; ++j) {
    const std::size_t half = approx.size() / 2;
    std::vector<double> next(half);
    double best = 0.0;
    std::size_t where = 0;
    for (std::size_t i = 0; i < half; ++i) {
      const double d = (approx[2 * i] - approx[2 * i + 1]) / std::numbers::sqrt2;
      next[i] = (approx[2 * i] + approx[2 * i + 1]) / std::numbers::sqrt2;
      if (std::abs(d) > best) {
        best = std::abs(d);
        where = i;
      }
    }
    out.amplitude[j] = best;
    out.position[j] = static_cast<double>(where) * (2 << j);
    approx = std::move(next);
  }
  return out;
}

// Least-squares slope of band-maximum level (dB) against log10 band centre.
inline double peak_slope(const BandMaxima& bm, int sample_rate) {
  std::array<double, 3> xs{}, ys{};
  for (int j = 0; j < 3; ++j) {
    xs[j] = std::log10(sample_rate / std::pow(2.0, j + 2) * std::numbers::sqrt2);
    ys[j] = 20.0 * std::log10(bm.amplitude[j] + 1e-12);
  }
  const double mx = (xs[0] + xs[1] + xs[2]) / 3.0, my = (ys[0] + ys[1] + ys[2]) / 3.0;
  double num = 0.0, den = 0.0;
  for (int j = 0; j < 3; ++j) {
    num += (xs[j] - mx) * (ys[j] - my);
    den += (xs[j] - mx) * (xs[j] - mx);
  }
  return num / den;
}

struct FrameShape {
  double peak_to_peak = 0.0;
  double peak_amplitude = 0.0;
  double max_rise_per_s = 0.0;
};

inline FrameShape frame_shape(std::span<const double> frame, int sample_rate) {
  FrameShape s;
  const auto [lo, hi] = std::minmax_element(frame.begin(), frame.end());
  s.peak_to_peak = *hi - *lo;
  s.peak_amplitude = std::max(std::abs(*hi), std::abs(*lo));
  for (std::size_t i = 1; i < frame.size(); ++i) s.max_rise_per_s = std::max(s.max_rise_per_s, frame[i] - frame[i - 1]);
  s.max_rise_per_s *= sample_rate;
  return s;
}

// Peak-to-peak amplitude over (max positive slope x pitch period). A sine
// gives 1/pi. Stands in for the glottal amplitude quotient.
inline double naq_proxy(const FrameShape& s, double pitch_hz) {
  if (pitch_hz <= 0.0 || s.max_rise_per_s <= 0.0) return 0.0;
  return s.peak_to_peak / (s.max_rise_per_s / pitch_hz);
}

inline void require_speech_rate(const AudioBuffer& audio) {
  if (audio.sample_rate_hz < 8000) throw DataError("time-domain features need sample rate >= 8 kHz");
}

// Frames x 8 matrix, columns kTimeFeatureNames. Frames are unwindowed.
inline FeatureMatrix time_features(const AudioBuffer& audio, const FrameConfig& cfg, const PitchConfig& pc = {}) {
  require_speech_rate(audio);
  FrameConfig raw = cfg;
  raw.window = Window::rectangular;
  const Mat frames = frame_signal(audio, raw);
  const int sr = audio.sample_rate_hz;
  FeatureMatrix out;
  out.columns.assign(kTimeFeatureNames.begin(), kTimeFeatureNames.end());
  out.values = Mat::Zero(frames.rows(), 8);
  std::vector<double> amp(static_cast<std::size_t>(frames.rows()));
  std::vector<double> buf(static_cast<std::size_t>(frames.cols()));
  for (Eigen::Index f = 0; f < frames.rows(); ++f) {
    for (Eigen::Index i = 0; i < frames.cols(); ++i) buf[i] = frames(f, i);
    const std::span<const double> fr(buf);
    const auto pitch = estimate_pitch(fr, sr, pc);
    double energy = 0.0;
    int crossings = 0;
    for (std::size_t i = 0; i < buf.size(); ++i) {
      energy += buf[i] * buf[i];
      if (i > 0 && ((buf[i - 1] >= 0) != (buf[i] >= 0))) ++crossings;
    }
    energy /= static_cast<double>(buf.size());
    const auto shape = frame_shape(fr, sr);
    out.values(f, 0) = pitch.pitch_hz;
    out.values(f, 1) = energy;
    out.values(f, 2) = buf.size() > 1 ? static_cast<double>(crossings) / (buf.size() - 1) : 0.0;
    out.values(f, 3) = pitch.voicing_prob;
    out.values(f, 4) = energy > pc.silence_energy ? peak_slope(haar_band_maxima(fr), sr) : 0.0;
    out.values(f, 5) = naq_proxy(shape, pitch.pitch_hz);
    amp[f] = shape.peak_amplitude;
  }
  // Cycle-to-cycle perturbation between consecutive voiced frames.
  for (Eigen::Index f = 1; f < frames.rows(); ++f) {
    const double p0 = out.values(f - 1, 0), p1 = out.values(f, 0);
    if (p0 > 0 && p1 > 0) {
      out.values(f, 6) = std::abs(1.0 / p1 - 1.0 / p0) * p1;
      if (amp[f] > 0) out.values(f, 7) = std::abs(amp[f] - amp[f - 1]) / amp[f];
    }
  }
  return out;
}

// Frames x 17: 12 MFCCs, pitch, voicing flag, peak slope, NAQ proxy, and a
// maxima-dispersion proxy (spread of the three band-maximum positions in
// pitch periods).
inline FeatureMatrix covarep_style_features(const AudioBuffer& audio, const FrameConfig& cfg, int n_mels = 26) {
  require_speech_rate(audio);
  const auto spec = mel_spectrogram(audio, cfg, n_mels);
  const auto cep = mfcc(spec, 12);
  const auto td = time_features(audio, cfg);
  FrameConfig raw = cfg;
  raw.window = Window::rectangular;
  const Mat frames = frame_signal(audio, raw);
  FeatureMatrix out;
  for (int k = 0; k < 12; ++k) out.columns.push_back("mfcc_" + std::to_string(k));
  for (auto c : {"pitch_hz", "voiced", "peak_slope", "naq_proxy", "mdq_proxy"}) out.columns.emplace_back(c);
  out.values.resize(frames.rows(), 17);
  out.values.leftCols(12) = cep.per_frame;
  std::vector<double> buf(static_cast<std::size_t>(frames.cols()));
  for (Eigen::Index f = 0; f < frames.rows(); ++f) {
    const double pitch = td.values(f, 0);
    out.values(f, 12) = pitch;
    out.values(f, 13) = pitch > 0 ? 1.0 : 0.0;
    out.values(f, 14) = td.values(f, 4);
    out.values(f, 15) = td.values(f, 5);
    double mdq = 0.0;
    if (pitch > 0) {
      for (Eigen::Index i = 0; i < frames.cols(); ++i) buf[i] = frames(f, i);
      const auto bm = haar_band_maxima(buf);
      const double m = (bm.position[0] + bm.position[1] + bm.position[2]) / 3.0;
      double var = 0.0;
      for (double p : bm.position) var += (p - m) * (p - m);
      mdq = std::sqrt(var / 3.0) * pitch / audio.sample_rate_hz;
    }
    out.values(f, 16) = mdq;
  }
  return out;
}

// Segment-level summary: mean and std of the 8 time-domain features plus the
// 5 statistics of every MFCC coefficient.
struct DspSummaryConfig {
  FrameConfig frame;
  int n_mels = 26;
  int n_mfcc = 13;

  std::size_t dim() const { return 16 + static_cast<std::size_t>(n_mfcc) * 5; }
};

inline FeatureVector segment_dsp_block(const AudioBuffer& audio, const DspSummaryConfig& cfg) {
  const auto td = time_features(audio, cfg.frame);
  const auto cep = mfcc(mel_spectrogram(audio, cfg.frame, cfg.n_mels), cfg.n_mfcc);
  Vec mean(8), sd(8);
  for (int c = 0; c < 8; ++c) {
    const auto s = series_stats(td.values.col(c));
    mean(c) = s[0];
    sd(c) = s[1];
  }
  FeatureVector fv("time_mean", mean);
  fv.append("time_std", sd);
  fv.append("mfcc_stats", cep.flat_stats());
  return fv;
}

}  // namespace speechfuse::dsp
