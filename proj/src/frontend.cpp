// Copyright 2026 Sonamix Authors
// Waveform ingestion, log-mel extraction, and frame stacking.
//
// Licensed under the Apache License, Version 2.0

#include "sonamix/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

#include "sonamix/rng.hpp"

namespace sonamix {

namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey.
void fft_radix2(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Reflect index into [0, n) with period 2n-2 (librosa-style edge reflection).
size_t reflect_index(long long i, long long n) {
  if (n == 1) return 0;
  const long long period = 2 * (n - 1);
  long long m = i % period;
  if (m < 0) m += period;
  if (m >= n) m = period - m;
  return static_cast<size_t>(m);
}

// Slaney mel scale: linear below 1 kHz, logarithmic above.
double hz_to_mel(double hz) {
  constexpr double kLinStep = 200.0 / 3.0;
  constexpr double kMinLogHz = 1000.0;
  constexpr double kMinLogMel = kMinLogHz / kLinStep;
  const double log_step = std::log(6.4) / 27.0;
  if (hz < kMinLogHz) return hz / kLinStep;
  return kMinLogMel + std::log(hz / kMinLogHz) / log_step;
}

double mel_to_hz(double mel) {
  constexpr double kLinStep = 200.0 / 3.0;
  constexpr double kMinLogHz = 1000.0;
  constexpr double kMinLogMel = kMinLogHz / kLinStep;
  const double log_step = std::log(6.4) / 27.0;
  if (mel < kMinLogMel) return mel * kLinStep;
  return kMinLogHz * std::exp((mel - kMinLogMel) * log_step);
}

std::vector<double> mel_band_edges_hz(int n_mels, int sample_rate) {
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(static_cast<double>(sample_rate) / 2.0);
  std::vector<double> hz(static_cast<size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    const double m = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (n_mels + 1);
    hz[static_cast<size_t>(i)] = mel_to_hz(m);
  }
  return hz;
}

void check_waveform(const Waveform& w) {
  if (w.samples.empty()) throw InputError("waveform is empty");
  for (float v : w.samples)
    if (!std::isfinite(v)) throw InputError("waveform contains non-finite samples");
}

}  // namespace

std::vector<double> power_spectrum(const std::vector<double>& frame, int fft_size) {
  if (!is_power_of_two(fft_size)) throw ConfigError("fft_size must be a power of two");
  std::vector<std::complex<double>> a(static_cast<size_t>(fft_size), {0.0, 0.0});
  const size_t n = std::min(frame.size(), static_cast<size_t>(fft_size));
  for (size_t i = 0; i < n; ++i) a[i] = {frame[i], 0.0};
  fft_radix2(a);
  std::vector<double> p(static_cast<size_t>(fft_size / 2 + 1));
  for (size_t k = 0; k < p.size(); ++k) p[k] = std::norm(a[k]);
  return p;
}

Mat<double> mel_filterbank(int n_mels, int fft_size, int sample_rate) {
  if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
  const int n_bins = fft_size / 2 + 1;
  const auto f = mel_band_edges_hz(n_mels, sample_rate);
  Mat<double> fb = Mat<double>::Zero(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = f[static_cast<size_t>(m)];
    const double mid = f[static_cast<size_t>(m) + 1];
    const double hi = f[static_cast<size_t>(m) + 2];
    const double enorm = 2.0 / (hi - lo);
    for (int k = 0; k < n_bins; ++k) {
      const double freq = static_cast<double>(k) * sample_rate / fft_size;
      const double rising = (freq - lo) / std::max(mid - lo, 1e-12);
      const double falling = (hi - freq) / std::max(hi - mid, 1e-12);
      fb(m, k) = std::max(0.0, std::min(rising, falling)) * enorm;
    }
  }
  return fb;
}

std::vector<double> mel_center_frequencies(int n_mels, int sample_rate) {
  const auto f = mel_band_edges_hz(n_mels, sample_rate);
  return {f.begin() + 1, f.end() - 1};
}

MelSpectrogram compute_log_mel(const Waveform& w, const MelConfig& cfg) {
  check_waveform(w);
  if (cfg.hop <= 0) throw ConfigError("hop must be positive");
  if (cfg.fft_size < cfg.hop) throw ConfigError("fft_size must be >= hop");
  if (cfg.n_mels < 1) throw ConfigError("n_mels must be >= 1");
  if (!is_power_of_two(cfg.fft_size)) throw ConfigError("fft_size must be a power of two");

  const long long n = static_cast<long long>(w.samples.size());
  const int t_mel = static_cast<int>(n / cfg.hop);
  if (t_mel == 0) throw InputError("waveform shorter than one hop");

  // Periodic Hann window.
  std::vector<double> window(static_cast<size_t>(cfg.fft_size));
  for (int i = 0; i < cfg.fft_size; ++i)
    window[static_cast<size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / cfg.fft_size));

  const Mat<double> fb = mel_filterbank(cfg.n_mels, cfg.fft_size, w.sample_rate);

  MelSpectrogram out;
  out.n_mels = cfg.n_mels;
  out.fft_size = cfg.fft_size;
  out.hop = cfg.hop;
  out.frame_rate = static_cast<double>(w.sample_rate) / cfg.hop;
  out.frames.resize(t_mel, cfg.n_mels);

  std::vector<double> frame(static_cast<size_t>(cfg.fft_size));
  const int half = cfg.fft_size / 2;
  for (int t = 0; t < t_mel; ++t) {
    const long long center = static_cast<long long>(t) * cfg.hop;
    for (int i = 0; i < cfg.fft_size; ++i) {
      const long long src = center - half + i;
      frame[static_cast<size_t>(i)] =
          static_cast<double>(w.samples[reflect_index(src, n)]) * window[static_cast<size_t>(i)];
    }
    const auto power = power_spectrum(frame, cfg.fft_size);
    Eigen::Map<const Eigen::VectorXd> p(power.data(), static_cast<Eigen::Index>(power.size()));
    Eigen::VectorXd mel = fb * p;
    for (int m = 0; m < cfg.n_mels; ++m)
      out.frames(t, m) = std::log(std::max(mel(m), cfg.log_floor));
  }
  return out;
}

StackedMelSequence stack_frames(const MelSpectrogram& m, int stack_factor) {
  if (stack_factor < 1) throw ConfigError("stack_factor must be >= 1");
  const Eigen::Index t_out = m.frames.rows() / stack_factor;
  const Eigen::Index d = m.frames.cols();
  StackedMelSequence out;
  out.stack_factor = stack_factor;
  out.frame_rate = m.frame_rate / stack_factor;
  out.frames.resize(t_out, d * stack_factor);
  for (Eigen::Index t = 0; t < t_out; ++t)
    for (int k = 0; k < stack_factor; ++k)
      out.frames.row(t).segment(k * d, d) = m.frames.row(t * stack_factor + k);
  return out;
}

FeatureNormalizer fit_normalizer(const std::vector<StackedMelSequence>& split) {
  if (split.empty()) throw InputError("cannot fit normalizer on an empty split");
  const Eigen::Index d = split.front().frames.cols();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(d);
  long long count = 0;
  for (const auto& s : split) {
    if (s.frames.cols() != d) throw InputError("normalizer: inconsistent feature dims");
    sum += s.frames.colwise().sum().transpose();
    sum_sq += s.frames.array().square().colwise().sum().matrix().transpose();
    count += s.frames.rows();
  }
  if (count == 0) throw InputError("normalizer: no frames in split");
  FeatureNormalizer n;
  n.mean = sum / static_cast<double>(count);
  Eigen::VectorXd var = sum_sq / static_cast<double>(count) - n.mean.array().square().matrix();
  n.stdev = var.array().max(0.0).sqrt().max(1e-8).matrix();
  return n;
}

StackedMelSequence normalize(const FeatureNormalizer& n, const StackedMelSequence& s) {
  if (!n.fitted()) throw ConfigError("normalizer is not fitted");
  if (n.mean.size() != s.frames.cols()) throw InputError("normalizer: dim mismatch");
  StackedMelSequence out = s;
  out.frames = (s.frames.rowwise() - n.mean.transpose()).array().rowwise() /
               n.stdev.transpose().array();
  return out;
}

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "sine") return SynthKind::Sine;
  if (name == "chirp") return SynthKind::Chirp;
  if (name == "noise") return SynthKind::Noise;
  if (name == "tone_mixture") return SynthKind::ToneMixture;
  throw ConfigError("unknown synth kind: " + name);
}

Waveform synthesize_test_waveform(SynthKind kind, uint64_t seed, const SynthParams& p) {
  const double nyquist = p.sample_rate / 2.0;
  if (p.duration_s <= 0.0) throw ConfigError("duration must be positive");
  if (p.amplitude < 0.0 || p.amplitude > 1.0) throw ConfigError("amplitude must be in [0,1]");
  if (kind == SynthKind::Sine && p.freq_hz >= nyquist)
    throw ConfigError("sine frequency must be below Nyquist");
  if (kind == SynthKind::Chirp && (p.freq_hz >= nyquist || p.chirp_end_hz >= nyquist))
    throw ConfigError("chirp frequencies must be below Nyquist");
  if (p.am_rate_hz >= nyquist) throw ConfigError("AM rate must be below Nyquist");

  Rng rng(mix_seed(seed, "synth"));
  const size_t n = static_cast<size_t>(std::llround(p.sample_rate * p.duration_s));
  Waveform w;
  w.sample_rate = p.sample_rate;
  w.samples.resize(n);

  const double dt = 1.0 / p.sample_rate;
  switch (kind) {
    case SynthKind::Sine: {
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      for (size_t i = 0; i < n; ++i)
        w.samples[i] =
            static_cast<float>(p.amplitude * std::sin(2.0 * M_PI * p.freq_hz * i * dt + phase));
      break;
    }
    case SynthKind::Chirp: {
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      const double rate = (p.chirp_end_hz - p.freq_hz) / p.duration_s;
      for (size_t i = 0; i < n; ++i) {
        const double t = i * dt;
        w.samples[i] = static_cast<float>(
            p.amplitude * std::sin(2.0 * M_PI * (p.freq_hz * t + 0.5 * rate * t * t) + phase));
      }
      break;
    }
    case SynthKind::Noise: {
      for (size_t i = 0; i < n; ++i)
        w.samples[i] = static_cast<float>(p.amplitude * rng.uniform(-1.0, 1.0));
      break;
    }
    case SynthKind::ToneMixture: {
      if (p.num_tones < 1) throw ConfigError("tone mixture needs at least one tone");
      std::vector<double> freqs(static_cast<size_t>(p.num_tones));
      std::vector<double> phases(static_cast<size_t>(p.num_tones));
      for (int k = 0; k < p.num_tones; ++k) {
        freqs[static_cast<size_t>(k)] = rng.uniform(100.0, 0.8 * nyquist);
        phases[static_cast<size_t>(k)] = rng.uniform(0.0, 2.0 * M_PI);
      }
      const double scale = p.amplitude / p.num_tones;
      for (size_t i = 0; i < n; ++i) {
        double v = 0.0;
        for (int k = 0; k < p.num_tones; ++k)
          v += std::sin(2.0 * M_PI * freqs[static_cast<size_t>(k)] * i * dt +
                        phases[static_cast<size_t>(k)]);
        w.samples[i] = static_cast<float>(scale * v);
      }
      break;
    }
  }

  if (p.am_rate_hz > 0.0) {
    for (size_t i = 0; i < n; ++i) {
      const double env =
          (1.0 + p.am_depth * std::sin(2.0 * M_PI * p.am_rate_hz * i * dt)) / (1.0 + p.am_depth);
      w.samples[i] = static_cast<float>(w.samples[i] * env);
    }
  }
  return w;
}

// ---- WAV / raw IO -----------------------------------------------------------

namespace {

struct WavFmt {
  uint16_t format = 0;
  uint16_t channels = 0;
  uint32_t sample_rate = 0;
  uint16_t bits = 0;
};

}  // namespace

Waveform read_wav(const std::string& path, int expected_rate) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path);
  char tag[4];
  read_bytes(f, tag, 4);
  if (std::memcmp(tag, "RIFF", 4) != 0) throw InputError(path + ": not a RIFF file");
  (void)read_pod<uint32_t>(f);
  read_bytes(f, tag, 4);
  if (std::memcmp(tag, "WAVE", 4) != 0) throw InputError(path + ": not a WAVE file");

  WavFmt fmt;
  std::vector<char> data;
  while (f.read(tag, 4)) {
    const uint32_t size = read_pod<uint32_t>(f);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      fmt.format = read_pod<uint16_t>(f);
      fmt.channels = read_pod<uint16_t>(f);
      fmt.sample_rate = read_pod<uint32_t>(f);
      (void)read_pod<uint32_t>(f);  // byte rate
      (void)read_pod<uint16_t>(f);  // block align
      fmt.bits = read_pod<uint16_t>(f);
      if (size > 16) f.seekg(size - 16, std::ios::cur);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data.resize(size);
      read_bytes(f, data.data(), size);
    } else {
      f.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (fmt.channels == 0 || data.empty()) throw InputError(path + ": missing fmt or data chunk");
  if (fmt.channels != 1) throw InputError(path + ": only mono WAV is supported");
  if (static_cast<int>(fmt.sample_rate) != expected_rate)
    throw InputError(path + ": sample rate " + std::to_string(fmt.sample_rate) +
                     " != expected " + std::to_string(expected_rate));

  Waveform w;
  w.sample_rate = expected_rate;
  if (fmt.format == 1 && fmt.bits == 16) {
    const size_t n = data.size() / 2;
    w.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      int16_t v;
      std::memcpy(&v, data.data() + 2 * i, 2);
      w.samples[i] = static_cast<float>(v) / 32768.0f;
    }
  } else if (fmt.format == 3 && fmt.bits == 32) {
    const size_t n = data.size() / 4;
    w.samples.resize(n);
    std::memcpy(w.samples.data(), data.data(), 4 * n);
  } else {
    throw InputError(path + ": unsupported WAV encoding (need PCM16 or float32)");
  }
  return w;
}

namespace {

void write_wav_header(std::ofstream& f, uint16_t format, uint16_t bits, uint32_t rate,
                      uint32_t data_bytes) {
  const uint32_t byte_rate = rate * bits / 8;
  f.write("RIFF", 4);
  write_pod<uint32_t>(f, 36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  write_pod<uint32_t>(f, 16);
  write_pod<uint16_t>(f, format);
  write_pod<uint16_t>(f, 1);
  write_pod<uint32_t>(f, rate);
  write_pod<uint32_t>(f, byte_rate);
  write_pod<uint16_t>(f, static_cast<uint16_t>(bits / 8));
  write_pod<uint16_t>(f, bits);
  f.write("data", 4);
  write_pod<uint32_t>(f, data_bytes);
}

}  // namespace

void write_wav_pcm16(const std::string& path, const Waveform& w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  write_wav_header(f, 1, 16, static_cast<uint32_t>(w.sample_rate),
                   static_cast<uint32_t>(2 * w.samples.size()));
  for (float v : w.samples) {
    const int q = static_cast<int>(std::lround(std::clamp(v, -1.0f, 1.0f) * 32767.0f));
    write_pod<int16_t>(f, static_cast<int16_t>(q));
  }
}

void write_wav_f32(const std::string& path, const Waveform& w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  write_wav_header(f, 3, 32, static_cast<uint32_t>(w.sample_rate),
                   static_cast<uint32_t>(4 * w.samples.size()));
  write_bytes(f, w.samples.data(), 4 * w.samples.size());
}

Waveform read_raw_f32(const std::string& path, int expected_rate) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw InputError("cannot open " + path);
  const auto bytes = static_cast<size_t>(f.tellg());
  if (bytes % 4 != 0) throw InputError(path + ": raw f32 file size not a multiple of 4");
  f.seekg(0);
  Waveform w;
  w.sample_rate = expected_rate;
  w.samples.resize(bytes / 4);
  read_bytes(f, w.samples.data(), bytes);
  return w;
}

void write_features(const std::string& path, const Mat<double>& frames, double frame_rate) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  f.write("SMXF", 4);
  write_pod<uint32_t>(f, static_cast<uint32_t>(frames.rows()));
  write_pod<uint32_t>(f, static_cast<uint32_t>(frames.cols()));
  write_pod<float>(f, static_cast<float>(frame_rate));
  for (Eigen::Index t = 0; t < frames.rows(); ++t)
    for (Eigen::Index j = 0; j < frames.cols(); ++j)
      write_pod<float>(f, static_cast<float>(frames(t, j)));
}

Mat<double> read_features(const std::string& path, double* frame_rate) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path);
  char magic[4];
  read_bytes(f, magic, 4);
  if (std::memcmp(magic, "SMXF", 4) != 0) throw InputError(path + ": not a feature file");
  const auto rows = read_pod<uint32_t>(f);
  const auto cols = read_pod<uint32_t>(f);
  const auto rate = read_pod<float>(f);
  if (frame_rate) *frame_rate = rate;
  Mat<double> m(rows, cols);
  for (uint32_t t = 0; t < rows; ++t)
    for (uint32_t j = 0; j < cols; ++j) m(t, j) = read_pod<float>(f);
  return m;
}

}  // namespace sonamix
