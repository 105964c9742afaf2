// Copyright 2026 Sonamix Authors
// Waveform ingestion, log-mel extraction, and frame stacking.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "sonamix/common.hpp"
#include "sonamix/tensor.hpp"

namespace sonamix {

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 24000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

struct MelConfig {
  int n_mels = 128;
  int fft_size = 2048;
  int hop = 240;
  double log_floor = 1e-10;  // epsilon under the log
};

// Log-power mel energies. frames is T_mel x n_mels with
// T_mel = floor(num_samples / hop); window centers sit at t * hop with
// reflect padding at the edges.
struct MelSpectrogram {
  Mat<double> frames;
  int n_mels = 128;
  double frame_rate = 100.0;
  int fft_size = 2048;
  int hop = 240;
};

// k consecutive mel frames concatenated per output frame; trailing frames
// that do not fill a full stack are dropped.
struct StackedMelSequence {
  Mat<double> frames;  // T x (n_mels * stack_factor)
  double frame_rate = 25.0;
  int stack_factor = 4;
};

MelSpectrogram compute_log_mel(const Waveform& w, const MelConfig& cfg = MelConfig());

StackedMelSequence stack_frames(const MelSpectrogram& m, int stack_factor);

// Slaney-style triangular mel filterbank, 0 Hz to Nyquist: n_mels x (fft/2+1).
Mat<double> mel_filterbank(int n_mels, int fft_size, int sample_rate);

// Center frequency (Hz) of each triangular filter.
std::vector<double> mel_center_frequencies(int n_mels, int sample_rate);

// Power spectrum via iterative radix-2 FFT; fft_size must be a power of two.
std::vector<double> power_spectrum(const std::vector<double>& frame, int fft_size);

// ---- per-feature normalization ---------------------------------------------

// Zero-mean / unit-variance statistics over a training split, applied to
// stacked mel features before they feed the quantizer or the regression loss.
struct FeatureNormalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd stdev;

  bool fitted() const { return mean.size() > 0; }
};

FeatureNormalizer fit_normalizer(const std::vector<StackedMelSequence>& split);
StackedMelSequence normalize(const FeatureNormalizer& n, const StackedMelSequence& s);

// ---- synthetic audio ---------------------------------------------------------

enum class SynthKind { Sine, Chirp, Noise, ToneMixture };

struct SynthParams {
  double duration_s = 2.0;
  int sample_rate = 24000;
  double amplitude = 0.5;
  double freq_hz = 440.0;       // sine fundamental / chirp start
  double chirp_end_hz = 4000.0;
  int num_tones = 3;            // tone mixtures
  double am_rate_hz = 0.0;      // > 0 applies amplitude modulation
  double am_depth = 0.8;
};

SynthKind parse_synth_kind(const std::string& name);

Waveform synthesize_test_waveform(SynthKind kind, uint64_t seed,
                                  const SynthParams& params = SynthParams());

// ---- file IO -------------------------------------------------------------------

// Mono PCM WAV, 16-bit integer or 32-bit float. A sample rate differing from
// expected_rate is an error (no resampling).
Waveform read_wav(const std::string& path, int expected_rate = 24000);
void write_wav_pcm16(const std::string& path, const Waveform& w);
void write_wav_f32(const std::string& path, const Waveform& w);

// Raw little-endian f32 samples, assumed already at expected_rate.
Waveform read_raw_f32(const std::string& path, int expected_rate = 24000);

// Flat f32 feature file: 16-byte header (magic "SMXF", u32 T, u32 dim,
// f32 frame_rate) followed by row-major f32 data.
void write_features(const std::string& path, const Mat<double>& frames, double frame_rate);
Mat<double> read_features(const std::string& path, double* frame_rate = nullptr);

}  // namespace sonamix
