// Frontend: log-mel extraction, frame stacking, synthetic audio, file IO.
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "sonamix/frontend.hpp"
#include "sonamix/rng.hpp"

using namespace sonamix;

namespace {

Waveform sine_1s(double freq = 440.0, double amp = 0.5, double dur = 1.0) {
  SynthParams p;
  p.duration_s = dur;
  p.freq_hz = freq;
  p.amplitude = amp;
  return synthesize_test_waveform(SynthKind::Sine, 0, p);
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("1 s of 24 kHz audio yields a 100 x 128 mel matrix") {
  const auto mel = compute_log_mel(sine_1s());
  CHECK(mel.frames.rows() == 100);
  CHECK(mel.frames.cols() == 128);
  CHECK(mel.frame_rate == doctest::Approx(100.0));
  CHECK(mel.frames.allFinite());
}

TEST_CASE("all-zero waveform maps to the log floor constant") {
  Waveform w;
  w.samples.assign(24000, 0.0f);
  const auto mel = compute_log_mel(w);
  const double expected = std::log(1e-10);
  CHECK((mel.frames.array() == expected).all());
}

TEST_CASE("440 Hz sine peaks in the filter whose center is nearest 440 Hz") {
  const auto mel = compute_log_mel(sine_1s(440.0));
  const auto centers = mel_center_frequencies(128, 24000);
  int oracle_bin = 0;
  for (size_t i = 1; i < centers.size(); ++i)
    if (std::abs(centers[i] - 440.0) < std::abs(centers[oracle_bin] - 440.0))
      oracle_bin = static_cast<int>(i);
  for (Eigen::Index t = 2; t < mel.frames.rows() - 2; ++t) {
    Eigen::Index argmax;
    mel.frames.row(t).maxCoeff(&argmax);
    CHECK(argmax == oracle_bin);
  }
}

TEST_CASE("log-mel is scale covariant: alpha shifts every entry by 2 log alpha") {
  SynthParams p;
  p.duration_s = 0.5;
  p.amplitude = 0.4;
  const Waveform w = synthesize_test_waveform(SynthKind::Noise, 3, p);
  Waveform scaled = w;
  const double alpha = 2.25;
  for (auto& s : scaled.samples) s = static_cast<float>(s * alpha);
  const auto a = compute_log_mel(w);
  const auto b = compute_log_mel(scaled);
  const double shift = 2.0 * std::log(alpha);
  // All entries sit far above the log floor for broadband noise.
  CHECK(a.frames.minCoeff() > std::log(1e-10) + 4.0);
  CHECK(((b.frames - a.frames).array() - shift).abs().maxCoeff() < 2e-6);
}

TEST_CASE("stacking 100 x 128 with factor 4 gives 25 x 512 at 25 Hz") {
  const auto mel = compute_log_mel(sine_1s());
  const auto stacked = stack_frames(mel, 4);
  CHECK(stacked.frames.rows() == 25);
  CHECK(stacked.frames.cols() == 512);
  CHECK(stacked.frame_rate == doctest::Approx(25.0));
}

TEST_CASE("stack factor 1 is the identity") {
  const auto mel = compute_log_mel(sine_1s(330.0, 0.4, 0.3));
  const auto stacked = stack_frames(mel, 1);
  CHECK(stacked.frames == mel.frames);
}

TEST_CASE("stacking concatenates consecutive frames and drops the remainder") {
  MelSpectrogram m;
  m.n_mels = 2;
  m.frame_rate = 100.0;
  m.frames.resize(10, 2);
  for (int t = 0; t < 10; ++t) m.frames.row(t).setConstant(t);
  const auto s = stack_frames(m, 4);
  REQUIRE(s.frames.rows() == 2);
  REQUIRE(s.frames.cols() == 8);
  Eigen::Matrix<double, 1, 8> expect0, expect1;
  expect0 << 0, 0, 1, 1, 2, 2, 3, 3;
  expect1 << 4, 4, 5, 5, 6, 6, 7, 7;
  CHECK(s.frames.row(0) == expect0);
  CHECK(s.frames.row(1) == expect1);
}

TEST_CASE("de-interleaving stacked frames reproduces the retained mel frames") {
  const auto mel = compute_log_mel(sine_1s(523.0, 0.3, 0.7));
  const auto s = stack_frames(mel, 4);
  for (Eigen::Index t = 0; t < s.frames.rows(); ++t)
    for (int k = 0; k < 4; ++k)
      CHECK(s.frames.row(t).segment(k * 128, 128) == mel.frames.row(t * 4 + k));
}

TEST_CASE("shape chain: floor(floor(n/240)/4) frames of 512 dims") {
  Rng rng(7);
  for (int trial = 0; trial < 4; ++trial) {
    const double dur = rng.uniform(0.3, 2.7);
    SynthParams p;
    p.duration_s = dur;
    const Waveform w = synthesize_test_waveform(SynthKind::Noise, trial, p);
    const auto s = stack_frames(compute_log_mel(w), 4);
    const long long n = static_cast<long long>(w.samples.size());
    CHECK(s.frames.rows() == (n / 240) / 4);
    CHECK(s.frames.cols() == 512);
  }
}

TEST_CASE("synthesis is seed deterministic and seed sensitive") {
  SynthParams p;
  p.duration_s = 0.25;
  const auto a = synthesize_test_waveform(SynthKind::Sine, 0, p);
  const auto b = synthesize_test_waveform(SynthKind::Sine, 0, p);
  CHECK(a.samples == b.samples);
  const auto n1 = synthesize_test_waveform(SynthKind::Noise, 1, p);
  const auto n2 = synthesize_test_waveform(SynthKind::Noise, 2, p);
  CHECK(n1.samples != n2.samples);
  for (float v : n1.samples) CHECK(std::abs(v) <= 1.0f);
}

TEST_CASE("sine RMS matches amplitude / sqrt(2) within 1%") {
  const Waveform w = sine_1s(440.0, 0.5);
  double sq = 0.0;
  for (float v : w.samples) sq += static_cast<double>(v) * v;
  const double rms = std::sqrt(sq / static_cast<double>(w.samples.size()));
  CHECK(rms == doctest::Approx(0.5 / std::sqrt(2.0)).epsilon(0.01));
}

TEST_CASE("input validation") {
  Waveform empty;
  CHECK_THROWS_AS(compute_log_mel(empty), InputError);
  Waveform bad;
  bad.samples.assign(1000, 0.0f);
  bad.samples[10] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(compute_log_mel(bad), InputError);
  const auto mel = compute_log_mel(sine_1s(440.0, 0.5, 0.2));
  CHECK_THROWS_AS(stack_frames(mel, 0), ConfigError);
  SynthParams p;
  p.freq_hz = 12000.0;
  CHECK_THROWS_AS(synthesize_test_waveform(SynthKind::Sine, 0, p), ConfigError);
}

TEST_CASE("WAV round trips for both encodings; wrong rate is rejected") {
  const Waveform w = sine_1s(440.0, 0.5, 0.1);
  const std::string p16 = tmp_path("sonamix_t16.wav");
  const std::string pf32 = tmp_path("sonamix_tf32.wav");
  write_wav_pcm16(p16, w);
  write_wav_f32(pf32, w);
  const Waveform r16 = read_wav(p16);
  const Waveform rf32 = read_wav(pf32);
  REQUIRE(r16.samples.size() == w.samples.size());
  REQUIRE(rf32.samples.size() == w.samples.size());
  CHECK(rf32.samples == w.samples);  // float path is exact
  double max_err = 0.0;
  for (size_t i = 0; i < w.samples.size(); ++i)
    max_err = std::max(max_err, std::abs(static_cast<double>(r16.samples[i]) - w.samples[i]));
  CHECK(max_err < 1.0 / 32000.0);
  CHECK_THROWS_AS(read_wav(p16, 16000), InputError);
  std::remove(p16.c_str());
  std::remove(pf32.c_str());
}

TEST_CASE("feature file round trip preserves shape, rate, and f32 values") {
  const auto s = stack_frames(compute_log_mel(sine_1s(440.0, 0.5, 0.5)), 4);
  const std::string path = tmp_path("sonamix_feat.smxf");
  write_features(path, s.frames, s.frame_rate);
  double rate = 0.0;
  const auto back = read_features(path, &rate);
  CHECK(rate == doctest::Approx(25.0));
  REQUIRE(back.rows() == s.frames.rows());
  REQUIRE(back.cols() == s.frames.cols());
  CHECK(back.cast<float>().eval() == s.frames.cast<float>().eval());
  std::remove(path.c_str());
}

TEST_CASE("normalizer drives the fitted split to zero mean and unit variance") {
  std::vector<StackedMelSequence> split;
  for (int i = 0; i < 3; ++i) {
    SynthParams p;
    p.duration_s = 1.0;
    split.push_back(
        stack_frames(compute_log_mel(synthesize_test_waveform(SynthKind::Noise, i, p)), 4));
  }
  const auto norm = fit_normalizer(split);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(512);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(512);
  long long count = 0;
  for (const auto& s : split) {
    const auto n = normalize(norm, s);
    sum += n.frames.colwise().sum().transpose();
    sum_sq += n.frames.array().square().colwise().sum().matrix().transpose();
    count += n.frames.rows();
  }
  const Eigen::VectorXd mean = sum / static_cast<double>(count);
  const Eigen::VectorXd var =
      sum_sq / static_cast<double>(count) - mean.array().square().matrix();
  CHECK(mean.cwiseAbs().maxCoeff() < 1e-9);
  CHECK((var.array() - 1.0).abs().maxCoeff() < 1e-6);
}
