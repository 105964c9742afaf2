// Masking: segment sampling, waveform zeroing, frame index mapping.
#include <doctest.h>

#include <set>

#include "sonamix/masking.hpp"

using namespace sonamix;

namespace {

Waveform ones_clip(double seconds) {
  Waveform w;
  w.sample_rate = 24000;
  w.samples.assign(static_cast<size_t>(seconds * 24000), 1.0f);
  return w;
}

}  // namespace

TEST_CASE("degenerate probabilities select nothing or everything") {
  MaskConfig cfg;
  cfg.mask_prob = 0.0;
  auto none = sample_mask(720000, 24000, cfg, 1, "clip");
  CHECK(none.selected_segments.empty());
  cfg.mask_prob = 1.0;
  auto all = sample_mask(720000, 24000, cfg, 1, "clip");
  CHECK(all.selected_segments.size() == 75);
  CHECK(all.num_full_segments == 75);
}

TEST_CASE("trailing partial segments are never selected") {
  MaskConfig cfg;
  cfg.mask_prob = 1.0;
  // 1 s = 2.5 segments of 400 ms: only 2 are maskable.
  auto m = sample_mask(24000, 24000, cfg, 0, "c");
  CHECK(m.num_full_segments == 2);
  CHECK(m.selected_segments == std::vector<int>{0, 1});
}

TEST_CASE("mean masked fraction over 10000 epochs approaches the probability") {
  MaskConfig cfg;
  double total_fraction = 0.0;
  for (int epoch = 0; epoch < 10000; ++epoch) {
    const auto m = sample_mask(720000, 24000, cfg, static_cast<uint64_t>(epoch), "clip7");
    total_fraction += static_cast<double>(m.selected_segments.size()) / m.num_full_segments;
  }
  const double mean = total_fraction / 10000.0;
  CHECK(mean > 0.19);
  CHECK(mean < 0.21);
}

TEST_CASE("masks are deterministic in (epoch_seed, clip_id) and vary across seeds") {
  MaskConfig cfg;
  const auto a = sample_mask(720000, 24000, cfg, 42, "clip0");
  const auto b = sample_mask(720000, 24000, cfg, 42, "clip0");
  CHECK(a.selected_segments == b.selected_segments);
  int differing = 0;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const auto c = sample_mask(720000, 24000, cfg, seed, "clip0");
    if (c.selected_segments != a.selected_segments) ++differing;
  }
  CHECK(differing >= 45);
}

TEST_CASE("apply_waveform_mask zeroes exactly the selected segments") {
  Waveform w = ones_clip(1.0);  // L = 9600, 2 full segments + remainder
  MaskConfig cfg;
  MaskSpec m = sample_mask(w.samples.size(), 24000, cfg, 0, "c");
  m.selected_segments = {1};
  const Waveform masked = apply_waveform_mask(w, m);
  for (size_t i = 0; i < w.samples.size(); ++i) {
    const bool in_mask = i >= 9600 && i < 19200;
    CHECK(masked.samples[i] == (in_mask ? 0.0f : 1.0f));
  }
}

TEST_CASE("selecting segment 2 of a 24 kHz clip zeroes samples [19200, 28800)") {
  Waveform w = ones_clip(1.5);
  MaskConfig cfg;
  MaskSpec m = sample_mask(w.samples.size(), 24000, cfg, 0, "c");
  m.selected_segments = {2};
  const Waveform masked = apply_waveform_mask(w, m);
  for (size_t i = 0; i < w.samples.size(); ++i)
    CHECK(masked.samples[i] == ((i >= 19200 && i < 28800) ? 0.0f : 1.0f));
}

TEST_CASE("empty mask is the identity; full mask zeroes all full segments") {
  Waveform w = ones_clip(1.0);
  MaskConfig cfg;
  cfg.mask_prob = 0.0;
  const auto empty_spec = sample_mask(w.samples.size(), 24000, cfg, 3, "c");
  CHECK(apply_waveform_mask(w, empty_spec).samples == w.samples);

  cfg.mask_prob = 1.0;
  const auto full_spec = sample_mask(w.samples.size(), 24000, cfg, 3, "c");
  const auto masked = apply_waveform_mask(w, full_spec);
  for (size_t i = 0; i < w.samples.size(); ++i)
    CHECK(masked.samples[i] == (i < 19200 ? 0.0f : 1.0f));  // trailing partial untouched
}

TEST_CASE("frame indices cover exactly the frames inside selected segments") {
  MaskConfig cfg;
  MaskSpec m = sample_mask(720000, 24000, cfg, 0, "c");
  m.selected_segments = {0};
  CHECK(mask_to_frame_indices(m, 25.0, 24000) ==
        std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});

  m.selected_segments = {1, 3};
  std::vector<int> expected;
  for (int t = 10; t < 20; ++t) expected.push_back(t);
  for (int t = 30; t < 40; ++t) expected.push_back(t);
  CHECK(mask_to_frame_indices(m, 25.0, 24000) == expected);

  m.selected_segments = {};
  CHECK(mask_to_frame_indices(m, 25.0, 24000).empty());
}

TEST_CASE("frame count equals 10 frames per selected segment at defaults") {
  MaskConfig cfg;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = sample_mask(720000, 24000, cfg, seed, "clipX");
    CHECK(mask_to_frame_indices(m, 25.0, 24000).size() == 10 * m.selected_segments.size());
  }
}

TEST_CASE("mask text form round trips") {
  MaskConfig cfg;
  MaskSpec m = sample_mask(720000, 24000, cfg, 17, "clip03");
  m.selected_segments = {1, 5, 7};
  const auto text = m.to_text();
  const auto back = MaskSpec::from_text(text);
  CHECK(back.epoch_seed == 17);
  CHECK(back.clip_id == "clip03");
  CHECK(back.mask_prob == doctest::Approx(0.2));
  CHECK(back.selected_segments == m.selected_segments);
}

TEST_CASE("validation errors") {
  MaskConfig cfg;
  cfg.mask_prob = 1.5;
  CHECK_THROWS_AS(sample_mask(720000, 24000, cfg, 0, "c"), ConfigError);
  MaskConfig ok;
  CHECK_THROWS_AS(sample_mask(100, 24000, ok, 0, "c"), InputError);  // shorter than one segment
  Waveform w = ones_clip(1.0);
  const auto m = sample_mask(720000, 24000, ok, 0, "c");  // made for a 30 s clip
  CHECK_THROWS_AS(apply_waveform_mask(w, m), InputError);
}

TEST_CASE("noise filling replaces masked spans with non-zero samples") {
  Waveform w = ones_clip(1.0);
  MaskConfig cfg;
  cfg.noise_fill = true;
  MaskSpec m = sample_mask(w.samples.size(), 24000, cfg, 5, "c");
  m.selected_segments = {0};
  const Waveform masked = apply_waveform_mask(w, m, cfg);
  bool any_nonzero = false;
  for (size_t i = 0; i < 9600; ++i) any_nonzero = any_nonzero || masked.samples[i] != 0.0f;
  CHECK(any_nonzero);
  for (size_t i = 9600; i < w.samples.size(); ++i) CHECK(masked.samples[i] == 1.0f);
}
