// Copyright 2026 Sonamix Authors
// Time masking over 400 ms waveform segments.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonamix/frontend.hpp"

namespace sonamix {

struct MaskConfig {
  double segment_ms = 400.0;
  double mask_prob = 0.20;
  // When true, masked spans are filled with Gaussian noise instead of zeros.
  bool noise_fill = false;
  double noise_std = 0.1;
};

// One sampled mask: which full segments of a clip are hidden and which
// feature frames they cover. A trailing partial segment is never selected.
struct MaskSpec {
  double segment_ms = 400.0;
  double mask_prob = 0.20;
  uint64_t epoch_seed = 0;
  std::string clip_id;
  int segment_samples = 0;       // L = round(segment_ms / 1000 * sample_rate)
  int num_full_segments = 0;
  std::vector<int> selected_segments;  // sorted

  std::string to_text() const;
  static MaskSpec from_text(const std::string& text);
};

// Bernoulli(mask_prob) per full segment, deterministic for a given
// (epoch_seed, clip_id, mask_prob) triple.
MaskSpec sample_mask(size_t num_samples, int sample_rate, const MaskConfig& cfg,
                     uint64_t epoch_seed, const std::string& clip_id);

// Zeroes (or noise-fills) the selected segments; all other samples are
// bit-identical to the input.
Waveform apply_waveform_mask(const Waveform& w, const MaskSpec& m,
                             const MaskConfig& cfg = MaskConfig());

// Frames at `frame_rate` whose whole time span lies inside a selected segment.
std::vector<int> mask_to_frame_indices(const MaskSpec& m, double frame_rate, int sample_rate);

}  // namespace sonamix
