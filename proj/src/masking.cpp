// Copyright 2026 Sonamix Authors
// Time masking over 400 ms waveform segments.
//
// Licensed under the Apache License, Version 2.0

#include "sonamix/masking.hpp"

#include <cmath>
#include <sstream>

#include "sonamix/common.hpp"
#include "sonamix/rng.hpp"

namespace sonamix {

MaskSpec sample_mask(size_t num_samples, int sample_rate, const MaskConfig& cfg,
                     uint64_t epoch_seed, const std::string& clip_id) {
  if (cfg.mask_prob < 0.0 || cfg.mask_prob > 1.0)
    throw ConfigError("mask_prob must lie in [0, 1]");
  if (cfg.segment_ms <= 0.0) throw ConfigError("segment_ms must be positive");

  MaskSpec m;
  m.segment_ms = cfg.segment_ms;
  m.mask_prob = cfg.mask_prob;
  m.epoch_seed = epoch_seed;
  m.clip_id = clip_id;
  m.segment_samples = static_cast<int>(std::lround(cfg.segment_ms / 1000.0 * sample_rate));
  if (m.segment_samples <= 0) throw ConfigError("segment shorter than one sample");
  if (num_samples < static_cast<size_t>(m.segment_samples))
    throw InputError("clip shorter than one mask segment");
  m.num_full_segments = static_cast<int>(num_samples / static_cast<size_t>(m.segment_samples));

  // Seed depends only on (epoch_seed, clip_id); data-loading order is irrelevant.
  Rng rng(mix_seed(mix_seed(epoch_seed, fnv1a64(clip_id)), "mask"));
  for (int k = 0; k < m.num_full_segments; ++k)
    if (rng.bernoulli(cfg.mask_prob)) m.selected_segments.push_back(k);
  return m;
}

Waveform apply_waveform_mask(const Waveform& w, const MaskSpec& m, const MaskConfig& cfg) {
  const int expected_segments =
      static_cast<int>(w.samples.size() / static_cast<size_t>(m.segment_samples));
  if (expected_segments != m.num_full_segments)
    throw InputError("mask was generated for a different clip length");

  Waveform out = w;
  Rng noise_rng(mix_seed(mix_seed(m.epoch_seed, fnv1a64(m.clip_id)), "mask-noise"));
  for (int seg : m.selected_segments) {
    const size_t begin = static_cast<size_t>(seg) * static_cast<size_t>(m.segment_samples);
    const size_t end = begin + static_cast<size_t>(m.segment_samples);
    for (size_t i = begin; i < end; ++i)
      out.samples[i] = cfg.noise_fill ? static_cast<float>(cfg.noise_std * noise_rng.normal())
                                      : 0.0f;
  }
  return out;
}

std::vector<int> mask_to_frame_indices(const MaskSpec& m, double frame_rate, int sample_rate) {
  // Frame t spans samples [t*hop, (t+1)*hop) with hop = sample_rate / frame_rate.
  const double hop = static_cast<double>(sample_rate) / frame_rate;
  std::vector<int> frames;
  for (int seg : m.selected_segments) {
    const long long seg_begin = static_cast<long long>(seg) * m.segment_samples;
    const long long seg_end = seg_begin + m.segment_samples;
    const int first = static_cast<int>(std::ceil(static_cast<double>(seg_begin) / hop - 1e-9));
    for (int t = first;; ++t) {
      const double f_begin = t * hop;
      const double f_end = (t + 1) * hop;
      if (f_end > static_cast<double>(seg_end) + 1e-9) break;
      if (f_begin >= static_cast<double>(seg_begin) - 1e-9) frames.push_back(t);
    }
  }
  return frames;
}

std::string MaskSpec::to_text() const {
  std::ostringstream os;
  os << epoch_seed << ',' << clip_id << ',' << mask_prob << ",[";
  for (size_t i = 0; i < selected_segments.size(); ++i) {
    if (i) os << ',';
    os << selected_segments[i];
  }
  os << ']';
  return os.str();
}

MaskSpec MaskSpec::from_text(const std::string& text) {
  MaskSpec m;
  std::istringstream is(text);
  std::string field;
  if (!std::getline(is, field, ',')) throw InputError("mask text: missing epoch seed");
  m.epoch_seed = std::stoull(field);
  if (!std::getline(is, m.clip_id, ',')) throw InputError("mask text: missing clip id");
  if (!std::getline(is, field, ',')) throw InputError("mask text: missing probability");
  m.mask_prob = std::stod(field);
  std::string rest;
  std::getline(is, rest);
  if (rest.size() < 2 || rest.front() != '[' || rest.back() != ']')
    throw InputError("mask text: malformed segment list");
  std::istringstream segs(rest.substr(1, rest.size() - 2));
  while (std::getline(segs, field, ','))
    if (!field.empty()) m.selected_segments.push_back(std::stoi(field));
  return m;
}

}  // namespace sonamix
