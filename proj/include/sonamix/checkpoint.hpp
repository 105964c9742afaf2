// Copyright 2026 Sonamix Authors
// Self-describing checkpoint container.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sonamix/encoder.hpp"
#include "sonamix/frontend.hpp"
#include "sonamix/quantizer.hpp"

namespace sonamix {

// Optimizer and progress state carried alongside the parameters when a
// checkpoint is meant for resuming.
struct TrainExtras {
  bool present = false;
  int64_t step = 0;
  int64_t epoch = 0;
  int64_t epoch_pos = 0;  // clips consumed within the current epoch
  std::map<std::string, MatF> adam_m;
  std::map<std::string, MatF> adam_v;
  std::vector<double> loss_window;
};

// Container layout: magic "SMXC", u32 version, u64 header length, JSON header
// (config blocks plus a tensor directory), then raw little-endian payload in
// directory order. Round-trips are bit-exact.
struct Checkpoint {
  EncoderConfig encoder;
  QuantizerConfig quantizer;
  FeatureNormalizer normalizer;
  std::map<std::string, MatF> params;
  TrainExtras train;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sonamix
