// Copyright 2026 Sonamix Authors
// Frozen-backbone downstream probing on synthetic tasks.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonamix/encoder.hpp"
#include "sonamix/frontend.hpp"

namespace sonamix {

enum class TaskKind { Classification, Regression };
enum class Pooling { Mean, Max };

Pooling parse_pooling(const std::string& name);

struct ProbeConfig {
  int hidden_units = 512;
  double dropout = 0.25;
  TaskKind task_kind = TaskKind::Classification;
  int num_classes = 2;   // classification
  int target_dim = 1;    // regression
  Pooling pooling = Pooling::Mean;
  int batch_size = 32;   // 16 or 32
  int epochs = 200;
  double lr = 1e-3;
  int patience = 10;
};

struct ProbeReport {
  std::string task;
  std::string metric;  // "accuracy" or "r2"
  double value = 0.0;
  int train_size = 0;
  int val_size = 0;
  int test_size = 0;
  uint64_t seed = 0;

  std::string to_json() const;
  std::string summary_line() const;
};

// Per-clip temporal pooling of the final hidden sequence; the backbone is
// evaluated frozen (no gradients, no dropout).
MatF extract_embeddings(const EncoderModel<float>& model, const std::vector<Waveform>& clips,
                        Pooling pooling);

// FNV-1a over all parameter bytes; used to assert the frozen-backbone contract.
uint64_t parameter_hash(const EncoderModel<float>& model);

// 80/10/10 index split, a pure function of (seed, count).
struct SplitIndices {
  std::vector<int> train, val, test;
};
SplitIndices split_80_10_10(int count, uint64_t seed);

// Trains the single dense probe layer (hidden_units + dropout + task output)
// with early stopping on the validation split; reports the test metric.
ProbeReport train_probe(const MatF& embeddings, const std::vector<double>& labels,
                        const ProbeConfig& cfg, uint64_t seed, const std::string& task_name);

// Determination coefficient: 1 - SS_res / SS_tot.
double r_squared(const std::vector<double>& truth, const std::vector<double>& pred);

// ---- synthetic stand-in tasks -----------------------------------------------

struct SyntheticTask {
  std::string name;
  TaskKind kind = TaskKind::Classification;
  int num_classes = 0;  // classification only
  std::vector<Waveform> clips;
  std::vector<double> labels;
};

enum class SyntheticTaskKind { PitchClass, ToneCount, AmRateRegression };

SyntheticTaskKind parse_task_kind(const std::string& name);

// pitch_class: sine fundamental among K classes; tone_count: number of
// simultaneous tones; am_rate_regression: amplitude-modulation rate in Hz.
SyntheticTask make_synthetic_task(SyntheticTaskKind kind, int size, uint64_t seed,
                                  double duration_s = 1.0, int sample_rate = 24000);

}  // namespace sonamix
