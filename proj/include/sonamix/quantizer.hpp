// Copyright 2026 Sonamix Authors
// Frozen random-projection tokenizer.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonamix/frontend.hpp"
#include "sonamix/tensor.hpp"

namespace sonamix {

struct QuantizerConfig {
  int codebook_size = 8192;  // n
  int codebook_dim = 16;     // h
  int input_dim = 512;       // d
  uint64_t seed = 0;
};

// Projects a feature frame through a fixed random matrix and snaps it to the
// nearest L2-normalized codeword. Both the projection and the codebook are
// immutable after construction; the token is
//   argmin_i || norm(c_i) - norm(A x) ||
// with ties broken toward the lowest index.
class RandomQuantizer {
 public:
  explicit RandomQuantizer(const QuantizerConfig& cfg);

  const QuantizerConfig& config() const { return cfg_; }
  const MatF& projection() const { return projection_; }
  const MatF& codebook() const { return codebook_; }
  const MatD& normalized_codebook() const { return normalized_codebook_; }

  int quantize_frame(const Eigen::VectorXd& x) const;

  std::vector<int> quantize_sequence(const StackedMelSequence& s) const;

  void save(const std::string& path) const;
  static RandomQuantizer load(const std::string& path);

 private:
  RandomQuantizer() = default;
  void build_normalized_codebook();

  QuantizerConfig cfg_;
  MatF projection_;           // h x d
  MatF codebook_;             // n x h
  MatD normalized_codebook_;  // n x h, unit rows, double precision
};

RandomQuantizer init_quantizer(const QuantizerConfig& cfg);

struct TokenSequence {
  std::vector<int> tokens;
  double frame_rate = 25.0;
};

TokenSequence quantize_sequence(const RandomQuantizer& q, const StackedMelSequence& s);

}  // namespace sonamix
