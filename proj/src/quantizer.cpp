// Copyright 2026 Sonamix Authors
// Frozen random-projection tokenizer.
//
// Licensed under the Apache License, Version 2.0

#include "sonamix/quantizer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "sonamix/common.hpp"
#include "sonamix/rng.hpp"

namespace sonamix {

namespace {

constexpr char kMagic[4] = {'S', 'M', 'X', 'Q'};
constexpr uint32_t kVersion = 1;
constexpr double kNormEps = 1e-12;

void validate(const QuantizerConfig& cfg) {
  if (cfg.codebook_size < 2) throw ConfigError("codebook_size must be >= 2");
  if (cfg.codebook_dim < 1) throw ConfigError("codebook_dim must be >= 1");
  if (cfg.input_dim < 1) throw ConfigError("input_dim must be >= 1");
}

}  // namespace

RandomQuantizer::RandomQuantizer(const QuantizerConfig& cfg) : cfg_(cfg) {
  validate(cfg);
  Rng proj_rng(mix_seed(cfg.seed, "projection"));
  Rng code_rng(mix_seed(cfg.seed, "codebook"));
  projection_ = xavier_uniform<float>(cfg.codebook_dim, cfg.input_dim, cfg.input_dim,
                                      cfg.codebook_dim, proj_rng);
  codebook_ = standard_normal<float>(cfg.codebook_size, cfg.codebook_dim, code_rng);
  build_normalized_codebook();
}

void RandomQuantizer::build_normalized_codebook() {
  normalized_codebook_ = codebook_.cast<double>();
  for (Eigen::Index i = 0; i < normalized_codebook_.rows(); ++i) {
    const double n = normalized_codebook_.row(i).norm();
    normalized_codebook_.row(i) /= std::max(n, kNormEps);
  }
}

int RandomQuantizer::quantize_frame(const Eigen::VectorXd& x) const {
  if (x.size() != cfg_.input_dim) throw ConfigError("quantize_frame: dimension mismatch");
  if (!x.allFinite()) throw InputError("quantize_frame: non-finite input");

  Eigen::VectorXd projected = projection_.cast<double>() * x;
  projected /= std::max(projected.norm(), kNormEps);

  // On the unit sphere, argmin Euclidean distance == argmax cosine similarity.
  Eigen::VectorXd sims = normalized_codebook_ * projected;
  int best = 0;
  double best_sim = sims(0);
  for (Eigen::Index i = 1; i < sims.size(); ++i) {
    if (sims(i) > best_sim) {
      best_sim = sims(i);
      best = static_cast<int>(i);
    }
  }
  return best;
}

std::vector<int> RandomQuantizer::quantize_sequence(const StackedMelSequence& s) const {
  if (s.frames.cols() != cfg_.input_dim)
    throw ConfigError("quantize_sequence: feature dim " + std::to_string(s.frames.cols()) +
                      " != quantizer input dim " + std::to_string(cfg_.input_dim));
  std::vector<int> tokens(static_cast<size_t>(s.frames.rows()));
  for (Eigen::Index t = 0; t < s.frames.rows(); ++t)
    tokens[static_cast<size_t>(t)] = quantize_frame(s.frames.row(t).transpose());
  return tokens;
}

void RandomQuantizer::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  f.write(kMagic, 4);
  write_pod<uint32_t>(f, kVersion);
  write_pod<uint32_t>(f, static_cast<uint32_t>(cfg_.codebook_size));
  write_pod<uint32_t>(f, static_cast<uint32_t>(cfg_.codebook_dim));
  write_pod<uint32_t>(f, static_cast<uint32_t>(cfg_.input_dim));
  write_pod<uint64_t>(f, cfg_.seed);
  write_bytes(f, projection_.data(), sizeof(float) * static_cast<size_t>(projection_.size()));
  write_bytes(f, codebook_.data(), sizeof(float) * static_cast<size_t>(codebook_.size()));
}

RandomQuantizer RandomQuantizer::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path);
  char magic[4];
  read_bytes(f, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw InputError(path + ": not a quantizer snapshot");
  const auto version = read_pod<uint32_t>(f);
  if (version != kVersion) throw InputError(path + ": unsupported snapshot version");
  RandomQuantizer q;
  q.cfg_.codebook_size = static_cast<int>(read_pod<uint32_t>(f));
  q.cfg_.codebook_dim = static_cast<int>(read_pod<uint32_t>(f));
  q.cfg_.input_dim = static_cast<int>(read_pod<uint32_t>(f));
  q.cfg_.seed = read_pod<uint64_t>(f);
  validate(q.cfg_);
  q.projection_.resize(q.cfg_.codebook_dim, q.cfg_.input_dim);
  q.codebook_.resize(q.cfg_.codebook_size, q.cfg_.codebook_dim);
  read_bytes(f, q.projection_.data(), sizeof(float) * static_cast<size_t>(q.projection_.size()));
  read_bytes(f, q.codebook_.data(), sizeof(float) * static_cast<size_t>(q.codebook_.size()));
  q.build_normalized_codebook();
  return q;
}

RandomQuantizer init_quantizer(const QuantizerConfig& cfg) { return RandomQuantizer(cfg); }

TokenSequence quantize_sequence(const RandomQuantizer& q, const StackedMelSequence& s) {
  TokenSequence out;
  out.tokens = q.quantize_sequence(s);
  out.frame_rate = s.frame_rate;
  return out;
}

}  // namespace sonamix
