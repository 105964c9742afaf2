// Copyright 2026 Sonamix Authors
// Masked-prediction objective and the pretraining loop.
//
// Licensed under the Apache License, Version 2.0

#include "sonamix/pretrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace sonamix {

volatile std::sig_atomic_t g_stop_requested = 0;

LossBreakdown compute_loss(const MatF& token_logits, const MatF& mel_logits,
                           const std::vector<int>& tokens, const MatF& mel_target,
                           const std::vector<int>& masked) {
  ag::Graph<float> g;
  g.grad_enabled = false;
  ModelOutputVars<float> out;
  out.token_logits = g.input(token_logits);
  out.mel_logits = g.input(mel_logits);
  auto lv = compute_loss_vars(g, out, tokens, mel_target, masked);
  return lv.values();
}

void ScheduleConfig::validate() const {
  if (!(final_lr > 0.0) || !(final_lr <= peak_lr))
    throw ConfigError("schedule requires 0 < final_lr <= peak_lr");
  if (warmup_steps <= 0 || warmup_steps >= total_steps)
    throw ConfigError("schedule requires 0 < warmup_steps < total_steps");
  if (clip_norm <= 0.0) throw ConfigError("clip_norm must be positive");
}

double lr_at_step(int64_t step, const ScheduleConfig& cfg) {
  cfg.validate();
  if (step < 0 || step > cfg.total_steps) throw InputError("step outside [0, total_steps]");
  if (step <= cfg.warmup_steps)
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.final_lr + 0.5 * (cfg.peak_lr - cfg.final_lr) * (1.0 + std::cos(M_PI * progress));
}

double clip_gradients(std::map<std::string, MatF>& grads, double clip_norm) {
  if (clip_norm <= 0.0) throw ConfigError("clip_norm must be positive");
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    if (!g.allFinite()) throw TrainingError("non-finite gradient in " + name);
    sq += static_cast<double>(g.cast<double>().squaredNorm());
  }
  const double norm = std::sqrt(sq);
  if (norm > clip_norm) {
    const float s = static_cast<float>(clip_norm / norm);
    for (auto& [name, g] : grads) g *= s;
  }
  return norm;
}

void adam_step(std::map<std::string, MatF>& params, const std::map<std::string, MatF>& grads,
               AdamState& state, double lr, const AdamConfig& cfg) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) throw TrainingError("missing gradient for " + name);
    const MatF& g = git->second;
    MatF& m = state.m.try_emplace(name, MatF::Zero(p.rows(), p.cols())).first->second;
    MatF& v = state.v.try_emplace(name, MatF::Zero(p.rows(), p.cols())).first->second;
    m = static_cast<float>(cfg.beta1) * m + static_cast<float>(1.0 - cfg.beta1) * g;
    v = (static_cast<float>(cfg.beta2) * v.array() +
         static_cast<float>(1.0 - cfg.beta2) * g.array().square())
            .matrix();
    const auto mhat = (m.array() / static_cast<float>(bc1)).eval();
    const auto vhat = (v.array() / static_cast<float>(bc2)).eval();
    p.array() -= static_cast<float>(lr) * mhat / (vhat.sqrt() + static_cast<float>(cfg.eps));
  }
}

// ---- dataset --------------------------------------------------------------

Waveform make_synthetic_clip(uint64_t seed, int index, double duration_s, int sample_rate) {
  Rng rng(mix_seed(mix_seed(seed, "clip"), static_cast<uint64_t>(index)));
  SynthParams p;
  p.duration_s = duration_s;
  p.sample_rate = sample_rate;
  const uint64_t clip_seed = rng.next_u64();
  switch (index % 4) {
    case 0:
      p.freq_hz = rng.uniform(110.0, 1760.0);
      return synthesize_test_waveform(SynthKind::Sine, clip_seed, p);
    case 1:
      p.freq_hz = rng.uniform(100.0, 500.0);
      p.chirp_end_hz = rng.uniform(1000.0, 5000.0);
      return synthesize_test_waveform(SynthKind::Chirp, clip_seed, p);
    case 2:
      p.amplitude = 0.3;
      return synthesize_test_waveform(SynthKind::Noise, clip_seed, p);
    default:
      p.num_tones = 2 + static_cast<int>(rng.below(3));
      return synthesize_test_waveform(SynthKind::ToneMixture, clip_seed, p);
  }
}

std::vector<Clip> build_dataset(const DatasetSpec& spec, const RandomQuantizer& quantizer,
                                const MelConfig& mel_cfg, int stack_factor,
                                FeatureNormalizer* normalizer_out) {
  std::vector<Clip> clips;
  if (spec.synthetic_count > 0) {
    for (int i = 0; i < spec.synthetic_count; ++i) {
      Clip c;
      c.id = "synth" + std::to_string(i);
      c.wave = make_synthetic_clip(spec.seed, i, spec.synthetic_duration_s, spec.sample_rate);
      clips.push_back(std::move(c));
    }
  } else {
    for (const auto& path : spec.paths) {
      Clip c;
      c.id = std::filesystem::path(path).filename().string();
      try {
        if (path.size() >= 4 && path.substr(path.size() - 4) == ".wav")
          c.wave = read_wav(path, spec.sample_rate);
        else
          c.wave = read_raw_f32(path, spec.sample_rate);
      } catch (const std::exception& e) {
        std::cerr << "warning: skipping " << path << ": " << e.what() << "\n";
        continue;
      }
      clips.push_back(std::move(c));
    }
  }
  if (clips.empty()) throw InputError("dataset is empty");

  std::vector<StackedMelSequence> stacked;
  stacked.reserve(clips.size());
  for (const auto& c : clips)
    stacked.push_back(stack_frames(compute_log_mel(c.wave, mel_cfg), stack_factor));

  const FeatureNormalizer norm = fit_normalizer(stacked);
  if (normalizer_out) *normalizer_out = norm;

  for (size_t i = 0; i < clips.size(); ++i) {
    const StackedMelSequence normalized = normalize(norm, stacked[i]);
    clips[i].tokens = quantizer.quantize_sequence(normalized);
    clips[i].mel_target = normalized.frames.cast<float>();
  }
  return clips;
}

// ---- trainer ----------------------------------------------------------------

Trainer::Trainer(const TrainConfig& cfg, std::vector<Clip> clips)
    : cfg_(cfg), clips_(std::move(clips)), model_(cfg.encoder) {
  if (clips_.empty()) throw InputError("trainer needs at least one clip");
  cfg_.schedule.validate();
  if (cfg_.batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

std::vector<size_t> Trainer::epoch_order() const {
  std::vector<size_t> order(clips_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(mix_seed(cfg_.seed, "order"), static_cast<uint64_t>(epoch_)));
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

LossBreakdown Trainer::pretrain_step() {
  ag::Graph<float> g;
  g.training = true;
  Rng dropout_rng(mix_seed(mix_seed(cfg_.seed, "dropout"), static_cast<uint64_t>(step_)));
  g.dropout_rng = &dropout_rng;
  auto vars = model_.bind(g);

  std::vector<size_t> order = epoch_order();
  LossBreakdown batch;
  ag::Var<float> batch_total;
  int batch_masked = 0;
  int acc_hits = 0, acc_total = 0;

  for (int b = 0; b < cfg_.batch_size; ++b) {
    if (epoch_pos_ >= static_cast<int64_t>(clips_.size())) {
      epoch_ += 1;
      epoch_pos_ = 0;
      order = epoch_order();
    }
    const Clip& clip = clips_[order[static_cast<size_t>(epoch_pos_)]];
    epoch_pos_ += 1;

    const uint64_t epoch_seed = mix_seed(mix_seed(cfg_.seed, "mask"), static_cast<uint64_t>(epoch_));
    const MaskSpec mask =
        sample_mask(clip.wave.samples.size(), clip.wave.sample_rate, cfg_.mask, epoch_seed, clip.id);
    const Waveform masked_wave = apply_waveform_mask(clip.wave, mask, cfg_.mask);
    const std::vector<int> masked_frames =
        mask_to_frame_indices(mask, 25.0, clip.wave.sample_rate);

    auto out = model_.forward(g, vars, masked_wave);
    auto lv = compute_loss_vars(g, out, clip.tokens, clip.mel_target, masked_frames);
    batch.ce += lv.values().ce;
    batch.mse += lv.values().mse;
    batch.num_masked_frames += lv.num_masked_frames;
    batch_masked += lv.num_masked_frames;
    batch_total = b == 0 ? lv.total : g.add(batch_total, lv.total);

    for (int t : masked_frames) {
      Eigen::Index arg;
      out.token_logits->value.row(t).maxCoeff(&arg);
      acc_hits += static_cast<int>(arg) == clip.tokens[static_cast<size_t>(t)] ? 1 : 0;
      acc_total += 1;
    }
  }

  const float inv_b = 1.0f / static_cast<float>(cfg_.batch_size);
  batch_total = g.scale(batch_total, inv_b);
  batch.ce *= inv_b;
  batch.mse *= inv_b;
  batch.total = batch.ce + batch.mse;
  last_masked_acc_ = acc_total > 0 ? static_cast<double>(acc_hits) / acc_total : 0.0;

  if (!std::isfinite(batch.total))
    throw TrainingError("non-finite loss at step " + std::to_string(step_) +
                        "; last good checkpoint: " +
                        (last_checkpoint_.empty() ? "<none>" : last_checkpoint_));

  if (batch_masked > 0) {
    g.backward(batch_total);
    std::map<std::string, MatF> grads;
    for (auto& [name, var] : vars) {
      var->ensure_grad();
      grads[name] = var->grad;
    }
    clip_gradients(grads, cfg_.schedule.clip_norm);
    adam_step(model_.params(), grads, adam_, lr_at_step(step_ + 1, cfg_.schedule));
  } else {
    adam_.t += 1;  // parameters untouched when nothing was masked
  }

  step_ += 1;
  loss_window_.push_back(batch.total);
  while (loss_window_.size() > 50) loss_window_.pop_front();
  return batch;
}

Checkpoint Trainer::snapshot() const {
  Checkpoint ckpt;
  ckpt.encoder = cfg_.encoder;
  ckpt.quantizer = cfg_.quantizer;
  ckpt.normalizer = normalizer_;
  ckpt.params = model_.params();
  ckpt.train.present = true;
  ckpt.train.step = step_;
  ckpt.train.epoch = epoch_;
  ckpt.train.epoch_pos = epoch_pos_;
  ckpt.train.adam_m = adam_.m;
  ckpt.train.adam_v = adam_.v;
  ckpt.train.loss_window.assign(loss_window_.begin(), loss_window_.end());
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  if (!ckpt.train.present) throw InputError("checkpoint has no training state");
  if (ckpt.encoder.model_dim != cfg_.encoder.model_dim ||
      ckpt.encoder.num_layers != cfg_.encoder.num_layers ||
      ckpt.encoder.block_kind != cfg_.encoder.block_kind ||
      ckpt.encoder.global_branch != cfg_.encoder.global_branch)
    throw ConfigError("checkpoint was produced by a different model configuration");
  model_.params() = ckpt.params;
  adam_.m = ckpt.train.adam_m;
  adam_.v = ckpt.train.adam_v;
  adam_.t = ckpt.train.step;
  step_ = ckpt.train.step;
  epoch_ = ckpt.train.epoch;
  epoch_pos_ = ckpt.train.epoch_pos;
  normalizer_ = ckpt.normalizer;
  loss_window_.assign(ckpt.train.loss_window.begin(), ckpt.train.loss_window.end());
}

void Trainer::write_metrics_row(const LossBreakdown& loss, double lr, double wallclock_s) {
  std::ofstream f(metrics_path_, std::ios::app);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.3f\n",
                static_cast<long long>(step_), lr, loss.ce, loss.mse, loss.total,
                last_masked_acc_, wallclock_s);
  f << buf;
}

TrainResult Trainer::run() {
  namespace fs = std::filesystem;
  fs::create_directories(cfg_.out_dir);
  metrics_path_ = (fs::path(cfg_.out_dir) / "metrics.csv").string();
  if (step_ == 0) {
    std::ofstream f(metrics_path_);
    f << "step,lr,ce,mse,total,masked_acc,wallclock_s\n";
  }
  const std::string ckpt_path = (fs::path(cfg_.out_dir) / "checkpoint.smxc").string();

  const auto t0 = std::chrono::steady_clock::now();
  while (step_ < cfg_.schedule.total_steps && !g_stop_requested) {
    const double lr = lr_at_step(step_ + 1, cfg_.schedule);
    const LossBreakdown loss = pretrain_step();
    const double wallclock =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_metrics_row(loss, lr, wallclock);
    if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0) {
      save_checkpoint(ckpt_path, snapshot());
      last_checkpoint_ = ckpt_path;
    }
  }
  save_checkpoint(ckpt_path, snapshot());
  last_checkpoint_ = ckpt_path;

  TrainResult r;
  r.checkpoint_path = ckpt_path;
  r.metrics_path = metrics_path_;
  if (!loss_window_.empty()) {
    r.final_loss.total = loss_window_.back();
  }
  return r;
}

double eval_masked_accuracy(const EncoderModel<float>& model, const std::vector<Clip>& clips,
                            const MaskConfig& mask_cfg, uint64_t epoch_seed) {
  int hits = 0, total = 0;
  for (const auto& clip : clips) {
    const MaskSpec mask =
        sample_mask(clip.wave.samples.size(), clip.wave.sample_rate, mask_cfg, epoch_seed, clip.id);
    const std::vector<int> frames = mask_to_frame_indices(mask, 25.0, clip.wave.sample_rate);
    if (frames.empty()) continue;
    const Waveform masked_wave = apply_waveform_mask(clip.wave, mask, mask_cfg);
    ag::Graph<float> g;
    g.grad_enabled = false;
    auto vars = model.bind(g);
    auto out = model.forward(g, vars, masked_wave);
    for (int t : frames) {
      Eigen::Index arg;
      out.token_logits->value.row(t).maxCoeff(&arg);
      hits += static_cast<int>(arg) == clip.tokens[static_cast<size_t>(t)] ? 1 : 0;
      total += 1;
    }
  }
  return total > 0 ? static_cast<double>(hits) / total : 0.0;
}

TrainResult run_pretraining(const DatasetSpec& data, const TrainConfig& cfg) {
  const RandomQuantizer quantizer(cfg.quantizer);
  FeatureNormalizer normalizer;
  std::vector<Clip> clips = build_dataset(data, quantizer, cfg.mel, cfg.stack_factor, &normalizer);
  Trainer trainer(cfg, std::move(clips));
  trainer.set_normalizer(normalizer);
  return trainer.run();
}

}  // namespace sonamix
