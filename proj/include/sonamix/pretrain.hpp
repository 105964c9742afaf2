// Copyright 2026 Sonamix Authors
// Masked-prediction objective and the pretraining loop.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <csignal>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sonamix/checkpoint.hpp"
#include "sonamix/encoder.hpp"
#include "sonamix/masking.hpp"
#include "sonamix/quantizer.hpp"

namespace sonamix {

struct LossBreakdown {
  double ce = 0.0;
  double mse = 0.0;
  double total = 0.0;
  int num_masked_frames = 0;
};

template <typename S>
struct LossVars {
  ag::Var<S> ce;
  ag::Var<S> mse;
  ag::Var<S> total;
  int num_masked_frames = 0;

  LossBreakdown values() const {
    return {static_cast<double>(ce->value(0, 0)), static_cast<double>(mse->value(0, 0)),
            static_cast<double>(total->value(0, 0)), num_masked_frames};
  }
};

// Cross-entropy on token logits plus MSE on mel logits, both averaged over the
// masked frames only. Unmasked frames contribute exactly zero loss and
// receive exactly zero gradient. An empty mask yields an all-zero breakdown.
template <typename S>
LossVars<S> compute_loss_vars(ag::Graph<S>& g, const ModelOutputVars<S>& out,
                              const std::vector<int>& tokens, const Mat<S>& mel_target,
                              const std::vector<int>& masked) {
  const auto T = out.token_logits->value.rows();
  if (static_cast<Eigen::Index>(tokens.size()) != T)
    throw InputError("compute_loss: token length mismatch");
  if (mel_target.rows() != T) throw InputError("compute_loss: mel target length mismatch");
  LossVars<S> lv;
  lv.num_masked_frames = static_cast<int>(masked.size());
  lv.ce = g.masked_cross_entropy(out.token_logits, tokens, masked);
  lv.mse = g.masked_mse(out.mel_logits, mel_target, masked);
  lv.total = g.add(lv.ce, lv.mse);
  return lv;
}

// Value-level convenience wrapper.
LossBreakdown compute_loss(const MatF& token_logits, const MatF& mel_logits,
                           const std::vector<int>& tokens, const MatF& mel_target,
                           const std::vector<int>& masked);

// ---- schedule and optimizer ---------------------------------------------------

struct ScheduleConfig {
  double peak_lr = 1e-4;
  double final_lr = 1e-5;
  int64_t warmup_steps = 0;
  int64_t total_steps = 0;
  double clip_norm = 1.0;

  void validate() const;
};

// Linear warmup from 0 to peak_lr, then cosine decay to final_lr.
double lr_at_step(int64_t step, const ScheduleConfig& cfg);

// Scales all gradients by clip_norm / g when the global L2 norm g exceeds
// clip_norm. Returns the pre-clip norm.
double clip_gradients(std::map<std::string, MatF>& grads, double clip_norm);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, MatF> m;
  std::map<std::string, MatF> v;
  int64_t t = 0;
};

void adam_step(std::map<std::string, MatF>& params, const std::map<std::string, MatF>& grads,
               AdamState& state, double lr, const AdamConfig& cfg = AdamConfig());

// ---- dataset -------------------------------------------------------------------

// One pretraining clip with its frozen teacher targets. Targets are computed
// from the unmasked waveform once; masking never touches them.
struct Clip {
  std::string id;
  Waveform wave;
  std::vector<int> tokens;  // length T
  MatF mel_target;          // T x d_feat, normalized stacked mel
};

struct DatasetSpec {
  std::vector<std::string> paths;  // audio files (wav / raw f32)
  int synthetic_count = 0;         // > 0 replaces files with synthetic clips
  double synthetic_duration_s = 2.0;
  uint64_t seed = 0;
  int sample_rate = 24000;
};

// Loads (or synthesizes) waveforms, fits the feature normalizer on the whole
// training split, and precomputes token and mel targets.
std::vector<Clip> build_dataset(const DatasetSpec& spec, const RandomQuantizer& quantizer,
                                const MelConfig& mel_cfg, int stack_factor,
                                FeatureNormalizer* normalizer_out);

Waveform make_synthetic_clip(uint64_t seed, int index, double duration_s, int sample_rate);

// ---- trainer --------------------------------------------------------------------

struct TrainConfig {
  EncoderConfig encoder;
  QuantizerConfig quantizer;
  MaskConfig mask;
  ScheduleConfig schedule;
  MelConfig mel;
  int stack_factor = 4;
  int batch_size = 8;
  int64_t checkpoint_every = 100;
  uint64_t seed = 0;
  std::string out_dir = ".";
};

struct TrainResult {
  std::string checkpoint_path;
  std::string metrics_path;
  LossBreakdown final_loss;
};

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::vector<Clip> clips);

  // Resume from a checkpoint produced by an identical configuration.
  void restore(const Checkpoint& ckpt);

  // One optimizer step over the next batch; returns the batch-mean loss.
  LossBreakdown pretrain_step();

  // Runs until schedule.total_steps, appending one metrics row per step and
  // checkpointing periodically. Returns the final checkpoint path.
  TrainResult run();

  int64_t step() const { return step_; }
  const EncoderModel<float>& model() const { return model_; }
  EncoderModel<float>& model() { return model_; }
  const FeatureNormalizer& normalizer() const { return normalizer_; }
  void set_normalizer(const FeatureNormalizer& n) { normalizer_ = n; }
  double last_masked_accuracy() const { return last_masked_acc_; }

  Checkpoint snapshot() const;

 private:
  std::vector<size_t> epoch_order() const;
  void write_metrics_row(const LossBreakdown& loss, double lr, double wallclock_s);

  TrainConfig cfg_;
  std::vector<Clip> clips_;
  EncoderModel<float> model_;
  AdamState adam_;
  FeatureNormalizer normalizer_;
  int64_t step_ = 0;
  int64_t epoch_ = 0;
  int64_t epoch_pos_ = 0;
  std::deque<double> loss_window_;
  double last_masked_acc_ = 0.0;
  std::string metrics_path_;
  std::string last_checkpoint_;
};

// Masked-token top-1 accuracy of the model over the given clips under the
// masks of one epoch (evaluation mode, no dropout).
double eval_masked_accuracy(const EncoderModel<float>& model, const std::vector<Clip>& clips,
                            const MaskConfig& mask_cfg, uint64_t epoch_seed);

// Full orchestration: dataset assembly, training, checkpointing, metrics.
TrainResult run_pretraining(const DatasetSpec& data, const TrainConfig& cfg);

// Set by the CLI signal handler; the trainer checkpoints and stops cleanly
// at the next step boundary when this flag is raised.
extern volatile std::sig_atomic_t g_stop_requested;

}  // namespace sonamix
