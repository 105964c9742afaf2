// Pretraining: loss contract, schedule, clipping, optimizer, trainer loop.
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sonamix/pretrain.hpp"
#include "sonamix/rng.hpp"

using namespace sonamix;

namespace {

TrainConfig tiny_train_config(uint64_t seed = 7) {
  TrainConfig cfg;
  cfg.encoder.block_kind = BlockKind::Branchformer;
  cfg.encoder.global_branch = GlobalBranch::SummaryMixing;
  cfg.encoder.num_layers = 1;
  cfg.encoder.model_dim = 16;
  cfg.encoder.num_heads = 2;
  cfg.encoder.vocab_size = 64;
  cfg.encoder.mel_dim = 512;
  cfg.encoder.dropout = 0.1;
  cfg.encoder.seed = seed;
  cfg.quantizer.codebook_size = 64;
  cfg.quantizer.codebook_dim = 8;
  cfg.quantizer.input_dim = 512;
  cfg.quantizer.seed = seed;
  cfg.schedule.peak_lr = 3e-3;
  cfg.schedule.final_lr = 3e-4;
  cfg.schedule.warmup_steps = 5;
  cfg.schedule.total_steps = 100;
  cfg.batch_size = 2;
  cfg.seed = seed;
  return cfg;
}

std::vector<Clip> tiny_clips(const TrainConfig& cfg, int count) {
  DatasetSpec spec;
  spec.synthetic_count = count;
  spec.synthetic_duration_s = 1.0;
  spec.seed = cfg.seed;
  const RandomQuantizer quant(cfg.quantizer);
  return build_dataset(spec, quant, cfg.mel, cfg.stack_factor, nullptr);
}

}  // namespace

TEST_CASE("loss breakdown: empty mask gives exact zeros and total = ce + mse") {
  MatF token_logits = MatF::Zero(4, 64);
  MatF mel_logits = MatF::Zero(4, 8);
  MatF mel_target = MatF::Ones(4, 8);
  const std::vector<int> tokens{1, 2, 3, 4};
  const auto empty = compute_loss(token_logits, mel_logits, tokens, mel_target, {});
  CHECK(empty.ce == 0.0);
  CHECK(empty.mse == 0.0);
  CHECK(empty.total == 0.0);
  CHECK(empty.num_masked_frames == 0);

  const auto some = compute_loss(token_logits, mel_logits, tokens, mel_target, {0, 2});
  CHECK(some.total == some.ce + some.mse);
  CHECK(some.num_masked_frames == 2);
  CHECK(some.ce == doctest::Approx(std::log(64.0)).epsilon(1e-6));
  CHECK(some.mse == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("masked index out of range is an input error") {
  MatF logits = MatF::Zero(3, 8);
  MatF mel = MatF::Zero(3, 4);
  CHECK_THROWS_AS(compute_loss(logits, mel, {0, 1, 2}, mel, {3}), InputError);
}

TEST_CASE("loss is bit-identical under perturbations at unmasked frames") {
  Rng rng(5);
  const MatF token_logits = standard_normal<float>(6, 32, rng);
  const MatF mel_logits = standard_normal<float>(6, 8, rng);
  MatF mel_target = standard_normal<float>(6, 8, rng);
  std::vector<int> tokens{3, 7, 1, 30, 12, 9};
  const std::vector<int> masked{1, 4};

  const auto base = compute_loss(token_logits, mel_logits, tokens, mel_target, masked);
  tokens[0] = 17;
  tokens[5] = 2;
  mel_target.row(2).setConstant(99.0f);
  mel_target.row(3).setConstant(-5.0f);
  const auto perturbed = compute_loss(token_logits, mel_logits, tokens, mel_target, masked);
  CHECK(base.ce == perturbed.ce);
  CHECK(base.mse == perturbed.mse);
  CHECK(base.total == perturbed.total);
}

TEST_CASE("schedule endpoints and midpoint follow the closed form") {
  ScheduleConfig cfg;
  cfg.peak_lr = 1e-4;
  cfg.final_lr = 1e-5;
  cfg.warmup_steps = 100;
  cfg.total_steps = 1100;
  CHECK(lr_at_step(0, cfg) == 0.0);
  CHECK(lr_at_step(100, cfg) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(lr_at_step(1100, cfg) == doctest::Approx(1e-5).epsilon(1e-15));
  // Midpoint of the decay: cos(pi/2) = 0.
  CHECK(lr_at_step(600, cfg) ==
        doctest::Approx(1e-5 + 0.5 * (1e-4 - 1e-5)).epsilon(1e-12));
  // Continuity at the warmup boundary.
  CHECK(lr_at_step(101, cfg) < lr_at_step(100, cfg));
  CHECK(lr_at_step(100, cfg) - lr_at_step(99, cfg) ==
        doctest::Approx(1e-4 / 100).epsilon(1e-9));
  CHECK_THROWS_AS(lr_at_step(1101, cfg), InputError);
  ScheduleConfig bad = cfg;
  bad.warmup_steps = 0;
  CHECK_THROWS_AS(lr_at_step(0, bad), ConfigError);
}

TEST_CASE("gradient clipping rescales only above the threshold") {
  std::map<std::string, MatF> grads{{"a", MatF::Constant(2, 2, 0.1f)},
                                    {"b", MatF::Constant(1, 4, -0.1f)}};
  const double small_norm = clip_gradients(grads, 1.0);
  CHECK(small_norm == doctest::Approx(std::sqrt(8 * 0.01)).epsilon(1e-6));
  CHECK(grads["a"](0, 0) == 0.1f);  // untouched below the threshold

  std::map<std::string, MatF> big{{"a", MatF::Constant(4, 4, 1.0f)}};
  const MatF before = big["a"];
  const double norm = clip_gradients(big, 1.0);
  CHECK(norm == doctest::Approx(4.0));
  double after_norm = big["a"].cast<double>().norm();
  CHECK(after_norm <= 1.0 + 1e-6);
  // Direction is preserved: post = pre * (clip / norm).
  const MatF expected = before * 0.25f;
  CHECK((big["a"] - expected).cwiseAbs().maxCoeff() < 1e-7f);

  std::map<std::string, MatF> nan{{"a", MatF::Constant(1, 1, std::nanf(""))}};
  CHECK_THROWS_AS(clip_gradients(nan, 1.0), TrainingError);
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  std::map<std::string, MatF> params{{"w", MatF::Constant(2, 3, 1.5f)}};
  const std::map<std::string, MatF> zero{{"w", MatF::Zero(2, 3)}};
  AdamState state;
  adam_step(params, zero, state, 1e-3);
  CHECK(params["w"] == MatF::Constant(2, 3, 1.5f));
  CHECK(state.t == 1);
}

TEST_CASE("teacher targets ignore the waveform mask entirely") {
  const auto cfg = tiny_train_config();
  const RandomQuantizer quant(cfg.quantizer);
  SynthParams p;
  p.duration_s = 1.0;
  const Waveform w = synthesize_test_waveform(SynthKind::ToneMixture, 3, p);
  const auto stacked = stack_frames(compute_log_mel(w), 4);
  std::vector<StackedMelSequence> split{stacked};
  const auto norm = fit_normalizer(split);
  const auto tokens_clean = quant.quantize_sequence(normalize(norm, stacked));

  MaskConfig mc;
  mc.mask_prob = 1.0;
  const auto mask = sample_mask(w.samples.size(), 24000, mc, 0, "c");
  const Waveform masked = apply_waveform_mask(w, mask);
  // Recomputing features from the masked waveform is NOT how targets are made;
  // the pipeline quantizes the clean features, so tokens must be unchanged.
  const auto tokens_after = quant.quantize_sequence(normalize(norm, stacked));
  CHECK(tokens_clean == tokens_after);
  (void)masked;
}

TEST_CASE("pretrain_step is bit-reproducible across trainer instances") {
  const auto cfg = tiny_train_config();
  auto clips = tiny_clips(cfg, 4);
  Trainer a(cfg, clips);
  Trainer b(cfg, clips);
  for (int i = 0; i < 3; ++i) {
    const auto la = a.pretrain_step();
    const auto lb = b.pretrain_step();
    CHECK(la.total == lb.total);
  }
  CHECK(a.model().params() == b.model().params());
}

TEST_CASE("a batch with no masked frames leaves parameters untouched") {
  auto cfg = tiny_train_config();
  cfg.mask.mask_prob = 0.0;
  auto clips = tiny_clips(cfg, 4);
  Trainer t(cfg, clips);
  const auto before = t.model().params();
  const auto loss = t.pretrain_step();
  CHECK(loss.total == 0.0);
  CHECK(loss.num_masked_frames == 0);
  CHECK(t.model().params() == before);
  CHECK(t.step() == 1);
}

TEST_CASE("resume from a checkpoint reproduces the uninterrupted trajectory") {
  const auto cfg = tiny_train_config(11);
  auto clips = tiny_clips(cfg, 4);

  Trainer full(cfg, clips);
  for (int i = 0; i < 6; ++i) full.pretrain_step();

  Trainer half(cfg, clips);
  for (int i = 0; i < 3; ++i) half.pretrain_step();
  const Checkpoint ckpt = half.snapshot();

  Trainer resumed(cfg, clips);
  resumed.restore(ckpt);
  for (int i = 0; i < 3; ++i) resumed.pretrain_step();

  CHECK(resumed.model().params() == full.model().params());
  CHECK(resumed.step() == full.step());
}

TEST_CASE("masked-token accuracy starts at chance level") {
  auto cfg = tiny_train_config(13);
  cfg.encoder.vocab_size = 8192;
  cfg.quantizer.codebook_size = 8192;
  auto clips = tiny_clips(cfg, 4);
  EncoderModel<float> model(cfg.encoder);
  const double acc = eval_masked_accuracy(model, clips, cfg.mask, 0);
  CHECK(acc <= 5.0 / 8192.0);
}

TEST_CASE("a short training run reduces the loss on a tiny dataset") {
  auto cfg = tiny_train_config(17);
  cfg.encoder.model_dim = 32;
  cfg.schedule.peak_lr = 2e-3;
  cfg.schedule.final_lr = 2e-4;
  cfg.schedule.warmup_steps = 10;
  cfg.schedule.total_steps = 80;
  cfg.batch_size = 4;
  auto clips = tiny_clips(cfg, 4);
  Trainer t(cfg, clips);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 80; ++i) {
    const auto loss = t.pretrain_step();
    if (i < 10) first += loss.total;
    if (i >= 70) last += loss.total;
  }
  CHECK(last < first);
}

TEST_CASE("run() writes a metrics csv with the documented columns") {
  namespace fs = std::filesystem;
  auto cfg = tiny_train_config(19);
  cfg.schedule.warmup_steps = 2;
  cfg.schedule.total_steps = 4;
  cfg.checkpoint_every = 2;
  cfg.out_dir = (fs::temp_directory_path() / "sonamix_run_test").string();
  fs::remove_all(cfg.out_dir);
  auto clips = tiny_clips(cfg, 2);
  Trainer t(cfg, clips);
  const auto result = t.run();
  CHECK(fs::exists(result.checkpoint_path));
  std::ifstream f(result.metrics_path);
  std::string header;
  std::getline(f, header);
  CHECK(header == "step,lr,ce,mse,total,masked_acc,wallclock_s");
  int rows = 0;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 4);
  fs::remove_all(cfg.out_dir);
}

TEST_CASE("quantizer stays frozen across a training run") {
  const auto cfg = tiny_train_config(23);
  const RandomQuantizer quant(cfg.quantizer);
  const MatF a_before = quant.projection();
  const MatF c_before = quant.codebook();
  auto clips = tiny_clips(cfg, 2);
  Trainer t(cfg, clips);
  for (int i = 0; i < 2; ++i) t.pretrain_step();
  CHECK(quant.projection() == a_before);
  CHECK(quant.codebook() == c_before);
}
