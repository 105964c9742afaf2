// Copyright 2026 Sonamix Authors
// Command-line entry point: tokenize, pretrain, probe, census, bench,
// export-embeddings.
//
// Licensed under the Apache License, Version 2.0

#include <CLI11.hpp>
#include <algorithm>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sonamix/bench.hpp"
#include "sonamix/checkpoint.hpp"
#include "sonamix/pretrain.hpp"
#include "sonamix/probe.hpp"

namespace fs = std::filesystem;
using namespace sonamix;

namespace {

void handle_signal(int) { g_stop_requested = 1; }

struct GlobalOpts {
  uint64_t seed = 0;
  std::string out_dir = "out";
  int verbosity = 0;
};

void write_resolved_config(const CLI::App& app, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream f(fs::path(out_dir) / "resolved_config.toml");
  f << app.config_to_str(true, false);
}

EncoderConfig encoder_from_flags(const std::string& block, const std::string& branch, int dim,
                                 int layers, int heads, double ffn_mult, double cgmlp_mult,
                                 double summary_mult, int conv_kernel, double dropout, int vocab,
                                 int mel_dim, uint64_t seed) {
  EncoderConfig cfg;
  cfg.block_kind = parse_block_kind(block);
  cfg.global_branch = parse_global_branch(branch);
  cfg.model_dim = dim;
  cfg.num_layers = layers;
  cfg.num_heads = heads;
  cfg.ffn_mult = ffn_mult;
  cfg.cgmlp_mult = cgmlp_mult;
  cfg.summary_mult = summary_mult;
  cfg.conv_kernel = conv_kernel;
  cfg.dropout = dropout;
  cfg.vocab_size = vocab;
  cfg.mel_dim = mel_dim;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

// A manifest is either a newline-delimited file list or a directory whose
// audio files are ingested in sorted order.
std::vector<std::string> read_manifest(const std::string& path) {
  std::vector<std::string> paths;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      const auto ext = entry.path().extension().string();
      if (ext == ".wav" || ext == ".raw" || ext == ".f32")
        paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    return paths;
  }
  std::ifstream f(path);
  if (!f) throw InputError("cannot open manifest " + path);
  std::string line;
  while (std::getline(f, line))
    if (!line.empty() && line[0] != '#') paths.push_back(line);
  return paths;
}

void write_embeddings_file(const std::string& path, const MatF& emb) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  f.write("SMXE", 4);
  write_pod<uint32_t>(f, static_cast<uint32_t>(emb.rows()));
  write_pod<uint32_t>(f, static_cast<uint32_t>(emb.cols()));
  write_bytes(f, emb.data(), sizeof(float) * static_cast<size_t>(emb.size()));
}

std::vector<Waveform> gather_waveforms(int synthetic, double duration, uint64_t seed,
                                       const std::string& manifest) {
  std::vector<Waveform> clips;
  if (synthetic > 0) {
    for (int i = 0; i < synthetic; ++i)
      clips.push_back(make_synthetic_clip(seed, i, duration, 24000));
  } else {
    for (const auto& p : read_manifest(manifest)) {
      if (p.size() >= 4 && p.substr(p.size() - 4) == ".wav")
        clips.push_back(read_wav(p));
      else
        clips.push_back(read_raw_f32(p));
    }
  }
  if (clips.empty()) throw InputError("no input clips");
  return clips;
}

}  // namespace

int main(int argc, char** argv) {
  if (!host_is_little_endian()) {
    std::cerr << "error: big-endian hosts are not supported\n";
    return 1;
  }
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);

  CLI::App app{"self-supervised music encoder with a frozen random-projection tokenizer"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key = value config file; flags override file values");

  GlobalOpts g;
  if (const char* env = std::getenv("SONAMIX_OUT")) g.out_dir = env;
  app.add_option("--seed", g.seed, "global seed; all randomness derives from it");
  app.add_option("--out", g.out_dir, "output directory (env SONAMIX_OUT)");
  app.add_flag("-v,--verbose", g.verbosity, "increase log verbosity");

  // Shared model flags.
  std::string block = "branchformer", branch = "summary_mixing";
  int dim = 128, layers = 2, heads = 8, conv_kernel = 31, vocab = 8192, mel_dim = 512;
  double ffn_mult = 4.0, cgmlp_mult = 3.0, summary_mult = 0.5, dropout = 0.1;
  auto add_model_flags = [&](CLI::App* cmd) {
    cmd->add_option("--block", block, "branchformer | conformer");
    cmd->add_option("--branch", branch, "attention | summary_mixing");
    cmd->add_option("--dim", dim, "model dimension");
    cmd->add_option("--layers", layers, "encoder blocks");
    cmd->add_option("--heads", heads, "attention heads");
    cmd->add_option("--ffn-mult", ffn_mult, "conformer FFN width multiplier");
    cmd->add_option("--cgmlp-mult", cgmlp_mult, "cgMLP width multiplier");
    cmd->add_option("--summary-mult", summary_mult, "summary branch width multiplier");
    cmd->add_option("--conv-kernel", conv_kernel, "depthwise kernel size");
    cmd->add_option("--dropout", dropout, "dropout probability");
    cmd->add_option("--vocab", vocab, "codebook / token vocabulary size");
    cmd->add_option("--mel-dim", mel_dim, "stacked mel dimensionality");
  };

  // ---- tokenize -------------------------------------------------------------
  auto* tokenize = app.add_subcommand("tokenize", "map features or audio to token indices");
  std::string tok_input, tok_out, tok_quantizer, tok_checkpoint, tok_dump_features;
  bool tok_binary = false, tok_raw = false;
  int tok_n = 8192, tok_h = 16, tok_d = 512;
  tokenize->add_option("--input", tok_input, "feature file (.smxf), wav, or raw f32")->required();
  tokenize->add_option("--output", tok_out, "output path (default stdout)");
  tokenize->add_flag("--binary", tok_binary, "emit binary u32 tokens instead of text");
  tokenize->add_flag("--raw-waveform", tok_raw, "treat input as raw f32 waveform samples");
  tokenize->add_option("--quantizer", tok_quantizer, "quantizer snapshot file");
  tokenize->add_option("--checkpoint", tok_checkpoint,
                       "reuse quantizer seed and feature normalizer from a checkpoint");
  tokenize->add_option("--codebook-size", tok_n, "codebook size when no snapshot is given");
  tokenize->add_option("--codebook-dim", tok_h, "codebook dimension");
  tokenize->add_option("--input-dim", tok_d, "quantizer input dimension");
  tokenize->add_option("--dump-features", tok_dump_features,
                       "also export the stacked features to this path");

  // ---- pretrain -------------------------------------------------------------
  auto* pretrain = app.add_subcommand("pretrain", "run self-supervised pretraining");
  int pt_synthetic = 0;
  std::string pt_manifest, pt_resume;
  int64_t pt_steps = 500, pt_warmup = 0, pt_ckpt_every = 100;
  int pt_batch = 8;
  double pt_peak = 1e-4, pt_final = 1e-5, pt_clip = 1.0, pt_mask_prob = 0.2, pt_duration = 2.0;
  add_model_flags(pretrain);
  pretrain->add_option("--synthetic", pt_synthetic, "train on N synthetic clips");
  pretrain->add_option("--manifest", pt_manifest, "newline-delimited audio file list");
  pretrain->add_option("--steps", pt_steps, "total optimizer steps");
  pretrain->add_option("--warmup", pt_warmup, "warmup steps (default 5% of total)");
  pretrain->add_option("--batch", pt_batch, "clips per step");
  pretrain->add_option("--peak-lr", pt_peak, "peak learning rate");
  pretrain->add_option("--final-lr", pt_final, "final learning rate");
  pretrain->add_option("--clip-norm", pt_clip, "global gradient clipping threshold");
  pretrain->add_option("--mask-prob", pt_mask_prob, "segment masking probability");
  pretrain->add_option("--duration", pt_duration, "synthetic clip duration in seconds");
  pretrain->add_option("--checkpoint-every", pt_ckpt_every, "steps between checkpoints");
  pretrain->add_option("--resume", pt_resume, "checkpoint to resume from");

  // ---- probe ----------------------------------------------------------------
  auto* probe = app.add_subcommand("probe", "train a frozen-backbone probe on a synthetic task");
  std::string pr_checkpoint, pr_task = "pitch_class", pr_pooling = "mean";
  int pr_size = 400, pr_hidden = 512, pr_batch = 32, pr_epochs = 200;
  double pr_dropout = 0.25, pr_lr = 1e-3, pr_duration = 1.0;
  probe->add_option("--checkpoint", pr_checkpoint, "trained checkpoint")->required();
  probe->add_option("--task", pr_task, "pitch_class | tone_count | am_rate_regression");
  probe->add_option("--size", pr_size, "dataset size");
  probe->add_option("--pooling", pr_pooling, "mean | max");
  probe->add_option("--hidden", pr_hidden, "probe hidden units");
  probe->add_option("--probe-dropout", pr_dropout, "probe dropout");
  probe->add_option("--batch", pr_batch, "probe batch size (16 or 32)");
  probe->add_option("--epochs", pr_epochs, "probe training epochs");
  probe->add_option("--lr", pr_lr, "probe learning rate");
  probe->add_option("--duration", pr_duration, "task clip duration in seconds");

  // ---- census ----------------------------------------------------------------
  auto* census = app.add_subcommand("census", "print the parameter census for a configuration");
  add_model_flags(census);

  // ---- bench -----------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "runtime scaling or parameter-size benchmarks");
  bool bn_size = false;
  std::vector<int> bn_lengths{512, 1024, 2048, 4096, 8192};
  int bn_reps = 20;
  std::string bn_format = "csv", bn_out;
  add_model_flags(bench);
  bench->add_flag("--size", bn_size, "report parameter sizes instead of runtime scaling");
  bench->add_option("--lengths", bn_lengths, "sequence lengths to time")->delimiter(',');
  bench->add_option("--reps", bn_reps, "timed repetitions per length");
  bench->add_option("--format", bn_format, "csv | json | markdown");
  bench->add_option("--report-out,--out", bn_out, "report file (default <out>/report.<fmt>)");

  // ---- export-embeddings -------------------------------------------------------
  auto* exporter = app.add_subcommand("export-embeddings", "pool clip embeddings to a binary file");
  std::string ex_checkpoint, ex_manifest, ex_pooling = "mean", ex_out;
  int ex_synthetic = 0;
  double ex_duration = 1.0;
  exporter->add_option("--checkpoint", ex_checkpoint, "trained checkpoint")->required();
  exporter->add_option("--manifest", ex_manifest, "newline-delimited audio file list");
  exporter->add_option("--synthetic", ex_synthetic, "embed N synthetic clips instead");
  exporter->add_option("--pooling", ex_pooling, "mean | max");
  exporter->add_option("--duration", ex_duration, "synthetic clip duration in seconds");
  exporter->add_option("--embeddings-out,--out", ex_out, "output file (default <out>/embeddings.smxe)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    write_resolved_config(app, g.out_dir);

    if (*tokenize) {
      RandomQuantizer quant = [&] {
        if (!tok_quantizer.empty()) return RandomQuantizer::load(tok_quantizer);
        if (!tok_checkpoint.empty()) {
          const auto ckpt = load_checkpoint(tok_checkpoint);
          return RandomQuantizer(ckpt.quantizer);
        }
        QuantizerConfig qc;
        qc.codebook_size = tok_n;
        qc.codebook_dim = tok_h;
        qc.input_dim = tok_d;
        qc.seed = g.seed;
        return RandomQuantizer(qc);
      }();

      StackedMelSequence features;
      const bool is_features =
          tok_input.size() >= 5 && tok_input.substr(tok_input.size() - 5) == ".smxf";
      if (is_features) {
        features.frames = read_features(tok_input, &features.frame_rate);
      } else {
        Waveform w = tok_raw ? read_raw_f32(tok_input) : read_wav(tok_input);
        features = stack_frames(compute_log_mel(w), 4);
        if (!tok_checkpoint.empty()) {
          const auto ckpt = load_checkpoint(tok_checkpoint);
          if (ckpt.normalizer.fitted()) features = normalize(ckpt.normalizer, features);
        }
      }
      if (!tok_dump_features.empty())
        write_features(tok_dump_features, features.frames, features.frame_rate);

      const auto seq = quantize_sequence(quant, features);
      if (tok_binary) {
        const std::string path = tok_out.empty() ? (fs::path(g.out_dir) / "tokens.u32").string()
                                                 : tok_out;
        std::ofstream f(path, std::ios::binary);
        for (int t : seq.tokens) write_pod<uint32_t>(f, static_cast<uint32_t>(t));
      } else if (tok_out.empty()) {
        for (int t : seq.tokens) std::cout << t << "\n";
      } else {
        std::ofstream f(tok_out);
        for (int t : seq.tokens) f << t << "\n";
      }
      return 0;
    }

    if (*pretrain) {
      TrainConfig cfg;
      cfg.encoder = encoder_from_flags(block, branch, dim, layers, heads, ffn_mult, cgmlp_mult,
                                       summary_mult, conv_kernel, dropout, vocab, mel_dim, g.seed);
      cfg.quantizer.codebook_size = vocab;
      cfg.quantizer.input_dim = mel_dim;
      cfg.quantizer.seed = g.seed;
      cfg.mask.mask_prob = pt_mask_prob;
      cfg.schedule.peak_lr = pt_peak;
      cfg.schedule.final_lr = pt_final;
      cfg.schedule.clip_norm = pt_clip;
      cfg.schedule.total_steps = pt_steps;
      cfg.schedule.warmup_steps = pt_warmup > 0 ? pt_warmup : std::max<int64_t>(1, pt_steps / 20);
      cfg.batch_size = pt_batch;
      cfg.checkpoint_every = pt_ckpt_every;
      cfg.seed = g.seed;
      cfg.out_dir = g.out_dir;

      DatasetSpec data;
      data.synthetic_count = pt_synthetic;
      data.synthetic_duration_s = pt_duration;
      data.seed = g.seed;
      if (pt_synthetic == 0) data.paths = read_manifest(pt_manifest);

      if (!pt_resume.empty()) {
        const RandomQuantizer quant(cfg.quantizer);
        FeatureNormalizer norm;
        auto clips = build_dataset(data, quant, cfg.mel, cfg.stack_factor, &norm);
        Trainer trainer(cfg, std::move(clips));
        trainer.restore(load_checkpoint(pt_resume));
        const auto result = trainer.run();
        std::cout << "checkpoint: " << result.checkpoint_path << "\n";
        std::cout << "metrics: " << result.metrics_path << "\n";
      } else {
        const auto result = run_pretraining(data, cfg);
        std::cout << "checkpoint: " << result.checkpoint_path << "\n";
        std::cout << "metrics: " << result.metrics_path << "\n";
      }
      return 0;
    }

    if (*probe) {
      const Checkpoint ckpt = load_checkpoint(pr_checkpoint);
      EncoderModel<float> model(ckpt.encoder);
      model.params() = ckpt.params;

      const auto task = make_synthetic_task(parse_task_kind(pr_task), pr_size, g.seed,
                                            pr_duration);
      const uint64_t hash_before = parameter_hash(model);
      const MatF embeddings = extract_embeddings(model, task.clips, parse_pooling(pr_pooling));
      if (parameter_hash(model) != hash_before)
        throw TrainingError("backbone parameters changed during extraction");

      ProbeConfig pcfg;
      pcfg.hidden_units = pr_hidden;
      pcfg.dropout = pr_dropout;
      pcfg.task_kind = task.kind;
      pcfg.num_classes = task.num_classes;
      pcfg.batch_size = pr_batch;
      pcfg.epochs = pr_epochs;
      pcfg.lr = pr_lr;
      const ProbeReport report = train_probe(embeddings, task.labels, pcfg, g.seed, task.name);

      fs::create_directories(g.out_dir);
      std::ofstream f(fs::path(g.out_dir) / "probe_report.json");
      f << report.to_json() << "\n";
      std::cout << report.summary_line() << "\n";
      return 0;
    }

    if (*census) {
      const auto cfg = encoder_from_flags(block, branch, dim, layers, heads, ffn_mult, cgmlp_mult,
                                          summary_mult, conv_kernel, dropout, vocab, mel_dim,
                                          g.seed);
      const auto counts = count_parameters(cfg);
      std::cout << census_table(counts);
      std::cout << census_json(cfg, counts) << "\n";
      return 0;
    }

    if (*bench) {
      fs::create_directories(g.out_dir);
      const ReportFormat format = parse_report_format(bn_format);
      const char* ext = format == ReportFormat::Csv ? "csv"
                        : format == ReportFormat::Json ? "json"
                                                       : "md";
      std::string text;
      if (bn_size) {
        auto cases = standard_size_cases();
        const auto report = bench_size(cases);
        text = emit_report(report, format);
      } else {
        const auto report = bench_scaling(parse_block_kind(block), parse_global_branch(branch),
                                          dim, bn_lengths, bn_reps, g.seed);
        text = emit_report(report, format);
      }
      const std::string path =
          bn_out.empty() ? (fs::path(g.out_dir) / (std::string("report.") + ext)).string()
                         : bn_out;
      std::ofstream f(path);
      f << text;
      std::cout << text;
      return 0;
    }

    if (*exporter) {
      const Checkpoint ckpt = load_checkpoint(ex_checkpoint);
      EncoderModel<float> model(ckpt.encoder);
      model.params() = ckpt.params;
      const auto clips = gather_waveforms(ex_synthetic, ex_duration, g.seed, ex_manifest);
      const MatF emb = extract_embeddings(model, clips, parse_pooling(ex_pooling));
      const std::string path = ex_out.empty()
                                   ? (fs::path(g.out_dir) / "embeddings.smxe").string()
                                   : ex_out;
      write_embeddings_file(path, emb);
      std::cout << "embeddings: " << path << " (" << emb.rows() << " x " << emb.cols() << ")\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
