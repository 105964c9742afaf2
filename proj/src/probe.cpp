// Copyright 2026 Sonamix Authors
// Frozen-backbone downstream probing on synthetic tasks.
//
// Licensed under the Apache License, Version 2.0

#include "sonamix/probe.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sonamix/autograd.hpp"
#include "sonamix/pretrain.hpp"
#include "sonamix/rng.hpp"

namespace sonamix {

Pooling parse_pooling(const std::string& name) {
  if (name == "mean") return Pooling::Mean;
  if (name == "max") return Pooling::Max;
  throw ConfigError("unknown pooling: " + name);
}

SyntheticTaskKind parse_task_kind(const std::string& name) {
  if (name == "pitch_class") return SyntheticTaskKind::PitchClass;
  if (name == "tone_count") return SyntheticTaskKind::ToneCount;
  if (name == "am_rate_regression") return SyntheticTaskKind::AmRateRegression;
  throw ConfigError("unknown probe task: " + name);
}

MatF extract_embeddings(const EncoderModel<float>& model, const std::vector<Waveform>& clips,
                        Pooling pooling) {
  if (clips.empty()) throw InputError("no clips to embed");
  MatF out(static_cast<Eigen::Index>(clips.size()), model.config().model_dim);
  for (size_t i = 0; i < clips.size(); ++i) {
    ag::Graph<float> g;
    g.grad_enabled = false;
    auto vars = model.bind(g);
    auto fwd = model.forward(g, vars, clips[i]);
    const MatF& h = fwd.hidden->value;
    if (pooling == Pooling::Mean)
      out.row(static_cast<Eigen::Index>(i)) = h.colwise().mean();
    else
      out.row(static_cast<Eigen::Index>(i)) = h.colwise().maxCoeff();
  }
  return out;
}

uint64_t parameter_hash(const EncoderModel<float>& model) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, m] : model.params()) {
    h = mix_seed(h, fnv1a64(name));
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    for (size_t i = 0; i < sizeof(float) * static_cast<size_t>(m.size()); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

SplitIndices split_80_10_10(int count, uint64_t seed) {
  std::vector<int> order(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(mix_seed(seed, "split"));
  for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const int n_train = count * 8 / 10;
  const int n_val = count / 10;
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  return s;
}

double r_squared(const std::vector<double>& truth, const std::vector<double>& pred) {
  if (truth.size() != pred.size() || truth.empty()) throw InputError("r_squared: bad inputs");
  double mean = 0.0;
  for (double y : truth) mean += y;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

namespace {

// Dense probe head: hidden layer with GELU and dropout, then a task output.
struct ProbeParams {
  MatF w1, b1, w2, b2;
};

ProbeParams init_probe(int in_dim, int hidden, int out_dim, uint64_t seed) {
  Rng r1(mix_seed(seed, "probe.w1"));
  Rng r2(mix_seed(seed, "probe.w2"));
  ProbeParams p;
  p.w1 = xavier_uniform<float>(hidden, in_dim, in_dim, hidden, r1);
  p.b1 = MatF::Zero(1, hidden);
  p.w2 = xavier_uniform<float>(out_dim, hidden, hidden, out_dim, r2);
  p.b2 = MatF::Zero(1, out_dim);
  return p;
}

MatF probe_logits(const ProbeParams& p, const MatF& x) {
  ag::Graph<float> g;
  g.grad_enabled = false;
  auto h = g.gelu(g.linear(g.input(x), g.input(p.w1), g.input(p.b1)));
  return g.linear(h, g.input(p.w2), g.input(p.b2))->value;
}

double eval_metric(const ProbeParams& p, const MatF& emb, const std::vector<double>& labels,
                   const std::vector<int>& idx, TaskKind kind) {
  if (idx.empty()) return 0.0;
  MatF x(static_cast<Eigen::Index>(idx.size()), emb.cols());
  for (size_t i = 0; i < idx.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = emb.row(idx[i]);
  const MatF logits = probe_logits(p, x);
  if (kind == TaskKind::Classification) {
    int hits = 0;
    for (size_t i = 0; i < idx.size(); ++i) {
      Eigen::Index arg;
      logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
      hits += static_cast<int>(arg) == static_cast<int>(labels[static_cast<size_t>(idx[i])]);
    }
    return static_cast<double>(hits) / static_cast<double>(idx.size());
  }
  std::vector<double> truth(idx.size()), pred(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    truth[i] = labels[static_cast<size_t>(idx[i])];
    pred[i] = logits(static_cast<Eigen::Index>(i), 0);
  }
  return r_squared(truth, pred);
}

}  // namespace

ProbeReport train_probe(const MatF& embeddings, const std::vector<double>& labels,
                        const ProbeConfig& cfg, uint64_t seed, const std::string& task_name) {
  const int n = static_cast<int>(embeddings.rows());
  if (static_cast<size_t>(n) != labels.size()) throw InputError("embeddings/labels misaligned");
  if (cfg.hidden_units < 1) throw ConfigError("hidden_units must be >= 1");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");

  const SplitIndices split = split_80_10_10(n, seed);
  const int out_dim = cfg.task_kind == TaskKind::Classification ? cfg.num_classes : cfg.target_dim;

  if (cfg.task_kind == TaskKind::Classification) {
    std::set<int> seen;
    for (int i : split.train) seen.insert(static_cast<int>(labels[static_cast<size_t>(i)]));
    if (seen.size() < 2) throw InputError("degenerate training set: fewer than two classes");
  }

  ProbeParams params = init_probe(static_cast<int>(embeddings.cols()), cfg.hidden_units, out_dim,
                                  seed);
  std::map<std::string, MatF> pmap{
      {"w1", params.w1}, {"b1", params.b1}, {"w2", params.w2}, {"b2", params.b2}};
  AdamState adam;

  ProbeParams best = params;
  double best_val = -1e300;
  int since_best = 0;
  Rng shuffle_rng(mix_seed(seed, "probe.batches"));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = split.train;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    Rng dropout_rng(mix_seed(mix_seed(seed, "probe.dropout"), static_cast<uint64_t>(epoch)));
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      MatF x(static_cast<Eigen::Index>(end - start), embeddings.cols());
      std::vector<int> cls_targets(end - start, 0);
      MatF reg_targets(static_cast<Eigen::Index>(end - start), 1);
      std::vector<int> all_rows(end - start);
      for (size_t i = start; i < end; ++i) {
        const int idx = order[i];
        x.row(static_cast<Eigen::Index>(i - start)) = embeddings.row(idx);
        if (cfg.task_kind == TaskKind::Classification)
          cls_targets[i - start] = static_cast<int>(labels[static_cast<size_t>(idx)]);
        else
          reg_targets(static_cast<Eigen::Index>(i - start), 0) =
              static_cast<float>(labels[static_cast<size_t>(idx)]);
        all_rows[i - start] = static_cast<int>(i - start);
      }

      ag::Graph<float> g;
      g.training = true;
      g.dropout_rng = &dropout_rng;
      auto w1 = g.param(pmap["w1"]);
      auto b1 = g.param(pmap["b1"]);
      auto w2 = g.param(pmap["w2"]);
      auto b2 = g.param(pmap["b2"]);
      auto h = g.dropout(g.gelu(g.linear(g.input(x), w1, b1)), cfg.dropout);
      auto logits = g.linear(h, w2, b2);
      ag::Var<float> loss = cfg.task_kind == TaskKind::Classification
                                ? g.masked_cross_entropy(logits, cls_targets, all_rows)
                                : g.masked_mse(logits, reg_targets, all_rows);
      g.backward(loss);
      std::map<std::string, MatF> grads;
      w1->ensure_grad();
      b1->ensure_grad();
      w2->ensure_grad();
      b2->ensure_grad();
      grads["w1"] = w1->grad;
      grads["b1"] = b1->grad;
      grads["w2"] = w2->grad;
      grads["b2"] = b2->grad;
      adam_step(pmap, grads, adam, cfg.lr);
    }

    params.w1 = pmap["w1"];
    params.b1 = pmap["b1"];
    params.w2 = pmap["w2"];
    params.b2 = pmap["b2"];
    const double val = eval_metric(params, embeddings, labels, split.val, cfg.task_kind);
    if (val > best_val) {
      best_val = val;
      best = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  ProbeReport report;
  report.task = task_name;
  report.metric = cfg.task_kind == TaskKind::Classification ? "accuracy" : "r2";
  report.value = eval_metric(best, embeddings, labels, split.test, cfg.task_kind);
  report.train_size = static_cast<int>(split.train.size());
  report.val_size = static_cast<int>(split.val.size());
  report.test_size = static_cast<int>(split.test.size());
  report.seed = seed;
  return report;
}

std::string ProbeReport::to_json() const {
  nlohmann::json j{{"task", task},           {"metric", metric},   {"value", value},
                   {"train_size", train_size}, {"val_size", val_size}, {"test_size", test_size},
                   {"seed", seed}};
  return j.dump(2);
}

std::string ProbeReport::summary_line() const {
  std::ostringstream os;
  os << task << ": " << metric << " = " << value << " (train/val/test " << train_size << "/"
     << val_size << "/" << test_size << ", seed " << seed << ")";
  return os.str();
}

SyntheticTask make_synthetic_task(SyntheticTaskKind kind, int size, uint64_t seed,
                                  double duration_s, int sample_rate) {
  if (size < 50) throw ConfigError("synthetic task size must be >= 50");
  SyntheticTask task;
  task.clips.reserve(static_cast<size_t>(size));
  task.labels.reserve(static_cast<size_t>(size));

  switch (kind) {
    case SyntheticTaskKind::PitchClass: {
      task.name = "pitch_class";
      task.kind = TaskKind::Classification;
      task.num_classes = 8;
      for (int i = 0; i < size; ++i) {
        const int cls = i % task.num_classes;  // round-robin keeps classes balanced
        Rng rng(mix_seed(mix_seed(seed, "pitch"), static_cast<uint64_t>(i)));
        SynthParams p;
        p.duration_s = duration_s;
        p.sample_rate = sample_rate;
        // Half-octave spacing with a little detune inside each class.
        p.freq_hz = 220.0 * std::pow(2.0, cls / 2.0) * rng.uniform(0.99, 1.01);
        p.amplitude = rng.uniform(0.3, 0.6);
        task.clips.push_back(synthesize_test_waveform(SynthKind::Sine, rng.next_u64(), p));
        task.labels.push_back(static_cast<double>(cls));
      }
      break;
    }
    case SyntheticTaskKind::ToneCount: {
      task.name = "tone_count";
      task.kind = TaskKind::Classification;
      task.num_classes = 4;
      for (int i = 0; i < size; ++i) {
        const int cls = i % task.num_classes;
        Rng rng(mix_seed(mix_seed(seed, "tones"), static_cast<uint64_t>(i)));
        SynthParams p;
        p.duration_s = duration_s;
        p.sample_rate = sample_rate;
        p.num_tones = cls + 1;
        p.amplitude = 0.5;
        task.clips.push_back(synthesize_test_waveform(SynthKind::ToneMixture, rng.next_u64(), p));
        task.labels.push_back(static_cast<double>(cls));
      }
      break;
    }
    case SyntheticTaskKind::AmRateRegression: {
      task.name = "am_rate_regression";
      task.kind = TaskKind::Regression;
      for (int i = 0; i < size; ++i) {
        Rng rng(mix_seed(mix_seed(seed, "am"), static_cast<uint64_t>(i)));
        SynthParams p;
        p.duration_s = duration_s;
        p.sample_rate = sample_rate;
        p.freq_hz = rng.uniform(300.0, 800.0);
        p.amplitude = 0.5;
        p.am_rate_hz = rng.uniform(2.0, 8.0);
        p.am_depth = 0.8;
        task.clips.push_back(synthesize_test_waveform(SynthKind::Sine, rng.next_u64(), p));
        task.labels.push_back(p.am_rate_hz);
      }
      break;
    }
  }
  return task;
}

}  // namespace sonamix
