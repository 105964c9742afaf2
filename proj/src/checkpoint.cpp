// Copyright 2026 Sonamix Authors
// Self-describing checkpoint container.
//
// Licensed under the Apache License, Version 2.0

#include "sonamix/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace sonamix {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'S', 'M', 'X', 'C'};
constexpr uint32_t kVersion = 1;

json encoder_to_json(const EncoderConfig& c) {
  return json{{"block_kind", to_string(c.block_kind)},
              {"global_branch", to_string(c.global_branch)},
              {"num_layers", c.num_layers},
              {"model_dim", c.model_dim},
              {"num_heads", c.num_heads},
              {"ffn_mult", c.ffn_mult},
              {"cgmlp_mult", c.cgmlp_mult},
              {"summary_mult", c.summary_mult},
              {"conv_kernel", c.conv_kernel},
              {"dropout", c.dropout},
              {"vocab_size", c.vocab_size},
              {"mel_dim", c.mel_dim},
              {"seed", c.seed}};
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig c;
  c.block_kind = parse_block_kind(j.at("block_kind").get<std::string>());
  c.global_branch = parse_global_branch(j.at("global_branch").get<std::string>());
  c.num_layers = j.at("num_layers").get<int>();
  c.model_dim = j.at("model_dim").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.ffn_mult = j.at("ffn_mult").get<double>();
  c.cgmlp_mult = j.at("cgmlp_mult").get<double>();
  c.summary_mult = j.at("summary_mult").get<double>();
  c.conv_kernel = j.at("conv_kernel").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.mel_dim = j.at("mel_dim").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

struct TensorEntry {
  std::string name;
  std::string kind;  // "param", "adam_m", "adam_v", "norm_mean", "norm_std"
  int64_t rows = 0;
  int64_t cols = 0;
};

void append_f32(std::vector<char>& payload, const MatF& m) {
  const size_t bytes = sizeof(float) * static_cast<size_t>(m.size());
  const size_t off = payload.size();
  payload.resize(off + bytes);
  std::memcpy(payload.data() + off, m.data(), bytes);
}

void append_f64(std::vector<char>& payload, const Eigen::VectorXd& v) {
  const size_t bytes = sizeof(double) * static_cast<size_t>(v.size());
  const size_t off = payload.size();
  payload.resize(off + bytes);
  std::memcpy(payload.data() + off, v.data(), bytes);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json dir = json::array();
  std::vector<char> payload;

  auto add_f32 = [&](const std::string& name, const std::string& kind, const MatF& m) {
    dir.push_back({{"name", name}, {"kind", kind}, {"rows", m.rows()}, {"cols", m.cols()}});
    append_f32(payload, m);
  };

  for (const auto& [name, m] : ckpt.params) add_f32(name, "param", m);
  if (ckpt.train.present) {
    for (const auto& [name, m] : ckpt.train.adam_m) add_f32(name, "adam_m", m);
    for (const auto& [name, m] : ckpt.train.adam_v) add_f32(name, "adam_v", m);
  }
  if (ckpt.normalizer.fitted()) {
    dir.push_back({{"name", "normalizer.mean"},
                   {"kind", "norm_mean"},
                   {"rows", ckpt.normalizer.mean.size()},
                   {"cols", 1}});
    append_f64(payload, ckpt.normalizer.mean);
    dir.push_back({{"name", "normalizer.stdev"},
                   {"kind", "norm_std"},
                   {"rows", ckpt.normalizer.stdev.size()},
                   {"cols", 1}});
    append_f64(payload, ckpt.normalizer.stdev);
  }

  json header;
  header["version"] = kVersion;
  header["encoder"] = encoder_to_json(ckpt.encoder);
  header["quantizer"] = {{"codebook_size", ckpt.quantizer.codebook_size},
                         {"codebook_dim", ckpt.quantizer.codebook_dim},
                         {"input_dim", ckpt.quantizer.input_dim},
                         {"seed", ckpt.quantizer.seed}};
  header["train"] = {{"present", ckpt.train.present},
                     {"step", ckpt.train.step},
                     {"epoch", ckpt.train.epoch},
                     {"epoch_pos", ckpt.train.epoch_pos},
                     {"loss_window", ckpt.train.loss_window}};
  header["tensors"] = dir;

  const std::string header_str = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  f.write(kMagic, 4);
  write_pod<uint32_t>(f, kVersion);
  write_pod<uint64_t>(f, header_str.size());
  write_bytes(f, header_str.data(), header_str.size());
  write_bytes(f, payload.data(), payload.size());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path);
  char magic[4];
  read_bytes(f, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw InputError(path + ": not a checkpoint");
  const auto version = read_pod<uint32_t>(f);
  if (version != kVersion) throw InputError(path + ": unsupported checkpoint version");
  const auto header_len = read_pod<uint64_t>(f);
  std::string header_str(header_len, '\0');
  read_bytes(f, header_str.data(), header_len);
  const json header = json::parse(header_str);

  Checkpoint ckpt;
  ckpt.encoder = encoder_from_json(header.at("encoder"));
  const auto& q = header.at("quantizer");
  ckpt.quantizer.codebook_size = q.at("codebook_size").get<int>();
  ckpt.quantizer.codebook_dim = q.at("codebook_dim").get<int>();
  ckpt.quantizer.input_dim = q.at("input_dim").get<int>();
  ckpt.quantizer.seed = q.at("seed").get<uint64_t>();
  const auto& tr = header.at("train");
  ckpt.train.present = tr.at("present").get<bool>();
  ckpt.train.step = tr.at("step").get<int64_t>();
  ckpt.train.epoch = tr.at("epoch").get<int64_t>();
  ckpt.train.epoch_pos = tr.at("epoch_pos").get<int64_t>();
  ckpt.train.loss_window = tr.at("loss_window").get<std::vector<double>>();

  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto kind = entry.at("kind").get<std::string>();
    const auto rows = entry.at("rows").get<int64_t>();
    const auto cols = entry.at("cols").get<int64_t>();
    if (kind == "norm_mean" || kind == "norm_std") {
      Eigen::VectorXd v(rows);
      read_bytes(f, v.data(), sizeof(double) * static_cast<size_t>(rows));
      if (kind == "norm_mean")
        ckpt.normalizer.mean = std::move(v);
      else
        ckpt.normalizer.stdev = std::move(v);
      continue;
    }
    MatF m(rows, cols);
    read_bytes(f, m.data(), sizeof(float) * static_cast<size_t>(m.size()));
    if (kind == "param")
      ckpt.params[name] = std::move(m);
    else if (kind == "adam_m")
      ckpt.train.adam_m[name] = std::move(m);
    else if (kind == "adam_v")
      ckpt.train.adam_v[name] = std::move(m);
    else
      throw InputError(path + ": unknown tensor kind " + kind);
  }
  return ckpt;
}

}  // namespace sonamix
