// Copyright 2026 Sonamix Authors
// Closed-form parameter counting per component.
//
// Licensed under the Apache License, Version 2.0

#include <sstream>

#include "sonamix/encoder.hpp"

#include <json.hpp>

namespace sonamix {

namespace {

uint64_t linear_params(int out, int in) {
  return static_cast<uint64_t>(out) * static_cast<uint64_t>(in) + static_cast<uint64_t>(out);
}

uint64_t ln_params(int dim) { return 2ull * static_cast<uint64_t>(dim); }

}  // namespace

ParameterCensus count_parameters(const EncoderConfig& cfg) {
  cfg.validate();
  const int d = cfg.model_dim;
  const int n = cfg.num_layers;
  ParameterCensus c;

  // Subsampler: channels 1 -> d/4 -> d/2 -> d -> d, kernels twice the strides.
  {
    const int ch[5] = {1, d / 4, d / 2, d, d};
    const int ks[4] = {16, 12, 10, 8};
    uint64_t sub = 0;
    for (int i = 0; i < 4; ++i) sub += linear_params(ch[i + 1], ks[i] * ch[i]);
    c.per_component["subsampler"] = sub;
  }

  uint64_t global = 0;
  if (cfg.global_branch == GlobalBranch::Attention) {
    global = 4ull * linear_params(d, d);
  } else {
    const int h = cfg.summary_hidden();
    global = linear_params(h, d) + linear_params(h, d) + linear_params(h, 2 * h) +
             linear_params(d, h);
  }
  c.per_component["global_branch"] = static_cast<uint64_t>(n) * global;

  uint64_t norms = 0;
  if (cfg.block_kind == BlockKind::Branchformer) {
    const int gh = cfg.cgmlp_hidden();
    const uint64_t cgmlp = linear_params(gh, d) +
                           (static_cast<uint64_t>(cfg.conv_kernel) * (gh / 2) + gh / 2) +
                           linear_params(d, gh / 2);
    c.per_component["cgmlp"] = static_cast<uint64_t>(n) * cgmlp;
    c.per_component["merge"] = static_cast<uint64_t>(n) * linear_params(d, 2 * d);
    norms = static_cast<uint64_t>(n) * (ln_params(d) * 2 + ln_params(gh / 2)) + ln_params(d);
  } else {
    const int f = cfg.ffn_hidden();
    const uint64_t ffn = linear_params(f, d) + linear_params(d, f);
    c.per_component["ffn"] = static_cast<uint64_t>(n) * 2ull * ffn;
    const uint64_t conv = linear_params(2 * d, d) +
                          (static_cast<uint64_t>(cfg.conv_kernel) * d + d) + linear_params(d, d);
    c.per_component["conv"] = static_cast<uint64_t>(n) * conv;
    norms = static_cast<uint64_t>(n) * 6ull * ln_params(d);
  }
  c.per_component["norms"] = norms;

  c.per_component["heads"] =
      linear_params(cfg.vocab_size, d) + linear_params(cfg.mel_dim, d);

  for (const auto& [name, count] : c.per_component) c.total += count;
  return c;
}

std::string classify_component(const EncoderConfig& cfg, const std::string& name) {
  (void)cfg;
  std::vector<std::string> segs;
  std::string cur;
  for (char ch : name) {
    if (ch == '.') {
      segs.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  segs.push_back(cur);

  for (const auto& s : segs)
    if (s.rfind("ln", 0) == 0) return "norms";
  if (segs[0] == "subsampler") return "subsampler";
  if (segs[0] == "heads") return "heads";
  if (segs[0] == "blocks" && segs.size() >= 3) {
    const std::string& mod = segs[2];
    if (mod == "attn" || mod == "summary") return "global_branch";
    if (mod == "cgmlp") return "cgmlp";
    if (mod == "merge") return "merge";
    if (mod == "ffn1" || mod == "ffn2") return "ffn";
    if (mod == "conv") return "conv";
  }
  throw ConfigError("cannot classify parameter: " + name);
}

std::string census_table(const ParameterCensus& census) {
  std::ostringstream os;
  os << "component        parameters\n";
  os << "---------------  ----------\n";
  for (const auto& [name, count] : census.per_component) {
    os << name;
    for (size_t i = name.size(); i < 17; ++i) os << ' ';
    os << count << '\n';
  }
  os << "total            " << census.total << '\n';
  return os.str();
}

std::string census_json(const EncoderConfig& cfg, const ParameterCensus& census) {
  nlohmann::json j;
  j["block_kind"] = to_string(cfg.block_kind);
  j["global_branch"] = to_string(cfg.global_branch);
  j["num_layers"] = cfg.num_layers;
  j["model_dim"] = cfg.model_dim;
  j["total"] = census.total;
  j["per_component"] = census.per_component;
  return j.dump(2);
}

}  // namespace sonamix
