// Copyright 2026 Sonamix Authors
// Encoder model construction and forward passes.
//
// Licensed under the Apache License, Version 2.0

#include "sonamix/encoder.hpp"

#include <cmath>

#include "sonamix/rng.hpp"

namespace sonamix {

BlockKind parse_block_kind(const std::string& name) {
  if (name == "branchformer") return BlockKind::Branchformer;
  if (name == "conformer") return BlockKind::Conformer;
  throw ConfigError("unknown block kind: " + name);
}

GlobalBranch parse_global_branch(const std::string& name) {
  if (name == "attention") return GlobalBranch::Attention;
  if (name == "summary_mixing") return GlobalBranch::SummaryMixing;
  throw ConfigError("unknown global branch: " + name);
}

std::string to_string(BlockKind k) {
  return k == BlockKind::Branchformer ? "branchformer" : "conformer";
}

std::string to_string(GlobalBranch b) {
  return b == GlobalBranch::Attention ? "attention" : "summary_mixing";
}

void EncoderConfig::validate() const {
  if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
  if (model_dim < 4 || model_dim % 4 != 0)
    throw ConfigError("model_dim must be a positive multiple of 4");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (mel_dim < 1) throw ConfigError("mel_dim must be >= 1");
  if (conv_kernel < 1 || conv_kernel % 2 == 0) throw ConfigError("conv_kernel must be odd");
  if (cgmlp_hidden() < 2 || cgmlp_hidden() % 2 != 0)
    throw ConfigError("cgmlp hidden width must be even");
  if (summary_hidden() < 1) throw ConfigError("summary hidden width must be >= 1");
  if (ffn_hidden() < 1) throw ConfigError("ffn hidden width must be >= 1");
  if (global_branch == GlobalBranch::Attention) {
    if (num_heads < 1 || model_dim % num_heads != 0)
      throw ConfigError("model_dim must be divisible by num_heads");
    if (head_dim() % 2 != 0) throw ConfigError("head dimension must be even for rotary encoding");
  }
}

namespace {

struct SubsamplerStage {
  int in_ch, out_ch, kernel, stride;
};

std::vector<SubsamplerStage> subsampler_stages(int model_dim) {
  const int d = model_dim;
  return {
      {1, d / 4, 16, 8},
      {d / 4, d / 2, 12, 6},
      {d / 2, d, 10, 5},
      {d, d, 8, 4},
  };
}

}  // namespace

template <typename S>
EncoderModel<S>::EncoderModel(const EncoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  init_params();
}

template <typename S>
void EncoderModel<S>::add_linear(const std::string& name, int out, int in) {
  Rng rng(mix_seed(cfg_.seed, name));
  params_[name + ".weight"] = xavier_uniform<S>(out, in, in, out, rng);
  params_[name + ".bias"] = Mat<S>::Zero(1, out);
}

template <typename S>
void EncoderModel<S>::add_ln(const std::string& name, int dim) {
  params_[name + ".gamma"] = Mat<S>::Ones(1, dim);
  params_[name + ".beta"] = Mat<S>::Zero(1, dim);
}

template <typename S>
void EncoderModel<S>::init_params() {
  const int d = cfg_.model_dim;

  for (size_t i = 0; i < 4; ++i) {
    const auto st = subsampler_stages(d)[i];
    add_linear("subsampler.conv" + std::to_string(i), st.out_ch, st.kernel * st.in_ch);
  }

  for (int b = 0; b < cfg_.num_layers; ++b) {
    const std::string bp = "blocks." + std::to_string(b) + ".";

    if (cfg_.global_branch == GlobalBranch::Attention) {
      add_linear(bp + "attn.q", d, d);
      add_linear(bp + "attn.k", d, d);
      add_linear(bp + "attn.v", d, d);
      add_linear(bp + "attn.o", d, d);
    } else {
      const int h = cfg_.summary_hidden();
      add_linear(bp + "summary.f", h, d);
      add_linear(bp + "summary.s", h, d);
      add_linear(bp + "summary.c1", h, 2 * h);
      add_linear(bp + "summary.c2", d, h);
    }

    if (cfg_.block_kind == BlockKind::Branchformer) {
      const int gh = cfg_.cgmlp_hidden();
      add_ln(bp + "ln_global", d);
      add_ln(bp + "ln_local", d);
      add_linear(bp + "cgmlp.up", gh, d);
      add_ln(bp + "cgmlp.ln_gate", gh / 2);
      {
        Rng rng(mix_seed(cfg_.seed, bp + "cgmlp.dw"));
        params_[bp + "cgmlp.dw.weight"] = xavier_uniform<S>(cfg_.conv_kernel, gh / 2,
                                                            cfg_.conv_kernel, cfg_.conv_kernel, rng);
        params_[bp + "cgmlp.dw.bias"] = Mat<S>::Zero(1, gh / 2);
      }
      add_linear(bp + "cgmlp.down", d, gh / 2);
      add_linear(bp + "merge", d, 2 * d);
    } else {
      const int f = cfg_.ffn_hidden();
      add_ln(bp + "ln_ffn1", d);
      add_linear(bp + "ffn1.w1", f, d);
      add_linear(bp + "ffn1.w2", d, f);
      add_ln(bp + "ln_global", d);
      add_ln(bp + "ln_conv", d);
      add_linear(bp + "conv.up", 2 * d, d);
      {
        Rng rng(mix_seed(cfg_.seed, bp + "conv.dw"));
        params_[bp + "conv.dw.weight"] =
            xavier_uniform<S>(cfg_.conv_kernel, d, cfg_.conv_kernel, cfg_.conv_kernel, rng);
        params_[bp + "conv.dw.bias"] = Mat<S>::Zero(1, d);
      }
      add_ln(bp + "conv.ln_mid", d);
      add_linear(bp + "conv.down", d, d);
      add_ln(bp + "ln_ffn2", d);
      add_linear(bp + "ffn2.w1", f, d);
      add_linear(bp + "ffn2.w2", d, f);
      add_ln(bp + "ln_out", d);
    }
  }

  if (cfg_.block_kind == BlockKind::Branchformer) add_ln("ln_final", d);
  add_linear("heads.token", cfg_.vocab_size, d);
  add_linear("heads.mel", cfg_.mel_dim, d);
}

template <typename S>
uint64_t EncoderModel<S>::num_scalars() const {
  uint64_t n = 0;
  for (const auto& [name, m] : params_) n += static_cast<uint64_t>(m.size());
  return n;
}

template <typename S>
typename EncoderModel<S>::VarMap EncoderModel<S>::bind(ag::Graph<S>& g) const {
  VarMap v;
  for (const auto& [name, m] : params_) v[name] = g.param(m);
  return v;
}

namespace {

template <typename S>
ag::Var<S> lookup(const std::map<std::string, ag::Var<S>>& v, const std::string& name) {
  auto it = v.find(name);
  if (it == v.end()) throw ConfigError("missing parameter: " + name);
  return it->second;
}

}  // namespace

template <typename S>
enc::LnVars<S> EncoderModel<S>::ln_vars(const VarMap& v, const std::string& prefix) const {
  return {lookup(v, prefix + ".gamma"), lookup(v, prefix + ".beta")};
}

template <typename S>
enc::AttentionVars<S> EncoderModel<S>::attn_vars(const VarMap& v, int layer) const {
  const std::string p = "blocks." + std::to_string(layer) + ".attn.";
  return {lookup(v, p + "q.weight"), lookup(v, p + "q.bias"), lookup(v, p + "k.weight"),
          lookup(v, p + "k.bias"), lookup(v, p + "v.weight"), lookup(v, p + "v.bias"),
          lookup(v, p + "o.weight"), lookup(v, p + "o.bias")};
}

template <typename S>
enc::SummaryVars<S> EncoderModel<S>::summary_vars(const VarMap& v, int layer) const {
  const std::string p = "blocks." + std::to_string(layer) + ".summary.";
  return {lookup(v, p + "f.weight"),  lookup(v, p + "f.bias"),  lookup(v, p + "s.weight"),
          lookup(v, p + "s.bias"),    lookup(v, p + "c1.weight"), lookup(v, p + "c1.bias"),
          lookup(v, p + "c2.weight"), lookup(v, p + "c2.bias")};
}

template <typename S>
enc::CgMlpVars<S> EncoderModel<S>::cgmlp_vars(const VarMap& v, int layer) const {
  const std::string p = "blocks." + std::to_string(layer) + ".cgmlp.";
  enc::CgMlpVars<S> c;
  c.up_w = lookup(v, p + "up.weight");
  c.up_b = lookup(v, p + "up.bias");
  c.ln_gate = ln_vars(v, p + "ln_gate");
  c.dw_w = lookup(v, p + "dw.weight");
  c.dw_b = lookup(v, p + "dw.bias");
  c.down_w = lookup(v, p + "down.weight");
  c.down_b = lookup(v, p + "down.bias");
  return c;
}

template <typename S>
enc::FfnVars<S> EncoderModel<S>::ffn_vars(const VarMap& v, int layer, int which) const {
  const std::string p =
      "blocks." + std::to_string(layer) + ".ffn" + std::to_string(which) + ".";
  return {lookup(v, p + "w1.weight"), lookup(v, p + "w1.bias"), lookup(v, p + "w2.weight"),
          lookup(v, p + "w2.bias")};
}

template <typename S>
enc::ConvModuleVars<S> EncoderModel<S>::conv_vars(const VarMap& v, int layer) const {
  const std::string p = "blocks." + std::to_string(layer) + ".conv.";
  enc::ConvModuleVars<S> c;
  c.up_w = lookup(v, p + "up.weight");
  c.up_b = lookup(v, p + "up.bias");
  c.dw_w = lookup(v, p + "dw.weight");
  c.dw_b = lookup(v, p + "dw.bias");
  c.ln_mid = ln_vars(v, p + "ln_mid");
  c.down_w = lookup(v, p + "down.weight");
  c.down_b = lookup(v, p + "down.bias");
  return c;
}

template <typename S>
ag::Var<S> EncoderModel<S>::subsample(ag::Graph<S>& g, const VarMap& v, const Waveform& w) const {
  if (w.samples.size() < static_cast<size_t>(kSubsamplerStride))
    throw InputError("waveform shorter than the subsampler receptive field");
  Mat<S> x(static_cast<Eigen::Index>(w.samples.size()), 1);
  for (size_t i = 0; i < w.samples.size(); ++i)
    x(static_cast<Eigen::Index>(i), 0) = static_cast<S>(w.samples[i]);
  auto h = g.input(std::move(x));
  const auto stages = subsampler_stages(cfg_.model_dim);
  for (size_t i = 0; i < stages.size(); ++i) {
    const auto& st = stages[i];
    // pad total = stride with kernel = 2 * stride keeps out_len = floor(len / stride)
    const int pad_l = st.stride / 2;
    const int pad_r = st.stride - pad_l;
    auto patches = g.im2col(h, st.kernel, st.stride, pad_l, pad_r);
    const std::string name = "subsampler.conv" + std::to_string(i);
    h = g.linear(patches, lookup(v, name + ".weight"), lookup(v, name + ".bias"));
    if (i + 1 < stages.size()) h = g.gelu(h);
  }
  return h;
}

template <typename S>
ag::Var<S> EncoderModel<S>::global_branch_forward(ag::Graph<S>& g, const VarMap& v, int layer,
                                                  ag::Var<S> h) const {
  auto x = enc::layer_norm(g, h, ln_vars(v, "blocks." + std::to_string(layer) + ".ln_global"));
  if (cfg_.global_branch == GlobalBranch::Attention)
    return enc::mhsa_forward(g, x, attn_vars(v, layer), cfg_.num_heads, /*use_rotary=*/true,
                             cfg_.dropout);
  return enc::summary_mixing_forward(g, x, summary_vars(v, layer), cfg_.dropout);
}

template <typename S>
ag::Var<S> EncoderModel<S>::block_forward(ag::Graph<S>& g, const VarMap& v, int layer,
                                          ag::Var<S> h) const {
  const std::string bp = "blocks." + std::to_string(layer) + ".";
  if (cfg_.block_kind == BlockKind::Branchformer) {
    auto global_out = global_branch_forward(g, v, layer, h);
    auto local_in = enc::layer_norm(g, h, ln_vars(v, bp + "ln_local"));
    auto local_out = enc::cgmlp_forward(g, local_in, cgmlp_vars(v, layer), cfg_.dropout);
    auto merged = g.linear(g.concat_cols(global_out, local_out), lookup(v, bp + "merge.weight"),
                           lookup(v, bp + "merge.bias"));
    return g.add(h, merged);
  }
  // Conformer: macaron half-FFN, global branch, convolution, half-FFN, norm.
  auto x1 = g.add(h, g.scale(enc::ffn_forward(g, enc::layer_norm(g, h, ln_vars(v, bp + "ln_ffn1")),
                                              ffn_vars(v, layer, 1), cfg_.dropout),
                             S(0.5)));
  auto x2 = g.add(x1, global_branch_forward(g, v, layer, x1));
  auto x3 = g.add(x2, enc::conv_module_forward(
                          g, enc::layer_norm(g, x2, ln_vars(v, bp + "ln_conv")),
                          conv_vars(v, layer), cfg_.dropout));
  auto x4 = g.add(x3, g.scale(enc::ffn_forward(g, enc::layer_norm(g, x3, ln_vars(v, bp + "ln_ffn2")),
                                               ffn_vars(v, layer, 2), cfg_.dropout),
                              S(0.5)));
  return enc::layer_norm(g, x4, ln_vars(v, bp + "ln_out"));
}

#ifndef NDEBUG
namespace {
template <typename S>
void assert_finite(const ag::Var<S>& h, int layer) {
  if (!h->value.allFinite())
    throw TrainingError("non-finite hidden state after block " + std::to_string(layer));
}
}  // namespace
#endif

template <typename S>
ModelOutputVars<S> EncoderModel<S>::forward(ag::Graph<S>& g, const VarMap& v,
                                            const Waveform& w) const {
  auto h = subsample(g, v, w);
  for (int b = 0; b < cfg_.num_layers; ++b) {
    h = block_forward(g, v, b, h);
#ifndef NDEBUG
    assert_finite(h, b);
#endif
  }
  if (cfg_.block_kind == BlockKind::Branchformer) h = enc::layer_norm(g, h, ln_vars(v, "ln_final"));
  ModelOutputVars<S> out;
  out.hidden = h;
  out.token_logits = g.linear(h, lookup(v, "heads.token.weight"), lookup(v, "heads.token.bias"));
  out.mel_logits = g.linear(h, lookup(v, "heads.mel.weight"), lookup(v, "heads.mel.bias"));
  return out;
}

template class EncoderModel<float>;
template class EncoderModel<double>;

}  // namespace sonamix
