// Copyright 2026 Sonamix Authors
// Trainable backbone: convolutional subsampler, Branchformer/Conformer blocks
// with a switchable attention or SummaryMixing global branch, and the token /
// mel prediction heads.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sonamix/autograd.hpp"
#include "sonamix/common.hpp"
#include "sonamix/frontend.hpp"

namespace sonamix {

enum class BlockKind { Branchformer, Conformer };
enum class GlobalBranch { Attention, SummaryMixing };

BlockKind parse_block_kind(const std::string& name);
GlobalBranch parse_global_branch(const std::string& name);
std::string to_string(BlockKind k);
std::string to_string(GlobalBranch b);

struct EncoderConfig {
  BlockKind block_kind = BlockKind::Branchformer;
  GlobalBranch global_branch = GlobalBranch::SummaryMixing;
  int num_layers = 2;
  int model_dim = 128;
  int num_heads = 8;         // attention only
  double ffn_mult = 4.0;     // Conformer macaron FFN hidden = ffn_mult * dim
  double cgmlp_mult = 3.0;   // Branchformer local branch hidden = cgmlp_mult * dim
  double summary_mult = 0.5; // summary/local widths = summary_mult * dim
  int conv_kernel = 31;
  double dropout = 0.1;
  int vocab_size = 8192;
  int mel_dim = 512;
  uint64_t seed = 0;

  int ffn_hidden() const { return static_cast<int>(std::lround(ffn_mult * model_dim)); }
  int cgmlp_hidden() const { return static_cast<int>(std::lround(cgmlp_mult * model_dim)); }
  int summary_hidden() const { return static_cast<int>(std::lround(summary_mult * model_dim)); }
  int head_dim() const { return model_dim / num_heads; }

  void validate() const;
};

// Subsampler geometry: four strided 1-D convolutions with stride product 960,
// so 24 kHz audio lands on the 25 Hz feature grid. Each stage produces exactly
// floor(len / stride) frames, matching the frontend's floor-division chain for
// every input length.
inline constexpr int kSubsamplerStrides[4] = {8, 6, 5, 4};
inline constexpr int kSubsamplerStride = 960;

// Number of 25 Hz frames the model produces for a waveform of n samples.
inline long long subsampled_length(long long num_samples) {
  return num_samples / kSubsamplerStride;
}

// ---- parameter census --------------------------------------------------------

struct ParameterCensus {
  uint64_t total = 0;
  std::map<std::string, uint64_t> per_component;
};

// Exact trainable-scalar count per component, from closed-form arithmetic on
// the config; never instantiates a model.
ParameterCensus count_parameters(const EncoderConfig& cfg);

// Maps a canonical parameter path to its census component.
std::string classify_component(const EncoderConfig& cfg, const std::string& name);

std::string census_table(const ParameterCensus& census);
std::string census_json(const EncoderConfig& cfg, const ParameterCensus& census);

// ---- per-module parameter bundles ---------------------------------------------

namespace enc {

using ag::Graph;
using ag::Var;

template <typename S>
struct LnVars {
  Var<S> gamma, beta;
};

template <typename S>
struct AttentionVars {
  Var<S> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename S>
struct SummaryVars {
  Var<S> wf, bf, ws, bs, wc1, bc1, wc2, bc2;
};

template <typename S>
struct CgMlpVars {
  Var<S> up_w, up_b;
  LnVars<S> ln_gate;
  Var<S> dw_w, dw_b, down_w, down_b;
};

template <typename S>
struct FfnVars {
  Var<S> w1, b1, w2, b2;
};

template <typename S>
struct ConvModuleVars {
  Var<S> up_w, up_b, dw_w, dw_b;
  LnVars<S> ln_mid;
  Var<S> down_w, down_b;
};

template <typename S>
Var<S> layer_norm(Graph<S>& g, Var<S> x, const LnVars<S>& ln) {
  return g.layer_norm(x, ln.gamma, ln.beta);
}

// Scaled-dot-product multi-head self-attention with rotary queries/keys.
template <typename S>
Var<S> mhsa_forward(Graph<S>& g, Var<S> x, const AttentionVars<S>& p, int num_heads,
                    bool use_rotary, double dropout_p) {
  const Eigen::Index dim = x->value.cols();
  if (dim % num_heads != 0) throw ConfigError("mhsa: model_dim not divisible by num_heads");
  const Eigen::Index dh = dim / num_heads;
  auto q = g.linear(x, p.wq, p.bq);
  auto k = g.linear(x, p.wk, p.bk);
  auto v = g.linear(x, p.wv, p.bv);
  const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  Var<S> heads_out;
  for (int h = 0; h < num_heads; ++h) {
    auto qh = g.slice_cols(q, h * dh, dh);
    auto kh = g.slice_cols(k, h * dh, dh);
    auto vh = g.slice_cols(v, h * dh, dh);
    if (use_rotary) {
      qh = g.rotary(qh);
      kh = g.rotary(kh);
    }
    // 1/sqrt(d) applied to the queries, not the T x T score matrix.
    auto scores = g.matmul_nt(g.scale(qh, inv_sqrt), kh);
    auto attn = g.softmax_rows(scores);
    auto oh = g.matmul(attn, vh);
    heads_out = h == 0 ? oh : g.concat_cols(heads_out, oh);
  }
  return g.dropout(g.linear(heads_out, p.wo, p.bo), dropout_p);
}

// Linear-time global branch: pointwise local transform f, time-averaged
// summary s̄, and a combiner MLP on concat(f(x_t), s̄).
template <typename S>
Var<S> summary_mixing_forward(Graph<S>& g, Var<S> x, const SummaryVars<S>& p, double dropout_p) {
  if (x->value.rows() == 0) throw InputError("summary_mixing: empty sequence");
  auto f = g.gelu(g.linear(x, p.wf, p.bf));
  auto s = g.gelu(g.linear(x, p.ws, p.bs));
  auto sbar = g.mean_rows(s);
  auto cat = g.concat_cols(f, g.broadcast_row(sbar, x->value.rows()));
  auto h = g.gelu(g.linear(cat, p.wc1, p.bc1));
  return g.dropout(g.linear(h, p.wc2, p.bc2), dropout_p);
}

// Convolutional gating branch: expand, split, gate one half with a depthwise
// temporal convolution of the other, project back down.
template <typename S>
Var<S> cgmlp_forward(Graph<S>& g, Var<S> x, const CgMlpVars<S>& p, double dropout_p) {
  auto z = g.gelu(g.linear(x, p.up_w, p.up_b));
  const Eigen::Index half = z->value.cols() / 2;
  auto a = g.slice_cols(z, 0, half);
  auto b = g.slice_cols(z, half, half);
  auto bn = layer_norm(g, b, p.ln_gate);
  auto bc = g.depthwise_conv(bn, p.dw_w, p.dw_b);
  auto gated = g.mul(a, bc);
  return g.dropout(g.linear(gated, p.down_w, p.down_b), dropout_p);
}

template <typename S>
Var<S> ffn_forward(Graph<S>& g, Var<S> x, const FfnVars<S>& p, double dropout_p) {
  return g.dropout(g.linear(g.gelu(g.linear(x, p.w1, p.b1)), p.w2, p.b2), dropout_p);
}

// Conformer convolution module: pointwise expand, GLU gate, depthwise
// convolution, layer norm, SiLU, pointwise project.
template <typename S>
Var<S> conv_module_forward(Graph<S>& g, Var<S> x, const ConvModuleVars<S>& p, double dropout_p) {
  auto z = g.linear(x, p.up_w, p.up_b);
  const Eigen::Index half = z->value.cols() / 2;
  auto a = g.slice_cols(z, 0, half);
  auto b = g.slice_cols(z, half, half);
  auto gated = g.mul(a, g.sigmoid(b));
  auto c = g.depthwise_conv(gated, p.dw_w, p.dw_b);
  auto act = g.silu(layer_norm(g, c, p.ln_mid));
  return g.dropout(g.linear(act, p.down_w, p.down_b), dropout_p);
}

}  // namespace enc

// ---- full model -----------------------------------------------------------------

template <typename S>
struct ModelOutputVars {
  ag::Var<S> token_logits;  // T x vocab_size
  ag::Var<S> mel_logits;    // T x mel_dim
  ag::Var<S> hidden;        // T x model_dim, after the final norm
};

template <typename S>
class EncoderModel {
 public:
  using VarMap = std::map<std::string, ag::Var<S>>;

  explicit EncoderModel(const EncoderConfig& cfg);

  const EncoderConfig& config() const { return cfg_; }
  std::map<std::string, Mat<S>>& params() { return params_; }
  const std::map<std::string, Mat<S>>& params() const { return params_; }

  uint64_t num_scalars() const;

  // Creates parameter leaf nodes on the graph.
  VarMap bind(ag::Graph<S>& g) const;

  // Full forward pass from a (possibly masked) waveform.
  ModelOutputVars<S> forward(ag::Graph<S>& g, const VarMap& v, const Waveform& w) const;

  // Subsampler only: waveform to T x model_dim hidden frames at 25 Hz.
  ag::Var<S> subsample(ag::Graph<S>& g, const VarMap& v, const Waveform& w) const;

  // One encoder block on an existing hidden sequence.
  ag::Var<S> block_forward(ag::Graph<S>& g, const VarMap& v, int layer, ag::Var<S> h) const;

  // The global branch of one block (benchmark entry point).
  ag::Var<S> global_branch_forward(ag::Graph<S>& g, const VarMap& v, int layer,
                                   ag::Var<S> h) const;

 private:
  EncoderConfig cfg_;
  std::map<std::string, Mat<S>> params_;

  void init_params();
  void add_linear(const std::string& name, int out, int in);
  void add_ln(const std::string& name, int dim);

  enc::LnVars<S> ln_vars(const VarMap& v, const std::string& prefix) const;
  enc::AttentionVars<S> attn_vars(const VarMap& v, int layer) const;
  enc::SummaryVars<S> summary_vars(const VarMap& v, int layer) const;
  enc::CgMlpVars<S> cgmlp_vars(const VarMap& v, int layer) const;
  enc::FfnVars<S> ffn_vars(const VarMap& v, int layer, int which) const;
  enc::ConvModuleVars<S> conv_vars(const VarMap& v, int layer) const;
};

extern template class EncoderModel<float>;
extern template class EncoderModel<double>;

}  // namespace sonamix
