#pragma once

#include <optional>
#include <vector>

#include "dsgsum/config.hpp"
#include "dsgsum/nn.hpp"
#include "dsgsum/params.hpp"

namespace dsgsum {

struct DecLayerP {
  MhaP self;
  LayerNormP ln1;
  MhaP cross;
  LayerNormP ln2;
  FfnP ffn;
  LayerNormP ln3;
};

struct DecoderParams {
  Tensor tok_emb;  // [V, d]
  Tensor pos_emb;  // [max_tgt_len + 2, d]
  std::vector<DecLayerP> layers;

  // context-to-entity fusion (use_context2entity)
  Tensor w_s, w_g, w_sg;  // [1, d] similarity weights
  Tensor w_fuse;          // [3d, d], or [4d, d] with entity2context
  Tensor out_proj;        // [d, V]

  Tensor ti_global;  // [max_tgt_len + 2, max_src_len] (use_token_independent)

  // copy mechanism (use_copy)
  Tensor copy_w;       // [1, 2d] over [s^g; c]
  Tensor copy_gate_s;  // [1, d]
  Tensor copy_gate_c;  // [1, d]
  Tensor copy_gate_b;  // [1, 1]

  // graph cross-attention fusion (use_graph_cross_attend)
  MhaP gx_attn;
  LayerNormP gx_ln1;
  FfnP gx_ffn;
  LayerNormP gx_ln2;
};

DecoderParams make_decoder_params(const ModelConfig& cfg, ParamRegistry& reg, Rng& rng);

// entity text for the copy path: node tokens joined by [SEP], encoded by the
// document encoder
struct CopyText {
  Tensor states;                // [Lc, d]
  std::vector<int> vocab_ids;   // per token
};

// M[t,i] = w_s.s_t + w_g.g_i + w_sg.(s_t o g_i)
Tensor context2entity_similarity(const Tensor& w_s, const Tensor& w_g, const Tensor& w_sg,
                                 const Tensor& s, const Tensor& g);

struct C2eAttention {
  Tensor weights;  // a [T, I], rows sum to 1
  Tensor entity;   // g~ [T, d]
};
C2eAttention context2entity_attend(const Tensor& sim, const Tensor& g);

// s^g = [s; g~; s o g~] W
Tensor fuse_graph_state(const Tensor& w_fuse, const Tensor& s, const Tensor& g_tilde);

// distribution over the vocabulary with the [PAD] column masked out
Tensor project_vocab(const Tensor& out_proj, const Tensor& s_fused, int pad_id);

// (softmax(QK^T/sqrt(dk)) + G) V  -- nn::attend with the additive matrix
Tensor token_independent_attend(const Tensor& q, const Tensor& k, const Tensor& v,
                                const Tensor& g);

// b_t = softmax over rows 1..t of the per-row column max of M;
// s~_t mixes only states 1..t
Tensor entity2context_attend(const Tensor& sim, const Tensor& s);

// pointer-generator mix of P_vocab with the copy distribution over the
// entity-text tokens
Tensor copy_distribution(const DecoderParams& p, const Tensor& s_fused, const CopyText& copy,
                         const Tensor& p_vocab, int64_t vocab_size, double dropout_p);

// s^g = Transformer(s, g, g): cross-attention block over graph nodes
Tensor graph_cross_attend(const DecoderParams& p, const ModelConfig& cfg, const Tensor& s,
                          const Tensor& g, double dropout_p);

struct DecodeTrace {
  Tensor s_self;   // s^d after the final self-attention sublayer
  Tensor s;        // decoder stack output
  Tensor sim;      // M (when context2entity is active)
  Tensor attn;     // a
  Tensor g_tilde;
  Tensor s_fused;  // s^g
  Tensor p_vocab;  // [T, V]
};

DecodeTrace decode(const DecoderParams& p, const ModelConfig& cfg,
                   const std::vector<int>& target_ids, const Tensor& h,
                   const std::vector<uint8_t>& src_valid, const Tensor& g, double dropout_p,
                   const std::optional<CopyText>& copy = std::nullopt);

}  // namespace dsgsum
