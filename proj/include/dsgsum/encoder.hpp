#pragma once

#include <vector>

#include "dsgsum/config.hpp"
#include "dsgsum/corpus.hpp"
#include "dsgsum/nn.hpp"
#include "dsgsum/params.hpp"

namespace dsgsum {

struct EncLayerP {
  MhaP self;
  LayerNormP ln1;
  FfnP ffn;
  LayerNormP ln2;
};

struct GatHeadP {
  Tensor w1;  // [d, d/heads]
  Tensor w2;
};

struct GatLayerP {
  std::vector<GatHeadP> heads;
  LayerNormP ln;
  FfnP ffn;
};

struct EncoderParams {
  Tensor tok_emb;  // [V, d], shared by document tokens and entity spans
  Tensor seg_emb;  // [2, d]
  Tensor pos_emb;  // [max_src_len, d]
  std::vector<EncLayerP> layers;
  BiLstmP lstm;
  LinearP lstm_proj;  // present only when 2*lstm_hidden != d
  bool has_lstm_proj = false;
  Tensor fe_table;    // [max_entities, d] when use_fe
  Tensor null_node;   // [1, d], stands in for an empty graph
  std::vector<GatLayerP> gat;
};

EncoderParams make_encoder_params(const ModelConfig& cfg, ParamRegistry& reg, Rng& rng);

// graph side of the model, converted to ids up front
struct GraphInput {
  std::vector<std::vector<int>> node_token_ids;  // per node, vocab ids of its span
  std::vector<int> ranks;                        // frequency ranks, permutation of 0..N-1
  std::vector<std::vector<int>> neighbors;       // includes self
};

// Bi-LSTM span states: forward/backward outputs at the last word,
// projected to d when the LSTM width differs. [N, d]
Tensor encode_entity_spans(const EncoderParams& p, const ModelConfig& cfg,
                           const std::vector<std::vector<int>>& node_token_ids,
                           double dropout_p);

// g0[i] = e[i] + FE(rank[i]); applied once before the first layer
Tensor add_frequency_embedding(const EncoderParams& p, const Tensor& e,
                               const std::vector<int>& ranks);

// one head's attention distribution over neighborhoods, [N, N] with exact
// zeros outside N_i
Tensor gat_attention_weights(const GatHeadP& head, const Tensor& g,
                             const std::vector<std::vector<int>>& neighbors);

// heads aggregate their slice of the neighbor vectors, concatenated back to
// d, then residual + LayerNorm + two-layer FFN
Tensor gat_layer(const GatLayerP& p, const Tensor& g_prev,
                 const std::vector<std::vector<int>>& neighbors, double dropout_p, double eps);

// span encoder -> frequency embedding -> GAT stack; an empty graph yields
// the learned null node row
Tensor encode_graph(const EncoderParams& p, const ModelConfig& cfg, const GraphInput& graph,
                    double dropout_p);

// token + segment + position embeddings through the self-attention stack;
// positions whose token id is [PAD] are masked out of every attention
Tensor encode_document_tokens(const EncoderParams& p, const ModelConfig& cfg,
                              const EncodedDoc& doc, double dropout_p);

std::vector<uint8_t> source_valid_mask(const EncodedDoc& doc);

}  // namespace dsgsum
