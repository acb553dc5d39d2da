#include "dsgsum/encoder.hpp"

#include <limits>

namespace dsgsum {

namespace {

LinearP make_linear(const std::string& name, int64_t in, int64_t out, ParamRegistry& reg,
                    ParamGroup grp, Rng& rng) {
  LinearP p;
  p.w = reg.add(name + ".w", Tensor::xavier({in, out}, rng), grp);
  p.b = reg.add(name + ".b", Tensor::zeros({1, out}), grp);
  return p;
}

LayerNormP make_ln(const std::string& name, int64_t d, ParamRegistry& reg, ParamGroup grp) {
  LayerNormP p;
  p.gain = reg.add(name + ".gain", Tensor::full({1, d}, 1.0), grp);
  p.bias = reg.add(name + ".bias", Tensor::zeros({1, d}), grp);
  return p;
}

FfnP make_ffn(const std::string& name, int64_t d, int64_t hidden, ParamRegistry& reg,
              ParamGroup grp, Rng& rng) {
  FfnP p;
  p.fc1 = make_linear(name + ".fc1", d, hidden, reg, grp, rng);
  p.fc2 = make_linear(name + ".fc2", hidden, d, reg, grp, rng);
  return p;
}

MhaP make_mha(const std::string& name, int64_t d, int heads, ParamRegistry& reg, ParamGroup grp,
              Rng& rng) {
  MhaP p;
  p.wq = make_linear(name + ".wq", d, d, reg, grp, rng);
  p.wk = make_linear(name + ".wk", d, d, reg, grp, rng);
  p.wv = make_linear(name + ".wv", d, d, reg, grp, rng);
  p.wo = make_linear(name + ".wo", d, d, reg, grp, rng);
  p.heads = heads;
  return p;
}

LstmDirP make_lstm_dir(const std::string& name, int64_t in, int64_t hidden, ParamRegistry& reg,
                       ParamGroup grp, Rng& rng) {
  LstmDirP p;
  p.w_ih = reg.add(name + ".w_ih", Tensor::xavier({in, 4 * hidden}, rng), grp);
  p.w_hh = reg.add(name + ".w_hh", Tensor::xavier({hidden, 4 * hidden}, rng), grp);
  p.b = reg.add(name + ".b", Tensor::zeros({1, 4 * hidden}), grp);
  return p;
}

}  // namespace

EncoderParams make_encoder_params(const ModelConfig& cfg, ParamRegistry& reg, Rng& rng) {
  const auto grp = ParamGroup::Encoder;
  const int64_t d = cfg.d_model;
  EncoderParams p;
  p.tok_emb = reg.add("enc.tok_emb", Tensor::normal({cfg.vocab_size, d}, 0.02, rng), grp);
  p.seg_emb = reg.add("enc.seg_emb", Tensor::normal({2, d}, 0.02, rng), grp);
  p.pos_emb = reg.add("enc.pos_emb", Tensor::normal({cfg.max_src_len, d}, 0.02, rng), grp);
  for (int l = 0; l < cfg.n_enc_layers; ++l) {
    const std::string base = "enc.layer" + std::to_string(l);
    EncLayerP layer;
    layer.self = make_mha(base + ".self", d, cfg.n_heads, reg, grp, rng);
    layer.ln1 = make_ln(base + ".ln1", d, reg, grp);
    layer.ffn = make_ffn(base + ".ffn", d, cfg.ffn_hidden, reg, grp, rng);
    layer.ln2 = make_ln(base + ".ln2", d, reg, grp);
    p.layers.push_back(std::move(layer));
  }
  p.lstm.hidden = cfg.lstm_hidden;
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    const int64_t in = l == 0 ? d : 2 * cfg.lstm_hidden;
    const std::string base = "graph.lstm" + std::to_string(l);
    p.lstm.fwd.push_back(make_lstm_dir(base + ".fwd", in, cfg.lstm_hidden, reg, grp, rng));
    p.lstm.bwd.push_back(make_lstm_dir(base + ".bwd", in, cfg.lstm_hidden, reg, grp, rng));
  }
  p.has_lstm_proj = 2 * cfg.lstm_hidden != cfg.d_model;
  if (p.has_lstm_proj)
    p.lstm_proj = make_linear("graph.lstm_proj", 2 * cfg.lstm_hidden, d, reg, grp, rng);
  if (cfg.use_fe)
    p.fe_table = reg.add("graph.fe", Tensor::normal({cfg.max_entities, d}, 0.02, rng), grp);
  p.null_node = reg.add("graph.null_node", Tensor::normal({1, d}, 0.02, rng), grp);
  if (cfg.use_gat) {
    DSG_CHECK(d % cfg.gat_heads == 0, "d_model must be divisible by gat_heads");
    const int64_t dh = d / cfg.gat_heads;
    for (int l = 0; l < cfg.n_gat_layers; ++l) {
      const std::string base = "graph.gat" + std::to_string(l);
      GatLayerP layer;
      for (int h = 0; h < cfg.gat_heads; ++h) {
        GatHeadP head;
        head.w1 = reg.add(base + ".h" + std::to_string(h) + ".w1", Tensor::xavier({d, dh}, rng), grp);
        head.w2 = reg.add(base + ".h" + std::to_string(h) + ".w2", Tensor::xavier({d, dh}, rng), grp);
        layer.heads.push_back(std::move(head));
      }
      layer.ln = make_ln(base + ".ln", d, reg, grp);
      layer.ffn = make_ffn(base + ".ffn", d, cfg.ffn_hidden, reg, grp, rng);
      p.gat.push_back(std::move(layer));
    }
  }
  return p;
}

Tensor encode_entity_spans(const EncoderParams& p, const ModelConfig& cfg,
                           const std::vector<std::vector<int>>& node_token_ids,
                           double dropout_p) {
  DSG_CHECK(!node_token_ids.empty(), "no entity spans to encode");
  std::vector<Tensor> rows;
  rows.reserve(node_token_ids.size());
  for (const auto& ids : node_token_ids) {
    DSG_CHECK(!ids.empty(), "empty entity span");
    Tensor emb = gather_rows(p.tok_emb, ids);
    Tensor states = bilstm(p.lstm, emb, dropout_p);
    rows.push_back(slice_rows(states, states.rows() - 1, states.rows()));
  }
  Tensor e = concat_rows(rows);
  if (p.has_lstm_proj) e = linear(p.lstm_proj, e, dropout_p);
  DSG_CHECK(e.cols() == cfg.d_model, "entity representation width mismatch");
  return e;
}

Tensor add_frequency_embedding(const EncoderParams& p, const Tensor& e,
                               const std::vector<int>& ranks) {
  DSG_CHECK(p.fe_table.defined(), "frequency embedding is disabled in this configuration");
  DSG_CHECK(static_cast<int64_t>(ranks.size()) == e.rows(), "rank count mismatch");
  std::vector<uint8_t> seen(ranks.size(), 0);
  for (int r : ranks) {
    DSG_CHECK(r >= 0 && r < static_cast<int>(ranks.size()) && !seen[r],
              "ranks must form a permutation of 0.." << ranks.size() - 1);
    seen[r] = 1;
  }
  DSG_CHECK(static_cast<int64_t>(ranks.size()) <= p.fe_table.rows(),
            "rank out of frequency-embedding table range");
  return add(e, gather_rows(p.fe_table, ranks));
}

Tensor gat_attention_weights(const GatHeadP& head, const Tensor& g,
                             const std::vector<std::vector<int>>& neighbors) {
  const int64_t n = g.rows();
  DSG_CHECK(static_cast<int64_t>(neighbors.size()) == n, "neighborhood count mismatch");
  std::vector<uint8_t> mask(static_cast<size_t>(n * n), 1);
  for (int64_t i = 0; i < n; ++i) {
    bool has_self = false;
    for (int j : neighbors[i]) {
      mask[i * n + j] = 0;
      if (j == static_cast<int>(i)) has_self = true;
    }
    DSG_CHECK(has_self, "node " << i << " is missing its self-loop");
  }
  Tensor a = matmul(g, head.w1);
  Tensor b = matmul(g, head.w2);
  Tensor logits = masked_fill(matmul_nt(a, b), mask, -std::numeric_limits<double>::infinity());
  return softmax_rows(logits);
}

Tensor gat_layer(const GatLayerP& p, const Tensor& g_prev,
                 const std::vector<std::vector<int>>& neighbors, double dropout_p, double eps) {
  const int64_t n_heads = static_cast<int64_t>(p.heads.size());
  const int64_t d = g_prev.cols();
  DSG_CHECK(n_heads > 0 && d % n_heads == 0, "GAT head layout mismatch");
  const int64_t dh = d / n_heads;
  std::vector<Tensor> parts;
  parts.reserve(p.heads.size());
  for (int64_t h = 0; h < n_heads; ++h) {
    Tensor alpha = gat_attention_weights(p.heads[h], g_prev, neighbors);
    parts.push_back(matmul(alpha, slice_cols(g_prev, h * dh, (h + 1) * dh)));
  }
  Tensor aggregated = concat_cols(parts);
  Tensor normed = apply_ln(p.ln, add(g_prev, aggregated), eps);
  return apply_ffn(p.ffn, normed, dropout_p);
}

Tensor encode_graph(const EncoderParams& p, const ModelConfig& cfg, const GraphInput& graph,
                    double dropout_p) {
  if (graph.node_token_ids.empty()) return p.null_node;
  Tensor g = encode_entity_spans(p, cfg, graph.node_token_ids, dropout_p);
  if (cfg.use_fe) g = add_frequency_embedding(p, g, graph.ranks);
  if (cfg.use_gat) {
    for (const GatLayerP& layer : p.gat)
      g = gat_layer(layer, g, graph.neighbors, dropout_p, cfg.ln_eps);
  }
  return g;
}

std::vector<uint8_t> source_valid_mask(const EncodedDoc& doc) {
  std::vector<uint8_t> valid(doc.token_ids.size());
  for (size_t i = 0; i < doc.token_ids.size(); ++i)
    valid[i] = doc.token_ids[i] != Vocab::kPad ? 1 : 0;
  return valid;
}

Tensor encode_document_tokens(const EncoderParams& p, const ModelConfig& cfg,
                              const EncodedDoc& doc, double dropout_p) {
  const int64_t t = static_cast<int64_t>(doc.token_ids.size());
  DSG_CHECK(t >= 1, "cannot encode an empty document");
  DSG_CHECK(t <= p.pos_emb.rows(), "sequence of length " << t
                                       << " exceeds the position table (" << p.pos_emb.rows()
                                       << ")");
  Tensor x = add(add(gather_rows(p.tok_emb, doc.token_ids), gather_rows(p.seg_emb, doc.segment_ids)),
                 gather_rows(p.pos_emb, doc.positions));
  const std::vector<uint8_t> valid = source_valid_mask(doc);
  const std::vector<uint8_t> mask = build_attn_mask(t, t, &valid, false);
  for (const EncLayerP& layer : p.layers) {
    x = apply_ln(layer.ln1, add(x, mha(layer.self, x, x, mask, dropout_p)), cfg.ln_eps);
    x = apply_ln(layer.ln2, add(x, apply_ffn(layer.ffn, x, dropout_p)), cfg.ln_eps);
  }
  return x;
}

}  // namespace dsgsum
