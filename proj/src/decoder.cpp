#include "dsgsum/decoder.hpp"

#include <limits>

#include "dsgsum/corpus.hpp"

namespace dsgsum {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

LinearP make_linear(const std::string& name, int64_t in, int64_t out, ParamRegistry& reg,
                    Rng& rng) {
  LinearP p;
  p.w = reg.add(name + ".w", Tensor::xavier({in, out}, rng), ParamGroup::Decoder);
  p.b = reg.add(name + ".b", Tensor::zeros({1, out}), ParamGroup::Decoder);
  return p;
}

LayerNormP make_ln(const std::string& name, int64_t d, ParamRegistry& reg) {
  LayerNormP p;
  p.gain = reg.add(name + ".gain", Tensor::full({1, d}, 1.0), ParamGroup::Decoder);
  p.bias = reg.add(name + ".bias", Tensor::zeros({1, d}), ParamGroup::Decoder);
  return p;
}

FfnP make_ffn(const std::string& name, int64_t d, int64_t hidden, ParamRegistry& reg, Rng& rng) {
  FfnP p;
  p.fc1 = make_linear(name + ".fc1", d, hidden, reg, rng);
  p.fc2 = make_linear(name + ".fc2", hidden, d, reg, rng);
  return p;
}

MhaP make_mha(const std::string& name, int64_t d, int heads, ParamRegistry& reg, Rng& rng) {
  MhaP p;
  p.wq = make_linear(name + ".wq", d, d, reg, rng);
  p.wk = make_linear(name + ".wk", d, d, reg, rng);
  p.wv = make_linear(name + ".wv", d, d, reg, rng);
  p.wo = make_linear(name + ".wo", d, d, reg, rng);
  p.heads = heads;
  return p;
}

}  // namespace

DecoderParams make_decoder_params(const ModelConfig& cfg, ParamRegistry& reg, Rng& rng) {
  const int64_t d = cfg.d_model;
  DecoderParams p;
  p.tok_emb = reg.add("dec.tok_emb", Tensor::normal({cfg.vocab_size, d}, 0.02, rng),
                      ParamGroup::Decoder);
  p.pos_emb = reg.add("dec.pos_emb", Tensor::normal({cfg.max_tgt_len + 2, d}, 0.02, rng),
                      ParamGroup::Decoder);
  for (int l = 0; l < cfg.n_dec_layers; ++l) {
    const std::string base = "dec.layer" + std::to_string(l);
    DecLayerP layer;
    layer.self = make_mha(base + ".self", d, cfg.n_heads, reg, rng);
    layer.ln1 = make_ln(base + ".ln1", d, reg);
    layer.cross = make_mha(base + ".cross", d, cfg.n_heads, reg, rng);
    layer.ln2 = make_ln(base + ".ln2", d, reg);
    layer.ffn = make_ffn(base + ".ffn", d, cfg.ffn_hidden, reg, rng);
    layer.ln3 = make_ln(base + ".ln3", d, reg);
    p.layers.push_back(std::move(layer));
  }
  if (cfg.use_context2entity) {
    p.w_s = reg.add("dec.fuse.w_s", Tensor::xavier({1, d}, rng), ParamGroup::Decoder);
    p.w_g = reg.add("dec.fuse.w_g", Tensor::xavier({1, d}, rng), ParamGroup::Decoder);
    p.w_sg = reg.add("dec.fuse.w_sg", Tensor::xavier({1, d}, rng), ParamGroup::Decoder);
    const int64_t parts = cfg.use_entity2context ? 4 : 3;
    p.w_fuse = reg.add("dec.fuse.w", Tensor::xavier({parts * d, d}, rng), ParamGroup::Decoder);
  }
  p.out_proj = reg.add("dec.out_proj", Tensor::xavier({d, cfg.vocab_size}, rng),
                       ParamGroup::Decoder);
  if (cfg.use_token_independent) {
    Tensor g0 = Tensor::normal({cfg.max_tgt_len + 2, cfg.max_src_len}, 0.02, rng);
    if (cfg.token_independent_trainable) {
      p.ti_global = reg.add("dec.ti_global", g0, ParamGroup::Decoder);
    } else {
      p.ti_global = g0;  // fixed random weights, excluded from training
    }
  }
  if (cfg.use_copy) {
    p.copy_w = reg.add("dec.copy.w", Tensor::xavier({1, 2 * d}, rng), ParamGroup::Decoder);
    p.copy_gate_s = reg.add("dec.copy.gate_s", Tensor::xavier({1, d}, rng), ParamGroup::Decoder);
    p.copy_gate_c = reg.add("dec.copy.gate_c", Tensor::xavier({1, d}, rng), ParamGroup::Decoder);
    p.copy_gate_b = reg.add("dec.copy.gate_b", Tensor::zeros({1, 1}), ParamGroup::Decoder);
  }
  if (cfg.use_graph_cross_attend) {
    p.gx_attn = make_mha("dec.gx.attn", d, cfg.n_heads, reg, rng);
    p.gx_ln1 = make_ln("dec.gx.ln1", d, reg);
    p.gx_ffn = make_ffn("dec.gx.ffn", d, cfg.ffn_hidden, reg, rng);
    p.gx_ln2 = make_ln("dec.gx.ln2", d, reg);
  }
  return p;
}

Tensor context2entity_similarity(const Tensor& w_s, const Tensor& w_g, const Tensor& w_sg,
                                 const Tensor& s, const Tensor& g) {
  const int64_t t = s.rows(), i = g.rows();
  Tensor s_term = matmul_nt(s, w_s);                         // [T,1]
  Tensor g_term = transpose(matmul_nt(g, w_g));              // [1,I]
  Tensor sg_term = matmul_nt(mul(s, w_sg), g);               // [T,I]
  Tensor m = add(add(sg_term, g_term), s_term);              // broadcasts [1,I] then [T,1]
  DSG_CHECK(m.rows() == t && m.cols() == i, "similarity matrix shape mismatch");
  return m;
}

C2eAttention context2entity_attend(const Tensor& sim, const Tensor& g) {
  C2eAttention out;
  out.weights = softmax_rows(sim);
  out.entity = matmul(out.weights, g);
  return out;
}

Tensor fuse_graph_state(const Tensor& w_fuse, const Tensor& s, const Tensor& g_tilde) {
  return matmul(concat_cols({s, g_tilde, mul(s, g_tilde)}), w_fuse);
}

Tensor project_vocab(const Tensor& out_proj, const Tensor& s_fused, int pad_id) {
  Tensor logits = matmul(s_fused, out_proj);
  const int64_t t = logits.rows(), v = logits.cols();
  std::vector<uint8_t> mask(static_cast<size_t>(t * v), 0);
  if (pad_id >= 0) {
    for (int64_t r = 0; r < t; ++r) mask[r * v + pad_id] = 1;
  }
  return softmax_rows(masked_fill(logits, mask, kNegInf));
}

Tensor token_independent_attend(const Tensor& q, const Tensor& k, const Tensor& v,
                                const Tensor& g) {
  DSG_CHECK(g.rows() == q.rows() && g.cols() == k.rows(),
            "token-independent matrix must be sliced to [T_q, T_k]");
  const std::vector<uint8_t> mask(static_cast<size_t>(q.rows() * k.rows()), 0);
  return attend(q, k, v, mask, &g);
}

Tensor entity2context_attend(const Tensor& sim, const Tensor& s) {
  const int64_t t = sim.rows();
  DSG_CHECK(s.rows() == t, "state/similarity row mismatch");
  Tensor m = rowmax(sim);                         // [T,1]
  Tensor scores = matmul(Tensor::full({t, 1}, 1.0), transpose(m));  // [T,T], row i = m^T
  std::vector<uint8_t> future(static_cast<size_t>(t * t), 0);
  for (int64_t i = 0; i < t; ++i)
    for (int64_t j = i + 1; j < t; ++j) future[i * t + j] = 1;
  Tensor b = softmax_rows(masked_fill(scores, future, kNegInf));
  return matmul(b, s);
}

Tensor copy_distribution(const DecoderParams& p, const Tensor& s_fused, const CopyText& copy,
                         const Tensor& p_vocab, int64_t vocab_size, double dropout_p) {
  (void)dropout_p;
  const int64_t t = s_fused.rows();
  const int64_t lc = copy.states.rows();
  DSG_CHECK(static_cast<int64_t>(copy.vocab_ids.size()) == lc, "copy-text id count mismatch");
  const int64_t d = s_fused.cols();
  Tensor w_on_s = slice_cols(p.copy_w, 0, d);
  Tensor w_on_c = slice_cols(p.copy_w, d, 2 * d);
  Tensor beta = add(matmul(matmul_nt(s_fused, w_on_s), Tensor::full({1, lc}, 1.0)),
                    transpose(matmul_nt(copy.states, w_on_c)));  // [T,Lc]
  Tensor p_copy = softmax_rows(beta);
  Tensor c_bar = matmul(p_copy, copy.states);  // [T,d]
  Tensor p_gen = sigmoid(add(add(matmul_nt(s_fused, p.copy_gate_s), matmul_nt(c_bar, p.copy_gate_c)),
                             p.copy_gate_b));  // [T,1]
  Tensor scattered = scatter_cols(p_copy, copy.vocab_ids, vocab_size);
  Tensor keep = mul(p_vocab, p_gen);
  Tensor copy_part = mul(scattered, sub(Tensor::full({t, 1}, 1.0), p_gen));
  return add(keep, copy_part);
}

Tensor graph_cross_attend(const DecoderParams& p, const ModelConfig& cfg, const Tensor& s,
                          const Tensor& g, double dropout_p) {
  const std::vector<uint8_t> mask(static_cast<size_t>(s.rows() * g.rows()), 0);
  Tensor x = apply_ln(p.gx_ln1, add(s, mha(p.gx_attn, s, g, mask, dropout_p)), cfg.ln_eps);
  return apply_ln(p.gx_ln2, add(x, apply_ffn(p.gx_ffn, x, dropout_p)), cfg.ln_eps);
}

DecodeTrace decode(const DecoderParams& p, const ModelConfig& cfg,
                   const std::vector<int>& target_ids, const Tensor& h,
                   const std::vector<uint8_t>& src_valid, const Tensor& g, double dropout_p,
                   const std::optional<CopyText>& copy) {
  const int64_t t = static_cast<int64_t>(target_ids.size());
  DSG_CHECK(t >= 1, "decoder needs at least one target position");
  DSG_CHECK(t <= p.pos_emb.rows(), "target of length " << t
                                       << " exceeds the position table (" << p.pos_emb.rows()
                                       << ")");
  const int64_t s_len = h.rows();
  DSG_CHECK(static_cast<int64_t>(src_valid.size()) == s_len, "source mask length mismatch");

  std::vector<int> positions(target_ids.size());
  for (size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);
  Tensor x = add(gather_rows(p.tok_emb, target_ids), gather_rows(p.pos_emb, positions));

  const std::vector<uint8_t> causal = build_attn_mask(t, t, nullptr, true);
  const std::vector<uint8_t> cross_mask = build_attn_mask(t, s_len, &src_valid, false);

  Tensor ti_slice;
  const Tensor* ti = nullptr;
  if (cfg.use_token_independent) {
    DSG_CHECK(p.ti_global.defined(), "token-independent matrix missing");
    DSG_CHECK(t <= p.ti_global.rows() && s_len <= p.ti_global.cols(),
              "token-independent matrix smaller than the current sequence");
    ti_slice = slice_cols(slice_rows(p.ti_global, 0, t), 0, s_len);
    ti = &ti_slice;
  }

  DecodeTrace trace;
  for (size_t l = 0; l < p.layers.size(); ++l) {
    const DecLayerP& layer = p.layers[l];
    x = apply_ln(layer.ln1, add(x, mha(layer.self, x, x, causal, dropout_p)), cfg.ln_eps);
    if (l + 1 == p.layers.size()) trace.s_self = x;
    x = apply_ln(layer.ln2, add(x, mha(layer.cross, x, h, cross_mask, dropout_p, ti)), cfg.ln_eps);
    x = apply_ln(layer.ln3, add(x, apply_ffn(layer.ffn, x, dropout_p)), cfg.ln_eps);
  }
  trace.s = x;

  if (cfg.use_graph_cross_attend) {
    trace.s_fused = graph_cross_attend(p, cfg, trace.s, g, dropout_p);
  } else if (cfg.use_context2entity) {
    trace.sim = context2entity_similarity(p.w_s, p.w_g, p.w_sg, trace.s, g);
    C2eAttention c2e = context2entity_attend(trace.sim, g);
    trace.attn = c2e.weights;
    trace.g_tilde = c2e.entity;
    if (cfg.use_entity2context) {
      Tensor s_tilde = entity2context_attend(trace.sim, trace.s);
      trace.s_fused = matmul(concat_cols({trace.s, trace.g_tilde, mul(trace.s, trace.g_tilde),
                                          mul(trace.s, s_tilde)}),
                             p.w_fuse);
    } else {
      trace.s_fused = fuse_graph_state(p.w_fuse, trace.s, trace.g_tilde);
    }
  } else {
    trace.s_fused = trace.s;
  }

  trace.p_vocab = project_vocab(p.out_proj, trace.s_fused, Vocab::kPad);
  if (cfg.use_copy && copy.has_value() && copy->states.rows() > 0)
    trace.p_vocab = copy_distribution(p, trace.s_fused, *copy, trace.p_vocab,
                                      cfg.vocab_size, dropout_p);
  return trace;
}

}  // namespace dsgsum
