#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstring>

#include "doctest.h"
#include "dsgsum/model.hpp"

using namespace dsgsum;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.ffn_hidden = 16;
  cfg.lstm_layers = 1;
  cfg.lstm_hidden = 4;
  cfg.n_gat_layers = 1;
  cfg.gat_heads = 2;
  cfg.max_src_len = 32;
  cfg.max_tgt_len = 16;
  cfg.max_entities = 8;
  cfg.dropout = 0.0;
  cfg.vocab_size = 20;
  return cfg;
}

EncodedDoc toy_doc(std::vector<int> ids) {
  EncodedDoc d;
  d.token_ids = std::move(ids);
  d.segment_ids.assign(d.token_ids.size(), 0);
  d.positions.resize(d.token_ids.size());
  for (size_t i = 0; i < d.positions.size(); ++i) d.positions[i] = (int)i;
  return d;
}

Model::PreparedGraph toy_graph(const Model& model) {
  Model::PreparedGraph g;
  g.input.node_token_ids = {{7, 8}, {9}};
  g.input.ranks = {0, 1};
  g.input.neighbors = {{0, 1}, {0, 1}};
  if (model.config().use_copy) g.copy_token_ids = {7, 8, Vocab::kSep, 9};
  return g;
}

Tensor rnd(Shape s, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return Tensor::uniform(std::move(s), lo, hi, rng);
}

}  // namespace

TEST_CASE("causality: outputs before t are bit-exact under future perturbation") {
  Model model(tiny_cfg(), 7);
  Model::PreparedGraph g = toy_graph(model);
  EncodedDoc doc = toy_doc({4, 7, 9, 5});
  std::vector<int> input = {Vocab::kBos, 7, 8, 9, 10};
  Tensor p1 = model.forward(doc, g, input);
  std::vector<int> perturbed = input;
  perturbed[3] = 11;
  perturbed[4] = 12;
  Tensor p2 = model.forward(doc, g, perturbed);
  const int64_t v = p1.cols();
  for (int64_t t = 0; t < 3; ++t)
    CHECK(std::memcmp(p1.data() + t * v, p2.data() + t * v, v * sizeof(double)) == 0);
  // and the perturbed rows genuinely differ somewhere
  bool differs = false;
  for (int64_t t = 3; t < 5; ++t)
    if (std::memcmp(p1.data() + t * v, p2.data() + t * v, v * sizeof(double)) != 0) differs = true;
  CHECK(differs);
}

TEST_CASE("length-1 target attends only to itself") {
  Model model(tiny_cfg(), 8);
  Model::PreparedGraph g = toy_graph(model);
  EncodedDoc doc = toy_doc({4, 7, 5});
  Tensor p = model.forward(doc, g, {Vocab::kBos});
  CHECK(p.rows() == 1);
  CHECK(p.cols() == 20);
}

TEST_CASE("all-pad source surfaces the fully-masked-row error") {
  Model model(tiny_cfg(), 9);
  Model::PreparedGraph g = toy_graph(model);
  EncodedDoc doc = toy_doc({Vocab::kPad, Vocab::kPad});
  CHECK_THROWS_WITH(model.forward(doc, g, {Vocab::kBos}), doctest::Contains("fully masked row"));
}

TEST_CASE("pad keys receive exactly zero cross attention") {
  // attend() zeroes masked keys: weights land on the valid block only
  Rng rng(77);
  Tensor q = Tensor::uniform({3, 4}, -1, 1, rng);
  Tensor k = Tensor::uniform({5, 4}, -1, 1, rng);
  Tensor v = Tensor::uniform({5, 4}, -1, 1, rng);
  std::vector<uint8_t> key_valid = {1, 1, 0, 1, 0};
  auto mask = build_attn_mask(3, 5, &key_valid, false);
  Tensor logits = scale(matmul_nt(q, k), 0.5);
  Tensor weights = softmax_rows(masked_fill(logits, mask, -INFINITY));
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(weights.at(i, 2) == 0.0);
    CHECK(weights.at(i, 4) == 0.0);
    double s = 0.0;
    for (int64_t j = 0; j < 5; ++j) s += weights.at(i, j);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  // changing a masked key's value leaves attend() output bit-identical
  Tensor out1 = attend(q, k, v, mask);
  Tensor v2 = v;
  v2.data()[2 * 4 + 1] += 100.0;
  Tensor k2 = k;
  k2.data()[2 * 4 + 3] -= 50.0;
  Tensor out2 = attend(q, k2, v2, mask);
  CHECK(std::memcmp(out1.data(), out2.data(), out1.numel() * sizeof(double)) == 0);
}

TEST_CASE("context2entity similarity formula cases") {
  Tensor s = rnd({3, 4}, 100);
  Tensor g = rnd({2, 4}, 101);

  Tensor zero = Tensor::zeros({1, 4});
  Tensor m0 = context2entity_similarity(zero, zero, zero, s, g);
  for (int64_t i = 0; i < m0.numel(); ++i) CHECK(m0.data()[i] == 0.0);

  Tensor ones = Tensor::full({1, 4}, 1.0);
  Tensor mdot = context2entity_similarity(zero, zero, ones, s, g);
  for (int64_t t = 0; t < 3; ++t)
    for (int64_t i = 0; i < 2; ++i) {
      double dot = 0.0;
      for (int64_t kk = 0; kk < 4; ++kk) dot += s.at(t, kk) * g.at(i, kk);
      CHECK(mdot.at(t, i) == doctest::Approx(dot).epsilon(1e-12));
    }

  Tensor ws = rnd({1, 4}, 102);
  Tensor mrow = context2entity_similarity(ws, zero, zero, s, g);
  for (int64_t t = 0; t < 3; ++t) CHECK(mrow.at(t, 0) == mrow.at(t, 1));
}

TEST_CASE("context2entity attention: single entity, identical rows, uniform") {
  Tensor g1 = rnd({1, 4}, 103);
  Tensor m1 = rnd({3, 1}, 104);
  C2eAttention a1 = context2entity_attend(m1, g1);
  for (int64_t t = 0; t < 3; ++t) {
    CHECK(a1.weights.at(t, 0) == 1.0);
    for (int64_t k = 0; k < 4; ++k) CHECK(a1.entity.at(t, k) == g1.at(0, k));
  }

  Tensor row = rnd({1, 4}, 105);
  Tensor same = concat_rows({row, row, row});
  C2eAttention a2 = context2entity_attend(rnd({2, 3}, 106), same);
  for (int64_t t = 0; t < 2; ++t)
    for (int64_t k = 0; k < 4; ++k)
      CHECK(a2.entity.at(t, k) == doctest::Approx(row.at(0, k)).epsilon(1e-12));

  C2eAttention a3 = context2entity_attend(Tensor::zeros({2, 5}), rnd({5, 4}, 107));
  for (int64_t t = 0; t < 2; ++t)
    for (int64_t i = 0; i < 5; ++i)
      CHECK(a3.weights.at(t, i) == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("fuse_graph_state block structure") {
  const int64_t d = 4;
  Tensor s = rnd({3, d}, 108);
  Tensor gt = rnd({3, d}, 109);

  // W = [I; 0; 0] reproduces s
  Tensor w = Tensor::zeros({3 * d, d});
  for (int64_t i = 0; i < d; ++i) w.data()[i * d + i] = 1.0;
  Tensor fused = fuse_graph_state(w, s, gt);
  for (int64_t i = 0; i < fused.numel(); ++i) CHECK(fused.data()[i] == s.data()[i]);

  // s = 0 leaves only the g~ block
  Tensor wr = rnd({3 * d, d}, 110);
  Tensor zero_s = Tensor::zeros({3, d});
  Tensor f0 = fuse_graph_state(wr, zero_s, gt);
  Tensor want = matmul(gt, slice_rows(wr, d, 2 * d));
  for (int64_t i = 0; i < f0.numel(); ++i)
    CHECK(f0.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-12));
  CHECK(f0.rows() == 3);
  CHECK(f0.cols() == d);
}

TEST_CASE("project_vocab masks [PAD] and normalizes") {
  Tensor s = rnd({3, 4}, 111);
  Tensor w0 = Tensor::zeros({4, 9});
  Tensor uniform = project_vocab(w0, s, Vocab::kPad);
  for (int64_t t = 0; t < 3; ++t) {
    CHECK(uniform.at(t, Vocab::kPad) == 0.0);
    for (int64_t wv = 1; wv < 9; ++wv)
      CHECK(uniform.at(t, wv) == doctest::Approx(1.0 / 8).epsilon(1e-14));
  }

  Tensor w = rnd({4, 9}, 112);
  Tensor p = project_vocab(w, s, Vocab::kPad);
  Tensor logits = matmul(s, w);
  for (int64_t t = 0; t < 3; ++t) {
    double sum_p = 0.0;
    int64_t argmax_p = 1, argmax_l = 1;
    for (int64_t wv = 0; wv < 9; ++wv) {
      sum_p += p.at(t, wv);
      if (wv == Vocab::kPad) continue;
      if (p.at(t, wv) > p.at(t, argmax_p)) argmax_p = wv;
      if (logits.at(t, wv) > logits.at(t, argmax_l)) argmax_l = wv;
    }
    CHECK(std::abs(sum_p - 1.0) < 1e-12);
    CHECK(argmax_p == argmax_l);
  }
}

TEST_CASE("token-independent attention: G=0 equals standard, decomposition, linearity") {
  Rng rng(113);
  Tensor q = Tensor::uniform({3, 4}, -1, 1, rng);
  Tensor k = Tensor::uniform({5, 4}, -1, 1, rng);
  Tensor v = Tensor::uniform({5, 4}, -1, 1, rng);
  std::vector<uint8_t> nomask(3 * 5, 0);

  Tensor std_attn = attend(q, k, v, nomask);
  Tensor with_zero_g = token_independent_attend(q, k, v, Tensor::zeros({3, 5}));
  for (int64_t i = 0; i < std_attn.numel(); ++i)
    CHECK(std::abs(std_attn.data()[i] - with_zero_g.data()[i]) < 1e-12);

  Tensor g = Tensor::uniform({3, 5}, -1, 1, rng);
  Tensor combined = token_independent_attend(q, k, v, g);
  Tensor gv = matmul(g, v);
  for (int64_t i = 0; i < combined.numel(); ++i)
    CHECK(combined.data()[i] ==
          doctest::Approx(std_attn.data()[i] + gv.data()[i]).epsilon(1e-12));

  // Q = 0: softmax term becomes the column mean of V
  Tensor q0 = Tensor::zeros({3, 4});
  Tensor out0 = token_independent_attend(q0, k, v, g);
  for (int64_t t = 0; t < 3; ++t)
    for (int64_t c = 0; c < 4; ++c) {
      double mean = 0.0, gvv = 0.0;
      for (int64_t j = 0; j < 5; ++j) {
        mean += v.at(j, c) / 5.0;
        gvv += g.at(t, j) * v.at(j, c);
      }
      CHECK(out0.at(t, c) == doctest::Approx(mean + gvv).epsilon(1e-12));
    }

  // linearity in V
  Tensor v2 = Tensor::uniform({5, 4}, -1, 1, rng);
  Tensor lhs = token_independent_attend(q, k, add(v, v2), g);
  Tensor rhs = add(token_independent_attend(q, k, v, g), token_independent_attend(q, k, v2, g));
  for (int64_t i = 0; i < lhs.numel(); ++i)
    CHECK(lhs.data()[i] == doctest::Approx(rhs.data()[i]).epsilon(1e-12));
}

TEST_CASE("entity2context attention: masking and base cases") {
  Tensor s = rnd({4, 6}, 114);
  Tensor m = rnd({4, 3}, 115);
  Tensor st = entity2context_attend(m, s);
  CHECK(st.rows() == 4);
  CHECK(st.cols() == 6);
  // t = 1: the first mixed state is s_1 itself
  for (int64_t c = 0; c < 6; ++c) CHECK(st.at(0, c) == s.at(0, c));

  // no dependence on future states: change s rows > 1 and m rows > 1
  Tensor s2 = concat_rows({slice_rows(s, 0, 2), rnd({2, 6}, 116)});
  Tensor m2 = concat_rows({slice_rows(m, 0, 2), rnd({2, 3}, 117)});
  Tensor st2 = entity2context_attend(m2, s2);
  for (int64_t t = 0; t < 2; ++t)
    for (int64_t c = 0; c < 6; ++c) CHECK(st2.at(t, c) == st.at(t, c));

  // equal similarity rows: uniform mixing over 1..t
  Tensor meq = Tensor::full({3, 2}, 0.7);
  Tensor seq = rnd({3, 6}, 118);
  Tensor ste = entity2context_attend(meq, seq);
  for (int64_t c = 0; c < 6; ++c) {
    CHECK(ste.at(1, c) == doctest::Approx(0.5 * (seq.at(0, c) + seq.at(1, c))).epsilon(1e-12));
    CHECK(ste.at(2, c) ==
          doctest::Approx((seq.at(0, c) + seq.at(1, c) + seq.at(2, c)) / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("copy distribution limits and normalization") {
  ModelConfig cfg = tiny_cfg();
  cfg.use_copy = true;
  Model model(cfg, 10);
  const DecoderParams& dec = model.decoder();

  Rng rng(119);
  Tensor s_fused = Tensor::uniform({3, 8}, -1, 1, rng);
  CopyText copy;
  copy.states = Tensor::uniform({4, 8}, -1, 1, rng);
  copy.vocab_ids = {7, 8, Vocab::kSep, 9};
  Tensor p_vocab = softmax_rows(Tensor::uniform({3, 20}, -1, 1, rng));

  Tensor mixed = copy_distribution(dec, s_fused, copy, p_vocab, 20, 0.0);
  for (int64_t t = 0; t < 3; ++t) {
    double s = 0.0;
    for (int64_t w = 0; w < 20; ++w) s += mixed.at(t, w);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }

  // p_gen -> 1 recovers P_vocab
  Tensor gate_b = dec.copy_gate_b;
  Tensor gate_s = dec.copy_gate_s;
  Tensor gate_c = dec.copy_gate_c;
  std::fill(gate_s.values().begin(), gate_s.values().end(), 0.0);
  std::fill(gate_c.values().begin(), gate_c.values().end(), 0.0);
  gate_b.data()[0] = 60.0;  // sigmoid saturates to 1
  Tensor all_gen = copy_distribution(dec, s_fused, copy, p_vocab, 20, 0.0);
  for (int64_t i = 0; i < all_gen.numel(); ++i)
    CHECK(all_gen.data()[i] == doctest::Approx(p_vocab.data()[i]).epsilon(1e-12));

  // p_gen -> 0 with a single entity token puts all mass on its id
  gate_b.data()[0] = -60.0;
  CopyText single;
  single.states = Tensor::uniform({1, 8}, -1, 1, rng);
  single.vocab_ids = {9};
  Tensor all_copy = copy_distribution(dec, s_fused, single, p_vocab, 20, 0.0);
  for (int64_t t = 0; t < 3; ++t) {
    CHECK(all_copy.at(t, 9) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(all_copy.at(t, 7) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("graph cross-attention fusion block") {
  ModelConfig cfg = tiny_cfg();
  cfg.use_context2entity = false;
  cfg.use_graph_cross_attend = true;
  Model model(cfg, 11);
  Rng rng(120);
  Tensor s = Tensor::uniform({3, 8}, -1, 1, rng);
  Tensor g1 = Tensor::uniform({1, 8}, -1, 1, rng);
  Tensor out = graph_cross_attend(model.decoder(), cfg, s, g1, 0.0);
  CHECK(out.rows() == 3);
  CHECK(out.cols() == 8);
  // single node: cross attention collapses to a transform of that node row;
  // verify via the mha identity with weights forced to 1
  const MhaP& attn = model.decoder().gx_attn;
  std::vector<uint8_t> nomask(3 * 1, 0);
  Tensor v_proj = linear(attn.wv, g1, 0.0);
  Tensor per_head_same = mha(attn, s, g1, nomask, 0.0);
  Tensor expect = linear(attn.wo, concat_cols({slice_cols(v_proj, 0, 4), slice_cols(v_proj, 4, 8)}), 0.0);
  // every row of the attention output equals the projected single value row
  for (int64_t t = 0; t < 3; ++t)
    for (int64_t c = 0; c < 8; ++c)
      CHECK(per_head_same.at(t, c) == doctest::Approx(expect.at(0, c)).epsilon(1e-12));
}

TEST_CASE("full model forward: distributions and trace shapes") {
  Model model(tiny_cfg(), 12);
  Model::PreparedGraph g = toy_graph(model);
  EncodedDoc doc = toy_doc({4, 7, 9, 5});
  Model::EncodedState st = model.encode(doc, g);
  DecodeTrace trace = model.decode_prefix(st, {Vocab::kBos, 7, 8});
  CHECK(trace.s.rows() == 3);
  CHECK(trace.sim.rows() == 3);
  CHECK(trace.sim.cols() == 2);
  CHECK(trace.p_vocab.rows() == 3);
  CHECK(trace.p_vocab.cols() == 20);
  for (int64_t t = 0; t < 3; ++t) {
    double s = 0.0;
    for (int64_t w = 0; w < 20; ++w) s += trace.p_vocab.at(t, w);
    CHECK(std::abs(s - 1.0) < 1e-12);
    double a = 0.0;
    for (int64_t i = 0; i < 2; ++i) a += trace.attn.at(t, i);
    CHECK(std::abs(a - 1.0) < 1e-12);
  }
}

TEST_CASE("disabling context2entity reduces to a plain transformer decoder bit-for-bit") {
  ModelConfig cfg = tiny_cfg();
  cfg.use_context2entity = false;
  Model model(cfg, 13);
  Model::PreparedGraph g = toy_graph(model);
  EncodedDoc doc = toy_doc({4, 7, 9, 5});
  Model::EncodedState st = model.encode(doc, g);
  std::vector<int> input = {Vocab::kBos, 7, 8};
  DecodeTrace trace = model.decode_prefix(st, input);

  // reference: the same decoder stack written out long-hand from primitives,
  // with no entity path at all
  const DecoderParams& dp = model.decoder();
  std::vector<int> positions = {0, 1, 2};
  Tensor x = add(gather_rows(dp.tok_emb, input), gather_rows(dp.pos_emb, positions));
  auto causal = build_attn_mask(3, 3, nullptr, true);
  auto cross = build_attn_mask(3, st.h.rows(), &st.src_valid, false);
  for (const DecLayerP& layer : dp.layers) {
    x = apply_ln(layer.ln1, add(x, mha(layer.self, x, x, causal, 0.0)), cfg.ln_eps);
    x = apply_ln(layer.ln2, add(x, mha(layer.cross, x, st.h, cross, 0.0)), cfg.ln_eps);
    x = apply_ln(layer.ln3, add(x, apply_ffn(layer.ffn, x, 0.0)), cfg.ln_eps);
  }
  Tensor want = project_vocab(dp.out_proj, x, Vocab::kPad);
  CHECK(std::memcmp(trace.p_vocab.data(), want.data(), want.numel() * sizeof(double)) == 0);
}

TEST_CASE("grad_check: full decoder NLL including the fusion path") {
  ModelConfig cfg = tiny_cfg();
  cfg.vocab_size = 11;
  Model model(cfg, 14);
  Model::PreparedGraph g;
  g.input.node_token_ids = {{7}, {8, 9}};
  g.input.ranks = {0, 1};
  g.input.neighbors = {{0, 1}, {0, 1}};
  EncodedDoc doc = toy_doc({4, 7, 9, 5});
  const std::vector<int> input = {Vocab::kBos, 7, 8};
  const std::vector<int> gold = {7, 8, Vocab::kEos};

  const DecoderParams& dp = model.decoder();
  auto f = [&](const std::vector<Tensor>& xs) {
    (void)xs;  // leaves alias the registry tensors below
    Tensor p = model.forward(doc, g, input);
    return nll(p, gold, {1, 1, 1});
  };
  std::vector<Tensor> leaves = {dp.w_s, dp.w_sg, dp.w_fuse, dp.out_proj,
                                model.encoder().fe_table};
  CHECK(grad_check(f, leaves) < 1e-4);
}
