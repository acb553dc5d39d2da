#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>
#include <unistd.h>

#include "doctest.h"
#include "dsgsum/runtime.hpp"

using namespace dsgsum;

namespace {

ModelConfig tiny_cfg(int vocab = 24) {
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
  cfg.max_src_len = 48;
  cfg.max_tgt_len = 16;
  cfg.max_entities = 8;
  cfg.dropout = 0.0;
  cfg.vocab_size = vocab;
  return cfg;
}

RawPair make_raw(const std::string& id, std::vector<std::string> sents,
                 std::vector<std::string> summary) {
  RawPair p;
  p.id = id;
  p.document = std::move(sents);
  p.summary = std::move(summary);
  for (const auto& s : p.document) p.doc_tokens.push_back(split_ws(s));
  for (const auto& s : p.summary) p.sum_tokens.push_back(split_ws(s));
  return p;
}

struct Toy {
  std::vector<RawPair> pairs;
  Vocab vocab;
  ModelConfig mc;

  Toy() {
    pairs = {
        make_raw("a", {"Kobor visits Zulma", "Kobor waits", "Kobor sings", "Zulma waits",
                       "Zulma hums"},
                 {"kobor meets zulma"}),
        make_raw("b", {"Farlo greets Nimba", "Farlo naps", "Farlo reads", "Nimba naps",
                       "Nimba sails"},
                 {"farlo joins nimba"}),
    };
    vocab = Vocab::build(pairs, 1);
    mc = tiny_cfg(vocab.size());
  }

  std::vector<TrainExample> examples(const Model& model) const {
    std::vector<TrainExample> out;
    for (const RawPair& p : pairs)
      out.push_back(make_example(p, vocab, RelationKB(), model, mc.max_src_len, mc.max_tgt_len));
    return out;
  }
};

TrainConfig toy_train_cfg(const ModelConfig& mc) {
  TrainConfig cfg;
  cfg.model = mc;
  cfg.corpus = "unused";
  cfg.grad_accum = 2;
  cfg.batch_size = 2;
  cfg.encoder_opt = {5e-3, 10, 0.9, 0.999, 1e-9};
  cfg.decoder_opt = {5e-3, 10, 0.9, 0.999, 1e-9};
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("lr_schedule formula") {
  CHECK(lr_schedule(100, 2.0, 100) == doctest::Approx(2.0 / std::sqrt(100.0)).epsilon(1e-15));
  CHECK(lr_schedule(1, 2.0, 100) == doctest::Approx(2.0 * std::pow(100.0, -1.5)).epsilon(1e-15));
  // non-increasing past warmup
  double prev = lr_schedule(100, 2.0, 100);
  for (int64_t s = 101; s < 140; ++s) {
    const double cur = lr_schedule(s, 2.0, 100);
    CHECK(cur <= prev);
    prev = cur;
  }
  CHECK_THROWS(lr_schedule(0, 1.0, 10));
}

TEST_CASE("train_step: accumulation holds parameters still until the flush call") {
  Toy toy;
  Model model(toy.mc, 3);
  TrainConfig cfg = toy_train_cfg(toy.mc);
  Trainer trainer(model, cfg);
  auto examples = toy.examples(model);
  std::vector<const TrainExample*> batch{&examples[0], &examples[1]};

  std::vector<double> before = model.params().entries()[0].tensor.values();
  StepResult r1 = trainer.train_step(batch, 1);
  CHECK_FALSE(r1.applied);
  CHECK(model.params().entries()[0].tensor.values() == before);

  StepResult r2 = trainer.train_step(batch, 2);
  CHECK(r2.applied);
  CHECK(model.params().entries()[0].tensor.values() != before);
}

TEST_CASE("train_step: 50 repeated steps on one toy batch reduce the loss") {
  Toy toy;
  Model model(toy.mc, 4);
  TrainConfig cfg = toy_train_cfg(toy.mc);
  cfg.grad_accum = 1;
  Trainer trainer(model, cfg);
  auto examples = toy.examples(model);
  std::vector<const TrainExample*> batch{&examples[0]};
  double first = 0.0, last = 0.0;
  for (int64_t step = 1; step <= 50; ++step) {
    StepResult r = trainer.train_step(batch, step);
    if (step == 1) first = r.loss;
    last = r.loss;
  }
  CHECK(last < first);
}

TEST_CASE("train_step: identical seeds give identical loss traces") {
  Toy toy;
  auto run = [&] {
    TrainConfig cfg = toy_train_cfg(toy.mc);
    cfg.model.dropout = 0.1;  // exercise the seeded dropout path
    Model model(cfg.model, 5);
    Trainer trainer(model, cfg);
    auto examples = toy.examples(model);
    std::vector<const TrainExample*> batch{&examples[0], &examples[1]};
    std::vector<double> losses;
    for (int64_t step = 1; step <= 6; ++step)
      losses.push_back(trainer.train_step(batch, step).loss);
    return losses;
  };
  CHECK(run() == run());
}

TEST_CASE("optimizer partition is exhaustive and disjoint") {
  Toy toy;
  ModelConfig mc = toy.mc;
  mc.use_copy = true;
  mc.use_token_independent = true;
  Model model(mc, 6);
  size_t enc_n = model.params().group_entries(ParamGroup::Encoder).size();
  size_t dec_n = model.params().group_entries(ParamGroup::Decoder).size();
  CHECK(enc_n + dec_n == model.params().entries().size());
  CHECK(enc_n > 0);
  CHECK(dec_n > 0);
  // encoder side holds the graph/document encoders; decoder side the rest
  for (const auto& e : model.params().entries()) {
    const bool enc_name = e.name.rfind("enc.", 0) == 0 || e.name.rfind("graph.", 0) == 0;
    CHECK(enc_name == (e.group == ParamGroup::Encoder));
  }
}

TEST_CASE("select_checkpoints picks lowest losses with earlier-step ties") {
  std::vector<CheckpointInfo> hist = {
      {10, 3.0, "a"}, {20, 2.0, "b"}, {30, 1.0, "c"}, {40, 4.0, "d"}};
  auto top = select_checkpoints(hist, 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].step == 30);
  CHECK(top[1].step == 20);
  CHECK(top[2].step == 10);

  auto fewer = select_checkpoints({{1, 1.0, "x"}, {2, 2.0, "y"}}, 3);
  CHECK(fewer.size() == 2);

  auto tie = select_checkpoints({{7, 1.0, "late"}, {3, 1.0, "early"}}, 1);
  CHECK(tie[0].step == 3);
}

TEST_CASE("block_trigrams masks exactly the completing token") {
  std::vector<double> logits(8, 0.0);
  block_trigrams({1, 2, 3, 1, 2}, logits);
  CHECK(logits[3] == -std::numeric_limits<double>::infinity());
  for (int w = 0; w < 8; ++w)
    if (w != 3) CHECK(logits[w] == 0.0);

  std::vector<double> untouched(8, 0.0);
  block_trigrams({1, 2, 3, 4}, untouched);
  for (double v : untouched) CHECK(v == 0.0);

  std::vector<double> short_prefix(8, 0.0);
  block_trigrams({5}, short_prefix);
  for (double v : short_prefix) CHECK(v == 0.0);
}

TEST_CASE("beam search: beam 1 equals greedy, outputs clean") {
  Rng seeds(2024);
  for (int trial = 0; trial < 10; ++trial) {
    Toy toy;
    Model model(toy.mc, seeds.next_u64());
    auto examples = toy.examples(model);
    Model::EncodedState st = model.encode(examples[0].doc, examples[0].graph);
    DecodeConfig dc;
    dc.beam_size = 1;
    dc.max_len = 10;
    DecodeResult beam1 = beam_search(model, st, dc);
    DecodeResult greedy = greedy_decode(model, st, dc);
    CHECK(beam1.tokens == greedy.tokens);
    CHECK(beam1.raw_logprob == doctest::Approx(greedy.raw_logprob).epsilon(1e-12));
  }
}

TEST_CASE("beam search: no repeated trigrams, EOS or max_len termination") {
  Rng seeds(9090);
  for (int trial = 0; trial < 6; ++trial) {
    Toy toy;
    Model model(toy.mc, seeds.next_u64());
    auto examples = toy.examples(model);
    Model::EncodedState st = model.encode(examples[trial % 2].doc, examples[trial % 2].graph);
    DecodeConfig dc;
    dc.beam_size = 5;
    dc.max_len = 12;
    DecodeResult res = beam_search(model, st, dc);
    CHECK((res.ended_with_eos || (int)res.tokens.size() == dc.max_len));
    std::set<std::vector<int>> trigrams;
    std::vector<int> full = {Vocab::kBos};
    full.insert(full.end(), res.tokens.begin(), res.tokens.end());
    for (size_t i = 0; i + 2 < full.size(); ++i)
      CHECK(trigrams.insert({full[i], full[i + 1], full[i + 2]}).second);
  }
}

TEST_CASE("beam search: raw beam-5 score >= greedy score without normalization") {
  Rng seeds(31337);
  for (int trial = 0; trial < 10; ++trial) {
    Toy toy;
    Model model(toy.mc, seeds.next_u64());
    auto examples = toy.examples(model);
    Model::EncodedState st = model.encode(examples[0].doc, examples[0].graph);
    DecodeConfig dc;
    dc.beam_size = 5;
    dc.max_len = 8;
    dc.length_normalize = false;
    DecodeResult beam5 = beam_search(model, st, dc);
    DecodeResult greedy = greedy_decode(model, st, dc);
    CHECK(beam5.raw_logprob >= greedy.raw_logprob - 1e-12);
  }
}

TEST_CASE("forced EOS at the first step yields an empty summary") {
  Toy toy;
  Model model(toy.mc, 77);
  // crank the EOS output column so it dominates every distribution
  Tensor out_proj = model.decoder().out_proj;
  for (int64_t r = 0; r < out_proj.rows(); ++r)
    out_proj.data()[r * out_proj.cols() + Vocab::kEos] = 40.0;
  auto examples = toy.examples(model);
  Model::EncodedState st = model.encode(examples[0].doc, examples[0].graph);
  DecodeConfig dc;
  dc.beam_size = 5;
  dc.max_len = 10;
  DecodeResult res = beam_search(model, st, dc);
  CHECK(res.tokens.empty());
  CHECK(res.ended_with_eos);
}

TEST_CASE("checkpoint round trip restores bit-identical forward outputs") {
  Toy toy;
  Model model(toy.mc, 8);
  auto examples = toy.examples(model);
  std::vector<int> input(examples[0].target.begin(), examples[0].target.end() - 1);
  Tensor before = model.forward(examples[0].doc, examples[0].graph, input);

  const std::string path =
      (std::filesystem::temp_directory_path() /
       ("dsgsum_ckpt_" + std::to_string(::getpid()) + ".ckpt")).string();
  model.params().save_checkpoint(path);

  Model reloaded(toy.mc, 999);  // different init seed
  reloaded.params().load_checkpoint(path);
  Tensor after = reloaded.forward(examples[0].doc, examples[0].graph, input);
  CHECK(std::memcmp(before.data(), after.data(), before.numel() * sizeof(double)) == 0);
  std::remove(path.c_str());

  Model wrong_shape(tiny_cfg(toy.mc.vocab_size + 1), 1);
  const std::string path2 = path + "2";
  wrong_shape.params().save_checkpoint(path2);
  CHECK_THROWS_AS(model.params().load_checkpoint(path2), DataError);
  std::remove(path2.c_str());
}

TEST_CASE("optional decoder paths train and decode end to end") {
  Toy toy;
  // complete-flow variant: entity2context on top of the fusion path, a
  // token-independent additive matrix in cross attention, and the copy head
  ModelConfig mc = toy.mc;
  mc.use_entity2context = true;
  mc.use_token_independent = true;
  mc.use_copy = true;
  Model model(mc, 21);
  TrainConfig cfg = toy_train_cfg(mc);
  cfg.grad_accum = 1;
  Trainer trainer(model, cfg);
  auto examples = toy.examples(model);
  REQUIRE(!examples[0].graph.copy_token_ids.empty());
  std::vector<const TrainExample*> batch{&examples[0], &examples[1]};
  double first = 0.0, last = 0.0;
  for (int64_t step = 1; step <= 30; ++step) {
    StepResult r = trainer.train_step(batch, step);
    if (step == 1) first = r.loss;
    last = r.loss;
  }
  CHECK(last < first);
  Model::EncodedState st = model.encode(examples[0].doc, examples[0].graph);
  DecodeConfig dc;
  dc.beam_size = 3;
  dc.max_len = 8;
  DecodeResult res = beam_search(model, st, dc);
  CHECK((res.ended_with_eos || (int)res.tokens.size() == dc.max_len));

  // distributions still sum to one with the copy head mixed in
  std::vector<int> input(examples[0].target.begin(), examples[0].target.end() - 1);
  Tensor p = model.decode_prefix(st, input).p_vocab;
  for (int64_t t = 0; t < p.rows(); ++t) {
    double s = 0.0;
    for (int64_t w = 0; w < p.cols(); ++w) s += p.at(t, w);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }

  // the graph-cross-attention fusion variant also runs the loop
  ModelConfig gx = toy.mc;
  gx.use_context2entity = false;
  gx.use_graph_cross_attend = true;
  Model model2(gx, 22);
  TrainConfig cfg2 = toy_train_cfg(gx);
  Trainer trainer2(model2, cfg2);
  auto examples2 = toy.examples(model2);
  std::vector<const TrainExample*> batch2{&examples2[0]};
  for (int64_t step = 1; step <= 4; ++step) trainer2.train_step(batch2, step);
  Model::EncodedState st2 = model2.encode(examples2[0].doc, examples2[0].graph);
  CHECK(!greedy_decode(model2, st2, dc).tokens.empty());

  // fixed (non-trainable) token-independent matrix registers no parameter
  ModelConfig frozen = toy.mc;
  frozen.use_token_independent = true;
  frozen.token_independent_trainable = false;
  Model model3(frozen, 23);
  CHECK_FALSE(model3.params().has("dec.ti_global"));
  ModelConfig learn = frozen;
  learn.token_independent_trainable = true;
  Model model4(learn, 23);
  CHECK(model4.params().has("dec.ti_global"));
  CHECK(model4.params().total_params() > model3.params().total_params());
}

TEST_CASE("grad_check covers the entity2context and copy paths") {
  Toy toy;
  ModelConfig mc = toy.mc;
  mc.use_entity2context = true;
  mc.use_copy = true;
  Model model(mc, 24);
  auto examples = toy.examples(model);
  const TrainExample& ex = examples[0];
  std::vector<int> input(ex.target.begin(), ex.target.end() - 1);
  std::vector<int> gold(ex.target.begin() + 1, ex.target.end());
  std::vector<uint8_t> valid(gold.size(), 1);
  auto f = [&](const std::vector<Tensor>&) {
    return nll(model.forward(ex.doc, ex.graph, input), gold, valid);
  };
  std::vector<Tensor> leaves = {model.decoder().w_fuse, model.decoder().copy_w,
                                model.decoder().copy_gate_s, model.decoder().copy_gate_b};
  CHECK(grad_check(f, leaves, 1e-5) < 1e-4);
}

TEST_CASE("non-finite loss is fatal and names the step") {
  Toy toy;
  Model model(toy.mc, 9);
  TrainConfig cfg = toy_train_cfg(toy.mc);
  Trainer trainer(model, cfg);
  auto examples = toy.examples(model);
  // a [PAD] gold token has exactly zero probability, so the NLL is +inf
  TrainExample poisoned = examples[0];
  poisoned.target = {Vocab::kBos, Vocab::kPad, Vocab::kEos};
  std::vector<const TrainExample*> batch{&poisoned};
  CHECK_THROWS_WITH(trainer.train_step(batch, 41), doctest::Contains("41"));
}
