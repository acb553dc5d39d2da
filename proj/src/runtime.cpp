#include "dsgsum/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "dsgsum/kernels.hpp"
#include "json.hpp"

namespace dsgsum {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double lr_schedule(int64_t step, double base_lr, int64_t warmup) {
  DSG_CHECK(step >= 1, "lr_schedule requires step >= 1");
  DSG_CHECK(warmup >= 1, "lr_schedule requires warmup >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return base_lr * std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

DualAdam::DualAdam(ParamRegistry& params, OptimConfig encoder, OptimConfig decoder)
    : params_(params), enc_cfg_(encoder), dec_cfg_(decoder) {
  m_.resize(params_.entries().size());
  v_.resize(params_.entries().size());
  for (size_t i = 0; i < params_.entries().size(); ++i) {
    const size_t n = static_cast<size_t>(params_.entries()[i].tensor.numel());
    m_[i].assign(n, 0.0);
    v_[i].assign(n, 0.0);
  }
}

void DualAdam::apply(int64_t schedule_step) {
  ++t_;
  lr_enc_ = lr_schedule(schedule_step, enc_cfg_.lr, enc_cfg_.warmup);
  lr_dec_ = lr_schedule(schedule_step, dec_cfg_.lr, dec_cfg_.warmup);
  const auto& entries = params_.entries();
  for (size_t i = 0; i < entries.size(); ++i) {
    Tensor t = entries[i].tensor;
    const OptimConfig& oc = entries[i].group == ParamGroup::Encoder ? enc_cfg_ : dec_cfg_;
    const double lr = entries[i].group == ParamGroup::Encoder ? lr_enc_ : lr_dec_;
    const double bc1 = 1.0 - std::pow(oc.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(oc.beta2, static_cast<double>(t_));
    kernels::ops().adam_update(t.data(), m_[i].data(), v_[i].data(), t.grad_data(), 1.0,
                               static_cast<size_t>(t.numel()), lr, oc.beta1, oc.beta2, oc.eps,
                               bc1, bc2);
    t.zero_grad();
  }
}

TrainExample make_example(const RawPair& pair, const Vocab& vocab, const RelationKB& kb,
                          const Model& model, int max_src_len, int max_tgt_len,
                          const GraphOptions& graph_options) {
  TrainExample ex;
  ex.id = pair.id;
  ex.doc = encode_document(pair, vocab, max_src_len);
  ex.graph = model.prepare_graph(build_graph(pair, kb, graph_options), vocab);
  ex.target = encode_summary(pair, vocab, max_tgt_len);
  return ex;
}

Trainer::Trainer(Model& model, const TrainConfig& cfg)
    : model_(model), cfg_(cfg), opt_(model.params(), cfg.encoder_opt, cfg.decoder_opt) {}

StepResult Trainer::train_step(const std::vector<const TrainExample*>& batch, int64_t step) {
  DSG_CHECK(!batch.empty(), "empty training batch");
  StepResult res;
  Tape tape(splitmix64(cfg_.seed ^ static_cast<uint64_t>(step) * 0x2545f4914f6cdd1dULL));
  Tensor total;
  for (const TrainExample* ex : batch) {
    DSG_CHECK(ex->target.size() >= 2, "target for '" << ex->id << "' is too short");
    std::vector<int> input(ex->target.begin(), ex->target.end() - 1);
    std::vector<int> gold(ex->target.begin() + 1, ex->target.end());
    Tensor p = model_.forward(ex->doc, ex->graph, input);
    std::vector<uint8_t> valid(gold.size(), 1);
    Tensor loss = nll(p, gold, valid, cfg_.label_smoothing, Vocab::kPad);
    total = total.defined() ? add(total, loss) : loss;
  }
  Tensor mean = scale(total, 1.0 / static_cast<double>(batch.size()));
  res.loss = mean.item();
  DSG_CHECK(std::isfinite(res.loss), "non-finite loss at step " << step);
  tape.backward(scale(mean, 1.0 / static_cast<double>(cfg_.grad_accum)));
  ++calls_;
  res.applied = calls_ % cfg_.grad_accum == 0;
  if (res.applied) opt_.apply(step);
  res.lr_enc = lr_schedule(step, cfg_.encoder_opt.lr, cfg_.encoder_opt.warmup);
  res.lr_dec = lr_schedule(step, cfg_.decoder_opt.lr, cfg_.decoder_opt.warmup);
  return res;
}

double Trainer::eval_loss(const std::vector<TrainExample>& examples) const {
  DSG_CHECK(!examples.empty(), "no validation examples");
  double total = 0.0;
  for (const TrainExample& ex : examples) {
    std::vector<int> input(ex.target.begin(), ex.target.end() - 1);
    std::vector<int> gold(ex.target.begin() + 1, ex.target.end());
    Tensor p = model_.forward(ex.doc, ex.graph, input);
    std::vector<uint8_t> valid(gold.size(), 1);
    total += nll(p, gold, valid, cfg_.label_smoothing, Vocab::kPad).item();
  }
  return total / static_cast<double>(examples.size());
}

std::vector<CheckpointInfo> select_checkpoints(std::vector<CheckpointInfo> history, int k) {
  DSG_CHECK(!history.empty(), "checkpoint history is empty");
  std::sort(history.begin(), history.end(), [](const CheckpointInfo& a, const CheckpointInfo& b) {
    if (a.val_loss != b.val_loss) return a.val_loss < b.val_loss;
    return a.step < b.step;
  });
  if (static_cast<int>(history.size()) < k) {
    DSG_LOG_INFO("only " << history.size() << " checkpoints available, requested top-" << k);
    return history;
  }
  history.resize(static_cast<size_t>(k));
  return history;
}

void block_trigrams(const std::vector<int>& prefix, std::vector<double>& logits) {
  const size_t n = prefix.size();
  if (n < 2) return;
  const int a = prefix[n - 2], b = prefix[n - 1];
  for (size_t i = 0; i + 2 < n; ++i) {
    if (prefix[i] == a && prefix[i + 1] == b) {
      const int banned = prefix[i + 2];
      if (banned >= 0 && banned < static_cast<int>(logits.size())) logits[banned] = kNegInf;
    }
  }
}

namespace {

struct Hypothesis {
  std::vector<int> tokens;  // starts with [BOS]; [EOS] appended when done
  double logp = 0.0;
  bool done = false;

  int emitted_len() const {
    return static_cast<int>(tokens.size()) - 1;  // excludes [BOS]
  }
};

double hyp_score(const Hypothesis& h, bool normalize) {
  if (!normalize) return h.logp;
  const int len = std::max(1, h.emitted_len());
  return h.logp / static_cast<double>(len);
}

DecodeResult finish(const Hypothesis& h) {
  DecodeResult r;
  r.tokens.assign(h.tokens.begin() + 1, h.tokens.end());
  if (!r.tokens.empty() && r.tokens.back() == Vocab::kEos) {
    r.tokens.pop_back();
    r.ended_with_eos = true;
  }
  r.raw_logprob = h.logp;
  return r;
}

}  // namespace

DecodeResult beam_search(const Model& model, const Model::EncodedState& state,
                         const DecodeConfig& cfg) {
  DSG_CHECK(cfg.beam_size >= 1, "beam size must be >= 1");
  DSG_CHECK(cfg.max_len >= 1, "max_len must be >= 1");
  std::vector<Hypothesis> beams{Hypothesis{{Vocab::kBos}, 0.0, false}};
  std::vector<Hypothesis> finished;

  for (int step = 0; step < cfg.max_len; ++step) {
    struct Cand {
      double score;  // cumulative raw logprob
      int token;     // -1 carries a finished hypothesis over unchanged
      size_t beam;
    };
    std::vector<Cand> cands;
    bool any_alive = false;
    for (size_t bi = 0; bi < beams.size(); ++bi) {
      const Hypothesis& h = beams[bi];
      if (h.done) {
        cands.push_back(Cand{h.logp, -1, bi});
        continue;
      }
      any_alive = true;
      std::vector<double> logp = model.next_token_logprobs(state, h.tokens);
      if (cfg.block_repeated_trigrams) block_trigrams(h.tokens, logp);
      logp[Vocab::kBos] = kNegInf;  // never re-emit the start marker
      bool any_token = false;
      for (int w = 0; w < static_cast<int>(logp.size()); ++w) {
        if (logp[w] == kNegInf) continue;
        cands.push_back(Cand{h.logp + logp[w], w, bi});
        any_token = true;
      }
      // everything blocked: force an end-of-sequence step
      if (!any_token) cands.push_back(Cand{h.logp - 1e30, Vocab::kEos, bi});
    }
    if (!any_alive) break;
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.token != b.token) return a.token < b.token;
      return a.beam < b.beam;
    });
    std::vector<Hypothesis> next;
    for (const Cand& c : cands) {
      if (static_cast<int>(next.size()) >= cfg.beam_size) break;
      if (c.token < 0) {
        next.push_back(beams[c.beam]);
        continue;
      }
      Hypothesis h = beams[c.beam];
      h.tokens.push_back(c.token);
      h.logp = c.score;
      if (c.token == Vocab::kEos) {
        h.done = true;
        finished.push_back(h);
      }
      next.push_back(std::move(h));
    }
    beams = std::move(next);
    bool all_done = true;
    for (const Hypothesis& h : beams)
      if (!h.done) all_done = false;
    if (all_done) break;
  }

  const std::vector<Hypothesis>& pool = finished.empty() ? beams : finished;
  const Hypothesis* best = nullptr;
  for (const Hypothesis& h : pool) {
    if (best == nullptr || hyp_score(h, cfg.length_normalize) > hyp_score(*best, cfg.length_normalize))
      best = &h;
  }
  DSG_CHECK(best != nullptr, "beam search produced no hypotheses");
  return finish(*best);
}

DecodeResult greedy_decode(const Model& model, const Model::EncodedState& state,
                           const DecodeConfig& cfg) {
  Hypothesis h{{Vocab::kBos}, 0.0, false};
  for (int step = 0; step < cfg.max_len; ++step) {
    std::vector<double> logp = model.next_token_logprobs(state, h.tokens);
    if (cfg.block_repeated_trigrams) block_trigrams(h.tokens, logp);
    logp[Vocab::kBos] = kNegInf;
    int best = -1;
    for (int w = 0; w < static_cast<int>(logp.size()); ++w) {
      if (logp[w] == kNegInf) continue;
      if (best < 0 || logp[w] > logp[best]) best = w;
    }
    if (best < 0) {
      h.tokens.push_back(Vocab::kEos);
      h.logp += -1e30;
      break;
    }
    h.tokens.push_back(best);
    h.logp += logp[best];
    if (best == Vocab::kEos) break;
  }
  return finish(h);
}

namespace {

std::string join_ids(const std::vector<int>& ids, const Vocab& vocab) {
  std::vector<std::string> toks;
  for (int id : ids) {
    if (id < Vocab::kNumReserved) continue;
    toks.push_back(vocab.token(id));
  }
  return join_tokens(toks);
}

}  // namespace

std::string summarize_pair(const Model& model, const Vocab& vocab, const RelationKB& kb,
                           const RawPair& pair, const DecodeConfig& dec_cfg,
                           const GraphOptions& graph_options) {
  const ModelConfig& mc = model.config();
  TrainExample ex = make_example(pair, vocab, kb, model, mc.max_src_len, mc.max_tgt_len,
                                 graph_options);
  Model::EncodedState st = model.encode(ex.doc, ex.graph);
  DecodeResult res = dec_cfg.beam_size == 1 ? greedy_decode(model, st, dec_cfg)
                                            : beam_search(model, st, dec_cfg);
  return join_ids(res.tokens, vocab);
}

TrainOutcome run_training(const TrainConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);

  std::vector<RawPair> train_pairs = load_corpus(cfg.corpus, Split::Train);
  DSG_DATA_CHECK(!train_pairs.empty(), "training corpus '" << cfg.corpus << "' is empty");
  std::vector<RawPair> valid_pairs =
      cfg.valid_corpus.empty() ? train_pairs : load_corpus(cfg.valid_corpus, Split::Valid);
  RelationKB kb = cfg.kb.empty() ? RelationKB() : RelationKB::load(cfg.kb);

  Vocab vocab = Vocab::build(train_pairs, cfg.min_count);
  ModelConfig mc = cfg.model;
  mc.vocab_size = vocab.size();
  Model model(mc, cfg.seed);
  DSG_LOG_INFO("model has " << model.params().total_params() << " parameters, vocab "
                            << vocab.size());

  GraphOptions gopt;
  gopt.filter_triples = cfg.filter_triples;
  std::vector<TrainExample> train_ex, valid_ex;
  for (const RawPair& p : train_pairs)
    train_ex.push_back(make_example(p, vocab, kb, model, mc.max_src_len, mc.max_tgt_len, gopt));
  for (const RawPair& p : valid_pairs)
    valid_ex.push_back(make_example(p, vocab, kb, model, mc.max_src_len, mc.max_tgt_len, gopt));

  vocab.save((fs::path(cfg.out_dir) / "vocab.json").string());
  mc.save((fs::path(cfg.out_dir) / "model_config.json").string());
  {
    std::ofstream cfg_out((fs::path(cfg.out_dir) / "train_config.json").string());
    cfg_out << cfg.to_json() << "\n";
  }

  std::ofstream log_file((fs::path(cfg.out_dir) / "train.log").string());
  DSG_DATA_CHECK(log_file.good(), "cannot write training log under '" << cfg.out_dir << "'");

  Trainer trainer(model, cfg);
  TrainOutcome outcome;
  size_t cursor = 0;
  for (int64_t step = 1; step <= cfg.max_steps; ++step) {
    std::vector<const TrainExample*> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      batch.push_back(&train_ex[cursor]);
      cursor = (cursor + 1) % train_ex.size();
    }
    StepResult res = trainer.train_step(batch, step);
    outcome.final_train_loss = res.loss;
    log_file << step << "\t" << res.loss << "\t" << res.lr_enc << "\t" << res.lr_dec << "\n";
    if (step % cfg.checkpoint_interval == 0 || step == cfg.max_steps) {
      const double val = trainer.eval_loss(valid_ex);
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_step%06lld.ckpt",
                    static_cast<long long>(step));
      const std::string path = (fs::path(cfg.out_dir) / name).string();
      model.params().save_checkpoint(path);
      outcome.history.push_back(CheckpointInfo{step, val, path});
      DSG_LOG_INFO("step " << step << " loss " << res.loss << " val " << val);
    }
  }
  outcome.selected = select_checkpoints(outcome.history, 3);

  nlohmann::ordered_json j;
  j["history"] = nlohmann::ordered_json::array();
  for (const CheckpointInfo& c : outcome.history)
    j["history"].push_back({{"step", c.step}, {"val_loss", c.val_loss}, {"path", c.path}});
  j["selected"] = nlohmann::ordered_json::array();
  for (const CheckpointInfo& c : outcome.selected)
    j["selected"].push_back({{"step", c.step}, {"val_loss", c.val_loss}, {"path", c.path}});
  std::ofstream ck((fs::path(cfg.out_dir) / "checkpoints.json").string());
  ck << j.dump(2) << "\n";
  return outcome;
}

}  // namespace dsgsum
