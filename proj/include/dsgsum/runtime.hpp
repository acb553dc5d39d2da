#pragma once

#include <string>
#include <vector>

#include "dsgsum/model.hpp"

namespace dsgsum {

// lr = base_lr * min(step^-0.5, step * warmup^-1.5)
double lr_schedule(int64_t step, double base_lr, int64_t warmup);

// One Adam instance per parameter group (encoder side / decoder side),
// stepped together. Gradients accumulate on the parameters between calls and
// are zeroed after each apply.
class DualAdam {
 public:
  DualAdam(ParamRegistry& params, OptimConfig encoder, OptimConfig decoder);

  // schedule_step drives lr_schedule; bias correction uses the internal
  // update counter
  void apply(int64_t schedule_step);

  double last_lr(ParamGroup g) const { return g == ParamGroup::Encoder ? lr_enc_ : lr_dec_; }

 private:
  ParamRegistry& params_;
  OptimConfig enc_cfg_, dec_cfg_;
  std::vector<std::vector<double>> m_, v_;  // aligned with params_.entries()
  int64_t t_ = 0;
  double lr_enc_ = 0.0, lr_dec_ = 0.0;
};

struct TrainExample {
  std::string id;
  EncodedDoc doc;
  Model::PreparedGraph graph;
  std::vector<int> target;  // [BOS] ... [EOS]
};

TrainExample make_example(const RawPair& pair, const Vocab& vocab, const RelationKB& kb,
                          const Model& model, int max_src_len, int max_tgt_len,
                          const GraphOptions& graph_options = {});

struct StepResult {
  double loss = 0.0;
  double lr_enc = 0.0;
  double lr_dec = 0.0;
  bool applied = false;  // whether this call flushed the accumulated grads
};

class Trainer {
 public:
  Trainer(Model& model, const TrainConfig& cfg);

  // forward+backward over the batch; parameters move only on every
  // grad_accum-th call
  StepResult train_step(const std::vector<const TrainExample*>& batch, int64_t step);

  double eval_loss(const std::vector<TrainExample>& examples) const;

 private:
  Model& model_;
  TrainConfig cfg_;
  DualAdam opt_;
  int64_t calls_ = 0;
};

struct CheckpointInfo {
  int64_t step = 0;
  double val_loss = 0.0;
  std::string path;
};

// k lowest validation losses, ties resolved toward the earlier step;
// shorter histories are returned whole with a warning
std::vector<CheckpointInfo> select_checkpoints(std::vector<CheckpointInfo> history, int k = 3);

// -inf for any token that would complete a trigram already in prefix
void block_trigrams(const std::vector<int>& prefix, std::vector<double>& logits);

struct DecodeConfig {
  int beam_size = 5;
  int max_len = 64;
  bool length_normalize = true;
  bool block_repeated_trigrams = true;
};

struct DecodeResult {
  std::vector<int> tokens;  // emitted ids, no [BOS]/[EOS]
  double raw_logprob = 0.0;
  bool ended_with_eos = false;
};

DecodeResult beam_search(const Model& model, const Model::EncodedState& state,
                         const DecodeConfig& cfg);
DecodeResult greedy_decode(const Model& model, const Model::EncodedState& state,
                           const DecodeConfig& cfg);

// ---- batch entry points used by the CLI ----

struct TrainOutcome {
  std::vector<CheckpointInfo> history;
  std::vector<CheckpointInfo> selected;
  double final_train_loss = 0.0;
};

TrainOutcome run_training(const TrainConfig& cfg);

std::string summarize_pair(const Model& model, const Vocab& vocab, const RelationKB& kb,
                           const RawPair& pair, const DecodeConfig& dec_cfg,
                           const GraphOptions& graph_options = {});

}  // namespace dsgsum
