#pragma once

#include <cstdint>
#include <string>

namespace dsgsum {

// architecture and wiring switches; persisted beside checkpoints so a saved
// model can be reconstructed
struct ModelConfig {
  int d_model = 768;
  int n_heads = 4;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int ffn_hidden = 2048;
  int lstm_layers = 2;
  int lstm_hidden = 384;  // per direction
  int n_gat_layers = 3;
  int gat_heads = 4;
  int max_src_len = 512;
  int max_tgt_len = 128;
  int max_entities = 512;  // frequency-embedding table size
  double dropout = 0.2;
  double ln_eps = 1e-5;

  bool use_gat = true;
  bool use_fe = true;
  bool use_context2entity = true;
  bool use_entity2context = false;
  bool use_token_independent = false;
  bool token_independent_trainable = true;
  bool use_copy = false;
  bool use_graph_cross_attend = false;

  int vocab_size = 0;  // filled in after the vocabulary is built

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  void save(const std::string& path) const;
  static ModelConfig load(const std::string& path);
};

struct OptimConfig {
  double lr = 2e-3;
  int warmup = 20000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-9;
};

struct TrainConfig {
  ModelConfig model;

  std::string corpus;
  std::string valid_corpus;  // falls back to the training corpus
  std::string kb;
  std::string out_dir = ".";

  int64_t max_steps = 2000;
  int batch_size = 8;
  int grad_accum = 2;
  OptimConfig encoder_opt{2e-3, 20000, 0.9, 0.999, 1e-9};
  OptimConfig decoder_opt{0.1, 10000, 0.9, 0.999, 1e-9};
  double label_smoothing = 0.0;
  uint64_t seed = 1;
  int64_t checkpoint_interval = 500;
  int min_count = 1;
  int beam_size = 5;
  bool length_normalize = true;
  bool filter_triples = false;

  void validate() const;
  // flat JSON object of the keys above; unknown keys are an error
  static TrainConfig from_json_file(const std::string& path);
  static TrainConfig from_json(const std::string& text);
  std::string to_json() const;
};

}  // namespace dsgsum
