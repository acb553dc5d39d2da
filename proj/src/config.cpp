#include "dsgsum/config.hpp"

#include <fstream>
#include <set>

#include "dsgsum/common.hpp"
#include "json.hpp"

namespace dsgsum {

using nlohmann::json;
using nlohmann::ordered_json;

void ModelConfig::validate() const {
  DSG_CHECK(d_model >= 2 && d_model % n_heads == 0, "d_model must be divisible by n_heads");
  DSG_CHECK(n_enc_layers >= 1 && n_dec_layers >= 1, "need at least one encoder and decoder layer");
  DSG_CHECK(lstm_layers >= 1 && lstm_hidden >= 1, "LSTM needs at least one layer");
  DSG_CHECK(!use_gat || (n_gat_layers >= 1 && d_model % gat_heads == 0),
            "d_model must be divisible by gat_heads");
  DSG_CHECK(max_src_len >= 3 && max_tgt_len >= 1, "sequence length limits too small");
  DSG_CHECK(max_entities >= 1, "max_entities must be positive");
  DSG_CHECK(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0,1)");
  DSG_CHECK(!use_entity2context || use_context2entity,
            "entity2context extends the context2entity path; enable both");
  DSG_CHECK(!(use_graph_cross_attend && use_context2entity),
            "graph_cross_attend replaces context2entity; enable only one");
  DSG_CHECK(vocab_size > 6, "vocab_size not set");
}

namespace {

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void model_to_json(ordered_json& j, const ModelConfig& m) {
  j["d_model"] = m.d_model;
  j["n_heads"] = m.n_heads;
  j["n_enc_layers"] = m.n_enc_layers;
  j["n_dec_layers"] = m.n_dec_layers;
  j["ffn_hidden"] = m.ffn_hidden;
  j["lstm_layers"] = m.lstm_layers;
  j["lstm_hidden"] = m.lstm_hidden;
  j["n_gat_layers"] = m.n_gat_layers;
  j["gat_heads"] = m.gat_heads;
  j["max_src_len"] = m.max_src_len;
  j["max_tgt_len"] = m.max_tgt_len;
  j["max_entities"] = m.max_entities;
  j["dropout"] = m.dropout;
  j["use_gat"] = m.use_gat;
  j["use_fe"] = m.use_fe;
  j["use_context2entity"] = m.use_context2entity;
  j["use_entity2context"] = m.use_entity2context;
  j["use_token_independent"] = m.use_token_independent;
  j["token_independent_trainable"] = m.token_independent_trainable;
  j["use_copy"] = m.use_copy;
  j["use_graph_cross_attend"] = m.use_graph_cross_attend;
  j["vocab_size"] = m.vocab_size;
}

void model_from_json(const json& j, ModelConfig& m) {
  get_if(j, "d_model", m.d_model);
  get_if(j, "n_heads", m.n_heads);
  get_if(j, "n_enc_layers", m.n_enc_layers);
  get_if(j, "n_dec_layers", m.n_dec_layers);
  get_if(j, "ffn_hidden", m.ffn_hidden);
  get_if(j, "lstm_layers", m.lstm_layers);
  get_if(j, "lstm_hidden", m.lstm_hidden);
  get_if(j, "n_gat_layers", m.n_gat_layers);
  get_if(j, "gat_heads", m.gat_heads);
  get_if(j, "max_src_len", m.max_src_len);
  get_if(j, "max_tgt_len", m.max_tgt_len);
  get_if(j, "max_entities", m.max_entities);
  get_if(j, "dropout", m.dropout);
  get_if(j, "use_gat", m.use_gat);
  get_if(j, "use_fe", m.use_fe);
  get_if(j, "use_context2entity", m.use_context2entity);
  get_if(j, "use_entity2context", m.use_entity2context);
  get_if(j, "use_token_independent", m.use_token_independent);
  get_if(j, "token_independent_trainable", m.token_independent_trainable);
  get_if(j, "use_copy", m.use_copy);
  get_if(j, "use_graph_cross_attend", m.use_graph_cross_attend);
  get_if(j, "vocab_size", m.vocab_size);
}

const std::set<std::string>& train_keys() {
  static const std::set<std::string> keys = {
      "corpus", "valid_corpus", "kb", "out_dir", "max_steps", "batch_size", "grad_accum",
      "enc_lr", "enc_warmup", "dec_lr", "dec_warmup", "beta1", "beta2", "adam_eps",
      "label_smoothing", "seed", "checkpoint_interval", "min_count", "beam_size",
      "length_normalize", "filter_triples",
      // model keys, flattened into the same object
      "d_model", "n_heads", "n_enc_layers", "n_dec_layers", "ffn_hidden", "lstm_layers",
      "lstm_hidden", "n_gat_layers", "gat_heads", "max_src_len", "max_tgt_len", "max_entities",
      "dropout", "use_gat", "use_fe", "use_context2entity", "use_entity2context",
      "use_token_independent", "token_independent_trainable", "use_copy",
      "use_graph_cross_attend", "vocab_size"};
  return keys;
}

}  // namespace

std::string ModelConfig::to_json() const {
  ordered_json j;
  model_to_json(j, *this);
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("model config is not valid JSON: ") + e.what());
  }
  ModelConfig m;
  model_from_json(j, m);
  return m;
}

void ModelConfig::save(const std::string& path) const {
  std::ofstream out(path);
  DSG_DATA_CHECK(out.good(), "cannot write model config '" << path << "'");
  out << to_json() << "\n";
}

ModelConfig ModelConfig::load(const std::string& path) {
  std::ifstream in(path);
  DSG_DATA_CHECK(in.good(), "cannot open model config '" << path << "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text);
}

void TrainConfig::validate() const {
  // the vocabulary is built later in the pipeline; validate the rest
  ModelConfig m = model;
  if (m.vocab_size == 0) m.vocab_size = 7;
  m.validate();
  DSG_CHECK(!corpus.empty(), "training corpus path missing");
  DSG_CHECK(max_steps >= 1, "max_steps must be positive");
  DSG_CHECK(batch_size >= 1, "batch_size must be positive");
  DSG_CHECK(grad_accum >= 1, "grad_accum must be >= 1");
  DSG_CHECK(encoder_opt.warmup >= 1 && decoder_opt.warmup >= 1, "warmups must be >= 1");
  DSG_CHECK(label_smoothing >= 0.0 && label_smoothing < 1.0, "label_smoothing must lie in [0,1)");
  DSG_CHECK(checkpoint_interval >= 1, "checkpoint_interval must be positive");
  DSG_CHECK(min_count >= 1, "min_count must be >= 1");
  DSG_CHECK(beam_size >= 1, "beam_size must be >= 1");
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("train config is not valid JSON: ") + e.what());
  }
  DSG_DATA_CHECK(j.is_object(), "train config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    DSG_DATA_CHECK(train_keys().count(key) == 1, "unknown train config key '" << key << "'");
  }
  TrainConfig c;
  model_from_json(j, c.model);
  get_if(j, "corpus", c.corpus);
  get_if(j, "valid_corpus", c.valid_corpus);
  get_if(j, "kb", c.kb);
  get_if(j, "out_dir", c.out_dir);
  get_if(j, "max_steps", c.max_steps);
  get_if(j, "batch_size", c.batch_size);
  get_if(j, "grad_accum", c.grad_accum);
  get_if(j, "enc_lr", c.encoder_opt.lr);
  get_if(j, "enc_warmup", c.encoder_opt.warmup);
  get_if(j, "dec_lr", c.decoder_opt.lr);
  get_if(j, "dec_warmup", c.decoder_opt.warmup);
  if (j.contains("beta1")) c.encoder_opt.beta1 = c.decoder_opt.beta1 = j["beta1"].get<double>();
  if (j.contains("beta2")) c.encoder_opt.beta2 = c.decoder_opt.beta2 = j["beta2"].get<double>();
  if (j.contains("adam_eps")) c.encoder_opt.eps = c.decoder_opt.eps = j["adam_eps"].get<double>();
  get_if(j, "label_smoothing", c.label_smoothing);
  get_if(j, "seed", c.seed);
  get_if(j, "checkpoint_interval", c.checkpoint_interval);
  get_if(j, "min_count", c.min_count);
  get_if(j, "beam_size", c.beam_size);
  get_if(j, "length_normalize", c.length_normalize);
  get_if(j, "filter_triples", c.filter_triples);
  return c;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  DSG_DATA_CHECK(in.good(), "cannot open train config '" << path << "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text);
}

std::string TrainConfig::to_json() const {
  ordered_json j;
  j["corpus"] = corpus;
  j["valid_corpus"] = valid_corpus;
  j["kb"] = kb;
  j["out_dir"] = out_dir;
  j["max_steps"] = max_steps;
  j["batch_size"] = batch_size;
  j["grad_accum"] = grad_accum;
  j["enc_lr"] = encoder_opt.lr;
  j["enc_warmup"] = encoder_opt.warmup;
  j["dec_lr"] = decoder_opt.lr;
  j["dec_warmup"] = decoder_opt.warmup;
  j["beta1"] = encoder_opt.beta1;
  j["beta2"] = encoder_opt.beta2;
  j["adam_eps"] = encoder_opt.eps;
  j["label_smoothing"] = label_smoothing;
  j["seed"] = seed;
  j["checkpoint_interval"] = checkpoint_interval;
  j["min_count"] = min_count;
  j["beam_size"] = beam_size;
  j["length_normalize"] = length_normalize;
  j["filter_triples"] = filter_triples;
  model_to_json(j, model);
  return j.dump(2);
}

}  // namespace dsgsum
