#pragma once

#include <optional>

#include "dsgsum/decoder.hpp"
#include "dsgsum/encoder.hpp"
#include "dsgsum/graph.hpp"

namespace dsgsum {

// Full summarizer: document transformer encoder, graph encoder and the
// graph-fused decoder over one parameter registry.
class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }
  const EncoderParams& encoder() const { return enc_; }
  const DecoderParams& decoder() const { return dec_; }

  // graph converted to ids; copy_token_ids filled only when the copy path
  // is active (node tokens joined with [SEP])
  struct PreparedGraph {
    GraphInput input;
    std::vector<int> copy_token_ids;
  };
  PreparedGraph prepare_graph(const SemanticGraph& graph, const Vocab& vocab) const;

  struct EncodedState {
    Tensor h;
    std::vector<uint8_t> src_valid;
    Tensor g;
    std::optional<CopyText> copy;
  };
  EncodedState encode(const EncodedDoc& doc, const PreparedGraph& graph) const;

  // probabilities for each next-token position given the shifted target
  // prefix (decoder input), [T, V]
  DecodeTrace decode_prefix(const EncodedState& state, const std::vector<int>& decoder_input) const;

  // teacher-forced distribution rows, convenience for training/tests
  Tensor forward(const EncodedDoc& doc, const PreparedGraph& graph,
                 const std::vector<int>& decoder_input) const;

  // log P(next token | prefix) from the final decode position
  std::vector<double> next_token_logprobs(const EncodedState& state,
                                          const std::vector<int>& prefix) const;

 private:
  ModelConfig cfg_;
  ParamRegistry params_;
  EncoderParams enc_;
  DecoderParams dec_;
};

}  // namespace dsgsum
