#include "dsgsum/model.hpp"

#include <algorithm>
#include <cmath>

namespace dsgsum {

Model::Model(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(splitmix64(seed ^ 0x9a37cbb31ULL));
  enc_ = make_encoder_params(cfg_, params_, rng);
  dec_ = make_decoder_params(cfg_, params_, rng);
}

Model::PreparedGraph Model::prepare_graph(const SemanticGraph& graph, const Vocab& vocab) const {
  PreparedGraph out;
  const size_t n = std::min(graph.nodes.size(), static_cast<size_t>(cfg_.max_entities));
  for (size_t i = 0; i < n; ++i) {
    const GraphNode& node = graph.nodes[i];
    std::vector<int> ids;
    for (const std::string& tok : split_ws(node.surface)) ids.push_back(vocab.id(tok));
    if (ids.empty()) ids.push_back(Vocab::kUnk);
    out.input.node_token_ids.push_back(std::move(ids));
  }
  // ranks/neighbors restricted to the kept prefix keep their relative order
  std::vector<std::pair<int, int>> order;  // (rank, node)
  for (size_t i = 0; i < n; ++i) order.emplace_back(graph.nodes[i].freq_rank, static_cast<int>(i));
  std::sort(order.begin(), order.end());
  out.input.ranks.assign(n, 0);
  for (size_t r = 0; r < order.size(); ++r) out.input.ranks[order[r].second] = static_cast<int>(r);
  out.input.neighbors.assign(n, {});
  for (size_t i = 0; i < n; ++i) out.input.neighbors[i].push_back(static_cast<int>(i));
  for (const GraphEdge& e : graph.edges) {
    if (e.src >= static_cast<int>(n) || e.dst >= static_cast<int>(n) || e.src == e.dst) continue;
    out.input.neighbors[e.src].push_back(e.dst);
    out.input.neighbors[e.dst].push_back(e.src);
  }
  for (auto& nb : out.input.neighbors) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  if (cfg_.use_copy) {
    for (size_t i = 0; i < n; ++i) {
      if (i > 0) out.copy_token_ids.push_back(Vocab::kSep);
      for (const std::string& tok : split_ws(graph.nodes[i].surface))
        out.copy_token_ids.push_back(vocab.id(tok));
    }
    if (static_cast<int>(out.copy_token_ids.size()) > cfg_.max_src_len)
      out.copy_token_ids.resize(cfg_.max_src_len);
  }
  return out;
}

Model::EncodedState Model::encode(const EncodedDoc& doc, const PreparedGraph& graph) const {
  EncodedState st;
  st.h = encode_document_tokens(enc_, cfg_, doc, cfg_.dropout);
  st.src_valid = source_valid_mask(doc);
  st.g = encode_graph(enc_, cfg_, graph.input, cfg_.dropout);
  if (cfg_.use_copy && !graph.copy_token_ids.empty()) {
    EncodedDoc copy_doc;
    copy_doc.token_ids = graph.copy_token_ids;
    copy_doc.segment_ids.assign(copy_doc.token_ids.size(), 0);
    copy_doc.positions.resize(copy_doc.token_ids.size());
    for (size_t i = 0; i < copy_doc.positions.size(); ++i)
      copy_doc.positions[i] = static_cast<int>(i);
    CopyText ct;
    ct.states = encode_document_tokens(enc_, cfg_, copy_doc, cfg_.dropout);
    ct.vocab_ids = graph.copy_token_ids;
    st.copy = std::move(ct);
  }
  return st;
}

DecodeTrace Model::decode_prefix(const EncodedState& state,
                                 const std::vector<int>& decoder_input) const {
  return decode(dec_, cfg_, decoder_input, state.h, state.src_valid, state.g, cfg_.dropout,
                state.copy);
}

Tensor Model::forward(const EncodedDoc& doc, const PreparedGraph& graph,
                      const std::vector<int>& decoder_input) const {
  EncodedState st = encode(doc, graph);
  return decode_prefix(st, decoder_input).p_vocab;
}

std::vector<double> Model::next_token_logprobs(const EncodedState& state,
                                               const std::vector<int>& prefix) const {
  DecodeTrace trace = decode_prefix(state, prefix);
  const int64_t v = trace.p_vocab.cols();
  const int64_t last = trace.p_vocab.rows() - 1;
  std::vector<double> logp(static_cast<size_t>(v));
  for (int64_t w = 0; w < v; ++w) logp[w] = std::log(trace.p_vocab.at(last, w));
  return logp;
}

}  // namespace dsgsum
