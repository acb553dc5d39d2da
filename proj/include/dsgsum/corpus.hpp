#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dsgsum/common.hpp"

namespace dsgsum {

// token span inside one sentence, end inclusive
struct SpanRef {
  int sent = 0;
  int start = 0;
  int end = 0;
};

struct RawPair {
  std::string id;
  std::vector<std::string> document;  // sentence strings
  std::vector<std::string> summary;
  std::vector<std::vector<std::string>> doc_tokens;  // whitespace-tokenized
  std::vector<std::vector<std::string>> sum_tokens;
  std::optional<std::vector<SpanRef>> entities;          // precomputed annotations
  std::optional<std::vector<std::vector<int>>> corefs;   // clusters of entity indices
};

enum class Split { Train, Valid, Test };

const char* split_name(Split s);

// JSONL, one record per line:
// {"id": str, "document": [str...], "summary": [str...],
//  "entities": [{"sent","start","end"}]?, "corefs": [[int...]...]?}
std::vector<RawPair> load_corpus(const std::string& path, Split split);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kCls = 4;
  static constexpr int kSep = 5;
  static constexpr int kNumReserved = 6;

  Vocab();

  // lowercased tokens with count >= min_count, ids assigned by
  // (count desc, token asc) starting after the reserved block
  static Vocab build(const std::vector<RawPair>& pairs, int min_count);

  int id(const std::string& token) const;  // lowercases; kUnk when absent
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

struct EncodedDoc {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;                     // alternates 0/1 per sentence
  std::vector<int> positions;                       // 0-based
  std::vector<std::pair<int, int>> sentence_bounds; // [start, end) per kept sentence
};

// wraps each sentence in [CLS]..[SEP]; whole trailing sentences are dropped
// rather than split when max_src_len would be exceeded
EncodedDoc encode_document(const RawPair& pair, const Vocab& vocab, int max_src_len);

// [BOS] + ids truncated to max_tgt_len + [EOS]
std::vector<int> encode_summary(const RawPair& pair, const Vocab& vocab, int max_tgt_len);

// inverse of encode_document modulo markers: drops reserved ids, maps the
// rest back to (lowercased) tokens
std::vector<std::string> decode_tokens(const std::vector<int>& ids, const Vocab& vocab);

}  // namespace dsgsum
