#include "dsgsum/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"

namespace dsgsum {

using nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

namespace {

std::vector<std::vector<std::string>> tokenize_sentences(const std::vector<std::string>& sents) {
  std::vector<std::vector<std::string>> out;
  out.reserve(sents.size());
  for (const std::string& s : sents) out.push_back(split_ws(s));
  return out;
}

RawPair parse_pair(const json& j, const std::string& path, size_t line_no) {
  RawPair p;
  DSG_DATA_CHECK(j.is_object(), path << ":" << line_no << ": record is not a JSON object");
  DSG_DATA_CHECK(j.contains("id") && j["id"].is_string(), path << ":" << line_no << ": missing string field 'id'");
  p.id = j["id"].get<std::string>();
  DSG_DATA_CHECK(!p.id.empty(), path << ":" << line_no << ": empty id");
  DSG_DATA_CHECK(j.contains("document") && j["document"].is_array(),
                 path << ":" << line_no << ": missing array field 'document'");
  for (const auto& s : j["document"]) {
    DSG_DATA_CHECK(s.is_string(), path << ":" << line_no << ": document sentences must be strings");
    p.document.push_back(s.get<std::string>());
  }
  DSG_DATA_CHECK(!p.document.empty(), path << ":" << line_no << ": document has no sentences");
  if (j.contains("summary")) {
    DSG_DATA_CHECK(j["summary"].is_array(), path << ":" << line_no << ": 'summary' must be an array");
    for (const auto& s : j["summary"]) {
      DSG_DATA_CHECK(s.is_string(), path << ":" << line_no << ": summary sentences must be strings");
      p.summary.push_back(s.get<std::string>());
    }
  }
  p.doc_tokens = tokenize_sentences(p.document);
  p.sum_tokens = tokenize_sentences(p.summary);
  if (j.contains("entities") && !j["entities"].is_null()) {
    DSG_DATA_CHECK(j["entities"].is_array(), path << ":" << line_no << ": 'entities' must be an array");
    std::vector<SpanRef> spans;
    for (const auto& e : j["entities"]) {
      DSG_DATA_CHECK(e.is_object() && e.contains("sent") && e.contains("start") && e.contains("end"),
                     path << ":" << line_no << ": entity needs sent/start/end");
      SpanRef r{e["sent"].get<int>(), e["start"].get<int>(), e["end"].get<int>()};
      DSG_DATA_CHECK(r.sent >= 0 && r.sent < static_cast<int>(p.doc_tokens.size()),
                     path << ":" << line_no << ": entity sentence index out of range");
      const int len = static_cast<int>(p.doc_tokens[r.sent].size());
      DSG_DATA_CHECK(0 <= r.start && r.start <= r.end && r.end < len,
                     path << ":" << line_no << ": entity span out of range");
      spans.push_back(r);
    }
    p.entities = std::move(spans);
  }
  if (j.contains("corefs") && !j["corefs"].is_null()) {
    DSG_DATA_CHECK(j["corefs"].is_array(), path << ":" << line_no << ": 'corefs' must be an array");
    std::vector<std::vector<int>> clusters;
    const int n_ents = p.entities ? static_cast<int>(p.entities->size()) : 0;
    for (const auto& c : j["corefs"]) {
      DSG_DATA_CHECK(c.is_array(), path << ":" << line_no << ": coref cluster must be an array");
      std::vector<int> idx;
      for (const auto& v : c) {
        const int i = v.get<int>();
        DSG_DATA_CHECK(i >= 0 && i < n_ents, path << ":" << line_no << ": coref entity index out of range");
        idx.push_back(i);
      }
      clusters.push_back(std::move(idx));
    }
    p.corefs = std::move(clusters);
  }
  return p;
}

}  // namespace

std::vector<RawPair> load_corpus(const std::string& path, Split split) {
  std::ifstream in(path);
  DSG_DATA_CHECK(in.good(), "cannot open corpus file '" << path << "'");
  std::vector<RawPair> pairs;
  std::set<std::string> seen;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed JSON line: " + e.what());
    }
    RawPair p = parse_pair(j, path, line_no);
    DSG_DATA_CHECK(seen.insert(p.id).second,
                   path << ":" << line_no << ": duplicate id '" << p.id << "'");
    pairs.push_back(std::move(p));
  }
  DSG_LOG_DEBUG("loaded " << pairs.size() << " pairs from " << path << " (" << split_name(split) << ")");
  return pairs;
}

Vocab::Vocab() {
  static const char* kReserved[] = {"[PAD]", "[UNK]", "[BOS]", "[EOS]", "[CLS]", "[SEP]"};
  for (const char* t : kReserved) {
    token_to_id_.emplace(t, static_cast<int>(id_to_token_.size()));
    id_to_token_.emplace_back(t);
  }
}

Vocab Vocab::build(const std::vector<RawPair>& pairs, int min_count) {
  DSG_CHECK(min_count >= 1, "min_count must be >= 1");
  DSG_CHECK(!pairs.empty(), "cannot build a vocabulary from an empty corpus");
  std::map<std::string, int64_t> counts;
  for (const RawPair& p : pairs) {
    for (const auto& sent : p.doc_tokens)
      for (const std::string& t : sent) ++counts[lowercase(t)];
    for (const auto& sent : p.sum_tokens)
      for (const std::string& t : sent) ++counts[lowercase(t)];
  }
  std::vector<std::pair<std::string, int64_t>> items(counts.begin(), counts.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (const auto& [tok, cnt] : items) {
    if (cnt < min_count) continue;
    v.token_to_id_.emplace(tok, static_cast<int>(v.id_to_token_.size()));
    v.id_to_token_.push_back(tok);
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(lowercase(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  DSG_CHECK(id >= 0 && id < size(), "token id " << id << " out of range");
  return id_to_token_[id];
}

void Vocab::save(const std::string& path) const {
  nlohmann::ordered_json j;
  j["tokens"] = json::array();
  for (int i = kNumReserved; i < size(); ++i) j["tokens"].push_back(id_to_token_[i]);
  std::ofstream out(path);
  DSG_DATA_CHECK(out.good(), "cannot write vocab file '" << path << "'");
  out << j.dump() << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  DSG_DATA_CHECK(in.good(), "cannot open vocab file '" << path << "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw DataError("vocab file '" + path + "' is not valid JSON: " + e.what());
  }
  DSG_DATA_CHECK(j.contains("tokens") && j["tokens"].is_array(),
                 "vocab file '" << path << "' missing 'tokens' array");
  Vocab v;
  for (const auto& t : j["tokens"]) {
    const std::string tok = t.get<std::string>();
    DSG_DATA_CHECK(v.token_to_id_.emplace(tok, static_cast<int>(v.id_to_token_.size())).second,
                   "vocab file '" << path << "' has duplicate token '" << tok << "'");
    v.id_to_token_.push_back(tok);
  }
  return v;
}

EncodedDoc encode_document(const RawPair& pair, const Vocab& vocab, int max_src_len) {
  DSG_CHECK(max_src_len >= 3, "max_src_len must be >= 3");
  EncodedDoc out;
  int seg = 0;
  for (const auto& sent : pair.doc_tokens) {
    const int framed = static_cast<int>(sent.size()) + 2;
    if (static_cast<int>(out.token_ids.size()) + framed > max_src_len) break;
    const int start = static_cast<int>(out.token_ids.size());
    out.token_ids.push_back(Vocab::kCls);
    out.segment_ids.push_back(seg);
    for (const std::string& t : sent) {
      out.token_ids.push_back(vocab.id(t));
      out.segment_ids.push_back(seg);
    }
    out.token_ids.push_back(Vocab::kSep);
    out.segment_ids.push_back(seg);
    out.sentence_bounds.emplace_back(start, static_cast<int>(out.token_ids.size()));
    seg ^= 1;
  }
  if (out.token_ids.empty()) {
    out.token_ids = {Vocab::kCls, Vocab::kSep};
    out.segment_ids = {0, 0};
    out.sentence_bounds.emplace_back(0, 2);
  }
  out.positions.resize(out.token_ids.size());
  for (size_t i = 0; i < out.positions.size(); ++i) out.positions[i] = static_cast<int>(i);
  return out;
}

std::vector<int> encode_summary(const RawPair& pair, const Vocab& vocab, int max_tgt_len) {
  std::vector<int> out{Vocab::kBos};
  for (const auto& sent : pair.sum_tokens) {
    for (const std::string& t : sent) {
      if (static_cast<int>(out.size()) - 1 >= max_tgt_len) break;
      out.push_back(vocab.id(t));
    }
  }
  out.push_back(Vocab::kEos);
  return out;
}

std::vector<std::string> decode_tokens(const std::vector<int>& ids, const Vocab& vocab) {
  std::vector<std::string> toks;
  for (int id : ids) {
    if (id < Vocab::kNumReserved) continue;
    toks.push_back(vocab.token(id));
  }
  return toks;
}

}  // namespace dsgsum
