#pragma once

#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "dsgsum/corpus.hpp"

namespace dsgsum {

// every emitted relation carries this label
inline constexpr const char* kRelationLabel = "have relation with";

struct EntitySpan {
  int sent = 0;
  int start = 0;  // token index, inclusive
  int end = 0;    // token index, inclusive
  std::string surface;

  bool operator==(const EntitySpan& o) const {
    return sent == o.sent && start == o.start && end == o.end;
  }
};

struct CorefCluster {
  std::vector<EntitySpan> mentions;  // >= 3 after filtering
  int main_mention = 0;              // index into mentions
};

enum class TripleSource { CorefCooccur, Kb };

const char* triple_source_name(TripleSource s);

struct Triple {
  std::string subject;
  std::string relation = kRelationLabel;
  std::string object;
  TripleSource source = TripleSource::CorefCooccur;
};

struct GraphNode {
  int id = 0;
  std::string surface;   // lowercased
  EntitySpan span;       // representative occurrence
  int freq_count = 0;
  int freq_rank = 0;
};

struct GraphEdge {
  int src = 0;
  int dst = 0;
  TripleSource source = TripleSource::CorefCooccur;
};

struct SemanticGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  // undirected adjacency including the self loop, sorted ascending
  std::vector<std::vector<int>> neighbors;

  std::string to_json_line() const;
  static SemanticGraph from_json_line(const std::string& line);
};

// (subject, type, object) facts over lowercased surface forms; only the
// whitelisted relation types are kept
class RelationKB {
 public:
  static const std::set<std::string>& whitelist();

  // TSV lines: subject<TAB>type<TAB>object; non-whitelisted types are
  // skipped with a warning
  static RelationKB load(const std::string& path);

  void add(const std::string& subject, const std::string& type, const std::string& object);
  bool has_relation(const std::string& subject, const std::string& object) const;
  const std::vector<std::vector<std::string>>& surfaces() const { return surfaces_; }
  size_t size() const { return facts_.size(); }

 private:
  std::unordered_set<std::string> facts_;  // "subject\tobject"
  std::vector<std::vector<std::string>> surfaces_;  // tokenized argument surfaces
  std::unordered_set<std::string> surface_keys_;
};

const std::set<std::string>& default_stopwords();

struct GraphOptions {
  bool filter_triples = false;  // the 10-word argument cap, off by default
  int max_arg_words = 10;
};

// precomputed spans are used verbatim (minus stopword-only ones); otherwise
// maximal capitalized runs plus KB surface-form matches when a KB is given
std::vector<EntitySpan> annotate_entities(const RawPair& doc, const std::set<std::string>& stopwords,
                                          const RelationKB* kb = nullptr);

// precomputed clusters when present, else exact lowercased-surface grouping;
// clusters with fewer than 3 mentions are discarded
std::vector<CorefCluster> cluster_corefs(const RawPair& doc, const std::vector<EntitySpan>& spans);

std::vector<Triple> extract_relations(const RawPair& doc, const std::vector<EntitySpan>& spans,
                                      const std::vector<CorefCluster>& clusters,
                                      const RelationKB& kb);

std::vector<Triple> filter_triples(const std::vector<Triple>& triples, int max_arg_words,
                                   bool enabled);

// counts case-insensitive contiguous occurrences of each surface and ranks
// by (count desc, first occurrence asc); returns per-node (count, rank)
void rank_frequency(const RawPair& doc, std::vector<GraphNode>& nodes);

SemanticGraph build_graph(const RawPair& doc, const RelationKB& kb,
                          const GraphOptions& options = {},
                          const std::set<std::string>& stopwords = default_stopwords());

}  // namespace dsgsum
