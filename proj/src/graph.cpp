#include "dsgsum/graph.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>

#include "json.hpp"

namespace dsgsum {

using nlohmann::json;
using nlohmann::ordered_json;

const char* triple_source_name(TripleSource s) {
  return s == TripleSource::CorefCooccur ? "coref_cooccur" : "kb";
}

const std::set<std::string>& RelationKB::whitelist() {
  static const std::set<std::string> wl = {"UsedFor",      "CapableOf", "Causes",
                                           "CausesDesire", "Desires",   "ObstructedBy"};
  return wl;
}

RelationKB RelationKB::load(const std::string& path) {
  std::ifstream in(path);
  DSG_DATA_CHECK(in.good(), "cannot open KB file '" << path << "'");
  RelationKB kb;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    DSG_DATA_CHECK(t2 != std::string::npos,
                   path << ":" << line_no << ": expected subject<TAB>type<TAB>object");
    std::string subject = line.substr(0, t1);
    std::string type = line.substr(t1 + 1, t2 - t1 - 1);
    std::string object = line.substr(t2 + 1);
    if (!object.empty() && object.back() == '\r') object.pop_back();
    if (whitelist().count(type) == 0) {
      DSG_LOG_INFO("kb: skipping non-whitelisted relation type '" << type << "' at " << path
                                                                  << ":" << line_no);
      continue;
    }
    kb.add(subject, type, object);
  }
  return kb;
}

void RelationKB::add(const std::string& subject, const std::string& type,
                     const std::string& object) {
  DSG_CHECK(whitelist().count(type) == 1, "relation type '" << type << "' is not whitelisted");
  const std::string s = lowercase(subject);
  const std::string o = lowercase(object);
  facts_.insert(s + "\t" + o);
  for (const std::string& surf : {s, o}) {
    if (surface_keys_.insert(surf).second) surfaces_.push_back(split_ws(surf));
  }
}

bool RelationKB::has_relation(const std::string& subject, const std::string& object) const {
  return facts_.count(lowercase(subject) + "\t" + lowercase(object)) > 0;
}

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "a",     "an",    "the",   "of",    "in",   "on",    "at",    "to",    "from",  "by",
      "with",  "for",   "and",   "or",    "but",  "is",    "are",   "was",   "were",  "be",
      "been",  "being", "he",    "she",   "it",   "they",  "them",  "his",   "her",   "its",
      "their", "this",  "that",  "these", "those","i",     "you",   "we",    "me",    "him",
      "us",    "my",    "your",  "our",   "as",   "if",    "then",  "than",  "so",    "not",
      "no",    "do",    "does",  "did",   "have", "has",   "had",   "will",  "would", "can",
      "could", "should","may",   "might", "into", "over",  "under", "about", "there", "here",
      "who",   "what",  "which", "when",  "where","how",   "why",   "all",   "any",   "some",
      "such",  "own",   "same",  "too",   "very", "just",  "also",  "up",    "down",  "out",
      "s",     "t",     "'s",    "n't"};
  return words;
}

namespace {

std::string span_surface(const RawPair& doc, const SpanRef& r) {
  std::vector<std::string> toks(doc.doc_tokens[r.sent].begin() + r.start,
                                doc.doc_tokens[r.sent].begin() + r.end + 1);
  return join_tokens(toks);
}

bool stopword_only(const RawPair& doc, const EntitySpan& sp, const std::set<std::string>& stop) {
  for (int i = sp.start; i <= sp.end; ++i)
    if (stop.count(lowercase(doc.doc_tokens[sp.sent][i])) == 0) return false;
  return true;
}

bool starts_capitalized(const std::string& tok) {
  return !tok.empty() && tok[0] >= 'A' && tok[0] <= 'Z';
}

bool span_before(const EntitySpan& a, const EntitySpan& b) {
  if (a.sent != b.sent) return a.sent < b.sent;
  if (a.start != b.start) return a.start < b.start;
  return a.end < b.end;
}

}  // namespace

std::vector<EntitySpan> annotate_entities(const RawPair& doc, const std::set<std::string>& stopwords,
                                          const RelationKB* kb) {
  std::vector<EntitySpan> spans;
  if (doc.entities) {
    for (const SpanRef& r : *doc.entities) {
      EntitySpan sp{r.sent, r.start, r.end, span_surface(doc, r)};
      if (stopword_only(doc, sp, stopwords)) continue;
      spans.push_back(std::move(sp));
    }
    return spans;
  }
  std::set<std::tuple<int, int, int>> seen;
  auto emit = [&](int sent, int start, int end) {
    if (!seen.insert({sent, start, end}).second) return;
    EntitySpan sp{sent, start, end, span_surface(doc, SpanRef{sent, start, end})};
    if (stopword_only(doc, sp, stopwords)) return;
    spans.push_back(std::move(sp));
  };
  // maximal capitalized runs
  for (int s = 0; s < static_cast<int>(doc.doc_tokens.size()); ++s) {
    const auto& toks = doc.doc_tokens[s];
    int i = 0;
    while (i < static_cast<int>(toks.size())) {
      if (!starts_capitalized(toks[i])) {
        ++i;
        continue;
      }
      int j = i;
      while (j + 1 < static_cast<int>(toks.size()) && starts_capitalized(toks[j + 1])) ++j;
      emit(s, i, j);
      i = j + 1;
    }
  }
  // surface-form matches against the KB arguments
  if (kb != nullptr && kb->size() > 0) {
    for (int s = 0; s < static_cast<int>(doc.doc_tokens.size()); ++s) {
      const auto& toks = doc.doc_tokens[s];
      std::vector<std::string> lower(toks.size());
      for (size_t i = 0; i < toks.size(); ++i) lower[i] = lowercase(toks[i]);
      for (const auto& surf : kb->surfaces()) {
        if (surf.empty() || surf.size() > toks.size()) continue;
        for (size_t i = 0; i + surf.size() <= toks.size(); ++i) {
          bool match = true;
          for (size_t j = 0; j < surf.size(); ++j)
            if (lower[i + j] != surf[j]) {
              match = false;
              break;
            }
          if (match) emit(s, static_cast<int>(i), static_cast<int>(i + surf.size() - 1));
        }
      }
    }
    std::sort(spans.begin(), spans.end(), span_before);
  }
  return spans;
}

std::vector<CorefCluster> cluster_corefs(const RawPair& doc, const std::vector<EntitySpan>& spans) {
  std::vector<CorefCluster> clusters;
  auto pick_main = [](const CorefCluster& c) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(c.mentions.size()); ++i) {
      const EntitySpan& a = c.mentions[i];
      const EntitySpan& b = c.mentions[best];
      if (a.sent != b.sent || a.start != b.start) {
        if (span_before(a, b)) best = i;
        continue;
      }
      // same position: prefer the longer surface
      if (a.end - a.start > b.end - b.start) best = i;
    }
    return best;
  };
  if (doc.corefs) {
    DSG_CHECK(doc.entities, "precomputed corefs require precomputed entities");
    // map original entity indices to surviving spans
    std::map<std::tuple<int, int, int>, const EntitySpan*> by_pos;
    for (const EntitySpan& sp : spans) by_pos[{sp.sent, sp.start, sp.end}] = &sp;
    for (const auto& cluster_idx : *doc.corefs) {
      CorefCluster c;
      for (int idx : cluster_idx) {
        const SpanRef& r = (*doc.entities)[idx];
        auto it = by_pos.find({r.sent, r.start, r.end});
        if (it == by_pos.end()) continue;  // span dropped by the stopword filter
        c.mentions.push_back(*it->second);
      }
      if (c.mentions.size() < 3) continue;
      c.main_mention = pick_main(c);
      clusters.push_back(std::move(c));
    }
  } else {
    std::map<std::string, CorefCluster> by_surface;
    std::vector<std::string> order;
    for (const EntitySpan& sp : spans) {
      const std::string key = lowercase(sp.surface);
      if (by_surface.find(key) == by_surface.end()) order.push_back(key);
      by_surface[key].mentions.push_back(sp);
    }
    for (const std::string& key : order) {
      CorefCluster& c = by_surface[key];
      if (c.mentions.size() < 3) continue;
      c.main_mention = pick_main(c);
      clusters.push_back(std::move(c));
    }
  }
  std::sort(clusters.begin(), clusters.end(), [](const CorefCluster& a, const CorefCluster& b) {
    return span_before(a.mentions[a.main_mention], b.mentions[b.main_mention]);
  });
  return clusters;
}

std::vector<Triple> extract_relations(const RawPair& doc, const std::vector<EntitySpan>& spans,
                                      const std::vector<CorefCluster>& clusters,
                                      const RelationKB& kb) {
  (void)doc;
  std::vector<Triple> triples;
  std::set<std::string> dedup;
  auto emit = [&](const std::string& subject, const std::string& object, TripleSource src) {
    if (subject == object) return;
    const std::string key = subject + "\t" + object + "\t" + triple_source_name(src);
    if (!dedup.insert(key).second) return;
    triples.push_back(Triple{subject, kRelationLabel, object, src});
  };

  // cluster co-occurrence: any mention pair in one sentence relates the
  // two main mentions
  for (size_t a = 0; a < clusters.size(); ++a) {
    std::set<int> sents_a;
    for (const EntitySpan& m : clusters[a].mentions) sents_a.insert(m.sent);
    for (size_t b = a + 1; b < clusters.size(); ++b) {
      bool cooccur = false;
      for (const EntitySpan& m : clusters[b].mentions)
        if (sents_a.count(m.sent) > 0) {
          cooccur = true;
          break;
        }
      if (!cooccur) continue;
      emit(lowercase(clusters[a].mentions[clusters[a].main_mention].surface),
           lowercase(clusters[b].mentions[clusters[b].main_mention].surface),
           TripleSource::CorefCooccur);
    }
  }

  // knowledge-base pairs within one sentence
  if (kb.size() > 0) {
    std::map<int, std::vector<const EntitySpan*>> by_sent;
    for (const EntitySpan& sp : spans) by_sent[sp.sent].push_back(&sp);
    for (const auto& [sent, list] : by_sent) {
      (void)sent;
      for (const EntitySpan* si : list) {
        for (const EntitySpan* sj : list) {
          if (si == sj) continue;
          const std::string s = lowercase(si->surface);
          const std::string o = lowercase(sj->surface);
          if (kb.has_relation(s, o)) emit(s, o, TripleSource::Kb);
        }
      }
    }
  }
  return triples;
}

std::vector<Triple> filter_triples(const std::vector<Triple>& triples, int max_arg_words,
                                   bool enabled) {
  if (!enabled) return triples;
  std::vector<Triple> out;
  for (const Triple& t : triples) {
    if (static_cast<int>(split_ws(t.subject).size()) > max_arg_words) continue;
    if (static_cast<int>(split_ws(t.object).size()) > max_arg_words) continue;
    out.push_back(t);
  }
  return out;
}

namespace {

// all starting positions of `surface` tokens inside the document, lowercased
std::vector<std::pair<int, int>> surface_occurrences(const RawPair& doc,
                                                     const std::vector<std::string>& surf) {
  std::vector<std::pair<int, int>> hits;
  for (int s = 0; s < static_cast<int>(doc.doc_tokens.size()); ++s) {
    const auto& toks = doc.doc_tokens[s];
    if (surf.empty() || surf.size() > toks.size()) continue;
    for (size_t i = 0; i + surf.size() <= toks.size(); ++i) {
      bool match = true;
      for (size_t j = 0; j < surf.size(); ++j)
        if (lowercase(toks[i + j]) != surf[j]) {
          match = false;
          break;
        }
      if (match) hits.emplace_back(s, static_cast<int>(i));
    }
  }
  return hits;
}

int64_t global_pos(const RawPair& doc, int sent, int start) {
  int64_t off = 0;
  for (int s = 0; s < sent; ++s) off += static_cast<int64_t>(doc.doc_tokens[s].size());
  return off + start;
}

}  // namespace

void rank_frequency(const RawPair& doc, std::vector<GraphNode>& nodes) {
  struct Key {
    int count;
    int64_t first_pos;
    int idx;
  };
  std::vector<Key> keys;
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
    const auto hits = surface_occurrences(doc, split_ws(nodes[i].surface));
    nodes[i].freq_count = static_cast<int>(hits.size());
    const int64_t pos = hits.empty() ? std::numeric_limits<int64_t>::max()
                                     : global_pos(doc, hits[0].first, hits[0].second);
    keys.push_back({nodes[i].freq_count, pos, i});
  }
  std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    if (a.count != b.count) return a.count > b.count;
    if (a.first_pos != b.first_pos) return a.first_pos < b.first_pos;
    return a.idx < b.idx;
  });
  for (int r = 0; r < static_cast<int>(keys.size()); ++r) nodes[keys[r].idx].freq_rank = r;
}

SemanticGraph build_graph(const RawPair& doc, const RelationKB& kb, const GraphOptions& options,
                          const std::set<std::string>& stopwords) {
  std::vector<EntitySpan> spans = annotate_entities(doc, stopwords, &kb);
  std::vector<CorefCluster> clusters = cluster_corefs(doc, spans);
  std::vector<Triple> triples = extract_relations(doc, spans, clusters, kb);
  triples = filter_triples(triples, options.max_arg_words, options.filter_triples);

  // nodes: triple arguments plus cluster main mentions, deduplicated by
  // lowercased surface, ordered by first occurrence in the document
  std::vector<std::string> surfaces;
  std::set<std::string> surface_set;
  auto add_surface = [&](const std::string& s) {
    if (surface_set.insert(s).second) surfaces.push_back(s);
  };
  for (const Triple& t : triples) {
    add_surface(t.subject);
    add_surface(t.object);
  }
  for (const CorefCluster& c : clusters) add_surface(lowercase(c.mentions[c.main_mention].surface));

  SemanticGraph g;
  for (const std::string& s : surfaces) {
    GraphNode n;
    n.surface = s;
    // representative span: earliest annotated span with this surface
    const EntitySpan* rep = nullptr;
    for (const EntitySpan& sp : spans) {
      if (lowercase(sp.surface) != s) continue;
      if (rep == nullptr || span_before(sp, *rep)) rep = &sp;
    }
    if (rep != nullptr) {
      n.span = *rep;
    } else {
      const auto hits = surface_occurrences(doc, split_ws(s));
      if (!hits.empty()) {
        n.span = EntitySpan{hits[0].first, hits[0].second,
                            hits[0].second + static_cast<int>(split_ws(s).size()) - 1, s};
      } else {
        n.span = EntitySpan{0, 0, 0, s};
      }
    }
    g.nodes.push_back(std::move(n));
  }
  std::sort(g.nodes.begin(), g.nodes.end(), [&](const GraphNode& a, const GraphNode& b) {
    const int64_t pa = global_pos(doc, a.span.sent, a.span.start);
    const int64_t pb = global_pos(doc, b.span.sent, b.span.start);
    if (pa != pb) return pa < pb;
    return a.surface < b.surface;
  });
  std::map<std::string, int> node_id;
  for (int i = 0; i < static_cast<int>(g.nodes.size()); ++i) {
    g.nodes[i].id = i;
    node_id[g.nodes[i].surface] = i;
  }
  rank_frequency(doc, g.nodes);

  for (const Triple& t : triples)
    g.edges.push_back(GraphEdge{node_id.at(t.subject), node_id.at(t.object), t.source});

  g.neighbors.assign(g.nodes.size(), {});
  for (int i = 0; i < static_cast<int>(g.nodes.size()); ++i) g.neighbors[i].push_back(i);
  for (const GraphEdge& e : g.edges) {
    if (e.src != e.dst) {
      g.neighbors[e.src].push_back(e.dst);
      g.neighbors[e.dst].push_back(e.src);
    }
  }
  for (auto& nb : g.neighbors) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return g;
}

std::string SemanticGraph::to_json_line() const {
  ordered_json j;
  j["nodes"] = ordered_json::array();
  for (const GraphNode& n : nodes) {
    ordered_json nj;
    nj["id"] = n.id;
    nj["surface"] = n.surface;
    nj["freq_count"] = n.freq_count;
    nj["freq_rank"] = n.freq_rank;
    j["nodes"].push_back(std::move(nj));
  }
  j["edges"] = ordered_json::array();
  for (const GraphEdge& e : edges) {
    ordered_json ej;
    ej["src"] = e.src;
    ej["dst"] = e.dst;
    ej["relation"] = kRelationLabel;
    ej["source"] = triple_source_name(e.source);
    j["edges"].push_back(std::move(ej));
  }
  return j.dump();
}

SemanticGraph SemanticGraph::from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed graph JSON: ") + e.what());
  }
  SemanticGraph g;
  DSG_DATA_CHECK(j.contains("nodes") && j.contains("edges"), "graph JSON missing nodes/edges");
  for (const auto& nj : j["nodes"]) {
    GraphNode n;
    n.id = nj.at("id").get<int>();
    n.surface = nj.at("surface").get<std::string>();
    n.freq_count = nj.at("freq_count").get<int>();
    n.freq_rank = nj.at("freq_rank").get<int>();
    n.span.surface = n.surface;
    g.nodes.push_back(std::move(n));
  }
  for (const auto& ej : j["edges"]) {
    GraphEdge e;
    e.src = ej.at("src").get<int>();
    e.dst = ej.at("dst").get<int>();
    DSG_DATA_CHECK(ej.at("relation").get<std::string>() == kRelationLabel,
                   "graph JSON edge with unexpected relation");
    e.source = ej.at("source").get<std::string>() == "kb" ? TripleSource::Kb
                                                          : TripleSource::CorefCooccur;
    g.edges.push_back(e);
  }
  g.neighbors.assign(g.nodes.size(), {});
  for (int i = 0; i < static_cast<int>(g.nodes.size()); ++i) g.neighbors[i].push_back(i);
  for (const GraphEdge& e : g.edges) {
    if (e.src != e.dst) {
      g.neighbors[e.src].push_back(e.dst);
      g.neighbors[e.dst].push_back(e.src);
    }
  }
  for (auto& nb : g.neighbors) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return g;
}

}  // namespace dsgsum
