#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "dsgsum/graph.hpp"
#include "graph_oracle.hpp"

using namespace dsgsum;

namespace {

RawPair make_doc(std::vector<std::string> sents) {
  RawPair p;
  p.id = "doc";
  p.document = std::move(sents);
  for (const auto& s : p.document) p.doc_tokens.push_back(split_ws(s));
  return p;
}

}  // namespace

TEST_CASE("annotate_entities finds capitalized runs") {
  RawPair doc = make_doc({"Barack Obama visited the White House"});
  auto spans = annotate_entities(doc, default_stopwords());
  REQUIRE(spans.size() == 2);
  CHECK(spans[0].surface == "Barack Obama");
  CHECK(spans[1].surface == "White House");
  CHECK(spans[0].start == 0);
  CHECK(spans[0].end == 1);
}

TEST_CASE("annotate_entities drops stopword-only spans") {
  RawPair doc = make_doc({"The end"});
  // "The" alone is a capitalized run of stopwords
  auto spans = annotate_entities(doc, default_stopwords());
  CHECK(spans.empty());

  RawPair pre = make_doc({"the cat sat"});
  pre.entities = std::vector<SpanRef>{{0, 0, 0}, {0, 1, 1}};
  auto kept = annotate_entities(pre, default_stopwords());
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].surface == "cat");
}

TEST_CASE("annotate_entities on an empty document") {
  RawPair doc = make_doc({""});
  CHECK(annotate_entities(doc, default_stopwords()).empty());
}

TEST_CASE("cluster_corefs groups by surface and enforces the 3-mention floor") {
  RawPair three = make_doc({"Obama spoke", "Obama left", "Obama waved"});
  auto spans3 = annotate_entities(three, default_stopwords());
  auto clusters3 = cluster_corefs(three, spans3);
  REQUIRE(clusters3.size() == 1);
  CHECK(clusters3[0].mentions.size() == 3);
  CHECK(clusters3[0].mentions[clusters3[0].main_mention].sent == 0);

  RawPair two = make_doc({"Obama spoke", "Obama left"});
  CHECK(cluster_corefs(two, annotate_entities(two, default_stopwords())).empty());
}

TEST_CASE("precomputed clusters below 3 mentions are ignored") {
  RawPair doc = make_doc({"alpha beta gamma delta epsilon"});
  doc.entities = std::vector<SpanRef>{{0, 0, 0}, {0, 1, 1}, {0, 2, 2}, {0, 3, 3}, {0, 4, 4}};
  doc.corefs = std::vector<std::vector<int>>{{0, 1, 2}, {3, 4}};
  auto spans = annotate_entities(doc, default_stopwords());
  auto clusters = cluster_corefs(doc, spans);
  REQUIRE(clusters.size() == 1);
  CHECK(clusters[0].mentions.size() == 3);
}

TEST_CASE("extract_relations: co-occurring cluster mains") {
  RawPair doc = make_doc({"David Hawkins leads Baylor University",
                          "David Hawkins spoke", "David Hawkins wrote",
                          "Baylor University expanded", "Baylor University won"});
  auto spans = annotate_entities(doc, default_stopwords());
  auto clusters = cluster_corefs(doc, spans);
  REQUIRE(clusters.size() == 2);
  auto triples = extract_relations(doc, spans, clusters, RelationKB());
  REQUIRE(triples.size() == 1);
  CHECK(triples[0].subject == "david hawkins");
  CHECK(triples[0].relation == "have relation with");
  CHECK(triples[0].object == "baylor university");
  CHECK(triples[0].source == TripleSource::CorefCooccur);
}

TEST_CASE("extract_relations: knowledge-base pair in one sentence") {
  RelationKB kb;
  kb.add("knife", "CapableOf", "cut");
  RawPair doc = make_doc({"a knife can cut things"});
  auto spans = annotate_entities(doc, default_stopwords(), &kb);
  auto triples = extract_relations(doc, spans, cluster_corefs(doc, spans), kb);
  REQUIRE(triples.size() == 1);
  CHECK(triples[0].subject == "knife");
  CHECK(triples[0].object == "cut");
  CHECK(triples[0].source == TripleSource::Kb);
}

TEST_CASE("extract_relations: mentions in different sentences yield nothing") {
  RawPair doc = make_doc({"Alpha here", "Beta there", "Alpha again", "Beta again", "Alpha more",
                          "Beta more"});
  auto spans = annotate_entities(doc, default_stopwords());
  auto clusters = cluster_corefs(doc, spans);
  REQUIRE(clusters.size() == 2);
  CHECK(extract_relations(doc, spans, clusters, RelationKB()).empty());
}

TEST_CASE("filter_triples drops overlong arguments when enabled") {
  auto words = [](int n) {
    std::string s;
    for (int i = 0; i < n; ++i) s += (i ? " w" : "w");
    return s;
  };
  std::vector<Triple> triples = {
      Triple{words(11), kRelationLabel, "x", TripleSource::CorefCooccur},
      Triple{words(10), kRelationLabel, "y", TripleSource::CorefCooccur},
      Triple{"a", kRelationLabel, words(12), TripleSource::Kb},
  };
  auto kept = filter_triples(triples, 10, true);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].subject == words(10));  // exactly 10 words survives

  auto untouched = filter_triples(triples, 10, false);
  CHECK(untouched.size() == triples.size());
}

TEST_CASE("rank_frequency sorts by count with first-occurrence ties") {
  RawPair doc = make_doc({"x y x", "x y z"});
  std::vector<GraphNode> nodes(3);
  nodes[0].surface = "z";
  nodes[1].surface = "x";
  nodes[2].surface = "y";
  rank_frequency(doc, nodes);
  CHECK(nodes[1].freq_count == 3);
  CHECK(nodes[1].freq_rank == 0);
  CHECK(nodes[2].freq_count == 2);
  CHECK(nodes[2].freq_rank == 1);
  CHECK(nodes[0].freq_count == 1);
  CHECK(nodes[0].freq_rank == 2);

  // tie: both appear twice, "a" first
  RawPair tie = make_doc({"a b", "b a"});
  std::vector<GraphNode> tn(2);
  tn[0].surface = "b";
  tn[1].surface = "a";
  rank_frequency(tie, tn);
  CHECK(tn[1].freq_rank == 0);
  CHECK(tn[0].freq_rank == 1);

  RawPair single = make_doc({"solo"});
  std::vector<GraphNode> sn(1);
  sn[0].surface = "solo";
  rank_frequency(single, sn);
  CHECK(sn[0].freq_rank == 0);
}

TEST_CASE("build_graph basics") {
  RelationKB kb;
  RawPair empty = make_doc({"nothing lowercase here"});
  SemanticGraph g0 = build_graph(empty, kb);
  CHECK(g0.nodes.empty());
  CHECK(g0.edges.empty());

  RawPair doc = make_doc({"David Hawkins leads Baylor University", "David Hawkins spoke",
                          "David Hawkins wrote", "Baylor University expanded",
                          "Baylor University won"});
  SemanticGraph g = build_graph(doc, kb);
  REQUIRE(g.nodes.size() == 2);
  auto edges = graph_oracle::built(g);
  CHECK(edges.count({"david hawkins", "baylor university", "coref_cooccur"}) == 1);
  // self loops present in adjacency
  for (size_t i = 0; i < g.nodes.size(); ++i)
    CHECK(std::find(g.neighbors[i].begin(), g.neighbors[i].end(), (int)i) != g.neighbors[i].end());
}

TEST_CASE("build_graph determinism and JSON round trip") {
  RelationKB kb;
  kb.add("knife", "CapableOf", "cut");
  RawPair doc = make_doc({"Ada Lovelace met Charles Babbage", "Ada Lovelace wrote",
                          "Ada Lovelace computed", "Charles Babbage built",
                          "Charles Babbage argued", "a knife can cut"});
  const std::string j1 = build_graph(doc, kb).to_json_line();
  const std::string j2 = build_graph(doc, kb).to_json_line();
  CHECK(j1 == j2);
  SemanticGraph parsed = SemanticGraph::from_json_line(j1);
  CHECK(parsed.to_json_line() == j1);
}

TEST_CASE("every emitted relation carries the constant label") {
  Rng rng(555);
  RelationKB kb;
  kb.add("knife", "CapableOf", "cut");
  kb.add("rain", "Causes", "floods");
  const std::vector<std::string> names = {"Alpha", "Beta", "Gamma", "Delta"};
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::string> sents;
    const int ns = 1 + (int)rng.next_below(5);
    for (int s = 0; s < ns; ++s) {
      std::string sent;
      const int len = 1 + (int)rng.next_below(8);
      for (int w = 0; w < len; ++w) {
        if (w) sent += " ";
        switch (rng.next_below(5)) {
          case 0: sent += names[rng.next_below(names.size())]; break;
          case 1: sent += "knife"; break;
          case 2: sent += "cut"; break;
          default: sent += "w" + std::to_string(rng.next_below(6));
        }
      }
      sents.push_back(sent);
    }
    RawPair doc = make_doc(sents);
    auto spans = annotate_entities(doc, default_stopwords(), &kb);
    auto clusters = cluster_corefs(doc, spans);
    for (const CorefCluster& c : clusters) CHECK(c.mentions.size() >= 3);
    for (const Triple& t : extract_relations(doc, spans, clusters, kb))
      CHECK(t.relation == "have relation with");
  }
}

TEST_CASE("oracle equivalence: exact edge sets on 200 random small documents") {
  Rng rng(777);
  RelationKB kb;
  kb.add("knife", "CapableOf", "cut");
  kb.add("rain", "Causes", "floods");
  kb.add("red dust", "Causes", "haze");
  const std::vector<std::string> names = {"Alpha", "Beta", "Gamma", "Delta", "Big Sur"};
  const std::vector<std::string> fillers = {"runs", "sees", "the", "green", "knife", "cut",
                                            "rain", "floods", "red", "dust", "haze"};
  int nonempty = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> sents;
    const int ns = 1 + (int)rng.next_below(5);
    for (int s = 0; s < ns; ++s) {
      std::string sent;
      const int len = 1 + (int)rng.next_below(9);
      for (int w = 0; w < len; ++w) {
        if (w) sent += " ";
        if (rng.next_below(3) == 0)
          sent += names[rng.next_below(names.size())];
        else
          sent += fillers[rng.next_below(fillers.size())];
      }
      sents.push_back(sent);
    }
    RawPair doc = make_doc(sents);
    SemanticGraph g = build_graph(doc, kb);
    auto got = graph_oracle::built(g);
    auto want = graph_oracle::edges(doc, kb, default_stopwords());
    CHECK(got == want);
    if (!want.empty()) ++nonempty;
  }
  CHECK(nonempty > 50);  // the generator must actually exercise the rules
}
