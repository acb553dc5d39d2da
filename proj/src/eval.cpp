#include "dsgsum/eval.hpp"

#include <algorithm>
#include <map>

#include "json.hpp"

namespace dsgsum {

RougeScore make_rouge(double p, double r) {
  RougeScore s;
  s.precision = p;
  s.recall = r;
  s.f1 = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  return s;
}

namespace {

std::map<std::vector<std::string>, int> ngram_counts(const std::vector<std::string>& toks, int n) {
  std::map<std::vector<std::string>, int> counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (size_t i = 0; i + n <= toks.size(); ++i)
    ++counts[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return counts;
}

}  // namespace

RougeScore rouge_n(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference, int n) {
  DSG_CHECK(n >= 1, "rouge_n needs n >= 1");
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  int64_t cand_total = 0, ref_total = 0, overlap = 0;
  for (const auto& [g, c] : cand) {
    cand_total += c;
    auto it = ref.find(g);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  for (const auto& [g, c] : ref) ref_total += c;
  const double p = cand_total > 0 ? static_cast<double>(overlap) / cand_total : 0.0;
  const double r = ref_total > 0 ? static_cast<double>(overlap) / ref_total : 0.0;
  return make_rouge(p, r);
}

RougeScore rouge_l(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference) {
  const size_t m = candidate.size(), n = reference.size();
  if (m == 0 || n == 0) return make_rouge(0.0, 0.0);
  std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
  for (size_t i = 1; i <= m; ++i) {
    for (size_t j = 1; j <= n; ++j) {
      if (candidate[i - 1] == reference[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = prev[n];
  return make_rouge(lcs / static_cast<double>(m), lcs / static_cast<double>(n));
}

double limited_length_recall(const std::vector<std::string>& candidate,
                             const std::vector<std::string>& reference, RougeMetric metric) {
  if (reference.empty()) {
    DSG_LOG_INFO("limited_length_recall: empty reference, returning 0");
    return 0.0;
  }
  std::vector<std::string> truncated = candidate;
  if (truncated.size() > reference.size()) truncated.resize(reference.size());
  switch (metric) {
    case RougeMetric::Rouge1: return rouge_n(truncated, reference, 1).recall;
    case RougeMetric::Rouge2: return rouge_n(truncated, reference, 2).recall;
    case RougeMetric::RougeL: return rouge_l(truncated, reference).recall;
  }
  return 0.0;
}

std::optional<double> entity_coverage(const std::vector<std::string>& gold_entities,
                                      const std::vector<std::string>& summary_tokens) {
  if (gold_entities.empty()) return std::nullopt;
  std::vector<std::string> lower_summary(summary_tokens.size());
  for (size_t i = 0; i < summary_tokens.size(); ++i) lower_summary[i] = lowercase(summary_tokens[i]);
  int covered = 0;
  for (const std::string& surface : gold_entities) {
    const std::vector<std::string> pattern = split_ws(lowercase(surface));
    if (pattern.empty() || pattern.size() > lower_summary.size()) continue;
    bool found = false;
    for (size_t i = 0; i + pattern.size() <= lower_summary.size() && !found; ++i) {
      bool match = true;
      for (size_t j = 0; j < pattern.size(); ++j)
        if (lower_summary[i + j] != pattern[j]) {
          match = false;
          break;
        }
      found = match;
    }
    if (found) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(gold_entities.size());
}

double paired_bootstrap(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                        const SigTestConfig& cfg) {
  DSG_CHECK(scores_a.size() == scores_b.size(), "paired bootstrap needs equal-length score lists");
  DSG_CHECK(!scores_a.empty(), "paired bootstrap needs at least one example");
  DSG_CHECK(cfg.sample_size >= 1 && cfg.n_iter >= 1, "bad significance-test configuration");
  const size_t n = scores_a.size();
  int against = 0;
  for (int iter = 0; iter < cfg.n_iter; ++iter) {
    Rng rng(splitmix64(cfg.seed ^ (static_cast<uint64_t>(iter) * 0xd1342543de82ef95ULL + 1)));
    double sum_a = 0.0, sum_b = 0.0;
    for (int s = 0; s < cfg.sample_size; ++s) {
      const size_t idx = static_cast<size_t>(rng.next_below(n));
      sum_a += scores_a[idx];
      sum_b += scores_b[idx];
    }
    if (sum_a - sum_b <= 0.0) ++against;
  }
  return static_cast<double>(against) / static_cast<double>(cfg.n_iter);
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  auto put = [](const RougeScore& s) {
    nlohmann::ordered_json r;
    r["p"] = s.precision;
    r["r"] = s.recall;
    r["f1"] = s.f1;
    return r;
  };
  j["rouge1"] = put(rouge1);
  j["rouge2"] = put(rouge2);
  j["rougeL"] = put(rougeL);
  j["entity_coverage"] = entity_coverage;
  j["n"] = n;
  return j.dump();
}

std::string sigtest_report_json(double p_value, const SigTestConfig& cfg) {
  nlohmann::ordered_json j;
  j["p_value"] = p_value;
  j["n_iter"] = cfg.n_iter;
  j["sample_size"] = cfg.sample_size;
  j["seed"] = cfg.seed;
  return j.dump();
}

}  // namespace dsgsum
