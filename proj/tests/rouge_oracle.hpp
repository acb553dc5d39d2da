#pragma once

// Brute-force ROUGE references: string-keyed n-gram multiset intersection
// and exponential subsequence enumeration (valid for candidate length <= 8).
#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "dsgsum/eval.hpp"

namespace rouge_oracle {

using Tokens = std::vector<std::string>;

inline dsgsum::RougeScore rouge_n(const Tokens& cand, const Tokens& ref, int n) {
  auto grams = [n](const Tokens& t) {
    std::map<std::string, int> m;
    for (int i = 0; i + n <= (int)t.size(); ++i) {
      std::string key;
      for (int j = 0; j < n; ++j) key += t[i + j] + "\x1f";
      ++m[key];
    }
    return m;
  };
  auto gc = grams(cand), gr = grams(ref);
  int overlap = 0, nc = 0, nr = 0;
  for (auto& [k, v] : gc) {
    nc += v;
    auto it = gr.find(k);
    if (it != gr.end()) overlap += std::min(v, it->second);
  }
  for (auto& [k, v] : gr) nr += v;
  const double p = nc ? (double)overlap / nc : 0.0;
  const double r = nr ? (double)overlap / nr : 0.0;
  const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  return {p, r, f};
}

inline int lcs(const Tokens& cand, const Tokens& ref) {
  const int n = (int)cand.size();
  int best = 0;
  for (int mask = 0; mask < (1 << n); ++mask) {
    Tokens sub;
    for (int i = 0; i < n; ++i)
      if (mask & (1 << i)) sub.push_back(cand[i]);
    size_t ri = 0, matched = 0;
    for (const std::string& s : sub) {
      while (ri < ref.size() && ref[ri] != s) ++ri;
      if (ri == ref.size()) break;
      ++matched;
      ++ri;
    }
    if (matched == sub.size()) best = std::max(best, (int)sub.size());
  }
  return best;
}

inline Tokens random_tokens(dsgsum::Rng& rng, int max_len, int alphabet) {
  Tokens t;
  const int len = (int)rng.next_below(max_len + 1);
  for (int i = 0; i < len; ++i)
    t.push_back(std::string(1, (char)('a' + rng.next_below(alphabet))));
  return t;
}

}  // namespace rouge_oracle
