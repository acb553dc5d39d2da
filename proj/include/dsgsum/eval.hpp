#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsgsum/common.hpp"

namespace dsgsum {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

RougeScore make_rouge(double p, double r);

enum class RougeMetric { Rouge1, Rouge2, RougeL };

// clipped n-gram overlap; empty sides yield zero components
RougeScore rouge_n(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference, int n);

// longest common subsequence
RougeScore rouge_l(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference);

// candidate truncated to the reference length, then the metric's recall
double limited_length_recall(const std::vector<std::string>& candidate,
                             const std::vector<std::string>& reference, RougeMetric metric);

// fraction of gold entity surfaces appearing contiguously (case-insensitive)
// in the summary tokens; nullopt when there are no gold entities
std::optional<double> entity_coverage(const std::vector<std::string>& gold_entities,
                                      const std::vector<std::string>& summary_tokens);

struct SigTestConfig {
  int sample_size = 3000;
  int n_iter = 100;
  uint64_t seed = 0;
};

// one-sided paired bootstrap: p = fraction of resamples (shared indices)
// where mean(A) - mean(B) <= 0; ties count against A
double paired_bootstrap(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                        const SigTestConfig& cfg);

struct EvalReport {
  RougeScore rouge1, rouge2, rougeL;
  double entity_coverage = 0.0;  // mean over documents that have gold entities
  int n = 0;
  std::string to_json() const;
};

std::string sigtest_report_json(double p_value, const SigTestConfig& cfg);

}  // namespace dsgsum
