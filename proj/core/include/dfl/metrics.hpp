// Token-level precision/recall/F1 for the disfluency task and multi-seed
// aggregation of per-run scores.
#pragma once

#include <vector>

namespace dfl {

struct Metrics {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  // Recomputes the fractions from the counts; every 0/0 collapses to 0.
  void finalize();
};

// Counts tokens of the positive label over aligned prediction/gold label
// sequences. Sentence pairs must match in count and per-sentence length.
Metrics token_prf(const std::vector<std::vector<int>>& pred,
                  const std::vector<std::vector<int>>& gold, int positive_label = 1);

struct AggregateMetrics {
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_f1 = 0.0;
  double std_precision = 0.0;
  double std_recall = 0.0;
  double std_f1 = 0.0;
  int runs = 0;
};

// Mean and sample standard deviation (n - 1 denominator, 0 for a single run)
// of the fraction-valued scores; counts are not pooled.
AggregateMetrics average_runs(const std::vector<Metrics>& runs);

}  // namespace dfl
