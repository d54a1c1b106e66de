#include "dfl/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dfl {

void Metrics::finalize() {
  precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  f1 = (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

Metrics token_prf(const std::vector<std::vector<int>>& pred,
                  const std::vector<std::vector<int>>& gold, int positive_label) {
  if (pred.size() != gold.size())
    throw std::invalid_argument("token_prf: " + std::to_string(pred.size()) +
                                " predictions vs " + std::to_string(gold.size()) +
                                " gold sequences");
  Metrics m;
  for (size_t s = 0; s < pred.size(); ++s) {
    if (pred[s].size() != gold[s].size())
      throw std::invalid_argument("token_prf: length mismatch in sentence " + std::to_string(s));
    for (size_t t = 0; t < pred[s].size(); ++t) {
      const bool p = pred[s][t] == positive_label;
      const bool g = gold[s][t] == positive_label;
      if (p && g) ++m.tp;
      else if (p) ++m.fp;
      else if (g) ++m.fn;
    }
  }
  m.finalize();
  return m;
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  const double n = static_cast<double>(xs.size());
  double sum = 0.0;
  for (double x : xs) sum += x;
  mean = sum / n;
  if (xs.size() < 2) {
    sd = 0.0;
    return;
  }
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  sd = std::sqrt(sq / (n - 1.0));
}

}  // namespace

AggregateMetrics average_runs(const std::vector<Metrics>& runs) {
  if (runs.empty()) throw std::invalid_argument("average_runs: no runs");
  std::vector<double> p, r, f;
  p.reserve(runs.size());
  r.reserve(runs.size());
  f.reserve(runs.size());
  for (const Metrics& m : runs) {
    p.push_back(m.precision);
    r.push_back(m.recall);
    f.push_back(m.f1);
  }
  AggregateMetrics agg;
  agg.runs = static_cast<int>(runs.size());
  mean_std(p, agg.mean_precision, agg.std_precision);
  mean_std(r, agg.mean_recall, agg.std_recall);
  mean_std(f, agg.mean_f1, agg.std_f1);
  return agg;
}

}  // namespace dfl
