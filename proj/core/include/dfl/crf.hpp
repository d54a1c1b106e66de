// Linear-chain CRF head: emission projection, exact log-partition and
// marginals by the forward-backward algorithm, gold-path NLL with gradients,
// and Viterbi decoding with a deterministic tie-break.
#pragma once

#include <vector>

#include "dfl/corpus.hpp"
#include "dfl/tensor.hpp"

namespace dfl {

// One head per task. T(i, j) scores label j following label i; s and e score
// the first and last label of a path.
struct CrfHead {
  Task task = Task::Disfl;
  Mat W;  // d_model x L emission projection
  Vec b;  // L
  Mat T;  // L x L transitions
  Vec s;  // L start scores
  Vec e;  // L stop scores

  int num_labels() const { return static_cast<int>(b.size()); }
  int d_model() const { return static_cast<int>(W.rows()); }

  // Xavier-initialized W, zero b/T/s/e.
  static CrfHead init(Task task, int d_model, int num_labels, Rng& rng);

  // Trainable tensors in fixed order (W, b, T, s, e), named "<task>.<field>".
  std::vector<TensorRef> tensors();
  std::vector<ConstTensorRef> tensors() const;
};

struct CrfGrads {
  Mat dW;
  Vec db;
  Mat dT;
  Vec ds;
  Vec de;

  static CrfGrads zeros_like(const CrfHead& head);
  void add(const CrfGrads& other);
  void scale(double factor);
  void set_zero();  // in place, storage kept
  // Same order and names as CrfHead::tensors().
  std::vector<TensorRef> tensors(Task task);
};

// E = H W + b rowwise; one row of scores per position.
Mat emissions(const CrfHead& head, const Mat& H);

// Backprop through emissions: dH += dE W^T, dW += H^T dE, db += column sums.
void emissions_backward(const CrfHead& head, const Mat& H, const Mat& dE, Mat& dH,
                        CrfGrads& grads);

// log sum over all L^n paths of exp(path score), where
//   score(y) = s[y_0] + sum_t E(t, y_t) + sum_t T(y_t, y_{t+1}) + e[y_{n-1}].
// Forward algorithm in log space.
double log_partition(const Mat& E, const Mat& T, const Vec& s, const Vec& e);

double path_score(const Mat& E, const Mat& T, const Vec& s, const Vec& e,
                  const std::vector<int>& path);

// Negative log-likelihood of the gold path, logZ - score(gold), plus
// gradients: dE = marginals - gold one-hots, dT/ds/de expected minus observed
// transition statistics. Gradient outputs are overwritten, not accumulated.
double crf_nll(const Mat& E, const Mat& T, const Vec& s, const Vec& e,
               const std::vector<int>& gold, Mat& dE, Mat& dT, Vec& ds, Vec& de);

struct ViterbiResult {
  std::vector<int> path;
  double score = 0.0;
};

// Highest-scoring path; among ties, the one with the smallest label index at
// the earliest differing position.
ViterbiResult viterbi(const Mat& E, const Mat& T, const Vec& s, const Vec& e);

}  // namespace dfl
