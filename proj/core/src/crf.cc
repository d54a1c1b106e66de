#include "dfl/crf.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dfl {

namespace {

std::string prefixed(Task task, const char* field) {
  return std::string(task_name(task)) + "." + field;
}

void check_labels(const std::vector<int>& gold, int L) {
  if (gold.empty()) throw std::invalid_argument("crf: empty label path");
  for (int y : gold)
    if (y < 0 || y >= L)
      throw std::out_of_range("crf: gold label " + std::to_string(y) + " outside [0, " +
                              std::to_string(L) + ")");
}

}  // namespace

CrfHead CrfHead::init(Task task, int d_model, int num_labels, Rng& rng) {
  if (d_model < 1 || num_labels < 1)
    throw std::invalid_argument("crf: d_model and num_labels must be >= 1");
  CrfHead h;
  h.task = task;
  h.W = xavier_uniform(d_model, num_labels, rng);
  h.b = Vec::Zero(num_labels);
  h.T = Mat::Zero(num_labels, num_labels);
  h.s = Vec::Zero(num_labels);
  h.e = Vec::Zero(num_labels);
  return h;
}

std::vector<TensorRef> CrfHead::tensors() {
  return {
      {prefixed(task, "W"), W.data(), W.rows(), W.cols()},
      {prefixed(task, "b"), b.data(), b.size(), 1},
      {prefixed(task, "T"), T.data(), T.rows(), T.cols()},
      {prefixed(task, "s"), s.data(), s.size(), 1},
      {prefixed(task, "e"), e.data(), e.size(), 1},
  };
}

std::vector<ConstTensorRef> CrfHead::tensors() const {
  return {
      {prefixed(task, "W"), W.data(), W.rows(), W.cols()},
      {prefixed(task, "b"), b.data(), b.size(), 1},
      {prefixed(task, "T"), T.data(), T.rows(), T.cols()},
      {prefixed(task, "s"), s.data(), s.size(), 1},
      {prefixed(task, "e"), e.data(), e.size(), 1},
  };
}

CrfGrads CrfGrads::zeros_like(const CrfHead& head) {
  CrfGrads g;
  g.dW = Mat::Zero(head.W.rows(), head.W.cols());
  g.db = Vec::Zero(head.b.size());
  g.dT = Mat::Zero(head.T.rows(), head.T.cols());
  g.ds = Vec::Zero(head.s.size());
  g.de = Vec::Zero(head.e.size());
  return g;
}

void CrfGrads::add(const CrfGrads& other) {
  dW += other.dW;
  db += other.db;
  dT += other.dT;
  ds += other.ds;
  de += other.de;
}

void CrfGrads::scale(double factor) {
  dW *= factor;
  db *= factor;
  dT *= factor;
  ds *= factor;
  de *= factor;
}

void CrfGrads::set_zero() {
  dW.setZero();
  db.setZero();
  dT.setZero();
  ds.setZero();
  de.setZero();
}

std::vector<TensorRef> CrfGrads::tensors(Task task) {
  return {
      {prefixed(task, "W"), dW.data(), dW.rows(), dW.cols()},
      {prefixed(task, "b"), db.data(), db.size(), 1},
      {prefixed(task, "T"), dT.data(), dT.rows(), dT.cols()},
      {prefixed(task, "s"), ds.data(), ds.size(), 1},
      {prefixed(task, "e"), de.data(), de.size(), 1},
  };
}

Mat emissions(const CrfHead& head, const Mat& H) {
  if (H.cols() != head.W.rows())
    throw std::invalid_argument("emissions: H has width " + std::to_string(H.cols()) +
                                ", head expects " + std::to_string(head.W.rows()));
  return (H * head.W).rowwise() + head.b.transpose();
}

void emissions_backward(const CrfHead& head, const Mat& H, const Mat& dE, Mat& dH,
                        CrfGrads& grads) {
  if (dE.rows() != H.rows() || dE.cols() != head.W.cols())
    throw std::invalid_argument("emissions_backward: dE shape mismatch");
  dH.noalias() += dE * head.W.transpose();
  grads.dW.noalias() += H.transpose() * dE;
  grads.db += dE.colwise().sum().transpose();
}

double log_partition(const Mat& E, const Mat& T, const Vec& s, const Vec& e) {
  const int n = static_cast<int>(E.rows());
  const int L = static_cast<int>(E.cols());
  if (n < 1) throw std::invalid_argument("log_partition: n must be >= 1");

  Vec alpha = s + E.row(0).transpose();
  Vec next(L);
  Vec scratch(L);
  for (int t = 1; t < n; ++t) {
    for (int j = 0; j < L; ++j) {
      scratch = alpha + T.col(j);
      next[j] = E(t, j) + log_sum_exp(scratch);
    }
    alpha.swap(next);
  }
  scratch = alpha + e;
  return log_sum_exp(scratch);
}

double path_score(const Mat& E, const Mat& T, const Vec& s, const Vec& e,
                  const std::vector<int>& path) {
  check_labels(path, static_cast<int>(E.cols()));
  if (static_cast<int>(path.size()) != E.rows())
    throw std::invalid_argument("path_score: path length does not match emissions");
  double score = s[path.front()] + e[path.back()];
  for (size_t t = 0; t < path.size(); ++t) {
    score += E(static_cast<Eigen::Index>(t), path[t]);
    if (t + 1 < path.size()) score += T(path[t], path[t + 1]);
  }
  return score;
}

double crf_nll(const Mat& E, const Mat& T, const Vec& s, const Vec& e,
               const std::vector<int>& gold, Mat& dE, Mat& dT, Vec& ds, Vec& de) {
  const int n = static_cast<int>(E.rows());
  const int L = static_cast<int>(E.cols());
  check_labels(gold, L);
  if (static_cast<int>(gold.size()) != n)
    throw std::invalid_argument("crf_nll: gold length does not match emissions");

  // Forward and backward log-messages.
  Mat alpha(n, L), beta(n, L);
  alpha.row(0) = (s + E.row(0).transpose()).transpose();
  Vec scratch(L);
  for (int t = 1; t < n; ++t)
    for (int j = 0; j < L; ++j) {
      scratch = alpha.row(t - 1).transpose() + T.col(j);
      alpha(t, j) = E(t, j) + log_sum_exp(scratch);
    }
  beta.row(n - 1) = e.transpose();
  for (int t = n - 2; t >= 0; --t)
    for (int j = 0; j < L; ++j) {
      scratch = T.row(j).transpose() + E.row(t + 1).transpose() + beta.row(t + 1).transpose();
      beta(t, j) = log_sum_exp(scratch);
    }
  scratch = alpha.row(n - 1).transpose() + e;
  const double log_z = log_sum_exp(scratch);

  dE.resize(n, L);
  dT = Mat::Zero(L, L);
  ds = Vec::Zero(L);
  de = Vec::Zero(L);

  // Unary marginals minus gold one-hots.
  for (int t = 0; t < n; ++t) {
    for (int j = 0; j < L; ++j) dE(t, j) = std::exp(alpha(t, j) + beta(t, j) - log_z);
    dE(t, gold[static_cast<size_t>(t)]) -= 1.0;
  }
  // Pairwise marginals minus gold transition counts.
  for (int t = 0; t + 1 < n; ++t)
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j)
        dT(i, j) += std::exp(alpha(t, i) + T(i, j) + E(t + 1, j) + beta(t + 1, j) - log_z);
  for (int t = 0; t + 1 < n; ++t) dT(gold[static_cast<size_t>(t)], gold[static_cast<size_t>(t + 1)]) -= 1.0;
  // Boundary marginals minus observations.
  for (int j = 0; j < L; ++j) {
    ds[j] = std::exp(alpha(0, j) + beta(0, j) - log_z);
    de[j] = std::exp(alpha(n - 1, j) + beta(n - 1, j) - log_z);
  }
  ds[gold.front()] -= 1.0;
  de[gold.back()] -= 1.0;

  return log_z - path_score(E, T, s, e, gold);
}

ViterbiResult viterbi(const Mat& E, const Mat& T, const Vec& s, const Vec& e) {
  const int n = static_cast<int>(E.rows());
  const int L = static_cast<int>(E.cols());
  if (n < 1) throw std::invalid_argument("viterbi: n must be >= 1");

  // mu(t, j): best score of a path suffix starting at position t with label j.
  // Reconstructing forward through mu and always taking the first argmax
  // yields the smallest label index at the earliest differing position.
  Mat mu(n, L);
  mu.row(n - 1) = (E.row(n - 1).transpose() + e).transpose();
  for (int t = n - 2; t >= 0; --t)
    for (int j = 0; j < L; ++j) {
      double best = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < L; ++k) best = std::max(best, T(j, k) + mu(t + 1, k));
      mu(t, j) = E(t, j) + best;
    }

  ViterbiResult r;
  r.path.resize(static_cast<size_t>(n));
  int arg = 0;
  double best = s[0] + mu(0, 0);
  for (int j = 1; j < L; ++j) {
    const double cand = s[j] + mu(0, j);
    if (cand > best) {
      best = cand;
      arg = j;
    }
  }
  r.score = best;
  r.path[0] = arg;
  for (int t = 1; t < n; ++t) {
    const int prev = r.path[static_cast<size_t>(t - 1)];
    int next = 0;
    double next_best = T(prev, 0) + mu(t, 0);
    for (int k = 1; k < L; ++k) {
      const double cand = T(prev, k) + mu(t, k);
      if (cand > next_best) {
        next_best = cand;
        next = k;
      }
    }
    r.path[static_cast<size_t>(t)] = next;
  }
  return r;
}

}  // namespace dfl
