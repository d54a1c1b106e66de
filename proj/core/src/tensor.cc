#include "dfl/tensor.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dfl {

double log_sum_exp(const double* v, int n) {
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::exp(v[i] - m);
  return m + std::log(sum);
}

double log_sum_exp(const Vec& v) {
  return log_sum_exp(v.data(), static_cast<int>(v.size()));
}

Mat xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat m(rows, cols);
  // Row-major fill order keeps the stream layout-independent.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform_range(-bound, bound);
  return m;
}

double max_relative_grad_error(const std::vector<TensorRef>& params,
                               const std::vector<TensorRef>& grads,
                               const std::function<double()>& loss,
                               double step, double floor) {
  if (params.size() != grads.size())
    throw std::invalid_argument("max_relative_grad_error: params/grads length mismatch");
  double worst = 0.0;
  for (size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size())
      throw std::invalid_argument("max_relative_grad_error: shape mismatch for " + params[t].name);
    for (Eigen::Index i = 0; i < params[t].size(); ++i) {
      double* x = params[t].data + i;
      const double saved = *x;
      *x = saved + step;
      const double up = loss();
      *x = saved - step;
      const double down = loss();
      *x = saved;
      const double fd = (up - down) / (2.0 * step);
      const double g = grads[t].data[i];
      const double rel = std::abs(g - fd) / std::max(std::abs(fd), floor);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

double clip_global_norm(const std::vector<TensorRef>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (Eigen::Index i = 0; i < g.size(); ++i) sq += g.data[i] * g.data[i];
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (const auto& g : grads)
      for (Eigen::Index i = 0; i < g.size(); ++i) g.data[i] *= scale;
  }
  return norm;
}

}  // namespace dfl
