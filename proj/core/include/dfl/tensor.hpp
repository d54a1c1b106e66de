// Dense numeric primitives shared by the encoder, the CRF heads and the
// trainer: matrix aliases, a portable seeded RNG, log-space reductions and
// the tensor visitation used by the optimizer and the checkpoint writer.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace dfl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Deterministic RNG. mt19937_64 output is fixed by the standard and all
// derived draws below use explicit integer arithmetic, so a seed produces
// identical streams on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), n >= 1.
  int uniform_int(int n) {
    return static_cast<int>(static_cast<uint64_t>(uniform() * static_cast<double>(n)));
  }

  double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Decorrelated child seed for a named sub-stream.
  uint64_t fork(uint64_t stream) {
    uint64_t z = engine_() + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

// log(sum_i exp(v_i)) with the max shift. Returns -inf for an all -inf input.
double log_sum_exp(const double* v, int n);
double log_sum_exp(const Vec& v);

// Glorot/Xavier uniform init in +-sqrt(6 / (fan_in + fan_out)).
Mat xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);

// A named view of one parameter (or gradient) tensor. Vectors are exposed
// with cols == 1. The pointer aliases the owning structure.
template <class D>
struct TensorRefT {
  std::string name;
  D* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index size() const { return rows * cols; }
};
using TensorRef = TensorRefT<double>;
using ConstTensorRef = TensorRefT<const double>;

// Worst-case relative error between an analytic gradient and central finite
// differences of `loss` taken over every listed tensor:
//   max |g_analytic - g_fd| / max(|g_fd|, floor).
// `params` and `grads` pair up by position. An empty list yields 0.
double max_relative_grad_error(const std::vector<TensorRef>& params,
                               const std::vector<TensorRef>& grads,
                               const std::function<double()>& loss,
                               double step = 1e-5, double floor = 1e-8);

// Scales all gradients so the global L2 norm does not exceed max_norm.
// Returns the pre-clip norm.
double clip_global_norm(const std::vector<TensorRef>& grads, double max_norm);

}  // namespace dfl
