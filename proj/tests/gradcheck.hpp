#pragma once

// Finite-difference oracle used by the gradient tests. It only ever calls
// forward code; analytic gradients are compared against it by the caller.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "msclstm/random.hpp"
#include "msclstm/tensor.hpp"

namespace msclstm::oracle {

inline constexpr double kFiniteDifferenceStep = 1e-4;
inline constexpr double kGradientTolerance = 1e-3;

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

/// Central difference d(objective)/d(param[i]) for every i in `indices`
/// (all elements when empty). `param` is restored afterwards.
inline std::vector<double> numeric_gradient(Tensor<double>& param,
                                            const std::function<double()>& objective,
                                            const std::vector<std::size_t>& indices = {},
                                            double eps = kFiniteDifferenceStep) {
  std::vector<std::size_t> idx = indices;
  if (idx.empty()) {
    idx.resize(param.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  }
  std::vector<double> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) {
    const double saved = param[i];
    param[i] = saved + eps;
    const double up = objective();
    param[i] = saved - eps;
    const double down = objective();
    param[i] = saved;
    out.push_back((up - down) / (2.0 * eps));
  }
  return out;
}

struct Comparison {
  double max_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Max relative error between analytic[idx[k]] and numeric[k].
inline Comparison compare(const Tensor<double>& analytic, const std::vector<double>& numeric,
                          const std::vector<std::size_t>& indices = {}) {
  Comparison c;
  for (std::size_t k = 0; k < numeric.size(); ++k) {
    const std::size_t i = indices.empty() ? k : indices[k];
    const double e = relative_error(analytic[i], numeric[k]);
    if (e > c.max_error) c = {e, i, analytic[i], numeric[k]};
  }
  return c;
}

inline std::string describe(const std::string& what, const Comparison& c) {
  return what + ": max rel error " + std::to_string(c.max_error) + " at " +
         std::to_string(c.worst_index) + " (analytic " + std::to_string(c.worst_analytic) +
         ", numeric " + std::to_string(c.worst_numeric) + ")";
}

inline Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Σ r ⊙ y: projects a layer output onto a fixed random direction.
inline double project(const Tensor<double>& y, const Tensor<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

}  // namespace msclstm::oracle
