#pragma once

// Multi-scale convolutional LSTM:
//
//   x (F×1) ─┬─ conv_a (K=3, 32) → relu → maxpool ─┐
//            └─ conv_b (K=5, 64) → relu → maxpool ─┴─ fuse (T'×96)
//   → lstm_1 (64, sequences) → lstm_2 (32, last) → dense_1 (100, relu)
//   → dense_out (1, sigmoid)
//
// Each input row is read as a length-F sequence with one channel.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "msclstm/errors.hpp"
#include "msclstm/layers.hpp"
#include "msclstm/tensor.hpp"

namespace msclstm {

namespace arch {
inline constexpr std::size_t kBranchAKernel = 3;
inline constexpr std::size_t kBranchAFilters = 32;
inline constexpr std::size_t kBranchBKernel = 5;
inline constexpr std::size_t kBranchBFilters = 64;
inline constexpr std::size_t kFusedChannels = kBranchAFilters + kBranchBFilters;
inline constexpr std::size_t kLstm1Units = 64;
inline constexpr std::size_t kLstm2Units = 32;
inline constexpr std::size_t kDenseUnits = 100;
inline constexpr std::size_t kPool = 2;

inline std::vector<LayerSpec> layer_specs() {
  return {
      {LayerKind::conv1d, "conv_a", 1, kBranchAFilters, kBranchAKernel},
      {LayerKind::conv1d, "conv_b", 1, kBranchBFilters, kBranchBKernel},
      {LayerKind::lstm, "lstm_1", kFusedChannels, kLstm1Units, 1},
      {LayerKind::lstm, "lstm_2", kLstm1Units, kLstm2Units, 1},
      {LayerKind::dense, "dense_1", kLstm2Units, kDenseUnits, 1},
      {LayerKind::dense, "dense_out", kDenseUnits, 1, 1},
  };
}
}  // namespace arch

enum LayerIndex : std::size_t { kConvA = 0, kConvB, kLstm1, kLstm2, kDense1, kDenseOut, kLayerCount };

template <typename Real>
struct ModelParams {
  std::size_t feature_count = 0;
  std::vector<LayerParams<Real>> layers;

  const LayerParams<Real>& layer(std::string_view name) const {
    for (const auto& l : layers) {
      if (l.name == name) return l;
    }
    throw UsageError("model has no layer '" + std::string(name) + "'");
  }
  LayerParams<Real>& layer(std::string_view name) {
    return const_cast<LayerParams<Real>&>(std::as_const(*this).layer(name));
  }

  /// Lookup by full name, e.g. "lstm_1.W".
  const Tensor<Real>& tensor(std::string_view full_name) const {
    const auto dot = full_name.find('.');
    if (dot == std::string_view::npos) {
      throw UsageError("weight name '" + std::string(full_name) + "' lacks a layer prefix");
    }
    return layer(full_name.substr(0, dot)).weight(full_name.substr(dot + 1));
  }
  Tensor<Real>& tensor(std::string_view full_name) {
    return const_cast<Tensor<Real>&>(std::as_const(*this).tensor(full_name));
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.parameter_count();
    return n;
  }

  /// Invokes f(full_name, tensor, trainable) in canonical order.
  template <typename F>
  void for_each_tensor(F&& f) const {
    for (const auto& l : layers) {
      for (const auto& w : l.weights) f(l.name + "." + w.name, w.value, l.trainable);
    }
  }
  template <typename F>
  void for_each_tensor(F&& f) {
    for (auto& l : layers) {
      for (auto& w : l.weights) f(l.name + "." + w.name, w.value, l.trainable);
    }
  }

  template <typename Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    out.feature_count = feature_count;
    for (const auto& l : layers) {
      LayerParams<Other> nl{l.name, {}, l.trainable};
      for (const auto& w : l.weights) nl.weights.push_back({w.name, w.value.template cast<Other>()});
      out.layers.push_back(std::move(nl));
    }
    return out;
  }
};

template <typename Real>
bool bitwise_equal(const ModelParams<Real>& a, const ModelParams<Real>& b) {
  if (a.feature_count != b.feature_count || a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& la = a.layers[i];
    const auto& lb = b.layers[i];
    if (la.name != lb.name || la.weights.size() != lb.weights.size()) return false;
    for (std::size_t j = 0; j < la.weights.size(); ++j) {
      if (la.weights[j].name != lb.weights[j].name) return false;
      if (!bitwise_equal(la.weights[j].value, lb.weights[j].value)) return false;
    }
  }
  return true;
}

/// Length of the fused sequence for F input features.
inline std::size_t pooled_length(std::size_t feature_count) { return feature_count / arch::kPool; }

template <typename Real>
ModelParams<Real> build_model(std::size_t feature_count, std::uint64_t seed) {
  if (feature_count < 2) {
    throw ConfigError("model needs at least 2 features (pooling halves the sequence), got " +
                      std::to_string(feature_count));
  }
  ModelParams<Real> m;
  m.feature_count = feature_count;
  for (const auto& spec : arch::layer_specs()) m.layers.push_back(init_params<Real>(spec, seed));
  return m;
}

/// Verifies that every tensor has the shape build_model would give it.
template <typename Real>
void validate_architecture(const ModelParams<Real>& m) {
  const ModelParams<Real> reference = build_model<Real>(m.feature_count, 0);
  if (m.layers.size() != reference.layers.size()) {
    throw DimensionError("model has " + std::to_string(m.layers.size()) + " layers, expected " +
                         std::to_string(reference.layers.size()));
  }
  for (std::size_t i = 0; i < reference.layers.size(); ++i) {
    const auto& want = reference.layers[i];
    const auto& got = m.layers[i];
    if (got.name != want.name || got.weights.size() != want.weights.size()) {
      throw DimensionError("layer " + std::to_string(i) + " is '" + got.name + "', expected '" +
                           want.name + "'");
    }
    for (std::size_t j = 0; j < want.weights.size(); ++j) {
      if (got.weights[j].name != want.weights[j].name ||
          got.weights[j].value.shape() != want.weights[j].value.shape()) {
        throw DimensionError("weight " + want.name + "." + want.weights[j].name + " expected " +
                             shape_string(want.weights[j].value.shape()) + ", got " +
                             got.weights[j].name + " " +
                             shape_string(got.weights[j].value.shape()));
      }
    }
  }
}

/// Zero gradients laid out in the canonical tensor order of `m`.
template <typename Real>
GradientSet<Real> zero_gradients(const ModelParams<Real>& m) {
  GradientSet<Real> g;
  m.for_each_tensor([&g](const std::string& name, const Tensor<Real>& t, bool) {
    g.tensors.push_back({name, Tensor<Real>(t.shape())});
  });
  return g;
}

template <typename Real>
struct ForwardCache {
  Conv1dCache<Real> conv_a, conv_b;
  ReluCache<Real> relu_a, relu_b;
  MaxPoolCache<Real> pool_a, pool_b;
  LstmCache<Real> lstm_1, lstm_2;
  DenseCache<Real> dense_1, dense_out;
  CacheState state;
};

struct Prediction {
  double probability = 0.0;
  int label = 0;
  double threshold = 0.5;
};

inline int threshold_label(double probability, double threshold) {
  return probability >= threshold ? 1 : 0;
}

/// Anomaly probability for one sample x of shape (F×1).
template <typename Real>
Real forward(const ModelParams<Real>& m, const Tensor<Real>& x, ForwardCache<Real>* cache = nullptr) {
  if (x.shape() != Shape{m.feature_count, 1}) {
    throw DimensionError("model input " + shape_string(x.shape()) + " expected (" +
                         std::to_string(m.feature_count) + ",1)");
  }
  const auto& la = m.layers[kConvA];
  const auto& lb = m.layers[kConvB];
  const auto& l1 = m.layers[kLstm1];
  const auto& l2 = m.layers[kLstm2];
  const auto& d1 = m.layers[kDense1];
  const auto& d2 = m.layers[kDenseOut];
  auto* c = cache;

  Tensor<Real> a = conv1d_forward(x, la.weights[0].value, la.weights[1].value, c ? &c->conv_a : nullptr);
  a = relu_forward(a, c ? &c->relu_a : nullptr);
  a = maxpool1d_forward(a, arch::kPool, arch::kPool, c ? &c->pool_a : nullptr);

  Tensor<Real> b = conv1d_forward(x, lb.weights[0].value, lb.weights[1].value, c ? &c->conv_b : nullptr);
  b = relu_forward(b, c ? &c->relu_b : nullptr);
  b = maxpool1d_forward(b, arch::kPool, arch::kPool, c ? &c->pool_b : nullptr);

  Tensor<Real> fused = fuse_branches(a, b);
  Tensor<Real> seq = lstm_forward(fused, l1.weights[0].value, l1.weights[1].value,
                                  l1.weights[2].value, true, c ? &c->lstm_1 : nullptr);
  Tensor<Real> last = lstm_forward(seq, l2.weights[0].value, l2.weights[1].value,
                                   l2.weights[2].value, false, c ? &c->lstm_2 : nullptr);
  Tensor<Real> hidden = dense_forward(last, d1.weights[0].value, d1.weights[1].value,
                                      Activation::relu, c ? &c->dense_1 : nullptr);
  Tensor<Real> out = dense_forward(hidden, d2.weights[0].value, d2.weights[1].value,
                                   Activation::sigmoid, c ? &c->dense_out : nullptr);
  if (c) c->state.arm();
  return out[0];
}

/// Adds d(loss)/d(param) into `grads` (canonical order from zero_gradients)
/// and returns d(loss)/dx.
template <typename Real>
Tensor<Real> backward(const ModelParams<Real>& m, ForwardCache<Real>& cache, Real dloss_dp,
                      GradientSet<Real>& grads) {
  cache.state.consume("model");
  if (grads.tensors.size() != 14) {
    throw UsageError("backward: gradient set does not match the model layout");
  }
  const auto& la = m.layers[kConvA];
  const auto& lb = m.layers[kConvB];
  const auto& l1 = m.layers[kLstm1];
  const auto& l2 = m.layers[kLstm2];
  const auto& d1 = m.layers[kDense1];
  const auto& d2 = m.layers[kDenseOut];

  // Canonical order: conv_a.{kernel,bias}, conv_b.{kernel,bias},
  // lstm_1.{W,U,b}, lstm_2.{W,U,b}, dense_1.{W,b}, dense_out.{W,b}.
  DenseGrads<Real> g_out{{}, std::move(grads.at(12)), std::move(grads.at(13))};
  dense_backward(cache.dense_out, d2.weights[0].value, Tensor<Real>({1}, {dloss_dp}), g_out);
  grads.at(12) = std::move(g_out.dW);
  grads.at(13) = std::move(g_out.db);

  DenseGrads<Real> g_d1{{}, std::move(grads.at(10)), std::move(grads.at(11))};
  dense_backward(cache.dense_1, d1.weights[0].value, g_out.dx, g_d1);
  grads.at(10) = std::move(g_d1.dW);
  grads.at(11) = std::move(g_d1.db);

  LstmGrads<Real> g_l2{{}, std::move(grads.at(7)), std::move(grads.at(8)), std::move(grads.at(9))};
  lstm_backward(cache.lstm_2, l2.weights[0].value, l2.weights[1].value, g_d1.dx, g_l2);
  grads.at(7) = std::move(g_l2.dW);
  grads.at(8) = std::move(g_l2.dU);
  grads.at(9) = std::move(g_l2.db);

  LstmGrads<Real> g_l1{{}, std::move(grads.at(4)), std::move(grads.at(5)), std::move(grads.at(6))};
  lstm_backward(cache.lstm_1, l1.weights[0].value, l1.weights[1].value, g_l2.dx, g_l1);
  grads.at(4) = std::move(g_l1.dW);
  grads.at(5) = std::move(g_l1.dU);
  grads.at(6) = std::move(g_l1.db);

  auto [da, db] = split_branches(g_l1.dx, arch::kBranchAFilters);

  Tensor<Real> dx;
  {
    Tensor<Real> d = maxpool1d_backward(cache.pool_a, da);
    d = relu_backward(cache.relu_a, d);
    Conv1dGrads<Real> g{{}, std::move(grads.at(0)), std::move(grads.at(1))};
    conv1d_backward(cache.conv_a, la.weights[0].value, d, g);
    grads.at(0) = std::move(g.dkernel);
    grads.at(1) = std::move(g.dbias);
    dx = std::move(g.dx);
  }
  {
    Tensor<Real> d = maxpool1d_backward(cache.pool_b, db);
    d = relu_backward(cache.relu_b, d);
    Conv1dGrads<Real> g{{}, std::move(grads.at(2)), std::move(grads.at(3))};
    conv1d_backward(cache.conv_b, lb.weights[0].value, d, g);
    grads.at(2) = std::move(g.dkernel);
    grads.at(3) = std::move(g.dbias);
    add_into(dx, g.dx);
  }
  return dx;
}

/// Fresh gradient set for one sample.
template <typename Real>
GradientSet<Real> backward(const ModelParams<Real>& m, ForwardCache<Real>& cache, Real dloss_dp) {
  GradientSet<Real> g = zero_gradients(m);
  backward(m, cache, dloss_dp, g);
  return g;
}

/// Row-wise probabilities and thresholded labels for X (N×F).
template <typename Real>
std::vector<Prediction> predict(const ModelParams<Real>& m, const Tensor<Real>& X,
                                      double threshold = 0.5) {
  if (X.rank() != 2 || X.dim(1) != m.feature_count) {
    throw DimensionError("predict: batch " + shape_string(X.shape()) + " does not have " +
                         std::to_string(m.feature_count) + " feature columns");
  }
  std::vector<Prediction> out(X.dim(0));
  for (std::size_t i = 0; i < X.dim(0); ++i) {
    Tensor<Real> x({m.feature_count, 1}, std::vector<Real>(X.row(i).begin(), X.row(i).end()));
    const double p = static_cast<double>(forward(m, x));
    out[i] = {p, threshold_label(p, threshold), threshold};
  }
  return out;
}

}  // namespace msclstm
