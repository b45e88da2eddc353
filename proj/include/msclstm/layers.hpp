#pragma once

// Layer math with explicit backward passes: 1-D convolution, ReLU, max-pooling,
// branch fusion, LSTM and dense. Every op is templated on the scalar type so
// the float training path and the double gradient-check path share code.
//
// Forward functions take an optional cache. A filled cache is consumed by
// exactly one backward call; reusing it raises UsageError.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "msclstm/errors.hpp"
#include "msclstm/random.hpp"
#include "msclstm/tensor.hpp"

namespace msclstm {

// ---------------------------------------------------------------------------
// Parameters

template <typename Real>
struct NamedTensor {
  std::string name;
  Tensor<Real> value;
};

/// Weights of one layer. `trainable = false` keeps the weights out of
/// optimizer updates; forward and backward still use them.
template <typename Real>
struct LayerParams {
  std::string name;
  std::vector<NamedTensor<Real>> weights;
  bool trainable = true;

  const Tensor<Real>& weight(std::string_view key) const {
    for (const auto& w : weights) {
      if (w.name == key) return w.value;
    }
    throw UsageError("layer '" + name + "' has no weight '" + std::string(key) + "'");
  }
  Tensor<Real>& weight(std::string_view key) {
    return const_cast<Tensor<Real>&>(std::as_const(*this).weight(key));
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += w.value.size();
    return n;
  }
};

/// Gradients keyed by full weight name ("lstm_1.W").
template <typename Real>
struct GradientSet {
  std::vector<NamedTensor<Real>> tensors;

  const Tensor<Real>* find(std::string_view name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return &t.value;
    }
    return nullptr;
  }
  Tensor<Real>& at(std::size_t i) { return tensors[i].value; }
  const Tensor<Real>& at(std::size_t i) const { return tensors[i].value; }

  void zero() {
    for (auto& t : tensors) t.value.fill(Real{0});
  }
};

enum class LayerKind { conv1d, lstm, dense };

/// conv1d: inputs = C_in, units = C_out. lstm: inputs = D, units = H.
/// dense: inputs = D, units = U.
struct LayerSpec {
  LayerKind kind;
  std::string name;
  std::size_t inputs = 0;
  std::size_t units = 0;
  std::size_t kernel_size = 1;
};

inline double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

/// Glorot-uniform weights, zero biases, LSTM forget-gate bias 1. Draws come from
/// a stream derived from (seed, layer name) so layers are independent of
/// construction order.
template <typename Real>
LayerParams<Real> init_params(const LayerSpec& spec, std::uint64_t seed) {
  if (spec.inputs == 0 || spec.units == 0 || spec.kernel_size == 0) {
    throw ConfigError("layer '" + spec.name + "' has a zero dimension");
  }
  Rng rng(derive_seed(seed, spec.name));
  auto glorot = [&rng](Shape shape, std::size_t fan_in, std::size_t fan_out) {
    const double limit = glorot_limit(fan_in, fan_out);
    Tensor<Real> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<Real>(rng.uniform(-limit, limit));
    return t;
  };

  LayerParams<Real> p;
  p.name = spec.name;
  const std::size_t in = spec.inputs, out = spec.units;
  switch (spec.kind) {
    case LayerKind::conv1d: {
      const std::size_t k = spec.kernel_size;
      if (k % 2 == 0) throw ConfigError("conv1d kernel size must be odd");
      p.weights.push_back({"kernel", glorot({k, in, out}, k * in, k * out)});
      p.weights.push_back({"bias", Tensor<Real>({out})});
      break;
    }
    case LayerKind::lstm: {
      p.weights.push_back({"W", glorot({in, 4 * out}, in, 4 * out)});
      p.weights.push_back({"U", glorot({out, 4 * out}, out, 4 * out)});
      Tensor<Real> b({4 * out});
      for (std::size_t j = out; j < 2 * out; ++j) b[j] = Real{1};
      p.weights.push_back({"b", std::move(b)});
      break;
    }
    case LayerKind::dense: {
      p.weights.push_back({"W", glorot({in, out}, in, out)});
      p.weights.push_back({"b", Tensor<Real>({out})});
      break;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Cache bookkeeping

class CacheState {
 public:
  void arm() noexcept { valid_ = true; }
  void consume(const char* layer) {
    if (!valid_) {
      throw UsageError(std::string(layer) + " backward called without a fresh forward cache");
    }
    valid_ = false;
  }
  bool valid() const noexcept { return valid_; }

 private:
  bool valid_ = false;
};

namespace detail {

template <typename Real>
inline Real sigmoid(Real z) {
  if (z >= Real{0}) {
    return Real{1} / (Real{1} + std::exp(-z));
  }
  const Real e = std::exp(z);
  return e / (Real{1} + e);
}

// y[0..n) += a * x[0..n)
template <typename Real>
inline void axpy(std::size_t n, Real a, const Real* __restrict x, Real* __restrict y) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

/// y += Σ_p c[p]·M[p,:] over `rows` rows of an (rows × n) block, summed in
/// row order per element. Four rows are fused per pass over y.
template <typename Real>
inline void accumulate_rows(std::size_t rows, std::size_t n, const Real* __restrict c,
                            const Real* __restrict M, Real* __restrict y) {
  std::size_t p = 0;
  for (; p + 4 <= rows; p += 4) {
    const Real c0 = c[p], c1 = c[p + 1], c2 = c[p + 2], c3 = c[p + 3];
    const Real* m0 = M + p * n;
    const Real* m1 = m0 + n;
    const Real* m2 = m1 + n;
    const Real* m3 = m2 + n;
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) {
      Real v = y[i] + c0 * m0[i];
      v += c1 * m1[i];
      v += c2 * m2[i];
      y[i] = v + c3 * m3[i];
    }
  }
  for (; p < rows; ++p) axpy(n, c[p], M + p * n, y);
}

/// Y[p,:] += Σ_t c[t·c_stride + p]·A[t,:] for t = steps−1 down to 0, with
/// four steps fused per pass over each row of Y (rows × n).
template <typename Real>
inline void accumulate_outer(std::size_t steps, std::size_t rows, std::size_t n, const Real* __restrict c,
                             std::size_t c_stride, const Real* __restrict A, Real* __restrict Y) {
  for (std::size_t p = 0; p < rows; ++p) {
    Real* y = Y + p * n;
    std::size_t t = steps;
    for (; t >= 4; t -= 4) {
      const Real c0 = c[(t - 1) * c_stride + p], c1 = c[(t - 2) * c_stride + p];
      const Real c2 = c[(t - 3) * c_stride + p], c3 = c[(t - 4) * c_stride + p];
      const Real* a0 = A + (t - 1) * n;
      const Real* a1 = A + (t - 2) * n;
      const Real* a2 = A + (t - 3) * n;
      const Real* a3 = A + (t - 4) * n;
#pragma omp simd
      for (std::size_t i = 0; i < n; ++i) {
        Real v = y[i] + c0 * a0[i];
        v += c1 * a1[i];
        v += c2 * a2[i];
        y[i] = v + c3 * a3[i];
      }
    }
    for (; t-- > 0;) axpy(n, c[t * c_stride + p], A + t * n, y);
  }
}

template <typename Real>
inline Real dot(std::size_t n, const Real* __restrict x, const Real* __restrict y) {
  Real s{0};
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

}  // namespace detail

template <typename Real>
Real sigmoid(Real z) {
  return detail::sigmoid(z);
}

// ---------------------------------------------------------------------------
// Conv1d: same padding, stride 1. x (T×C_in), kernel (K×C_in×C_out), bias (C_out).

template <typename Real>
struct Conv1dCache {
  Tensor<Real> x;
  CacheState state;
};

template <typename Real>
struct Conv1dGrads {
  Tensor<Real> dx;
  Tensor<Real> dkernel;
  Tensor<Real> dbias;
};

template <typename Real>
Tensor<Real> conv1d_forward(const Tensor<Real>& x, const Tensor<Real>& kernel,
                            const Tensor<Real>& bias, Conv1dCache<Real>* cache = nullptr) {
  detail::require(x.rank() == 2 && kernel.rank() == 3 && bias.rank() == 1,
                  "conv1d: expected x (T,C_in), kernel (K,C_in,C_out), bias (C_out,)");
  const std::size_t T = x.dim(0), cin = x.dim(1);
  const std::size_t K = kernel.dim(0), cout = kernel.dim(2);
  detail::require(kernel.dim(1) == cin, "conv1d: input channels " + shape_string(x.shape()) +
                                            " do not match kernel " + shape_string(kernel.shape()));
  detail::require(bias.dim(0) == cout, "conv1d: bias " + shape_string(bias.shape()) +
                                           " does not match kernel " + shape_string(kernel.shape()));
  detail::require(K % 2 == 1, "conv1d: kernel size must be odd");
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(K / 2);

  Tensor<Real> y({T, cout});
  for (std::size_t t = 0; t < T; ++t) {
    Real* yrow = y.raw() + t * cout;
    std::copy(bias.raw(), bias.raw() + cout, yrow);
    for (std::size_t k = 0; k < K; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      for (std::size_t c = 0; c < cin; ++c) {
        detail::axpy(cout, x.at(static_cast<std::size_t>(src), c),
                     kernel.raw() + (k * cin + c) * cout, yrow);
      }
    }
  }
  if (cache) {
    cache->x = x;
    cache->state.arm();
  }
  return y;
}

/// Accumulates dkernel/dbias into `grads`; overwrites grads.dx.
template <typename Real>
void conv1d_backward(Conv1dCache<Real>& cache, const Tensor<Real>& kernel, const Tensor<Real>& dy,
                     Conv1dGrads<Real>& grads) {
  cache.state.consume("conv1d");
  const Tensor<Real>& x = cache.x;
  const std::size_t T = x.dim(0), cin = x.dim(1);
  const std::size_t K = kernel.dim(0), cout = kernel.dim(2);
  detail::require(dy.shape() == Shape{T, cout}, "conv1d backward: dy " + shape_string(dy.shape()) +
                                                   " does not match output (" + std::to_string(T) +
                                                   "," + std::to_string(cout) + ")");
  if (grads.dkernel.shape() != kernel.shape()) grads.dkernel = Tensor<Real>(kernel.shape());
  if (grads.dbias.shape() != Shape{cout}) grads.dbias = Tensor<Real>({cout});
  grads.dx = Tensor<Real>(x.shape());
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(K / 2);

  for (std::size_t t = 0; t < T; ++t) {
    const Real* dyrow = dy.raw() + t * cout;
    detail::axpy(cout, Real{1}, dyrow, grads.dbias.raw());
    for (std::size_t k = 0; k < K; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      const auto s = static_cast<std::size_t>(src);
      for (std::size_t c = 0; c < cin; ++c) {
        const std::size_t off = (k * cin + c) * cout;
        detail::axpy(cout, x.at(s, c), dyrow, grads.dkernel.raw() + off);
        grads.dx.at(s, c) += detail::dot(cout, kernel.raw() + off, dyrow);
      }
    }
  }
}

template <typename Real>
Conv1dGrads<Real> conv1d_backward(Conv1dCache<Real>& cache, const Tensor<Real>& kernel,
                                  const Tensor<Real>& dy) {
  Conv1dGrads<Real> g;
  conv1d_backward(cache, kernel, dy, g);
  return g;
}

// ---------------------------------------------------------------------------
// ReLU

template <typename Real>
struct ReluCache {
  Tensor<Real> x;
  CacheState state;
};

template <typename Real>
Tensor<Real> relu_forward(const Tensor<Real>& x, ReluCache<Real>* cache = nullptr) {
  Tensor<Real> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > Real{0} ? x[i] : Real{0};
  if (cache) {
    cache->x = x;
    cache->state.arm();
  }
  return y;
}

/// Subgradient at exactly 0 is 0.
template <typename Real>
Tensor<Real> relu_backward(ReluCache<Real>& cache, const Tensor<Real>& dy) {
  cache.state.consume("relu");
  detail::require(dy.shape() == cache.x.shape(), "relu backward: dy " + shape_string(dy.shape()) +
                                                     " vs x " + shape_string(cache.x.shape()));
  Tensor<Real> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = cache.x[i] > Real{0} ? dy[i] : Real{0};
  return dx;
}

// ---------------------------------------------------------------------------
// MaxPool1d over the time axis of (T×C). Trailing elements that do not fill a
// window are dropped; ties resolve to the earlier index.

template <typename Real>
struct MaxPoolCache {
  Shape input_shape;
  std::vector<std::uint32_t> argmax;  // (T'×C), source time index
  CacheState state;
};

template <typename Real>
Tensor<Real> maxpool1d_forward(const Tensor<Real>& x, std::size_t pool = 2, std::size_t stride = 2,
                               MaxPoolCache<Real>* cache = nullptr) {
  detail::require(x.rank() == 2, "maxpool1d: expected (T,C), got " + shape_string(x.shape()));
  detail::require(pool >= 1 && stride >= 1, "maxpool1d: pool and stride must be positive");
  const std::size_t T = x.dim(0), C = x.dim(1);
  detail::require(T >= pool, "maxpool1d: sequence length " + std::to_string(T) +
                                 " shorter than pool " + std::to_string(pool));
  const std::size_t out_t = (T - pool) / stride + 1;
  Tensor<Real> y({out_t, C});
  std::vector<std::uint32_t> argmax(out_t * C);
  for (std::size_t t = 0; t < out_t; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      std::size_t best = t * stride;
      for (std::size_t s = best + 1; s < t * stride + pool; ++s) {
        if (x.at(s, c) > x.at(best, c)) best = s;
      }
      y.at(t, c) = x.at(best, c);
      argmax[t * C + c] = static_cast<std::uint32_t>(best);
    }
  }
  if (cache) {
    cache->input_shape = x.shape();
    cache->argmax = std::move(argmax);
    cache->state.arm();
  }
  return y;
}

template <typename Real>
Tensor<Real> maxpool1d_backward(MaxPoolCache<Real>& cache, const Tensor<Real>& dy) {
  cache.state.consume("maxpool1d");
  const std::size_t C = cache.input_shape[1];
  detail::require(dy.rank() == 2 && dy.dim(1) == C && dy.size() == cache.argmax.size(),
                  "maxpool1d backward: dy " + shape_string(dy.shape()) + " does not match cache");
  Tensor<Real> dx(cache.input_shape);
  for (std::size_t i = 0; i < dy.size(); ++i) {
    dx.at(cache.argmax[i], i % C) += dy[i];
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Branch fusion: channel-axis concatenation (T×Ca) ‖ (T×Cb) → (T×(Ca+Cb)).

template <typename Real>
Tensor<Real> fuse_branches(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(0) == b.dim(0),
                  "fuse_branches: temporal lengths differ " + shape_string(a.shape()) + " vs " +
                      shape_string(b.shape()));
  const std::size_t T = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  Tensor<Real> y({T, ca + cb});
  for (std::size_t t = 0; t < T; ++t) {
    std::copy_n(a.raw() + t * ca, ca, y.raw() + t * (ca + cb));
    std::copy_n(b.raw() + t * cb, cb, y.raw() + t * (ca + cb) + ca);
  }
  return y;
}

/// Adjoint of fuse_branches: split columns [0, ca) and [ca, C).
template <typename Real>
std::pair<Tensor<Real>, Tensor<Real>> split_branches(const Tensor<Real>& dy, std::size_t ca) {
  detail::require(dy.rank() == 2 && ca > 0 && ca < dy.dim(1),
                  "split_branches: cannot split " + shape_string(dy.shape()) + " at column " +
                      std::to_string(ca));
  const std::size_t T = dy.dim(0), c = dy.dim(1), cb = c - ca;
  Tensor<Real> da({T, ca}), db({T, cb});
  for (std::size_t t = 0; t < T; ++t) {
    std::copy_n(dy.raw() + t * c, ca, da.raw() + t * ca);
    std::copy_n(dy.raw() + t * c + ca, cb, db.raw() + t * cb);
  }
  return {std::move(da), std::move(db)};
}

// ---------------------------------------------------------------------------
// LSTM. Gate blocks along the 4H axis are ordered [input, forget, cell, output].
// h_0 = c_0 = 0.

template <typename Real>
struct LstmCache {
  Tensor<Real> x;       // (T×D)
  Tensor<Real> gates;   // (T×4H) post-activation i, f, g, o
  Tensor<Real> cell;    // (T×H)
  Tensor<Real> tanh_c;  // (T×H)
  Tensor<Real> hidden;  // (T×H)
  bool return_sequences = false;
  CacheState state;
};

template <typename Real>
struct LstmGrads {
  Tensor<Real> dx;
  Tensor<Real> dW;
  Tensor<Real> dU;
  Tensor<Real> db;
};

namespace detail {

template <typename Real>
void check_lstm_shapes(const Tensor<Real>& x, const Tensor<Real>& W, const Tensor<Real>& U,
                       const Tensor<Real>& b) {
  require(x.rank() == 2, "lstm: expected x (T,D), got " + shape_string(x.shape()));
  require(W.rank() == 2 && U.rank() == 2 && b.rank() == 1, "lstm: W, U must be matrices, b a vector");
  const std::size_t D = x.dim(1), H = U.dim(0);
  require(W.dim(0) == D && W.dim(1) == 4 * H && U.dim(1) == 4 * H && b.dim(0) == 4 * H,
          "lstm: parameter shapes W " + shape_string(W.shape()) + ", U " + shape_string(U.shape()) +
              ", b " + shape_string(b.shape()) + " inconsistent with x " + shape_string(x.shape()));
}

}  // namespace detail

template <typename Real>
Tensor<Real> lstm_forward(const Tensor<Real>& x, const Tensor<Real>& W, const Tensor<Real>& U,
                          const Tensor<Real>& b, bool return_sequences,
                          LstmCache<Real>* cache = nullptr) {
  detail::check_lstm_shapes(x, W, U, b);
  const std::size_t T = x.dim(0), D = x.dim(1), H = U.dim(0), G = 4 * H;

  Tensor<Real> gates({T, G}), cell({T, H}), tanh_c({T, H}), hidden({T, H});
  for (std::size_t t = 0; t < T; ++t) {
    Real* a = gates.raw() + t * G;
    std::copy_n(b.raw(), G, a);
    const Real* xt = x.raw() + t * D;
    detail::accumulate_rows(D, G, xt, W.raw(), a);
    if (t > 0) {
      const Real* hprev = hidden.raw() + (t - 1) * H;
      detail::accumulate_rows(H, G, hprev, U.raw(), a);
    }
    for (std::size_t j = 0; j < H; ++j) {
      const Real i = detail::sigmoid(a[j]);
      const Real f = detail::sigmoid(a[H + j]);
      const Real g = std::tanh(a[2 * H + j]);
      const Real o = detail::sigmoid(a[3 * H + j]);
      a[j] = i;
      a[H + j] = f;
      a[2 * H + j] = g;
      a[3 * H + j] = o;
      const Real cprev = t > 0 ? cell.at(t - 1, j) : Real{0};
      const Real c = f * cprev + i * g;
      const Real tc = std::tanh(c);
      cell.at(t, j) = c;
      tanh_c.at(t, j) = tc;
      hidden.at(t, j) = o * tc;
    }
  }

  Tensor<Real> out = return_sequences
                         ? hidden
                         : Tensor<Real>({H}, std::vector<Real>(hidden.raw() + (T - 1) * H,
                                                               hidden.raw() + T * H));
  if (cache) {
    cache->x = x;
    cache->gates = std::move(gates);
    cache->cell = std::move(cell);
    cache->tanh_c = std::move(tanh_c);
    cache->hidden = std::move(hidden);
    cache->return_sequences = return_sequences;
    cache->state.arm();
  }
  return out;
}

/// Backpropagation through time. Accumulates dW/dU/db into `grads`;
/// overwrites grads.dx. dy is (T×H) for sequence output, (H) otherwise.
template <typename Real>
void lstm_backward(LstmCache<Real>& cache, const Tensor<Real>& W, const Tensor<Real>& U,
                   const Tensor<Real>& dy, LstmGrads<Real>& grads) {
  cache.state.consume("lstm");
  const Tensor<Real>& x = cache.x;
  const std::size_t T = x.dim(0), D = x.dim(1), H = U.dim(0), G = 4 * H;
  const Shape expected = cache.return_sequences ? Shape{T, H} : Shape{H};
  detail::require(dy.shape() == expected, "lstm backward: dy " + shape_string(dy.shape()) +
                                              " expected " + shape_string(expected));
  if (grads.dW.shape() != W.shape()) grads.dW = Tensor<Real>(W.shape());
  if (grads.dU.shape() != U.shape()) grads.dU = Tensor<Real>(U.shape());
  if (grads.db.shape() != Shape{G}) grads.db = Tensor<Real>({G});
  grads.dx = Tensor<Real>(x.shape());

  std::vector<Real> dh_next(H, Real{0}), dc_next(H, Real{0}), dh(H), dA(T * G);
  for (std::size_t step = T; step-- > 0;) {
    Real* da = dA.data() + step * G;
    for (std::size_t j = 0; j < H; ++j) {
      Real d = dh_next[j];
      if (cache.return_sequences) {
        d += dy.at(step, j);
      } else if (step == T - 1) {
        d += dy[j];
      }
      dh[j] = d;
    }
    const Real* gt = cache.gates.raw() + step * G;
    for (std::size_t j = 0; j < H; ++j) {
      const Real i = gt[j], f = gt[H + j], g = gt[2 * H + j], o = gt[3 * H + j];
      const Real tc = cache.tanh_c.at(step, j);
      const Real cprev = step > 0 ? cache.cell.at(step - 1, j) : Real{0};
      const Real dc = dh[j] * o * (Real{1} - tc * tc) + dc_next[j];
      da[j] = dc * g * i * (Real{1} - i);
      da[H + j] = dc * cprev * f * (Real{1} - f);
      da[2 * H + j] = dc * i * (Real{1} - g * g);
      da[3 * H + j] = dh[j] * tc * o * (Real{1} - o);
      dc_next[j] = dc * f;
    }

    Real* dxt = grads.dx.raw() + step * D;
    for (std::size_t p = 0; p < D; ++p) dxt[p] = detail::dot(G, W.raw() + p * G, da);
    if (step > 0) {
      for (std::size_t q = 0; q < H; ++q) dh_next[q] = detail::dot(G, U.raw() + q * G, da);
    }
  }

  // Weight gradients after the sweep, summed over steps from last to first.
  for (std::size_t step = T; step-- > 0;) detail::axpy(G, Real{1}, dA.data() + step * G, grads.db.raw());
  detail::accumulate_outer(T, D, G, x.raw(), D, dA.data(), grads.dW.raw());
  if (T > 1) detail::accumulate_outer(T - 1, H, G, cache.hidden.raw(), H, dA.data() + G, grads.dU.raw());
}

template <typename Real>
LstmGrads<Real> lstm_backward(LstmCache<Real>& cache, const Tensor<Real>& W, const Tensor<Real>& U,
                              const Tensor<Real>& dy) {
  LstmGrads<Real> g;
  lstm_backward(cache, W, U, dy, g);
  return g;
}

// ---------------------------------------------------------------------------
// Dense: y = act(x·W + b), x (D), W (D×U), b (U).

enum class Activation { none, relu, sigmoid };

template <typename Real>
struct DenseCache {
  Tensor<Real> x;
  Tensor<Real> z;
  Tensor<Real> y;
  Activation activation = Activation::none;
  CacheState state;
};

template <typename Real>
struct DenseGrads {
  Tensor<Real> dx;
  Tensor<Real> dW;
  Tensor<Real> db;
};

template <typename Real>
Tensor<Real> dense_forward(const Tensor<Real>& x, const Tensor<Real>& W, const Tensor<Real>& b,
                           Activation activation, DenseCache<Real>* cache = nullptr) {
  detail::require(x.rank() == 1 && W.rank() == 2 && b.rank() == 1 && W.dim(0) == x.dim(0) &&
                      W.dim(1) == b.dim(0),
                  "dense: shapes x " + shape_string(x.shape()) + ", W " + shape_string(W.shape()) +
                      ", b " + shape_string(b.shape()) + " do not agree");
  const std::size_t D = x.dim(0), U = W.dim(1);
  Tensor<Real> z = b;
  detail::accumulate_rows(D, U, x.raw(), W.raw(), z.raw());
  Tensor<Real> y(z.shape());
  for (std::size_t j = 0; j < U; ++j) {
    switch (activation) {
      case Activation::none: y[j] = z[j]; break;
      case Activation::relu: y[j] = z[j] > Real{0} ? z[j] : Real{0}; break;
      case Activation::sigmoid: y[j] = detail::sigmoid(z[j]); break;
    }
  }
  if (cache) {
    cache->x = x;
    cache->z = std::move(z);
    cache->y = y;
    cache->activation = activation;
    cache->state.arm();
  }
  return y;
}

/// Accumulates dW/db into `grads`; overwrites grads.dx.
template <typename Real>
void dense_backward(DenseCache<Real>& cache, const Tensor<Real>& W, const Tensor<Real>& dy,
                    DenseGrads<Real>& grads) {
  cache.state.consume("dense");
  const std::size_t D = W.dim(0), U = W.dim(1);
  detail::require(dy.shape() == Shape{U}, "dense backward: dy " + shape_string(dy.shape()) +
                                              " expected (" + std::to_string(U) + ",)");
  if (grads.dW.shape() != W.shape()) grads.dW = Tensor<Real>(W.shape());
  if (grads.db.shape() != Shape{U}) grads.db = Tensor<Real>({U});
  grads.dx = Tensor<Real>({D});

  std::vector<Real> dz(U);
  for (std::size_t j = 0; j < U; ++j) {
    switch (cache.activation) {
      case Activation::none: dz[j] = dy[j]; break;
      case Activation::relu: dz[j] = cache.z[j] > Real{0} ? dy[j] : Real{0}; break;
      case Activation::sigmoid: dz[j] = dy[j] * cache.y[j] * (Real{1} - cache.y[j]); break;
    }
  }
  detail::axpy(U, Real{1}, dz.data(), grads.db.raw());
  for (std::size_t p = 0; p < D; ++p) {
    detail::axpy(U, cache.x[p], dz.data(), grads.dW.raw() + p * U);
    grads.dx[p] = detail::dot(U, W.raw() + p * U, dz.data());
  }
}

template <typename Real>
DenseGrads<Real> dense_backward(DenseCache<Real>& cache, const Tensor<Real>& W,
                                const Tensor<Real>& dy) {
  DenseGrads<Real> g;
  dense_backward(cache, W, dy, g);
  return g;
}

}  // namespace msclstm
