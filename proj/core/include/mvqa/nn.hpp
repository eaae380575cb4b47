#pragma once

// Dense building blocks with hand-written reverse passes. Matrices are
// row-major; a weight of shape [out, in] maps rows of length `in` to rows of
// length `out`. Every *_backward accumulates into its gradient outputs.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>

namespace mvqa::nn {

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
inline T silu(T x) {
  return x * sigmoid(x);
}

template <typename T>
inline T silu_grad(T x) {
  const T s = sigmoid(x);
  return s * (T(1) + x * (T(1) - s));
}

template <typename T>
inline T softplus(T x) {
  // log(1 + e^x) without overflow for large x
  return x > T(20) ? x : std::log1p(std::exp(x));
}

template <typename T>
inline T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
inline T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<T> /
                std::numbers::sqrt2_v<T>;
  return cdf + x * pdf;
}

/// y[rows, out] = x[rows, in] * w^T + b. `b` may be empty.
template <typename T>
void linear(std::span<const T> x, std::span<const T> w, std::span<const T> b, int rows,
            int in, int out, std::span<T> y) {
  for (int r = 0; r < rows; ++r) {
    const T* xr = &x[static_cast<std::size_t>(r) * in];
    T* yr = &y[static_cast<std::size_t>(r) * out];
    for (int o = 0; o < out; ++o) {
      const T* wo = &w[static_cast<std::size_t>(o) * in];
      T acc = b.empty() ? T(0) : b[o];
      for (int i = 0; i < in; ++i) acc += xr[i] * wo[i];
      yr[o] = acc;
    }
  }
}

/// Accumulates dx (if non-empty), dw and db (if non-empty) from dy.
template <typename T>
void linear_backward(std::span<const T> x, std::span<const T> w, std::span<const T> dy,
                     int rows, int in, int out, std::span<T> dx, std::span<T> dw,
                     std::span<T> db) {
  for (int r = 0; r < rows; ++r) {
    const T* xr = &x[static_cast<std::size_t>(r) * in];
    const T* dyr = &dy[static_cast<std::size_t>(r) * out];
    T* dxr = dx.empty() ? nullptr : &dx[static_cast<std::size_t>(r) * in];
    for (int o = 0; o < out; ++o) {
      const T g = dyr[o];
      if (g == T(0)) continue;
      const T* wo = &w[static_cast<std::size_t>(o) * in];
      T* dwo = &dw[static_cast<std::size_t>(o) * in];
      for (int i = 0; i < in; ++i) dwo[i] += g * xr[i];
      if (dxr) {
        for (int i = 0; i < in; ++i) dxr[i] += g * wo[i];
      }
      if (!db.empty()) db[o] += g;
    }
  }
}

inline constexpr double kLayerNormEps = 1e-5;

/// Row-wise layer normalization. `xhat` and `rstd` receive the normalized
/// rows and reciprocal standard deviations for the reverse pass.
template <typename T>
void layer_norm(std::span<const T> x, std::span<const T> gamma, std::span<const T> beta,
                int rows, int width, std::span<T> y, std::span<T> xhat, std::span<T> rstd) {
  for (int r = 0; r < rows; ++r) {
    const T* xr = &x[static_cast<std::size_t>(r) * width];
    T mean = 0;
    for (int i = 0; i < width; ++i) mean += xr[i];
    mean /= static_cast<T>(width);
    T var = 0;
    for (int i = 0; i < width; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<T>(width);
    const T inv = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    rstd[r] = inv;
    for (int i = 0; i < width; ++i) {
      const std::size_t idx = static_cast<std::size_t>(r) * width + i;
      xhat[idx] = (xr[i] - mean) * inv;
      y[idx] = xhat[idx] * gamma[i] + beta[i];
    }
  }
}

template <typename T>
void layer_norm_backward(std::span<const T> xhat, std::span<const T> rstd,
                         std::span<const T> gamma, std::span<const T> dy, int rows, int width,
                         std::span<T> dx, std::span<T> dgamma, std::span<T> dbeta) {
  for (int r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * width;
    T sum_g = 0, sum_gx = 0;
    for (int i = 0; i < width; ++i) {
      const T g = dy[base + i] * gamma[i];
      sum_g += g;
      sum_gx += g * xhat[base + i];
      dgamma[i] += dy[base + i] * xhat[base + i];
      dbeta[i] += dy[base + i];
    }
    const T n = static_cast<T>(width);
    for (int i = 0; i < width; ++i) {
      const T g = dy[base + i] * gamma[i];
      dx[base + i] += rstd[r] * (g - sum_g / n - xhat[base + i] * sum_gx / n);
    }
  }
}

}  // namespace mvqa::nn
