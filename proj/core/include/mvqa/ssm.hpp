#pragma once

#include <span>
#include <vector>

namespace mvqa::ssm {

/// Continuous diagonal state-space system h' = A h + B x, y = C h + D x.
/// `a` holds the diagonal of A.
template <typename T>
struct SsmParams {
  std::vector<T> a;
  std::vector<T> b;
  std::vector<T> c;
  T d = 0;
  T delta = 1;
};

/// Zero-order-hold discretization; both vectors have the state size N.
template <typename T>
struct DiscreteSsm {
  std::vector<T> a_bar;
  std::vector<T> b_bar;
};

template <typename T>
struct SsmKernel {
  std::vector<T> k_bar;
};

/// A_bar = exp(delta A), B_bar = (delta A)^-1 (exp(delta A) - 1) delta B.
/// Below |delta A| < 1e-8 the gain uses its series about 0, whose limit is B_bar = delta B.
/// Throws ParamError when delta <= 0 or the vectors disagree in size.
template <typename T>
DiscreteSsm<T> discretize_zoh(const SsmParams<T>& params);

/// h_k = A_bar h_{k-1} + B_bar x_k, y_k = C h_k + D x_k, from h_{-1} = 0.
template <typename T>
std::vector<T> scan_recurrent(const DiscreteSsm<T>& disc, std::span<const T> c, T d,
                              std::span<const T> x);

/// K_bar[k] = sum_n C_n A_bar_n^k B_bar_n for k in [0, length).
template <typename T>
SsmKernel<T> build_kernel(const DiscreteSsm<T>& disc, std::span<const T> c, int length);

/// Causal convolution y_k = sum_{j<=k} K_bar[j] x_{k-j} + D x_k.
/// Throws DimError when the kernel and sequence lengths differ.
template <typename T>
std::vector<T> apply_kernel(const SsmKernel<T>& kernel, T d, std::span<const T> x);

enum class Direction { kForward, kBackward };

/// Inputs of the input-dependent scan, all row-major:
///   u, delta: L x channels;  a: channels x state;  b, c: L x state;  d: channels.
template <typename T>
struct SelectiveInputs {
  std::span<const T> u;
  std::span<const T> delta;
  std::span<const T> a;
  std::span<const T> b;
  std::span<const T> c;
  std::span<const T> d;
  int length = 0;
  int channels = 0;
  int state = 0;
};

/// Sequential reference scan:
///   h_k = exp(delta_k A) h_{k-1} + delta_k B_k u_k,  y_k = C_k h_k + D u_k,
/// run over k ascending (forward) or descending (backward).
/// If `states` is non-empty it receives h_k for every step (L x channels x state,
/// indexed by k in sequence order) for use by selective_scan_backward.
template <typename T>
void selective_scan_kernel(const SelectiveInputs<T>& in, Direction direction,
                           std::span<T> y, std::span<T> states = {});

template <typename T>
struct SelectiveGrads {
  std::span<T> u;
  std::span<T> delta;
  std::span<T> a;
  std::span<T> b;
  std::span<T> c;
  std::span<T> d;
};

/// Reverse-mode pass of selective_scan_kernel. Gradients are accumulated
/// (+=) into `grads`; `states` must come from the matching forward call.
template <typename T>
void selective_scan_backward(const SelectiveInputs<T>& in, Direction direction,
                             std::span<const T> states, std::span<const T> dy,
                             const SelectiveGrads<T>& grads);

}  // namespace mvqa::ssm
