#include "mvqa/ssm.hpp"

#include <cmath>
#include <string>

#include "mvqa/errors.hpp"
#include "mvqa/ssm_detail.hpp"

namespace mvqa::ssm {

namespace detail {

template <typename T>
T zoh_gain_series(T z) {
  return T(1) + z / T(2) + z * z / T(6);
}

template <typename T>
T zoh_gain_direct(T z) {
  return std::expm1(z) / z;
}

template <typename T>
T zoh_gain(T z) {
  return std::abs(z) < T(1e-8) ? zoh_gain_series(z) : zoh_gain_direct(z);
}

template float zoh_gain_series(float);
template double zoh_gain_series(double);
template float zoh_gain_direct(float);
template double zoh_gain_direct(double);
template float zoh_gain(float);
template double zoh_gain(double);

}  // namespace detail

template <typename T>
DiscreteSsm<T> discretize_zoh(const SsmParams<T>& params) {
  if (!(params.delta > T(0))) throw ParamError("delta must be positive");
  if (params.a.empty()) throw ParamError("state size must be >= 1");
  if (params.b.size() != params.a.size()) throw ParamError("A and B sizes differ");
  DiscreteSsm<T> out;
  out.a_bar.resize(params.a.size());
  out.b_bar.resize(params.a.size());
  for (std::size_t n = 0; n < params.a.size(); ++n) {
    const T z = params.delta * params.a[n];
    out.a_bar[n] = std::exp(z);
    out.b_bar[n] = detail::zoh_gain(z) * params.delta * params.b[n];
  }
  return out;
}

template <typename T>
std::vector<T> scan_recurrent(const DiscreteSsm<T>& disc, std::span<const T> c, T d,
                              std::span<const T> x) {
  const std::size_t n_state = disc.a_bar.size();
  if (disc.b_bar.size() != n_state || c.size() != n_state) {
    throw DimError("state vectors differ in size");
  }
  std::vector<T> h(n_state, T(0));
  std::vector<T> y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    T acc = 0;
    for (std::size_t n = 0; n < n_state; ++n) {
      h[n] = disc.a_bar[n] * h[n] + disc.b_bar[n] * x[k];
      acc += c[n] * h[n];
    }
    y[k] = acc + d * x[k];
  }
  return y;
}

template <typename T>
SsmKernel<T> build_kernel(const DiscreteSsm<T>& disc, std::span<const T> c, int length) {
  if (length < 1) throw DimError("kernel length must be >= 1");
  const std::size_t n_state = disc.a_bar.size();
  if (disc.b_bar.size() != n_state || c.size() != n_state) {
    throw DimError("state vectors differ in size");
  }
  SsmKernel<T> kernel;
  kernel.k_bar.resize(static_cast<std::size_t>(length));
  std::vector<T> power(disc.b_bar.begin(), disc.b_bar.end());  // A_bar^k B_bar
  for (int k = 0; k < length; ++k) {
    T acc = 0;
    for (std::size_t n = 0; n < n_state; ++n) {
      acc += c[n] * power[n];
      power[n] *= disc.a_bar[n];
    }
    kernel.k_bar[static_cast<std::size_t>(k)] = acc;
  }
  return kernel;
}

template <typename T>
std::vector<T> apply_kernel(const SsmKernel<T>& kernel, T d, std::span<const T> x) {
  if (kernel.k_bar.size() != x.size()) {
    throw DimError("kernel length " + std::to_string(kernel.k_bar.size()) +
                   " != sequence length " + std::to_string(x.size()));
  }
  std::vector<T> y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    T acc = d * x[k];
    for (std::size_t j = 0; j <= k; ++j) acc += kernel.k_bar[j] * x[k - j];
    y[k] = acc;
  }
  return y;
}

template <typename T>
void selective_scan_kernel(const SelectiveInputs<T>& in, Direction direction, std::span<T> y,
                           std::span<T> states) {
  const int L = in.length, Dn = in.channels, N = in.state;
  const bool keep = !states.empty();
  std::vector<T> h(static_cast<std::size_t>(Dn) * N, T(0));
  for (int s = 0; s < L; ++s) {
    const int k = direction == Direction::kForward ? s : L - 1 - s;
    const T* bk = &in.b[static_cast<std::size_t>(k) * N];
    const T* ck = &in.c[static_cast<std::size_t>(k) * N];
    for (int ch = 0; ch < Dn; ++ch) {
      const std::size_t kc = static_cast<std::size_t>(k) * Dn + ch;
      const T dl = in.delta[kc];
      const T uk = in.u[kc];
      const T du = dl * uk;
      const T* a = &in.a[static_cast<std::size_t>(ch) * N];
      T* hc = &h[static_cast<std::size_t>(ch) * N];
      T acc = 0;
      for (int n = 0; n < N; ++n) {
        hc[n] = std::exp(dl * a[n]) * hc[n] + du * bk[n];
        acc += ck[n] * hc[n];
      }
      y[kc] = acc + in.d[ch] * uk;
      if (keep) {
        std::copy(hc, hc + N, &states[kc * N]);
      }
    }
  }
}

template <typename T>
void selective_scan_backward(const SelectiveInputs<T>& in, Direction direction,
                             std::span<const T> states, std::span<const T> dy,
                             const SelectiveGrads<T>& g) {
  const int L = in.length, Dn = in.channels, N = in.state;
  std::vector<T> gh(static_cast<std::size_t>(Dn) * N, T(0));
  for (int s = L - 1; s >= 0; --s) {
    const bool fwd = direction == Direction::kForward;
    const int k = fwd ? s : L - 1 - s;
    const int kp = fwd ? k - 1 : k + 1;  // step processed just before k
    const T* bk = &in.b[static_cast<std::size_t>(k) * N];
    const T* ck = &in.c[static_cast<std::size_t>(k) * N];
    T* dbk = &g.b[static_cast<std::size_t>(k) * N];
    T* dck = &g.c[static_cast<std::size_t>(k) * N];
    for (int ch = 0; ch < Dn; ++ch) {
      const std::size_t kc = static_cast<std::size_t>(k) * Dn + ch;
      const T gy = dy[kc];
      const T dl = in.delta[kc];
      const T uk = in.u[kc];
      const T* a = &in.a[static_cast<std::size_t>(ch) * N];
      T* da = &g.a[static_cast<std::size_t>(ch) * N];
      const T* hk = &states[kc * N];
      const T* hp = s > 0 ? &states[(static_cast<std::size_t>(kp) * Dn + ch) * N] : nullptr;
      T* ghc = &gh[static_cast<std::size_t>(ch) * N];

      g.d[ch] += gy * uk;
      T du = gy * in.d[ch];
      T ddelta = 0;
      for (int n = 0; n < N; ++n) {
        ghc[n] += gy * ck[n];
        dck[n] += gy * hk[n];
        const T decay = std::exp(dl * a[n]);
        const T prev = hp ? hp[n] : T(0);
        const T g_decay = ghc[n] * prev;
        ddelta += g_decay * decay * a[n] + ghc[n] * bk[n] * uk;
        da[n] += g_decay * decay * dl;
        dbk[n] += ghc[n] * dl * uk;
        du += ghc[n] * dl * bk[n];
        ghc[n] *= decay;
      }
      g.u[kc] += du;
      g.delta[kc] += ddelta;
    }
  }
}

#define MVQA_INSTANTIATE_SSM(T)                                                          \
  template DiscreteSsm<T> discretize_zoh(const SsmParams<T>&);                           \
  template std::vector<T> scan_recurrent(const DiscreteSsm<T>&, std::span<const T>, T,   \
                                         std::span<const T>);                            \
  template SsmKernel<T> build_kernel(const DiscreteSsm<T>&, std::span<const T>, int);    \
  template std::vector<T> apply_kernel(const SsmKernel<T>&, T, std::span<const T>);      \
  template void selective_scan_kernel(const SelectiveInputs<T>&, Direction, std::span<T>, \
                                      std::span<T>);                                     \
  template void selective_scan_backward(const SelectiveInputs<T>&, Direction,            \
                                        std::span<const T>, std::span<const T>,          \
                                        const SelectiveGrads<T>&);

MVQA_INSTANTIATE_SSM(float)
MVQA_INSTANTIATE_SSM(double)

#undef MVQA_INSTANTIATE_SSM

}  // namespace mvqa::ssm
