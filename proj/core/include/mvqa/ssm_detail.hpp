#pragma once

namespace mvqa::ssm::detail {

// Input gain of the ZOH rule, (exp(z) - 1) / z with z = delta * a.
// Near z = 0 the truncated series 1 + z/2 + z^2/6 replaces the direct form.
template <typename T>
T zoh_gain(T z);
template <typename T>
T zoh_gain_series(T z);
template <typename T>
T zoh_gain_direct(T z);

}  // namespace mvqa::ssm::detail
