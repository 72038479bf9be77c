#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#include "qdcoh/grid.hpp"

namespace qdcoh {

/// Catmull-Rom cubic through uniformly spaced samples at fractional index u.
/// Returns `outside` beyond [0, n-1]; end intervals reuse the edge sample.
inline double cubic_at(std::span<const double> y, double u, double outside = 0.0) {
    const auto n = static_cast<long>(y.size());
    if (n == 0 || u < 0.0 || u > static_cast<double>(n - 1)) return outside;
    if (n == 1) return y[0];
    long i = static_cast<long>(std::floor(u));
    if (i >= n - 1) i = n - 2;
    const double f = u - static_cast<double>(i);
    if (f == 0.0) return y[static_cast<std::size_t>(i)];
    auto at = [&](long k) { return y[static_cast<std::size_t>(std::clamp(k, 0L, n - 1))]; };
    const double p0 = at(i - 1), p1 = at(i), p2 = at(i + 1), p3 = at(i + 2);
    return p1 + 0.5 * f * (p2 - p0 + f * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + f * (3.0 * (p1 - p2) + p3 - p0)));
}

inline double cubic_at(const UniformGrid& grid, std::span<const double> y, double x, double outside = 0.0) {
    return cubic_at(y, (x - grid.start) / grid.step, outside);
}

/// Piecewise-linear interpolation on ascending abscissae; clamps outside.
template <typename T>
T linear_at(std::span<const double> x, std::span<const T> y, double at) {
    if (x.empty()) return T{};
    if (at <= x.front()) return y.front();
    if (at >= x.back()) return y.back();
    const auto it = std::upper_bound(x.begin(), x.end(), at);
    const auto i = static_cast<std::size_t>(it - x.begin());
    const double f = (at - x[i - 1]) / (x[i] - x[i - 1]);
    return y[i - 1] + (y[i] - y[i - 1]) * f;
}

/// Trapezoid rule on arbitrary ascending abscissae.
inline double trapezoid(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    return s;
}

} // namespace qdcoh
