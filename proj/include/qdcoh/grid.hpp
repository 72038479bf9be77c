#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace qdcoh {

/// Uniform grid `start + i*step`, i in [0, size).
struct UniformGrid {
    double start = 0.0;
    double step = 1.0;
    std::size_t size = 0;

    double at(std::size_t i) const { return start + static_cast<double>(i) * step; }
    double back() const { return size == 0 ? start : at(size - 1); }
    double span() const { return size < 2 ? 0.0 : step * static_cast<double>(size - 1); }

    std::vector<double> values() const {
        std::vector<double> v(size);
        for (std::size_t i = 0; i < size; ++i) v[i] = at(i);
        return v;
    }

    /// Grid centred on `centre` with `points` samples spanning +-half_span
    /// (the centre sits exactly on index points/2).
    static UniformGrid centred(double centre, double half_span, std::size_t points) {
        const double step = 2.0 * half_span / static_cast<double>(points);
        return {centre - step * static_cast<double>(points / 2), step, points};
    }

    static UniformGrid from_range(double lo, double hi, std::size_t points) {
        return {lo, points > 1 ? (hi - lo) / static_cast<double>(points - 1) : 0.0, points};
    }
};

/// True when `values` is uniform to a relative tolerance on the spacing.
inline bool is_uniform(const std::vector<double>& values, double rel_tol = 1e-9) {
    if (values.size() < 3) return true;
    const double step = (values.back() - values.front()) / static_cast<double>(values.size() - 1);
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (std::abs((values[i] - values[i - 1]) - step) > rel_tol * std::abs(step) + 1e-12) return false;
    }
    return true;
}

} // namespace qdcoh
