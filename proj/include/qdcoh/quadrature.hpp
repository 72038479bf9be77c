#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <queue>
#include <span>
#include <vector>

#include "qdcoh/errors.hpp"

namespace qdcoh::quadrature {

// 21-point Kronrod extension of the 10-point Gauss-Legendre rule
// (abscissae/weights on [-1, 1], positive half incl. centre).
inline constexpr std::array<double, 11> kKronrodNodes = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0};
inline constexpr std::array<double, 11> kKronrodWeights = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208624866380, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7, 9).
inline constexpr std::array<double, 5> kGaussWeights = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

inline constexpr std::size_t kNodesPerPanel = 21;

struct Options {
    double rel_tol = 1e-8;
    double abs_tol = 0.0;
    std::size_t max_nodes = std::size_t{1} << 14;
};

struct Result {
    std::complex<double> value;
    double error = 0.0;
    std::size_t nodes = 0;
};

namespace detail {

struct Panel {
    double lo, hi;
    std::complex<double> kronrod;
    double error;
    double abs_sum;
    bool operator<(const Panel& other) const { return error < other.error; }
};

template <typename F>
Panel evaluate_panel(F& f, double lo, double hi) {
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    const std::complex<double> centre = f(mid);
    std::complex<double> kronrod = centre * kKronrodWeights[10];
    std::complex<double> gauss{0.0, 0.0};
    double abs_sum = std::abs(centre) * kKronrodWeights[10];
    for (std::size_t j = 0; j < 10; ++j) {
        const double dx = half * kKronrodNodes[j];
        const std::complex<double> a = f(mid - dx);
        const std::complex<double> b = f(mid + dx);
        kronrod += (a + b) * kKronrodWeights[j];
        abs_sum += (std::abs(a) + std::abs(b)) * kKronrodWeights[j];
        if (j % 2 == 1) gauss += (a + b) * kGaussWeights[j / 2];
    }
    kronrod *= half;
    gauss *= half;
    return {lo, hi, kronrod, std::abs(kronrod - gauss), abs_sum * std::abs(half)};
}

} // namespace detail

/// Globally adaptive Gauss-Kronrod (G10/K21) integration of a complex
/// integrand over the union of the intervals delimited by `breakpoints`
/// (ascending). The panel with the largest error estimate is bisected until
/// the summed estimate meets max(abs_tol, rel_tol*|I|) or the node budget is
/// exhausted, in which case NumericalError carries the current estimate.
template <typename F>
Result integrate(F&& f, std::span<const double> breakpoints, const Options& opt = {}) {
    std::priority_queue<detail::Panel> heap;
    std::complex<double> total{0.0, 0.0};
    double total_error = 0.0;
    std::size_t nodes = 0;
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
        if (!(breakpoints[i + 1] > breakpoints[i])) continue;
        detail::Panel p = detail::evaluate_panel(f, breakpoints[i], breakpoints[i + 1]);
        nodes += kNodesPerPanel;
        total += p.kronrod;
        total_error += p.error;
        heap.push(p);
    }
    auto target = [&] { return std::max(opt.abs_tol, opt.rel_tol * std::abs(total)); };
    while (total_error > target() && !heap.empty()) {
        if (nodes + 2 * kNodesPerPanel > opt.max_nodes) {
            throw NumericalError("adaptive quadrature did not reach tolerance within the node budget",
                                 total.real(), total.imag());
        }
        detail::Panel worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.lo + worst.hi);
        detail::Panel left = detail::evaluate_panel(f, worst.lo, mid);
        detail::Panel right = detail::evaluate_panel(f, mid, worst.hi);
        nodes += 2 * kNodesPerPanel;
        total += left.kronrod + right.kronrod - worst.kronrod;
        total_error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Recompute the sum from the final panel set to drop accumulated rounding.
    std::complex<double> exact_sum{0.0, 0.0};
    double err_sum = 0.0;
    while (!heap.empty()) {
        exact_sum += heap.top().kronrod;
        err_sum += heap.top().error;
        heap.pop();
    }
    return {exact_sum, err_sum, nodes};
}

/// Splits every interval of `breakpoints` so that no panel is wider than
/// `max_width`.
inline std::vector<double> refine_breakpoints(std::span<const double> breakpoints, double max_width) {
    std::vector<double> out;
    if (breakpoints.empty()) return out;
    out.push_back(breakpoints.front());
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
        const double lo = breakpoints[i];
        const double hi = breakpoints[i + 1];
        if (!(hi > lo)) continue;
        const auto pieces = static_cast<std::size_t>(std::max(1.0, std::ceil((hi - lo) / max_width)));
        for (std::size_t k = 1; k < pieces; ++k) out.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(pieces));
        out.push_back(hi);
    }
    return out;
}

} // namespace qdcoh::quadrature
