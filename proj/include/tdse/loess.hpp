#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "tdse/common.hpp"
#include "tdse/stats.hpp"

namespace tdse {

enum class LoessKernel { tricube, triangular };
enum class BoundaryKernel { same, triangular };

struct SmootherConfig {
    int span_days = 1049;          // window size in points
    int degree = 1;                // local polynomial degree, 0 or 1
    LoessKernel weight_kernel = LoessKernel::tricube;
    BoundaryKernel boundary_kernel = BoundaryKernel::triangular;
    int robust_iters = 0;

    void validate() const {
        if (degree != 0 && degree != 1) throw std::invalid_argument("SmootherConfig: degree must be 0 or 1");
        if (span_days < degree + 2) throw std::invalid_argument("SmootherConfig: span_days must be >= degree + 2");
        if (robust_iters < 0) throw std::invalid_argument("SmootherConfig: robust_iters must be >= 0");
    }
};

namespace detail {

inline double loess_weight(LoessKernel k, double u) {
    if (u >= 1.0) return 0.0;
    if (k == LoessKernel::triangular) return 1.0 - u;
    const double t = 1.0 - u * u * u;
    return t * t * t;
}

/// Window of the `q` nearest x-values around x0 (x sorted): grows one point
/// at a time toward whichever side is closer.
inline std::pair<std::size_t, std::size_t> nearest_window(std::span<const double> x, double x0,
                                                          std::size_t q) {
    const std::size_t n = x.size();
    std::size_t lo = static_cast<std::size_t>(
        std::lower_bound(x.begin(), x.end(), x0) - x.begin());
    std::size_t hi = lo;
    for (std::size_t k = 0; k < q; ++k) {
        if (lo == 0) {
            ++hi;
        } else if (hi == n) {
            --lo;
        } else if (x0 - x[lo - 1] <= x[hi] - x0) {
            --lo;
        } else {
            ++hi;
        }
    }
    return {lo, hi};
}

} // namespace detail

/// Locally weighted polynomial regression of y on x (x sorted ascending),
/// evaluated at arbitrary points `grid`. Each evaluation fits a degree-0/1
/// polynomial over the span_days nearest observations with kernel weights;
/// windows clipped by a data edge switch to the boundary kernel. Optional
/// per-observation multipliers (robustness weights) scale the kernel weights.
inline std::vector<double> loess_eval(std::span<const double> x, std::span<const double> y,
                                      const SmootherConfig& config, std::span<const double> grid,
                                      const std::vector<double>* obs_weights = nullptr) {
    config.validate();
    const std::size_t n = x.size();
    if (n != y.size()) throw std::invalid_argument("loess: x and y lengths differ");
    if (n < static_cast<std::size_t>(config.span_days))
        throw std::invalid_argument("loess: span larger than data");
    for (std::size_t i = 0; i + 1 < n; ++i)
        if (x[i] > x[i + 1]) throw std::invalid_argument("loess: x not sorted");
    if (obs_weights && obs_weights->size() != n)
        throw std::invalid_argument("loess: weight length mismatch");

    const std::size_t q = static_cast<std::size_t>(config.span_days);
    std::vector<double> out(grid.size());

    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double x0 = grid[g];
        const auto [lo, hi] = detail::nearest_window(x, x0, q);
        double dmax = 0.0;
        for (std::size_t j = lo; j < hi; ++j) dmax = std::max(dmax, std::fabs(x[j] - x0));
        const LoessKernel kern =
            (config.boundary_kernel == BoundaryKernel::triangular && (lo == 0 || hi == n))
                ? LoessKernel::triangular
                : config.weight_kernel;

        // Weighted normal equations centered at x0 for conditioning.
        double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
        for (std::size_t j = lo; j < hi; ++j) {
            double w = dmax > 0.0 ? detail::loess_weight(kern, std::fabs(x[j] - x0) / dmax) : 1.0;
            if (obs_weights) w *= (*obs_weights)[j];
            if (w <= 0.0) continue;
            const double u = x[j] - x0;
            s0 += w;
            s1 += w * u;
            s2 += w * u * u;
            t0 += w * y[j];
            t1 += w * u * y[j];
        }
        if (s0 <= 0.0) throw NumericError("loess: all weights vanished in a window");
        if (config.degree == 0) {
            out[g] = t0 / s0;
        } else {
            const double det = s0 * s2 - s1 * s1;
            if (!(std::fabs(det) > 1e-12 * (std::fabs(s0 * s2) + 1e-300)))
                throw NumericError("loess: degenerate local design (x nearly constant in a window)");
            const double slope = (s0 * t1 - s1 * t0) / det;
            out[g] = (t0 - slope * s1) / s0;
        }
    }
    return out;
}

/// LOESS fitted values on the observation grid itself.
inline std::vector<double> loess_fit(std::span<const double> x, std::span<const double> y,
                                     const SmootherConfig& config) {
    return loess_eval(x, y, config, x);
}

/// Iterated robust LOESS: after each pass, Tukey-biweight robustness weights
/// from the residuals (cut at 6·median|residual|) multiply the kernel weights.
/// robust_iters = 0 reduces to loess_fit.
inline std::vector<double> robust_loess_fit(std::span<const double> x, std::span<const double> y,
                                            const SmootherConfig& config) {
    std::vector<double> fitted = loess_fit(x, y, config);
    const std::size_t n = x.size();
    std::vector<double> w(n, 1.0), absr(n);
    for (int it = 0; it < config.robust_iters; ++it) {
        for (std::size_t i = 0; i < n; ++i) absr[i] = std::fabs(y[i] - fitted[i]);
        const double med = median(absr);
        if (med <= 0.0) break; // perfect fit; all robustness weights are 1
        const double cut = 6.0 * med;
        for (std::size_t i = 0; i < n; ++i) {
            const double u = absr[i] / cut;
            w[i] = u < 1.0 ? (1.0 - u * u) * (1.0 - u * u) : 0.0;
        }
        fitted = loess_eval(x, y, config, x, &w);
    }
    return fitted;
}

} // namespace tdse
