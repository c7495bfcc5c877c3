#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "tdse/loess.hpp"
#include "tdse/model.hpp"
#include "tdse/series.hpp"
#include "tdse/stats.hpp"
#include "tdse/trend.hpp"

namespace tdse {

// ---------------------------------------------------------------------------
// One-day transitions
// ---------------------------------------------------------------------------

struct TransitionPairs {
    std::vector<double> prev; // Z_{n-1}
    std::vector<double> incr; // Z_n − Z_{n-1}
    std::size_t n_excluded = 0; // adjacent records skipped at gaps/block edges

    std::size_t size() const { return prev.size(); }
};

/// Build valid one-day transitions: consecutive records in the same block,
/// exactly one calendar day apart. Everything else is counted as excluded.
inline TransitionPairs make_pairs(std::span<const double> values, const std::vector<Date>& dates,
                                  const std::vector<IndexRange>& blocks, int min_pairs = 1) {
    TransitionPairs out;
    for (const auto& blk : blocks) {
        for (std::size_t i = blk.begin; i + 1 < blk.end; ++i) {
            if (days_from_civil(dates[i + 1]) - days_from_civil(dates[i]) != 1) continue;
            out.prev.push_back(values[i]);
            out.incr.push_back(values[i + 1] - values[i]);
        }
    }
    // Every adjacent record pair that did not become a transition — a gap or
    // a block boundary — counts as excluded.
    if (!values.empty()) out.n_excluded = values.size() - 1 - out.size();
    if (static_cast<int>(out.size()) < min_pairs)
        throw std::invalid_argument("make_pairs: only " + std::to_string(out.size()) +
                                    " valid transitions, need " + std::to_string(min_pairs));
    return out;
}

inline TransitionPairs make_pairs(const NormalizedSeries& z, int min_pairs = 1) {
    return make_pairs(z.z, z.base.dates, z.base.year_blocks, min_pairs);
}

inline TransitionPairs make_pairs(const DailySeries& s, int min_pairs = 1) {
    return make_pairs(s.values, s.dates, s.year_blocks, min_pairs);
}

// ---------------------------------------------------------------------------
// Curve estimates on a state grid
// ---------------------------------------------------------------------------

struct CurveEstimate {
    std::vector<double> grid;
    std::vector<double> values;
    std::vector<int> n_local;        // local sample size behind each value
    std::vector<std::uint8_t> reliable; // n_local >= 5

    std::size_t size() const { return grid.size(); }
};

inline std::vector<double> equispaced_grid(double lo, double hi, std::size_t n) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i)
        g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

/// LOESS estimate of the drift b(z) = E(ΔZ | Z = z) on an equispaced grid
/// between the 0.1% and 99.9% quantiles of the conditioning state.
inline CurveEstimate drift_loess(const TransitionPairs& pairs, const SmootherConfig& smoother,
                                 std::size_t n_grid = 201) {
    if (pairs.size() < 2) throw std::invalid_argument("drift_loess: too few pairs");
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return pairs.prev[a] < pairs.prev[b]; });
    std::vector<double> xs(pairs.size()), ys(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        xs[i] = pairs.prev[order[i]];
        ys[i] = pairs.incr[order[i]];
    }
    CurveEstimate c;
    c.grid = equispaced_grid(quantile_sorted(xs, 0.001), quantile_sorted(xs, 0.999), n_grid);
    c.values = loess_eval(xs, ys, smoother, c.grid);
    c.n_local.assign(n_grid, smoother.span_days);
    c.reliable.assign(n_grid, smoother.span_days >= 5 ? 1 : 0);
    return c;
}

/// Ordinary least squares of ΔZ on Z restricted to the central interval.
inline DriftParams drift_linear_ls(const TransitionPairs& pairs, double central_lo,
                                   double central_hi, int min_pairs = 1) {
    double s0 = 0, sx = 0, sxx = 0, sy = 0, sxy = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double x = pairs.prev[i];
        if (x < central_lo || x > central_hi) continue;
        const double y = pairs.incr[i];
        ++n;
        s0 += 1;
        sx += x;
        sxx += x * x;
        sy += y;
        sxy += x * y;
    }
    if (static_cast<int>(n) < std::max(min_pairs, 3))
        throw std::invalid_argument("drift_linear_ls: only " + std::to_string(n) +
                                    " pairs in the central interval");
    const double det = s0 * sxx - sx * sx;
    if (!(std::fabs(det) > 1e-12 * (sxx + 1.0) * s0))
        throw NumericError("drift_linear_ls: singular design (state nearly constant)");
    DriftParams d;
    d.beta = (s0 * sxy - sx * sy) / det;
    d.alpha = (sy - d.beta * sx) / s0;
    // Classic OLS standard errors.
    double rss = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double x = pairs.prev[i];
        if (x < central_lo || x > central_hi) continue;
        const double r = pairs.incr[i] - d.alpha - d.beta * x;
        rss += r * r;
    }
    if (n > 2) {
        const double s2 = rss / static_cast<double>(n - 2);
        d.se[1] = std::sqrt(s2 * s0 / det);
        d.se[0] = std::sqrt(s2 * sxx / det);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Kernel conditional estimates
// ---------------------------------------------------------------------------

enum class KernelType { epanechnikov, gaussian };

struct KernelConfig {
    KernelType kernel = KernelType::epanechnikov;
    double bandwidth = 0.0; // <= 0 selects Silverman's rule on the data

    double resolve_bandwidth(std::span<const double> ref) const {
        if (bandwidth > 0.0) return bandwidth;
        return silverman_bandwidth(ref);
    }
};

namespace detail {

inline double kernel_value(KernelType k, double u) {
    if (k == KernelType::epanechnikov) {
        const double a = std::fabs(u);
        return a < 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
    }
    return normal_pdf(u);
}

/// Effective local support used for the n_local reliability count.
inline double kernel_reach(KernelType k) { return k == KernelType::epanechnikov ? 1.0 : 2.0; }

} // namespace detail

/// Nadaraya–Watson estimate of the transition density of Z_n at x given
/// Z_{n−1} = y; per-axis kernel normalization makes it integrate to 1 in x.
inline double conditional_density(const TransitionPairs& pairs, double x, double y,
                                  const KernelConfig& config) {
    if (pairs.size() == 0) throw std::invalid_argument("conditional_density: no pairs");
    const double h = config.resolve_bandwidth(pairs.prev);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double wy = detail::kernel_value(config.kernel, (pairs.prev[i] - y) / h);
        if (wy == 0.0) continue;
        const double next = pairs.prev[i] + pairs.incr[i];
        num += wy * detail::kernel_value(config.kernel, (next - x) / h);
        den += wy;
    }
    if (den < 1e-300)
        throw std::invalid_argument("conditional_density: empty neighborhood at y=" + std::to_string(y));
    return num / (den * h);
}

struct ConditionalMoments {
    double mean = 0.0;
    double variance = 0.0;
    int n_local = 0;
};

/// Kernel-weighted mean and variance of the one-day increment near state y:
/// the drift and squared diffusion coefficient read off the transitions.
inline ConditionalMoments conditional_moments(const TransitionPairs& pairs, double y,
                                              const KernelConfig& config) {
    if (pairs.size() == 0) throw std::invalid_argument("conditional_moments: no pairs");
    const double h = config.resolve_bandwidth(pairs.prev);
    const double reach = detail::kernel_reach(config.kernel) * h;
    double sw = 0.0, swy = 0.0;
    ConditionalMoments out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double w = detail::kernel_value(config.kernel, (pairs.prev[i] - y) / h);
        if (w == 0.0) continue;
        sw += w;
        swy += w * pairs.incr[i];
        if (std::fabs(pairs.prev[i] - y) <= reach) ++out.n_local;
    }
    if (sw < 1e-300)
        throw std::invalid_argument("conditional_moments: empty neighborhood at y=" + std::to_string(y));
    out.mean = swy / sw;
    double sv = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double w = detail::kernel_value(config.kernel, (pairs.prev[i] - y) / h);
        if (w == 0.0) continue;
        const double d = pairs.incr[i] - out.mean;
        sv += w * d * d;
    }
    out.variance = sv / sw;
    return out;
}

struct KernelCurves {
    CurveEstimate drift;     // conditional mean of the increment
    CurveEstimate diffusion; // conditional standard deviation of the increment
};

/// Kernel conditional moment curves on an equispaced state grid between the
/// 0.1% and 99.9% quantiles. Unreliable points (fewer than 5 local pairs)
/// carry NaN values.
inline KernelCurves kernel_moment_curves(const TransitionPairs& pairs, const KernelConfig& config,
                                         std::size_t n_grid = 201) {
    if (pairs.size() < 2) throw std::invalid_argument("kernel_moment_curves: too few pairs");
    const double lo = quantile(pairs.prev, 0.001);
    const double hi = quantile(pairs.prev, 0.999);
    KernelCurves out;
    out.drift.grid = out.diffusion.grid = equispaced_grid(lo, hi, n_grid);
    out.drift.values.resize(n_grid);
    out.diffusion.values.resize(n_grid);
    out.drift.n_local.resize(n_grid);
    out.diffusion.n_local.resize(n_grid);
    out.drift.reliable.resize(n_grid);
    out.diffusion.reliable.resize(n_grid);
    for (std::size_t g = 0; g < n_grid; ++g) {
        ConditionalMoments m;
        bool ok = true;
        try {
            m = conditional_moments(pairs, out.drift.grid[g], config);
        } catch (const std::invalid_argument&) {
            ok = false;
        }
        const bool reliable = ok && m.n_local >= 5;
        out.drift.values[g] = ok ? m.mean : std::numeric_limits<double>::quiet_NaN();
        out.diffusion.values[g] =
            ok ? std::sqrt(m.variance) : std::numeric_limits<double>::quiet_NaN();
        out.drift.n_local[g] = out.diffusion.n_local[g] = ok ? m.n_local : 0;
        out.drift.reliable[g] = out.diffusion.reliable[g] = reliable ? 1 : 0;
    }
    return out;
}

} // namespace tdse
