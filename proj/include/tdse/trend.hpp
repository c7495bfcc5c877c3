#pragma once

#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "tdse/loess.hpp"
#include "tdse/series.hpp"

namespace tdse {

enum class TrendKind { mean, scale };

/// A smoothed function of time on the observation grid (one value per record,
/// distances measured in in-season record index).
struct TrendCurve {
    std::vector<double> grid;
    std::vector<double> fitted;
    int span_days = 0;
    TrendKind kind = TrendKind::mean;
    int robust_iters = 0;
    int n_floored = 0; // scale curves: points floored to eps_scale

    std::size_t size() const { return fitted.size(); }

    static TrendCurve constant(std::size_t n, double value, TrendKind kind) {
        TrendCurve c;
        c.grid.resize(n);
        std::iota(c.grid.begin(), c.grid.end(), 0.0);
        c.fitted.assign(n, value);
        c.kind = kind;
        return c;
    }
};

struct NormalizedSeries {
    DailySeries base;
    std::vector<double> z;
    TrendCurve mean_trend;  // constant 0 when no mean trend is removed
    TrendCurve scale_trend; // constant 1 when no scale trend is removed

    std::size_t size() const { return z.size(); }
};

inline std::vector<double> index_grid(std::size_t n) {
    std::vector<double> g(n);
    std::iota(g.begin(), g.end(), 0.0);
    return g;
}

/// Mean trend m(t) by robust LOESS over the in-season record index.
inline TrendCurve estimate_mean_trend(const DailySeries& series, const SmootherConfig& config) {
    config.validate();
    if (series.size() < 2 * static_cast<std::size_t>(config.span_days))
        throw std::invalid_argument("estimate_mean_trend: series shorter than twice the span");
    TrendCurve c;
    c.grid = index_grid(series.size());
    c.fitted = robust_loess_fit(c.grid, series.values, config);
    c.span_days = config.span_days;
    c.kind = TrendKind::mean;
    c.robust_iters = config.robust_iters;
    return c;
}

/// Centered moving mean with shrunken windows at the ends.
inline TrendCurve moving_average(const DailySeries& series, int window_days) {
    const std::size_t n = series.size();
    if (window_days < 1 || static_cast<std::size_t>(window_days) > n)
        throw std::invalid_argument("moving_average: window must be in [1, n]");
    TrendCurve c;
    c.grid = index_grid(n);
    c.fitted.resize(n);
    c.span_days = window_days;
    c.kind = TrendKind::mean;
    const std::size_t half_lo = static_cast<std::size_t>((window_days - 1) / 2);
    const std::size_t half_hi = static_cast<std::size_t>(window_days / 2);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half_lo ? i - half_lo : 0;
        const std::size_t hi = std::min(n - 1, i + half_hi);
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) s += series.values[j];
        c.fitted[i] = s / static_cast<double>(hi - lo + 1);
    }
    return c;
}

/// Scale trend s(t): LOESS of the squared mean-trend residuals with the same
/// span, then the positive square root. Non-positive smoothed values are
/// floored at eps_scale = 1e-6 · sd(series) and counted.
inline TrendCurve estimate_scale_trend(const DailySeries& series, const TrendCurve& mean_trend,
                                       const SmootherConfig& config) {
    config.validate();
    const std::size_t n = series.size();
    if (mean_trend.size() != n)
        throw std::invalid_argument("estimate_scale_trend: mean trend not on the series grid");
    std::vector<double> r2(n);
    bool any_nonzero = false;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = series.values[i] - mean_trend.fitted[i];
        r2[i] = r * r;
        any_nonzero = any_nonzero || r != 0.0;
    }
    if (!any_nonzero) throw std::invalid_argument("estimate_scale_trend: all residuals zero (degenerate scale)");

    // Smoothing the squared residuals non-robustly: downweighting large r²
    // would systematically shrink the variance estimate.
    SmootherConfig vcfg = config;
    vcfg.robust_iters = 0;
    TrendCurve c;
    c.grid = index_grid(n);
    c.fitted = loess_fit(c.grid, r2, vcfg);
    c.span_days = config.span_days;
    c.kind = TrendKind::scale;
    const double eps_scale = 1e-6 * stdev(series.values);
    for (double& v : c.fitted) {
        if (v > eps_scale * eps_scale) {
            v = std::sqrt(v);
        } else {
            v = eps_scale;
            ++c.n_floored;
        }
    }
    return c;
}

/// z = (x − m)/s. Passing nullptr for a trend uses the constant 0 (mean) or
/// constant 1 (scale) curve, so the three model variants share one code path.
inline NormalizedSeries normalize(const DailySeries& series, const TrendCurve* mean_trend,
                                  const TrendCurve* scale_trend) {
    const std::size_t n = series.size();
    if (mean_trend && mean_trend->size() != n)
        throw std::invalid_argument("normalize: mean trend not on the series grid");
    if (scale_trend && scale_trend->size() != n)
        throw std::invalid_argument("normalize: scale trend not on the series grid");
    NormalizedSeries out;
    out.base = series;
    out.mean_trend = mean_trend ? *mean_trend : TrendCurve::constant(n, 0.0, TrendKind::mean);
    out.scale_trend = scale_trend ? *scale_trend : TrendCurve::constant(n, 1.0, TrendKind::scale);
    out.z.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = out.scale_trend.fitted[i];
        if (!(s > 0.0)) throw std::invalid_argument("normalize: scale trend not strictly positive");
        out.z[i] = (series.values[i] - out.mean_trend.fitted[i]) / s;
    }
    return out;
}

/// x = s·z + m for a single record index.
inline double denormalize_at(const NormalizedSeries& ns, std::size_t i, double z) {
    return ns.scale_trend.fitted[i] * z + ns.mean_trend.fitted[i];
}

} // namespace tdse
