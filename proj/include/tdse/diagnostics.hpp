#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tdse/model.hpp"
#include "tdse/npestim.hpp"
#include "tdse/stats.hpp"
#include "tdse/trend.hpp"

namespace tdse {

inline constexpr double kResidualFloor = 1e-8;

struct ResidualSeries {
    std::vector<double> eps;
    std::size_t size() const { return eps.size(); }
};

/// Standardized one-step residuals (incr − b(prev)) / a(prev).
inline ResidualSeries residuals(const TransitionPairs& pairs, const PiecewiseDiffusion& model) {
    ResidualSeries out;
    out.eps.reserve(pairs.size());
    std::vector<std::size_t> offending;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double a = eval_diff(model, pairs.prev[i]);
        if (a <= kResidualFloor) {
            offending.push_back(i);
            continue;
        }
        out.eps.push_back((pairs.incr[i] - eval_drift(model, pairs.prev[i])) / a);
    }
    if (!offending.empty()) {
        std::ostringstream msg;
        msg << "residuals: diffusion at or below floor " << kResidualFloor << " for "
            << offending.size() << " pair(s) at indices";
        for (std::size_t k = 0; k < offending.size() && k < 8; ++k) msg << ' ' << offending[k];
        if (offending.size() > 8) msg << " ...";
        throw NumericError(msg.str());
    }
    return out;
}

struct MomentCheck {
    double value = 0.0;
    double se = 0.0;
    double p_value = 1.0;
};

struct WhitenessReport {
    int n = 0;
    MomentCheck mean;
    MomentCheck variance;
    MomentCheck skewness;
    MomentCheck excess_kurtosis;
    std::vector<double> acf_eps;  // lags 1..20
    std::vector<double> acf_eps2; // lags 1..20
    LjungBoxResult lb_eps;
    LjungBoxResult lb_eps2;
    double ks_statistic = 0.0;
    double ks_p = 1.0;
    double qq_max_dev = 0.0;
    double alpha = 0.01;
    bool pass = false;
};

/// White-noise battery for standardized residuals: first and second moments,
/// autocorrelation of the residuals and their squares, and agreement with the
/// standard normal distribution. The pass flag combines the mean, variance,
/// both Ljung–Box tests, and the Kolmogorov–Smirnov test at level alpha;
/// skewness and kurtosis are reported with standard errors alongside.
inline WhitenessReport whiteness_tests(const ResidualSeries& res, double alpha = 0.01,
                                       int max_lag = 20) {
    const auto& e = res.eps;
    const std::size_t n = e.size();
    if (n < 100) throw std::invalid_argument("whiteness_tests: need at least 100 residuals");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("whiteness_tests: alpha in (0,1)");

    WhitenessReport rep;
    rep.n = static_cast<int>(n);
    rep.alpha = alpha;
    const double nd = static_cast<double>(n);

    const double m = mean(e);
    const double v = variance(e);
    const double sd = std::sqrt(v);
    auto two_sided = [](double z) { return 2.0 * (1.0 - normal_cdf(std::fabs(z))); };

    rep.mean = {m, sd / std::sqrt(nd), two_sided(m / (sd / std::sqrt(nd)))};
    rep.variance = {v, std::sqrt(2.0 / (nd - 1.0)), two_sided((v - 1.0) / std::sqrt(2.0 / (nd - 1.0)))};
    rep.skewness = {skewness(e), std::sqrt(6.0 / nd), two_sided(skewness(e) / std::sqrt(6.0 / nd))};
    rep.excess_kurtosis = {excess_kurtosis(e), std::sqrt(24.0 / nd),
                           two_sided(excess_kurtosis(e) / std::sqrt(24.0 / nd))};

    rep.acf_eps = autocorrelations(e, max_lag);
    std::vector<double> e2(n);
    for (std::size_t i = 0; i < n; ++i) e2[i] = e[i] * e[i];
    rep.acf_eps2 = autocorrelations(e2, max_lag);
    rep.lb_eps = ljung_box(e, max_lag);
    rep.lb_eps2 = ljung_box(e2, max_lag);

    // Kolmogorov–Smirnov against N(0,1), with the finite-sample argument
    // scaling of Stephens.
    std::vector<double> sorted = e;
    std::sort(sorted.begin(), sorted.end());
    double d = 0.0, qq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double F = normal_cdf(sorted[i]);
        d = std::max(d, std::max((i + 1.0) / nd - F, F - i / nd));
        qq = std::max(qq, std::fabs(sorted[i] - normal_quantile((i + 0.5) / nd)));
    }
    rep.ks_statistic = d;
    rep.ks_p = kolmogorov_sf((std::sqrt(nd) + 0.12 + 0.11 / std::sqrt(nd)) * d);
    rep.qq_max_dev = qq;

    rep.pass = rep.mean.p_value > alpha && rep.variance.p_value > alpha &&
               rep.lb_eps.p_value > alpha && rep.lb_eps2.p_value > alpha && rep.ks_p > alpha;
    return rep;
}

namespace detail {

inline std::vector<char> trim_keep_mask(const std::vector<double>& values, double p_low,
                                        double p_high) {
    if (!(p_low >= 0.0) || !(p_high >= 0.0) || !(p_low + p_high < 0.5))
        throw std::invalid_argument("trim_sample: need p_low, p_high >= 0 and p_low + p_high < 0.5");
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    if (p_low > 0.0) lo = quantile(values, p_low);
    if (p_high > 0.0) hi = quantile(values, 1.0 - p_high);
    std::vector<char> keep(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) keep[i] = values[i] >= lo && values[i] <= hi;
    return keep;
}

} // namespace detail

/// Removes records whose value falls outside the [q_{p_low}, q_{1−p_high}]
/// band. Removal breaks adjacency, so transition pairs must be rebuilt from
/// the trimmed series.
inline DailySeries trim_sample(const DailySeries& series, double p_low, double p_high) {
    return filter_records(series, detail::trim_keep_mask(series.values, p_low, p_high));
}

inline NormalizedSeries trim_sample(const NormalizedSeries& ns, double p_low, double p_high) {
    const auto keep = detail::trim_keep_mask(ns.z, p_low, p_high);
    NormalizedSeries out;
    out.base = filter_records(ns.base, keep);
    auto subset_curve = [&](const TrendCurve& c) {
        TrendCurve r;
        r.span_days = c.span_days;
        r.kind = c.kind;
        r.robust_iters = c.robust_iters;
        r.n_floored = c.n_floored;
        for (std::size_t i = 0; i < keep.size(); ++i) {
            if (!keep[i]) continue;
            r.grid.push_back(static_cast<double>(r.grid.size()));
            r.fitted.push_back(c.fitted[i]);
        }
        return r;
    };
    out.mean_trend = subset_curve(ns.mean_trend);
    out.scale_trend = subset_curve(ns.scale_trend);
    for (std::size_t i = 0; i < keep.size(); ++i)
        if (keep[i]) out.z.push_back(ns.z[i]);
    return out;
}

/// L1 distance between two coefficient vectors of equal length.
inline double robustness_delta(std::span<const double> theta_x, std::span<const double> theta_y) {
    if (theta_x.size() != theta_y.size())
        throw std::invalid_argument("robustness_delta: coefficient vectors differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < theta_x.size(); ++i) s += std::fabs(theta_x[i] - theta_y[i]);
    return s;
}

enum class BoundaryVerdict { inaccessible, no_divergence, inconclusive, not_equipped };

inline const char* to_string(BoundaryVerdict v) {
    switch (v) {
        case BoundaryVerdict::inaccessible: return "inaccessible";
        case BoundaryVerdict::no_divergence: return "no_divergence";
        case BoundaryVerdict::inconclusive: return "inconclusive";
        case BoundaryVerdict::not_equipped: return "not_equipped";
    }
    return "unknown";
}

struct ScaleDiagnosticOptions {
    double divergence_threshold = 1e6;
    double boundary_cutoff = 1e-4; // stop this far from a finite boundary
};

struct ScaleDiagnostic {
    std::vector<double> grid;
    std::vector<double> s_prime; // exp(−∫ 2b/a²) at the grid points
    std::vector<double> s;       // scale function, zero at the first grid point
    BoundaryVerdict lower_verdict = BoundaryVerdict::not_equipped;
    BoundaryVerdict upper_verdict = BoundaryVerdict::not_equipped;
    double lower_s_at_stop = std::numeric_limits<double>::quiet_NaN();
    double upper_s_at_stop = std::numeric_limits<double>::quiet_NaN();
    ScaleDiagnosticOptions options;
};

namespace detail {

struct ScaleState {
    double exponent = 0.0; // ∫_{z0}^{x} 2b/a² dv
    double s = 0.0;
};

inline double safe_exp(double x) {
    if (x > 709.0) return std::numeric_limits<double>::infinity();
    return std::exp(x);
}

/// Advances (exponent, s) from x0 to x1 by composite fourth-order
/// Runge–Kutta steps, doubling the step count until both components settle.
template <class F>
ScaleState scale_advance(F&& ratio, double x0, double x1, ScaleState in) {
    auto run = [&](int nsub) {
        ScaleState st = in;
        const double h = (x1 - x0) / nsub;
        double x = x0;
        for (int i = 0; i < nsub; ++i) {
            const double f1 = ratio(x);
            const double f2 = ratio(x + 0.5 * h);
            const double f4 = ratio(x + h);
            const double g1 = safe_exp(-st.exponent);
            const double g2 = safe_exp(-(st.exponent + 0.5 * h * f1));
            const double g3 = safe_exp(-(st.exponent + 0.5 * h * f2));
            const double g4 = safe_exp(-(st.exponent + h * f2));
            st.exponent += h / 6.0 * (f1 + 4.0 * f2 + f4);
            st.s += h / 6.0 * (g1 + 2.0 * g2 + 2.0 * g3 + g4);
            x += h;
        }
        return st;
    };
    ScaleState prev = run(4);
    for (int nsub = 8; nsub <= (1 << 15); nsub *= 2) {
        const ScaleState cur = run(nsub);
        const bool e_ok = std::fabs(cur.exponent - prev.exponent) <=
                          1e-12 * (1.0 + std::fabs(cur.exponent));
        const bool s_ok = std::fabs(cur.s - prev.s) <= 1e-12 * (1.0 + std::fabs(cur.s)) ||
                          (std::isinf(cur.s) && std::isinf(prev.s));
        prev = cur;
        if (e_ok && s_ok) break;
        if (!std::isfinite(cur.exponent) && !std::isnan(cur.exponent)) break;
    }
    return prev;
}

} // namespace detail

/// Integrates the scale function s(x) = ∫ exp(−∫ 2b/a²) from the first grid
/// point and probes each finite boundary for divergence: |s| crossing the
/// threshold on the way to within the cutoff distance of the boundary is
/// ruled inaccessible.
inline ScaleDiagnostic scale_function_diagnostic(const PiecewiseDiffusion& model,
                                                 const std::vector<double>& grid,
                                                 const ScaleDiagnosticOptions& opt = {}) {
    if (grid.size() < 2) throw std::invalid_argument("scale_function_diagnostic: grid needs >= 2 points");
    if (!std::is_sorted(grid.begin(), grid.end()))
        throw std::invalid_argument("scale_function_diagnostic: grid must be sorted");
    const double r_lo = model.support_lower();
    const double r_hi = model.support_upper();
    if (grid.front() <= r_lo || grid.back() >= r_hi)
        throw std::invalid_argument("scale_function_diagnostic: grid must lie inside the open support");

    auto ratio = [&](double x) {
        const double a = eval_diff(model, x);
        return 2.0 * eval_drift(model, x) / (a * a);
    };

    ScaleDiagnostic out;
    out.options = opt;
    out.grid = grid;
    out.s_prime.resize(grid.size());
    out.s.resize(grid.size());
    detail::ScaleState st;
    out.s_prime[0] = 1.0;
    out.s[0] = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        st = detail::scale_advance(ratio, grid[i - 1], grid[i], st);
        if (std::isnan(st.exponent) || std::isnan(st.s))
            throw NumericError("scale_function_diagnostic: quadrature failed on the grid");
        out.s_prime[i] = detail::safe_exp(-st.exponent);
        out.s[i] = st.s;
    }

    // Probe a finite boundary by geometric approach from the nearest grid end.
    auto probe = [&](double r, double x_start, detail::ScaleState start, double& s_at_stop) {
        double x = x_start;
        detail::ScaleState cur = start;
        double dist = std::fabs(r - x);
        if (!(dist > opt.boundary_cutoff)) {
            s_at_stop = cur.s;
            return std::fabs(cur.s) > opt.divergence_threshold ? BoundaryVerdict::inaccessible
                                                               : BoundaryVerdict::no_divergence;
        }
        while (dist > opt.boundary_cutoff) {
            const double next_dist = std::max(0.5 * dist, opt.boundary_cutoff);
            const double x_next = r > x ? r - next_dist : r + next_dist;
            try {
                cur = detail::scale_advance(ratio, x, x_next, cur);
            } catch (const std::exception&) {
                s_at_stop = cur.s;
                return BoundaryVerdict::inconclusive;
            }
            if (std::isnan(cur.exponent) || std::isnan(cur.s)) {
                s_at_stop = cur.s;
                return BoundaryVerdict::inconclusive;
            }
            x = x_next;
            dist = next_dist;
            if (std::fabs(cur.s) > opt.divergence_threshold) {
                s_at_stop = cur.s;
                return BoundaryVerdict::inaccessible;
            }
        }
        s_at_stop = cur.s;
        return BoundaryVerdict::no_divergence;
    };

    if (std::isfinite(r_lo)) {
        detail::ScaleState at_front; // s and exponent are zero at grid.front()
        out.lower_verdict = probe(r_lo, grid.front(), at_front, out.lower_s_at_stop);
    }
    if (std::isfinite(r_hi)) {
        out.upper_verdict = probe(r_hi, grid.back(), st, out.upper_s_at_stop);
    }
    return out;
}

} // namespace tdse
