#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "tdse/common.hpp"
#include "tdse/optim.hpp"
#include "tdse/rng.hpp"
#include "tdse/series.hpp"
#include "tdse/trend.hpp"

namespace tdse {

enum class Tail { upper, lower };

struct GevParams {
    double mu = 0.0;
    double sigma = 1.0;
    double xi = 0.0;
    std::array<double, 3> se{};                  // (mu, sigma, xi)
    std::array<std::array<double, 2>, 3> ci90{}; // per-parameter 90% interval
    Tail tail = Tail::upper;
    int n_blocks = 0;
    double loglik = 0.0;
};

struct BoundaryInfo {
    double r_lower = -std::numeric_limits<double>::infinity();
    double r_upper = std::numeric_limits<double>::infinity();
    enum class Source { gev, manual } source = Source::gev;
    double xi_lower = std::numeric_limits<double>::quiet_NaN();
    double xi_upper = std::numeric_limits<double>::quiet_NaN();

    bool has_lower() const { return std::isfinite(r_lower); }
    bool has_upper() const { return std::isfinite(r_upper); }
};

// ---------------------------------------------------------------------------
// Block extremes
// ---------------------------------------------------------------------------

enum class ExtremeDirection { max, min };

struct BlockExtremes {
    std::vector<double> values; // one extreme per retained block
    int n_dropped = 0;          // blocks shorter than half the modal length
};

inline BlockExtremes block_extremes(std::span<const double> values,
                                    const std::vector<IndexRange>& blocks,
                                    ExtremeDirection direction, int min_blocks = 1) {
    if (blocks.empty()) throw std::invalid_argument("block_extremes: no blocks");
    std::map<std::size_t, int> length_counts;
    for (const auto& b : blocks) ++length_counts[b.size()];
    std::size_t modal = 0;
    int best = 0;
    for (const auto& [len, cnt] : length_counts) {
        if (cnt >= best) { // ties resolve to the longer length
            best = cnt;
            modal = len;
        }
    }
    BlockExtremes out;
    for (const auto& b : blocks) {
        if (2 * b.size() < modal) {
            ++out.n_dropped;
            continue;
        }
        double ext = values[b.begin];
        for (std::size_t i = b.begin + 1; i < b.end; ++i) {
            ext = direction == ExtremeDirection::max ? std::max(ext, values[i])
                                                     : std::min(ext, values[i]);
        }
        out.values.push_back(ext);
    }
    if (static_cast<int>(out.values.size()) < min_blocks)
        throw std::invalid_argument("block_extremes: only " + std::to_string(out.values.size()) +
                                    " usable blocks, need " + std::to_string(min_blocks));
    return out;
}

inline BlockExtremes block_extremes(const DailySeries& s, ExtremeDirection d, int min_blocks = 1) {
    return block_extremes(s.values, s.year_blocks, d, min_blocks);
}

inline BlockExtremes block_extremes(const NormalizedSeries& s, ExtremeDirection d,
                                    int min_blocks = 1) {
    return block_extremes(s.z, s.base.year_blocks, d, min_blocks);
}

inline BlockExtremes block_extremes(std::span<const double> values,
                                    const std::vector<std::size_t>& block_lengths,
                                    ExtremeDirection d, int min_blocks = 1) {
    std::vector<IndexRange> blocks;
    std::size_t offset = 0;
    for (std::size_t len : block_lengths) {
        blocks.push_back(IndexRange{offset, offset + len});
        offset += len;
    }
    if (offset != values.size())
        throw std::invalid_argument("block_extremes: layout does not cover the value vector");
    return block_extremes(values, blocks, d, min_blocks);
}

// ---------------------------------------------------------------------------
// GEV likelihood and fitting
// ---------------------------------------------------------------------------

/// Negative log-likelihood of an upper-tail GEV sample (additive constants
/// kept). Support violations return 1e300 so the optimizer treats them as
/// infeasible without overflowing.
inline double gev_negloglik(double mu, double sigma, double xi, std::span<const double> x) {
    if (!(sigma > 0.0)) return 1e300;
    double nll = 0.0;
    const double logs = std::log(sigma);
    for (double v : x) {
        const double h = xi * (v - mu) / sigma;
        if (h <= -1.0 + 1e-12) return 1e300;
        double y; // log(1 + h)/xi, continuous through xi = 0
        if (std::fabs(xi) > 1e-9) {
            y = std::log1p(h) / xi;
        } else {
            const double u = (v - mu) / sigma;
            y = u * (1.0 - 0.5 * xi * u);
        }
        nll += logs + (1.0 + xi) * y + std::exp(-y);
        if (!std::isfinite(nll)) return 1e300;
    }
    return nll;
}

/// Probability-weighted-moment starting values (Hosking), upper-tail data.
inline std::array<double, 3> gev_pwm_start(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 3) throw std::invalid_argument("gev_pwm_start: need at least 3 values");
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    long double b0 = 0, b1 = 0, b2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const long double v = s[i];
        b0 += v;
        b1 += v * static_cast<long double>(i) / static_cast<long double>(n - 1);
        if (n > 2)
            b2 += v * static_cast<long double>(i) * static_cast<long double>(i - (i > 0 ? 1 : 0)) /
                  (static_cast<long double>(n - 1) * static_cast<long double>(n - 2));
    }
    b0 /= n;
    b1 /= n;
    b2 /= n;
    const double d21 = static_cast<double>(2 * b1 - b0);
    const double d31 = static_cast<double>(3 * b2 - b0);
    if (d21 <= 0.0 || d31 <= 0.0) {
        // Nearly degenerate sample; fall back to a Gumbel-ish moment start.
        const double sd = stdev(x);
        const double sig = sd > 0 ? sd * 0.7797 : 1.0;
        return {static_cast<double>(b0) - 0.5772156649015329 * sig, sig, 0.0};
    }
    const double c = d21 / d31 - std::log(2.0) / std::log(3.0);
    const double k = 7.8590 * c + 2.9554 * c * c; // Hosking's k = -xi
    double mu, sigma, xi;
    if (std::fabs(k) < 1e-6) {
        sigma = d21 / std::log(2.0);
        mu = static_cast<double>(b0) - 0.5772156649015329 * sigma;
        xi = 0.0;
    } else {
        const double g = std::tgamma(1.0 + k);
        sigma = d21 * k / (g * (1.0 - std::pow(2.0, -k)));
        mu = static_cast<double>(b0) + sigma * (g - 1.0) / k;
        xi = -k;
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma) || !std::isfinite(mu) || !std::isfinite(xi)) {
        const double sd = stdev(x);
        const double sig = sd > 0 ? sd * 0.7797 : 1.0;
        return {mean(x) - 0.5772156649015329 * sig, sig, 0.0};
    }
    return {mu, sigma, xi};
}

struct GevFitOptions {
    int min_blocks = 1;
    int restarts = 3;
    std::uint64_t seed = 0x5eedc0defeedfaceull;
    int max_iter = 5000;
    double ftol_rel = 1e-12;
};

namespace detail {

/// Observed-information standard errors from a central-difference Hessian.
inline std::array<double, 3> gev_standard_errors(double mu, double sigma, double xi,
                                                 std::span<const double> x) {
    const std::array<double, 3> th{mu, sigma, xi};
    std::array<double, 3> h;
    for (int i = 0; i < 3; ++i) h[static_cast<std::size_t>(i)] = 1e-4 * (1.0 + std::fabs(th[static_cast<std::size_t>(i)]));
    auto f = [&](double a, double b, double c) { return gev_negloglik(a, b, c, x); };
    double H[3][3];
    for (int i = 0; i < 3; ++i) {
        for (int j = i; j < 3; ++j) {
            std::array<double, 3> p;
            auto eval = [&](int si, int sj) {
                p = th;
                p[static_cast<std::size_t>(i)] += si * h[static_cast<std::size_t>(i)];
                p[static_cast<std::size_t>(j)] += sj * h[static_cast<std::size_t>(j)];
                return f(p[0], p[1], p[2]);
            };
            double v;
            if (i == j) {
                v = (eval(1, 0) - 2.0 * f(th[0], th[1], th[2]) + eval(-1, 0)) /
                    (h[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(i)]);
            } else {
                v = (eval(1, 1) - eval(1, -1) - eval(-1, 1) + eval(-1, -1)) /
                    (4.0 * h[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(j)]);
            }
            H[i][j] = H[j][i] = v;
        }
    }
    // Invert the 3x3 Hessian by cofactors.
    const double det = H[0][0] * (H[1][1] * H[2][2] - H[1][2] * H[2][1]) -
                       H[0][1] * (H[1][0] * H[2][2] - H[1][2] * H[2][0]) +
                       H[0][2] * (H[1][0] * H[2][1] - H[1][1] * H[2][0]);
    std::array<double, 3> se{std::numeric_limits<double>::quiet_NaN(),
                             std::numeric_limits<double>::quiet_NaN(),
                             std::numeric_limits<double>::quiet_NaN()};
    if (std::fabs(det) < 1e-300 || !std::isfinite(det)) return se;
    const double c00 = (H[1][1] * H[2][2] - H[1][2] * H[2][1]) / det;
    const double c11 = (H[0][0] * H[2][2] - H[0][2] * H[2][0]) / det;
    const double c22 = (H[0][0] * H[1][1] - H[0][1] * H[1][0]) / det;
    if (c00 > 0) se[0] = std::sqrt(c00);
    if (c11 > 0) se[1] = std::sqrt(c11);
    if (c22 > 0) se[2] = std::sqrt(c22);
    return se;
}

} // namespace detail

/// Maximum-likelihood GEV fit of block extremes. Minima are fitted by
/// negation (upper-tail fit of −x) and mapped back with mu negated. Search:
/// Nelder–Mead from the PWM start plus seeded random restarts, best kept.
inline GevParams fit_gev(std::span<const double> extremes, Tail tail = Tail::upper,
                         const GevFitOptions& opt = {}) {
    if (static_cast<int>(extremes.size()) < std::max(opt.min_blocks, 3))
        throw std::invalid_argument("fit_gev: too few blocks (" + std::to_string(extremes.size()) + ")");
    std::vector<double> x(extremes.begin(), extremes.end());
    if (tail == Tail::lower)
        for (double& v : x) v = -v;
    const double lo = *std::min_element(x.begin(), x.end());
    const double hi = *std::max_element(x.begin(), x.end());
    if (!(hi > lo)) throw std::invalid_argument("fit_gev: degenerate data (all extremes equal)");

    const auto start = gev_pwm_start(x);
    auto nll3 = [&](std::span<const double> th) {
        return gev_negloglik(th[0], std::exp(th[1]), th[2], x);
    };

    std::vector<double> best_th;
    double best_f = std::numeric_limits<double>::infinity();
    bool any_converged = false;
    StreamRng rng(opt.seed, 0);
    for (int r = 0; r <= opt.restarts; ++r) {
        std::array<double, 3> th0{start[0], std::log(start[1]), start[2]};
        if (r > 0) {
            th0[0] += 0.5 * start[1] * rng.next_normal();
            th0[1] += 0.3 * rng.next_normal();
            th0[2] += 0.2 * rng.next_normal();
        }
        const std::array<double, 3> step{0.5 * start[1], 0.2, 0.1};
        const auto res = nelder_mead(nll3, th0, step, opt.max_iter, opt.ftol_rel, 1e-14);
        if (res.fval < best_f) {
            best_f = res.fval;
            best_th = res.x;
            any_converged = any_converged || res.converged;
        } else if (res.converged && std::fabs(res.fval - best_f) < 1e-6 * (1 + std::fabs(best_f))) {
            any_converged = true;
        }
    }
    if (best_f >= 1e300)
        throw NumericError("fit_gev: no feasible parameters found");
    if (!any_converged)
        throw NumericError("fit_gev: optimizer failed to converge; best nll=" + std::to_string(best_f) +
                           " at mu=" + std::to_string(best_th[0]) +
                           " sigma=" + std::to_string(std::exp(best_th[1])) +
                           " xi=" + std::to_string(best_th[2]));

    GevParams p;
    p.mu = best_th[0];
    p.sigma = std::exp(best_th[1]);
    p.xi = best_th[2];
    p.loglik = -best_f;
    p.n_blocks = static_cast<int>(x.size());
    p.tail = tail;
    p.se = detail::gev_standard_errors(p.mu, p.sigma, p.xi, x);
    if (tail == Tail::lower) p.mu = -p.mu;
    static const double z90 = 1.6448536269514722;
    const std::array<double, 3> est{p.mu, p.sigma, p.xi};
    for (int i = 0; i < 3; ++i) {
        const auto k = static_cast<std::size_t>(i);
        p.ci90[k] = {est[k] - z90 * p.se[k], est[k] + z90 * p.se[k]};
    }
    return p;
}

/// Finite endpoint implied by a Weibull-type fit: mu − sigma/xi for the upper
/// tail, mu + sigma/xi for the lower. Requires xi decisively negative.
inline double endpoint(const GevParams& g) {
    if (g.xi >= 0.0) throw std::invalid_argument("endpoint: unbounded tail (xi >= 0)");
    if (std::fabs(g.xi) < 1e-4)
        throw std::invalid_argument("endpoint: xi indistinguishable from 0 (Gumbel-ambiguous)");
    return g.tail == Tail::upper ? g.mu - g.sigma / g.xi : g.mu + g.sigma / g.xi;
}

// ---------------------------------------------------------------------------
// CDF / quantile
// ---------------------------------------------------------------------------

inline double gev_cdf(const GevParams& g, double x) {
    const double xi = g.xi;
    // Upper tail: distribution of block maxima. Lower: of block minima,
    // P(M <= x) = 1 − G(−x) of the negated maxima fit.
    const double h = g.tail == Tail::upper ? xi * (x - g.mu) / g.sigma : xi * (g.mu - x) / g.sigma;
    if (1.0 + h <= 0.0) {
        // Outside the support: beyond the finite endpoint (xi < 0) the cdf
        // saturates on the extreme side; below the lower bound (xi > 0) it
        // has not started.
        if (xi < 0.0) return g.tail == Tail::upper ? 1.0 : 0.0;
        return g.tail == Tail::upper ? 0.0 : 1.0;
    }
    double y;
    if (std::fabs(xi) > 1e-9) {
        y = std::log1p(h) / xi;
    } else {
        const double u = g.tail == Tail::upper ? (x - g.mu) / g.sigma : (g.mu - x) / g.sigma;
        y = u * (1.0 - 0.5 * xi * u);
    }
    const double core = std::exp(-std::exp(-y));
    return g.tail == Tail::upper ? core : 1.0 - core;
}

inline double gev_quantile(const GevParams& g, double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("gev_quantile: p outside (0,1)");
    const double xi = g.xi;
    const double w = g.tail == Tail::upper ? -std::log(p) : -std::log1p(-p);
    double dev; // sigma-scaled deviation from mu on the fitted (max) scale
    if (std::fabs(xi) > 1e-9) {
        dev = (std::pow(w, -xi) - 1.0) / xi;
    } else {
        dev = -std::log(w);
    }
    return g.tail == Tail::upper ? g.mu + g.sigma * dev : g.mu - g.sigma * dev;
}

// ---------------------------------------------------------------------------
// Tail form of the diffusion coefficient
// ---------------------------------------------------------------------------

enum class TailFactor {
    plug_in, // −1/xi
    lemma    // −1/xi − 1
};

/// Plug-in tail value a(x) ≈ −2·b(x)·(r − x)·factor near the boundary. The
/// same expression serves both tails: a restoring drift and the sign of
/// (r − x) cancel, so the result is non-negative whenever b points back into
/// the interior. A negative result therefore signals misconfiguration.
inline double tail_linear_form(const std::function<double(double)>& b, const GevParams& g, double x,
                               TailFactor variant = TailFactor::plug_in) {
    const double r = endpoint(g);
    if (g.tail == Tail::upper && x > r)
        throw std::invalid_argument("tail_linear_form: x beyond the upper endpoint");
    if (g.tail == Tail::lower && x < r)
        throw std::invalid_argument("tail_linear_form: x beyond the lower endpoint");
    const double factor = variant == TailFactor::plug_in ? -1.0 / g.xi : -1.0 / g.xi - 1.0;
    const double val = -2.0 * b(x) * (r - x) * factor;
    if (val < 0.0)
        throw std::invalid_argument("tail_linear_form: negative value — drift does not restore "
                                    "toward the interior at x");
    return val;
}

/// d/dx of the plug-in tail form for linear drift b(x) = alpha + beta·x:
/// −2·factor·[beta·(r − x) − (alpha + beta·x)].
inline double tail_linear_slope(double alpha, double beta, const GevParams& g, double x,
                                TailFactor variant = TailFactor::plug_in) {
    const double r = endpoint(g);
    const double factor = variant == TailFactor::plug_in ? -1.0 / g.xi : -1.0 / g.xi - 1.0;
    return -2.0 * factor * (beta * (r - x) - (alpha + beta * x));
}

} // namespace tdse
