#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tdse/npestim.hpp"
#include "tdse/optim.hpp"
#include "tdse/spline.hpp"

namespace tdse {

/// Natural cubic spline for the diffusion coefficient a(·): `coefficients`
/// are the (positive) values of a at the knots; the optimizer works on their
/// logs, and between-knot positivity is verified after the fit.
struct SplineFit {
    std::vector<double> knots;
    std::vector<double> coefficients;
    double lambda = 0.0;
    double objective = 0.0; // penalized log-likelihood at the optimum
    int n_pairs_used = 0;

    NaturalCubic spline() const { return NaturalCubic(knots, coefficients); }
    double eval(double z) const { return spline().eval(z); }
};

/// Knots at equally spaced quantiles of the conditioning state.
inline std::vector<double> quantile_knots(std::span<const double> prev, std::size_t n_knots = 12,
                                          double p_lo = 0.01, double p_hi = 0.99) {
    if (n_knots < 4) throw std::invalid_argument("quantile_knots: need at least 4 knots");
    std::vector<double> s(prev.begin(), prev.end());
    std::sort(s.begin(), s.end());
    std::vector<double> knots(n_knots);
    for (std::size_t j = 0; j < n_knots; ++j) {
        const double p = p_lo + (p_hi - p_lo) * static_cast<double>(j) / static_cast<double>(n_knots - 1);
        knots[j] = quantile_sorted(s, p);
    }
    for (std::size_t j = 0; j + 1 < n_knots; ++j)
        if (!(knots[j] < knots[j + 1]))
            throw std::invalid_argument("quantile_knots: duplicate knots (data too discrete)");
    return knots;
}

namespace detail {

struct SplineProblem {
    std::vector<double> prev, resid;       // pairs inside the knot range
    std::vector<double> basis_at_prev;     // n × K, row-major
    std::vector<double> basis_dd_at_grid;  // G × K second derivatives
    std::vector<double> simpson_w;         // quadrature weights on the grid
    std::size_t n = 0, K = 0, G = 0;
    double lambda = 0.0;

    /// Penalized negative log-likelihood and gradient in phi = log a(knots).
    double eval(std::span<const double> phi, std::span<double> grad) const {
        std::vector<double> ak(K);
        for (std::size_t j = 0; j < K; ++j) ak[j] = std::exp(phi[j]);
        std::fill(grad.begin(), grad.end(), 0.0);

        double f = 0.0;
        std::vector<double> dfda(K, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* B = &basis_at_prev[i * K];
            double a = 0.0;
            for (std::size_t j = 0; j < K; ++j) a += ak[j] * B[j];
            if (!(a > 1e-12)) return 1e300; // infeasible: spline dipped to 0 at a data point
            const double e = resid[i];
            const double inv = 1.0 / a;
            f += 0.5 * e * e * inv * inv + std::log(a);
            const double dfa = (-e * e * inv * inv + 1.0) * inv;
            for (std::size_t j = 0; j < K; ++j) dfda[j] += dfa * B[j];
        }
        if (lambda > 0.0) {
            for (std::size_t g = 0; g < G; ++g) {
                const double* Bdd = &basis_dd_at_grid[g * K];
                double add = 0.0;
                for (std::size_t j = 0; j < K; ++j) add += ak[j] * Bdd[j];
                f += 0.5 * lambda * simpson_w[g] * add * add;
                const double dfa = lambda * simpson_w[g] * add;
                for (std::size_t j = 0; j < K; ++j) dfda[j] += dfa * Bdd[j];
            }
        }
        for (std::size_t j = 0; j < K; ++j) grad[j] = dfda[j] * ak[j];
        return f;
    }
};

inline SplineProblem build_spline_problem(const TransitionPairs& pairs, const DriftParams& b,
                                          double lambda, const std::vector<double>& knots,
                                          std::size_t quad_points = 1001) {
    SplineProblem p;
    p.K = knots.size();
    p.lambda = lambda;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double z = pairs.prev[i];
        if (z < knots.front() || z > knots.back()) continue;
        p.prev.push_back(z);
        p.resid.push_back(pairs.incr[i] - b.eval(z));
    }
    p.n = p.prev.size();
    if (p.n < 10 * p.K)
        throw std::invalid_argument("penalized_spline_a: too few pairs inside the knot range (" +
                                    std::to_string(p.n) + ")");
    const auto basis = natural_cubic_basis(knots);
    p.basis_at_prev.resize(p.n * p.K);
    for (std::size_t i = 0; i < p.n; ++i)
        for (std::size_t j = 0; j < p.K; ++j)
            p.basis_at_prev[i * p.K + j] = basis[j].eval(p.prev[i]);

    p.G = quad_points % 2 == 1 ? quad_points : quad_points + 1;
    const double lo = knots.front(), hi = knots.back();
    const double h = (hi - lo) / static_cast<double>(p.G - 1);
    p.basis_dd_at_grid.resize(p.G * p.K);
    p.simpson_w.resize(p.G);
    for (std::size_t g = 0; g < p.G; ++g) {
        const double z = lo + h * static_cast<double>(g);
        for (std::size_t j = 0; j < p.K; ++j)
            p.basis_dd_at_grid[g * p.K + j] = basis[j].second_derivative(z);
        const bool end = g == 0 || g == p.G - 1;
        p.simpson_w[g] = h / 3.0 * (end ? 1.0 : (g % 2 == 1 ? 4.0 : 2.0));
    }
    return p;
}

/// Affine start: least squares through the kernel diffusion curve at the
/// knots, floored away from zero. An affine a has zero roughness penalty.
inline std::vector<double> affine_start(const TransitionPairs& pairs,
                                        const std::vector<double>& knots) {
    KernelConfig kc;
    std::vector<double> ahat(knots.size());
    double amax = 0.0;
    for (std::size_t j = 0; j < knots.size(); ++j) {
        const auto m = conditional_moments(pairs, knots[j], kc);
        ahat[j] = std::sqrt(std::max(m.variance, 0.0));
        amax = std::max(amax, ahat[j]);
    }
    if (!(amax > 0.0)) throw std::invalid_argument("penalized_spline_a: zero conditional variance everywhere");
    double s0 = 0, sx = 0, sxx = 0, sy = 0, sxy = 0;
    for (std::size_t j = 0; j < knots.size(); ++j) {
        s0 += 1;
        sx += knots[j];
        sxx += knots[j] * knots[j];
        sy += ahat[j];
        sxy += knots[j] * ahat[j];
    }
    const double det = s0 * sxx - sx * sx;
    double c1 = det != 0.0 ? (s0 * sxy - sx * sy) / det : 0.0;
    double c0 = (sy - c1 * sx) / s0;
    std::vector<double> start(knots.size());
    const double floor = 0.05 * amax;
    for (std::size_t j = 0; j < knots.size(); ++j)
        start[j] = std::log(std::max(c0 + c1 * knots[j], floor));
    return start;
}

} // namespace detail

/// Maximize the roughness-penalized transition likelihood over natural-cubic
/// splines for a(·), with the drift held fixed. The sum runs over pairs whose
/// state lies inside the knot range; positivity between knots is verified on
/// a fine grid at the optimum.
inline SplineFit penalized_spline_a(const TransitionPairs& pairs, const DriftParams& b_hat,
                                    double lambda, const std::vector<double>& knots) {
    if (lambda < 0.0) throw std::invalid_argument("penalized_spline_a: lambda must be >= 0");
    if (knots.size() < 4) throw std::invalid_argument("penalized_spline_a: need at least 4 knots");
    const auto problem = detail::build_spline_problem(pairs, b_hat, lambda, knots);
    const auto start = detail::affine_start(pairs, knots);

    auto fg = [&](std::span<const double> phi, std::span<double> grad) {
        return problem.eval(phi, grad);
    };
    const double gtol = 1e-7 * std::max<double>(1.0, static_cast<double>(problem.n));
    const auto res = bfgs_minimize(fg, start, 400, gtol, 1e-13);
    if (res.fval >= 1e300)
        throw NumericError("penalized_spline_a: optimizer could not find a feasible spline");

    SplineFit fit;
    fit.knots = knots;
    fit.coefficients.resize(knots.size());
    for (std::size_t j = 0; j < knots.size(); ++j) fit.coefficients[j] = std::exp(res.x[j]);
    fit.lambda = lambda;
    fit.objective = -res.fval;
    fit.n_pairs_used = static_cast<int>(problem.n);

    const auto s = fit.spline();
    for (int i = 0; i <= 200; ++i) {
        const double z = knots.front() + (knots.back() - knots.front()) * i / 200.0;
        if (!(s.eval(z) > 0.0))
            throw NumericError("penalized_spline_a: fitted spline not positive at z=" +
                               std::to_string(z));
    }
    return fit;
}

/// Penalized objective of an arbitrary knot-value vector, for monotonicity
/// checks against the optimizer's result.
inline double penalized_objective(const TransitionPairs& pairs, const DriftParams& b_hat,
                                  double lambda, const std::vector<double>& knots,
                                  const std::vector<double>& a_at_knots) {
    const auto problem = detail::build_spline_problem(pairs, b_hat, lambda, knots);
    std::vector<double> phi(a_at_knots.size()), grad(a_at_knots.size());
    for (std::size_t j = 0; j < phi.size(); ++j) {
        if (!(a_at_knots[j] > 0.0)) throw std::invalid_argument("penalized_objective: a must be positive");
        phi[j] = std::log(a_at_knots[j]);
    }
    const double f = problem.eval(phi, grad);
    return -f;
}

/// Data-driven lambda: maximize the unpenalized likelihood of a held-out
/// final block of transitions over a log-spaced grid. The hold-out is a
/// contiguous tail so serial dependence cannot leak across the split.
inline double choose_lambda(const TransitionPairs& pairs, const DriftParams& b_hat,
                            const std::vector<double>& knots) {
    const std::size_t n = pairs.size();
    const std::size_t n_train = n - n / 5;
    TransitionPairs train, test;
    train.prev.assign(pairs.prev.begin(), pairs.prev.begin() + static_cast<std::ptrdiff_t>(n_train));
    train.incr.assign(pairs.incr.begin(), pairs.incr.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.prev.assign(pairs.prev.begin() + static_cast<std::ptrdiff_t>(n_train), pairs.prev.end());
    test.incr.assign(pairs.incr.begin() + static_cast<std::ptrdiff_t>(n_train), pairs.incr.end());

    double best_lambda = static_cast<double>(n);
    double best_score = -std::numeric_limits<double>::infinity();
    for (const double c : {1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0}) {
        const double lambda = c * static_cast<double>(n_train);
        SplineFit fit;
        try {
            fit = penalized_spline_a(train, b_hat, lambda, knots);
        } catch (const std::exception&) {
            continue;
        }
        const auto s = fit.spline();
        double score = 0.0;
        bool ok = true;
        for (std::size_t i = 0; i < test.size() && ok; ++i) {
            const double z = std::clamp(test.prev[i], knots.front(), knots.back());
            const double a = s.eval(z);
            if (!(a > 0.0)) {
                ok = false;
                break;
            }
            const double e = test.incr[i] - b_hat.eval(test.prev[i]);
            score += -0.5 * (e / a) * (e / a) - std::log(a);
        }
        if (ok && score > best_score) {
            best_score = score;
            best_lambda = lambda;
        }
    }
    return best_lambda;
}

struct AlternateResult {
    SplineFit a_fit;
    DriftParams drift;
    int n_changes = 0; // iterations whose update exceeded the tolerance
    std::vector<double> deltas;
};

/// Weighted least squares for the linear drift with weights 1/a², restricted
/// to states where the spline is defined.
inline DriftParams weighted_drift_ls(const TransitionPairs& pairs, const SplineFit& a_fit) {
    const auto s = a_fit.spline();
    double s0 = 0, sx = 0, sxx = 0, sy = 0, sxy = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double z = pairs.prev[i];
        if (z < a_fit.knots.front() || z > a_fit.knots.back()) continue;
        const double a = s.eval(z);
        if (!(a > 0.0)) continue;
        const double w = 1.0 / (a * a);
        ++n;
        s0 += w;
        sx += w * z;
        sxx += w * z * z;
        sy += w * pairs.incr[i];
        sxy += w * z * pairs.incr[i];
    }
    if (n < 3) throw std::invalid_argument("weighted_drift_ls: too few usable pairs");
    const double det = s0 * sxx - sx * sx;
    if (!(std::fabs(det) > 1e-12 * (s0 * sxx + 1e-300)))
        throw NumericError("weighted_drift_ls: singular design");
    DriftParams d;
    d.beta = (s0 * sxy - sx * sy) / det;
    d.alpha = (sy - d.beta * sx) / s0;
    d.se[1] = std::sqrt(s0 / det);
    d.se[0] = std::sqrt(sxx / det);
    return d;
}

/// Alternate (i) spline fit of a given the drift and (ii) weighted least
/// squares for the drift given a, until both stop moving.
inline AlternateResult alternate_refit(const TransitionPairs& pairs, const DriftParams& init_b,
                                       double lambda, const std::vector<double>& knots,
                                       int max_iters = 20, double tol = 1e-5) {
    AlternateResult out;
    out.drift = init_b;
    const auto grid = equispaced_grid(knots.front(), knots.back(), 201);
    std::vector<double> a_prev(grid.size(), std::numeric_limits<double>::quiet_NaN());
    DriftParams b_prev = init_b;
    for (int it = 0; it < max_iters; ++it) {
        out.a_fit = penalized_spline_a(pairs, out.drift, lambda, knots);
        out.drift = weighted_drift_ls(pairs, out.a_fit);
        const auto s = out.a_fit.spline();
        double delta = std::max(std::fabs(out.drift.alpha - b_prev.alpha),
                                std::fabs(out.drift.beta - b_prev.beta));
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const double a = s.eval(grid[g]);
            if (std::isfinite(a_prev[g])) delta = std::max(delta, std::fabs(a - a_prev[g]));
            a_prev[g] = a;
        }
        out.deltas.push_back(delta);
        if (delta < tol) return out;
        ++out.n_changes;
        b_prev = out.drift;
    }
    std::string trace;
    for (double d : out.deltas) trace += " " + std::to_string(d);
    throw NumericError("alternate_refit: no convergence after " + std::to_string(max_iters) +
                       " iterations; deltas:" + trace);
}

} // namespace tdse
