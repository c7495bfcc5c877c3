#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "tdse/common.hpp"

namespace tdse {

struct NelderMeadResult {
    std::vector<double> x;
    double fval = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Nelder-Mead downhill simplex. `step` gives the initial displacement per
/// coordinate; convergence when the simplex f-spread falls below
/// ftol_abs + ftol_rel * |f_best|. Returns the best point seen.
inline NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                                    std::span<const double> x0, std::span<const double> step,
                                    int max_iter = 2000, double ftol_rel = 1e-12,
                                    double ftol_abs = 1e-14) {
    const std::size_t n = x0.size();
    if (n == 0) throw std::invalid_argument("nelder_mead: empty start point");
    if (step.size() != n) throw std::invalid_argument("nelder_mead: step size mismatch");

    std::vector<std::vector<double>> pts(n + 1, std::vector<double>(x0.begin(), x0.end()));
    std::vector<double> fv(n + 1);
    for (std::size_t i = 0; i < n; ++i) {
        double s = step[i];
        if (s == 0.0) s = 1e-4;
        pts[i + 1][i] += s;
    }
    for (std::size_t i = 0; i <= n; ++i) fv[i] = f(pts[i]);

    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n), xr(n), xe(n), xc(n);
    int iter = 0;
    bool converged = false;

    for (; iter < max_iter; ++iter) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = order[0], worst = order[n], second = order[n - 1];

        if (std::fabs(fv[worst] - fv[best]) <= ftol_abs + ftol_rel * std::fabs(fv[best])) {
            converged = true;
            break;
        }

        for (std::size_t j = 0; j < n; ++j) {
            double c = 0.0;
            for (std::size_t i = 0; i <= n; ++i)
                if (i != worst) c += pts[i][j];
            centroid[j] = c / static_cast<double>(n);
        }

        for (std::size_t j = 0; j < n; ++j) xr[j] = centroid[j] + (centroid[j] - pts[worst][j]);
        const double fr = f(xr);

        if (fr < fv[best]) {
            for (std::size_t j = 0; j < n; ++j) xe[j] = centroid[j] + 2.0 * (centroid[j] - pts[worst][j]);
            const double fe = f(xe);
            if (fe < fr) {
                pts[worst] = xe;
                fv[worst] = fe;
            } else {
                pts[worst] = xr;
                fv[worst] = fr;
            }
        } else if (fr < fv[second]) {
            pts[worst] = xr;
            fv[worst] = fr;
        } else {
            const bool outside = fr < fv[worst];
            if (outside) {
                for (std::size_t j = 0; j < n; ++j) xc[j] = centroid[j] + 0.5 * (xr[j] - centroid[j]);
            } else {
                for (std::size_t j = 0; j < n; ++j) xc[j] = centroid[j] + 0.5 * (pts[worst][j] - centroid[j]);
            }
            const double fc = f(xc);
            if (fc < std::min(fr, fv[worst])) {
                pts[worst] = xc;
                fv[worst] = fc;
            } else {
                // shrink toward the best vertex
                for (std::size_t i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (std::size_t j = 0; j < n; ++j)
                        pts[i][j] = pts[best][j] + 0.5 * (pts[i][j] - pts[best][j]);
                    fv[i] = f(pts[i]);
                }
            }
        }
    }

    std::size_t ib = 0;
    for (std::size_t i = 1; i <= n; ++i)
        if (fv[i] < fv[ib]) ib = i;
    return {pts[ib], fv[ib], iter, converged};
}

struct BfgsResult {
    std::vector<double> x;
    double fval = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// BFGS with Armijo backtracking line search. `fg` must return f and fill the
/// gradient. Convergence on ||g||_inf < gtol or step-relative f decrease below
/// ftol_rel. The inverse Hessian approximation starts at identity and is
/// reset whenever the curvature condition fails.
inline BfgsResult bfgs_minimize(
    const std::function<double(std::span<const double>, std::span<double>)>& fg,
    std::span<const double> x0, int max_iter = 500, double gtol = 1e-8, double ftol_rel = 1e-14) {
    const std::size_t n = x0.size();
    if (n == 0) throw std::invalid_argument("bfgs_minimize: empty start point");

    std::vector<double> x(x0.begin(), x0.end()), g(n), xn(n), gn(n), p(n), s(n), y(n);
    std::vector<double> H(n * n, 0.0); // inverse Hessian approximation, row-major
    for (std::size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;

    double fx = fg(x, g);
    if (!std::isfinite(fx)) throw NumericError("bfgs_minimize: objective not finite at start");

    auto inf_norm = [](std::span<const double> v) {
        double m = 0.0;
        for (double e : v) m = std::max(m, std::fabs(e));
        return m;
    };

    int iter = 0;
    bool converged = inf_norm(g) < gtol;
    for (; iter < max_iter && !converged; ++iter) {
        // p = -H g
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += H[i * n + j] * g[j];
            p[i] = -acc;
        }
        double slope = 0.0;
        for (std::size_t i = 0; i < n; ++i) slope += p[i] * g[i];
        if (!(slope < 0.0)) {
            // Not a descent direction; restart from steepest descent.
            std::fill(H.begin(), H.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;
            for (std::size_t i = 0; i < n; ++i) p[i] = -g[i];
            slope = 0.0;
            for (std::size_t i = 0; i < n; ++i) slope += p[i] * g[i];
            if (!(slope < 0.0)) break; // gradient is zero
        }

        double alpha = 1.0;
        double fn = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < n; ++i) xn[i] = x[i] + alpha * p[i];
            fn = fg(xn, gn);
            if (std::isfinite(fn) && fn <= fx + 1e-4 * alpha * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break; // line search stalled; best point so far stands

        for (std::size_t i = 0; i < n; ++i) {
            s[i] = xn[i] - x[i];
            y[i] = gn[i] - g[i];
        }
        double sy = 0.0;
        for (std::size_t i = 0; i < n; ++i) sy += s[i] * y[i];

        const double f_drop = fx - fn;
        x = xn;
        fx = fn;
        g = gn;

        if (inf_norm(g) < gtol || f_drop <= ftol_rel * (std::fabs(fx) + 1e-300)) {
            converged = inf_norm(g) < gtol || f_drop >= 0.0;
            break;
        }

        if (sy > 1e-12) {
            // BFGS inverse update: H <- (I - s y^T/sy) H (I - y s^T/sy) + s s^T/sy
            std::vector<double> Hy(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += H[i * n + j] * y[j];
                Hy[i] = acc;
            }
            double yHy = 0.0;
            for (std::size_t i = 0; i < n; ++i) yHy += y[i] * Hy[i];
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    H[i * n + j] += ((sy + yHy) * s[i] * s[j]) / (sy * sy) -
                                    (Hy[i] * s[j] + s[i] * Hy[j]) / sy;
        } else {
            std::fill(H.begin(), H.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;
        }
    }

    double gn_final = inf_norm(g);
    return {x, fx, gn_final, iter, converged || gn_final < gtol};
}

} // namespace tdse
