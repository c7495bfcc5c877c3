#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "tdse/model.hpp"
#include "tdse/npestim.hpp"
#include "tdse/optim.hpp"

namespace tdse {

struct JointFit {
    DriftParams drift;
    CentralPoly central;
    double loglik = 0.0;
    int n_used = 0;
    bool se_valid = false;
};

struct JointMleOptions {
    int degree_a = 4;
    double p_lo = 0.01; // central domain quantiles of the conditioning state
    double p_hi = 0.99;
    std::optional<std::pair<double, double>> domain; // overrides the quantiles
    int rounds = 3;
    int nm_max_iter = 4000;
    double nm_ftol = 1e-12;
};

namespace detail {

/// Polynomial value on the conditioned argument, plus the positivity barrier
/// grid test used during the search.
inline double poly_eval(std::span<const double> c, double u) {
    double acc = 0.0;
    for (std::size_t k = c.size(); k-- > 0;) acc = acc * u + c[k];
    return acc;
}

inline bool poly_positive_on_grid(std::span<const double> c) {
    for (int i = 0; i <= 200; ++i) {
        const double u = -1.0 + 2.0 * i / 200.0;
        if (!(poly_eval(c, u) > 0.0)) return false;
    }
    return true;
}

struct MleData {
    std::vector<double> prev, incr, u;
    double mid = 0.0, halfwidth = 1.0;
};

inline double joint_nll(const MleData& d, double alpha, double beta, std::span<const double> c) {
    if (!poly_positive_on_grid(c)) return 1e300;
    double nll = 0.0;
    for (std::size_t i = 0; i < d.prev.size(); ++i) {
        const double p = poly_eval(c, d.u[i]);
        const double e = d.incr[i] - alpha - beta * d.prev[i];
        nll += 0.5 * (e / p) * (e / p) + std::log(p);
    }
    return std::isfinite(nll) ? nll : 1e300;
}

/// Closed-form weighted least squares for the drift given the current p.
inline std::pair<double, double> drift_wls(const MleData& d, std::span<const double> c) {
    double s0 = 0, sx = 0, sxx = 0, sy = 0, sxy = 0;
    for (std::size_t i = 0; i < d.prev.size(); ++i) {
        const double p = poly_eval(c, d.u[i]);
        const double w = 1.0 / (p * p);
        s0 += w;
        sx += w * d.prev[i];
        sxx += w * d.prev[i] * d.prev[i];
        sy += w * d.incr[i];
        sxy += w * d.prev[i] * d.incr[i];
    }
    const double det = s0 * sxx - sx * sx;
    if (!(std::fabs(det) > 1e-12 * (s0 * sxx + 1e-300)))
        throw NumericError("fit_joint_mle: singular drift design");
    const double beta = (s0 * sxy - sx * sy) / det;
    return {(sy - beta * sx) / s0, beta};
}

/// Least-squares degree-k polynomial fit in u to the kernel diffusion curve,
/// used as the starting point for p.
inline std::vector<double> poly_init_from_kernel(const TransitionPairs& pairs, double lo, double hi,
                                                 double mid, double halfwidth, int degree) {
    KernelConfig kc;
    const int n_grid = 41;
    std::vector<double> us, as;
    for (int g = 0; g < n_grid; ++g) {
        const double z = lo + (hi - lo) * g / (n_grid - 1.0);
        try {
            const auto m = conditional_moments(pairs, z, kc);
            if (m.n_local >= 5 && m.variance > 0.0) {
                us.push_back((z - mid) / halfwidth);
                as.push_back(std::sqrt(m.variance));
            }
        } catch (const std::invalid_argument&) {
            // sparse spot; skip
        }
    }
    const int ncoef = degree + 1;
    std::vector<double> c(static_cast<std::size_t>(ncoef), 0.0);
    if (static_cast<int>(us.size()) >= 2 * ncoef) {
        Eigen::MatrixXd X(us.size(), ncoef);
        Eigen::VectorXd y(us.size());
        for (std::size_t i = 0; i < us.size(); ++i) {
            double pw = 1.0;
            for (int k = 0; k < ncoef; ++k) {
                X(static_cast<Eigen::Index>(i), k) = pw;
                pw *= us[i];
            }
            y(static_cast<Eigen::Index>(i)) = as[i];
        }
        Eigen::VectorXd sol = X.colPivHouseholderQr().solve(y);
        for (int k = 0; k < ncoef; ++k) c[static_cast<std::size_t>(k)] = sol(k);
    }
    return c;
}

} // namespace detail

/// Joint maximum likelihood for the linear drift and the degree-4 polynomial
/// diffusion coefficient over the central domain. The polynomial argument is
/// centered and scaled to [−1, 1] for conditioning; positivity is enforced on
/// a 201-point grid during the search. Standard errors come from the
/// numerically differentiated observed information.
inline JointFit fit_joint_mle(const TransitionPairs& pairs, const JointMleOptions& opt = {}) {
    if (opt.degree_a < 0 || opt.degree_a > 4)
        throw std::invalid_argument("fit_joint_mle: degree_a must be in [0, 4]");
    if (pairs.size() < 20) throw std::invalid_argument("fit_joint_mle: too few pairs");

    double lo, hi;
    if (opt.domain) {
        lo = opt.domain->first;
        hi = opt.domain->second;
    } else {
        lo = quantile(pairs.prev, opt.p_lo);
        hi = quantile(pairs.prev, opt.p_hi);
    }
    if (!(hi > lo)) throw std::invalid_argument("fit_joint_mle: empty central domain");

    detail::MleData d;
    d.mid = 0.5 * (lo + hi);
    d.halfwidth = 0.5 * (hi - lo);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double z = pairs.prev[i];
        if (z < lo || z > hi) continue;
        d.prev.push_back(z);
        d.incr.push_back(pairs.incr[i]);
        d.u.push_back((z - d.mid) / d.halfwidth);
    }
    const std::size_t n = d.prev.size();
    if (n < 20) throw std::invalid_argument("fit_joint_mle: too few pairs in the central domain");

    // Initialization: OLS drift, kernel-curve polynomial for p.
    TransitionPairs central_pairs;
    central_pairs.prev = d.prev;
    central_pairs.incr = d.incr;
    DriftParams d0 = drift_linear_ls(central_pairs, lo, hi);
    const int ncoef = opt.degree_a + 1;
    std::vector<double> c = detail::poly_init_from_kernel(pairs, lo, hi, d.mid, d.halfwidth,
                                                          opt.degree_a);
    double resid_ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = d.incr[i] - d0.alpha - d0.beta * d.prev[i];
        resid_ss += e * e;
    }
    const double a_scale = std::sqrt(resid_ss / static_cast<double>(n));
    if (!detail::poly_positive_on_grid(c)) {
        std::fill(c.begin(), c.end(), 0.0);
        c[0] = a_scale;
    }

    double alpha = d0.alpha, beta = d0.beta;
    double best = detail::joint_nll(d, alpha, beta, c);
    if (best >= 1e300) {
        std::fill(c.begin(), c.end(), 0.0);
        c[0] = a_scale;
        best = detail::joint_nll(d, alpha, beta, c);
    }
    if (best >= 1e300) throw NumericError("fit_joint_mle: no feasible starting point");

    // Alternate closed-form drift updates with simplex polishing of p, then a
    // joint simplex pass over all parameters.
    std::vector<double> step_c(static_cast<std::size_t>(ncoef));
    for (int r = 0; r < opt.rounds; ++r) {
        const auto [na, nb] = detail::drift_wls(d, c);
        if (detail::joint_nll(d, na, nb, c) <= best) {
            alpha = na;
            beta = nb;
            best = detail::joint_nll(d, alpha, beta, c);
        }
        for (int k = 0; k < ncoef; ++k)
            step_c[static_cast<std::size_t>(k)] =
                0.1 * std::max(std::fabs(c[static_cast<std::size_t>(k)]), 0.05 * a_scale);
        auto nll_c = [&](std::span<const double> cc) { return detail::joint_nll(d, alpha, beta, cc); };
        const auto rc = nelder_mead(nll_c, c, step_c, opt.nm_max_iter, opt.nm_ftol, 1e-14);
        if (rc.fval <= best) {
            c = rc.x;
            best = rc.fval;
        }
    }
    {
        std::vector<double> th(2 + static_cast<std::size_t>(ncoef));
        th[0] = alpha;
        th[1] = beta;
        for (int k = 0; k < ncoef; ++k) th[static_cast<std::size_t>(2 + k)] = c[static_cast<std::size_t>(k)];
        std::vector<double> step(th.size());
        step[0] = 0.1 * a_scale;
        step[1] = 0.05;
        for (int k = 0; k < ncoef; ++k)
            step[static_cast<std::size_t>(2 + k)] =
                0.1 * std::max(std::fabs(c[static_cast<std::size_t>(k)]), 0.05 * a_scale);
        auto nll_all = [&](std::span<const double> t) {
            return detail::joint_nll(d, t[0], t[1], t.subspan(2));
        };
        const auto rj = nelder_mead(nll_all, th, step, opt.nm_max_iter, opt.nm_ftol, 1e-14);
        if (rj.fval <= best) {
            best = rj.fval;
            alpha = rj.x[0];
            beta = rj.x[1];
            for (int k = 0; k < ncoef; ++k) c[static_cast<std::size_t>(k)] = rj.x[static_cast<std::size_t>(2 + k)];
        }
    }
    if (best >= 1e300) throw NumericError("fit_joint_mle: optimization failed");

    JointFit fit;
    fit.drift.alpha = alpha;
    fit.drift.beta = beta;
    fit.central = CentralPoly::from_domain(lo, hi);
    for (int k = 0; k < ncoef; ++k) fit.central.coeffs[static_cast<std::size_t>(k)] = c[static_cast<std::size_t>(k)];
    fit.loglik = -best;
    fit.n_used = static_cast<int>(n);

    // Observed information: central-difference Hessian over all parameters.
    const int dim = 2 + ncoef;
    std::vector<double> th(static_cast<std::size_t>(dim));
    th[0] = alpha;
    th[1] = beta;
    for (int k = 0; k < ncoef; ++k) th[static_cast<std::size_t>(2 + k)] = c[static_cast<std::size_t>(k)];
    auto nll_at = [&](const std::vector<double>& t) {
        return detail::joint_nll(d, t[0], t[1], std::span<const double>(t).subspan(2));
    };
    Eigen::MatrixXd H(dim, dim);
    bool hess_ok = true;
    std::vector<double> hstep(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) hstep[static_cast<std::size_t>(i)] = 1e-4 * (1.0 + std::fabs(th[static_cast<std::size_t>(i)]));
    const double f0 = nll_at(th);
    for (int i = 0; i < dim && hess_ok; ++i) {
        for (int j = i; j < dim && hess_ok; ++j) {
            auto shifted = [&](int si, int sj) {
                auto t = th;
                t[static_cast<std::size_t>(i)] += si * hstep[static_cast<std::size_t>(i)];
                t[static_cast<std::size_t>(j)] += sj * hstep[static_cast<std::size_t>(j)];
                return nll_at(t);
            };
            double v;
            if (i == j) {
                v = (shifted(1, 0) - 2.0 * f0 + shifted(-1, 0)) /
                    (hstep[static_cast<std::size_t>(i)] * hstep[static_cast<std::size_t>(i)]);
            } else {
                v = (shifted(1, 1) - shifted(1, -1) - shifted(-1, 1) + shifted(-1, -1)) /
                    (4.0 * hstep[static_cast<std::size_t>(i)] * hstep[static_cast<std::size_t>(j)]);
            }
            if (!std::isfinite(v) || std::fabs(v) >= 1e299) hess_ok = false;
            H(i, j) = H(j, i) = v;
        }
    }
    if (hess_ok) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
        if (lu.isInvertible()) {
            const Eigen::MatrixXd cov = lu.inverse();
            fit.se_valid = true;
            auto se_of = [&](int i) {
                const double v = cov(i, i);
                return v > 0.0 ? std::sqrt(v) : std::numeric_limits<double>::quiet_NaN();
            };
            fit.drift.se = {se_of(0), se_of(1)};
            for (int k = 0; k < ncoef; ++k) fit.central.se[static_cast<std::size_t>(k)] = se_of(2 + k);
        }
    }
    return fit;
}

} // namespace tdse
