#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "tdse/config.hpp"
#include "tdse/diagnostics.hpp"
#include "tdse/gev.hpp"
#include "tdse/mle.hpp"
#include "tdse/npestim.hpp"
#include "tdse/penspline.hpp"
#include "tdse/serialize.hpp"
#include "tdse/trend.hpp"

namespace tdse {

inline constexpr int kMinPipelinePairs = 100;
inline constexpr int kMinDriftPairs = 50;

struct FitDiagnostics {
    CurveEstimate drift_curve; // smoothed drift overlay
    KernelCurves kernel_curves;
    DriftParams np_drift; // drift refined jointly with the spline
    SplineFit np_spline;
    double lambda = 0.0;
    int np_refit_changes = 0;
    ResidualSeries residuals;
    WhitenessReport whiteness; // n == 0 when the battery could not run
    std::vector<std::string> notes;
};

struct FitResult {
    FittedModel fitted;
    NormalizedSeries norm;
    TransitionPairs pairs;
    JointFit mle;
    FitDiagnostics diag;
};

namespace detail {

template <class F>
auto run_stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const NumericError& e) {
        throw NumericError(std::string(name) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string(name) + ": " + e.what());
    }
}

} // namespace detail

/// The full estimation pipeline: season extraction, trend removal per the
/// configured variant, GEV boundary fits, the nonparametric first pass, the
/// joint MLE, tail grafting, assembly, and the residual battery.
inline FitResult fit_pipeline(const DailySeries& input, const RunConfig& cfg,
                              const std::string& data_hash = "") {
    FitResult out;

    const DailySeries series = detail::run_stage("season", [&] {
        return cfg.season.empty() ? input : extract_season(input, SeasonSpec::parse(cfg.season));
    });

    detail::run_stage("trend", [&] {
        SmootherConfig tcfg;
        tcfg.span_days = cfg.span_days;
        tcfg.robust_iters = cfg.robust_iters;
        switch (cfg.sim.variant) {
            case ModelVariant::model1:
                out.norm = normalize(series, nullptr, nullptr);
                break;
            case ModelVariant::model2: {
                const TrendCurve m = estimate_mean_trend(series, tcfg);
                out.norm = normalize(series, &m, nullptr);
                out.fitted.mean_trend = m;
                break;
            }
            case ModelVariant::model3: {
                const TrendCurve m = estimate_mean_trend(series, tcfg);
                const TrendCurve s = estimate_scale_trend(series, m, tcfg);
                out.norm = normalize(series, &m, &s);
                out.fitted.mean_trend = m;
                out.fitted.scale_trend = s;
                break;
            }
        }
        return 0;
    });

    out.pairs = detail::run_stage("pairs", [&] { return make_pairs(out.norm, kMinPipelinePairs); });

    GevFitOptions gopt;
    gopt.min_blocks = cfg.min_blocks;
    detail::run_stage("extremes", [&] {
        if (cfg.equip_lower) {
            const auto ext = block_extremes(out.norm, ExtremeDirection::min, cfg.min_blocks);
            out.fitted.gev_lower = fit_gev(ext.values, Tail::lower, gopt);
        }
        if (cfg.equip_upper) {
            const auto ext = block_extremes(out.norm, ExtremeDirection::max, cfg.min_blocks);
            out.fitted.gev_upper = fit_gev(ext.values, Tail::upper, gopt);
        }
        return 0;
    });

    const double central_lo = quantile(out.pairs.prev, cfg.central_p_lo);
    const double central_hi = quantile(out.pairs.prev, cfg.central_p_hi);

    detail::run_stage("nonparametric", [&] {
        SmootherConfig dcfg;
        dcfg.span_days = std::max<int>(51, static_cast<int>(out.pairs.size() / 5));
        out.diag.drift_curve = drift_loess(out.pairs, dcfg);
        KernelConfig kc{cfg.kernel, cfg.bandwidth};
        out.diag.kernel_curves = kernel_moment_curves(out.pairs, kc);
        const DriftParams b0 = drift_linear_ls(out.pairs, central_lo, central_hi, kMinDriftPairs);
        const auto knots = quantile_knots(out.pairs.prev, static_cast<std::size_t>(cfg.n_knots),
                                          cfg.central_p_lo, cfg.central_p_hi);
        out.diag.lambda = cfg.lambda_policy == "auto" ? choose_lambda(out.pairs, b0, knots)
                                                      : cfg.lambda_value;
        const auto alt = alternate_refit(out.pairs, b0, out.diag.lambda, knots);
        out.diag.np_spline = alt.a_fit;
        out.diag.np_drift = alt.drift;
        out.diag.np_refit_changes = alt.n_changes;
        return 0;
    });

    out.mle = detail::run_stage("mle", [&] {
        JointMleOptions mopt;
        mopt.degree_a = cfg.degree_a;
        mopt.domain = std::make_pair(central_lo, central_hi);
        return fit_joint_mle(out.pairs, mopt);
    });

    detail::run_stage("tails", [&] {
        const auto& central = out.mle.central;
        const double z_min = *std::min_element(out.norm.z.begin(), out.norm.z.end());
        const double z_max = *std::max_element(out.norm.z.begin(), out.norm.z.end());
        std::optional<TailQuadratic> lower, upper;
        BoundaryInfo bounds;

        if (out.fitted.gev_lower) {
            const auto& g = *out.fitted.gev_lower;
            if (g.xi < -1e-4) {
                const double r = endpoint(g);
                if (r < z_min && r < central.lo) {
                    const double q = central.lo;
                    const double d = tail_linear_slope(out.mle.drift.alpha, out.mle.drift.beta, g,
                                                       q, cfg.tail_factor);
                    lower = build_tail_quadratic(r, q, central.eval(q), d, TailSide::lower);
                    bounds.r_lower = r;
                    bounds.xi_lower = g.xi;
                } else {
                    out.diag.notes.push_back(
                        "lower tail not grafted: estimated endpoint lies inside the sample range");
                }
            } else {
                out.diag.notes.push_back(
                    "lower tail not grafted: fitted xi does not certify a finite endpoint");
            }
        }
        if (out.fitted.gev_upper) {
            const auto& g = *out.fitted.gev_upper;
            bounds.xi_upper = g.xi;
            if (cfg.upper_tail_policy == UpperTailPolicy::use_central) {
                out.diag.notes.push_back("upper tail: central polynomial used by policy");
            } else if (g.xi < -1e-4) {
                const double r = endpoint(g);
                if (r > z_max && r > central.hi) {
                    const double q = central.hi;
                    const double d = tail_linear_slope(out.mle.drift.alpha, out.mle.drift.beta, g,
                                                       q, cfg.tail_factor);
                    upper = build_tail_quadratic(r, q, central.eval(q), d, TailSide::upper);
                    bounds.r_upper = r;
                } else {
                    out.diag.notes.push_back(
                        "upper tail not grafted: estimated endpoint lies inside the sample range");
                }
            } else {
                out.diag.notes.push_back(
                    "upper tail not grafted: fitted xi does not certify a finite endpoint");
            }
        }
        out.fitted.model = assemble(out.mle.drift, central, lower, upper, bounds);
        return 0;
    });

    detail::run_stage("residuals", [&] {
        try {
            out.diag.residuals = residuals(out.pairs, out.fitted.model);
            out.diag.whiteness = whiteness_tests(out.diag.residuals);
        } catch (const std::exception& e) {
            out.diag.notes.push_back(std::string("residual battery unavailable: ") + e.what());
        }
        return 0;
    });

    out.fitted.block_lengths = out.norm.base.block_lengths();
    out.fitted.season_text = cfg.season.empty() ? SeasonSpec::whole_year().text : cfg.season;
    out.fitted.start_date = date_to_string(out.norm.base.dates.front());
    out.fitted.data_hash = data_hash;
    out.fitted.n_records = out.norm.base.size();
    json echo = json::object();
    for (const auto& [key, value] : cfg.raw) echo[key] = value;
    out.fitted.config_echo = std::move(echo);
    return out;
}

/// Ensemble generation from a persisted fit, enforcing variant/trend
/// consistency.
inline Ensemble simulate_from_model(const FittedModel& fm, const SimConfig& sim) {
    const TrendCurve* m = nullptr;
    const TrendCurve* s = nullptr;
    if (sim.variant == ModelVariant::model2 || sim.variant == ModelVariant::model3) {
        if (!fm.mean_trend)
            throw std::invalid_argument("simulate: model file lacks the mean trend required by " +
                                        std::string(to_string(sim.variant)));
        m = &*fm.mean_trend;
    }
    if (sim.variant == ModelVariant::model3) {
        if (!fm.scale_trend)
            throw std::invalid_argument("simulate: model file lacks the scale trend required by " +
                                        std::string(to_string(sim.variant)));
        s = &*fm.scale_trend;
    }
    return simulate_ensemble(fm.model, m, s, fm.block_lengths, sim);
}

} // namespace tdse
