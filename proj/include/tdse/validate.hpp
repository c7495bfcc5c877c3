#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tdse/gev.hpp"
#include "tdse/series.hpp"
#include "tdse/simulate.hpp"
#include "tdse/stats.hpp"

namespace tdse {

inline const std::vector<double>& default_prob_ladder() {
    static const std::vector<double> probs{0.01, 0.02, 0.03, 0.05, 0.10, 0.30, 0.50,
                                           0.70, 0.80, 0.90, 0.95, 0.97, 0.98, 0.99};
    return probs;
}

inline std::vector<double> empirical_quantiles(std::span<const double> values,
                                               std::span<const double> probs) {
    if (values.empty()) throw std::invalid_argument("empirical_quantiles: empty sample");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!(probs[i] > 0.0 && probs[i] < 1.0))
            throw std::invalid_argument("empirical_quantiles: probs must lie in (0,1)");
        out[i] = quantile_sorted(sorted, probs[i]);
    }
    return out;
}

struct QuantileTable {
    std::vector<double> probs;
    std::vector<double> observed;
    std::vector<double> simulated; // mean over per-path quantiles
    std::vector<double> spread;    // sd over per-path quantiles
};

inline QuantileTable quantile_report(std::span<const double> observed, const Ensemble& ensemble,
                                     std::span<const double> probs) {
    if (ensemble.n_paths() == 0) throw std::invalid_argument("quantile_report: empty ensemble");
    QuantileTable table;
    table.probs.assign(probs.begin(), probs.end());
    table.observed = empirical_quantiles(observed, probs);
    const std::size_t np = ensemble.n_paths();
    std::vector<std::vector<double>> per_path(np);
    for (std::size_t p = 0; p < np; ++p)
        per_path[p] = empirical_quantiles(ensemble.paths[p], probs);
    table.simulated.resize(probs.size());
    table.spread.resize(probs.size());
    std::vector<double> column(np);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        for (std::size_t p = 0; p < np; ++p) column[p] = per_path[p][i];
        table.simulated[i] = mean(column);
        table.spread[i] = np > 1 ? std::sqrt(variance(column)) : 0.0;
    }
    return table;
}

inline QuantileTable quantile_report(const DailySeries& observed, const Ensemble& ensemble,
                                     std::span<const double> probs) {
    return quantile_report(std::span<const double>(observed.values), ensemble, probs);
}

struct DensityEstimate {
    std::vector<double> x;
    std::vector<double> f;
    double bandwidth = 0.0;
    double mode = 0.0;
    double mean = 0.0;
    double variance = 0.0;
};

/// Gaussian-kernel density on a 512-point grid spanning the data ± 3
/// bandwidths. The sample is linearly binned first so the cost stays flat in
/// n; bandwidth 0 requests the Silverman rule.
inline DensityEstimate marginal_density(std::span<const double> values, double bandwidth = 0.0) {
    const std::size_t n = values.size();
    if (n < 100) throw std::invalid_argument("marginal_density: need at least 100 values");
    std::vector<double> v(values.begin(), values.end());
    const double h = bandwidth > 0.0 ? bandwidth : silverman_bandwidth(v);
    if (!(h > 0.0)) throw std::invalid_argument("marginal_density: degenerate sample");

    const auto [mn_it, mx_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *mn_it, hi = *mx_it;
    constexpr int n_bins = 2048;
    constexpr int n_grid = 512;
    const double bin_w = hi > lo ? (hi - lo) / (n_bins - 1) : 1.0;
    std::vector<double> w(n_bins, 0.0);
    for (double x : v) {
        const double pos = (x - lo) / bin_w;
        const auto b = static_cast<std::size_t>(std::min(pos, static_cast<double>(n_bins - 2)));
        const double frac = pos - static_cast<double>(b);
        w[b] += 1.0 - frac;
        w[b + 1] += frac;
    }

    DensityEstimate out;
    out.bandwidth = h;
    out.mean = mean(v);
    out.variance = variance(v);
    out.x.resize(n_grid);
    out.f.resize(n_grid);
    const double g_lo = lo - 3.0 * h, g_hi = hi + 3.0 * h;
    std::size_t arg = 0;
    for (int g = 0; g < n_grid; ++g) {
        const double x = g_lo + (g_hi - g_lo) * g / (n_grid - 1.0);
        double acc = 0.0;
        for (int b = 0; b < n_bins; ++b) {
            if (w[b] == 0.0) continue;
            acc += w[b] * normal_pdf((x - (lo + b * bin_w)) / h);
        }
        out.x[g] = x;
        out.f[g] = acc / (static_cast<double>(n) * h);
        if (out.f[g] > out.f[arg]) arg = static_cast<std::size_t>(g);
    }
    out.mode = out.x[arg];
    return out;
}

enum class ThresholdSide { above, below };

inline const char* to_string(ThresholdSide s) { return s == ThresholdSide::above ? "above" : "below"; }

struct ClusterSummary {
    double threshold = 0.0;
    ThresholdSide direction = ThresholdSide::above;
    std::map<int, std::size_t> length_counts;
    std::map<int, double> length_histogram; // relative frequencies
    std::size_t n_clusters = 0;
    std::size_t total_exceedance_days = 0;
    std::optional<double> mean_length;
    std::optional<double> declusterization_rate; // 1/mean_length when defined
};

/// Maximal runs of consecutive values beyond the threshold within one
/// contiguous segment (one season block, no gaps).
inline std::vector<int> cluster_lengths(std::span<const double> values, double threshold,
                                        ThresholdSide direction) {
    if (!std::isfinite(threshold)) throw std::invalid_argument("cluster_lengths: threshold must be finite");
    std::vector<int> lengths;
    int run = 0;
    for (double v : values) {
        const bool exceed = direction == ThresholdSide::above ? v > threshold : v < threshold;
        if (exceed) {
            ++run;
        } else if (run > 0) {
            lengths.push_back(run);
            run = 0;
        }
    }
    if (run > 0) lengths.push_back(run);
    return lengths;
}

inline ClusterSummary clusters_from_lengths(const std::vector<int>& lengths, double threshold,
                                            ThresholdSide direction) {
    ClusterSummary s;
    s.threshold = threshold;
    s.direction = direction;
    s.n_clusters = lengths.size();
    for (int len : lengths) {
        ++s.length_counts[len];
        s.total_exceedance_days += static_cast<std::size_t>(len);
    }
    if (s.n_clusters > 0) {
        for (const auto& [len, cnt] : s.length_counts)
            s.length_histogram[len] = static_cast<double>(cnt) / static_cast<double>(s.n_clusters);
        s.mean_length = static_cast<double>(s.total_exceedance_days) / static_cast<double>(s.n_clusters);
        s.declusterization_rate = 1.0 / *s.mean_length;
    }
    return s;
}

inline ClusterSummary clusters(std::span<const double> values, double threshold,
                               ThresholdSide direction) {
    return clusters_from_lengths(cluster_lengths(values, threshold, direction), threshold, direction);
}

/// Cluster summary across a blocked layout: runs never merge across segment
/// boundaries.
inline ClusterSummary clusters_blocked(std::span<const double> values,
                                       const std::vector<std::size_t>& block_lengths,
                                       double threshold, ThresholdSide direction) {
    std::vector<int> all;
    std::size_t offset = 0;
    for (std::size_t len : block_lengths) {
        if (offset + len > values.size())
            throw std::invalid_argument("clusters_blocked: layout exceeds the value vector");
        const auto part = cluster_lengths(values.subspan(offset, len), threshold, direction);
        all.insert(all.end(), part.begin(), part.end());
        offset += len;
    }
    if (offset != values.size())
        throw std::invalid_argument("clusters_blocked: layout does not cover the value vector");
    return clusters_from_lengths(all, threshold, direction);
}

/// Cluster summary on an observed series: segments are maximal runs of
/// consecutive calendar days inside one season block.
inline ClusterSummary clusters_series(const DailySeries& series, double threshold,
                                      ThresholdSide direction) {
    std::vector<int> all;
    std::size_t i = 0;
    for (const auto& block : series.year_blocks) {
        std::size_t seg_start = block.begin;
        for (i = block.begin + 1; i <= block.end; ++i) {
            const bool split = i == block.end ||
                               days_from_civil(series.dates[i]) != days_from_civil(series.dates[i - 1]) + 1;
            if (!split) continue;
            const auto seg = std::span<const double>(series.values).subspan(seg_start, i - seg_start);
            const auto part = cluster_lengths(seg, threshold, direction);
            all.insert(all.end(), part.begin(), part.end());
            seg_start = i;
        }
    }
    return clusters_from_lengths(all, threshold, direction);
}

struct GevRecovery {
    GevParams observed_fit;
    ExtremeDirection direction = ExtremeDirection::max;
    std::vector<double> mu_hat, sigma_hat, xi_hat;
    std::size_t n_paths = 0;
    std::size_t n_failed = 0;
    std::array<double, 3> frac_in_ci90{}; // μ, σ, ξ
    std::array<double, 3> median_hat{};
    bool degraded = false; // more than 5% of path fits failed
};

/// Refits the GEV on every simulated path's block extremes and compares the
/// cross-path estimates against the observed fit's 90% intervals.
inline GevRecovery gev_recovery(const DailySeries& observed, const Ensemble& ensemble,
                                ExtremeDirection direction, const GevFitOptions& options = {}) {
    const Tail tail = direction == ExtremeDirection::max ? Tail::upper : Tail::lower;
    GevRecovery rec;
    rec.direction = direction;
    const auto obs_ext = block_extremes(observed, direction, options.min_blocks);
    rec.observed_fit = fit_gev(obs_ext.values, tail, options);
    rec.n_paths = ensemble.n_paths();
    for (std::size_t p = 0; p < ensemble.n_paths(); ++p) {
        try {
            const auto ext = block_extremes(ensemble.paths[p], ensemble.block_lengths, direction,
                                            options.min_blocks);
            const auto fit = fit_gev(ext.values, tail, options);
            rec.mu_hat.push_back(fit.mu);
            rec.sigma_hat.push_back(fit.sigma);
            rec.xi_hat.push_back(fit.xi);
        } catch (const std::exception&) {
            ++rec.n_failed;
        }
    }
    rec.degraded = rec.n_paths > 0 &&
                   static_cast<double>(rec.n_failed) > 0.05 * static_cast<double>(rec.n_paths);
    if (!rec.mu_hat.empty()) {
        const std::array<const std::vector<double>*, 3> hats{&rec.mu_hat, &rec.sigma_hat, &rec.xi_hat};
        for (int k = 0; k < 3; ++k) {
            const auto& ci = rec.observed_fit.ci90[static_cast<std::size_t>(k)];
            std::size_t inside = 0;
            for (double v : *hats[static_cast<std::size_t>(k)])
                if (v >= ci[0] && v <= ci[1]) ++inside;
            rec.frac_in_ci90[static_cast<std::size_t>(k)] =
                static_cast<double>(inside) / static_cast<double>(hats[static_cast<std::size_t>(k)]->size());
            rec.median_hat[static_cast<std::size_t>(k)] = median(*hats[static_cast<std::size_t>(k)]);
        }
    }
    return rec;
}

struct ValidationTolerances {
    double quantile_band_sd = 0.5;  // |sim − obs| per prob, in units of sd(observed)
    double tail_band_factor = 1.5;  // relaxation for probs below 0.05 or above 0.95
    double density_mean_band_sd = 0.5;
    double density_var_log_ratio = 0.5; // |log(var_sim/var_obs)| bound
    double cluster_rate_tol = 0.2;      // absolute gap in declusterization rate
};

struct FullReportConfig {
    std::vector<double> probs = default_prob_ladder();
    std::vector<double> lower_cluster_probs{0.01, 0.02};
    std::vector<double> upper_cluster_probs{0.98, 0.99};
    std::vector<ExtremeDirection> gev_directions{ExtremeDirection::max, ExtremeDirection::min};
    ValidationTolerances tolerances;
    GevFitOptions gev_options;
};

struct CriterionFlag {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct EnsembleValidation {
    std::string label;
    QuantileTable quantiles;
    DensityEstimate density;
    std::vector<GevRecovery> gev; // one per requested direction that succeeded
    std::vector<ClusterSummary> clusters;
    std::vector<CriterionFlag> flags;
    std::vector<std::string> skipped;
    bool pass = true; // all present flags pass
};

struct ValidationReport {
    DensityEstimate observed_density;
    std::vector<ClusterSummary> observed_clusters;
    std::vector<std::pair<std::string, GevParams>> observed_gev; // keyed "max"/"min"
    std::vector<double> cluster_thresholds;
    std::vector<EnsembleValidation> variants;
    std::vector<std::string> skipped;
    bool all_pass = true;
};

namespace detail {

inline std::string format_flag_detail(double worst, double bound) {
    return "worst " + std::to_string(worst) + " vs bound " + std::to_string(bound);
}

} // namespace detail

/// Assembles the full comparison battery: quantile table, marginal density,
/// GEV recovery, and exceedance clusters at thresholds taken from the
/// observed quantiles. Sections that cannot be computed are marked skipped
/// with the reason rather than aborting the report.
inline ValidationReport full_report(const DailySeries& observed,
                                    const std::vector<const Ensemble*>& ensembles,
                                    const FullReportConfig& config = {}) {
    if (ensembles.empty()) throw std::invalid_argument("full_report: need at least one ensemble");
    ValidationReport report;
    const auto& obs = observed.values;
    const double sd_obs = std::sqrt(variance(obs));

    for (double p : config.lower_cluster_probs) report.cluster_thresholds.push_back(quantile(obs, p));
    for (double p : config.upper_cluster_probs) report.cluster_thresholds.push_back(quantile(obs, p));

    try {
        report.observed_density = marginal_density(obs);
    } catch (const std::exception& e) {
        report.skipped.push_back(std::string("observed_density: ") + e.what());
    }
    const std::size_t n_lower = config.lower_cluster_probs.size();
    for (std::size_t t = 0; t < report.cluster_thresholds.size(); ++t) {
        const ThresholdSide side = t < n_lower ? ThresholdSide::below : ThresholdSide::above;
        report.observed_clusters.push_back(
            clusters_series(observed, report.cluster_thresholds[t], side));
    }

    for (ExtremeDirection dir : config.gev_directions) {
        const char* key = dir == ExtremeDirection::max ? "max" : "min";
        try {
            const auto ext = block_extremes(observed, dir, config.gev_options.min_blocks);
            report.observed_gev.emplace_back(
                key, fit_gev(ext.values, dir == ExtremeDirection::max ? Tail::upper : Tail::lower,
                             config.gev_options));
        } catch (const std::exception& e) {
            report.skipped.push_back(std::string("observed_gev_") + key + ": " + e.what());
        }
    }

    for (const Ensemble* ens : ensembles) {
        EnsembleValidation v;
        v.label = to_string(ens->config.variant);

        v.quantiles = quantile_report(observed, *ens, config.probs);
        {
            CriterionFlag flag{"quantiles", true, ""};
            double worst = 0.0, worst_bound = 0.0;
            double worst_margin = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < v.quantiles.probs.size(); ++i) {
                const double p = v.quantiles.probs[i];
                double bound = config.tolerances.quantile_band_sd * sd_obs;
                if (p < 0.05 || p > 0.95) bound *= config.tolerances.tail_band_factor;
                const double gap = std::fabs(v.quantiles.simulated[i] - v.quantiles.observed[i]);
                if (gap - bound > worst_margin) {
                    worst_margin = gap - bound;
                    worst = gap;
                    worst_bound = bound;
                }
                if (gap > bound) flag.pass = false;
            }
            flag.detail = detail::format_flag_detail(worst, worst_bound);
            v.flags.push_back(std::move(flag));
        }

        std::vector<double> pooled;
        pooled.reserve(ens->n_paths() * ens->path_length());
        for (const auto& path : ens->paths) pooled.insert(pooled.end(), path.begin(), path.end());
        try {
            v.density = marginal_density(pooled);
            if (!report.observed_density.x.empty()) {
                CriterionFlag flag{"density", true, ""};
                const double mean_gap = std::fabs(v.density.mean - report.observed_density.mean);
                const double log_ratio = std::fabs(
                    std::log(v.density.variance / report.observed_density.variance));
                flag.pass = mean_gap <= config.tolerances.density_mean_band_sd * sd_obs &&
                            log_ratio <= config.tolerances.density_var_log_ratio;
                flag.detail = "mean gap " + std::to_string(mean_gap) + ", |log var ratio| " +
                              std::to_string(log_ratio);
                v.flags.push_back(std::move(flag));
            } else {
                v.skipped.push_back("density: observed density unavailable");
            }
        } catch (const std::exception& e) {
            v.skipped.push_back(std::string("density: ") + e.what());
        }

        for (ExtremeDirection dir : config.gev_directions) {
            const char* key = dir == ExtremeDirection::max ? "max" : "min";
            try {
                auto rec = gev_recovery(observed, *ens, dir, config.gev_options);
                const bool ci_ok = std::isfinite(rec.observed_fit.ci90[2][0]) &&
                                   std::isfinite(rec.observed_fit.ci90[2][1]);
                if (!rec.mu_hat.empty() && ci_ok) {
                    CriterionFlag flag{std::string("gev_") + key, true, ""};
                    for (int k = 0; k < 3; ++k) {
                        const auto& ci = rec.observed_fit.ci90[static_cast<std::size_t>(k)];
                        const double med = rec.median_hat[static_cast<std::size_t>(k)];
                        if (!(med >= ci[0] && med <= ci[1])) flag.pass = false;
                    }
                    flag.detail = "median estimates vs observed 90% intervals";
                    if (rec.degraded)
                        flag.detail += "; degraded (" + std::to_string(rec.n_failed) + " path fits failed)";
                    v.flags.push_back(std::move(flag));
                } else {
                    v.skipped.push_back(std::string("gev_") + key +
                                        ": intervals or path fits unavailable");
                }
                v.gev.push_back(std::move(rec));
            } catch (const std::exception& e) {
                v.skipped.push_back(std::string("gev_") + key + ": " + e.what());
            }
        }

        {
            CriterionFlag flag{"clusters", true, ""};
            bool any_checked = false;
            for (std::size_t t = 0; t < report.cluster_thresholds.size(); ++t) {
                const ThresholdSide side = t < n_lower ? ThresholdSide::below : ThresholdSide::above;
                std::vector<int> all;
                for (const auto& path : ens->paths) {
                    const auto lens = clusters_blocked(path, ens->block_lengths,
                                                       report.cluster_thresholds[t], side);
                    for (const auto& [len, cnt] : lens.length_counts)
                        all.insert(all.end(), cnt, len);
                }
                auto sum = clusters_from_lengths(all, report.cluster_thresholds[t], side);
                const auto& obs_sum = report.observed_clusters[t];
                if (obs_sum.declusterization_rate && sum.declusterization_rate) {
                    any_checked = true;
                    if (std::fabs(*sum.declusterization_rate - *obs_sum.declusterization_rate) >
                        config.tolerances.cluster_rate_tol)
                        flag.pass = false;
                }
                v.clusters.push_back(std::move(sum));
            }
            if (any_checked) {
                flag.detail = "declusterization rates vs observed";
                v.flags.push_back(std::move(flag));
            } else {
                v.skipped.push_back("clusters: no threshold had exceedances on both sides");
            }
        }

        for (const auto& f : v.flags) v.pass = v.pass && f.pass;
        report.all_pass = report.all_pass && v.pass;
        report.variants.push_back(std::move(v));
    }
    return report;
}

} // namespace tdse
