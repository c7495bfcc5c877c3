#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <thread>
#include <vector>

#include "tdse/model.hpp"
#include "tdse/rng.hpp"
#include "tdse/trend.hpp"

namespace tdse {

enum class ModelVariant { model1, model2, model3 };

inline const char* to_string(ModelVariant v) {
    switch (v) {
        case ModelVariant::model1: return "model1";
        case ModelVariant::model2: return "model2";
        case ModelVariant::model3: return "model3";
    }
    return "unknown";
}

enum class BoundaryPolicy { resample, clamp };

inline const char* to_string(BoundaryPolicy p) {
    return p == BoundaryPolicy::resample ? "resample" : "clamp";
}

struct SimConfig {
    int n_paths = 1000;
    std::size_t path_length = 0; // 0: use the block layout total
    std::uint64_t seed = 0;
    ModelVariant variant = ModelVariant::model3;
    BoundaryPolicy boundary_policy = BoundaryPolicy::resample;
    int max_resamples = 100;
    int burn_in = 200;
    int threads = 0; // 0: hardware concurrency
    bool keep_z = false;
};

struct Ensemble {
    std::vector<std::vector<double>> paths;   // denormalized (X) scale
    std::vector<std::vector<double>> z_paths; // kept only when configured
    std::vector<std::size_t> block_lengths;   // season layout shared by all paths
    std::vector<std::uint64_t> stream_ids;
    std::vector<std::uint64_t> clamp_counts;
    SimConfig config;

    std::size_t n_paths() const { return paths.size(); }
    std::size_t path_length() const { return paths.empty() ? 0 : paths.front().size(); }
};

namespace detail {

struct SupportLimits {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    double margin = 0.0;
};

inline SupportLimits support_limits(const PiecewiseDiffusion& model) {
    SupportLimits lim;
    const double rl = model.support_lower();
    const double rh = model.support_upper();
    double margin = 0.0;
    if (std::isfinite(rl) && std::isfinite(rh)) {
        margin = 1e-6 * (rh - rl);
    } else if (std::isfinite(rl) || std::isfinite(rh)) {
        margin = 1e-6 * (model.central.hi - model.central.lo);
    }
    lim.margin = margin;
    if (std::isfinite(rl)) lim.lo = rl + margin;
    if (std::isfinite(rh)) lim.hi = rh - margin;
    return lim;
}

/// One Euler step with the configured boundary handling. Exits past the
/// margin-shrunk support are redrawn (resample policy) or pinned; either way
/// the emitted state stays inside [lo, hi].
inline double euler_step(const PiecewiseDiffusion& model, double z, StreamRng& rng,
                         const SupportLimits& lim, BoundaryPolicy policy, int max_resamples,
                         std::uint64_t& clamp_count) {
    const double b = eval_drift(model, z);
    const double a = eval_diff(model, z);
    double next = z + b + a * rng.next_normal();
    if (next >= lim.lo && next <= lim.hi) return next;
    if (policy == BoundaryPolicy::resample) {
        for (int k = 0; k < max_resamples; ++k) {
            next = z + b + a * rng.next_normal();
            if (next >= lim.lo && next <= lim.hi) return next;
        }
    }
    ++clamp_count;
    return next > lim.hi ? lim.hi : lim.lo;
}

inline double initial_state(const PiecewiseDiffusion& model) {
    if (model.support_lower() < 0.0 && model.support_upper() > 0.0) return 0.0;
    const double lo = std::max(model.support_lower(), model.central.lo);
    const double hi = std::min(model.support_upper(), model.central.hi);
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Euler recursion Z_{n+1} = Z_n + b(Z_n) + a(Z_n)·ε_n from z0, emitting n
/// states (z0 first). Draws come from the supplied stream only.
inline std::vector<double> simulate_path(const PiecewiseDiffusion& model, double z0, std::size_t n,
                                         StreamRng& rng,
                                         BoundaryPolicy policy = BoundaryPolicy::resample,
                                         int max_resamples = 100,
                                         std::uint64_t* clamp_count = nullptr) {
    if (n == 0) throw std::invalid_argument("simulate_path: n must be positive");
    if (!(z0 > model.support_lower() && z0 < model.support_upper()))
        throw std::invalid_argument("simulate_path: z0 outside the open support");
    const auto lim = detail::support_limits(model);
    std::uint64_t clamps = 0;
    std::vector<double> path(n);
    path[0] = z0;
    for (std::size_t t = 1; t < n; ++t)
        path[t] = detail::euler_step(model, path[t - 1], rng, lim, policy, max_resamples, clamps);
    if (clamp_count) *clamp_count += clamps;
    return path;
}

/// Generates the ensemble: one deterministic substream per path index, a
/// discarded burn-in from the fixed start state, then denormalization with
/// the supplied trend curves over the observed block layout.
inline Ensemble simulate_ensemble(const PiecewiseDiffusion& model, const TrendCurve* mean_trend,
                                  const TrendCurve* scale_trend,
                                  const std::vector<std::size_t>& block_lengths,
                                  const SimConfig& config) {
    if (config.n_paths < 1) throw std::invalid_argument("simulate_ensemble: n_paths must be >= 1");
    if (config.max_resamples < 0 || config.burn_in < 0)
        throw std::invalid_argument("simulate_ensemble: negative max_resamples or burn_in");
    switch (config.variant) {
        case ModelVariant::model1:
            if (mean_trend || scale_trend)
                throw std::invalid_argument("simulate_ensemble: model1 takes no trend curves");
            break;
        case ModelVariant::model2:
            if (!mean_trend || scale_trend)
                throw std::invalid_argument("simulate_ensemble: model2 takes the mean trend only");
            break;
        case ModelVariant::model3:
            if (!mean_trend || !scale_trend)
                throw std::invalid_argument("simulate_ensemble: model3 takes mean and scale trends");
            break;
    }
    std::size_t len = config.path_length;
    if (len == 0)
        len = std::accumulate(block_lengths.begin(), block_lengths.end(), std::size_t{0});
    if (len == 0) throw std::invalid_argument("simulate_ensemble: empty path layout");
    if (mean_trend && mean_trend->fitted.size() != len)
        throw std::invalid_argument("simulate_ensemble: mean trend length mismatches the layout");
    if (scale_trend && scale_trend->fitted.size() != len)
        throw std::invalid_argument("simulate_ensemble: scale trend length mismatches the layout");

    Ensemble ens;
    ens.config = config;
    ens.block_lengths = block_lengths;
    const auto np = static_cast<std::size_t>(config.n_paths);
    ens.paths.assign(np, {});
    if (config.keep_z) ens.z_paths.assign(np, {});
    ens.stream_ids.resize(np);
    ens.clamp_counts.assign(np, 0);

    const double z_start = detail::initial_state(model);
    const auto lim = detail::support_limits(model);

    auto run_path = [&](std::size_t p) {
        StreamRng rng(config.seed, p);
        ens.stream_ids[p] = p;
        std::uint64_t clamps = 0;
        double z = z_start;
        for (int t = 0; t < config.burn_in; ++t)
            z = detail::euler_step(model, z, rng, lim, config.boundary_policy,
                                   config.max_resamples, clamps);
        std::vector<double> zs(len);
        zs[0] = z;
        for (std::size_t t = 1; t < len; ++t)
            zs[t] = detail::euler_step(model, zs[t - 1], rng, lim, config.boundary_policy,
                                       config.max_resamples, clamps);
        std::vector<double> xs(len);
        for (std::size_t t = 0; t < len; ++t) {
            const double m = mean_trend ? mean_trend->fitted[t] : 0.0;
            const double s = scale_trend ? scale_trend->fitted[t] : 1.0;
            xs[t] = s * zs[t] + m;
        }
        ens.clamp_counts[p] = clamps;
        ens.paths[p] = std::move(xs);
        if (config.keep_z) ens.z_paths[p] = std::move(zs);
    };

    unsigned n_threads = config.threads > 0 ? static_cast<unsigned>(config.threads)
                                            : std::thread::hardware_concurrency();
    if (n_threads < 1) n_threads = 1;
    n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(np));
    if (n_threads <= 1) {
        for (std::size_t p = 0; p < np; ++p) run_path(p);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        workers.reserve(n_threads);
        for (unsigned w = 0; w < n_threads; ++w) {
            workers.emplace_back([&] {
                for (std::size_t p = next.fetch_add(1); p < np; p = next.fetch_add(1)) run_path(p);
            });
        }
        for (auto& t : workers) t.join();
    }
    return ens;
}

} // namespace tdse
