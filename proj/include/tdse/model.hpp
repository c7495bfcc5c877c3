#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "tdse/gev.hpp"

namespace tdse {

struct DriftParams {
    double alpha = 0.0;
    double beta = 0.0;
    std::array<double, 2> se{std::numeric_limits<double>::quiet_NaN(),
                             std::numeric_limits<double>::quiet_NaN()};

    double eval(double z) const { return alpha + beta * z; }
};

/// Degree-4 polynomial for a on the central range, evaluated on the
/// conditioned argument u = (z − mid)/halfwidth.
struct CentralPoly {
    std::array<double, 5> coeffs{};
    double lo = -1.0; // central domain [lo, hi] = [q01, q99] of Z
    double hi = 1.0;
    double mid = 0.0;
    double halfwidth = 1.0;
    std::array<double, 5> se{};

    static CentralPoly from_domain(double lo_, double hi_) {
        if (!(hi_ > lo_)) throw std::invalid_argument("CentralPoly: empty domain");
        CentralPoly p;
        p.lo = lo_;
        p.hi = hi_;
        p.mid = 0.5 * (lo_ + hi_);
        p.halfwidth = 0.5 * (hi_ - lo_);
        return p;
    }

    double eval(double z) const {
        const double u = (z - mid) / halfwidth;
        double acc = 0.0;
        for (std::size_t k = coeffs.size(); k-- > 0;) acc = acc * u + coeffs[k];
        return acc;
    }
};

enum class TailSide { lower, upper };

/// Boundary quadratic grafted onto the central polynomial: zero at the
/// endpoint, matching value and slope at the junction quantile.
struct TailQuadratic {
    std::array<double, 3> coeffs{}; // c0 + c1·z + c2·z²
    TailSide side = TailSide::lower;
    double junction = 0.0;
    double endpoint = 0.0;

    double eval(double z) const {
        // Evaluate in t = z − endpoint so a(endpoint) is exactly 0.
        const double t = z - endpoint;
        const double lin = coeffs[1] + 2.0 * coeffs[2] * endpoint; // d/dt at t = 0
        return (coeffs[2] * t + lin) * t;
    }
};

/// The unique quadratic through (endpoint, 0) and (junction, value) with the
/// given slope at the junction, checked for strict positivity between them.
inline TailQuadratic build_tail_quadratic(double endpoint_r, double junction_q,
                                          double value_at_junction, double slope_at_junction,
                                          TailSide side) {
    if (endpoint_r == junction_q)
        throw std::invalid_argument("build_tail_quadratic: endpoint equals junction (singular system)");
    if (side == TailSide::lower && !(endpoint_r < junction_q))
        throw std::invalid_argument("build_tail_quadratic: lower endpoint must lie below the junction");
    if (side == TailSide::upper && !(endpoint_r > junction_q))
        throw std::invalid_argument("build_tail_quadratic: upper endpoint must lie above the junction");

    // In t = z − r the constraints A(0) = 0, A(w) = c, A'(w) = d with
    // w = q − r give A(t) = u·t + v·t².
    const double w = junction_q - endpoint_r;
    const double c = value_at_junction;
    const double d = slope_at_junction;
    const double v = (d * w - c) / (w * w);
    const double u = (2.0 * c - d * w) / w;

    // Positivity on the open interval between r and q: A(t) = t(u + v t) with
    // the linear factor one-signed, so it suffices that c > 0 and u lies on
    // the junction side of 0.
    const bool u_ok = u == 0.0 || (w > 0.0 ? u > 0.0 : u < 0.0);
    if (!(c > 0.0) || !u_ok)
        throw std::invalid_argument("build_tail_quadratic: constraints incompatible with positivity "
                                    "between endpoint and junction");

    TailQuadratic t;
    t.side = side;
    t.junction = junction_q;
    t.endpoint = endpoint_r;
    t.coeffs = {v * endpoint_r * endpoint_r - u * endpoint_r, u - 2.0 * v * endpoint_r, v};
    return t;
}

enum class UpperTailPolicy { quadratic, use_central };

/// Drift plus piecewise diffusion coefficient: central degree-4 polynomial on
/// [q01, q99] with grafted boundary quadratics. An absent tail piece means the
/// central polynomial extends to an infinite boundary on that side.
struct PiecewiseDiffusion {
    DriftParams drift;
    CentralPoly central;
    std::optional<TailQuadratic> lower_tail;
    std::optional<TailQuadratic> upper_tail;
    BoundaryInfo boundaries;

    double support_lower() const {
        return lower_tail ? lower_tail->endpoint : -std::numeric_limits<double>::infinity();
    }
    double support_upper() const {
        return upper_tail ? upper_tail->endpoint : std::numeric_limits<double>::infinity();
    }
};

/// Assemble and cross-check the piecewise model. Junction continuity must
/// hold to 1e-8; the diffusion coefficient must be strictly positive on the
/// central domain (and beyond it on any side covered by the central
/// polynomial alone).
inline PiecewiseDiffusion assemble(const DriftParams& drift, const CentralPoly& central,
                                   const std::optional<TailQuadratic>& lower_tail,
                                   const std::optional<TailQuadratic>& upper_tail,
                                   const BoundaryInfo& boundaries) {
    if (lower_tail) {
        if (lower_tail->side != TailSide::lower)
            throw std::invalid_argument("assemble: lower tail piece has the wrong side");
        if (std::fabs(lower_tail->junction - central.lo) > 1e-9)
            throw std::invalid_argument("assemble: lower junction does not match the central domain");
        const double gap = std::fabs(lower_tail->eval(central.lo) - central.eval(central.lo));
        if (gap > 1e-8)
            throw std::invalid_argument("assemble: continuity violation at the lower junction: " +
                                        std::to_string(gap));
    }
    if (upper_tail) {
        if (upper_tail->side != TailSide::upper)
            throw std::invalid_argument("assemble: upper tail piece has the wrong side");
        if (std::fabs(upper_tail->junction - central.hi) > 1e-9)
            throw std::invalid_argument("assemble: upper junction does not match the central domain");
        const double gap = std::fabs(upper_tail->eval(central.hi) - central.eval(central.hi));
        if (gap > 1e-8)
            throw std::invalid_argument("assemble: continuity violation at the upper junction: " +
                                        std::to_string(gap));
    }
    // Positivity of the central polynomial across its own domain.
    for (int i = 0; i <= 400; ++i) {
        const double z = central.lo + (central.hi - central.lo) * i / 400.0;
        if (!(central.eval(z) > 0.0))
            throw std::invalid_argument("assemble: central polynomial not positive at z=" +
                                        std::to_string(z));
    }

    PiecewiseDiffusion m;
    m.drift = drift;
    m.central = central;
    m.lower_tail = lower_tail;
    m.upper_tail = upper_tail;
    m.boundaries = boundaries;
    return m;
}

inline double eval_drift(const PiecewiseDiffusion& m, double z) { return m.drift.eval(z); }

/// Diffusion coefficient with region dispatch. Defined on the closed support:
/// exactly 0 at an equipped boundary, error strictly outside.
inline double eval_diff(const PiecewiseDiffusion& m, double z) {
    const double rl = m.support_lower(), ru = m.support_upper();
    if (z < rl || z > ru)
        throw std::invalid_argument("eval_diff: z=" + std::to_string(z) + " outside the support");
    if (z == rl || z == ru) return 0.0;
    if (m.lower_tail && z < m.central.lo) return m.lower_tail->eval(z);
    if (m.upper_tail && z > m.central.hi) return m.upper_tail->eval(z);
    // Beyond an uncovered junction the central polynomial is extrapolating
    // and may eventually dip below zero; floor it so the returned value is
    // always a valid noise amplitude.
    if (z < m.central.lo || z > m.central.hi) return std::max(0.0, m.central.eval(z));
    return m.central.eval(z);
}

} // namespace tdse
