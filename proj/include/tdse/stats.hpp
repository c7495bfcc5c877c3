#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace tdse {

inline double mean(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("mean: empty input");
    long double s = 0.0L;
    for (double v : x) s += v;
    return static_cast<double>(s / static_cast<long double>(x.size()));
}

/// Unbiased sample variance (n-1 denominator); 0 for n < 2.
inline double variance(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    const double m = mean(x);
    long double ss = 0.0L;
    for (double v : x) {
        const long double d = static_cast<long double>(v) - m;
        ss += d * d;
    }
    return static_cast<double>(ss / static_cast<long double>(n - 1));
}

inline double stdev(std::span<const double> x) { return std::sqrt(variance(x)); }

inline double skewness(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 3) return 0.0;
    const double m = mean(x);
    long double s2 = 0.0L, s3 = 0.0L;
    for (double v : x) {
        const long double d = v - m;
        s2 += d * d;
        s3 += d * d * d;
    }
    const double sd = std::sqrt(static_cast<double>(s2) / n);
    if (sd == 0.0) return 0.0;
    return static_cast<double>(s3) / (n * sd * sd * sd);
}

/// Excess kurtosis (0 for a normal population).
inline double excess_kurtosis(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 4) return 0.0;
    const double m = mean(x);
    long double s2 = 0.0L, s4 = 0.0L;
    for (double v : x) {
        const long double d = v - m;
        s2 += d * d;
        s4 += d * d * d * d;
    }
    const double v2 = static_cast<double>(s2) / n;
    if (v2 == 0.0) return 0.0;
    return static_cast<double>(s4) / (n * v2 * v2) - 3.0;
}

/// Type-7 quantile (linear interpolation between order statistics at
/// position p*(n-1)+1, 1-based). The single convention used throughout:
/// junctions, trims, quantile tables all go through here.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    const std::size_t n = sorted.size();
    if (n == 0) throw std::invalid_argument("quantile: empty input");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: p outside [0,1]");
    if (n == 1) return sorted[0];
    const double h = p * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= n) return sorted[n - 1];
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::span<const double> x, double p) {
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    return quantile_sorted(s, p);
}

inline double median(std::span<const double> x) { return quantile(x, 0.5); }

inline double iqr(std::span<const double> x) {
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    return quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
}

/// Silverman's rule-of-thumb bandwidth: 0.9 * min(sd, IQR/1.34) * n^{-1/5}.
inline double silverman_bandwidth(std::span<const double> x) {
    if (x.size() < 2) throw std::invalid_argument("silverman_bandwidth: need n >= 2");
    const double sd = stdev(x);
    const double iq = iqr(x) / 1.34;
    double scale = sd;
    if (iq > 0.0 && iq < scale) scale = iq;
    if (scale <= 0.0) scale = (sd > 0.0 ? sd : 1.0);
    return 0.9 * scale * std::pow(static_cast<double>(x.size()), -0.2);
}

// ---------------------------------------------------------------------------
// Normal distribution
// ---------------------------------------------------------------------------

inline double normal_pdf(double x) {
    static const double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.7071067811865475244);
}

/// Inverse standard normal CDF, Wichura's algorithm AS 241 (PPND16).
/// Accurate to about 1e-16 over (0,1).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p outside (0,1)");
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
            (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r + 6.7265770927008700853e4) * r +
                 4.5921953931549871457e4) * r + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
               1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
            (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r + 3.9307895800092710610e4) * r +
                 2.1213794301586595867e4) * r + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
               4.2313330701600911252e1) * r + 1.0);
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r + 2.41780725177450611770e-1) * r +
                   1.27045825245236838258e0) * r + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                 4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r + 1.51986665636164571966e-2) * r +
                   1.48103976427480074590e-1) * r + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                 2.05319162663775882187e0) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 1.24266094738807843860e-3) * r +
                   2.65321895265761230930e-2) * r + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                 5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r + 1.84631831751005468180e-5) * r +
                   7.86869131145613259100e-4) * r + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                 5.99832206555887937690e-1) * r + 1.0);
    }
    return (q < 0.0) ? -val : val;
}

// ---------------------------------------------------------------------------
// Incomplete gamma / chi-square
// ---------------------------------------------------------------------------

namespace detail {

// Regularized lower incomplete gamma P(a,x) by series expansion (x < a+1).
inline double gamma_p_series(double a, double x) {
    double sum = 1.0 / a, term = sum, ap = a;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a,x) by Lentz continued fraction (x >= a+1).
inline double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

} // namespace detail

/// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p: bad arguments");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return detail::gamma_p_series(a, x);
    return 1.0 - detail::gamma_q_cf(a, x);
}

/// Survival function of the chi-square distribution with k dof.
inline double chi2_sf(double x, double k) {
    if (x <= 0.0) return 1.0;
    return 1.0 - gamma_p(0.5 * k, 0.5 * x);
}

/// Kolmogorov limiting survival function Q(x) = 2 sum (-1)^{k-1} exp(-2 k^2 x^2).
inline double kolmogorov_sf(double x) {
    if (x <= 0.0) return 1.0;
    if (x < 0.15) return 1.0;
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        s += (k % 2 == 1 ? term : -term);
        if (term < 1e-18) break;
    }
    return std::clamp(2.0 * s, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Serial correlation
// ---------------------------------------------------------------------------

/// Sample autocorrelations at lags 1..max_lag.
inline std::vector<double> autocorrelations(std::span<const double> x, int max_lag) {
    const std::size_t n = x.size();
    if (n < 2 || max_lag < 1) throw std::invalid_argument("autocorrelations: bad arguments");
    const double m = mean(x);
    long double denom = 0.0L;
    for (double v : x) {
        const long double d = v - m;
        denom += d * d;
    }
    std::vector<double> acf(static_cast<std::size_t>(max_lag), 0.0);
    if (denom == 0.0L) return acf;
    for (int k = 1; k <= max_lag; ++k) {
        long double num = 0.0L;
        for (std::size_t t = 0; t + static_cast<std::size_t>(k) < n; ++t)
            num += (static_cast<long double>(x[t]) - m) * (static_cast<long double>(x[t + k]) - m);
        acf[static_cast<std::size_t>(k - 1)] = static_cast<double>(num / denom);
    }
    return acf;
}

struct LjungBoxResult {
    double statistic = 0.0;
    double p_value = 1.0;
    int lags = 0;
};

inline LjungBoxResult ljung_box(std::span<const double> x, int max_lag) {
    const auto acf = autocorrelations(x, max_lag);
    const double n = static_cast<double>(x.size());
    double q = 0.0;
    for (int k = 1; k <= max_lag; ++k)
        q += acf[static_cast<std::size_t>(k - 1)] * acf[static_cast<std::size_t>(k - 1)] / (n - k);
    q *= n * (n + 2.0);
    return {q, chi2_sf(q, static_cast<double>(max_lag)), max_lag};
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// Composite Simpson over equally spaced samples f[0..n-1] with step h.
/// n must be >= 2; an even sample count is handled with one trapezoid cell at the end.
inline double simpson(std::span<const double> f, double h) {
    const std::size_t n = f.size();
    if (n < 2) throw std::invalid_argument("simpson: need at least 2 samples");
    double s = 0.0;
    std::size_t m = n;
    if (m % 2 == 0) m -= 1; // largest odd prefix
    for (std::size_t i = 0; i + 2 < m + 1; i += 2)
        s += (f[i] + 4.0 * f[i + 1] + f[i + 2]) * h / 3.0;
    if (m < n) s += 0.5 * h * (f[n - 2] + f[n - 1]);
    return s;
}

} // namespace tdse
