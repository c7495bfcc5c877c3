#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace tdse {

/// Natural cubic spline through (x_i, y_i): zero second derivative at both
/// ends, linear extrapolation outside the knot range. The interpolant is
/// linear in y, which the penalized fit exploits through basis splines.
class NaturalCubic {
public:
    NaturalCubic() = default;

    NaturalCubic(std::vector<double> x, std::vector<double> y)
        : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        if (n < 2 || y_.size() != n) throw std::invalid_argument("NaturalCubic: need >= 2 matching points");
        for (std::size_t i = 0; i + 1 < n; ++i)
            if (!(x_[i] < x_[i + 1])) throw std::invalid_argument("NaturalCubic: x not strictly increasing");
        m_.assign(n, 0.0);
        if (n == 2) return;
        // Thomas solve of the natural tridiagonal system for the second
        // derivatives at interior knots.
        const std::size_t k = n - 2;
        std::vector<double> diag(k), upper(k), rhs(k);
        for (std::size_t i = 0; i < k; ++i) {
            const double h0 = x_[i + 1] - x_[i];
            const double h1 = x_[i + 2] - x_[i + 1];
            diag[i] = (h0 + h1) / 3.0;
            upper[i] = h1 / 6.0;
            rhs[i] = (y_[i + 2] - y_[i + 1]) / h1 - (y_[i + 1] - y_[i]) / h0;
        }
        for (std::size_t i = 1; i < k; ++i) {
            const double lower = (x_[i + 1] - x_[i]) / 6.0; // sub-diagonal = previous upper
            const double w = lower / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        m_[k] = rhs[k - 1] / diag[k - 1];
        for (std::size_t i = k - 1; i >= 1; --i) m_[i] = (rhs[i - 1] - upper[i - 1] * m_[i + 1]) / diag[i - 1];
    }

    double operator()(double x) const { return eval(x); }

    double eval(double x) const {
        const std::size_t n = x_.size();
        if (x <= x_[0]) return y_[0] + end_slope_left() * (x - x_[0]);
        if (x >= x_[n - 1]) return y_[n - 1] + end_slope_right() * (x - x_[n - 1]);
        const std::size_t i = interval(x);
        const double h = x_[i + 1] - x_[i];
        const double A = (x_[i + 1] - x) / h;
        const double B = (x - x_[i]) / h;
        return A * y_[i] + B * y_[i + 1] +
               ((A * A * A - A) * m_[i] + (B * B * B - B) * m_[i + 1]) * h * h / 6.0;
    }

    /// Second derivative; identically 0 outside the knot range.
    double second_derivative(double x) const {
        const std::size_t n = x_.size();
        if (x <= x_[0] || x >= x_[n - 1]) return 0.0;
        const std::size_t i = interval(x);
        const double h = x_[i + 1] - x_[i];
        return m_[i] * (x_[i + 1] - x) / h + m_[i + 1] * (x - x_[i]) / h;
    }

    const std::vector<double>& knots() const { return x_; }
    const std::vector<double>& values() const { return y_; }

private:
    std::size_t interval(double x) const {
        // Largest i with x_[i] <= x, capped to the last interval.
        std::size_t lo = 0, hi = x_.size() - 1;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            (x_[mid] <= x ? lo : hi) = mid;
        }
        return lo;
    }
    double end_slope_left() const {
        const double h = x_[1] - x_[0];
        return (y_[1] - y_[0]) / h - h * m_[1] / 6.0;
    }
    double end_slope_right() const {
        const std::size_t n = x_.size();
        const double h = x_[n - 1] - x_[n - 2];
        return (y_[n - 1] - y_[n - 2]) / h + h * m_[n - 2] / 6.0;
    }

    std::vector<double> x_, y_, m_;
};

/// The K natural-cubic basis splines B_j (unit value at knot j, zero at the
/// others). Any natural cubic through values y equals sum_j y_j B_j.
inline std::vector<NaturalCubic> natural_cubic_basis(const std::vector<double>& knots) {
    std::vector<NaturalCubic> basis;
    basis.reserve(knots.size());
    for (std::size_t j = 0; j < knots.size(); ++j) {
        std::vector<double> e(knots.size(), 0.0);
        e[j] = 1.0;
        basis.emplace_back(knots, std::move(e));
    }
    return basis;
}

} // namespace tdse
