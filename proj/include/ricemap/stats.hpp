#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ricemap/error.hpp"

namespace ricemap {

// Quantile with linear interpolation between order statistics:
// q(p) = x[(n-1)p] with fractional indices interpolated. `sorted` must be
// ascending and non-empty; p in [0,1].
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    require(!sorted.empty(), "quantile: empty sample");
    require(p >= 0.0 && p <= 1.0, "quantile: p outside [0,1]");
    if (sorted.size() == 1) return sorted.front();
    const double h = (double(sorted.size()) - 1.0) * p;
    const std::size_t lo = std::size_t(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = h - double(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double p) {
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, p);
}

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

struct QuartileSummary {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr() const { return q3 - q1; }
};

inline QuartileSummary quartiles(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    QuartileSummary s;
    s.q1 = quantile_sorted(values, 0.25);
    s.median = quantile_sorted(values, 0.50);
    s.q3 = quantile_sorted(values, 0.75);
    return s;
}

inline double mean(const std::vector<double>& values) {
    require(!values.empty(), "mean: empty sample");
    double s = 0.0;
    for (double v : values) s += v;
    return s / double(values.size());
}

// Population standard deviation (divide by n).
inline double stddev_population(const std::vector<double>& values) {
    const double mu = mean(values);
    double ss = 0.0;
    for (double v : values) ss += (v - mu) * (v - mu);
    return std::sqrt(ss / double(values.size()));
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double pearson_r = 0.0;
};

// Ordinary least squares y = slope*x + intercept.
inline LinearFit ols_fit(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size(), "ols: size mismatch");
    require(x.size() >= 2, "ols: need at least 2 points");
    const double n = double(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    require(sxx > 0.0, "ols: x has zero variance");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.pearson_r = (syy > 0.0) ? sxy / std::sqrt(sxx * syy) : 0.0;
    return f;
}

} // namespace ricemap
