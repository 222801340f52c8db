#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ricemap/error.hpp"
#include "ricemap/grid.hpp"

namespace ricemap {

// Least-squares polynomial fit evaluated at x_eval. Normal equations with
// partial pivoting; orders here are tiny (<= window), so this is plenty.
inline double polyfit_eval(const std::vector<double>& xs, const std::vector<double>& ys, int order,
                           double x_eval) {
    require(xs.size() == ys.size(), "polyfit: size mismatch");
    const int n = int(xs.size());
    const int m = order + 1;
    require(n >= m, "polyfit: need at least order+1 points");

    // A[i][j] = sum x^(i+j), b[i] = sum y * x^i
    std::vector<std::vector<double>> a(m, std::vector<double>(m, 0.0));
    std::vector<double> b(m, 0.0);
    for (int p = 0; p < n; ++p) {
        double xpow = 1.0;
        std::vector<double> powers(2 * m - 1);
        for (int k = 0; k < 2 * m - 1; ++k) {
            powers[k] = xpow;
            xpow *= xs[p];
        }
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) a[i][j] += powers[i + j];
            b[i] += ys[p] * powers[i];
        }
    }

    for (int col = 0; col < m; ++col) {
        int pivot = col;
        for (int r = col + 1; r < m; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        ensure(std::abs(a[col][col]) > 1e-12, "polyfit: singular normal equations");
        for (int r = col + 1; r < m; ++r) {
            const double f = a[r][col] / a[col][col];
            for (int c = col; c < m; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> coef(m, 0.0);
    for (int r = m - 1; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < m; ++c) s -= a[r][c] * coef[c];
        coef[r] = s / a[r][r];
    }

    double result = 0.0, xpow = 1.0;
    for (int i = 0; i < m; ++i) {
        result += coef[i] * xpow;
        xpow *= x_eval;
    }
    return result;
}

struct SmoothedSeries {
    std::vector<double> values;
    bool warned = false; // series shorter than the window, returned unsmoothed
};

// Savitzky-Golay smoothing. Interior points use the full window; edges fit on
// the truncated window, which reproduces polynomials up to `order` exactly
// everywhere. nodata gaps are linearly interpolated before fitting and
// restored afterwards (leading/trailing gaps take the nearest valid value).
inline SmoothedSeries smooth_savgol(const std::vector<double>& series, int window, int order) {
    require(window >= 1 && window % 2 == 1, "savgol: window must be odd and positive");
    require(order >= 0 && order < window, "savgol: order must be < window");

    SmoothedSeries out{series, false};
    const int n = int(series.size());
    if (n < window) {
        out.warned = true;
        return out;
    }

    std::vector<int> valid;
    for (int i = 0; i < n; ++i) {
        if (!std::isnan(series[i])) valid.push_back(i);
    }
    if (valid.empty()) {
        out.warned = true;
        return out;
    }

    std::vector<double> filled(std::size_t(n), 0.0);
    for (int i = 0; i < n; ++i) {
        if (!std::isnan(series[i])) {
            filled[i] = series[i];
            continue;
        }
        const auto next = std::lower_bound(valid.begin(), valid.end(), i);
        if (next == valid.begin()) {
            filled[i] = series[valid.front()];
        } else if (next == valid.end()) {
            filled[i] = series[valid.back()];
        } else {
            const int r = *next, l = *(next - 1);
            const double t = double(i - l) / double(r - l);
            filled[i] = series[l] + t * (double(series[r]) - double(series[l]));
        }
    }

    const int half = window / 2;
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half);
        const int hi = std::min(n - 1, i + half);
        std::vector<double> xs, ys;
        xs.reserve(hi - lo + 1);
        ys.reserve(hi - lo + 1);
        for (int j = lo; j <= hi; ++j) {
            xs.push_back(double(j - i));
            ys.push_back(filled[j]);
        }
        out.values[i] = polyfit_eval(xs, ys, order, 0.0);
    }

    for (int i = 0; i < n; ++i) {
        if (std::isnan(series[i])) out.values[i] = double(kNodata);
    }
    return out;
}

} // namespace ricemap
