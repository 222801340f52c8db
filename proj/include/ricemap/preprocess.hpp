#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ricemap/cube.hpp"
#include "ricemap/error.hpp"
#include "ricemap/grid.hpp"
#include "ricemap/stats.hpp"

namespace ricemap {

// One QA bitfield plane per cube date, same grid. Values travel as f32; small
// integer bitfields survive the carrier exactly.
struct QaStack {
    GeoGrid grid;
    std::vector<Date> dates;
    std::vector<float> values; // [date][row][col]

    std::size_t plane_size() const { return grid.pixels(); }

    static QaStack from_cube(const ReflectanceCube& qa_cube) {
        const int qi = qa_cube.band_index("QA");
        require(qi >= 0, "QA cube has no 'QA' band");
        QaStack qa;
        qa.grid = qa_cube.grid;
        qa.dates = qa_cube.dates;
        qa.values.resize(qa_cube.dates.size() * qa_cube.plane_size());
        for (std::size_t d = 0; d < qa_cube.dates.size(); ++d) {
            const float* from = qa_cube.values.data() + qa_cube.plane_offset(d, std::size_t(qi));
            std::copy(from, from + qa_cube.plane_size(),
                      qa.values.data() + d * qa_cube.plane_size());
        }
        return qa;
    }

    void check_aligned(const ReflectanceCube& cube) const {
        require(grid.same_shape(cube.grid), "QA grid does not match cube grid");
        require(dates == cube.dates, "QA dates do not match cube dates");
    }
};

// Cloud flag bits within the QA word. Opaque cloud bit 10 and cirrus bit 11
// are the QA band's conventional layout; both are configuration keys
// (qa.cloud_bit / qa.cirrus_bit).
struct QaBits {
    int cloud_bit = 10;
    int cirrus_bit = 11;

    bool flags_cloud(float qa_value) const {
        if (std::isnan(qa_value)) return false;
        const auto word = std::uint32_t(qa_value);
        return (word >> cloud_bit & 1u) || (word >> cirrus_bit & 1u);
    }
};

// Per-index IQR multipliers for outlier filtering.
struct OutlierPolicy {
    std::map<std::string, double> k_per_index = {{"NDVI", 2.0}, {"EVI", 2.0}, {"LSWI", 1.5}};

    void validate() const {
        for (const auto& [name, k] : k_per_index) {
            require(k > 0.0, "outlier policy: multiplier for " + name + " must be > 0");
        }
    }
};

inline double cloud_fraction(const QaStack& qa, std::size_t date_idx, const QaBits& bits) {
    const float* plane = qa.values.data() + date_idx * qa.plane_size();
    std::size_t valid = 0, cloudy = 0;
    for (std::size_t i = 0; i < qa.plane_size(); ++i) {
        if (std::isnan(plane[i])) continue;
        ++valid;
        cloudy += bits.flags_cloud(plane[i]);
    }
    return valid == 0 ? 0.0 : double(cloudy) / double(valid);
}

// Removes whole dates whose cloud-flagged fraction (over valid QA pixels)
// strictly exceeds max_cloud_fraction. A date at exactly the threshold stays.
inline ReflectanceCube drop_cloudy_scenes(const ReflectanceCube& cube, const QaStack& qa,
                                          double max_cloud_fraction,
                                          const QaBits& bits = QaBits{}) {
    qa.check_aligned(cube);
    require(max_cloud_fraction > 0.0 && max_cloud_fraction <= 1.0,
            "max_cloud_fraction must be in (0,1]");
    std::vector<std::size_t> keep;
    for (std::size_t d = 0; d < cube.dates.size(); ++d) {
        if (cloud_fraction(qa, d, bits) <= max_cloud_fraction) keep.push_back(d);
    }
    if (keep.empty()) {
        throw validation_error("all dates exceed the cloud threshold; cube would be empty");
    }
    return cube.select_dates(keep);
}

// Sets every band to nodata at pixels whose QA word flags opaque cloud or
// cirrus on that date.
inline ReflectanceCube mask_cloud_pixels(const ReflectanceCube& cube, const QaStack& qa,
                                         const QaBits& bits = QaBits{}) {
    qa.check_aligned(cube);
    ReflectanceCube out = cube;
    const std::size_t psize = cube.plane_size();
    for (std::size_t d = 0; d < cube.dates.size(); ++d) {
        const float* qplane = qa.values.data() + d * psize;
        for (std::size_t i = 0; i < psize; ++i) {
            if (!bits.flags_cloud(qplane[i])) continue;
            for (std::size_t b = 0; b < cube.bands.size(); ++b) {
                out.values[out.plane_offset(d, b) + i] = out.nodata;
            }
        }
    }
    return out;
}

// value' = value / scale, clamped to [0,1]. Order-preserving; nodata passes
// through untouched.
inline ReflectanceCube normalize_reflectance(const ReflectanceCube& cube, double scale) {
    require(scale > 0.0, "normalization scale must be > 0");
    ReflectanceCube out = cube;
    for (float& v : out.values) {
        if (out.is_nodata_value(v)) continue;
        float n = float(double(v) / scale);
        if (n < 0.0f) n = 0.0f;
        if (n > 1.0f) n = 1.0f;
        v = n;
    }
    return out;
}

struct MaskedSeries {
    std::vector<float> values; // nodata where masked
    bool warned = false;       // too few observations to filter
    int masked_count = 0;
};

// Bi-directional IQR filter on one time series: observations outside
// [median - k*IQR, median + k*IQR] become nodata. Quantiles use linear
// interpolation. IQR == 0 disables masking (a constant series is not an
// anomaly). Fewer than 4 valid observations: returned unmodified, warned.
inline MaskedSeries iqr_outlier_mask(const std::vector<float>& series, double k) {
    require(k > 0.0, "iqr filter: k must be > 0");
    MaskedSeries out{series, false, 0};
    std::vector<double> valid;
    valid.reserve(series.size());
    for (float v : series) {
        if (!std::isnan(v)) valid.push_back(v);
    }
    if (valid.size() < 4) {
        out.warned = true;
        return out;
    }
    const QuartileSummary q = quartiles(valid);
    if (q.iqr() <= 0.0) return out;
    const double lo = q.median - k * q.iqr();
    const double hi = q.median + k * q.iqr();
    for (float& v : out.values) {
        if (std::isnan(v)) continue;
        if (v < lo || v > hi) {
            v = kNodata;
            ++out.masked_count;
        }
    }
    return out;
}

} // namespace ricemap
