#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "ricemap/cube.hpp"
#include "ricemap/error.hpp"
#include "ricemap/parallel.hpp"

namespace ricemap {

enum class IndexKind { NDVI, MNDWI, LSWI, EVI, SAVI };

inline const std::array<IndexKind, 5>& all_index_kinds() {
    static const std::array<IndexKind, 5> kinds = {IndexKind::NDVI, IndexKind::MNDWI,
                                                   IndexKind::LSWI, IndexKind::EVI,
                                                   IndexKind::SAVI};
    return kinds;
}

inline const char* index_name(IndexKind k) {
    switch (k) {
        case IndexKind::NDVI: return "NDVI";
        case IndexKind::MNDWI: return "MNDWI";
        case IndexKind::LSWI: return "LSWI";
        case IndexKind::EVI: return "EVI";
        case IndexKind::SAVI: return "SAVI";
    }
    throw internal_error("unhandled index kind");
}

inline IndexKind index_from_name(const std::string& name) {
    for (IndexKind k : all_index_kinds()) {
        if (name == index_name(k)) return k;
    }
    throw validation_error("unknown index name: '" + name + "'");
}

inline std::vector<std::string> index_required_bands(IndexKind k) {
    switch (k) {
        case IndexKind::NDVI: return {"B8", "B4"};
        case IndexKind::MNDWI: return {"B3", "B11"};
        case IndexKind::LSWI: return {"B8", "B11"};
        case IndexKind::EVI: return {"B8", "B4", "B2"};
        case IndexKind::SAVI: return {"B8", "B4"};
    }
    throw internal_error("unhandled index kind");
}

// Ratios blow up near zero denominators; below this magnitude the result is
// nodata rather than a huge non-physical value.
inline constexpr double kDenominatorEpsilon = 1e-9;

namespace detail {

inline double safe_ratio(double num, double den) {
    if (std::abs(den) < kDenominatorEpsilon) return std::numeric_limits<double>::quiet_NaN();
    return num / den;
}

} // namespace detail

// Full-precision formula evaluation; NaN where the denominator vanishes.
// b2/b3/b4/b8/b11 must be normalized reflectance; only the bands the formula
// uses are read.
inline double evaluate_index_double(IndexKind k, double b2, double b3, double b4, double b8,
                                    double b11) {
    switch (k) {
        case IndexKind::NDVI: return detail::safe_ratio(b8 - b4, b8 + b4);
        case IndexKind::MNDWI: return detail::safe_ratio(b3 - b11, b3 + b11);
        case IndexKind::LSWI: return detail::safe_ratio(b8 - b11, b8 + b11);
        case IndexKind::EVI:
            return detail::safe_ratio(2.5 * (b8 - b4), b8 + 6.0 * b4 - 7.5 * b2 + 1.0);
        case IndexKind::SAVI: return detail::safe_ratio(1.5 * (b8 - b4), b8 + b4 + 0.5);
    }
    throw internal_error("unhandled index kind");
}

// Plane-carrier precision (float32), as stored in index cubes.
inline float evaluate_index(IndexKind k, double b2, double b3, double b4, double b8, double b11) {
    const double v = evaluate_index_double(k, b2, b3, b4, b8, b11);
    return std::isnan(v) ? kNodata : float(v);
}

inline IndexCube compute_index(const ReflectanceCube& cube, IndexKind kind, int workers = 1) {
    std::array<int, 5> bi = {-1, -1, -1, -1, -1}; // B2,B3,B4,B8,B11
    const std::array<const char*, 5> names = {"B2", "B3", "B4", "B8", "B11"};
    for (std::size_t i = 0; i < names.size(); ++i) bi[i] = cube.band_index(names[i]);
    for (const auto& need : index_required_bands(kind)) {
        if (cube.band_index(need) < 0) {
            throw validation_error(std::string("index ") + index_name(kind) +
                                   ": cube is missing band " + need);
        }
    }

    IndexCube out;
    out.grid = cube.grid;
    out.dates = cube.dates;
    out.index_name = index_name(kind);
    out.nodata = kNodata;
    out.values.assign(cube.dates.size() * cube.plane_size(), kNodata);

    const std::size_t psize = cube.plane_size();
    const auto required = index_required_bands(kind);
    std::vector<int> required_idx;
    for (const auto& b : required) required_idx.push_back(cube.band_index(b));

    for (std::size_t d = 0; d < cube.dates.size(); ++d) {
        std::array<const float*, 5> planes = {nullptr, nullptr, nullptr, nullptr, nullptr};
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (bi[i] >= 0) planes[i] = cube.values.data() + cube.plane_offset(d, std::size_t(bi[i]));
        }
        std::vector<const float*> req_planes;
        for (int r : required_idx) req_planes.push_back(cube.values.data() + cube.plane_offset(d, std::size_t(r)));
        float* dst = out.values.data() + out.plane_offset(d);

        parallel_chunks(psize, workers, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                bool missing = false;
                for (const float* rp : req_planes) {
                    if (cube.is_nodata_value(rp[i])) {
                        missing = true;
                        break;
                    }
                }
                if (missing) {
                    dst[i] = kNodata;
                    continue;
                }
                const double b2 = planes[0] ? planes[0][i] : 0.0;
                const double b3 = planes[1] ? planes[1][i] : 0.0;
                const double b4 = planes[2] ? planes[2][i] : 0.0;
                const double b8 = planes[3] ? planes[3][i] : 0.0;
                const double b11 = planes[4] ? planes[4][i] : 0.0;
                dst[i] = evaluate_index(kind, b2, b3, b4, b8, b11);
            }
        });
    }
    return out;
}

// Effective computation resolution for an index: the coarsest native
// resolution among its input bands. Pure metadata; inputs are assumed
// pre-gridded to the cube grid, so nothing is resampled here.
inline double align_to_coarsest(const ReflectanceCube& cube, IndexKind kind) {
    double coarsest = 0.0;
    for (const auto& band : index_required_bands(kind)) {
        coarsest = std::max(coarsest, cube.band_resolution(band));
    }
    return coarsest;
}

} // namespace ricemap
