#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ricemap/date.hpp"
#include "ricemap/error.hpp"
#include "ricemap/grid.hpp"

namespace ricemap {

inline const std::vector<std::string>& reflectance_band_names() {
    static const std::vector<std::string> names = {"B2", "B3", "B4", "B8", "B11"};
    return names;
}

inline bool is_known_band_name(const std::string& b) {
    static const std::vector<std::string> known = {"B2",   "B3",   "B4",   "B8",  "B11", "QA",
                                                   "NDVI", "MNDWI", "LSWI", "EVI", "SAVI"};
    return std::find(known.begin(), known.end(), b) != known.end();
}

// Native ground resolution per band in meters. Overridable from the cube
// manifest; these are the sensor defaults.
inline const std::map<std::string, double>& default_band_resolutions() {
    static const std::map<std::string, double> res = {
        {"B2", 10.0}, {"B3", 10.0}, {"B4", 10.0}, {"B8", 10.0}, {"B11", 20.0}, {"QA", 10.0}};
    return res;
}

// Multi-date, multi-band reflectance stack for one district.
// values layout: [date][band][row][col], row-major planes.
struct ReflectanceCube {
    GeoGrid grid;
    std::vector<Date> dates;       // strictly increasing
    std::vector<std::string> bands;
    std::vector<float> values;
    float nodata = kNodata;
    std::string district_id;
    std::map<std::string, double> band_resolutions; // empty -> defaults

    std::size_t plane_size() const { return grid.pixels(); }

    std::size_t plane_offset(std::size_t date_idx, std::size_t band_idx) const {
        return (date_idx * bands.size() + band_idx) * plane_size();
    }

    int band_index(const std::string& name) const {
        for (std::size_t i = 0; i < bands.size(); ++i) {
            if (bands[i] == name) return int(i);
        }
        return -1;
    }

    bool is_nodata_value(float v) const {
        if (std::isnan(nodata)) return std::isnan(v);
        return v == nodata;
    }

    float at(int date_idx, int band_idx, int row, int col) const {
        check_index(date_idx, band_idx, row, col);
        return values[plane_offset(std::size_t(date_idx), std::size_t(band_idx)) +
                      std::size_t(row) * std::size_t(grid.width) + std::size_t(col)];
    }
    float& at(int date_idx, int band_idx, int row, int col) {
        check_index(date_idx, band_idx, row, col);
        return values[plane_offset(std::size_t(date_idx), std::size_t(band_idx)) +
                      std::size_t(row) * std::size_t(grid.width) + std::size_t(col)];
    }

    double band_resolution(const std::string& band) const {
        auto it = band_resolutions.find(band);
        if (it != band_resolutions.end()) return it->second;
        auto dflt = default_band_resolutions().find(band);
        if (dflt != default_band_resolutions().end()) return dflt->second;
        return grid.pixel_size;
    }

    void validate_structure() const {
        grid.validate();
        require(!bands.empty(), "cube: band list is empty");
        require(!dates.empty(), "cube: date list is empty");
        for (const auto& b : bands) {
            require(is_known_band_name(b), "cube: unknown band name '" + b + "'");
        }
        for (std::size_t i = 1; i < dates.size(); ++i) {
            if (!(dates[i - 1] < dates[i])) {
                throw validation_error("cube: dates not strictly increasing at " +
                                       dates[i].to_string());
            }
        }
        const std::size_t expected = dates.size() * bands.size() * plane_size();
        require(values.size() == expected, "cube: value buffer size mismatch (" +
                                               std::to_string(values.size()) + " != " +
                                               std::to_string(expected) + ")");
    }

    // Holds only after normalize_reflectance.
    void validate_normalized_range() const {
        for (float v : values) {
            if (is_nodata_value(v)) continue;
            if (!(v >= 0.0f && v <= 1.0f)) {
                throw validation_error("cube: reflectance outside [0,1] after normalization");
            }
        }
    }

    ReflectanceCube select_bands(const std::vector<std::string>& keep) const {
        ReflectanceCube out;
        out.grid = grid;
        out.dates = dates;
        out.nodata = nodata;
        out.district_id = district_id;
        out.band_resolutions = band_resolutions;
        out.bands = keep;
        out.values.resize(dates.size() * keep.size() * plane_size());
        for (std::size_t d = 0; d < dates.size(); ++d) {
            for (std::size_t b = 0; b < keep.size(); ++b) {
                const int src = band_index(keep[b]);
                require(src >= 0, "cube: band '" + keep[b] + "' not present");
                const float* from = values.data() + plane_offset(d, std::size_t(src));
                float* to = out.values.data() + out.plane_offset(d, b);
                std::copy(from, from + plane_size(), to);
            }
        }
        return out;
    }

    ReflectanceCube select_dates(const std::vector<std::size_t>& keep) const {
        ReflectanceCube out;
        out.grid = grid;
        out.bands = bands;
        out.nodata = nodata;
        out.district_id = district_id;
        out.band_resolutions = band_resolutions;
        out.dates.reserve(keep.size());
        out.values.resize(keep.size() * bands.size() * plane_size());
        for (std::size_t i = 0; i < keep.size(); ++i) {
            require(keep[i] < dates.size(), "cube: date index out of range");
            out.dates.push_back(dates[keep[i]]);
            const float* from = values.data() + plane_offset(keep[i], 0);
            float* to = out.values.data() + out.plane_offset(i, 0);
            std::copy(from, from + bands.size() * plane_size(), to);
        }
        return out;
    }

private:
    void check_index(int date_idx, int band_idx, int row, int col) const {
        if (date_idx < 0 || std::size_t(date_idx) >= dates.size() || band_idx < 0 ||
            std::size_t(band_idx) >= bands.size() || row < 0 || row >= grid.height || col < 0 ||
            col >= grid.width) {
            throw validation_error("cube access out of range (date=" + std::to_string(date_idx) +
                                   " band=" + std::to_string(band_idx) + " row=" +
                                   std::to_string(row) + " col=" + std::to_string(col) + ")");
        }
    }
};

// Single spectral index over the same date axis as its source cube.
// values layout: [date][row][col].
struct IndexCube {
    GeoGrid grid;
    std::vector<Date> dates;
    std::string index_name;
    std::vector<float> values;
    float nodata = kNodata;

    std::size_t plane_size() const { return grid.pixels(); }
    std::size_t plane_offset(std::size_t date_idx) const { return date_idx * plane_size(); }

    bool is_nodata_value(float v) const {
        if (std::isnan(nodata)) return std::isnan(v);
        return v == nodata;
    }

    float at(int date_idx, int row, int col) const {
        if (date_idx < 0 || std::size_t(date_idx) >= dates.size() || row < 0 ||
            row >= grid.height || col < 0 || col >= grid.width) {
            throw validation_error("index cube access out of range");
        }
        return values[plane_offset(std::size_t(date_idx)) +
                      std::size_t(row) * std::size_t(grid.width) + std::size_t(col)];
    }
};

} // namespace ricemap
