#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ricemap/error.hpp"

namespace ricemap {

// Georeferenced pixel grid. origin is the top-left corner of pixel (0,0);
// rows grow southward (y decreases), columns grow eastward (x increases).
struct GeoGrid {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double pixel_size = 10.0; // meters, square pixels
    int width = 0;
    int height = 0;
    std::string crs_label;

    void validate() const {
        require(pixel_size > 0.0, "grid: pixel_size must be > 0");
        require(width >= 1 && height >= 1, "grid: width and height must be >= 1");
    }

    std::size_t pixels() const { return std::size_t(width) * std::size_t(height); }

    double center_x(int col) const { return origin_x + (col + 0.5) * pixel_size; }
    double center_y(int row) const { return origin_y - (row + 0.5) * pixel_size; }

    bool same_shape(const GeoGrid& o) const {
        return width == o.width && height == o.height &&
               std::abs(origin_x - o.origin_x) < 1e-6 && std::abs(origin_y - o.origin_y) < 1e-6 &&
               std::abs(pixel_size - o.pixel_size) < 1e-9;
    }
};

// Row-major raster plane. Out-of-range access is a checked error everywhere;
// hot loops index the backing vector directly with already-validated bounds.
template <typename T>
class Plane {
public:
    Plane() = default;
    Plane(int height, int width, T fill = T{})
        : height_(height), width_(width), data_(std::size_t(height) * std::size_t(width), fill) {
        require(height >= 1 && width >= 1, "plane: dimensions must be >= 1");
    }

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }

    T at(int row, int col) const {
        check(row, col);
        return data_[idx(row, col)];
    }
    T& at(int row, int col) {
        check(row, col);
        return data_[idx(row, col)];
    }

    const std::vector<T>& data() const { return data_; }
    std::vector<T>& data() { return data_; }

    std::size_t idx(int row, int col) const {
        return std::size_t(row) * std::size_t(width_) + std::size_t(col);
    }

private:
    void check(int row, int col) const {
        if (row < 0 || row >= height_ || col < 0 || col >= width_) {
            throw validation_error("plane access out of range: (" + std::to_string(row) + "," +
                                   std::to_string(col) + ") in " + std::to_string(height_) + "x" +
                                   std::to_string(width_));
        }
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<T> data_;
};

inline bool is_nodata(float v) { return std::isnan(v); }
inline constexpr float kNodata = std::numeric_limits<float>::quiet_NaN();

// Binary paddy/non-paddy plane. Cells hold 0, 1, or nodata (NaN); the float
// carrier keeps masks in the same plane file format as everything else.
struct BinaryMask {
    GeoGrid grid;
    Plane<float> values;

    static BinaryMask filled(const GeoGrid& g, float v) {
        g.validate();
        BinaryMask m{g, Plane<float>(g.height, g.width, v)};
        return m;
    }

    void validate() const {
        grid.validate();
        require(values.height() == grid.height && values.width() == grid.width,
                "mask: plane shape does not match grid");
        for (float v : values.data()) {
            if (!is_nodata(v) && v != 0.0f && v != 1.0f) {
                throw validation_error("mask: cell value not in {0,1,nodata}");
            }
        }
    }

    std::int64_t count_ones() const {
        std::int64_t n = 0;
        for (float v : values.data()) n += (v == 1.0f);
        return n;
    }
};

} // namespace ricemap
