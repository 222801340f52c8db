#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ricemap/cube.hpp"
#include "ricemap/error.hpp"

namespace ricemap {

namespace fs = std::filesystem;

// Plane files are raw 32-bit little-endian IEEE floats, row-major.
namespace detail {

inline void to_little_endian_inplace(std::vector<std::uint32_t>& words) {
    if constexpr (std::endian::native == std::endian::big) {
        for (auto& w : words) w = __builtin_bswap32(w);
    }
}

} // namespace detail

inline void write_plane_f32(const fs::path& path, const float* data, std::size_t count) {
    std::vector<std::uint32_t> words(count);
    std::memcpy(words.data(), data, count * sizeof(float));
    detail::to_little_endian_inplace(words);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(words.data()),
              std::streamsize(count * sizeof(std::uint32_t)));
    if (!out) throw io_error("write failed: " + path.string());
}

inline void read_plane_f32(const fs::path& path, float* data, std::size_t count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("missing plane file: " + path.string());
    in.seekg(0, std::ios::end);
    const auto bytes = in.tellg();
    if (std::size_t(bytes) != count * sizeof(float)) {
        throw validation_error("plane dimension mismatch: " + path.string() + " holds " +
                               std::to_string(std::size_t(bytes) / sizeof(float)) +
                               " values, expected " + std::to_string(count));
    }
    in.seekg(0, std::ios::beg);
    std::vector<std::uint32_t> words(count);
    in.read(reinterpret_cast<char*>(words.data()), std::streamsize(count * sizeof(std::uint32_t)));
    if (!in) throw io_error("read failed: " + path.string());
    detail::to_little_endian_inplace(words);
    std::memcpy(data, words.data(), count * sizeof(float));
}

inline std::string plane_filename(const Date& date, const std::string& band) {
    return date.to_string() + "_" + band + ".f32";
}

// nodata is NaN by default, which JSON cannot carry as a number; it is
// serialized as null (or the string "NaN" on input).
inline nlohmann::json nodata_to_json(float nodata) {
    if (std::isnan(nodata)) return nullptr;
    return nodata;
}

inline float nodata_from_json(const nlohmann::json& j) {
    if (j.is_null()) return kNodata;
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "NaN" || s == "nan") return kNodata;
        throw validation_error("manifest: unrecognized nodata string '" + s + "'");
    }
    return j.get<float>();
}

inline void write_cube(const ReflectanceCube& cube, const fs::path& dir) {
    cube.validate_structure();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw io_error("cannot create cube directory: " + dir.string());

    nlohmann::json manifest;
    manifest["district"] = cube.district_id;
    manifest["crs_label"] = cube.grid.crs_label;
    manifest["origin_x"] = cube.grid.origin_x;
    manifest["origin_y"] = cube.grid.origin_y;
    manifest["pixel_size"] = cube.grid.pixel_size;
    manifest["width"] = cube.grid.width;
    manifest["height"] = cube.grid.height;
    manifest["nodata"] = nodata_to_json(cube.nodata);
    manifest["bands"] = cube.bands;
    nlohmann::json dates = nlohmann::json::array();
    for (const auto& d : cube.dates) dates.push_back(d.to_string());
    manifest["dates"] = dates;
    if (!cube.band_resolutions.empty()) {
        manifest["band_resolutions"] = cube.band_resolutions;
    }

    std::ofstream mf(dir / "manifest.json", std::ios::trunc);
    if (!mf) throw io_error("cannot write manifest: " + (dir / "manifest.json").string());
    mf << manifest.dump(2) << '\n';

    for (std::size_t d = 0; d < cube.dates.size(); ++d) {
        for (std::size_t b = 0; b < cube.bands.size(); ++b) {
            write_plane_f32(dir / plane_filename(cube.dates[d], cube.bands[b]),
                            cube.values.data() + cube.plane_offset(d, b), cube.plane_size());
        }
    }
}

inline ReflectanceCube read_cube(const fs::path& dir) {
    const fs::path mpath = dir / "manifest.json";
    std::ifstream mf(mpath);
    if (!mf) throw io_error("missing manifest: " + mpath.string());
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("manifest parse error in " + mpath.string() + ": " + e.what());
    }

    ReflectanceCube cube;
    try {
        cube.district_id = manifest.at("district").get<std::string>();
        cube.grid.crs_label = manifest.at("crs_label").get<std::string>();
        cube.grid.origin_x = manifest.at("origin_x").get<double>();
        cube.grid.origin_y = manifest.at("origin_y").get<double>();
        cube.grid.pixel_size = manifest.at("pixel_size").get<double>();
        cube.grid.width = manifest.at("width").get<int>();
        cube.grid.height = manifest.at("height").get<int>();
        cube.nodata = nodata_from_json(manifest.at("nodata"));
        cube.bands = manifest.at("bands").get<std::vector<std::string>>();
        for (const auto& d : manifest.at("dates")) {
            cube.dates.push_back(Date::parse(d.get<std::string>()));
        }
        if (manifest.contains("band_resolutions")) {
            cube.band_resolutions =
                manifest.at("band_resolutions").get<std::map<std::string, double>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("manifest field error in " + mpath.string() + ": " + e.what());
    }

    cube.grid.validate();
    cube.values.resize(cube.dates.size() * cube.bands.size() * cube.plane_size());
    for (std::size_t d = 0; d < cube.dates.size(); ++d) {
        for (std::size_t b = 0; b < cube.bands.size(); ++b) {
            read_plane_f32(dir / plane_filename(cube.dates[d], cube.bands[b]),
                           cube.values.data() + cube.plane_offset(d, b), cube.plane_size());
        }
    }
    cube.validate_structure();
    return cube;
}

// Index cubes use the same directory format with the index name as the band.
inline void write_index_cube(const IndexCube& cube, const fs::path& dir,
                             const std::string& district_id = "") {
    ReflectanceCube carrier;
    carrier.grid = cube.grid;
    carrier.dates = cube.dates;
    carrier.bands = {cube.index_name};
    carrier.values = cube.values;
    carrier.nodata = cube.nodata;
    carrier.district_id = district_id;
    write_cube(carrier, dir);
}

inline IndexCube read_index_cube(const fs::path& dir) {
    const ReflectanceCube carrier = read_cube(dir);
    require(carrier.bands.size() == 1, "index cube directory must hold exactly one band");
    static const std::vector<std::string> index_names = {"NDVI", "MNDWI", "LSWI", "EVI", "SAVI"};
    require(std::find(index_names.begin(), index_names.end(), carrier.bands[0]) !=
                index_names.end(),
            "band '" + carrier.bands[0] + "' is not a spectral index");
    IndexCube cube;
    cube.grid = carrier.grid;
    cube.dates = carrier.dates;
    cube.index_name = carrier.bands[0];
    cube.values = carrier.values;
    cube.nodata = carrier.nodata;
    return cube;
}

// Bare single plane in the cube plane format, shape taken from `grid`.
inline Plane<float> read_bare_plane(const fs::path& path, const GeoGrid& grid) {
    Plane<float> p(grid.height, grid.width);
    read_plane_f32(path, p.data().data(), p.size());
    return p;
}

inline void write_bare_plane(const fs::path& path, const Plane<float>& p) {
    write_plane_f32(path, p.data().data(), p.size());
}

// Grayscale PGM (P5) dump of a mask for eyeballing: 1 -> white, 0 -> dark,
// nodata -> mid gray.
inline void write_mask_pgm(const fs::path& path, const BinaryMask& mask) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open for writing: " + path.string());
    out << "P5\n" << mask.grid.width << ' ' << mask.grid.height << "\n255\n";
    for (float v : mask.values.data()) {
        unsigned char c = is_nodata(v) ? 128 : (v == 1.0f ? 255 : 32);
        out.put(char(c));
    }
}

} // namespace ricemap
