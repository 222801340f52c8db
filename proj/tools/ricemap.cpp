// Command-line surface for the paddy mapping pipeline. One district per
// invocation; batch runs are shell loops over districts.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <glob.h>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ricemap/ricemap.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitInternal = 3;

class StageTimer {
public:
    explicit StageTimer(ricemap::RunManifest& manifest) : manifest_(manifest) {}

    template <typename Fn>
    auto run(const std::string& name, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            record(name, t0);
        } else {
            auto result = fn();
            record(name, t0);
            return result;
        }
    }

private:
    void record(const std::string& name, std::chrono::steady_clock::time_point t0) {
        const auto dt = std::chrono::steady_clock::now() - t0;
        manifest_.stage_timings_ms[name] =
            std::chrono::duration<double, std::milli>(dt).count();
    }

    ricemap::RunManifest& manifest_;
};

ricemap::DistrictDictionary load_dictionary(const std::string& path) {
    if (path.empty()) return ricemap::DistrictDictionary::builtin();
    return ricemap::DistrictDictionary::load(path);
}

json read_json_file(const fs::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw ricemap::io_error(std::string("cannot read ") + what + ": " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ricemap::validation_error(std::string(what) + " parse error in " + path.string() +
                                        ": " + e.what());
    }
    return j;
}

std::vector<fs::path> expand_glob(const std::string& pattern) {
    glob_t results{};
    const int rc = glob(pattern.c_str(), GLOB_MARK, nullptr, &results);
    std::vector<fs::path> out;
    if (rc == 0) {
        for (std::size_t i = 0; i < results.gl_pathc; ++i) out.emplace_back(results.gl_pathv[i]);
    }
    globfree(&results);
    if (rc != 0 && rc != GLOB_NOMATCH) {
        throw ricemap::io_error("glob failed for pattern: " + pattern);
    }
    return out;
}

json grid_to_json(const ricemap::GeoGrid& grid, const std::string& district) {
    return json{{"district", district},
                {"crs_label", grid.crs_label},
                {"origin_x", grid.origin_x},
                {"origin_y", grid.origin_y},
                {"pixel_size", grid.pixel_size},
                {"width", grid.width},
                {"height", grid.height},
                {"nodata", nullptr}};
}

ricemap::GeoGrid grid_from_json(const json& j) {
    ricemap::GeoGrid g;
    g.crs_label = j.at("crs_label").get<std::string>();
    g.origin_x = j.at("origin_x").get<double>();
    g.origin_y = j.at("origin_y").get<double>();
    g.pixel_size = j.at("pixel_size").get<double>();
    g.width = j.at("width").get<int>();
    g.height = j.at("height").get<int>();
    g.validate();
    return g;
}

void write_mask_outputs(const fs::path& out_dir, const std::string& name,
                        const ricemap::BinaryMask& mask, bool pgm) {
    ricemap::write_bare_plane(out_dir / (name + ".f32"), mask.values);
    if (pgm) ricemap::write_mask_pgm(out_dir / (name + ".pgm"), mask);
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessArgs {
    std::string cube_dir;
    std::string qa_dir;
    double scale = 10000.0;
    double max_cloud = 0.8;
    std::string out_dir;
    std::vector<std::string> config;
};

int run_preprocess(const PreprocessArgs& args) {
    ricemap::RunManifest manifest;
    manifest.command = "preprocess";
    manifest.started = ricemap::logging::utc_now_iso();
    StageTimer timer(manifest);

    ricemap::QaBits bits;
    for (const auto& kv : args.config) {
        const auto eq = kv.find('=');
        ricemap::require(eq != std::string::npos, "--config expects key=value, got '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        const int value = std::stoi(kv.substr(eq + 1));
        if (key == "qa.cloud_bit") {
            bits.cloud_bit = value;
        } else if (key == "qa.cirrus_bit") {
            bits.cirrus_bit = value;
        } else {
            throw ricemap::validation_error("unknown configuration key: '" + key + "'");
        }
    }

    auto cube = timer.run("read_cube", [&] { return ricemap::read_cube(args.cube_dir); });
    manifest.add_input(args.cube_dir);

    if (!args.qa_dir.empty()) {
        auto qa = timer.run("read_qa", [&] {
            return ricemap::QaStack::from_cube(ricemap::read_cube(args.qa_dir));
        });
        manifest.add_input(args.qa_dir);
        const std::size_t before = cube.dates.size();
        cube = timer.run("drop_cloudy_scenes", [&] {
            return ricemap::drop_cloudy_scenes(cube, qa, args.max_cloud, bits);
        });
        ricemap::logging::info("preprocess", "scene screening kept " +
                                                 std::to_string(cube.dates.size()) + " of " +
                                                 std::to_string(before) + " dates");
        // QA stack must follow the surviving dates
        std::vector<std::size_t> keep;
        for (std::size_t d = 0; d < qa.dates.size(); ++d) {
            for (const auto& date : cube.dates) {
                if (qa.dates[d] == date) keep.push_back(d);
            }
        }
        ricemap::QaStack kept;
        kept.grid = qa.grid;
        for (std::size_t d : keep) {
            kept.dates.push_back(qa.dates[d]);
            kept.values.insert(kept.values.end(), qa.values.begin() + d * qa.plane_size(),
                               qa.values.begin() + (d + 1) * qa.plane_size());
        }
        cube = timer.run("mask_cloud_pixels",
                         [&] { return ricemap::mask_cloud_pixels(cube, kept, bits); });
    } else {
        ricemap::logging::info("preprocess", "no QA stack given; cloud screening skipped");
    }

    cube = timer.run("normalize",
                     [&] { return ricemap::normalize_reflectance(cube, args.scale); });
    cube.validate_normalized_range();

    timer.run("write_cube", [&] { ricemap::write_cube(cube, args.out_dir); });
    manifest.finished = ricemap::logging::utc_now_iso();
    manifest.write(args.out_dir);
    ricemap::logging::info("preprocess", "wrote cleaned cube to " + args.out_dir);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateArgs {
    std::string cube_dir;
    std::string refs_file;
    std::string district;
    std::string mode = "district";
    std::string clusters_file;
    std::string windows_file;
    std::string trajectories_file;
    std::string season_start;
    std::string season_end;
    bool with_tpa = false;
    bool allow_nonstandard_durations = false;
    std::string out_path;
    std::string compare_out;
    std::string districts_file;
};

struct WindowsDoc {
    ricemap::DateRange season;
    ricemap::StageWindows windows;
};

WindowsDoc parse_windows_fragment(const json& j, const std::string& district) {
    WindowsDoc doc;
    doc.season = ricemap::calibration_json::parse_date_range(j.at("season"), "season");
    doc.windows.district_id = district;
    const json& jw = j.at("stage_windows");
    for (ricemap::Stage s : ricemap::all_stages()) {
        doc.windows.window(s) = ricemap::calibration_json::parse_date_range(
            jw.at(ricemap::stage_name(s)), std::string("stage_windows.") + ricemap::stage_name(s));
    }
    doc.windows.validate(/*allow_nonstandard_durations=*/true);
    return doc;
}

// Windows file: either one shared fragment {season, stage_windows} or a
// per-district map {"districts": {name: fragment}}.
WindowsDoc load_windows(const std::string& path, const std::string& district,
                        const ricemap::DistrictDictionary& dict) {
    const json j = read_json_file(path, "windows document");
    if (j.contains("districts")) {
        for (const auto& [name, fragment] : j.at("districts").items()) {
            if (dict.normalize(name) == district) return parse_windows_fragment(fragment, district);
        }
        throw ricemap::validation_error("windows document has no entry for district " + district);
    }
    return parse_windows_fragment(j, district);
}

WindowsDoc detect_windows_from_trajectories(const std::string& csv_path,
                                            const std::string& season_start,
                                            const std::string& season_end,
                                            const std::string& district,
                                            const ricemap::DistrictDictionary& dict) {
    ricemap::require(!season_start.empty() && !season_end.empty(),
                     "--trajectories needs --season-start and --season-end");
    WindowsDoc doc;
    doc.season = {ricemap::Date::parse(season_start), ricemap::Date::parse(season_end)};
    auto profiles = ricemap::read_reference_profiles(csv_path);
    std::vector<ricemap::FieldProfile> paddy;
    for (auto& p : profiles) {
        if (p.klass != "paddy") continue;
        if (!p.district.empty() && dict.normalize(p.district) != district) continue;
        auto it = p.series.find("NDVI");
        ricemap::require(it != p.series.end(), "trajectory " + p.field_id + " lacks NDVI");
        it->second = ricemap::smooth_savgol(it->second, 7, 3).values;
        paddy.push_back(std::move(p));
    }
    doc.windows = ricemap::detect_stage_transitions(paddy, ricemap::TransitionSpec::defaults(),
                                                    doc.season, district);
    return doc;
}

std::vector<ricemap::ReferencePolygon> refs_for_district(
    const std::vector<ricemap::ReferencePolygon>& all, const std::string& district,
    const ricemap::DistrictDictionary& dict) {
    std::vector<ricemap::ReferencePolygon> out;
    for (const auto& p : all) {
        if (dict.normalize(p.district_id) == district) {
            out.push_back(p);
            out.back().district_id = district;
        }
    }
    ricemap::require(!out.empty(), "no reference polygons for district " + district);
    return out;
}

std::map<ricemap::IndexKind, ricemap::IndexCube> all_index_cubes(
    const ricemap::ReflectanceCube& cube, const ricemap::DateRange& season, int workers) {
    std::vector<std::size_t> keep;
    for (std::size_t d = 0; d < cube.dates.size(); ++d) {
        if (season.contains(cube.dates[d])) keep.push_back(d);
    }
    ricemap::require(!keep.empty(), "no cube dates inside the season window");
    const ricemap::ReflectanceCube season_cube = cube.select_dates(keep);
    std::map<ricemap::IndexKind, ricemap::IndexCube> out;
    for (ricemap::IndexKind k : ricemap::all_index_kinds()) {
        out[k] = ricemap::compute_index(season_cube, k, workers);
    }
    return out;
}

int run_calibrate_district(const CalibrateArgs& args) {
    const auto dict = load_dictionary(args.districts_file);
    const std::string district = dict.normalize(args.district);

    auto cube = ricemap::read_cube(args.cube_dir);
    ricemap::require(dict.normalize(cube.district_id) == district,
                     "cube district '" + cube.district_id + "' does not match --district");

    WindowsDoc windows;
    if (!args.windows_file.empty()) {
        windows = load_windows(args.windows_file, district, dict);
    } else if (!args.trajectories_file.empty()) {
        windows = detect_windows_from_trajectories(args.trajectories_file, args.season_start,
                                                   args.season_end, district, dict);
    } else {
        throw ricemap::validation_error("calibrate needs --windows or --trajectories");
    }

    auto refs = refs_for_district(ricemap::read_reference_polygons(args.refs_file), district, dict);
    bool has_paddy = false, has_non = false;
    for (const auto& p : refs) (p.paddy ? has_paddy : has_non) = true;
    ricemap::require(has_paddy && has_non,
                     "reference polygons for " + district + " must contain both classes");

    const int workers = ricemap::resolve_worker_count();
    const auto cubes = all_index_cubes(cube, windows.season, workers);

    ricemap::OptimizeOptions opts;
    opts.with_tpa = args.with_tpa;
    opts.allow_nonstandard_durations = args.allow_nonstandard_durations;
    auto result = ricemap::optimize_district(refs, cubes, windows.windows, windows.season,
                                             district, opts);
    if (result.needs_manual_review) {
        std::string stages;
        for (const auto& s : result.unresolved_stages) stages += " " + s;
        ricemap::logging::warn("calibrate",
                               district + " needs manual review; unresolved stages:" + stages);
        result.calibration.notes = "needs-manual-review: unresolved stages:" + stages;
    }

    ricemap::write_calibration(result.calibration, args.out_path);
    ricemap::write_score_ledger(result.ledger, args.out_path + ".scores.csv");
    ricemap::logging::info("calibrate", "wrote " + args.out_path);
    return kExitOk;
}

// Cluster mode: --cube is a parent directory holding one cube directory per
// district. Produces one pooled calibration per cluster (and optionally the
// district-vs-cluster comparison report).
int run_calibrate_cluster(const CalibrateArgs& args) {
    const auto dict = load_dictionary(args.districts_file);
    ricemap::require(!args.clusters_file.empty(), "--mode cluster needs --clusters");
    const json jc = read_json_file(args.clusters_file, "cluster document");

    std::map<std::string, std::string> cluster_of; // canonical district -> cluster id
    for (const auto& [cid, members] : jc.at("clusters").items()) {
        ricemap::require(!members.empty(), "cluster '" + cid + "' has no member districts");
        for (const auto& m : members) {
            cluster_of[dict.normalize(m.get<std::string>())] = cid;
        }
    }

    // Discover per-district cubes under the parent directory.
    std::map<std::string, fs::path> cube_dirs;
    for (const auto& entry : fs::directory_iterator(args.cube_dir)) {
        if (!entry.is_directory() || !fs::exists(entry.path() / "manifest.json")) continue;
        const auto cube_manifest = read_json_file(entry.path() / "manifest.json", "cube manifest");
        cube_dirs[dict.normalize(cube_manifest.at("district").get<std::string>())] = entry.path();
    }
    ricemap::require(!cube_dirs.empty(), "no cube directories under " + args.cube_dir);

    const auto all_refs = ricemap::read_reference_polygons(args.refs_file);
    const int workers = ricemap::resolve_worker_count();

    std::vector<ricemap::DistrictRefData> data;
    for (const auto& [district, dir] : cube_dirs) {
        const auto it = cluster_of.find(district);
        ricemap::require(it != cluster_of.end(),
                         "cluster document does not assign district " + district);
        WindowsDoc windows = load_windows(args.windows_file, district, dict);
        ricemap::DistrictRefData d;
        d.district = district;
        d.refs = refs_for_district(all_refs, district, dict);
        d.index_cubes = all_index_cubes(ricemap::read_cube(dir), windows.season, workers);
        d.windows = windows.windows;
        d.season = windows.season;
        data.push_back(std::move(d));
    }

    fs::create_directories(args.out_path);
    ricemap::RunManifest manifest;
    manifest.command = "calibrate";
    manifest.started = ricemap::logging::utc_now_iso();
    manifest.add_input(args.refs_file);
    manifest.add_input(args.clusters_file);
    if (!args.windows_file.empty()) manifest.add_input(args.windows_file);

    // Pooled calibration per cluster: shared mean windows, pooled reference
    // samples, thresholds chosen exactly as in district mode.
    std::map<std::string, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < data.size(); ++i) {
        clusters[cluster_of.at(data[i].district)].push_back(i);
    }
    for (const auto& [cid, members] : clusters) {
        std::vector<const ricemap::StageWindows*> wptrs;
        for (std::size_t i : members) wptrs.push_back(&data[i].windows);
        const ricemap::StageWindows shared = ricemap::detail::mean_windows(wptrs);

        ricemap::RefStageSamples pooled;
        std::vector<double> pooled_sigmas[4];
        for (std::size_t i : members) {
            auto samples = ricemap::detail::samples_for(data[i], shared);
            for (ricemap::Stage st : ricemap::all_stages()) {
                auto& dst = pooled.by_stage[st];
                const auto& src = samples.by_stage.at(st);
                dst.insert(dst.end(), src.begin(), src.end());
                const auto sig = ricemap::detail::paddy_stage_sigmas(
                    data[i].refs, data[i].index_cubes.at(ricemap::IndexKind::NDVI),
                    shared.window(st));
                pooled_sigmas[std::size_t(st)].insert(pooled_sigmas[std::size_t(st)].end(),
                                                      sig.begin(), sig.end());
            }
        }

        ricemap::DistrictCalibration calib;
        calib.district_id = "cluster:" + cid;
        calib.season = data[members.front()].season;
        calib.windows = shared;
        calib.windows.district_id = calib.district_id;
        calib.allow_nonstandard_durations = true;
        std::vector<ricemap::ScoreLedgerRow> ledger;
        for (ricemap::Stage s : ricemap::all_stages()) {
            auto choice =
                ricemap::choose_stage_rule(s, pooled.by_stage.at(s), "cluster:" + cid);
            calib.rules[s] = choice.rule;
            ledger.insert(ledger.end(), choice.ledger.begin(), choice.ledger.end());
        }
        for (ricemap::Stage s : ricemap::all_stages()) {
            const auto& sig = pooled_sigmas[std::size_t(s)];
            calib.tsp.sigma_max[s] =
                sig.size() >= 5
                    ? std::min(0.25, std::max(0.05, ricemap::quantile(sig, 0.95)))
                    : 0.15;
        }
        calib.validate();
        const fs::path out = fs::path(args.out_path) / ("calibration_cluster_" + cid + ".json");
        ricemap::write_calibration(calib, out);
        ricemap::write_score_ledger(ledger, out.string() + ".scores.csv");
        ricemap::logging::info("calibrate", "wrote " + out.string());
    }

    if (!args.compare_out.empty()) {
        const auto report = ricemap::compare_modes(data, cluster_of);
        std::ofstream out(args.compare_out, std::ios::trunc);
        if (!out) throw ricemap::io_error("cannot write comparison report: " + args.compare_out);
        out << ricemap::compare_report_to_json(report).dump(2) << '\n';
        ricemap::logging::info("calibrate", "wrote comparison report " + args.compare_out);
    }

    manifest.finished = ricemap::logging::utc_now_iso();
    manifest.write(args.out_path);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// classify

struct ClassifyArgs {
    std::string cube_dir;
    std::string calib_file;
    std::string landcover_file;
    std::string water_perm_file;
    std::string water_seas_file;
    std::string out_dir;
    bool pgm = false;
    bool audit_composites = false;
    int threads = 0;
    std::string districts_file;
};

int run_classify(const ClassifyArgs& args) {
    const auto dict = load_dictionary(args.districts_file);
    ricemap::RunManifest manifest;
    manifest.command = "classify";
    manifest.started = ricemap::logging::utc_now_iso();
    StageTimer timer(manifest);

    auto cube = timer.run("read_cube", [&] { return ricemap::read_cube(args.cube_dir); });
    auto calib = ricemap::read_calibration(args.calib_file);
    manifest.add_input(args.cube_dir);
    manifest.calibration_digest = ricemap::digest_file(args.calib_file);

    const std::string cube_district = dict.normalize(cube.district_id);
    const std::string calib_district = dict.normalize(calib.district_id);
    ricemap::require(cube_district == calib_district,
                     "district mismatch: cube is " + cube_district + ", calibration is " +
                         calib_district);

    ricemap::ExclusionInputs exclusions;
    if (!args.landcover_file.empty()) {
        exclusions.landcover = ricemap::read_bare_plane(args.landcover_file, cube.grid);
        manifest.add_input(args.landcover_file);
    } else {
        ricemap::logging::info("classify", "no landcover raster; land-cover exclusion skipped");
    }
    if (!args.water_perm_file.empty()) {
        exclusions.water_permanent = ricemap::read_bare_plane(args.water_perm_file, cube.grid);
        manifest.add_input(args.water_perm_file);
    } else {
        ricemap::logging::info("classify", "no permanent-water raster; exclusion skipped");
    }
    if (!args.water_seas_file.empty()) {
        exclusions.water_seasonal = ricemap::read_bare_plane(args.water_seas_file, cube.grid);
        manifest.add_input(args.water_seas_file);
    }

    const int workers = ricemap::resolve_worker_count(args.threads);
    manifest.threads = workers;
    auto result = timer.run("classify", [&] {
        return ricemap::classify_district(cube, calib, exclusions, workers);
    });

    fs::create_directories(args.out_dir);
    const fs::path out_dir(args.out_dir);
    timer.run("write_outputs", [&] {
        std::ofstream gj(out_dir / "grid.json", std::ios::trunc);
        gj << grid_to_json(cube.grid, cube_district).dump(2) << '\n';

        write_mask_outputs(out_dir, "final_mask", result.final_mask, args.pgm);
        write_mask_outputs(out_dir, "combined_mask", result.combined, args.pgm);
        write_mask_outputs(out_dir, "refined_mask", result.refined, args.pgm);
        for (const auto& [stage, mask] : result.stage_masks) {
            write_mask_outputs(out_dir, std::string("stage_") + ricemap::stage_name(stage) +
                                            "_mask",
                               mask, args.pgm);
        }
        for (const auto& [stage, mask] : result.rule_masks) {
            write_mask_outputs(out_dir, std::string("rule_") + ricemap::stage_name(stage) +
                                            "_mask",
                               mask, false);
        }
        for (const auto& [stage, mask] : result.tsp_masks) {
            write_mask_outputs(out_dir, std::string("tsp_") + ricemap::stage_name(stage) +
                                            "_mask",
                               mask, false);
        }
        if (result.tpa_mask) write_mask_outputs(out_dir, "tpa_mask", *result.tpa_mask, false);

        if (args.audit_composites) {
            fs::create_directories(out_dir / "composites");
            for (const auto& [key, comp] : result.composites.by_key) {
                const std::string base = std::string(ricemap::stage_name(comp.stage)) + "_" +
                                         ricemap::index_name(comp.index);
                ricemap::write_bare_plane(out_dir / "composites" / (base + ".f32"), comp.mean);
            }
        }

        json diag;
        diag["district"] = cube_district;
        diag["counters"] = result.diag.counters;
        diag["messages"] = result.diag.messages;
        diag["area_ha"] = ricemap::area_from_mask(result.final_mask, cube.grid.pixel_size);
        json resolutions;
        std::set<int> seen;
        for (const auto& [key, comp] : result.composites.by_key) {
            if (!seen.insert(int(comp.index)).second) continue;
            resolutions[ricemap::index_name(comp.index)] =
                ricemap::align_to_coarsest(cube, comp.index);
        }
        diag["index_computation_resolution_m"] = resolutions;
        std::ofstream dj(out_dir / "diagnostics.json", std::ios::trunc);
        dj << diag.dump(2) << '\n';
    });

    manifest.finished = ricemap::logging::utc_now_iso();
    manifest.write(out_dir);
    ricemap::logging::info("classify", "final mask area " +
                                           std::to_string(ricemap::area_from_mask(
                                               result.final_mask, cube.grid.pixel_size)) +
                                           " ha");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// validate

struct ValidateArgs {
    std::string masks_glob;
    std::string refs_file;
    std::string official_file;
    std::uint64_t seed = 0;
    std::string out_dir;
    int points = 500;
    double paddy_weight = 1.5;
    std::string official_source = "DES";
    std::string districts_file;
};

struct OfficialRow {
    std::string district;
    double official_ha = 0.0;
    std::string source;
};

std::vector<OfficialRow> read_official_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ricemap::io_error("cannot read official statistics: " + path.string());
    std::string line;
    ricemap::require(bool(std::getline(in, line)), "official CSV is empty");
    std::vector<OfficialRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string district, ha, source;
        std::getline(ss, district, ',');
        std::getline(ss, ha, ',');
        std::getline(ss, source, ',');
        ricemap::require(!district.empty() && !ha.empty(),
                         "official CSV line " + std::to_string(lineno) + ": need district,ha");
        ricemap::require(source == "DES" || source == "TDA",
                         "official CSV line " + std::to_string(lineno) +
                             ": source must be DES or TDA");
        rows.push_back({district, std::stod(ha), source});
    }
    return rows;
}

int run_validate(const ValidateArgs& args) {
    const auto dict = load_dictionary(args.districts_file);
    ricemap::RunManifest manifest;
    manifest.command = "validate";
    manifest.started = ricemap::logging::utc_now_iso();
    manifest.seed = args.seed;
    manifest.has_seed = true;
    StageTimer timer(manifest);

    auto mask_dirs = expand_glob(args.masks_glob);
    std::vector<fs::path> usable;
    for (const auto& p : mask_dirs) {
        if (fs::is_directory(p) && fs::exists(fs::path(p) / "grid.json")) usable.push_back(p);
    }
    ricemap::require(!usable.empty(), "no mask directories match " + args.masks_glob);

    struct DistrictMask {
        std::string district;
        ricemap::GeoGrid grid;
        ricemap::BinaryMask mask;
    };
    std::map<std::string, DistrictMask> masks; // canonical district -> mask, sorted
    for (const auto& dir : usable) {
        const json gj = read_json_file(fs::path(dir) / "grid.json", "grid document");
        DistrictMask dm;
        dm.district = dict.normalize(gj.at("district").get<std::string>());
        dm.grid = grid_from_json(gj);
        dm.mask.grid = dm.grid;
        dm.mask.values = ricemap::read_bare_plane(fs::path(dir) / "final_mask.f32", dm.grid);
        manifest.add_input(dir.string());
        ricemap::require(masks.count(dm.district) == 0,
                         "two mask directories claim district " + dm.district +
                             "; narrow the --masks pattern");
        masks[dm.district] = std::move(dm);
    }

    const auto all_refs = ricemap::read_reference_polygons(args.refs_file);
    manifest.add_input(args.refs_file);
    const auto official_rows = read_official_csv(args.official_file);
    manifest.add_input(args.official_file);

    std::vector<ricemap::SamplePoint> all_points;
    std::vector<std::string> warnings;
    std::map<std::string, double> mapped_areas;

    timer.run("stratify", [&] {
        for (auto& [district, dm] : masks) {
            std::vector<ricemap::ReferencePolygon> refs;
            for (const auto& p : all_refs) {
                if (dict.normalize(p.district_id) != district) continue;
                refs.push_back(p);
                refs.back().district_id = district;
                ricemap::resolve_polygon_pixels(refs.back(), dm.grid);
            }
            if (refs.empty()) {
                warnings.push_back("district " + district + ": no reference polygons; skipped");
                continue;
            }
            ricemap::StratifyOptions opts;
            opts.total_points = args.points;
            opts.paddy_weight = args.paddy_weight;
            // Per-district seed derived from the run seed and the name, so the
            // point set does not depend on glob order.
            const std::uint64_t district_seed =
                args.seed ^ ricemap::fnv1a64(district.data(), district.size());
            auto result = ricemap::stratify_samples(refs, dm.mask, opts, district_seed);
            warnings.insert(warnings.end(), result.warnings.begin(), result.warnings.end());
            all_points.insert(all_points.end(), result.points.begin(), result.points.end());
        }
    });

    for (const auto& [district, dm] : masks) {
        mapped_areas[district] = ricemap::area_from_mask(dm.mask, dm.grid.pixel_size);
    }

    std::map<std::string, double> official;
    for (const auto& row : official_rows) {
        if (row.source != args.official_source) continue;
        official[dict.normalize(row.district)] = row.official_ha; // unknown name -> error
    }

    std::optional<ricemap::AreaStats> areas;
    if (masks.size() >= 3) {
        areas = ricemap::area_stats(mapped_areas, official, dict);
    } else {
        warnings.push_back("fewer than 3 districts; area regression skipped");
    }

    const auto table = ricemap::confusion(all_points);
    const auto report = ricemap::build_report(table, mapped_areas, areas, warnings);

    fs::create_directories(args.out_dir);
    const fs::path out_dir(args.out_dir);
    timer.run("write_outputs", [&] {
        std::ofstream rj(out_dir / "report.json", std::ios::trunc);
        rj << ricemap::report_to_json(report).dump(2) << '\n';
        ricemap::write_report_csv(report, out_dir / "report.csv");
        ricemap::write_points_csv(all_points, out_dir / "points.csv");
    });

    manifest.finished = ricemap::logging::utc_now_iso();
    manifest.write(out_dir);
    ricemap::logging::info("validate", "validated " + std::to_string(masks.size()) +
                                           " districts, " + std::to_string(all_points.size()) +
                                           " points");
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Phenology-driven rice paddy mapping pipeline"};
    app.require_subcommand(1);

    PreprocessArgs pre;
    auto* cmd_pre = app.add_subcommand("preprocess",
                                       "Scene screening, cloud masking, normalization");
    cmd_pre->add_option("--cube", pre.cube_dir, "Input cube directory")->required();
    cmd_pre->add_option("--qa", pre.qa_dir, "QA cube directory (band QA)");
    cmd_pre->add_option("--scale", pre.scale, "Reflectance divisor (default 10000)");
    cmd_pre->add_option("--max-cloud", pre.max_cloud,
                        "Drop dates with cloud fraction strictly above this (default 0.8)");
    cmd_pre->add_option("--out", pre.out_dir, "Output cube directory")->required();
    cmd_pre->add_option("--config", pre.config,
                        "key=value settings (qa.cloud_bit, qa.cirrus_bit)");

    CalibrateArgs cal;
    auto* cmd_cal = app.add_subcommand("calibrate", "Derive district calibration from references");
    cmd_cal->add_option("--cube", cal.cube_dir,
                        "Cube directory (district mode) or parent of per-district cubes "
                        "(cluster mode)")
        ->required();
    cmd_cal->add_option("--refs", cal.refs_file, "Reference polygons (GeoJSON)")->required();
    cmd_cal->add_option("--district", cal.district, "District name (district mode)");
    cmd_cal->add_option("--mode", cal.mode, "district|cluster (default district)");
    cmd_cal->add_option("--clusters", cal.clusters_file, "Cluster membership JSON");
    cmd_cal->add_option("--windows", cal.windows_file, "Season + stage windows JSON");
    cmd_cal->add_option("--trajectories", cal.trajectories_file,
                        "Reference trajectory CSV for transition detection");
    cmd_cal->add_option("--season-start", cal.season_start, "Season start (with --trajectories)");
    cmd_cal->add_option("--season-end", cal.season_end, "Season end (with --trajectories)");
    cmd_cal->add_flag("--with-tpa", cal.with_tpa, "Derive temporal pattern thresholds");
    cmd_cal->add_flag("--allow-nonstandard-durations", cal.allow_nonstandard_durations,
                      "Accept stage windows outside the 17-64 day range");
    cmd_cal->add_option("--out", cal.out_path,
                        "Calibration file (district mode) or directory (cluster mode)")
        ->required();
    cmd_cal->add_option("--compare-out", cal.compare_out,
                        "Also write the district-vs-cluster comparison report (cluster mode)");
    cmd_cal->add_option("--districts", cal.districts_file, "District dictionary TSV");

    ClassifyArgs cls;
    auto* cmd_cls = app.add_subcommand("classify", "Produce the district paddy mask");
    cmd_cls->add_option("--cube", cls.cube_dir, "Preprocessed cube directory")->required();
    cmd_cls->add_option("--calib", cls.calib_file, "District calibration JSON")->required();
    cmd_cls->add_option("--landcover", cls.landcover_file, "Land-cover class plane (.f32)");
    cmd_cls->add_option("--water-perm", cls.water_perm_file, "Permanent water plane (.f32)");
    cmd_cls->add_option("--water-seas", cls.water_seas_file, "Seasonal water plane (.f32)");
    cmd_cls->add_option("--out", cls.out_dir, "Output directory")->required();
    cmd_cls->add_flag("--pgm", cls.pgm, "Also write PGM previews of the masks");
    cmd_cls->add_flag("--audit-composites", cls.audit_composites,
                      "Write stage composites for audit");
    cmd_cls->add_option("--threads", cls.threads, "Worker threads (or PHENORICE_THREADS)");
    cmd_cls->add_option("--districts", cls.districts_file, "District dictionary TSV");

    ValidateArgs val;
    auto* cmd_val = app.add_subcommand("validate", "Accuracy assessment and area reconciliation");
    cmd_val->add_option("--masks", val.masks_glob, "Glob of classify output directories")
        ->required();
    cmd_val->add_option("--refs", val.refs_file, "Reference polygons (GeoJSON)")->required();
    cmd_val->add_option("--official", val.official_file,
                        "Official statistics CSV (district,official_ha,source)")
        ->required();
    cmd_val->add_option("--seed", val.seed, "Sampling seed")->required();
    cmd_val->add_option("--out", val.out_dir, "Output directory")->required();
    cmd_val->add_option("--points", val.points, "Validation points per district (default 500)");
    cmd_val->add_option("--paddy-weight", val.paddy_weight,
                        "Paddy stratum up-weight (default 1.5)");
    cmd_val->add_option("--official-source", val.official_source,
                        "Which official source to reconcile against: DES or TDA");
    cmd_val->add_option("--districts", val.districts_file, "District dictionary TSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (cmd_pre->parsed()) return run_preprocess(pre);
        if (cmd_cal->parsed()) {
            if (cal.mode == "district") {
                ricemap::require(!cal.district.empty(), "--district is required in district mode");
                return run_calibrate_district(cal);
            }
            if (cal.mode == "cluster") return run_calibrate_cluster(cal);
            throw ricemap::validation_error("--mode must be district or cluster");
        }
        if (cmd_cls->parsed()) return run_classify(cls);
        if (cmd_val->parsed()) return run_validate(val);
    } catch (const ricemap::internal_error& e) {
        ricemap::logging::error("ricemap", std::string("internal invariant violation: ") +
                                               e.what());
        return kExitInternal;
    } catch (const std::exception& e) {
        ricemap::logging::error("ricemap", e.what());
        return kExitValidation;
    }
    return kExitOk;
}
