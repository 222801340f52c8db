#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ricemap/cube.hpp"
#include "ricemap/date.hpp"
#include "ricemap/error.hpp"
#include "ricemap/grid.hpp"
#include "ricemap/indices.hpp"

namespace ricemap {

enum class Stage { LandPreparation, Vegetative, Reproductive, Ripening };

inline const std::array<Stage, 4>& all_stages() {
    static const std::array<Stage, 4> s = {Stage::LandPreparation, Stage::Vegetative,
                                           Stage::Reproductive, Stage::Ripening};
    return s;
}

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::LandPreparation: return "land_preparation";
        case Stage::Vegetative: return "vegetative";
        case Stage::Reproductive: return "reproductive";
        case Stage::Ripening: return "ripening";
    }
    throw internal_error("unhandled stage");
}

inline Stage stage_from_name(const std::string& name) {
    for (Stage s : all_stages()) {
        if (name == stage_name(s)) return s;
    }
    throw validation_error("unknown stage name: '" + name + "'");
}

// Durations outside this band are suspicious for a single Rabi cycle and are
// rejected unless the configuration explicitly allows them.
inline constexpr int kMinStageDays = 17;
inline constexpr int kMaxStageDays = 64;

struct StageWindows {
    std::string district_id;
    std::array<DateRange, 4> windows; // indexed by Stage

    const DateRange& window(Stage s) const { return windows[std::size_t(s)]; }
    DateRange& window(Stage s) { return windows[std::size_t(s)]; }

    void validate(bool allow_nonstandard_durations = false) const {
        for (Stage s : all_stages()) {
            window(s).validate(std::string("stage window ") + stage_name(s));
        }
        for (std::size_t i = 1; i < windows.size(); ++i) {
            if (!(windows[i - 1].end < windows[i].start)) {
                throw validation_error(std::string("stage windows overlap or are out of order: ") +
                                       stage_name(Stage(i - 1)) + " / " + stage_name(Stage(i)));
            }
        }
        if (allow_nonstandard_durations) return;
        for (Stage s : all_stages()) {
            const int d = window(s).days();
            if (d < kMinStageDays || d > kMaxStageDays) {
                throw validation_error(std::string("stage ") + stage_name(s) + " lasts " +
                                       std::to_string(d) +
                                       " days, outside the expected 17-64 day range (set "
                                       "allow_nonstandard_durations to override)");
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Reference trajectories (exported spectral profiles of digitized fields)

struct FieldProfile {
    std::string field_id;
    std::string klass; // "paddy" or "non_paddy"
    std::string district;
    std::vector<Date> dates;
    std::map<std::string, std::vector<double>> series; // index name -> values
};

// CSV columns: field_id,date,NDVI,MNDWI,LSWI,EVI,SAVI,class,district
inline std::vector<FieldProfile> read_reference_profiles(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read reference profile CSV: " + path);

    static const std::array<const char*, 5> index_cols = {"NDVI", "MNDWI", "LSWI", "EVI", "SAVI"};
    std::string line;
    if (!std::getline(in, line)) throw validation_error("reference CSV is empty: " + path);
    {
        std::string expected = "field_id,date,NDVI,MNDWI,LSWI,EVI,SAVI,class,district";
        std::string got = line;
        if (!got.empty() && got.back() == '\r') got.pop_back();
        require(got == expected, "reference CSV header must be '" + expected + "'");
    }

    std::map<std::string, FieldProfile> by_field;
    std::vector<std::string> order;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back(cell);
        if (cols.size() != 9) {
            throw validation_error("reference CSV line " + std::to_string(lineno) +
                                   ": expected 9 columns");
        }
        auto [it, inserted] = by_field.try_emplace(cols[0]);
        FieldProfile& f = it->second;
        if (inserted) {
            f.field_id = cols[0];
            f.klass = cols[7];
            f.district = cols[8];
            order.push_back(cols[0]);
        }
        f.dates.push_back(Date::parse(cols[1]));
        for (std::size_t i = 0; i < index_cols.size(); ++i) {
            const std::string& v = cols[2 + i];
            double fv = double(kNodata);
            if (!v.empty() && v != "NA" && v != "nan" && v != "NaN") fv = std::stod(v);
            f.series[index_cols[i]].push_back(fv);
        }
    }

    std::vector<FieldProfile> out;
    out.reserve(order.size());
    for (const auto& id : order) {
        FieldProfile f = by_field[id];
        // sort observations by date
        std::vector<std::size_t> perm(f.dates.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        std::sort(perm.begin(), perm.end(),
                  [&](std::size_t a, std::size_t b) { return f.dates[a] < f.dates[b]; });
        FieldProfile sorted = f;
        for (std::size_t i = 0; i < perm.size(); ++i) {
            sorted.dates[i] = f.dates[perm[i]];
            for (auto& [name, vals] : sorted.series) vals[i] = f.series[name][perm[i]];
        }
        out.push_back(std::move(sorted));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stage transition detection

// One inter-stage NDVI threshold. Absolute crossings compare against `level`;
// the senescence transition is relative to each field's own peak.
struct TransitionSpec {
    double level = 0.0;
    bool upward = true;
    bool relative_to_peak = false;
    double peak_offset = 0.0; // used when relative_to_peak

    static std::array<TransitionSpec, 3> defaults() {
        return {TransitionSpec{0.30, true, false, 0.0}, TransitionSpec{0.45, true, false, 0.0},
                TransitionSpec{0.0, false, true, 0.10}};
    }
};

struct TransitionDiagnostics {
    std::array<std::vector<std::string>, 3> multi_crossing_fields;
    std::array<Date, 3> transition_dates;
};

namespace detail {

struct FieldSeriesView {
    const std::string* id;
    const std::vector<Date>* dates;
    const std::vector<double>* values;
};

// First date at which the field satisfies the transition condition; multiple
// enter/exit flips are reported so noisy fields can be audited.
inline std::optional<Date> first_crossing(const FieldSeriesView& f, const TransitionSpec& spec,
                                          bool& multi) {
    multi = false;
    const auto& vals = *f.values;
    const auto& dates = *f.dates;

    if (spec.relative_to_peak) {
        double peak = -std::numeric_limits<double>::infinity();
        std::size_t peak_idx = 0;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (std::isnan(vals[i])) continue;
            if (vals[i] > peak) {
                peak = vals[i];
                peak_idx = i;
            }
        }
        if (!std::isfinite(peak)) return std::nullopt;
        const double level = peak - spec.peak_offset;
        std::optional<Date> hit;
        int flips = 0;
        bool below = false;
        for (std::size_t i = peak_idx; i < vals.size(); ++i) {
            if (std::isnan(vals[i])) continue;
            const bool now_below = vals[i] <= level;
            if (now_below && !below) {
                ++flips;
                if (!hit) hit = dates[i];
            }
            below = now_below;
        }
        multi = flips > 1;
        return hit;
    }

    std::optional<Date> hit;
    int flips = 0;
    bool crossed = false;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (std::isnan(vals[i])) continue;
        const bool now = spec.upward ? (vals[i] >= spec.level) : (vals[i] <= spec.level);
        if (now && !crossed) {
            ++flips;
            if (!hit) hit = dates[i];
        }
        crossed = now;
    }
    multi = flips > 1;
    return hit;
}

} // namespace detail

// Transition date = earliest date by which strictly more than half of the
// reference fields have crossed. Windows partition the season at the three
// transition dates.
inline StageWindows detect_stage_transitions(const std::vector<FieldProfile>& fields,
                                             const std::array<TransitionSpec, 3>& specs,
                                             const DateRange& season,
                                             const std::string& district_id,
                                             TransitionDiagnostics* diagnostics = nullptr) {
    require(fields.size() >= 2, "transition detection needs at least 2 reference fields");
    season.validate("season");
    // absolute upward levels must rise with the stage sequence
    for (std::size_t t = 1; t < specs.size(); ++t) {
        const auto& prev = specs[t - 1];
        const auto& cur = specs[t];
        if (!prev.relative_to_peak && !cur.relative_to_peak && prev.upward && cur.upward) {
            require(prev.level < cur.level,
                    "transition thresholds are not ordered with the stage sequence");
        }
    }

    // observations outside the season cannot carry a crossing
    std::vector<FieldProfile> clipped;
    clipped.reserve(fields.size());
    for (const auto& f : fields) {
        auto it = f.series.find("NDVI");
        require(it != f.series.end(), "field " + f.field_id + " has no NDVI series");
        FieldProfile c;
        c.field_id = f.field_id;
        for (std::size_t i = 0; i < f.dates.size(); ++i) {
            if (!season.contains(f.dates[i])) continue;
            c.dates.push_back(f.dates[i]);
            c.series["NDVI"].push_back(it->second[i]);
        }
        clipped.push_back(std::move(c));
    }
    std::vector<detail::FieldSeriesView> views;
    for (const auto& f : clipped) {
        views.push_back({&f.field_id, &f.dates, &f.series.at("NDVI")});
    }

    const std::size_t n = views.size();
    const std::size_t needed = n / 2 + 1; // strictly more than 50%

    std::array<Date, 3> transitions;
    for (std::size_t t = 0; t < specs.size(); ++t) {
        std::vector<Date> crossings;
        for (const auto& v : views) {
            bool multi = false;
            const auto hit = detail::first_crossing(v, specs[t], multi);
            if (multi && diagnostics) diagnostics->multi_crossing_fields[t].push_back(*v.id);
            if (hit) crossings.push_back(*hit);
        }
        if (crossings.size() < needed) {
            throw validation_error(std::string("unresolved transition into stage ") +
                                   stage_name(Stage(t + 1)) + ": only " +
                                   std::to_string(crossings.size()) + " of " + std::to_string(n) +
                                   " fields crossed (need >50%)");
        }
        std::sort(crossings.begin(), crossings.end());
        transitions[t] = crossings[needed - 1];
        if (diagnostics) diagnostics->transition_dates[t] = transitions[t];
    }

    for (std::size_t t = 1; t < transitions.size(); ++t) {
        if (!(transitions[t - 1] < transitions[t])) {
            throw validation_error("detected transitions are out of order; thresholds are "
                                   "inconsistent with the stage sequence");
        }
    }

    StageWindows w;
    w.district_id = district_id;
    w.window(Stage::LandPreparation) = {season.start, transitions[0].plus_days(-1)};
    w.window(Stage::Vegetative) = {transitions[0], transitions[1].plus_days(-1)};
    w.window(Stage::Reproductive) = {transitions[1], transitions[2].plus_days(-1)};
    w.window(Stage::Ripening) = {transitions[2], season.end};
    w.validate(/*allow_nonstandard_durations=*/true);
    return w;
}

// ---------------------------------------------------------------------------
// Stage composites

// Per-pixel mean of valid observations of one index inside one stage window.
// The count plane records contributors; mean is nodata exactly where count=0.
struct StageComposite {
    std::string district_id;
    Stage stage = Stage::LandPreparation;
    IndexKind index = IndexKind::NDVI;
    GeoGrid grid;
    Plane<float> mean;
    Plane<std::int32_t> count;
};

inline StageComposite build_stage_composite(const IndexCube& cube, const StageWindows& windows,
                                            Stage stage, const std::string& district_id = "") {
    const DateRange& win = windows.window(stage);
    std::vector<std::size_t> in_window;
    for (std::size_t d = 0; d < cube.dates.size(); ++d) {
        if (win.contains(cube.dates[d])) in_window.push_back(d);
    }
    if (in_window.empty()) {
        throw validation_error(std::string("empty stage window: no cube dates inside ") +
                               stage_name(stage) + " [" + win.start.to_string() + " .. " +
                               win.end.to_string() + "]");
    }

    StageComposite comp;
    comp.district_id = district_id.empty() ? windows.district_id : district_id;
    comp.stage = stage;
    comp.index = index_from_name(cube.index_name);
    comp.grid = cube.grid;
    comp.mean = Plane<float>(cube.grid.height, cube.grid.width, kNodata);
    comp.count = Plane<std::int32_t>(cube.grid.height, cube.grid.width, 0);

    const std::size_t psize = cube.plane_size();
    for (std::size_t i = 0; i < psize; ++i) {
        double sum = 0.0;
        std::int32_t cnt = 0;
        for (std::size_t d : in_window) { // fixed date order keeps sums bit-stable
            const float v = cube.values[cube.plane_offset(d) + i];
            if (cube.is_nodata_value(v)) continue;
            sum += v;
            ++cnt;
        }
        comp.count.data()[i] = cnt;
        comp.mean.data()[i] = (cnt > 0) ? float(sum / cnt) : kNodata;
    }
    return comp;
}

} // namespace ricemap
