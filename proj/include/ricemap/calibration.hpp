#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ricemap/classifier.hpp"
#include "ricemap/districts.hpp"
#include "ricemap/error.hpp"
#include "ricemap/grid.hpp"
#include "ricemap/indices.hpp"
#include "ricemap/phenology.hpp"
#include "ricemap/stats.hpp"

namespace ricemap {

// ---------------------------------------------------------------------------
// Reference polygons

struct ReferencePolygon {
    std::string polygon_id;
    std::string district_id;
    bool paddy = false;
    double area_ha = 0.0;
    std::vector<std::pair<double, double>> ring; // outer ring, map coordinates
    std::vector<std::pair<int, int>> pixels;     // (row, col); resolved or explicit

    void validate() const {
        require(area_ha > 0.0, "reference polygon " + polygon_id + ": area_ha must be > 0");
        require(!ring.empty() || !pixels.empty(),
                "reference polygon " + polygon_id + ": needs a geometry or a pixel list");
    }
};

namespace detail {

inline bool point_in_ring(double x, double y, const std::vector<std::pair<double, double>>& ring) {
    bool inside = false;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const auto [xi, yi] = ring[i];
        const auto [xj, yj] = ring[j];
        const bool crosses = (yi > y) != (yj > y);
        if (crosses && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
    }
    return inside;
}

} // namespace detail

// Fills `pixels` with every grid cell whose center falls inside the ring.
inline void resolve_polygon_pixels(ReferencePolygon& poly, const GeoGrid& grid) {
    if (!poly.pixels.empty()) {
        for (const auto& [r, c] : poly.pixels) {
            require(r >= 0 && r < grid.height && c >= 0 && c < grid.width,
                    "reference polygon " + poly.polygon_id + ": pixel outside the grid");
        }
        return;
    }
    double min_x = poly.ring[0].first, max_x = min_x;
    double min_y = poly.ring[0].second, max_y = min_y;
    for (const auto& [x, y] : poly.ring) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
    }
    const int c0 = std::max(0, int(std::floor((min_x - grid.origin_x) / grid.pixel_size)));
    const int c1 = std::min(grid.width - 1, int(std::ceil((max_x - grid.origin_x) / grid.pixel_size)));
    const int r0 = std::max(0, int(std::floor((grid.origin_y - max_y) / grid.pixel_size)));
    const int r1 = std::min(grid.height - 1, int(std::ceil((grid.origin_y - min_y) / grid.pixel_size)));
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            if (detail::point_in_ring(grid.center_x(c), grid.center_y(r), poly.ring)) {
                poly.pixels.emplace_back(r, c);
            }
        }
    }
    require(!poly.pixels.empty(),
            "reference polygon " + poly.polygon_id + ": no pixel center falls inside");
}

// GeoJSON FeatureCollection with properties {class, district, area_ha} and an
// optional explicit "pixels" list ([[row,col],...]) overriding the geometry.
inline std::vector<ReferencePolygon> read_reference_polygons(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read reference polygons: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("reference GeoJSON parse error: " + std::string(e.what()));
    }

    require(j.value("type", "") == "FeatureCollection",
            "reference file must be a GeoJSON FeatureCollection");
    std::vector<ReferencePolygon> out;
    int n = 0;
    for (const auto& feature : j.at("features")) {
        ++n;
        ReferencePolygon poly;
        const auto& props = feature.at("properties");
        poly.polygon_id = props.contains("id") ? props.at("id").get<std::string>()
                                               : "feature-" + std::to_string(n);
        const std::string klass = props.at("class").get<std::string>();
        if (klass == "paddy") {
            poly.paddy = true;
        } else if (klass == "non_paddy") {
            poly.paddy = false;
        } else {
            throw validation_error("polygon " + poly.polygon_id + ": class must be paddy or "
                                   "non_paddy, got '" + klass + "'");
        }
        poly.district_id = props.at("district").get<std::string>();
        poly.area_ha = props.at("area_ha").get<double>();
        if (props.contains("pixels")) {
            for (const auto& px : props.at("pixels")) {
                poly.pixels.emplace_back(px.at(0).get<int>(), px.at(1).get<int>());
            }
        } else {
            const auto& geom = feature.at("geometry");
            const std::string gtype = geom.value("type", "");
            require(gtype == "Polygon", "polygon " + poly.polygon_id +
                                            ": only Polygon geometry is supported, got '" +
                                            gtype + "'");
            for (const auto& pt : geom.at("coordinates").at(0)) {
                poly.ring.emplace_back(pt.at(0).get<double>(), pt.at(1).get<double>());
            }
        }
        poly.validate();
        out.push_back(std::move(poly));
    }
    require(!out.empty(), "reference file has no features");
    return out;
}

// ---------------------------------------------------------------------------
// Candidate ranges and scores

struct PercentileRange {
    enum class Label { Broad, Interquartile, Custom };
    Label label = Label::Broad;
    double low = 10.0;  // percent
    double high = 90.0; // percent

    static PercentileRange broad() { return {Label::Broad, 10.0, 90.0}; }
    static PercentileRange interquartile() { return {Label::Interquartile, 25.0, 75.0}; }
    static PercentileRange custom(double lo, double hi) { return {Label::Custom, lo, hi}; }

    const char* name() const {
        switch (label) {
            case Label::Broad: return "broad";
            case Label::Interquartile: return "interquartile";
            case Label::Custom: return "custom";
        }
        return "?";
    }

    void validate() const {
        require(low >= 0.0 && high <= 100.0 && low < high,
                "percentile range: need 0 <= low < high <= 100");
    }
};

struct CandidateScore {
    double sensitivity = 0.0;
    double specificity = 0.0;
    double balance = 0.0; // (sensitivity + specificity) / 2
    std::int64_t tp = 0, fn = 0, tn = 0, fp = 0;
    std::int64_t skipped = 0; // reference pixels with nodata in a required index
};

// Percentile bounds of the paddy-class sample distribution.
inline RangeBound derive_bounds(const std::vector<double>& paddy_values, IndexKind index,
                                const PercentileRange& range) {
    range.validate();
    require(paddy_values.size() >= 10,
            std::string("derive_bounds(") + index_name(index) + "): need at least 10 paddy "
            "samples, got " + std::to_string(paddy_values.size()));
    std::vector<double> sorted = paddy_values;
    std::sort(sorted.begin(), sorted.end());
    RangeBound b;
    b.index = index;
    b.min = quantile_sorted(sorted, range.low / 100.0);
    b.max = quantile_sorted(sorted, range.high / 100.0);
    return b;
}

// One labeled reference pixel with its per-index stage-composite values.
struct RefSampleRow {
    bool paddy = false;
    std::array<float, 5> values; // indexed by IndexKind
    std::string district;
    std::string polygon_id;
};

struct RefStageSamples {
    std::map<Stage, std::vector<RefSampleRow>> by_stage;
};

inline RefStageSamples collect_reference_samples(const std::vector<ReferencePolygon>& polygons,
                                                 const CompositeSet& composites,
                                                 const std::vector<Stage>& stages) {
    RefStageSamples out;
    for (Stage s : stages) {
        auto& rows = out.by_stage[s];
        for (const auto& poly : polygons) {
            for (const auto& [r, c] : poly.pixels) {
                RefSampleRow row;
                row.paddy = poly.paddy;
                row.district = poly.district_id;
                row.polygon_id = poly.polygon_id;
                for (IndexKind k : all_index_kinds()) {
                    row.values[std::size_t(k)] = composites.has(s, k)
                                                     ? composites.get(s, k).mean.at(r, c)
                                                     : kNodata;
                }
                rows.push_back(std::move(row));
            }
        }
    }
    return out;
}

namespace detail {

inline bool rule_passes_row(const StageRule& rule, const RefSampleRow& row, bool& usable) {
    usable = true;
    for (IndexKind k : rule.required_indices()) {
        if (std::isnan(row.values[std::size_t(k)])) {
            usable = false;
            return false;
        }
    }
    auto value_of = [&](IndexKind k) { return double(row.values[std::size_t(k)]); };
    for (const auto& b : rule.bounds) {
        if (!b.pass(value_of(b.index))) return false;
    }
    if (rule.method == RuleMethod::RatioBased) {
        for (const auto& r : rule.ratios) {
            if (!r.pass(value_of(r.a), value_of(r.b))) return false;
        }
    }
    if (rule.method == RuleMethod::LswiEvi) {
        return value_of(IndexKind::LSWI) >= value_of(IndexKind::EVI) - kLswiEviOffset;
    }
    return true;
}

} // namespace detail

// Sensitivity = caught paddy / actual paddy; specificity = rejected non-paddy
// / actual non-paddy; balance is their arithmetic mean (balanced accuracy).
inline CandidateScore score_candidate(const StageRule& rule,
                                      const std::vector<RefSampleRow>& rows) {
    bool saw_paddy = false, saw_non_paddy = false;
    for (const auto& row : rows) (row.paddy ? saw_paddy : saw_non_paddy) = true;
    require(saw_paddy && saw_non_paddy,
            "score_candidate: reference set must contain both classes");

    CandidateScore s;
    for (const auto& row : rows) {
        bool usable = true;
        const bool predicted = detail::rule_passes_row(rule, row, usable);
        if (!usable) {
            ++s.skipped;
            continue;
        }
        if (row.paddy) {
            (predicted ? s.tp : s.fn)++;
        } else {
            (predicted ? s.fp : s.tn)++;
        }
    }
    const std::int64_t actual_paddy = s.tp + s.fn;
    const std::int64_t actual_non = s.tn + s.fp;
    s.sensitivity = actual_paddy > 0 ? double(s.tp) / double(actual_paddy) : 0.0;
    s.specificity = actual_non > 0 ? double(s.tn) / double(actual_non) : 0.0;
    s.balance = (s.sensitivity + s.specificity) / 2.0;
    return s;
}

// ---------------------------------------------------------------------------
// Literature defaults per stage

// Index set examined per stage, and the published threshold bounds used as the
// "custom" candidate range.
inline const std::vector<IndexKind>& stage_index_set(Stage s) {
    static const std::map<Stage, std::vector<IndexKind>> sets = {
        {Stage::LandPreparation, {IndexKind::NDVI, IndexKind::LSWI, IndexKind::MNDWI}},
        {Stage::Vegetative, {IndexKind::NDVI, IndexKind::EVI, IndexKind::LSWI}},
        {Stage::Reproductive, {IndexKind::NDVI, IndexKind::EVI}},
        {Stage::Ripening, {IndexKind::NDVI, IndexKind::MNDWI}},
    };
    return sets.at(s);
}

inline std::optional<RangeBound> literature_bound(Stage s, IndexKind k) {
    auto make = [k](std::optional<double> lo, std::optional<double> hi) {
        RangeBound b;
        b.index = k;
        b.min = lo;
        b.max = hi;
        return b;
    };
    switch (s) {
        case Stage::LandPreparation:
            if (k == IndexKind::NDVI) return make(0.15, 0.30);
            if (k == IndexKind::LSWI) return make(0.10, 0.45);
            if (k == IndexKind::MNDWI) return make(0.0, std::nullopt);
            break;
        case Stage::Vegetative:
            if (k == IndexKind::NDVI) return make(0.25, 0.70);
            if (k == IndexKind::EVI) return make(0.15, std::nullopt);
            if (k == IndexKind::LSWI) return make(0.20, 0.50);
            break;
        case Stage::Reproductive:
            if (k == IndexKind::NDVI) return make(0.45, 0.95);
            if (k == IndexKind::EVI) return make(0.25, 0.70);
            break;
        case Stage::Ripening:
            if (k == IndexKind::NDVI) return make(0.15, 0.70);
            if (k == IndexKind::MNDWI) return make(std::nullopt, -0.35);
            break;
    }
    return std::nullopt;
}

inline std::vector<RatioCriterion> default_ratio_criteria(Stage s) {
    using K = RatioCriterion::Kind;
    using C = RatioCriterion::Comparator;
    auto ratio = [](IndexKind a, IndexKind b, C cmp, double lo, double hi = 0.0) {
        RatioCriterion r;
        r.kind = K::Ratio;
        r.a = a;
        r.b = b;
        r.comparator = cmp;
        r.bound_lo = lo;
        r.bound_hi = hi;
        return r;
    };
    switch (s) {
        case Stage::LandPreparation:
            return {ratio(IndexKind::NDVI, IndexKind::SAVI, C::Less, 2.5),
                    ratio(IndexKind::SAVI, IndexKind::NDVI, C::Greater, 0.40)};
        case Stage::Vegetative:
            return {ratio(IndexKind::NDVI, IndexKind::EVI, C::Less, 2.0),
                    ratio(IndexKind::LSWI, IndexKind::EVI, C::Greater, 0.6)};
        case Stage::Reproductive:
            return {ratio(IndexKind::NDVI, IndexKind::LSWI, C::Within, 1.35, 3.5),
                    ratio(IndexKind::EVI, IndexKind::LSWI, C::Less, 2.2)};
        case Stage::Ripening:
            return {ratio(IndexKind::SAVI, IndexKind::NDVI, C::Greater, 0.60),
                    ratio(IndexKind::NDVI, IndexKind::LSWI, C::Greater, 3.0)};
    }
    return {};
}

// ---------------------------------------------------------------------------
// District optimization

struct ScoreLedgerRow {
    std::string district;
    std::string stage;
    std::string index;  // "-" for whole-rule method rows
    std::string range;  // "-" for method rows
    std::string method; // "-" for per-index range rows
    double sensitivity = 0.0;
    double specificity = 0.0;
    double balance = 0.0;
    bool selected = false;
};

struct StageRuleChoice {
    StageRule rule;
    std::vector<ScoreLedgerRow> ledger;
    bool unresolved = false;
    double best_balance = 0.0;
};

// Candidate evaluation for one stage: percentile ranges per index first, then
// method selection. Order and tie-breaks are fixed (broad > interquartile >
// custom; basic > ratio_based > lswi_evi) so results are deterministic.
inline StageRuleChoice choose_stage_rule(Stage stage, const std::vector<RefSampleRow>& rows,
                                         const std::string& district) {
    StageRuleChoice out;

    std::vector<RangeBound> chosen_bounds;
    for (IndexKind k : stage_index_set(stage)) {
        std::vector<double> paddy_values;
        for (const auto& row : rows) {
            const float v = row.values[std::size_t(k)];
            if (row.paddy && !std::isnan(v)) paddy_values.push_back(v);
        }

        struct Candidate {
            PercentileRange range;
            std::optional<RangeBound> bound;
        };
        std::vector<Candidate> candidates;
        if (paddy_values.size() >= 10) {
            candidates.push_back({PercentileRange::broad(),
                                  derive_bounds(paddy_values, k, PercentileRange::broad())});
            candidates.push_back(
                {PercentileRange::interquartile(),
                 derive_bounds(paddy_values, k, PercentileRange::interquartile())});
        }
        if (auto lit = literature_bound(stage, k)) {
            candidates.push_back({PercentileRange::custom(0, 100), lit});
        }
        require(!candidates.empty(), std::string("no threshold candidate for ") +
                                         stage_name(stage) + "/" + index_name(k));

        int best = -1;
        double best_balance = -1.0;
        std::vector<CandidateScore> scores(candidates.size());
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            StageRule probe;
            probe.stage = stage;
            probe.method = RuleMethod::Basic;
            probe.bounds = {*candidates[i].bound};
            scores[i] = score_candidate(probe, rows);
            if (scores[i].balance > best_balance) {
                best_balance = scores[i].balance;
                best = int(i);
            }
        }
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            out.ledger.push_back({district, stage_name(stage), index_name(k),
                                  candidates[i].range.name(), "-", scores[i].sensitivity,
                                  scores[i].specificity, scores[i].balance, int(i) == best});
        }
        chosen_bounds.push_back(*candidates[std::size_t(best)].bound);
    }

    struct MethodCandidate {
        RuleMethod method;
        StageRule rule;
    };
    std::vector<MethodCandidate> methods;
    {
        StageRule basic;
        basic.stage = stage;
        basic.method = RuleMethod::Basic;
        basic.bounds = chosen_bounds;
        methods.push_back({RuleMethod::Basic, basic});

        StageRule ratio = basic;
        ratio.method = RuleMethod::RatioBased;
        ratio.ratios = default_ratio_criteria(stage);
        methods.push_back({RuleMethod::RatioBased, ratio});

        StageRule lswi = basic;
        lswi.method = RuleMethod::LswiEvi;
        methods.push_back({RuleMethod::LswiEvi, lswi});
    }

    int best = -1;
    double best_balance = -1.0;
    std::vector<CandidateScore> scores(methods.size());
    for (std::size_t i = 0; i < methods.size(); ++i) {
        scores[i] = score_candidate(methods[i].rule, rows);
        if (scores[i].balance > best_balance) { // strict: earlier candidate wins ties
            best_balance = scores[i].balance;
            best = int(i);
        }
    }
    for (std::size_t i = 0; i < methods.size(); ++i) {
        out.ledger.push_back({district, stage_name(stage), "-", "-",
                              rule_method_name(methods[i].method), scores[i].sensitivity,
                              scores[i].specificity, scores[i].balance, int(i) == best});
    }

    out.rule = methods[std::size_t(best)].rule;
    out.best_balance = best_balance;
    out.unresolved = !(best_balance > 0.5);
    return out;
}

struct OptimizeOptions {
    bool with_tpa = false;
    bool allow_nonstandard_durations = false;
};

struct OptimizeResult {
    DistrictCalibration calibration;
    std::vector<ScoreLedgerRow> ledger;
    bool needs_manual_review = false;
    std::vector<std::string> unresolved_stages;
};

namespace detail {

// Per-pixel NDVI standard deviation inside a stage window for paddy pixels.
inline std::vector<double> paddy_stage_sigmas(const std::vector<ReferencePolygon>& polygons,
                                              const IndexCube& ndvi, const DateRange& window) {
    std::vector<std::size_t> in_window;
    for (std::size_t d = 0; d < ndvi.dates.size(); ++d) {
        if (window.contains(ndvi.dates[d])) in_window.push_back(d);
    }
    std::vector<double> sigmas;
    std::vector<double> obs;
    for (const auto& poly : polygons) {
        if (!poly.paddy) continue;
        for (const auto& [r, c] : poly.pixels) {
            obs.clear();
            for (std::size_t d : in_window) {
                const float v = ndvi.at(int(d), r, c);
                if (!std::isnan(v)) obs.push_back(v);
            }
            if (obs.size() >= 2) sigmas.push_back(stddev_population(obs));
        }
    }
    return sigmas;
}

inline double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

} // namespace detail

// Hybrid statistical tuning: per-(stage,index) percentile range selection by
// best sensitivity/specificity balance on the reference pixels, then method
// selection per stage (basic preferred on ties). Emits the complete district
// parameter set plus a score ledger.
inline OptimizeResult optimize_district(std::vector<ReferencePolygon> refs,
                                        const std::map<IndexKind, IndexCube>& index_cubes,
                                        const StageWindows& windows, const DateRange& season,
                                        const std::string& district,
                                        const OptimizeOptions& opts = {}) {
    require(!index_cubes.empty(), "optimize_district: no index cubes");
    const GeoGrid& grid = index_cubes.begin()->second.grid;
    bool has_paddy = false, has_non = false;
    for (auto& poly : refs) {
        resolve_polygon_pixels(poly, grid);
        (poly.paddy ? has_paddy : has_non) = true;
    }
    require(has_paddy && has_non,
            "optimize_district: reference polygons must cover both classes");

    CompositeSet composites;
    for (const auto& [k, cube] : index_cubes) {
        for (Stage s : all_stages()) {
            composites.put(build_stage_composite(cube, windows, s, district));
        }
    }
    const std::vector<Stage> stages(all_stages().begin(), all_stages().end());
    const RefStageSamples samples = collect_reference_samples(refs, composites, stages);

    OptimizeResult out;
    out.calibration.district_id = district;
    out.calibration.season = season;
    out.calibration.windows = windows;
    out.calibration.windows.district_id = district;
    out.calibration.allow_nonstandard_durations = opts.allow_nonstandard_durations;

    for (Stage s : all_stages()) {
        StageRuleChoice choice = choose_stage_rule(s, samples.by_stage.at(s), district);
        out.calibration.rules[s] = choice.rule;
        out.ledger.insert(out.ledger.end(), choice.ledger.begin(), choice.ledger.end());
        if (choice.unresolved) {
            out.needs_manual_review = true;
            out.unresolved_stages.push_back(stage_name(s));
        }
    }

    // Temporal stability ceilings from the paddy-class sigma distribution.
    const IndexCube& ndvi = index_cubes.at(IndexKind::NDVI);
    for (Stage s : all_stages()) {
        const auto sigmas = detail::paddy_stage_sigmas(refs, ndvi, windows.window(s));
        double sigma_max = 0.15;
        if (sigmas.size() >= 5) {
            sigma_max = detail::clamp(quantile(sigmas, 0.95), 0.05, 0.25);
        }
        out.calibration.tsp.sigma_max[s] = sigma_max;
    }

    if (opts.with_tpa) {
        std::vector<double> peaks, increases, decreases;
        const auto& early_rows = samples.by_stage.at(Stage::LandPreparation);
        const auto& peak_rows = samples.by_stage.at(Stage::Reproductive);
        const auto& late_rows = samples.by_stage.at(Stage::Ripening);
        for (std::size_t i = 0; i < peak_rows.size(); ++i) {
            if (!peak_rows[i].paddy) continue;
            const float e = early_rows[i].values[std::size_t(IndexKind::NDVI)];
            const float p = peak_rows[i].values[std::size_t(IndexKind::NDVI)];
            const float l = late_rows[i].values[std::size_t(IndexKind::NDVI)];
            if (std::isnan(p)) continue;
            peaks.push_back(p);
            if (!std::isnan(e)) increases.push_back(double(p) - double(e));
            if (!std::isnan(l)) decreases.push_back(double(p) - double(l));
        }
        TpaParams tpa;
        if (peaks.size() >= 5) {
            tpa.peak_min = detail::clamp(quantile(peaks, 0.05) - 0.02, 0.30, 0.90);
            tpa.peak_max = detail::clamp(quantile(peaks, 0.95) + 0.02, tpa.peak_min + 0.05, 1.0);
        }
        if (increases.size() >= 5) {
            tpa.min_increase = detail::clamp(quantile(increases, 0.25) * 0.5, 0.05, 0.20);
        }
        if (decreases.size() >= 5) {
            tpa.min_decrease = detail::clamp(quantile(decreases, 0.25) * 0.5, 0.05, 0.15);
        } else {
            tpa.min_decrease = 0.10;
        }
        out.calibration.tpa = tpa;
    }

    out.calibration.validate();
    return out;
}

inline void write_score_ledger(const std::vector<ScoreLedgerRow>& ledger,
                               const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot write score ledger: " + path.string());
    out << "district,stage,index,range,method,sensitivity,specificity,balance,selected\n";
    char buf[64];
    for (const auto& row : ledger) {
        out << row.district << ',' << row.stage << ',' << row.index << ',' << row.range << ','
            << row.method << ',';
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,", row.sensitivity, row.specificity,
                      row.balance);
        out << buf << (row.selected ? "1" : "0") << '\n';
    }
}

// ---------------------------------------------------------------------------
// District-vs-cluster comparison

struct DistrictRefData {
    std::string district;
    std::vector<ReferencePolygon> refs;
    std::map<IndexKind, IndexCube> index_cubes;
    StageWindows windows;
    DateRange season;
};

struct CompareRow {
    std::string district;
    std::string cluster;
    double district_accuracy = 0.0;
    double cluster_accuracy = 0.0;
    double district_balance = 0.0;
    double cluster_balance = 0.0;
    double delta_accuracy = 0.0;
};

struct CompareReport {
    std::vector<CompareRow> rows;
    std::map<std::string, int> cluster_sizes;
    double district_mean_accuracy = 0.0;
    double cluster_mean_accuracy = 0.0;
};

namespace detail {

// Pixel-level accuracy of a rule set on stage samples: a pixel counts as
// paddy when the stage votes satisfy the combine policy.
inline CandidateScore score_rules_on_samples(const std::map<Stage, StageRule>& rules,
                                             const RefStageSamples& samples,
                                             CombinePolicy policy) {
    static const std::array<Stage, 3> voting = {Stage::LandPreparation, Stage::Vegetative,
                                                Stage::Reproductive};
    const std::size_t n = samples.by_stage.at(Stage::LandPreparation).size();
    CandidateScore s;
    for (std::size_t i = 0; i < n; ++i) {
        int ones = 0;
        bool any_usable = false;
        for (Stage st : voting) {
            bool usable = true;
            const bool pass = rule_passes_row(rules.at(st), samples.by_stage.at(st)[i], usable);
            if (usable) {
                any_usable = true;
                ones += pass;
            }
        }
        if (!any_usable) {
            ++s.skipped;
            continue;
        }
        bool predicted = false;
        switch (policy) {
            case CombinePolicy::Majority: predicted = ones >= 2; break;
            case CombinePolicy::All: predicted = ones == 3; break;
            case CombinePolicy::Any: predicted = ones >= 1; break;
        }
        const bool truth = samples.by_stage.at(Stage::LandPreparation)[i].paddy;
        if (truth) {
            (predicted ? s.tp : s.fn)++;
        } else {
            (predicted ? s.fp : s.tn)++;
        }
    }
    const std::int64_t ap = s.tp + s.fn, an = s.tn + s.fp;
    s.sensitivity = ap > 0 ? double(s.tp) / double(ap) : 0.0;
    s.specificity = an > 0 ? double(s.tn) / double(an) : 0.0;
    s.balance = (s.sensitivity + s.specificity) / 2.0;
    return s;
}

inline double overall_accuracy(const CandidateScore& s) {
    const std::int64_t total = s.tp + s.fn + s.tn + s.fp;
    return total > 0 ? double(s.tp + s.tn) / double(total) : 0.0;
}

// Mean stage windows over a cluster: each boundary is the average day offset.
inline StageWindows mean_windows(const std::vector<const StageWindows*>& members) {
    const Date epoch = Date::from_ymd(2018, 1, 1);
    StageWindows out = *members.front();
    for (Stage s : all_stages()) {
        long start_sum = 0, end_sum = 0;
        for (const auto* w : members) {
            start_sum += w->window(s).start - epoch;
            end_sum += w->window(s).end - epoch;
        }
        const long n = long(members.size());
        out.window(s).start = epoch.plus_days(int((start_sum + n / 2) / n));
        out.window(s).end = epoch.plus_days(int((end_sum + n / 2) / n));
    }
    return out;
}

inline RefStageSamples samples_for(DistrictRefData& d, const StageWindows& windows) {
    CompositeSet composites;
    for (const auto& [k, cube] : d.index_cubes) {
        for (Stage s : all_stages()) {
            composites.put(build_stage_composite(cube, windows, s, d.district));
        }
    }
    for (auto& poly : d.refs) {
        resolve_polygon_pixels(poly, d.index_cubes.begin()->second.grid);
    }
    const std::vector<Stage> stages(all_stages().begin(), all_stages().end());
    return collect_reference_samples(d.refs, composites, stages);
}

} // namespace detail

// District mode: per-district rule optimization scored on the district's own
// reference pixels. Cluster mode: shared mean windows + thresholds fit on the
// pooled cluster references, applied unchanged to every member.
inline CompareReport compare_modes(std::vector<DistrictRefData>& districts,
                                   const std::map<std::string, std::string>& cluster_of,
                                   CombinePolicy policy = CombinePolicy::Majority) {
    std::map<std::string, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < districts.size(); ++i) {
        const auto it = cluster_of.find(districts[i].district);
        require(it != cluster_of.end(),
                "cluster assignment missing district " + districts[i].district);
        clusters[it->second].push_back(i);
    }
    for (const auto& [cid, members] : clusters) {
        require(!members.empty(), "empty cluster " + cid);
    }

    CompareReport report;
    std::map<std::string, std::pair<double, double>> per_district; // district/cluster accuracy
    std::map<std::string, std::pair<double, double>> per_district_balance;

    // District mode
    std::map<std::string, RefStageSamples> own_samples;
    for (auto& d : districts) {
        own_samples[d.district] = detail::samples_for(d, d.windows);
        std::map<Stage, StageRule> rules;
        for (Stage s : all_stages()) {
            rules[s] =
                choose_stage_rule(s, own_samples[d.district].by_stage.at(s), d.district).rule;
        }
        const CandidateScore score =
            detail::score_rules_on_samples(rules, own_samples[d.district], policy);
        per_district[d.district].first = detail::overall_accuracy(score);
        per_district_balance[d.district].first = score.balance;
    }

    // Cluster mode
    for (const auto& [cid, members] : clusters) {
        std::vector<const StageWindows*> window_ptrs;
        for (std::size_t i : members) window_ptrs.push_back(&districts[i].windows);
        const StageWindows shared = detail::mean_windows(window_ptrs);

        RefStageSamples pooled;
        std::map<std::string, RefStageSamples> member_samples;
        for (std::size_t i : members) {
            RefStageSamples s = detail::samples_for(districts[i], shared);
            for (Stage st : all_stages()) {
                auto& dst = pooled.by_stage[st];
                const auto& src = s.by_stage.at(st);
                dst.insert(dst.end(), src.begin(), src.end());
            }
            member_samples[districts[i].district] = std::move(s);
        }

        std::map<Stage, StageRule> shared_rules;
        for (Stage s : all_stages()) {
            shared_rules[s] = choose_stage_rule(s, pooled.by_stage.at(s), "cluster-" + cid).rule;
        }
        for (std::size_t i : members) {
            const auto& name = districts[i].district;
            const CandidateScore score =
                detail::score_rules_on_samples(shared_rules, member_samples[name], policy);
            per_district[name].second = detail::overall_accuracy(score);
            per_district_balance[name].second = score.balance;
        }
        report.cluster_sizes[cid] = int(members.size());
    }

    double dsum = 0.0, csum = 0.0;
    for (const auto& d : districts) {
        CompareRow row;
        row.district = d.district;
        row.cluster = cluster_of.at(d.district);
        row.district_accuracy = per_district[d.district].first;
        row.cluster_accuracy = per_district[d.district].second;
        row.district_balance = per_district_balance[d.district].first;
        row.cluster_balance = per_district_balance[d.district].second;
        row.delta_accuracy = row.district_accuracy - row.cluster_accuracy;
        dsum += row.district_accuracy;
        csum += row.cluster_accuracy;
        report.rows.push_back(row);
    }
    report.district_mean_accuracy = dsum / double(districts.size());
    report.cluster_mean_accuracy = csum / double(districts.size());
    return report;
}

inline nlohmann::json compare_report_to_json(const CompareReport& report) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["cluster_sizes"] = report.cluster_sizes;
    j["district_mean_accuracy"] = report.district_mean_accuracy;
    j["cluster_mean_accuracy"] = report.cluster_mean_accuracy;
    j["mean_delta"] = report.district_mean_accuracy - report.cluster_mean_accuracy;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"district", r.district},
                        {"cluster", r.cluster},
                        {"district_accuracy", r.district_accuracy},
                        {"cluster_accuracy", r.cluster_accuracy},
                        {"district_balance", r.district_balance},
                        {"cluster_balance", r.cluster_balance},
                        {"delta_accuracy", r.delta_accuracy}});
    }
    j["districts"] = rows;
    return j;
}

} // namespace ricemap
