#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ricemap/cube.hpp"
#include "ricemap/error.hpp"
#include "ricemap/grid.hpp"
#include "ricemap/indices.hpp"
#include "ricemap/parallel.hpp"
#include "ricemap/phenology.hpp"
#include "ricemap/districts.hpp"
#include "ricemap/preprocess.hpp"
#include "ricemap/stats.hpp"

namespace ricemap {

// ---------------------------------------------------------------------------
// Rule types

struct RangeBound {
    IndexKind index = IndexKind::NDVI;
    std::optional<double> min;
    std::optional<double> max;

    void validate() const {
        require(min.has_value() || max.has_value(), "range bound: min or max must be present");
        if (min && max) {
            require(*min <= *max, std::string("range bound on ") + index_name(index) +
                                      ": min > max");
        }
    }

    bool pass(double v) const {
        if (min && v < *min) return false;
        if (max && v > *max) return false;
        return true;
    }
};

struct RatioCriterion {
    enum class Kind { Ratio, Difference };
    enum class Comparator { Less, Greater, Within };

    Kind kind = Kind::Ratio;
    IndexKind a = IndexKind::NDVI; // numerator / left
    IndexKind b = IndexKind::LSWI; // denominator / right
    Comparator comparator = Comparator::Within;
    double bound_lo = 0.0; // single bound for Less/Greater; low edge for Within
    double bound_hi = 0.0; // high edge for Within

    void validate() const {
        if (comparator == Comparator::Within) {
            require(bound_lo <= bound_hi, "ratio criterion: within bounds reversed");
        }
    }

    // A vanishing denominator is a failed criterion, not an error.
    bool pass(double va, double vb) const {
        double v;
        if (kind == Kind::Ratio) {
            if (std::abs(vb) < kDenominatorEpsilon) return false;
            v = va / vb;
        } else {
            v = va - vb;
        }
        switch (comparator) {
            case Comparator::Less: return v < bound_lo;
            case Comparator::Greater: return v > bound_lo;
            case Comparator::Within: return v >= bound_lo && v <= bound_hi;
        }
        return false;
    }
};

enum class RuleMethod { Basic, RatioBased, LswiEvi };

inline const char* rule_method_name(RuleMethod m) {
    switch (m) {
        case RuleMethod::Basic: return "basic";
        case RuleMethod::RatioBased: return "ratio_based";
        case RuleMethod::LswiEvi: return "lswi_evi";
    }
    throw internal_error("unhandled rule method");
}

inline RuleMethod rule_method_from_name(const std::string& s) {
    if (s == "basic") return RuleMethod::Basic;
    if (s == "ratio_based") return RuleMethod::RatioBased;
    if (s == "lswi_evi") return RuleMethod::LswiEvi;
    throw validation_error("unknown rule method: '" + s + "'");
}

// Flooded-field detection rule via the moisture/greenness relationship:
// paddy when LSWI >= EVI - offset.
inline constexpr double kLswiEviOffset = 0.05;

struct StageRule {
    Stage stage = Stage::LandPreparation;
    RuleMethod method = RuleMethod::Basic;
    std::vector<RangeBound> bounds;
    std::vector<RatioCriterion> ratios; // conjunctive

    void validate() const {
        for (const auto& b : bounds) b.validate();
        for (const auto& r : ratios) r.validate();
        require(ratios.size() <= 3, std::string("stage rule ") + stage_name(stage) +
                                        ": at most 3 ratio criteria");
        if (method != RuleMethod::RatioBased) {
            require(ratios.empty(), std::string("stage rule ") + stage_name(stage) + ": method " +
                                        rule_method_name(method) +
                                        " does not take ratio criteria");
        } else {
            require(!ratios.empty(), std::string("stage rule ") + stage_name(stage) +
                                         ": ratio_based method needs ratio criteria");
        }
    }

    std::set<IndexKind> required_indices() const {
        std::set<IndexKind> s;
        for (const auto& b : bounds) s.insert(b.index);
        for (const auto& r : ratios) {
            s.insert(r.a);
            s.insert(r.b);
        }
        if (method == RuleMethod::LswiEvi) {
            s.insert(IndexKind::LSWI);
            s.insert(IndexKind::EVI);
        }
        return s;
    }
};

struct TspParams {
    std::map<Stage, double> sigma_max;

    void validate() const {
        for (const auto& [stage, sigma] : sigma_max) {
            require(sigma > 0.0 && sigma < 1.0, std::string("tsp sigma for ") +
                                                    stage_name(stage) +
                                                    " must be in (0,1)");
        }
    }
};

struct TpaParams {
    double peak_min = 0.60;
    double peak_max = 0.90;
    double min_increase = 0.15;
    double min_decrease = 0.15;

    void validate() const {
        require(peak_min > 0.0 && peak_min < peak_max && peak_max <= 1.0,
                "tpa: need 0 < peak_min < peak_max <= 1");
        require(min_increase > 0.0 && min_decrease > 0.0, "tpa: deltas must be > 0");
    }
};

enum class CombinePolicy { Majority, All, Any };

inline const char* combine_policy_name(CombinePolicy p) {
    switch (p) {
        case CombinePolicy::Majority: return "majority";
        case CombinePolicy::All: return "all";
        case CombinePolicy::Any: return "any";
    }
    throw internal_error("unhandled combine policy");
}

inline CombinePolicy combine_policy_from_name(const std::string& s) {
    if (s == "majority") return CombinePolicy::Majority;
    if (s == "all") return CombinePolicy::All;
    if (s == "any") return CombinePolicy::Any;
    throw validation_error("unknown combine policy: '" + s + "'");
}

struct ExclusionSettings {
    // WorldCover-style class codes treated as impossible for paddy:
    // trees, shrubland, grassland, built-up, bare/sparse.
    std::vector<int> landcover_codes = {10, 20, 30, 50, 60};
    bool exclude_permanent_water = true;
    bool exclude_seasonal_water = true;
};

// Complete per-district parameter bundle.
struct DistrictCalibration {
    std::string district_id;
    DateRange season;
    StageWindows windows;
    bool allow_nonstandard_durations = false;
    std::map<Stage, StageRule> rules; // land prep / vegetative / reproductive required
    TspParams tsp;
    std::optional<TpaParams> tpa;
    CombinePolicy combine_policy = CombinePolicy::Majority;
    ExclusionSettings exclusions;
    OutlierPolicy outlier_multipliers; // composite-level IQR
    double timeseries_iqr_k = 2.0;     // per-pixel time-series IQR; 0 disables
    double focal_radius_m = 20.0;
    std::string notes;

    void validate() const {
        require(!district_id.empty(), "calibration: district is empty");
        season.validate("season");
        windows.validate(allow_nonstandard_durations);
        for (Stage s : {Stage::LandPreparation, Stage::Vegetative, Stage::Reproductive}) {
            require(rules.count(s) > 0, std::string("calibration: missing rule for stage ") +
                                            stage_name(s));
        }
        for (const auto& [stage, rule] : rules) {
            require(rule.stage == stage, "calibration: rule stage key mismatch");
            rule.validate();
        }
        tsp.validate();
        if (tpa) tpa->validate();
        outlier_multipliers.validate();
        require(timeseries_iqr_k >= 0.0, "calibration: timeseries_iqr_k must be >= 0");
        require(focal_radius_m > 0.0, "calibration: focal_radius_m must be > 0");
    }
};

// ---------------------------------------------------------------------------
// Composite set

struct CompositeSet {
    std::map<std::pair<int, int>, StageComposite> by_key; // (stage, index)

    static std::pair<int, int> key(Stage s, IndexKind k) { return {int(s), int(k)}; }

    bool has(Stage s, IndexKind k) const { return by_key.count(key(s, k)) > 0; }

    const StageComposite& get(Stage s, IndexKind k) const {
        auto it = by_key.find(key(s, k));
        if (it == by_key.end()) {
            throw validation_error(std::string("missing composite: ") + stage_name(s) + "/" +
                                   index_name(k));
        }
        return it->second;
    }

    StageComposite& put(StageComposite comp) {
        return by_key[key(comp.stage, comp.index)] = std::move(comp);
    }
};

// ---------------------------------------------------------------------------
// Stage rule application

// Pixel is paddy-candidate for the stage iff every range bound and every
// active criterion holds. Any nodata input composite makes the pixel nodata.
inline BinaryMask apply_stage_rule(const CompositeSet& composites, const StageRule& rule,
                                   const GeoGrid& grid) {
    rule.validate();
    const auto needed = rule.required_indices();
    std::map<IndexKind, const Plane<float>*> planes;
    for (IndexKind k : needed) {
        const StageComposite& c = composites.get(rule.stage, k);
        require(c.grid.same_shape(grid), "composite grid mismatch");
        planes[k] = &c.mean;
    }

    BinaryMask mask = BinaryMask::filled(grid, 0.0f);
    const std::size_t n = grid.pixels();
    for (std::size_t i = 0; i < n; ++i) {
        bool any_nodata = false;
        for (const auto& [k, plane] : planes) {
            if (is_nodata(plane->data()[i])) {
                any_nodata = true;
                break;
            }
        }
        if (any_nodata) {
            mask.values.data()[i] = kNodata;
            continue;
        }
        auto value_of = [&](IndexKind k) { return double(planes.at(k)->data()[i]); };

        bool ok = true;
        for (const auto& b : rule.bounds) {
            if (!b.pass(value_of(b.index))) {
                ok = false;
                break;
            }
        }
        if (ok && rule.method == RuleMethod::RatioBased) {
            for (const auto& r : rule.ratios) {
                if (!r.pass(value_of(r.a), value_of(r.b))) {
                    ok = false;
                    break;
                }
            }
        }
        if (ok && rule.method == RuleMethod::LswiEvi) {
            ok = value_of(IndexKind::LSWI) >= value_of(IndexKind::EVI) - kLswiEviOffset;
        }
        mask.values.data()[i] = ok ? 1.0f : 0.0f;
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Temporal analytics

struct TspResult {
    bool pass = true;
    bool flagged = false; // fewer than 2 observations: no evidence either way
};

// Temporal stability: population std dev of valid observations within the
// stage window must not exceed sigma_max. Missing data is not exclusion.
inline TspResult tsp_filter(const std::vector<float>& obs_in_window, double sigma_max) {
    double sum = 0.0;
    int n = 0;
    for (float v : obs_in_window) {
        if (std::isnan(v)) continue;
        sum += v;
        ++n;
    }
    if (n < 2) return {true, true};
    const double mu = sum / n;
    double ss = 0.0;
    for (float v : obs_in_window) {
        if (std::isnan(v)) continue;
        ss += (double(v) - mu) * (double(v) - mu);
    }
    const double sigma = std::sqrt(ss / n);
    return {sigma <= sigma_max, false};
}

// Temporal pattern: rise to a bounded peak, then fall. Inputs are the early /
// peak / late stage composite values of the greenness index.
inline bool tpa_filter(float early, float peak, float late, const TpaParams& params) {
    if (std::isnan(early) || std::isnan(peak) || std::isnan(late)) return false;
    if (peak < params.peak_min || peak > params.peak_max) return false;
    if (double(peak) - double(early) < params.min_increase) return false;
    if (double(peak) - double(late) < params.min_decrease) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Stage combination and refinement

// Combines the land preparation / vegetative / reproductive masks. A ripening
// mask in the input is ignored regardless of policy; senescence never adds
// area. nodata counts as a failed vote; a pixel is nodata only when all three
// stages are nodata.
inline BinaryMask combine_stages(const std::map<Stage, BinaryMask>& stage_masks,
                                 CombinePolicy policy) {
    std::vector<const BinaryMask*> voting;
    for (Stage s : {Stage::LandPreparation, Stage::Vegetative, Stage::Reproductive}) {
        auto it = stage_masks.find(s);
        require(it != stage_masks.end(), std::string("combine: missing stage mask ") +
                                             stage_name(s));
        voting.push_back(&it->second);
    }
    const GeoGrid& grid = voting[0]->grid;
    for (const auto* m : voting) {
        require(m->grid.same_shape(grid), "combine: stage mask grid mismatch");
    }

    BinaryMask out = BinaryMask::filled(grid, 0.0f);
    const std::size_t n = grid.pixels();
    for (std::size_t i = 0; i < n; ++i) {
        int ones = 0, valid = 0;
        for (const auto* m : voting) {
            const float v = m->values.data()[i];
            if (is_nodata(v)) continue;
            ++valid;
            ones += (v == 1.0f);
        }
        if (valid == 0) {
            out.values.data()[i] = kNodata;
            continue;
        }
        bool on = false;
        switch (policy) {
            case CombinePolicy::Majority: on = ones >= 2; break;
            case CombinePolicy::All: on = ones == 3; break;
            case CombinePolicy::Any: on = ones >= 1; break;
        }
        out.values.data()[i] = on ? 1.0f : 0.0f;
    }
    return out;
}

// Forces pixels whose land-cover class is in the excluded set to 0.
inline BinaryMask exclude_landcover(const BinaryMask& mask, const Plane<float>& landcover,
                                    const std::vector<int>& excluded_codes) {
    require(landcover.height() == mask.grid.height && landcover.width() == mask.grid.width,
            "landcover grid mismatch");
    std::set<int> codes(excluded_codes.begin(), excluded_codes.end());
    BinaryMask out = mask;
    const std::size_t n = mask.grid.pixels();
    for (std::size_t i = 0; i < n; ++i) {
        const float c = landcover.data()[i];
        if (is_nodata(c)) continue;
        if (codes.count(int(std::lround(c))) > 0) out.values.data()[i] = 0.0f;
    }
    return out;
}

// Permanent water is always excluded; seasonal water per policy.
inline BinaryMask exclude_water(const BinaryMask& mask, const Plane<float>* permanent,
                                const Plane<float>* seasonal, bool exclude_seasonal) {
    BinaryMask out = mask;
    const std::size_t n = mask.grid.pixels();
    auto apply = [&](const Plane<float>* plane) {
        require(plane->height() == mask.grid.height && plane->width() == mask.grid.width,
                "water mask grid mismatch");
        for (std::size_t i = 0; i < n; ++i) {
            if (plane->data()[i] == 1.0f) out.values.data()[i] = 0.0f;
        }
    };
    if (permanent) apply(permanent);
    if (seasonal && exclude_seasonal) apply(seasonal);
    return out;
}

// Circular-neighborhood majority vote: a pixel takes the modal value among
// pixels whose center lies within radius_m (center included). Ties keep the
// original value; nodata neighbors do not vote; nodata centers stay nodata.
inline BinaryMask focal_mode(const BinaryMask& mask, double radius_m, int workers = 1) {
    const double ps = mask.grid.pixel_size;
    require(radius_m >= ps, "focal radius must be at least one pixel");

    const int reach = int(std::floor(radius_m / ps));
    std::vector<std::pair<int, int>> offsets;
    for (int dr = -reach; dr <= reach; ++dr) {
        for (int dc = -reach; dc <= reach; ++dc) {
            const double dist = std::sqrt(double(dr) * dr + double(dc) * dc) * ps;
            if (dist <= radius_m) offsets.emplace_back(dr, dc);
        }
    }

    const int h = mask.grid.height, w = mask.grid.width;
    BinaryMask out = mask;
    const auto& in = mask.values.data();
    auto& dst = out.values.data();
    parallel_chunks(std::size_t(h), workers, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            for (int c = 0; c < w; ++c) {
                const std::size_t i = r * std::size_t(w) + std::size_t(c);
                const float center = in[i];
                if (is_nodata(center)) continue;
                int ones = 0, zeros = 0;
                for (const auto& [dr, dc] : offsets) {
                    const int rr = int(r) + dr, cc = c + dc;
                    if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                    const float v = in[std::size_t(rr) * std::size_t(w) + std::size_t(cc)];
                    if (is_nodata(v)) continue;
                    ones += (v == 1.0f);
                    zeros += (v == 0.0f);
                }
                if (ones > zeros) {
                    dst[i] = 1.0f;
                } else if (zeros > ones) {
                    dst[i] = 0.0f;
                } // tie keeps the original value
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Full district pipeline

struct ExclusionInputs {
    std::optional<Plane<float>> landcover;
    std::optional<Plane<float>> water_permanent;
    std::optional<Plane<float>> water_seasonal;
};

struct ClassificationDiagnostics {
    std::map<std::string, std::int64_t> counters;
    std::vector<std::string> messages;

    void count(const std::string& key, std::int64_t n) { counters[key] += n; }
};

struct ClassificationResult {
    std::map<Stage, BinaryMask> rule_masks;
    std::map<Stage, BinaryMask> tsp_masks; // 1 = temporally stable
    std::map<Stage, BinaryMask> stage_masks; // rule AND tsp
    std::optional<BinaryMask> tpa_mask;
    BinaryMask combined;   // stage combination (and TPA when configured)
    BinaryMask refined;    // after land-cover / water exclusions
    BinaryMask final_mask; // after focal-mode filtering
    CompositeSet composites;
    ClassificationDiagnostics diag;
};

namespace detail {

// Masks per-pixel time-series outliers of one index cube in place.
inline std::int64_t filter_index_timeseries(IndexCube& cube, double k, int workers) {
    if (k <= 0.0) return 0;
    const std::size_t psize = cube.plane_size();
    const std::size_t ndates = cube.dates.size();
    std::vector<std::int64_t> masked_per_chunk(std::size_t(std::max(workers, 1)), 0);
    std::atomic<std::size_t> chunk_id{0};
    parallel_chunks(psize, workers, [&](std::size_t begin, std::size_t end) {
        const std::size_t me = chunk_id.fetch_add(1);
        std::vector<float> series(ndates);
        std::int64_t masked = 0;
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t d = 0; d < ndates; ++d) {
                series[d] = cube.values[cube.plane_offset(d) + i];
            }
            MaskedSeries ms = iqr_outlier_mask(series, k);
            if (ms.masked_count > 0) {
                masked += ms.masked_count;
                for (std::size_t d = 0; d < ndates; ++d) {
                    cube.values[cube.plane_offset(d) + i] = ms.values[d];
                }
            }
        }
        if (me < masked_per_chunk.size()) masked_per_chunk[me] += masked;
    });
    std::int64_t total = 0;
    for (auto v : masked_per_chunk) total += v;
    return total;
}

// Spatial IQR filter over one composite plane; masked pixels become nodata
// with a zeroed contributor count.
inline std::int64_t filter_composite(StageComposite& comp, double k) {
    std::vector<double> valid;
    valid.reserve(comp.mean.size());
    for (float v : comp.mean.data()) {
        if (!is_nodata(v)) valid.push_back(v);
    }
    if (valid.size() < 4) return 0;
    const QuartileSummary q = quartiles(std::move(valid));
    if (q.iqr() <= 0.0) return 0;
    const double lo = q.median - k * q.iqr();
    const double hi = q.median + k * q.iqr();
    std::int64_t masked = 0;
    for (std::size_t i = 0; i < comp.mean.size(); ++i) {
        const float v = comp.mean.data()[i];
        if (is_nodata(v)) continue;
        if (v < lo || v > hi) {
            comp.mean.data()[i] = kNodata;
            comp.count.data()[i] = 0;
            ++masked;
        }
    }
    return masked;
}

inline BinaryMask tsp_stage_mask(const IndexCube& ndvi, const DateRange& window, double sigma_max,
                                 std::int64_t& flagged, int workers) {
    std::vector<std::size_t> in_window;
    for (std::size_t d = 0; d < ndvi.dates.size(); ++d) {
        if (window.contains(ndvi.dates[d])) in_window.push_back(d);
    }
    BinaryMask mask = BinaryMask::filled(ndvi.grid, 1.0f);
    const std::size_t psize = ndvi.plane_size();
    std::atomic<std::int64_t> flag_count{0};
    parallel_chunks(psize, workers, [&](std::size_t begin, std::size_t end) {
        std::int64_t local_flags = 0;
        std::vector<float> obs(in_window.size());
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t d = 0; d < in_window.size(); ++d) {
                obs[d] = ndvi.values[ndvi.plane_offset(in_window[d]) + i];
            }
            const TspResult r = tsp_filter(obs, sigma_max);
            mask.values.data()[i] = r.pass ? 1.0f : 0.0f;
            local_flags += r.flagged;
        }
        flag_count += local_flags;
    });
    flagged += flag_count.load();
    return mask;
}

} // namespace detail

// Deterministic classification pipeline: indices -> per-pixel time-series
// outlier filtering -> stage composites -> composite-level outlier filtering
// -> stage rules -> TSP -> TPA (when configured) -> stage combination ->
// exclusions -> focal-mode refinement. Intermediates are all retained.
inline ClassificationResult classify_district(const ReflectanceCube& cube,
                                              const DistrictCalibration& calib,
                                              const ExclusionInputs& exclusions = {},
                                              int workers = 1) {
    calib.validate();
    cube.validate_structure();
    if (!cube.district_id.empty() &&
        DistrictDictionary::fold_key(cube.district_id) !=
            DistrictDictionary::fold_key(calib.district_id)) {
        throw validation_error("district mismatch: cube is '" + cube.district_id +
                               "', calibration is '" + calib.district_id + "'");
    }
    workers = std::max(1, workers);

    ClassificationResult result;
    auto step = [&](const std::string& name, auto&& fn) {
        try {
            fn();
        } catch (const validation_error& e) {
            throw validation_error("[" + name + "] " + e.what());
        }
    };

    // Season subset
    ReflectanceCube season_cube;
    step("season", [&] {
        std::vector<std::size_t> keep;
        for (std::size_t d = 0; d < cube.dates.size(); ++d) {
            if (calib.season.contains(cube.dates[d])) keep.push_back(d);
        }
        require(!keep.empty(), "no cube dates inside the season window");
        season_cube = cube.select_dates(keep);
    });

    // Which indices and stages are needed
    std::set<IndexKind> needed = {IndexKind::NDVI};
    for (const auto& [stage, rule] : calib.rules) {
        for (IndexKind k : rule.required_indices()) needed.insert(k);
    }
    const bool want_ripening_rule = calib.rules.count(Stage::Ripening) > 0;
    const bool want_ripening_composite = want_ripening_rule || calib.tpa.has_value();

    // Index cubes with per-pixel time-series outlier filtering
    std::map<IndexKind, IndexCube> index_cubes;
    step("indices", [&] {
        for (IndexKind k : needed) {
            IndexCube ic = compute_index(season_cube, k, workers);
            const std::int64_t masked =
                detail::filter_index_timeseries(ic, calib.timeseries_iqr_k, workers);
            result.diag.count(std::string("timeseries_outliers_masked.") + index_name(k), masked);
            index_cubes[k] = std::move(ic);
        }
    });

    // Stage composites
    step("composites", [&] {
        for (const auto& [k, ic] : index_cubes) {
            for (Stage s : {Stage::LandPreparation, Stage::Vegetative, Stage::Reproductive}) {
                result.composites.put(
                    build_stage_composite(ic, calib.windows, s, calib.district_id));
            }
            const bool ripening_needed =
                (k == IndexKind::NDVI && want_ripening_composite) ||
                (want_ripening_rule &&
                 calib.rules.at(Stage::Ripening).required_indices().count(k) > 0);
            if (ripening_needed) {
                result.composites.put(
                    build_stage_composite(ic, calib.windows, Stage::Ripening, calib.district_id));
            }
        }
    });

    // Composite-level IQR filtering, per configured index
    step("composite_filter", [&] {
        for (auto& [key, comp] : result.composites.by_key) {
            const auto it = calib.outlier_multipliers.k_per_index.find(index_name(comp.index));
            if (it == calib.outlier_multipliers.k_per_index.end()) continue;
            const std::int64_t masked = detail::filter_composite(comp, it->second);
            result.diag.count(std::string("composite_outliers_masked.") + stage_name(comp.stage) +
                                  "." + index_name(comp.index),
                              masked);
        }
    });

    // Stage rules
    step("stage_rules", [&] {
        for (const auto& [stage, rule] : calib.rules) {
            result.rule_masks[stage] = apply_stage_rule(result.composites, rule, cube.grid);
        }
    });

    // Temporal stability per stage
    step("tsp", [&] {
        const IndexCube& ndvi = index_cubes.at(IndexKind::NDVI);
        for (const auto& [stage, rule] : calib.rules) {
            const auto it = calib.tsp.sigma_max.find(stage);
            if (it == calib.tsp.sigma_max.end()) continue;
            std::int64_t flagged = 0;
            result.tsp_masks[stage] = detail::tsp_stage_mask(ndvi, calib.windows.window(stage),
                                                             it->second, flagged, workers);
            result.diag.count(std::string("tsp_low_evidence.") + stage_name(stage), flagged);
        }
        for (const auto& [stage, rule_mask] : result.rule_masks) {
            BinaryMask combined = rule_mask;
            const auto ts = result.tsp_masks.find(stage);
            if (ts != result.tsp_masks.end()) {
                for (std::size_t i = 0; i < combined.values.size(); ++i) {
                    float& v = combined.values.data()[i];
                    if (v == 1.0f && ts->second.values.data()[i] == 0.0f) v = 0.0f;
                }
            }
            result.stage_masks[stage] = std::move(combined);
        }
    });

    // Temporal pattern
    step("tpa", [&] {
        if (!calib.tpa) return;
        const StageComposite& early =
            result.composites.get(Stage::LandPreparation, IndexKind::NDVI);
        const StageComposite& peak = result.composites.get(Stage::Reproductive, IndexKind::NDVI);
        const StageComposite& late = result.composites.get(Stage::Ripening, IndexKind::NDVI);
        BinaryMask mask = BinaryMask::filled(cube.grid, 0.0f);
        for (std::size_t i = 0; i < mask.values.size(); ++i) {
            mask.values.data()[i] = tpa_filter(early.mean.data()[i], peak.mean.data()[i],
                                               late.mean.data()[i], *calib.tpa)
                                        ? 1.0f
                                        : 0.0f;
        }
        result.tpa_mask = std::move(mask);
    });

    // Combination
    step("combine", [&] {
        std::map<Stage, BinaryMask> voting;
        for (Stage s : {Stage::LandPreparation, Stage::Vegetative, Stage::Reproductive}) {
            voting[s] = result.stage_masks.at(s);
        }
        result.combined = combine_stages(voting, calib.combine_policy);
        if (result.tpa_mask) {
            for (std::size_t i = 0; i < result.combined.values.size(); ++i) {
                float& v = result.combined.values.data()[i];
                if (v == 1.0f && result.tpa_mask->values.data()[i] == 0.0f) v = 0.0f;
            }
        }
    });

    // Exclusions
    step("exclusions", [&] {
        BinaryMask refined = result.combined;
        if (exclusions.landcover && !calib.exclusions.landcover_codes.empty()) {
            refined = exclude_landcover(refined, *exclusions.landcover,
                                        calib.exclusions.landcover_codes);
        }
        if (exclusions.water_permanent || exclusions.water_seasonal) {
            const Plane<float>* perm = (exclusions.water_permanent &&
                                        calib.exclusions.exclude_permanent_water)
                                           ? &*exclusions.water_permanent
                                           : nullptr;
            const Plane<float>* seas = exclusions.water_seasonal ? &*exclusions.water_seasonal
                                                                 : nullptr;
            refined = exclude_water(refined, perm, seas, calib.exclusions.exclude_seasonal_water);
        }
        result.refined = std::move(refined);
    });

    // Spatial refinement
    step("focal_mode", [&] {
        result.final_mask = focal_mode(result.refined, calib.focal_radius_m, workers);
    });

    return result;
}

} // namespace ricemap
