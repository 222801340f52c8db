#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "ricemap/classifier.hpp"
#include "ricemap/error.hpp"

namespace ricemap {

// Strict JSON schema for DistrictCalibration documents. Unknown keys are
// rejected everywhere so a typo cannot silently fall back to a default; every
// object accepts an optional "notes" string for annotation.
namespace calibration_json {

using nlohmann::json;

inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                                const std::string& where) {
    require(obj.is_object(), where + ": expected a JSON object");
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) {
            throw validation_error(where + ": unknown key '" + key + "'");
        }
    }
}

inline DateRange parse_date_range(const json& j, const std::string& where) {
    reject_unknown_keys(j, {"start", "end", "notes"}, where);
    require(j.contains("start") && j.contains("end"), where + ": needs start and end");
    DateRange r{Date::parse(j.at("start").get<std::string>()),
                Date::parse(j.at("end").get<std::string>())};
    r.validate(where);
    return r;
}

inline json date_range_to_json(const DateRange& r) {
    return json{{"start", r.start.to_string()}, {"end", r.end.to_string()}};
}

inline RangeBound parse_range_bound(const json& j, const std::string& where) {
    reject_unknown_keys(j, {"index", "min", "max", "notes"}, where);
    require(j.contains("index"), where + ": range bound needs an index");
    RangeBound b;
    b.index = index_from_name(j.at("index").get<std::string>());
    if (j.contains("min")) b.min = j.at("min").get<double>();
    if (j.contains("max")) b.max = j.at("max").get<double>();
    b.validate();
    return b;
}

inline json range_bound_to_json(const RangeBound& b) {
    json j{{"index", index_name(b.index)}};
    if (b.min) j["min"] = *b.min;
    if (b.max) j["max"] = *b.max;
    return j;
}

inline RatioCriterion parse_ratio_criterion(const json& j, const std::string& where) {
    RatioCriterion r;
    require(j.contains("kind"), where + ": criterion needs a kind");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "ratio") {
        reject_unknown_keys(j, {"kind", "numerator", "denominator", "comparator", "bound", "min",
                                "max", "notes"},
                            where);
        r.kind = RatioCriterion::Kind::Ratio;
        require(j.contains("numerator") && j.contains("denominator"),
                where + ": ratio needs numerator and denominator");
        r.a = index_from_name(j.at("numerator").get<std::string>());
        r.b = index_from_name(j.at("denominator").get<std::string>());
    } else if (kind == "difference") {
        reject_unknown_keys(j, {"kind", "left", "right", "comparator", "bound", "min", "max",
                                "notes"},
                            where);
        r.kind = RatioCriterion::Kind::Difference;
        require(j.contains("left") && j.contains("right"),
                where + ": difference needs left and right");
        r.a = index_from_name(j.at("left").get<std::string>());
        r.b = index_from_name(j.at("right").get<std::string>());
    } else {
        throw validation_error(where + ": unknown criterion kind '" + kind + "'");
    }

    require(j.contains("comparator"), where + ": criterion needs a comparator");
    const std::string cmp = j.at("comparator").get<std::string>();
    if (cmp == "less") {
        r.comparator = RatioCriterion::Comparator::Less;
    } else if (cmp == "greater") {
        r.comparator = RatioCriterion::Comparator::Greater;
    } else if (cmp == "within") {
        r.comparator = RatioCriterion::Comparator::Within;
    } else {
        throw validation_error(where + ": unknown comparator '" + cmp + "'");
    }

    if (r.comparator == RatioCriterion::Comparator::Within) {
        require(j.contains("min") && j.contains("max"), where + ": 'within' needs min and max");
        r.bound_lo = j.at("min").get<double>();
        r.bound_hi = j.at("max").get<double>();
    } else {
        require(j.contains("bound"), where + ": comparator needs a bound");
        r.bound_lo = j.at("bound").get<double>();
    }
    r.validate();
    return r;
}

inline json ratio_criterion_to_json(const RatioCriterion& r) {
    json j;
    if (r.kind == RatioCriterion::Kind::Ratio) {
        j["kind"] = "ratio";
        j["numerator"] = index_name(r.a);
        j["denominator"] = index_name(r.b);
    } else {
        j["kind"] = "difference";
        j["left"] = index_name(r.a);
        j["right"] = index_name(r.b);
    }
    switch (r.comparator) {
        case RatioCriterion::Comparator::Less:
            j["comparator"] = "less";
            j["bound"] = r.bound_lo;
            break;
        case RatioCriterion::Comparator::Greater:
            j["comparator"] = "greater";
            j["bound"] = r.bound_lo;
            break;
        case RatioCriterion::Comparator::Within:
            j["comparator"] = "within";
            j["min"] = r.bound_lo;
            j["max"] = r.bound_hi;
            break;
    }
    return j;
}

inline StageRule parse_stage_rule(const json& j, Stage stage, const std::string& where) {
    reject_unknown_keys(j, {"method", "range_bounds", "ratio_criteria", "notes"}, where);
    StageRule rule;
    rule.stage = stage;
    require(j.contains("method"), where + ": rule needs a method");
    rule.method = rule_method_from_name(j.at("method").get<std::string>());
    if (j.contains("range_bounds")) {
        int i = 0;
        for (const auto& jb : j.at("range_bounds")) {
            rule.bounds.push_back(
                parse_range_bound(jb, where + ".range_bounds[" + std::to_string(i++) + "]"));
        }
    }
    if (j.contains("ratio_criteria")) {
        int i = 0;
        for (const auto& jr : j.at("ratio_criteria")) {
            rule.ratios.push_back(parse_ratio_criterion(
                jr, where + ".ratio_criteria[" + std::to_string(i++) + "]"));
        }
    }
    rule.validate();
    return rule;
}

inline json stage_rule_to_json(const StageRule& rule) {
    json j{{"method", rule_method_name(rule.method)}};
    json bounds = json::array();
    for (const auto& b : rule.bounds) bounds.push_back(range_bound_to_json(b));
    j["range_bounds"] = bounds;
    if (!rule.ratios.empty()) {
        json ratios = json::array();
        for (const auto& r : rule.ratios) ratios.push_back(ratio_criterion_to_json(r));
        j["ratio_criteria"] = ratios;
    }
    return j;
}

inline DistrictCalibration from_json(const json& j) {
    reject_unknown_keys(j,
                        {"schema_version", "district", "season", "stage_windows",
                         "allow_nonstandard_durations", "stage_rules", "tsp", "tpa",
                         "combine_policy", "exclusions", "outlier_multipliers",
                         "timeseries_iqr_k", "focal_radius_m", "notes"},
                        "calibration");
    require(j.contains("schema_version") && j.at("schema_version").get<int>() == 1,
            "calibration: schema_version must be 1");

    DistrictCalibration c;
    require(j.contains("district"), "calibration: missing district");
    c.district_id = j.at("district").get<std::string>();
    require(j.contains("season"), "calibration: missing season");
    c.season = parse_date_range(j.at("season"), "season");

    require(j.contains("stage_windows"), "calibration: missing stage_windows");
    {
        const json& jw = j.at("stage_windows");
        reject_unknown_keys(jw,
                            {"land_preparation", "vegetative", "reproductive", "ripening",
                             "notes"},
                            "stage_windows");
        c.windows.district_id = c.district_id;
        for (Stage s : all_stages()) {
            require(jw.contains(stage_name(s)), std::string("stage_windows: missing ") +
                                                    stage_name(s));
            c.windows.window(s) = parse_date_range(jw.at(stage_name(s)),
                                                   std::string("stage_windows.") + stage_name(s));
        }
    }
    if (j.contains("allow_nonstandard_durations")) {
        c.allow_nonstandard_durations = j.at("allow_nonstandard_durations").get<bool>();
    }

    require(j.contains("stage_rules"), "calibration: missing stage_rules");
    {
        const json& jr = j.at("stage_rules");
        reject_unknown_keys(jr,
                            {"land_preparation", "vegetative", "reproductive", "ripening",
                             "notes"},
                            "stage_rules");
        for (Stage s : all_stages()) {
            if (!jr.contains(stage_name(s))) continue;
            c.rules[s] = parse_stage_rule(jr.at(stage_name(s)), s,
                                          std::string("stage_rules.") + stage_name(s));
        }
    }

    require(j.contains("tsp"), "calibration: missing tsp");
    {
        const json& jt = j.at("tsp");
        reject_unknown_keys(jt,
                            {"land_preparation", "vegetative", "reproductive", "ripening",
                             "notes"},
                            "tsp");
        for (Stage s : all_stages()) {
            if (jt.contains(stage_name(s))) {
                c.tsp.sigma_max[s] = jt.at(stage_name(s)).get<double>();
            }
        }
    }

    if (j.contains("tpa") && !j.at("tpa").is_null()) {
        const json& jt = j.at("tpa");
        reject_unknown_keys(jt, {"peak_min", "peak_max", "min_increase", "min_decrease", "notes"},
                            "tpa");
        TpaParams t;
        t.peak_min = jt.at("peak_min").get<double>();
        t.peak_max = jt.at("peak_max").get<double>();
        t.min_increase = jt.at("min_increase").get<double>();
        t.min_decrease = jt.at("min_decrease").get<double>();
        c.tpa = t;
    }

    if (j.contains("combine_policy")) {
        c.combine_policy = combine_policy_from_name(j.at("combine_policy").get<std::string>());
    }

    if (j.contains("exclusions")) {
        const json& je = j.at("exclusions");
        reject_unknown_keys(je,
                            {"landcover_codes", "exclude_permanent_water",
                             "exclude_seasonal_water", "notes"},
                            "exclusions");
        if (je.contains("landcover_codes")) {
            c.exclusions.landcover_codes = je.at("landcover_codes").get<std::vector<int>>();
        }
        if (je.contains("exclude_permanent_water")) {
            c.exclusions.exclude_permanent_water = je.at("exclude_permanent_water").get<bool>();
        }
        if (je.contains("exclude_seasonal_water")) {
            c.exclusions.exclude_seasonal_water = je.at("exclude_seasonal_water").get<bool>();
        }
    }

    if (j.contains("outlier_multipliers")) {
        c.outlier_multipliers.k_per_index.clear();
        for (const auto& [name, k] : j.at("outlier_multipliers").items()) {
            if (name == "notes") continue;
            index_from_name(name); // validates
            c.outlier_multipliers.k_per_index[name] = k.get<double>();
        }
    }
    if (j.contains("timeseries_iqr_k")) c.timeseries_iqr_k = j.at("timeseries_iqr_k").get<double>();
    if (j.contains("focal_radius_m")) c.focal_radius_m = j.at("focal_radius_m").get<double>();
    if (j.contains("notes")) c.notes = j.at("notes").get<std::string>();

    c.validate();
    return c;
}

inline json to_json(const DistrictCalibration& c) {
    json j;
    j["schema_version"] = 1;
    j["district"] = c.district_id;
    j["season"] = date_range_to_json(c.season);

    json jw;
    for (Stage s : all_stages()) jw[stage_name(s)] = date_range_to_json(c.windows.window(s));
    j["stage_windows"] = jw;
    if (c.allow_nonstandard_durations) j["allow_nonstandard_durations"] = true;

    json jr;
    for (const auto& [stage, rule] : c.rules) jr[stage_name(stage)] = stage_rule_to_json(rule);
    j["stage_rules"] = jr;

    json jt;
    for (const auto& [stage, sigma] : c.tsp.sigma_max) jt[stage_name(stage)] = sigma;
    j["tsp"] = jt;

    if (c.tpa) {
        j["tpa"] = json{{"peak_min", c.tpa->peak_min},
                        {"peak_max", c.tpa->peak_max},
                        {"min_increase", c.tpa->min_increase},
                        {"min_decrease", c.tpa->min_decrease}};
    }
    j["combine_policy"] = combine_policy_name(c.combine_policy);
    j["exclusions"] = json{{"landcover_codes", c.exclusions.landcover_codes},
                           {"exclude_permanent_water", c.exclusions.exclude_permanent_water},
                           {"exclude_seasonal_water", c.exclusions.exclude_seasonal_water}};
    j["outlier_multipliers"] = c.outlier_multipliers.k_per_index;
    j["timeseries_iqr_k"] = c.timeseries_iqr_k;
    j["focal_radius_m"] = c.focal_radius_m;
    if (!c.notes.empty()) j["notes"] = c.notes;
    return j;
}

} // namespace calibration_json

inline DistrictCalibration read_calibration(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read calibration: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("calibration parse error in " + path.string() + ": " + e.what());
    }
    try {
        return calibration_json::from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("calibration schema error in " + path.string() + ": " + e.what());
    }
}

inline void write_calibration(const DistrictCalibration& calib,
                              const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot write calibration: " + path.string());
    out << calibration_json::to_json(calib).dump(2) << '\n';
}

} // namespace ricemap
