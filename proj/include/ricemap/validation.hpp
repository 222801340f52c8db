#pragma once

#include <algorithm>
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

#include "ricemap/calibration.hpp"
#include "ricemap/districts.hpp"
#include "ricemap/error.hpp"
#include "ricemap/grid.hpp"
#include "ricemap/rng.hpp"
#include "ricemap/stats.hpp"

namespace ricemap {

// ---------------------------------------------------------------------------
// Field size strata

// Hectare strata; lower bound inclusive.
enum class FieldSizeCategory { Tiny, Small, Medium, Large };

inline const std::array<FieldSizeCategory, 4>& all_categories() {
    static const std::array<FieldSizeCategory, 4> c = {
        FieldSizeCategory::Tiny, FieldSizeCategory::Small, FieldSizeCategory::Medium,
        FieldSizeCategory::Large};
    return c;
}

inline const char* category_name(FieldSizeCategory c) {
    switch (c) {
        case FieldSizeCategory::Tiny: return "TINY";
        case FieldSizeCategory::Small: return "SMALL";
        case FieldSizeCategory::Medium: return "MEDIUM";
        case FieldSizeCategory::Large: return "LARGE";
    }
    throw internal_error("unhandled field size category");
}

inline FieldSizeCategory field_size_category(double area_ha) {
    require(area_ha > 0.0, "field size category: area must be > 0");
    if (area_ha < 0.2) return FieldSizeCategory::Tiny;
    if (area_ha < 0.8) return FieldSizeCategory::Small;
    if (area_ha < 4.0) return FieldSizeCategory::Medium;
    return FieldSizeCategory::Large;
}

// ---------------------------------------------------------------------------
// Confusion matrix and metrics

struct ConfusionMatrix {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::int64_t total() const { return tp + fp + fn + tn; }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
};

// Degenerate denominators produce absent values, never a division by zero.
struct MetricSet {
    double overall_accuracy = 0.0;
    std::optional<double> balanced_accuracy;
    std::optional<double> kappa;
    std::optional<double> f1;
    std::optional<double> producer_accuracy; // paddy recall
    std::optional<double> user_accuracy;     // paddy precision
    double margin_of_error = 0.0;            // 95% normal approximation
};

inline double f1_from_pa_ua(double pa, double ua) {
    return 2.0 * pa * ua / (pa + ua);
}

inline MetricSet metrics(const ConfusionMatrix& cm) {
    const std::int64_t total = cm.total();
    require(total > 0, "metrics: empty confusion matrix");
    const double n = double(total);

    MetricSet m;
    m.overall_accuracy = double(cm.tp + cm.tn) / n;

    if (cm.tp + cm.fn > 0) m.producer_accuracy = double(cm.tp) / double(cm.tp + cm.fn);
    if (cm.tp + cm.fp > 0) m.user_accuracy = double(cm.tp) / double(cm.tp + cm.fp);
    if (m.producer_accuracy && m.user_accuracy &&
        (*m.producer_accuracy + *m.user_accuracy) > 0.0) {
        m.f1 = f1_from_pa_ua(*m.producer_accuracy, *m.user_accuracy);
    }
    if (m.producer_accuracy && cm.tn + cm.fp > 0) {
        m.balanced_accuracy =
            (*m.producer_accuracy + double(cm.tn) / double(cm.tn + cm.fp)) / 2.0;
    }

    // Chance agreement from the marginal products.
    const double pe = (double(cm.tp + cm.fn) * double(cm.tp + cm.fp) +
                       double(cm.fp + cm.tn) * double(cm.fn + cm.tn)) /
                      (n * n);
    if (pe < 1.0) m.kappa = (m.overall_accuracy - pe) / (1.0 - pe);

    m.margin_of_error =
        1.96 * std::sqrt(m.overall_accuracy * (1.0 - m.overall_accuracy) / n);
    return m;
}

// ---------------------------------------------------------------------------
// Stratified validation points

struct SamplePoint {
    int row = 0;
    int col = 0;
    bool truth_paddy = false;
    bool predicted_paddy = false;
    bool predicted_nodata = false;
    FieldSizeCategory category = FieldSizeCategory::Tiny;
    std::string district;
    std::string polygon_id;
};

struct StratifyOptions {
    int total_points = 500;
    double paddy_weight = 1.5; // enhanced sampling weight for paddy strata
};

struct StratifyResult {
    std::vector<SamplePoint> points;
    std::vector<std::string> warnings;
};

// Area-proportional allocation across (size category x class) strata with a
// configurable paddy up-weight, then uniform sampling without replacement
// within each stratum. Fully determined by the seed.
inline StratifyResult stratify_samples(const std::vector<ReferencePolygon>& polygons,
                                       const BinaryMask& mask, const StratifyOptions& opts,
                                       std::uint64_t seed) {
    require(opts.total_points > 0, "stratify: total_points must be > 0");
    require(opts.paddy_weight > 0.0, "stratify: paddy_weight must be > 0");

    struct Stratum {
        FieldSizeCategory category;
        bool paddy;
        double area = 0.0;
        std::vector<std::pair<const ReferencePolygon*, std::pair<int, int>>> pool;
    };
    // Fixed stratum order: category ascending, non-paddy before paddy.
    std::vector<Stratum> strata;
    for (FieldSizeCategory c : all_categories()) {
        for (bool paddy : {false, true}) {
            strata.push_back({c, paddy, 0.0, {}});
        }
    }
    auto stratum_of = [&](const ReferencePolygon& p) -> Stratum& {
        const FieldSizeCategory c = field_size_category(p.area_ha);
        return strata[std::size_t(c) * 2 + (p.paddy ? 1 : 0)];
    };

    for (const auto& poly : polygons) {
        require(!poly.pixels.empty(),
                "stratify: polygon " + poly.polygon_id + " has unresolved pixels");
        Stratum& s = stratum_of(poly);
        s.area += poly.area_ha;
        for (const auto& px : poly.pixels) s.pool.emplace_back(&poly, px);
    }

    StratifyResult out;
    double weight_sum = 0.0;
    for (const auto& s : strata) {
        if (s.pool.empty()) continue;
        weight_sum += s.area * (s.paddy ? opts.paddy_weight : 1.0);
    }
    require(weight_sum > 0.0, "stratify: no usable strata");

    // Largest-remainder rounding keeps the total at total_points.
    std::vector<double> raw(strata.size(), 0.0);
    std::vector<int> alloc(strata.size(), 0);
    int assigned = 0;
    for (std::size_t i = 0; i < strata.size(); ++i) {
        if (strata[i].pool.empty()) continue;
        raw[i] = opts.total_points * strata[i].area *
                 (strata[i].paddy ? opts.paddy_weight : 1.0) / weight_sum;
        alloc[i] = int(std::floor(raw[i]));
        assigned += alloc[i];
    }
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < strata.size(); ++i) {
        if (!strata[i].pool.empty()) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return (raw[a] - std::floor(raw[a])) > (raw[b] - std::floor(raw[b]));
    });
    for (std::size_t k = 0; assigned < opts.total_points && k < order.size(); ++k) {
        ++alloc[order[k]];
        ++assigned;
    }

    Rng rng(seed);
    for (std::size_t i = 0; i < strata.size(); ++i) {
        Stratum& s = strata[i];
        if (s.pool.empty()) {
            if (s.area > 0.0) {
                out.warnings.push_back(std::string("stratum ") + category_name(s.category) +
                                       (s.paddy ? "/paddy" : "/non_paddy") +
                                       " skipped: no pixels");
            }
            continue;
        }
        int want = alloc[i];
        if (want > int(s.pool.size())) {
            out.warnings.push_back(std::string("stratum ") + category_name(s.category) +
                                   (s.paddy ? "/paddy" : "/non_paddy") + " truncated to " +
                                   std::to_string(s.pool.size()) + " available pixels");
            want = int(s.pool.size());
        }
        // Partial Fisher-Yates draw of `want` pixels.
        auto& pool = s.pool;
        for (int k = 0; k < want; ++k) {
            const std::size_t j = k + std::size_t(rng.next_below(pool.size() - std::size_t(k)));
            std::swap(pool[std::size_t(k)], pool[j]);
            const auto& [poly, px] = pool[std::size_t(k)];
            SamplePoint pt;
            pt.row = px.first;
            pt.col = px.second;
            pt.truth_paddy = poly->paddy;
            pt.category = s.category;
            pt.district = poly->district_id;
            pt.polygon_id = poly->polygon_id;
            const float v = mask.values.at(pt.row, pt.col);
            pt.predicted_nodata = is_nodata(v);
            pt.predicted_paddy = (v == 1.0f);
            out.points.push_back(std::move(pt));
        }
    }
    return out;
}

// Exhaustive, mutually exclusive tabulation keyed by district x category.
struct ConfusionTable {
    std::map<std::pair<std::string, int>, ConfusionMatrix> by_district_category;

    ConfusionMatrix district_total(const std::string& district) const {
        ConfusionMatrix cm;
        for (const auto& [key, m] : by_district_category) {
            if (key.first == district) cm += m;
        }
        return cm;
    }

    ConfusionMatrix grand_total() const {
        ConfusionMatrix cm;
        for (const auto& [key, m] : by_district_category) cm += m;
        return cm;
    }
};

inline ConfusionTable confusion(const std::vector<SamplePoint>& points) {
    ConfusionTable table;
    for (const auto& p : points) {
        require(!p.district.empty(), "confusion: point without district label");
        ConfusionMatrix& cm = table.by_district_category[{p.district, int(p.category)}];
        if (p.truth_paddy) {
            (p.predicted_paddy ? cm.tp : cm.fn)++;
        } else {
            (p.predicted_paddy ? cm.fp : cm.tn)++;
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Areas

inline double area_from_mask(const BinaryMask& mask, double pixel_size_m) {
    require(pixel_size_m > 0.0, "area: pixel size must be > 0");
    return double(mask.count_ones()) * pixel_size_m * pixel_size_m / 10000.0;
}

struct AreaRow {
    std::string district;
    double mapped_ha = 0.0;
    double official_ha = 0.0;
    double diff_percent = 0.0; // 100 * (mapped - official) / official
};

struct AreaStats {
    double r2 = 0.0;
    double rmse_ha = 0.0;
    double mae_ha = 0.0;
    double bias_ha = 0.0;
    double pearson_r = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<AreaRow> rows;
    double mapped_total_ha = 0.0;
    double official_total_ha = 0.0;
};

// Official-vs-mapped reconciliation. District names on both sides go through
// the dictionary; any name that fails to resolve or to match is an error that
// lists the offenders.
inline AreaStats area_stats(const std::map<std::string, double>& mapped_ha,
                            const std::map<std::string, double>& official_ha,
                            const DistrictDictionary& dict = DistrictDictionary::builtin()) {
    std::map<std::string, double> mapped, official;
    std::vector<std::string> bad;
    for (const auto& [name, ha] : mapped_ha) {
        try {
            mapped[dict.normalize(name)] = ha;
        } catch (const validation_error&) {
            bad.push_back("mapped:" + name);
        }
    }
    for (const auto& [name, ha] : official_ha) {
        try {
            official[dict.normalize(name)] = ha;
        } catch (const validation_error&) {
            bad.push_back("official:" + name);
        }
    }
    std::vector<std::string> unmatched;
    for (const auto& [name, _] : mapped) {
        if (!official.count(name)) unmatched.push_back("no-official:" + name);
    }
    if (!bad.empty() || !unmatched.empty()) {
        std::string msg = "area_stats: unmatched district names:";
        for (const auto& s : bad) msg += " " + s;
        for (const auto& s : unmatched) msg += " " + s;
        throw validation_error(msg);
    }
    require(mapped.size() >= 3, "area_stats: need at least 3 matched districts");

    AreaStats st;
    std::vector<double> xs, ys;
    for (const auto& [name, m] : mapped) {
        const double o = official.at(name);
        require(o > 0.0, "area_stats: official area for " + name + " must be > 0");
        AreaRow row{name, m, o, 100.0 * (m - o) / o};
        st.rows.push_back(row);
        xs.push_back(o);
        ys.push_back(m);
        st.mapped_total_ha += m;
        st.official_total_ha += o;
    }
    const LinearFit fit = ols_fit(xs, ys);
    st.slope = fit.slope;
    st.intercept = fit.intercept;
    st.pearson_r = fit.pearson_r;
    st.r2 = fit.pearson_r * fit.pearson_r;
    double se = 0.0, ae = 0.0, be = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double d = ys[i] - xs[i];
        se += d * d;
        ae += std::abs(d);
        be += d;
    }
    st.rmse_ha = std::sqrt(se / double(xs.size()));
    st.mae_ha = ae / double(xs.size());
    st.bias_ha = be / double(xs.size());
    return st;
}

// ---------------------------------------------------------------------------
// Report assembly

struct DistrictValidation {
    std::string district;
    ConfusionMatrix cm;
    MetricSet overall;
    std::map<int, std::pair<ConfusionMatrix, MetricSet>> by_category;
    double area_ha = 0.0;
    std::int64_t points = 0;
};

struct ValidationReport {
    std::vector<DistrictValidation> districts; // sorted by name
    ConfusionMatrix state_cm;
    std::optional<MetricSet> state_metrics;
    double state_area_ha = 0.0;
    std::int64_t state_points = 0;
    std::optional<AreaStats> areas;
    std::vector<std::string> warnings;
};

inline ValidationReport build_report(const ConfusionTable& table,
                                     const std::map<std::string, double>& district_area_ha,
                                     const std::optional<AreaStats>& areas,
                                     std::vector<std::string> warnings = {}) {
    ValidationReport report;
    report.areas = areas;
    report.warnings = std::move(warnings);

    std::set<std::string> names;
    for (const auto& [key, _] : table.by_district_category) names.insert(key.first);
    for (const auto& [name, _] : district_area_ha) names.insert(name);

    for (const auto& name : names) {
        DistrictValidation dv;
        dv.district = name;
        dv.cm = table.district_total(name);
        dv.points = dv.cm.total();
        if (dv.points > 0) dv.overall = metrics(dv.cm);
        for (const auto& [key, cm] : table.by_district_category) {
            if (key.first != name || cm.total() == 0) continue;
            dv.by_category[key.second] = {cm, metrics(cm)};
        }
        const auto it = district_area_ha.find(name);
        if (it != district_area_ha.end()) dv.area_ha = it->second;
        report.state_cm += dv.cm;
        report.state_area_ha += dv.area_ha;
        report.state_points += dv.points;
        report.districts.push_back(std::move(dv));
    }
    if (report.state_cm.total() > 0) report.state_metrics = metrics(report.state_cm);
    return report;
}

namespace detail {

inline nlohmann::json metric_set_to_json(const MetricSet& m) {
    nlohmann::json j;
    j["overall_accuracy"] = m.overall_accuracy;
    j["margin_of_error"] = m.margin_of_error;
    auto opt = [&](const char* key, const std::optional<double>& v) {
        if (v) {
            j[key] = *v;
        } else {
            j[key] = nullptr; // undefined for a degenerate denominator
        }
    };
    opt("balanced_accuracy", m.balanced_accuracy);
    opt("kappa", m.kappa);
    opt("f1", m.f1);
    opt("producer_accuracy", m.producer_accuracy);
    opt("user_accuracy", m.user_accuracy);
    return j;
}

inline nlohmann::json cm_to_json(const ConfusionMatrix& cm) {
    return nlohmann::json{{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}};
}

} // namespace detail

inline nlohmann::json report_to_json(const ValidationReport& report) {
    nlohmann::json j;
    j["schema_version"] = 1;
    // Margin-of-error uses the 95% normal approximation; noted for readers of
    // the raw document.
    j["metadata"] = {{"margin_of_error_method", "normal_approximation_95"},
                     {"field_size_units", "hectares"}};

    nlohmann::json districts = nlohmann::json::array();
    for (const auto& dv : report.districts) {
        nlohmann::json d;
        d["district"] = dv.district;
        d["confusion"] = detail::cm_to_json(dv.cm);
        if (dv.points > 0) d["metrics"] = detail::metric_set_to_json(dv.overall);
        d["area_ha"] = dv.area_ha;
        d["points"] = dv.points;
        nlohmann::json cats;
        for (const auto& [cat, pair] : dv.by_category) {
            nlohmann::json c;
            c["confusion"] = detail::cm_to_json(pair.first);
            c["metrics"] = detail::metric_set_to_json(pair.second);
            cats[category_name(FieldSizeCategory(cat))] = c;
        }
        if (!cats.is_null()) d["by_field_size"] = cats;
        districts.push_back(d);
    }
    j["districts"] = districts;

    nlohmann::json state;
    state["area_ha"] = report.state_area_ha;
    state["points"] = report.state_points;
    state["confusion"] = detail::cm_to_json(report.state_cm);
    if (report.state_metrics) state["metrics"] = detail::metric_set_to_json(*report.state_metrics);
    j["state"] = state;

    if (report.areas) {
        const AreaStats& a = *report.areas;
        nlohmann::json ja;
        ja["r2"] = a.r2;
        ja["rmse_ha"] = a.rmse_ha;
        ja["mae_ha"] = a.mae_ha;
        ja["bias_ha"] = a.bias_ha;
        ja["pearson_r"] = a.pearson_r;
        ja["slope"] = a.slope;
        ja["intercept"] = a.intercept;
        ja["mapped_total_ha"] = a.mapped_total_ha;
        ja["official_total_ha"] = a.official_total_ha;
        ja["total_diff_percent"] =
            100.0 * (a.mapped_total_ha - a.official_total_ha) / a.official_total_ha;
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : a.rows) {
            rows.push_back({{"district", r.district},
                            {"mapped_ha", r.mapped_ha},
                            {"official_ha", r.official_ha},
                            {"diff_percent", r.diff_percent}});
        }
        ja["districts"] = rows;
        j["area_validation"] = ja;
    }
    if (!report.warnings.empty()) j["warnings"] = report.warnings;
    return j;
}

// Flat per-district table: district,oa,kappa,f1,pa,ua,area_ha,points,moe.
// oa/pa/ua/moe in percent, kappa and f1 as fractions.
inline void write_report_csv(const ValidationReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot write report CSV: " + path.string());
    out << "district,oa,kappa,f1,pa,ua,area_ha,points,moe\n";
    char buf[64];
    auto pct = [&](const std::optional<double>& v) -> std::string {
        if (!v) return "";
        std::snprintf(buf, sizeof(buf), "%.1f", *v * 100.0);
        return buf;
    };
    auto frac = [&](const std::optional<double>& v) -> std::string {
        if (!v) return "";
        std::snprintf(buf, sizeof(buf), "%.3f", *v);
        return buf;
    };
    for (const auto& dv : report.districts) {
        out << dv.district << ',';
        if (dv.points > 0) {
            out << pct(std::optional<double>(dv.overall.overall_accuracy)) << ','
                << frac(dv.overall.kappa) << ',' << frac(dv.overall.f1) << ','
                << pct(dv.overall.producer_accuracy) << ',' << pct(dv.overall.user_accuracy)
                << ',';
        } else {
            out << ",,,,,";
        }
        std::snprintf(buf, sizeof(buf), "%.2f", dv.area_ha);
        out << buf << ',' << dv.points << ',';
        out << (dv.points > 0 ? pct(std::optional<double>(dv.overall.margin_of_error)) : "")
            << '\n';
    }
}

inline void write_points_csv(const std::vector<SamplePoint>& points,
                             const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot write points CSV: " + path.string());
    out << "district,polygon_id,row,col,category,truth,predicted,predicted_nodata\n";
    for (const auto& p : points) {
        out << p.district << ',' << p.polygon_id << ',' << p.row << ',' << p.col << ','
            << category_name(p.category) << ',' << (p.truth_paddy ? "paddy" : "non_paddy") << ','
            << (p.predicted_paddy ? "paddy" : "non_paddy") << ',' << (p.predicted_nodata ? 1 : 0)
            << '\n';
    }
}

} // namespace ricemap
