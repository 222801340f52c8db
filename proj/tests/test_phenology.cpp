#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ricemap/calibration_io.hpp"
#include "ricemap/phenology.hpp"
#include "ricemap/rng.hpp"
#include "ricemap/savgol.hpp"

using namespace ricemap;
namespace fs = std::filesystem;

namespace {

FieldProfile make_field(const std::string& id, const std::vector<int>& days,
                        const std::vector<double>& ndvi, const std::string& klass = "paddy") {
    FieldProfile f;
    f.field_id = id;
    f.klass = klass;
    f.district = "Nalgonda";
    const Date base = Date::from_ymd(2019, 1, 1);
    for (std::size_t i = 0; i < days.size(); ++i) {
        f.dates.push_back(base.plus_days(days[i]));
        f.series["NDVI"].push_back(ndvi[i]);
    }
    return f;
}

IndexCube series_cube(const std::vector<int>& days, const std::vector<float>& values) {
    IndexCube cube;
    cube.grid = GeoGrid{0, 0, 10.0, 1, 1, "test"};
    cube.index_name = "NDVI";
    const Date base = Date::from_ymd(2019, 1, 1);
    for (std::size_t i = 0; i < days.size(); ++i) {
        cube.dates.push_back(base.plus_days(days[i]));
        cube.values.push_back(values[i]);
    }
    return cube;
}

} // namespace

TEST_CASE("savgol reproduces constants and cubics") {
    const std::vector<double> constant(12, 0.5);
    const auto smoothed = smooth_savgol(constant, 7, 3);
    REQUIRE_FALSE(smoothed.warned);
    for (double v : smoothed.values) CHECK_THAT(v, Catch::Matchers::WithinAbs(0.5, 1e-12));

    std::vector<double> cubic;
    for (int i = 0; i < 20; ++i) {
        const double t = i * 0.3 - 2.0;
        cubic.push_back(t * t * t);
    }
    const auto s2 = smooth_savgol(cubic, 7, 3);
    for (std::size_t i = 0; i < cubic.size(); ++i) {
        CHECK_THAT(s2.values[i], Catch::Matchers::WithinAbs(cubic[i], 1e-9));
    }
}

TEST_CASE("savgol impulse center equals the filter's central coefficient") {
    std::vector<double> impulse(7, 0.0);
    impulse[3] = 1.0;
    const auto smoothed = smooth_savgol(impulse, 7, 3);
    CHECK_THAT(smoothed.values[3], Catch::Matchers::WithinAbs(7.0 / 21.0, 1e-12));
}

TEST_CASE("savgol edge cases") {
    SECTION("shorter than the window: unsmoothed with a warning") {
        const std::vector<double> five = {1, 2, 3, 4, 5};
        const auto r = smooth_savgol(five, 7, 3);
        CHECK(r.warned);
        CHECK(r.values == five);
    }
    SECTION("window must be odd, order below window") {
        REQUIRE_THROWS_AS(smooth_savgol({1, 2, 3}, 4, 2), validation_error);
        REQUIRE_THROWS_AS(smooth_savgol({1, 2, 3}, 3, 3), validation_error);
    }
    SECTION("nodata positions are interpolated for fitting and re-flagged after") {
        std::vector<double> series(12, 0.5);
        series[4] = double(kNodata);
        const auto r = smooth_savgol(series, 7, 3);
        REQUIRE(r.values.size() == series.size());
        CHECK(std::isnan(r.values[4]));
        for (std::size_t i = 0; i < series.size(); ++i) {
            if (i != 4) CHECK_THAT(r.values[i], Catch::Matchers::WithinAbs(0.5, 1e-9));
        }
    }
}

TEST_CASE("transition detection majority rule") {
    // fields crossing 0.5 upward on days 10, 20, 30: with 3 fields the
    // >50% majority (2 of 3) is reached on day 20
    auto ramp = [](int cross_day) {
        std::vector<int> days;
        std::vector<double> vals;
        for (int d = 0; d <= 60; d += 5) {
            days.push_back(d);
            vals.push_back(d >= cross_day ? 0.9 : 0.1);
        }
        return std::pair(days, vals);
    };
    std::vector<FieldProfile> fields;
    int id = 0;
    for (int day : {10, 20, 30}) {
        auto [days, vals] = ramp(day);
        fields.push_back(make_field("f" + std::to_string(id++), days, vals));
    }
    std::array<TransitionSpec, 3> specs = {TransitionSpec{0.5, true, false, 0.0},
                                           TransitionSpec{0.85, true, false, 0.0},
                                           TransitionSpec{0.0, false, true, 0.10}};
    // season long enough that windows are orderable
    const DateRange season{Date::from_ymd(2019, 1, 1), Date::from_ymd(2019, 5, 1)};

    SECTION("second crossing wins with three fields") {
        // only the first transition matters here; make the later ones resolvable
        // by reusing the same fields with a peak that eventually declines
        std::vector<FieldProfile> rich;
        for (int day : {10, 20, 30}) {
            std::vector<int> days;
            std::vector<double> vals;
            for (int d = 0; d <= 110; d += 5) {
                days.push_back(d);
                double v = 0.1;
                if (d >= day) v = 0.55;
                if (d >= day + 30) v = 0.9;
                if (d >= day + 60) v = 0.9 - 0.02 * (d - day - 60);
                vals.push_back(v);
            }
            rich.push_back(make_field("r" + std::to_string(day), days, vals));
        }
        TransitionDiagnostics diag;
        const auto w = detect_stage_transitions(rich, specs, season, "Nalgonda", &diag);
        CHECK(diag.transition_dates[0] == Date::from_ymd(2019, 1, 1).plus_days(20));
        CHECK(w.window(Stage::Vegetative).start == Date::from_ymd(2019, 1, 1).plus_days(20));
    }

    SECTION("all fields crossing the same day") {
        std::vector<FieldProfile> same;
        for (int i = 0; i < 3; ++i) {
            std::vector<int> days;
            std::vector<double> vals;
            for (int d = 0; d <= 110; d += 5) {
                days.push_back(d);
                double v = d >= 15 ? 0.55 : 0.1;
                if (d >= 45) v = 0.9;
                if (d >= 75) v = 0.9 - 0.02 * (d - 75);
                vals.push_back(v);
            }
            same.push_back(make_field("s" + std::to_string(i), days, vals));
        }
        TransitionDiagnostics diag;
        detect_stage_transitions(same, specs, season, "Nalgonda", &diag);
        CHECK(diag.transition_dates[0] == Date::from_ymd(2019, 1, 1).plus_days(15));
    }

    SECTION("exactly 50% is not a majority") {
        std::vector<FieldProfile> four;
        for (int i = 0; i < 2; ++i) {
            auto [days, vals] = ramp(10);
            four.push_back(make_field("a" + std::to_string(i), days, vals));
        }
        for (int i = 0; i < 2; ++i) {
            auto [days, vals] = ramp(1000); // never crosses
            four.push_back(make_field("b" + std::to_string(i), days, vals));
        }
        REQUIRE_THROWS_WITH(detect_stage_transitions(four, specs, season, "Nalgonda"),
                            Catch::Matchers::ContainsSubstring("unresolved"));
    }

    SECTION("fewer than 2 fields is an error") {
        std::vector<FieldProfile> one = {fields[0]};
        REQUIRE_THROWS_AS(detect_stage_transitions(one, specs, season, "Nalgonda"),
                          validation_error);
    }
}

TEST_CASE("observations outside the season never carry a crossing") {
    std::array<TransitionSpec, 3> specs = {TransitionSpec{0.5, true, false, 0.0},
                                           TransitionSpec{0.8, true, false, 0.0},
                                           TransitionSpec{0.0, false, true, 0.10}};
    // fields whose profiles include a spurious pre-season spike above 0.5
    auto field_with_spike = [&](const std::string& id) {
        std::vector<int> days = {-30}; // before the season
        std::vector<double> vals = {0.9};
        for (int d = 0; d <= 140; d += 5) {
            days.push_back(d);
            double v = 0.2;
            if (d >= 25) v = 0.6;
            if (d >= 60) v = 0.9;
            if (d >= 100) v = 0.9 - 0.02 * (d - 100);
            vals.push_back(v);
        }
        return make_field(id, days, vals);
    };
    std::vector<FieldProfile> fields = {field_with_spike("a"), field_with_spike("b"),
                                        field_with_spike("c")};
    const DateRange season{Date::from_ymd(2019, 1, 1), Date::from_ymd(2019, 6, 1)};
    TransitionDiagnostics diag;
    detect_stage_transitions(fields, specs, season, "Nalgonda", &diag);
    CHECK(diag.transition_dates[0] == Date::from_ymd(2019, 1, 1).plus_days(25));
}

TEST_CASE("transition thresholds must rise with the stage sequence") {
    std::array<TransitionSpec, 3> bad = {TransitionSpec{0.6, true, false, 0.0},
                                         TransitionSpec{0.4, true, false, 0.0},
                                         TransitionSpec{0.0, false, true, 0.10}};
    std::vector<FieldProfile> fields = {make_field("a", {0, 5}, {0.1, 0.9}),
                                        make_field("b", {0, 5}, {0.1, 0.9})};
    const DateRange season{Date::from_ymd(2019, 1, 1), Date::from_ymd(2019, 6, 1)};
    REQUIRE_THROWS_AS(detect_stage_transitions(fields, bad, season, "Nalgonda"),
                      validation_error);
}

TEST_CASE("fields crossing a threshold more than once are flagged") {
    std::array<TransitionSpec, 3> specs = {TransitionSpec{0.5, true, false, 0.0},
                                           TransitionSpec{0.8, true, false, 0.0},
                                           TransitionSpec{0.0, false, true, 0.10}};
    const DateRange season{Date::from_ymd(2019, 1, 1), Date::from_ymd(2019, 6, 1)};
    auto smooth_field = [&](const std::string& id, bool noisy) {
        std::vector<int> days;
        std::vector<double> vals;
        for (int d = 0; d <= 140; d += 5) {
            days.push_back(d);
            double v = 0.2;
            if (d >= 20) v = 0.6;
            if (noisy && d == 30) v = 0.3; // dips back below, crosses again
            if (d >= 60) v = 0.9;
            if (d >= 100) v = 0.9 - 0.02 * (d - 100);
            vals.push_back(v);
        }
        return make_field(id, days, vals);
    };
    std::vector<FieldProfile> fields = {smooth_field("clean-1", false),
                                        smooth_field("clean-2", false),
                                        smooth_field("noisy", true)};
    TransitionDiagnostics diag;
    detect_stage_transitions(fields, specs, season, "Nalgonda", &diag);
    REQUIRE(diag.multi_crossing_fields[0].size() == 1);
    CHECK(diag.multi_crossing_fields[0][0] == "noisy");
    // the first crossing is the one that counts
    CHECK(diag.transition_dates[0] == Date::from_ymd(2019, 1, 1).plus_days(20));
}

TEST_CASE("adding an earlier-crossing field never delays a transition") {
    Rng rng(21);
    std::array<TransitionSpec, 3> specs = {TransitionSpec{0.5, true, false, 0.0},
                                           TransitionSpec{0.8, true, false, 0.0},
                                           TransitionSpec{0.0, false, true, 0.10}};
    const DateRange season{Date::from_ymd(2019, 1, 1), Date::from_ymd(2019, 6, 1)};
    auto trajectory = [&](int cross) {
        std::vector<int> days;
        std::vector<double> vals;
        for (int d = 0; d <= 140; d += 5) {
            days.push_back(d);
            double v = 0.2;
            if (d >= cross) v = 0.6;
            if (d >= cross + 35) v = 0.9;
            if (d >= cross + 70) v = 0.9 - 0.015 * (d - cross - 70);
            vals.push_back(v);
        }
        return std::pair(days, vals);
    };
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<FieldProfile> fields;
        int earliest = 1000;
        for (int i = 0; i < 5; ++i) {
            const int cross = 10 + int(rng.next_below(40) / 5 * 5);
            earliest = std::min(earliest, cross);
            auto [days, vals] = trajectory(cross);
            fields.push_back(make_field("t" + std::to_string(i), days, vals));
        }
        TransitionDiagnostics before;
        detect_stage_transitions(fields, specs, season, "Nalgonda", &before);
        auto [days, vals] = trajectory(5); // earlier than everyone
        fields.push_back(make_field("early", days, vals));
        TransitionDiagnostics after;
        detect_stage_transitions(fields, specs, season, "Nalgonda", &after);
        for (int t = 0; t < 3; ++t) {
            CHECK(after.transition_dates[std::size_t(t)] <=
                  before.transition_dates[std::size_t(t)]);
        }
    }
}

TEST_CASE("stage composites") {
    StageWindows w;
    w.district_id = "Nalgonda";
    w.window(Stage::LandPreparation) = {Date::from_ymd(2019, 1, 1), Date::from_ymd(2019, 1, 31)};
    w.window(Stage::Vegetative) = {Date::from_ymd(2019, 2, 1), Date::from_ymd(2019, 3, 1)};
    w.window(Stage::Reproductive) = {Date::from_ymd(2019, 3, 2), Date::from_ymd(2019, 4, 5)};
    w.window(Stage::Ripening) = {Date::from_ymd(2019, 4, 6), Date::from_ymd(2019, 5, 20)};

    SECTION("mean of two valid observations") {
        const auto cube = series_cube({0, 10, 40}, {0.4f, 0.6f, 0.9f});
        const auto comp = build_stage_composite(cube, w, Stage::LandPreparation);
        CHECK_THAT(double(comp.mean.at(0, 0)), Catch::Matchers::WithinAbs(0.5, 1e-7));
        CHECK(comp.count.at(0, 0) == 2);
    }
    SECTION("three observations") {
        const auto cube = series_cube({0, 10, 20}, {0.2f, 0.3f, 0.7f});
        const auto comp = build_stage_composite(cube, w, Stage::LandPreparation);
        CHECK_THAT(double(comp.mean.at(0, 0)), Catch::Matchers::WithinAbs(0.4, 1e-7));
    }
    SECTION("all observations nodata at a pixel") {
        const auto cube = series_cube({0, 10}, {kNodata, kNodata});
        const auto comp = build_stage_composite(cube, w, Stage::LandPreparation);
        CHECK(std::isnan(comp.mean.at(0, 0)));
        CHECK(comp.count.at(0, 0) == 0);
    }
    SECTION("empty window is an error naming the stage") {
        const auto cube = series_cube({0, 10}, {0.4f, 0.6f});
        REQUIRE_THROWS_WITH(build_stage_composite(cube, w, Stage::Reproductive),
                            Catch::Matchers::ContainsSubstring("reproductive"));
    }
    SECTION("composite mean lies within contributing observations") {
        Rng rng(3);
        for (int t = 0; t < 100; ++t) {
            std::vector<int> days;
            std::vector<float> vals;
            float lo = 1e9f, hi = -1e9f;
            for (int d = 0; d < 30; d += 5) {
                days.push_back(d);
                const float v = float(rng.next_double());
                vals.push_back(v);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            const auto comp =
                build_stage_composite(series_cube(days, vals), w, Stage::LandPreparation);
            CHECK(comp.mean.at(0, 0) >= lo - 1e-7f);
            CHECK(comp.mean.at(0, 0) <= hi + 1e-7f);
        }
    }
}

TEST_CASE("stage windows validate ordering and durations") {
    StageWindows w;
    w.district_id = "Nalgonda";
    w.window(Stage::LandPreparation) = {Date::from_ymd(2019, 1, 1), Date::from_ymd(2019, 1, 31)};
    w.window(Stage::Vegetative) = {Date::from_ymd(2019, 2, 1), Date::from_ymd(2019, 3, 1)};
    w.window(Stage::Reproductive) = {Date::from_ymd(2019, 3, 2), Date::from_ymd(2019, 4, 5)};
    w.window(Stage::Ripening) = {Date::from_ymd(2019, 4, 6), Date::from_ymd(2019, 5, 20)};
    REQUIRE_NOTHROW(w.validate());

    SECTION("overlap rejected") {
        auto bad = w;
        bad.window(Stage::Vegetative).start = Date::from_ymd(2019, 1, 20);
        REQUIRE_THROWS_AS(bad.validate(), validation_error);
    }
    SECTION("too-short stage rejected unless overridden") {
        auto bad = w;
        bad.window(Stage::Vegetative) = {Date::from_ymd(2019, 2, 1), Date::from_ymd(2019, 2, 10)};
        bad.window(Stage::Reproductive).start = Date::from_ymd(2019, 2, 11);
        REQUIRE_THROWS_WITH(bad.validate(), Catch::Matchers::ContainsSubstring("17-64"));
        REQUIRE_NOTHROW(bad.validate(/*allow_nonstandard_durations=*/true));
    }
}

TEST_CASE("stage windows round-trip through the calibration document without drift") {
    DistrictCalibration calib;
    calib.district_id = "Nalgonda";
    calib.season = {Date::from_ymd(2018, 12, 15), Date::from_ymd(2019, 5, 20)};
    calib.windows.district_id = "Nalgonda";
    calib.windows.window(Stage::LandPreparation) = {Date::from_ymd(2018, 12, 15),
                                                    Date::from_ymd(2019, 1, 20)};
    calib.windows.window(Stage::Vegetative) = {Date::from_ymd(2019, 1, 21),
                                               Date::from_ymd(2019, 2, 20)};
    calib.windows.window(Stage::Reproductive) = {Date::from_ymd(2019, 2, 21),
                                                 Date::from_ymd(2019, 3, 25)};
    calib.windows.window(Stage::Ripening) = {Date::from_ymd(2019, 3, 26),
                                             Date::from_ymd(2019, 5, 20)};
    StageRule basic;
    basic.stage = Stage::LandPreparation;
    basic.method = RuleMethod::Basic;
    RangeBound b;
    b.index = IndexKind::NDVI;
    b.min = 0.15;
    b.max = 0.30;
    basic.bounds = {b};
    for (Stage s : {Stage::LandPreparation, Stage::Vegetative, Stage::Reproductive}) {
        basic.stage = s;
        calib.rules[s] = basic;
    }
    calib.tsp.sigma_max[Stage::LandPreparation] = 0.15;

    const fs::path file = fs::temp_directory_path() / "ricemap_windows_roundtrip.json";
    write_calibration(calib, file);
    const auto back = read_calibration(file);
    for (Stage s : all_stages()) {
        CHECK(back.windows.window(s).start == calib.windows.window(s).start);
        CHECK(back.windows.window(s).end == calib.windows.window(s).end);
    }
    // second round trip is byte-stable
    const fs::path file2 = fs::temp_directory_path() / "ricemap_windows_roundtrip2.json";
    write_calibration(back, file2);
    std::ifstream a(file), c(file2);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sc((std::istreambuf_iterator<char>(c)), {});
    CHECK(sa == sc);
}

TEST_CASE("reference profile CSV reader") {
    const fs::path file = fs::temp_directory_path() / "ricemap_profiles.csv";
    {
        std::ofstream out(file, std::ios::trunc);
        out << "field_id,date,NDVI,MNDWI,LSWI,EVI,SAVI,class,district\n";
        out << "f1,2019-01-10,0.2,0.1,0.3,0.15,0.12,paddy,Nalgonda\n";
        out << "f1,2019-01-05,0.1,0.1,0.3,0.15,0.12,paddy,Nalgonda\n"; // out of order
        out << "f2,2019-01-05,0.5,,0.2,0.3,0.25,non_paddy,Nalgonda\n"; // missing MNDWI
    }
    const auto profiles = read_reference_profiles(file.string());
    REQUIRE(profiles.size() == 2);
    CHECK(profiles[0].field_id == "f1");
    CHECK(profiles[0].dates[0] == Date::from_ymd(2019, 1, 5)); // sorted
    CHECK(profiles[0].series.at("NDVI")[0] == 0.1);
    CHECK(profiles[0].klass == "paddy");
    CHECK(std::isnan(profiles[1].series.at("MNDWI")[0]));

    SECTION("wrong header rejected") {
        std::ofstream out(file, std::ios::trunc);
        out << "field,when,NDVI\n";
        out.close();
        REQUIRE_THROWS_AS(read_reference_profiles(file.string()), validation_error);
    }
}
