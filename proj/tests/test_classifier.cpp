#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "ricemap/calibration_io.hpp"
#include "ricemap/classifier.hpp"
#include "ricemap/rng.hpp"
#include "synthetic.hpp"

using namespace ricemap;
namespace fs = std::filesystem;

namespace {

GeoGrid unit_grid(int size = 1) { return GeoGrid{0, 0, 10.0, size, size, "test"}; }

// Single-pixel composite set with fixed per-index values.
CompositeSet composites_for(Stage stage, const std::map<IndexKind, float>& values,
                            const GeoGrid& grid = unit_grid()) {
    CompositeSet set;
    for (const auto& [k, v] : values) {
        StageComposite comp;
        comp.stage = stage;
        comp.index = k;
        comp.grid = grid;
        comp.mean = Plane<float>(grid.height, grid.width, v);
        comp.count = Plane<std::int32_t>(grid.height, grid.width, 1);
        set.put(std::move(comp));
    }
    return set;
}

RangeBound bound(IndexKind k, std::optional<double> lo, std::optional<double> hi) {
    RangeBound b;
    b.index = k;
    b.min = lo;
    b.max = hi;
    return b;
}

RatioCriterion ratio(IndexKind a, IndexKind b, RatioCriterion::Comparator cmp, double lo,
                     double hi = 0.0) {
    RatioCriterion r;
    r.kind = RatioCriterion::Kind::Ratio;
    r.a = a;
    r.b = b;
    r.comparator = cmp;
    r.bound_lo = lo;
    r.bound_hi = hi;
    return r;
}

BinaryMask mask_of(const GeoGrid& grid, const std::vector<float>& values) {
    BinaryMask m = BinaryMask::filled(grid, 0.0f);
    m.values.data() = values;
    return m;
}

} // namespace

TEST_CASE("stage rule: land preparation bounds") {
    StageRule rule;
    rule.stage = Stage::LandPreparation;
    rule.method = RuleMethod::Basic;
    rule.bounds = {bound(IndexKind::NDVI, 0.15, 0.30), bound(IndexKind::LSWI, 0.10, 0.45),
                   bound(IndexKind::MNDWI, 0.0, std::nullopt)};

    auto set = composites_for(Stage::LandPreparation, {{IndexKind::NDVI, 0.20f},
                                                       {IndexKind::LSWI, 0.30f},
                                                       {IndexKind::MNDWI, 0.05f}});
    CHECK(apply_stage_rule(set, rule, unit_grid()).values.at(0, 0) == 1.0f);

    auto dry = composites_for(Stage::LandPreparation, {{IndexKind::NDVI, 0.20f},
                                                       {IndexKind::LSWI, 0.05f},
                                                       {IndexKind::MNDWI, 0.05f}});
    CHECK(apply_stage_rule(dry, rule, unit_grid()).values.at(0, 0) == 0.0f);
}

TEST_CASE("stage rule: flooded-field moisture relationship") {
    StageRule rule;
    rule.stage = Stage::LandPreparation;
    rule.method = RuleMethod::LswiEvi;

    auto set = composites_for(Stage::LandPreparation,
                              {{IndexKind::LSWI, 0.40f}, {IndexKind::EVI, 0.44f}});
    // 0.40 >= 0.44 - 0.05
    CHECK(apply_stage_rule(set, rule, unit_grid()).values.at(0, 0) == 1.0f);

    auto fails = composites_for(Stage::LandPreparation,
                                {{IndexKind::LSWI, 0.38f}, {IndexKind::EVI, 0.44f}});
    CHECK(apply_stage_rule(fails, rule, unit_grid()).values.at(0, 0) == 0.0f);
}

TEST_CASE("stage rule: reproductive thresholds and degenerate ratio") {
    StageRule rule;
    rule.stage = Stage::Reproductive;
    rule.method = RuleMethod::Basic;
    rule.bounds = {bound(IndexKind::NDVI, 0.45, 0.95)};
    auto low = composites_for(Stage::Reproductive, {{IndexKind::NDVI, 0.30f}});
    CHECK(apply_stage_rule(low, rule, unit_grid()).values.at(0, 0) == 0.0f);

    StageRule with_ratio;
    with_ratio.stage = Stage::Reproductive;
    with_ratio.method = RuleMethod::RatioBased;
    with_ratio.bounds = {bound(IndexKind::NDVI, 0.45, 0.95)};
    with_ratio.ratios = {ratio(IndexKind::NDVI, IndexKind::LSWI,
                               RatioCriterion::Comparator::Within, 1.35, 3.5)};
    auto zero_den = composites_for(Stage::Reproductive,
                                   {{IndexKind::NDVI, 0.60f}, {IndexKind::LSWI, 0.0f}});
    CHECK(apply_stage_rule(zero_den, with_ratio, unit_grid()).values.at(0, 0) == 0.0f);
}

TEST_CASE("stage rule: nodata composite propagates, missing composite errors") {
    StageRule rule;
    rule.stage = Stage::Vegetative;
    rule.method = RuleMethod::Basic;
    rule.bounds = {bound(IndexKind::NDVI, 0.25, 0.70)};

    auto set = composites_for(Stage::Vegetative, {{IndexKind::NDVI, kNodata}});
    CHECK(std::isnan(apply_stage_rule(set, rule, unit_grid()).values.at(0, 0)));

    CompositeSet empty;
    REQUIRE_THROWS_WITH(apply_stage_rule(empty, rule, unit_grid()),
                        Catch::Matchers::ContainsSubstring("missing composite"));
}

TEST_CASE("stage rule validation") {
    StageRule rule;
    rule.stage = Stage::Vegetative;
    rule.method = RuleMethod::Basic;
    rule.ratios = {ratio(IndexKind::NDVI, IndexKind::LSWI, RatioCriterion::Comparator::Less, 2.0)};
    REQUIRE_THROWS_AS(rule.validate(), validation_error); // basic takes no ratios

    rule.method = RuleMethod::RatioBased;
    REQUIRE_NOTHROW(rule.validate());
    rule.ratios.assign(4, rule.ratios[0]);
    REQUIRE_THROWS_AS(rule.validate(), validation_error); // at most 3

    RangeBound reversed = bound(IndexKind::NDVI, 0.5, 0.2);
    REQUIRE_THROWS_AS(reversed.validate(), validation_error);
}

TEST_CASE("difference criteria") {
    RatioCriterion diff;
    diff.kind = RatioCriterion::Kind::Difference;
    diff.a = IndexKind::MNDWI;
    diff.b = IndexKind::NDVI;
    diff.comparator = RatioCriterion::Comparator::Greater;
    diff.bound_lo = 0.0;
    CHECK(diff.pass(0.2, 0.1));  // MNDWI - NDVI = 0.1 > 0
    CHECK_FALSE(diff.pass(0.1, 0.2));
}

TEST_CASE("temporal stability filter") {
    SECTION("constant series passes any ceiling") {
        const std::vector<float> constant(6, 0.5f);
        CHECK(tsp_filter(constant, 0.01).pass);
    }
    SECTION("sigma 0.3 against ceiling 0.15 fails") {
        const std::vector<float> swing = {0.2f, 0.8f};
        const auto r = tsp_filter(swing, 0.15);
        CHECK_FALSE(r.pass);
        CHECK_FALSE(r.flagged);
    }
    SECTION("fewer than 2 observations passes with a flag") {
        const auto r = tsp_filter({0.4f, kNodata, kNodata}, 0.05);
        CHECK(r.pass);
        CHECK(r.flagged);
    }
    SECTION("pass set shrinks as the ceiling tightens") {
        Rng rng(9);
        for (int t = 0; t < 200; ++t) {
            std::vector<float> series(6, 0.0f);
            for (auto& v : series) v = float(rng.next_double());
            const bool loose = tsp_filter(series, 0.20).pass;
            const bool tight = tsp_filter(series, 0.10).pass;
            if (tight) CHECK(loose);
        }
    }
}

TEST_CASE("temporal pattern filter") {
    TpaParams params; // 0.60-0.90, >=0.15, >=0.15
    SECTION("rice-like trajectory passes") {
        CHECK(tpa_filter(0.18f, 0.83f, 0.19f, params)); // increase 0.65, decrease 0.64
    }
    SECTION("peak above the ceiling fails") {
        CHECK_FALSE(tpa_filter(0.18f, 0.95f, 0.19f, params));
    }
    SECTION("flat trajectory fails the increase") {
        CHECK_FALSE(tpa_filter(0.70f, 0.70f, 0.70f, params));
    }
    SECTION("nodata input fails") {
        CHECK_FALSE(tpa_filter(kNodata, 0.83f, 0.19f, params));
        CHECK_FALSE(tpa_filter(0.18f, kNodata, 0.19f, params));
        CHECK_FALSE(tpa_filter(0.18f, 0.83f, kNodata, params));
    }
    SECTION("shifting all inputs can break the peak bounds") {
        CHECK(tpa_filter(0.10f, 0.75f, 0.12f, params));
        CHECK_FALSE(tpa_filter(0.30f, 0.95f, 0.32f, params)); // same deltas, peak too high
    }
    SECTION("parameter validation") {
        TpaParams bad;
        bad.peak_min = 0.9;
        bad.peak_max = 0.6;
        REQUIRE_THROWS_AS(bad.validate(), validation_error);
    }
}

TEST_CASE("stage combination policies") {
    const GeoGrid grid = unit_grid(2); // 4 pixels
    // pixel 0: vegetative+reproductive; pixel 1: ripening pattern only;
    // pixel 2: all three; pixel 3: none
    std::map<Stage, BinaryMask> masks;
    masks[Stage::LandPreparation] = mask_of(grid, {0, 0, 1, 0});
    masks[Stage::Vegetative] = mask_of(grid, {1, 0, 1, 0});
    masks[Stage::Reproductive] = mask_of(grid, {1, 0, 1, 0});
    masks[Stage::Ripening] = mask_of(grid, {1, 1, 1, 1}); // must be ignored

    const auto majority = combine_stages(masks, CombinePolicy::Majority);
    CHECK(majority.values.data() == std::vector<float>{1, 0, 1, 0});

    const auto all = combine_stages(masks, CombinePolicy::All);
    CHECK(all.values.data() == std::vector<float>{0, 0, 1, 0});

    const auto any = combine_stages(masks, CombinePolicy::Any);
    CHECK(any.values.data() == std::vector<float>{1, 0, 1, 0});

    SECTION("a pixel positive only in ripening stays 0 under every policy") {
        for (auto policy : {CombinePolicy::Majority, CombinePolicy::All, CombinePolicy::Any}) {
            CHECK(combine_stages(masks, policy).values.at(0, 1) == 0.0f);
        }
    }
    SECTION("nodata counts as a failed vote; all-nodata pixels stay nodata") {
        std::map<Stage, BinaryMask> holes;
        holes[Stage::LandPreparation] = mask_of(grid, {kNodata, kNodata, 1, 1});
        holes[Stage::Vegetative] = mask_of(grid, {1, kNodata, 1, kNodata});
        holes[Stage::Reproductive] = mask_of(grid, {1, kNodata, kNodata, 0});
        const auto combined = combine_stages(holes, CombinePolicy::Majority);
        CHECK(combined.values.data()[0] == 1.0f);
        CHECK(std::isnan(combined.values.data()[1]));
        CHECK(combined.values.data()[2] == 1.0f);
        CHECK(combined.values.data()[3] == 0.0f);
    }
    SECTION("grid mismatch is an error") {
        std::map<Stage, BinaryMask> bad = masks;
        bad[Stage::Vegetative] = BinaryMask::filled(unit_grid(3), 0.0f);
        REQUIRE_THROWS_AS(combine_stages(bad, CombinePolicy::Majority), validation_error);
    }
}

TEST_CASE("land cover exclusion") {
    const GeoGrid grid = unit_grid(2);
    BinaryMask mask = mask_of(grid, {1, 1, 1, 0});
    Plane<float> landcover(2, 2, 40.0f); // cropland
    landcover.at(0, 1) = 50.0f;          // built-up

    const auto out = exclude_landcover(mask, landcover, {10, 20, 30, 50, 60});
    CHECK(out.values.data() == std::vector<float>{1, 0, 1, 0});

    SECTION("empty exclusion set is the identity") {
        const auto same = exclude_landcover(mask, landcover, {});
        CHECK(same.values.data() == mask.values.data());
    }
    SECTION("exclusions are anti-extensive") {
        Rng rng(31);
        for (int t = 0; t < 50; ++t) {
            BinaryMask random = BinaryMask::filled(grid, 0.0f);
            Plane<float> lc(2, 2, 0.0f);
            for (std::size_t i = 0; i < 4; ++i) {
                random.values.data()[i] = float(rng.next_below(2));
                lc.data()[i] = float(rng.next_below(100));
            }
            const auto refined = exclude_landcover(random, lc, {10, 20, 30, 50, 60});
            for (std::size_t i = 0; i < 4; ++i) {
                if (refined.values.data()[i] == 1.0f) {
                    CHECK(random.values.data()[i] == 1.0f);
                }
            }
        }
    }
}

TEST_CASE("water exclusion") {
    const GeoGrid grid = unit_grid(2);
    BinaryMask mask = mask_of(grid, {1, 1, 1, 1});
    Plane<float> permanent(2, 2, 0.0f);
    permanent.at(0, 0) = 1.0f;
    Plane<float> seasonal(2, 2, 0.0f);
    seasonal.at(0, 1) = 1.0f;

    const auto both = exclude_water(mask, &permanent, &seasonal, true);
    CHECK(both.values.data() == std::vector<float>{0, 0, 1, 1});

    const auto perm_only = exclude_water(mask, &permanent, &seasonal, false);
    CHECK(perm_only.values.data() == std::vector<float>{0, 1, 1, 1});
}

TEST_CASE("combined water and land-cover filtering on a known replica") {
    // 1000 positive pixels; land-cover exclusion removes 120, water 69 more:
    // an 18.9% reduction
    const GeoGrid grid{0, 0, 10.0, 40, 25, "test"};
    BinaryMask mask = BinaryMask::filled(grid, 1.0f);
    Plane<float> landcover(25, 40, 40.0f);
    Plane<float> water(25, 40, 0.0f);
    for (int i = 0; i < 120; ++i) landcover.data()[std::size_t(i)] = 30.0f; // grassland
    for (int i = 120; i < 189; ++i) water.data()[std::size_t(i)] = 1.0f;   // reservoir

    auto refined = exclude_landcover(mask, landcover, {10, 20, 30, 50, 60});
    refined = exclude_water(refined, &water, nullptr, true);
    const double before = double(mask.count_ones());
    const double after = double(refined.count_ones());
    CHECK_THAT(100.0 * (before - after) / before, Catch::Matchers::WithinAbs(18.9, 1e-9));
}

TEST_CASE("focal mode") {
    SECTION("13-pixel disc at 20 m radius on a 10 m grid") {
        // offsets with dx^2+dy^2 <= 4: 1 + 4 + 4 + 4 = 13
        const GeoGrid grid{0, 0, 10.0, 7, 7, "test"};
        BinaryMask mask = BinaryMask::filled(grid, 0.0f);
        mask.values.at(3, 3) = 1.0f;
        const auto out = focal_mode(mask, 20.0);
        CHECK(out.values.at(3, 3) == 0.0f); // isolated pixel removed
    }
    SECTION("uniform interior unchanged") {
        const GeoGrid grid{0, 0, 10.0, 8, 8, "test"};
        BinaryMask ones = BinaryMask::filled(grid, 1.0f);
        const auto out = focal_mode(ones, 20.0);
        CHECK(out.values.data() == ones.values.data());
    }
    SECTION("2x2 block vote counts match brute force enumeration") {
        const GeoGrid grid{0, 0, 10.0, 10, 10, "test"};
        BinaryMask mask = BinaryMask::filled(grid, 0.0f);
        for (int r = 4; r < 6; ++r) {
            for (int c = 4; c < 6; ++c) mask.values.at(r, c) = 1.0f;
        }
        const auto out = focal_mode(mask, 20.0);
        // brute-force oracle
        for (int r = 0; r < 10; ++r) {
            for (int c = 0; c < 10; ++c) {
                int ones = 0, zeros = 0;
                for (int dr = -2; dr <= 2; ++dr) {
                    for (int dc = -2; dc <= 2; ++dc) {
                        if (dr * dr + dc * dc > 4) continue;
                        const int rr = r + dr, cc = c + dc;
                        if (rr < 0 || rr >= 10 || cc < 0 || cc >= 10) continue;
                        (mask.values.at(rr, cc) == 1.0f ? ones : zeros)++;
                    }
                }
                float expected = mask.values.at(r, c);
                if (ones > zeros) expected = 1.0f;
                if (zeros > ones) expected = 0.0f;
                CHECK(out.values.at(r, c) == expected);
            }
        }
        // each 2x2 corner sees 4 ones vs 9 zeros: eroded
        CHECK(out.values.at(4, 4) == 0.0f);
    }
    SECTION("ties keep the original value") {
        // radius exactly one pixel: disc = {center, 4-neighbors}, 5 votes;
        // craft 2 ones + 2 zeros + center on the cross
        const GeoGrid grid{0, 0, 10.0, 3, 3, "test"};
        BinaryMask mask = BinaryMask::filled(grid, 0.0f);
        mask.values.at(0, 1) = 1.0f;
        mask.values.at(2, 1) = 1.0f;
        mask.values.at(1, 1) = 1.0f; // center; neighbors: 2 ones, 2 zeros -> 3v2 keeps 1
        const auto out = focal_mode(mask, 10.0);
        CHECK(out.values.at(1, 1) == 1.0f);
        // flip center to 0: 2 ones vs 3 zeros -> stays 0
        mask.values.at(1, 1) = 0.0f;
        CHECK(focal_mode(mask, 10.0).values.at(1, 1) == 0.0f);
    }
    SECTION("nodata neighbors do not vote; nodata centers stay nodata") {
        const GeoGrid grid{0, 0, 10.0, 5, 5, "test"};
        BinaryMask mask = BinaryMask::filled(grid, kNodata);
        mask.values.at(2, 2) = 1.0f;
        const auto out = focal_mode(mask, 20.0);
        CHECK(out.values.at(2, 2) == 1.0f); // only voter is itself
        CHECK(std::isnan(out.values.at(0, 0)));
    }
    SECTION("radius below the pixel size is rejected") {
        const GeoGrid grid{0, 0, 10.0, 3, 3, "test"};
        BinaryMask mask = BinaryMask::filled(grid, 0.0f);
        REQUIRE_THROWS_AS(focal_mode(mask, 5.0), validation_error);
    }
}

TEST_CASE("calibration document round trip and strict schema") {
    const auto calib = synth::nalgonda_style_calibration("Nalgonda");
    const fs::path file = fs::temp_directory_path() / "ricemap_calib_test.json";
    write_calibration(calib, file);
    const auto back = read_calibration(file);
    CHECK(back.district_id == calib.district_id);
    CHECK(back.rules.size() == calib.rules.size());
    CHECK(back.tpa.has_value());
    CHECK(back.combine_policy == CombinePolicy::Majority);
    CHECK(back.rules.at(Stage::Reproductive).ratios.size() == 2);

    SECTION("unknown keys are rejected at every level") {
        auto j = calibration_json::to_json(calib);
        j["typo_key"] = 1;
        REQUIRE_THROWS_WITH(calibration_json::from_json(j),
                            Catch::Matchers::ContainsSubstring("typo_key"));

        auto j2 = calibration_json::to_json(calib);
        j2["stage_rules"]["land_preparation"]["spelling_mistake"] = true;
        REQUIRE_THROWS_WITH(calibration_json::from_json(j2),
                            Catch::Matchers::ContainsSubstring("spelling_mistake"));
    }
    SECTION("notes are allowed everywhere") {
        auto j = calibration_json::to_json(calib);
        j["notes"] = "district notes";
        j["stage_rules"]["vegetative"]["notes"] = "basic thresholds suffice here";
        REQUIRE_NOTHROW(calibration_json::from_json(j));
    }
    SECTION("missing required stage is rejected") {
        auto j = calibration_json::to_json(calib);
        j["stage_rules"].erase("vegetative");
        REQUIRE_THROWS_AS(calibration_json::from_json(j), validation_error);
    }
    SECTION("example calibration document in data/ parses") {
        const fs::path example =
            fs::path(RICEMAP_SOURCE_DIR) / "data" / "calibration_example.json";
        REQUIRE_NOTHROW(read_calibration(example));
    }
}

TEST_CASE("classify_district end to end on a small synthetic district") {
    synth::GeneratorOptions opts;
    opts.n_rice = 24;
    opts.n_flat_high = 8;
    opts.n_flat_low = 8;
    opts.n_wetland = 8;
    auto district = synth::make_district(opts);

    const auto result = classify_district(district.cube, district.calibration, {}, 2);

    SECTION("rice fields detected, confounders rejected") {
        for (const auto& f : district.fields) {
            if (f.kind == synth::FieldKind::Rice) {
                CHECK(synth::field_detected(f, result.final_mask));
            } else {
                CHECK_FALSE(synth::field_detected(f, result.final_mask));
            }
        }
    }

    SECTION("flat high-NDVI cover dies by the temporal pattern check") {
        // it passes vegetative and reproductive rules (2-of-3 majority)...
        for (const auto& f : district.fields) {
            if (f.kind != synth::FieldKind::FlatHigh) continue;
            const int r = f.row0 + 1, c = f.col0 + 1;
            const float veg = result.stage_masks.at(Stage::Vegetative).values.at(r, c);
            const float rep = result.stage_masks.at(Stage::Reproductive).values.at(r, c);
            CHECK(veg == 1.0f);
            CHECK(rep == 1.0f);
            // ...but the flat trajectory fails the required NDVI increase
            REQUIRE(result.tpa_mask.has_value());
            CHECK(result.tpa_mask->values.at(r, c) == 0.0f);
            CHECK(result.final_mask.values.at(r, c) == 0.0f);
            break;
        }
    }

    SECTION("wetland-like cover dies by the missing senescence decrease") {
        for (const auto& f : district.fields) {
            if (f.kind != synth::FieldKind::Wetland) continue;
            const int r = f.row0 + 1, c = f.col0 + 1;
            CHECK(result.combined.values.at(r, c) == 0.0f);
            REQUIRE(result.tpa_mask.has_value());
            CHECK(result.tpa_mask->values.at(r, c) == 0.0f);
            break;
        }
    }

    SECTION("identical inputs give bit-identical masks for any worker count") {
        const auto again = classify_district(district.cube, district.calibration, {}, 7);
        CHECK(again.final_mask.values.data() == result.final_mask.values.data());
        CHECK(again.combined.values.data() == result.combined.values.data());
    }

    SECTION("a ripening rule never changes the final mask") {
        auto with_ripening = district.calibration;
        StageRule rip;
        rip.stage = Stage::Ripening;
        rip.method = RuleMethod::Basic;
        rip.bounds = {bound(IndexKind::NDVI, 0.15, 0.70)};
        with_ripening.rules[Stage::Ripening] = rip;
        const auto res2 = classify_district(district.cube, with_ripening, {}, 2);
        CHECK(res2.final_mask.values.data() == result.final_mask.values.data());
        CHECK(res2.stage_masks.count(Stage::Ripening) == 1); // retained for audit only
    }

    SECTION("exclusion rasters only remove area") {
        Plane<float> landcover(district.grid.height, district.grid.width, 40.0f);
        for (int c = 0; c < district.grid.width; ++c) landcover.at(1, c) = 50.0f;
        ExclusionInputs excl;
        excl.landcover = landcover;
        const auto res2 = classify_district(district.cube, district.calibration, excl, 2);
        // anti-extensive before the focal step
        for (std::size_t i = 0; i < res2.refined.values.size(); ++i) {
            if (res2.refined.values.data()[i] == 1.0f) {
                CHECK(result.combined.values.data()[i] == 1.0f);
            }
        }
    }
}

TEST_CASE("classify_district on a cube of pure rice trajectories fills the mask") {
    // every pixel follows the rice phenology, noise-free: nothing should be
    // rejected anywhere, including by the focal filter (uniform field)
    const auto calib = synth::nalgonda_style_calibration("Nalgonda");
    ReflectanceCube cube;
    cube.grid = GeoGrid{0, 0, 10.0, 12, 12, "test"};
    cube.district_id = "Nalgonda";
    cube.bands = {"B2", "B3", "B4", "B8", "B11"};
    cube.dates = synth::season_dates(calib.season);
    cube.values.resize(cube.dates.size() * 5 * cube.plane_size());
    for (std::size_t d = 0; d < cube.dates.size(); ++d) {
        const auto targets =
            synth::targets_for(synth::FieldKind::Rice, cube.dates[d], calib.windows, 0);
        float bands[5];
        synth::bands_from_targets(targets, bands);
        for (int b = 0; b < 5; ++b) {
            float* plane = cube.values.data() + cube.plane_offset(d, std::size_t(b));
            std::fill(plane, plane + cube.plane_size(), bands[b]);
        }
    }
    const auto result = classify_district(cube, calib, {}, 1);
    for (float v : result.final_mask.values.data()) CHECK(v == 1.0f);
}

TEST_CASE("classify_district: no dates in a stage window is a stage-tagged error") {
    synth::GeneratorOptions opts;
    opts.n_rice = 4;
    opts.n_flat_high = opts.n_flat_low = opts.n_wetland = 0;
    auto district = synth::make_district(opts);
    // push the reproductive window to dates the cube does not cover
    auto calib = district.calibration;
    calib.windows.window(Stage::Reproductive) = {Date::from_ymd(2019, 6, 10),
                                                 Date::from_ymd(2019, 7, 10)};
    calib.windows.window(Stage::Ripening) = {Date::from_ymd(2019, 7, 11),
                                             Date::from_ymd(2019, 8, 20)};
    calib.allow_nonstandard_durations = true;
    REQUIRE_THROWS_WITH(classify_district(district.cube, calib, {}, 1),
                        Catch::Matchers::ContainsSubstring("reproductive"));
}

TEST_CASE("classify_district rejects a district mismatch") {
    synth::GeneratorOptions opts;
    opts.n_rice = 4;
    opts.n_flat_high = opts.n_flat_low = opts.n_wetland = 0;
    auto district = synth::make_district(opts);
    auto calib = district.calibration;
    calib.district_id = "Suryapet";
    calib.windows.district_id = "Suryapet";
    REQUIRE_THROWS_AS(classify_district(district.cube, calib, {}, 1), validation_error);
}
