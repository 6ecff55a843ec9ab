#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>
#include <string>

#include "mixforge/dataset.hpp"
#include "mixforge/error.hpp"

using namespace mixforge;

namespace {

std::string header() { return std::string(kTrainingCsvHeader) + "\n"; }

std::string row(const std::string& id, const std::string& precond = "17", const std::string& k4 = "1.2") {
    return id + ",I 52.5 N,12.2,48.8,29.9,9.1,2408," + precond + "," + k4 + ",0.117,37.85,2307,0.026\n";
}

}  // namespace

TEST_CASE("supplementary table loads with the published shape") {
    const auto table = load_training_csv(MIXFORGE_DATA_FILE);
    CHECK(table.size() == 21);
    CHECK(table.rows_with(TargetId::CarbonationK).size() == 16);
    for (auto t : {TargetId::EnvImpact, TargetId::Strength, TargetId::Density, TargetId::Cost}) {
        CHECK(table.rows_with(t).size() == 21);
    }
    // Median of the 16 present preconditioning times, lower middle value.
    REQUIRE(table.imputed_preconditioning());
    CHECK(*table.imputed_preconditioning() == 16.0);

    const auto i = table.find("C45 I");
    REQUIRE(i);
    const auto f = table.features()[*i];
    CHECK(f.preconditioning_days == 16.0);
    CHECK(f.cement_type_code == 1.0);
    CHECK(f.water_cement_ratio == doctest::Approx(8.7 / 14.6));
    CHECK(f.total_agg_cement_ratio == doctest::Approx((48.5 + 28.2) / 14.6));
    CHECK(f.sand_total_agg_ratio == doctest::Approx(28.2 / (48.5 + 28.2)));
    CHECK(table.features()[*table.find("C25 I")].cement_type_code == 0.0);
}

TEST_CASE("feature vectors have nine base columns, ten with estimated mass") {
    const auto table = parse_training_csv(header() + row("A"));
    CHECK(table.feature_row(0).size() == 9);
    CHECK(feature_names().size() == 9);
    const auto wide = parse_training_csv(header() + row("A"), FeatureConfig{true});
    CHECK(wide.feature_row(0).size() == 10);
    CHECK(wide.feature_row(0).back() == 2408.0);
}

TEST_CASE("csv round trip is lossless") {
    const auto table = load_training_csv(MIXFORGE_DATA_FILE);
    const auto text = write_training_csv(table);
    const auto again = parse_training_csv(text);
    CHECK(again.records() == table.records());
    CHECK(write_training_csv(again) == text);
}

TEST_CASE("parser tolerates BOM, CRLF, quotes and blank lines") {
    const std::string text = "\xEF\xBB\xBF" + std::string(kTrainingCsvHeader) + "\r\n\"A\"," +
                             "I 52.5 N, 12.2 ,48.8,29.9,9.1,2408,-,-,0.117,37.85,2307,0.026\r\n\r\n" + row("B");
    const auto table = parse_training_csv(text);
    REQUIRE(table.size() == 2);
    CHECK(table.record(0).id == "A");
    CHECK(!table.record(0).preconditioning_days);
    CHECK(!table.record(0).measured.has(TargetId::CarbonationK));
}

TEST_CASE("parse errors name the row and column") {
    try {
        parse_training_csv(header() + row("A") + "B,I 52.5 N,12.2,abc,29.9,9.1,2408,17,1,0.1,30,2300,0.02\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 2") != std::string::npos);
        CHECK(msg.find("gravel_pct") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_training_csv(std::string("mix,cement\n")), ParseError);
    CHECK_THROWS_AS(parse_training_csv(std::string("")), ParseError);
    CHECK_THROWS_AS(parse_training_csv(header() + "A,CEM X,12.2,48.8,29.9,9.1,2408,17,1,0.1,30,2300,0.02\n"),
                    ParseError);
    CHECK_THROWS_AS(parse_training_csv(header() + "A,I 52.5 N,12.2,48.8\n"), ParseError);
    CHECK_THROWS_AS(load_training_csv("/nonexistent/file.csv"), IoError);
}

TEST_CASE("record validation") {
    SUBCASE("fractions must sum to 100 within 0.5") {
        CHECK_THROWS_AS(parse_training_csv(header() + "A,I 52.5 N,12,48,29,9,2408,17,1,0.1,30,2300,0.02\n"),
                        ValidationError);
        CHECK_NOTHROW(parse_training_csv(header() + "A,I 52.5 N,12,48,30,9.7,2408,17,1,0.1,30,2300,0.02\n"));
    }
    SUBCASE("K needs a preconditioning time") {
        CHECK_THROWS_AS(parse_training_csv(header() + row("A", "-", "1.2")), ValidationError);
    }
    SUBCASE("targets must be positive") {
        CHECK_THROWS_AS(parse_training_csv(header() + row("A", "17", "-0.5")), ValidationError);
    }
    SUBCASE("ids are unique") {
        CHECK_THROWS_AS(parse_training_csv(header() + row("A") + row("A")), ValidationError);
    }
    SUBCASE("zero cement is rejected") {
        CHECK_THROWS_AS(parse_training_csv(header() + "A,I 52.5 N,0,60,30,10,2408,17,1,0.1,30,2300,0.02\n"),
                        ValidationError);
        MixRecord r;
        r.id = "z";
        r.composition = {0.0, 60.0, 30.0, 10.0};
        CHECK_THROWS_AS(derive_features(r, 16.0), DomainError);
    }
}

TEST_CASE("imputation uses the lower median and is recomputed without a row") {
    const auto table = parse_training_csv(header() + row("A", "8") + row("B", "14") + row("C", "17") +
                                          row("D", "141") + row("E", "-", "-"));
    REQUIRE(table.imputed_preconditioning());
    CHECK(*table.imputed_preconditioning() == 14.0);
    const auto without_b = table.without_row(1);
    CHECK(without_b.size() == 4);
    CHECK(*without_b.imputed_preconditioning() == 17.0);
    CHECK(without_b.features()[3].preconditioning_days == 17.0);
    // No imputation recorded when nothing is missing.
    CHECK(!parse_training_csv(header() + row("A")).imputed_preconditioning());
}

TEST_CASE("target tokens round trip") {
    for (auto t : kAllTargets) CHECK(parse_target_token(target_token(t)) == t);
    CHECK(!parse_target_token("k5"));
    CHECK(parse_cement_type("IIA") == CementType::CemIIA_32_5R);
    CHECK(parse_cement_type("I 52.5 N") == CementType::CemI_52_5N);
}

TEST_CASE("format_number is shortest round trip") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(2412) == "2412");
    CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}
