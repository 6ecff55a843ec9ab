#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "mixforge/mixforge.h"

namespace {

std::string take(char* s) {
    std::string out = s ? s : "";
    mf_string_free(s);
    return out;
}

const char* kCsv =
    "mix,cement_type,cement_pct,gravel_pct,sand_pct,water_pct,est_mass_per_m3,precond_days,k4,env_impact,strength,"
    "density,cost\n"
    "A,I 52.5 N,12.2,48.8,29.9,9.1,2408,17,1.212,0.117,37.85,2307,0.026\n"
    "B,I 52.5 N,14.2,48.9,27.9,9.0,2409,17,0.403,0.135,51.01,2330,0.027\n"
    "C,I 52.5 N,10.6,48.3,32.1,9.1,2411,17,1.732,0.103,31.93,2310,0.025\n"
    "D,IIA 32.5 R,11.1,52.8,28.1,7.8,2414,141,1.742,0.095,27.46,2337,0.025\n";

}  // namespace

TEST_CASE("status names and version") {
    CHECK(std::string(mf_version()) == "0.1.0");
    CHECK(std::string(mf_status_name(MF_OK)) == "ok");
    CHECK(std::string(mf_status_name(MF_ERR_VALIDATION)) == "validation error");
    CHECK(std::string(mf_status_name(static_cast<mf_status>(99))) == "unknown status");
}

TEST_CASE("dataset handles") {
    mf_dataset* d = nullptr;
    REQUIRE(mf_dataset_load(MIXFORGE_DATA_FILE, &d) == MF_OK);
    CHECK(mf_dataset_size(d) == 21);
    char* csv = nullptr;
    REQUIRE(mf_dataset_to_csv(d, &csv) == MF_OK);
    const std::string text = take(csv);
    mf_dataset_free(d);

    mf_dataset* again = nullptr;
    REQUIRE(mf_dataset_parse(text.c_str(), &again) == MF_OK);
    CHECK(mf_dataset_size(again) == 21);
    mf_dataset_free(again);
    mf_dataset_free(nullptr);
    CHECK(mf_dataset_size(nullptr) == 0);

    mf_dataset* bad = nullptr;
    CHECK(mf_dataset_load("/nonexistent.csv", &bad) == MF_ERR_IO);
    CHECK(bad == nullptr);
    CHECK(std::string(mf_last_error()).find("nonexistent") != std::string::npos);
    CHECK(mf_dataset_parse("mix,cement\n", &bad) == MF_ERR_PARSE);
    CHECK(mf_dataset_parse(nullptr, &bad) == MF_ERR_ARGUMENT);
    CHECK(std::string(mf_last_error()).find("null") != std::string::npos);

    // A successful call clears the previous message.
    mf_hyperparameters hp{};
    REQUIRE(mf_default_hyperparameters("two_layer", &hp) == MF_OK);
    CHECK(std::string(mf_last_error()).empty());
    CHECK(hp.n_trees == 512);
    CHECK(hp.max_features == 6);
    CHECK(hp.min_samples_split == 2);
    CHECK(mf_default_hyperparameters("svm", &hp) == MF_ERR_CONFIG);
}

TEST_CASE("last error is per thread") {
    mf_dataset* d = nullptr;
    CHECK(mf_dataset_parse("", &d) == MF_ERR_PARSE);
    const std::string mine = mf_last_error();
    std::string theirs = "unset";
    std::thread([&] { theirs = mf_last_error(); }).join();
    CHECK(!mine.empty());
    CHECK(theirs.empty());
}

TEST_CASE("forest handles") {
    const std::vector<double> x = {0, 1, 1, 0, 2, 2, 3, 1, 4, 0, 5, 2};
    const std::vector<double> y = {0.5, 1.0, 2.5, 3.0, 4.5, 5.0};
    const mf_hyperparameters hp{25, 2, 2};
    mf_forest* f = nullptr;
    REQUIRE(mf_forest_fit(x.data(), 6, 2, y.data(), &hp, 3, &f) == MF_OK);
    double mean = 0, sigma = -1;
    const double q[2] = {2.5, 1};
    REQUIRE(mf_forest_predict(f, q, 2, &mean, &sigma) == MF_OK);
    CHECK(mean >= 0.5);
    CHECK(mean <= 5.0);
    CHECK(sigma >= 0.0);
    CHECK(mf_forest_predict(f, q, 3, &mean, &sigma) == MF_ERR_VALIDATION);

    int available = -1;
    CHECK(mf_forest_oob_predict(f, 0, &mean, &sigma, &available) == MF_OK);
    CHECK((available == 0 || available == 1));
    CHECK(mf_forest_oob_predict(f, 6, &mean, &sigma, &available) != MF_OK);

    double imp[2];
    int defined = 0;
    REQUIRE(mf_forest_importances(f, imp, 2, &defined) == MF_OK);
    CHECK(defined == 1);
    CHECK(imp[0] + imp[1] == doctest::Approx(1.0).epsilon(1e-12));

    char* json = nullptr;
    REQUIRE(mf_forest_to_json(f, &json) == MF_OK);
    const std::string text = take(json);
    mf_forest* g = nullptr;
    REQUIRE(mf_forest_from_json(text.c_str(), &g) == MF_OK);
    double mean2 = 0, sigma2 = 0;
    REQUIRE(mf_forest_predict(g, q, 2, &mean2, &sigma2) == MF_OK);
    mf_forest_predict(f, q, 2, &mean, &sigma);
    CHECK(mean2 == mean);
    CHECK(sigma2 == sigma);
    mf_forest_free(f);
    mf_forest_free(g);

    const mf_hyperparameters bad{25, 3, 2};
    CHECK(mf_forest_fit(x.data(), 6, 2, y.data(), &bad, 3, &f) == MF_ERR_CONFIG);
    CHECK(mf_forest_from_json("{", &g) == MF_ERR_PARSE);
}

TEST_CASE("two-layer model handles") {
    mf_dataset* d = nullptr;
    REQUIRE(mf_dataset_load(MIXFORGE_DATA_FILE, &d) == MF_OK);
    const mf_hyperparameters hp{32, 6, 2};
    mf_model* m = nullptr;
    REQUIRE(mf_model_fit(d, "env_impact", &hp, 1, &m) == MF_OK);
    const double base[9] = {1, 14.2, 48.9, 28.4, 8.5, 8.5 / 14.2, (48.9 + 28.4) / 14.2, 28.4 / (48.9 + 28.4), 17};
    double mean = 0, sigma = 0;
    REQUIRE(mf_model_predict(m, base, 9, &mean, &sigma) == MF_OK);
    CHECK(mean > 0.08);
    CHECK(mean < 0.17);
    CHECK(mf_model_predict(m, base, 8, &mean, &sigma) == MF_ERR_VALIDATION);
    char* json = nullptr;
    REQUIRE(mf_model_to_json(m, &json) == MF_OK);
    mf_model* back = nullptr;
    REQUIRE(mf_model_from_json(json, &back) == MF_OK);
    mf_string_free(json);
    double mean2 = 0, sigma2 = 0;
    REQUIRE(mf_model_predict(back, base, 9, &mean2, &sigma2) == MF_OK);
    CHECK(mean2 == mean);
    CHECK(sigma2 == sigma);
    mf_model_free(m);
    mf_model_free(back);
    CHECK(mf_model_fit(d, "slump", &hp, 1, &m) == MF_ERR_CONFIG);
    mf_dataset_free(d);
}

TEST_CASE("pipeline entry points") {
    mf_dataset* d = nullptr;
    REQUIRE(mf_dataset_parse(kCsv, &d) == MF_OK);

    char *csv = nullptr, *svg = nullptr;
    REQUIRE(mf_correlate(d, "spearman", &csv, &svg) == MF_OK);
    CHECK(take(csv).rfind("variable,", 0) == 0);
    CHECK(take(svg).find("<svg") != std::string::npos);
    CHECK(mf_correlate(d, "kendall", &csv, nullptr) == MF_ERR_CONFIG);

    const mf_hyperparameters lin{1, 2, 2};
    char *json = nullptr, *table = nullptr, *folds = nullptr;
    REQUIRE(mf_crossval(d, "linear", "cost", &lin, 0, &json, &table, &folds) == MF_OK);
    CHECK(take(json).find("\"linear\"") != std::string::npos);
    CHECK(!take(table).empty());
    const auto fold_text = take(folds);
    CHECK(fold_text.find("\nlinear,cost,A,0.026,") != std::string::npos);
    CHECK(mf_crossval(d, "linear", "slump", &lin, 0, &json, &table, &folds) == MF_ERR_CONFIG);

    REQUIRE(mf_tune(d, "linear", R"([{"n_trees": 1, "max_features": 1}, {"n_trees": 1, "max_features": 2}])", "cost",
                    0, &json) == MF_OK);
    CHECK(take(json).find("\"best\"") != std::string::npos);
    CHECK(mf_tune(d, "linear", "[]", nullptr, 0, &json) == MF_ERR_CONFIG);

    REQUIRE(mf_carbfit("t_days,x_mm,sigma_mm\n1,2,0\n4,4,0\n9,6,0\n", &json) == MF_OK);
    CHECK(take(json).find("\"k\": 2.0") != std::string::npos);
    CHECK(mf_carbfit("t_days,x_mm,sigma_mm\n1,2,0\n", &json) == MF_ERR_DOMAIN);

    REQUIRE(mf_props(14.2, 48.9, 28.4, 8.5, "I", nullptr, &json) == MF_OK);
    CHECK(take(json).find("\"env_impact\": 0.1349") != std::string::npos);
    CHECK(mf_props(0, 0, 0, 0, "I", nullptr, &json) == MF_ERR_VALIDATION);
    CHECK(mf_props(10, 50, 30, 10, "CEM X", nullptr, &json) == MF_ERR_PARSE);

    double depth = 0;
    REQUIRE(mf_carbonation_depth(1.5, 1, 4, &depth) == MF_OK);
    CHECK(depth == doctest::Approx(std::sqrt(10.0)));
    CHECK(mf_carbonation_depth(-1, 1, 4, &depth) == MF_ERR_DOMAIN);
    double p = 0;
    REQUIRE(mf_probability_of_bound(1.5, 0.3, 1, 1.2, &p) == MF_OK);
    CHECK(std::abs(p - 0.158655) < 1e-6);
    CHECK(mf_probability_of_bound(1.5, 0.3, 1, 1.2, nullptr) == MF_ERR_ARGUMENT);
    mf_dataset_free(d);
}

TEST_CASE("design and predict") {
    mf_dataset* d = nullptr;
    REQUIRE(mf_dataset_load(MIXFORGE_DATA_FILE, &d) == MF_OK);
    const mf_hyperparameters hp{24, 6, 2};
    const char* criteria = R"({"name": "Low-E", "bounds": [{"target": "env_impact", "op": "<", "value": 0.108}]})";
    char *scan = nullptr, *selected = nullptr;
    REQUIRE(mf_design(d, criteria, R"({"wc_step": 0.1})", &hp, "gaussian", 5, &scan, &selected, nullptr) == MF_OK);
    const auto scan_text = take(scan);
    CHECK(std::count(scan_text.begin(), scan_text.end(), '\n') == 7);
    CHECK(take(selected).find("\"wc\"") != std::string::npos);
    CHECK(mf_design(d, R"({"bounds": [{"target": "k5", "op": "<", "value": 1}]})", nullptr, &hp, "gaussian", 5, &scan,
                    &selected, nullptr) == MF_ERR_PARSE);
    CHECK(mf_design(d, criteria, nullptr, &hp, "bayes", 5, &scan, &selected, nullptr) == MF_ERR_CONFIG);

    mf_dataset* in = nullptr;
    REQUIRE(mf_dataset_parse(kCsv, &in) == MF_OK);
    char* csv = nullptr;
    REQUIRE(mf_predict(d, in, &hp, 5, &csv) == MF_OK);
    const auto text = take(csv);
    CHECK(text.rfind("mix,mean_k4,mean_env_impact", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
    mf_dataset_free(in);
    mf_dataset_free(d);
}
