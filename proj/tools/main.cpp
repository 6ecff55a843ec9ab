// mixforge command-line front end. Talks to the library only through the C interface.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mixforge/mixforge.h"

namespace fs = std::filesystem;

namespace {

struct Failure {
    std::string message;
};

using CString = std::unique_ptr<char, decltype(&mf_string_free)>;

CString take(char* s) { return CString(s, &mf_string_free); }

void check(mf_status status) {
    if (status != MF_OK) throw Failure{std::string(mf_status_name(status)) + ": " + mf_last_error()};
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Failure{"cannot open '" + path + "'"};
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

struct Dataset {
    mf_dataset* handle = nullptr;
    explicit Dataset(const std::string& path) { check(mf_dataset_load(path.c_str(), &handle)); }
    ~Dataset() { mf_dataset_free(handle); }
    Dataset(const Dataset&) = delete;
    Dataset& operator=(const Dataset&) = delete;
};

struct Global {
    std::string data;
    std::uint64_t seed = 0;
    std::string out = ".";
    bool plots = false;
};

struct HpOverrides {
    std::optional<int> n_trees;
    std::optional<int> max_features;
    std::optional<int> min_samples_split;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--n-trees", n_trees, "Trees per forest");
        cmd->add_option("--max-features", max_features, "Features considered per split");
        cmd->add_option("--min-samples-split", min_samples_split, "Smallest node that may split");
    }
    bool any() const { return n_trees || max_features || min_samples_split; }
    mf_hyperparameters resolve(const char* model) const {
        mf_hyperparameters hp{};
        check(mf_default_hyperparameters(model, &hp));
        if (n_trees) hp.n_trees = *n_trees;
        if (max_features) hp.max_features = *max_features;
        if (min_samples_split) hp.min_samples_split = *min_samples_split;
        return hp;
    }
};

// Every output of a command is staged to a temporary file first, then all are renamed into place.
class Outputs {
public:
    explicit Outputs(std::string dir) : dir_(std::move(dir)) {}
    void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

    void commit() {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw Failure{"cannot create output directory '" + dir_ + "': " + ec.message()};
        std::vector<std::pair<fs::path, fs::path>> staged;
        try {
            for (const auto& [name, content] : files_) {
                const fs::path target = fs::path(dir_) / name;
                const fs::path tmp = fs::path(dir_) / ("." + name + ".tmp");
                std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
                out << content;
                out.close();
                if (!out) throw Failure{"cannot write '" + tmp.string() + "'"};
                staged.emplace_back(tmp, target);
            }
            for (const auto& [tmp, target] : staged) {
                fs::rename(tmp, target, ec);
                if (ec) throw Failure{"cannot rename into '" + target.string() + "': " + ec.message()};
                std::cout << "wrote " << target.string() << '\n';
            }
        } catch (...) {
            for (const auto& [tmp, _] : staged) fs::remove(tmp, ec);
            throw;
        }
    }

private:
    std::string dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

const std::string& need_data(const Global& g, const char* cmd) {
    if (g.data.empty()) throw Failure{std::string(cmd) + " needs --data PATH"};
    return g.data;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mixforge: probabilistic concrete mix selection with stacked random forests"};
    app.require_subcommand(1);
    Global g;
    app.add_option("--data", g.data, "Training CSV")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Random seed (default 0)");
    app.add_option("--out", g.out, "Output directory (default .)");
    app.add_flag("--plots", g.plots, "Also write SVG plots");
    app.footer("Environment: MIXFORGE_THREADS caps worker threads.");

    auto* correlate = app.add_subcommand("correlate", "Correlation matrix of features and targets");
    std::string method = "pearson";
    correlate->add_option("--method", method, "pearson or spearman")->check(CLI::IsMember({"pearson", "spearman"}));

    auto* crossval = app.add_subcommand("crossval", "Leave-one-out cross-validation R2 table");
    std::string cv_model, cv_target;
    HpOverrides cv_hp;
    crossval->add_option("--model", cv_model, "linear, single_rf, two_layer or imputation (default all)");
    crossval->add_option("--target", cv_target, "k4, env_impact, strength, density or cost (default all)");
    cv_hp.add_to(crossval);

    auto* tune_cmd = app.add_subcommand("tune", "Grid search over hyperparameters by LOOCV");
    std::string tune_model = "two_layer", tune_grid, tune_target;
    tune_cmd->add_option("--model", tune_model, "Model kind (default two_layer)");
    tune_cmd->add_option("--grid", tune_grid, "Grid JSON file (default grid when omitted)")->check(CLI::ExistingFile);
    tune_cmd->add_option("--target", tune_target, "Score one target instead of the sum over all five");

    auto* design = app.add_subcommand("design", "Scan the w/c family and pick the most probable mix");
    std::string criteria, generator, mode = "gaussian";
    HpOverrides design_hp;
    design->add_option("--criteria", criteria, "Criteria JSON file")->required()->check(CLI::ExistingFile);
    design->add_option("--generator", generator, "Generator override JSON file")->check(CLI::ExistingFile);
    design->add_option("--mode", mode, "gaussian or empirical")->check(CLI::IsMember({"gaussian", "empirical"}));
    design_hp.add_to(design);

    auto* predict = app.add_subcommand("predict", "Two-layer predictions for new mixes");
    std::string inputs;
    HpOverrides predict_hp;
    predict->add_option("--input", inputs, "Mixes in the training CSV layout, targets may be '-'")
        ->required()
        ->check(CLI::ExistingFile);
    predict_hp.add_to(predict);

    auto* carbfit = app.add_subcommand("carbfit", "Fit carbonation depth against sqrt(t)");
    std::string series;
    carbfit->add_option("--series", series, "CSV with header t_days,x_mm,sigma_mm")->required()->check(CLI::ExistingFile);

    auto* props = app.add_subcommand("props", "Embodied carbon and cost of a composition");
    double cement = 0, gravel = 0, sand = 0, water = 0;
    std::string cement_type = "I", coefficients;
    props->add_option("--cement", cement, "Cement mass %")->required();
    props->add_option("--gravel", gravel, "Gravel mass %")->required();
    props->add_option("--sand", sand, "Sand mass %")->required();
    props->add_option("--water", water, "Water mass %")->required();
    props->add_option("--cement-type", cement_type, "I (52.5 N) or IIA (32.5 R)");
    props->add_option("--coefficients", coefficients, "Material coefficient override JSON")->check(CLI::ExistingFile);

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        Outputs out(g.out);
        if (*correlate) {
            Dataset d(need_data(g, "correlate"));
            char *csv = nullptr, *svg = nullptr;
            check(mf_correlate(d.handle, method.c_str(), &csv, g.plots ? &svg : nullptr));
            out.add("correlation_" + method + ".csv", take(csv).get());
            if (g.plots) out.add("correlation_" + method + ".svg", take(svg).get());
        } else if (*crossval) {
            Dataset d(need_data(g, "crossval"));
            if (cv_hp.any() && cv_model.empty()) throw Failure{"hyperparameter overrides need --model"};
            std::optional<mf_hyperparameters> hp;
            if (cv_hp.any()) hp = cv_hp.resolve(cv_model.c_str());
            char *json = nullptr, *csv = nullptr, *folds = nullptr;
            check(mf_crossval(d.handle, cv_model.empty() ? nullptr : cv_model.c_str(),
                              cv_target.empty() ? nullptr : cv_target.c_str(), hp ? &*hp : nullptr, g.seed, &json,
                              &csv, &folds));
            out.add("crossval.json", take(json).get());
            out.add("crossval.csv", take(csv).get());
            out.add("crossval_folds.csv", take(folds).get());
        } else if (*tune_cmd) {
            Dataset d(need_data(g, "tune"));
            const std::string grid = tune_grid.empty() ? std::string() : read_file(tune_grid);
            char* json = nullptr;
            check(mf_tune(d.handle, tune_model.c_str(), tune_grid.empty() ? nullptr : grid.c_str(),
                          tune_target.empty() ? nullptr : tune_target.c_str(), g.seed, &json));
            out.add("tune.json", take(json).get());
        } else if (*design) {
            Dataset d(need_data(g, "design"));
            const auto crit = read_file(criteria);
            const std::string gen = generator.empty() ? std::string() : read_file(generator);
            const auto hp = design_hp.resolve("two_layer");
            char *csv = nullptr, *json = nullptr, *svg = nullptr;
            check(mf_design(d.handle, crit.c_str(), generator.empty() ? nullptr : gen.c_str(), &hp, mode.c_str(),
                            g.seed, &csv, &json, g.plots ? &svg : nullptr));
            out.add("design_scan.csv", take(csv).get());
            auto selected = take(json);
            out.add("design_selected.json", selected.get());
            if (g.plots) out.add("design.svg", take(svg).get());
            std::cout << selected.get() << '\n';
        } else if (*predict) {
            Dataset d(need_data(g, "predict"));
            Dataset in(inputs);
            const auto hp = predict_hp.resolve("two_layer");
            char* csv = nullptr;
            check(mf_predict(d.handle, in.handle, &hp, g.seed, &csv));
            out.add("predictions.csv", take(csv).get());
        } else if (*carbfit) {
            const auto text = read_file(series);
            char* json = nullptr;
            check(mf_carbfit(text.c_str(), &json));
            auto fit = take(json);
            std::cout << fit.get() << '\n';
            out.add("carbfit.json", fit.get());
        } else if (*props) {
            const std::string coeff = coefficients.empty() ? std::string() : read_file(coefficients);
            char* json = nullptr;
            check(mf_props(cement, gravel, sand, water, cement_type.c_str(),
                           coefficients.empty() ? nullptr : coeff.c_str(), &json));
            auto result = take(json);
            std::cout << result.get() << '\n';
            out.add("props.json", result.get());
        }
        out.commit();
    } catch (const Failure& f) {
        std::cerr << "mixforge: " << f.message << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "mixforge: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
