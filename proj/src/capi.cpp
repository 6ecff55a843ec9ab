#include "mixforge/mixforge.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "mixforge/correlation.hpp"
#include "mixforge/dataset.hpp"
#include "mixforge/designer.hpp"
#include "mixforge/error.hpp"
#include "mixforge/forest.hpp"
#include "mixforge/models.hpp"
#include "mixforge/parallel.hpp"
#include "mixforge/properties.hpp"

struct mf_dataset {
    mixforge::DatasetTable table;
};

struct mf_forest {
    mixforge::ForestModel forest;
};

struct mf_model {
    mixforge::TwoLayerModel model;
};

namespace {

using namespace mixforge;

thread_local std::string last_error;

struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

mf_status status_of(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Parse: return MF_ERR_PARSE;
        case ErrorKind::Validation: return MF_ERR_VALIDATION;
        case ErrorKind::Config: return MF_ERR_CONFIG;
        case ErrorKind::Domain: return MF_ERR_DOMAIN;
        case ErrorKind::Io: return MF_ERR_IO;
    }
    return MF_ERR_INTERNAL;
}

template <class F>
mf_status guarded(F&& body) {
    try {
        body();
        last_error.clear();
        return MF_OK;
    } catch (const Error& e) {
        last_error = e.what();
        return status_of(e.kind());
    } catch (const ArgumentError& e) {
        last_error = e.what();
        return MF_ERR_ARGUMENT;
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return MF_ERR_INTERNAL;
    } catch (const std::exception& e) {
        last_error = e.what();
        return MF_ERR_INTERNAL;
    } catch (...) {
        last_error = "unknown error";
        return MF_ERR_INTERNAL;
    }
}

void require(const void* p, const char* name) {
    if (p == nullptr) throw ArgumentError(std::string(name) + " must not be null");
}

char* dup(const std::string& s) {
    auto* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void put(char** out, const std::string& s) {
    if (out != nullptr) *out = dup(s);
}

Hyperparameters hp_or(const mf_hyperparameters* hp, ModelKind kind) {
    if (hp == nullptr) return default_hyperparameters(kind);
    return {hp->n_trees, hp->max_features, hp->min_samples_split};
}

TargetId target_of(const char* token) {
    const auto t = parse_target_token(token);
    if (!t) throw ConfigError(std::string("unknown target '") + token + "' (expected k4, env_impact, strength, density or cost)");
    return *t;
}

}  // namespace

extern "C" {

const char* mf_version(void) { return "0.1.0"; }

const char* mf_last_error(void) { return last_error.c_str(); }

const char* mf_status_name(mf_status status) {
    switch (status) {
        case MF_OK: return "ok";
        case MF_ERR_PARSE: return "parse error";
        case MF_ERR_VALIDATION: return "validation error";
        case MF_ERR_CONFIG: return "configuration error";
        case MF_ERR_DOMAIN: return "domain error";
        case MF_ERR_IO: return "i/o error";
        case MF_ERR_ARGUMENT: return "invalid argument";
        case MF_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

void mf_string_free(char* s) { std::free(s); }

void mf_set_threads(size_t threads) { set_thread_budget(threads); }

mf_status mf_default_hyperparameters(const char* model, mf_hyperparameters* out) {
    return guarded([&] {
        require(model, "model");
        require(out, "out");
        const auto hp = default_hyperparameters(parse_model_kind(model));
        *out = {hp.n_trees, hp.max_features, hp.min_samples_split};
    });
}

mf_status mf_dataset_load(const char* path, mf_dataset** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new mf_dataset{load_training_csv(path)};
    });
}

mf_status mf_dataset_parse(const char* csv, mf_dataset** out) {
    return guarded([&] {
        require(csv, "csv");
        require(out, "out");
        *out = new mf_dataset{parse_training_csv(std::string_view(csv))};
    });
}

void mf_dataset_free(mf_dataset* dataset) { delete dataset; }

size_t mf_dataset_size(const mf_dataset* dataset) { return dataset ? dataset->table.size() : 0; }

mf_status mf_dataset_to_csv(const mf_dataset* dataset, char** csv) {
    return guarded([&] {
        require(dataset, "dataset");
        require(csv, "csv");
        *csv = dup(write_training_csv(dataset->table));
    });
}

mf_status mf_correlate(const mf_dataset* dataset, const char* method, char** csv, char** svg) {
    return guarded([&] {
        require(dataset, "dataset");
        require(csv, "csv");
        const auto m = correlation_matrix(dataset->table, parse_correlation_method(method ? method : "pearson"));
        const auto text = correlation_csv(m);
        const auto plot = svg ? correlation_svg(m) : std::string();
        put(csv, text);
        put(svg, plot);
    });
}

mf_status mf_crossval(const mf_dataset* dataset, const char* model, const char* target, const mf_hyperparameters* hp,
                      uint64_t seed, char** table_json, char** table_csv, char** folds_csv) {
    return guarded([&] {
        require(dataset, "dataset");
        std::vector<ModelKind> kinds;
        if (model) kinds.push_back(parse_model_kind(model));
        else kinds.assign(kAllModelKinds.begin(), kAllModelKinds.end());
        std::vector<CrossValReport> reports;
        for (auto kind : kinds) {
            const auto params = hp_or(hp, kind);
            if (target) {
                reports.push_back(loocv(dataset->table, target_of(target), kind, params, seed));
            } else {
                for (auto& r : loocv_all(dataset->table, kind, params, seed)) reports.push_back(std::move(r));
            }
        }
        std::string folds = "model,target,mix,truth,prediction,sigma\n";
        for (const auto& r : reports) {
            for (const auto& f : r.folds) {
                folds += std::string(model_kind_token(r.kind)) + ',' + std::string(target_token(r.target)) + ',' +
                         f.record_id + ',' + format_number(f.truth) + ',' + format_number(f.prediction) + ',' +
                         format_number(f.sigma) + '\n';
            }
        }
        const auto json = crossval_table_json(reports);
        const auto csv = crossval_table_csv(reports);
        put(table_json, json);
        put(table_csv, csv);
        put(folds_csv, folds);
    });
}

mf_status mf_tune(const mf_dataset* dataset, const char* model, const char* grid_json, const char* target,
                  uint64_t seed, char** result_json) {
    return guarded([&] {
        require(dataset, "dataset");
        require(model, "model");
        require(result_json, "result_json");
        const auto kind = parse_model_kind(model);
        const auto grid = grid_json ? parse_grid_json(grid_json) : default_tuning_grid(kind, dataset->table.config());
        std::optional<TargetId> t;
        if (target) t = target_of(target);
        *result_json = dup(tune(dataset->table, grid, kind, seed, t).to_json());
    });
}

mf_status mf_design(const mf_dataset* dataset, const char* criteria_json, const char* generator_json,
                    const mf_hyperparameters* hp, const char* mode, uint64_t seed, char** scan_csv,
                    char** selected_json, char** svg) {
    return guarded([&] {
        require(dataset, "dataset");
        require(criteria_json, "criteria_json");
        const auto criteria = TargetCriteria::from_json(criteria_json);
        const auto params = generator_json ? parse_generator_json(generator_json, GeneratorParams{}) : GeneratorParams{};
        const auto pmode = parse_probability_mode(mode ? mode : "gaussian");
        const auto models = DesignModelSet::fit(dataset->table, hp_or(hp, ModelKind::TwoLayer), seed);
        const auto result = scan(models, criteria, params, pmode);
        const auto csv = result.to_csv();
        const auto selected = result.selected_json();
        const auto plot = svg ? result.to_svg() : std::string();
        put(scan_csv, csv);
        put(selected_json, selected);
        put(svg, plot);
    });
}

mf_status mf_predict(const mf_dataset* training, const mf_dataset* inputs, const mf_hyperparameters* hp,
                     uint64_t seed, char** csv) {
    return guarded([&] {
        require(training, "training");
        require(inputs, "inputs");
        require(csv, "csv");
        const auto models = DesignModelSet::fit(training->table, hp_or(hp, ModelKind::TwoLayer), seed);
        std::ostringstream os;
        os << "mix";
        for (const char* prefix : {"mean_", "sigma_"}) {
            for (auto t : kAllTargets) os << ',' << prefix << target_token(t);
        }
        os << '\n';
        for (const auto& r : inputs->table.records()) {
            const auto p = models.predict(r);
            os << r.id;
            for (const auto& v : p) os << ',' << format_number(v.mean);
            for (const auto& v : p) os << ',' << format_number(v.sigma);
            os << '\n';
        }
        *csv = dup(os.str());
    });
}

mf_status mf_carbfit(const char* series_csv, char** fit_json) {
    return guarded([&] {
        require(series_csv, "series_csv");
        require(fit_json, "fit_json");
        const auto series = parse_carbonation_csv(std::string_view(series_csv));
        *fit_json = dup(carbonation_fit_json(fit_carbonation(series)));
    });
}

mf_status mf_props(double cement_pct, double gravel_pct, double sand_pct, double water_pct, const char* cement_type,
                   const char* coefficients_json, char** json) {
    return guarded([&] {
        require(cement_type, "cement_type");
        require(json, "json");
        const MixComposition mix{cement_pct, gravel_pct, sand_pct, water_pct};
        const auto type = parse_cement_type(cement_type);
        const auto coeffs = coefficients_json ? MaterialCoefficients::from_json(coefficients_json) : MaterialCoefficients{};
        const double env = embodied_carbon(mix, type, coeffs);
        const double price = cost(mix, type, coeffs);
        std::ostringstream os;
        os << "{\n  \"cement_type\": \"" << cement_type_token(type) << "\",\n  \"env_impact\": " << format_number(env)
           << ",\n  \"cost\": " << format_number(price) << "\n}";
        *json = dup(os.str());
    });
}

mf_status mf_carbonation_depth(double k, double x0, double t, double* depth) {
    return guarded([&] {
        require(depth, "depth");
        *depth = carbonation_depth(k, x0, t);
    });
}

mf_status mf_probability_of_bound(double mean, double sigma, int upper, double threshold, double* probability) {
    return guarded([&] {
        require(probability, "probability");
        if (!(sigma >= 0.0)) throw DomainError("sigma must be non-negative");
        const Bound b{TargetId::CarbonationK, upper ? BoundDirection::Upper : BoundDirection::Lower, threshold};
        *probability = probability_of_bound(PredictionWithUncertainty{mean, sigma}, b);
    });
}

mf_status mf_forest_fit(const double* features, size_t rows, size_t cols, const double* targets,
                        const mf_hyperparameters* hp, uint64_t seed, mf_forest** out) {
    return guarded([&] {
        require(features, "features");
        require(targets, "targets");
        require(hp, "hp");
        require(out, "out");
        if (rows == 0 || cols == 0) throw ArgumentError("rows and cols must be positive");
        Matrix x;
        for (size_t r = 0; r < rows; ++r) x.append_row(std::span<const double>(features + r * cols, cols));
        *out = new mf_forest{ForestModel::fit(x, std::span<const double>(targets, rows),
                                              {hp->n_trees, hp->max_features, hp->min_samples_split}, seed)};
    });
}

void mf_forest_free(mf_forest* forest) { delete forest; }

mf_status mf_forest_predict(const mf_forest* forest, const double* x, size_t cols, double* mean, double* sigma) {
    return guarded([&] {
        require(forest, "forest");
        require(x, "x");
        require(mean, "mean");
        const auto p = forest->forest.predict(std::span<const double>(x, cols));
        *mean = p.mean;
        if (sigma) *sigma = p.sigma;
    });
}

mf_status mf_forest_oob_predict(const mf_forest* forest, size_t row, double* mean, double* sigma, int* available) {
    return guarded([&] {
        require(forest, "forest");
        require(mean, "mean");
        require(available, "available");
        if (row >= forest->forest.training_rows()) throw ArgumentError("row out of range");
        const auto p = forest->forest.oob_predict(row);
        *available = p ? 1 : 0;
        *mean = p ? p->mean : 0.0;
        if (sigma) *sigma = p ? p->sigma : 0.0;
    });
}

mf_status mf_forest_importances(const mf_forest* forest, double* values, size_t cols, int* defined) {
    return guarded([&] {
        require(forest, "forest");
        require(values, "values");
        if (cols != forest->forest.feature_count()) throw ArgumentError("cols must equal the forest feature count");
        const auto imp = forest->forest.feature_importances();
        for (size_t i = 0; i < cols; ++i) values[i] = imp.values[i];
        if (defined) *defined = imp.defined ? 1 : 0;
    });
}

mf_status mf_forest_to_json(const mf_forest* forest, char** json) {
    return guarded([&] {
        require(forest, "forest");
        require(json, "json");
        *json = dup(forest->forest.to_json());
    });
}

mf_status mf_forest_from_json(const char* json, mf_forest** out) {
    return guarded([&] {
        require(json, "json");
        require(out, "out");
        *out = new mf_forest{ForestModel::from_json(json)};
    });
}

mf_status mf_model_fit(const mf_dataset* dataset, const char* target, const mf_hyperparameters* hp, uint64_t seed,
                       mf_model** out) {
    return guarded([&] {
        require(dataset, "dataset");
        require(target, "target");
        require(out, "out");
        *out = new mf_model{TwoLayerModel::fit(dataset->table, target_of(target), hp_or(hp, ModelKind::TwoLayer), seed)};
    });
}

void mf_model_free(mf_model* model) { delete model; }

mf_status mf_model_predict(const mf_model* model, const double* base, size_t cols, double* mean, double* sigma) {
    return guarded([&] {
        require(model, "model");
        require(base, "base");
        require(mean, "mean");
        const auto p = model->model.predict(std::span<const double>(base, cols));
        *mean = p.mean;
        if (sigma) *sigma = p.sigma;
    });
}

mf_status mf_model_to_json(const mf_model* model, char** json) {
    return guarded([&] {
        require(model, "model");
        require(json, "json");
        *json = dup(model->model.to_json());
    });
}

mf_status mf_model_from_json(const char* json, mf_model** out) {
    return guarded([&] {
        require(json, "json");
        require(out, "out");
        *out = new mf_model{TwoLayerModel::from_json(json)};
    });
}

}  // extern "C"
