#include "mixforge/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "forest_json.hpp"
#include "mixforge/correlation.hpp"
#include "mixforge/error.hpp"
#include "mixforge/parallel.hpp"
#include "mixforge/random.hpp"

namespace mixforge {

namespace {

constexpr double kRidge = 1e-8;
constexpr std::uint64_t kLayer1Stream = 100;
constexpr std::uint64_t kLayer2Stream = 200;
constexpr std::uint64_t kSingleStream = 300;
constexpr std::uint64_t kImputationStream = 400;

Matrix rows_of(const DatasetTable& table, std::span<const std::size_t> rows) {
    Matrix m(rows.size(), table.feature_count());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = table.feature_row(rows[i]);
        std::copy(r.begin(), r.end(), m.row(i).begin());
    }
    return m;
}

std::vector<double> targets_of(const DatasetTable& table, std::span<const std::size_t> rows, TargetId t) {
    std::vector<double> y;
    y.reserve(rows.size());
    for (auto r : rows) y.push_back(*table.record(r).measured[t]);
    return y;
}

std::vector<std::size_t> fully_measured_rows(const DatasetTable& table) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (table.record(i).measured.all_present()) rows.push_back(i);
    }
    return rows;
}

}  // namespace

std::string_view model_kind_token(ModelKind kind) {
    switch (kind) {
        case ModelKind::Linear: return "linear";
        case ModelKind::SingleRf: return "single_rf";
        case ModelKind::TwoLayer: return "two_layer";
        case ModelKind::Imputation: return "imputation";
    }
    return "unknown";
}

ModelKind parse_model_kind(std::string_view token) {
    for (auto k : kAllModelKinds) {
        if (model_kind_token(k) == token) return k;
    }
    throw ConfigError("unknown model kind '" + std::string(token) + "'");
}

Hyperparameters default_hyperparameters(ModelKind kind) {
    switch (kind) {
        case ModelKind::Linear: return {1, 8, 2};
        case ModelKind::SingleRf: return {200, 3, 2};
        case ModelKind::TwoLayer: return {512, 6, 2};
        case ModelKind::Imputation: return {512, 13, 2};
    }
    return {};
}

double r_squared(std::span<const double> truth, std::span<const double> pred) {
    if (truth.size() != pred.size()) throw DomainError("r_squared: length mismatch");
    if (truth.size() < 2) throw DomainError("r_squared: need at least two points");
    if (std::all_of(truth.begin(), truth.end(), [&](double v) { return v == truth[0]; })) {
        throw DomainError("r_squared: truth is constant, R^2 undefined");
    }
    const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
        ss_tot += (truth[i] - mean) * (truth[i] - mean);
    }
    return 1.0 - ss_res / ss_tot;
}

double preconditioning_fill(const DatasetTable& table) {
    if (auto v = table.imputed_preconditioning()) return *v;
    if (table.empty()) return 0.0;
    return impute_preconditioning(table.records());
}

// ---------------------------------------------------------------------------------------------
// Linear

LinearModel LinearModel::fit(const Matrix& features, std::span<const double> target, int max_features) {
    const std::size_t n = features.rows();
    const std::size_t p = features.cols();
    if (n != target.size()) throw ValidationError("fit_linear: feature/target row count mismatch");
    if (max_features < 1) throw ConfigError("fit_linear: max_features must be positive");
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(max_features), p);
    if (n <= k) {
        throw ValidationError("fit_linear: need more rows (" + std::to_string(n) + ") than selected features (" +
                              std::to_string(k) + ")");
    }

    std::vector<double> score(p, 0.0);
    for (std::size_t f = 0; f < p; ++f) {
        const auto col = features.column(f);
        score[f] = std::abs(pearson(col, target).value_or(0.0));
    }
    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return score[a] > score[b]; });

    LinearModel model;
    model.feature_count_ = p;
    model.selected_.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(model.selected_.begin(), model.selected_.end());

    // Ridge on the slopes only: stack sqrt(lambda) * [0 | I] under the design matrix.
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n + k), static_cast<Eigen::Index>(k + 1));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n + k));
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        a(r, 0) = 1.0;
        for (std::size_t j = 0; j < k; ++j) a(r, static_cast<Eigen::Index>(j + 1)) = features(i, model.selected_[j]);
        b(r) = target[i];
    }
    for (std::size_t j = 0; j < k; ++j) {
        a(static_cast<Eigen::Index>(n + j), static_cast<Eigen::Index>(j + 1)) = std::sqrt(kRidge);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < static_cast<Eigen::Index>(k + 1)) throw DomainError("fit_linear: degenerate design matrix");
    const Eigen::VectorXd beta = qr.solve(b);
    if (!beta.allFinite()) throw DomainError("fit_linear: non-finite coefficients");

    model.intercept_ = beta(0);
    model.coefficients_.resize(k);
    for (std::size_t j = 0; j < k; ++j) model.coefficients_[j] = beta(static_cast<Eigen::Index>(j + 1));
    return model;
}

double LinearModel::predict(std::span<const double> x) const {
    if (x.size() != feature_count_) throw ValidationError("linear predict: dimension mismatch");
    double y = intercept_;
    for (std::size_t j = 0; j < selected_.size(); ++j) y += coefficients_[j] * x[selected_[j]];
    return y;
}

// ---------------------------------------------------------------------------------------------
// Single-layer forest

SingleForestModel SingleForestModel::fit(const DatasetTable& table, TargetId target, const Hyperparameters& hp,
                                         std::uint64_t seed) {
    const auto rows = table.rows_with(target);
    if (rows.size() < 2) {
        throw ValidationError("target '" + std::string(target_token(target)) + "' has fewer than 2 measured rows");
    }
    SingleForestModel m;
    m.target = target;
    m.config = table.config();
    m.imputed_precond = preconditioning_fill(table);
    m.forest = ForestModel::fit(rows_of(table, rows), targets_of(table, rows, target), hp,
                                derive_seed(seed, kSingleStream + index_of(target)));
    return m;
}

PredictionWithUncertainty SingleForestModel::predict(const MixRecord& record) const {
    return forest.predict(derive_features(record, imputed_precond).to_vector(config));
}

// ---------------------------------------------------------------------------------------------
// Two-layer

Layer1Forests Layer1Forests::fit(const DatasetTable& table, const Hyperparameters& hp, std::uint64_t seed) {
    Layer1Forests out;
    for (auto t : kAllTargets) {
        auto rows = table.rows_with(t);
        if (rows.size() < 2) {
            throw ValidationError("layer-1 target '" + std::string(target_token(t)) +
                                  "' has fewer than 2 measured rows");
        }
        out.forests_[index_of(t)] = ForestModel::fit(rows_of(table, rows), targets_of(table, rows, t), hp,
                                                     derive_seed(seed, kLayer1Stream + index_of(t)));
        out.rows_[index_of(t)] = std::move(rows);
    }
    return out;
}

std::array<PredictionWithUncertainty, kTargetCount> Layer1Forests::predict(std::span<const double> base) const {
    std::array<PredictionWithUncertainty, kTargetCount> out;
    for (auto t : kAllTargets) out[index_of(t)] = forests_[index_of(t)].predict(base);
    return out;
}

std::vector<std::string> augmented_feature_names(TargetId final_target, const FeatureConfig& config,
                                                 const TwoLayerOptions& options) {
    auto names = feature_names(config);
    for (auto t : kAllTargets) {
        const std::string token(target_token(t));
        if (options.include_final_target_mean || t != final_target) names.push_back(token + "_mean");
        names.push_back(token + "_sigma");
    }
    return names;
}

namespace {

void append_channels(std::vector<double>& out, TargetId final_target, const TwoLayerOptions& options,
                     const std::array<PredictionWithUncertainty, kTargetCount>& layer1) {
    for (auto t : kAllTargets) {
        if (options.include_final_target_mean || t != final_target) out.push_back(layer1[index_of(t)].mean);
        out.push_back(layer1[index_of(t)].sigma);
    }
}

}  // namespace

TwoLayerModel TwoLayerModel::fit(const DatasetTable& table, TargetId final_target, const Hyperparameters& hp,
                                 std::uint64_t seed, const TwoLayerOptions& options) {
    auto final_rows = table.rows_with(final_target);
    if (final_rows.size() < 3) {
        throw ValidationError("two-layer model needs at least 3 rows with '" +
                              std::string(target_token(final_target)) + "' measured");
    }
    auto layer1 = std::make_shared<const Layer1Forests>(Layer1Forests::fit(table, hp, seed));
    return fit(table, std::move(layer1), final_target, hp, seed, options);
}

TwoLayerModel TwoLayerModel::fit(const DatasetTable& table, std::shared_ptr<const Layer1Forests> layer1,
                                 TargetId final_target, const Hyperparameters& hp, std::uint64_t seed,
                                 const TwoLayerOptions& options) {
    const auto final_rows = table.rows_with(final_target);
    if (final_rows.size() < 3) {
        throw ValidationError("two-layer model needs at least 3 rows with '" +
                              std::string(target_token(final_target)) + "' measured");
    }

    TwoLayerModel m;
    m.final_target_ = final_target;
    m.hp_ = hp;
    m.seed_ = seed;
    m.options_ = options;
    m.config_ = table.config();
    m.imputed_precond_ = preconditioning_fill(table);
    m.layer1_ = std::move(layer1);

    std::vector<double> y;
    for (auto r : final_rows) {
        const auto base = table.feature_row(r);
        std::array<PredictionWithUncertainty, kTargetCount> channels;
        for (auto t : kAllTargets) {
            const auto& forest = m.layer1_->forest(t);
            const auto& trained = m.layer1_->rows(t);
            const auto it = std::lower_bound(trained.begin(), trained.end(), r);
            std::optional<PredictionWithUncertainty> p;
            if (it != trained.end() && *it == r) {
                p = forest.oob_predict(static_cast<std::size_t>(it - trained.begin()));
                if (!p) {
                    m.fallbacks_.push_back({table.record(r).id, t, LayerFallback::Reason::InEveryBootstrap});
                }
            } else {
                m.fallbacks_.push_back({table.record(r).id, t, LayerFallback::Reason::NotTrainingRow});
            }
            channels[index_of(t)] = p ? *p : forest.predict(base);
        }
        std::vector<double> row(base.begin(), base.end());
        append_channels(row, final_target, options, channels);
        m.layer2_training_.append_row(row);
        m.layer2_row_ids_.push_back(table.record(r).id);
        y.push_back(*table.record(r).measured[final_target]);
    }
    m.layer2_ = ForestModel::fit(m.layer2_training_, y, hp, derive_seed(seed, kLayer2Stream + index_of(final_target)));
    return m;
}

std::vector<double> TwoLayerModel::augment(std::span<const double> base) const {
    if (base.size() != config_.feature_count()) throw ValidationError("two-layer predict: dimension mismatch");
    std::vector<double> row(base.begin(), base.end());
    append_channels(row, final_target_, options_, layer1_->predict(base));
    return row;
}

std::vector<double> TwoLayerModel::base_features(const MixRecord& record) const {
    return derive_features(record, imputed_precond_).to_vector(config_);
}

PredictionWithUncertainty TwoLayerModel::predict(std::span<const double> base) const {
    return layer2_.predict(augment(base));
}

PredictionWithUncertainty TwoLayerModel::predict(const MixRecord& record) const {
    return predict(base_features(record));
}

std::vector<double> TwoLayerModel::tree_predictions(std::span<const double> base) const {
    return layer2_.tree_predictions(augment(base));
}

struct TwoLayerJson {
    static nlohmann::json encode(const TwoLayerModel& m) {
        nlohmann::json layer1 = nlohmann::json::object();
        for (auto t : kAllTargets) {
            layer1[std::string(target_token(t))] = {{"rows", m.layer1_->rows(t)},
                                                    {"forest", forest_to_json_value(m.layer1_->forest(t))}};
        }
        nlohmann::json fallbacks = nlohmann::json::array();
        for (const auto& f : m.fallbacks_) {
            fallbacks.push_back({{"id", f.record_id},
                                 {"target", target_token(f.target)},
                                 {"reason", f.reason == LayerFallback::Reason::InEveryBootstrap
                                                ? "in_every_bootstrap"
                                                : "not_training_row"}});
        }
        return {{"format", "mixforge-two-layer"},
                {"version", 1},
                {"final_target", target_token(m.final_target_)},
                {"hyperparameters",
                 {{"n_trees", m.hp_.n_trees},
                  {"max_features", m.hp_.max_features},
                  {"min_samples_split", m.hp_.min_samples_split}}},
                {"seed", m.seed_},
                {"include_final_target_mean", m.options_.include_final_target_mean},
                {"include_estimated_mass", m.config_.include_estimated_mass},
                {"imputed_precond_days", m.imputed_precond_},
                {"augmented_features", augmented_feature_names(m.final_target_, m.config_, m.options_)},
                {"layer1", layer1},
                {"layer2", forest_to_json_value(m.layer2_)},
                {"layer2_row_ids", m.layer2_row_ids_},
                {"fallbacks", fallbacks}};
    }

    static TwoLayerModel decode(const nlohmann::json& j) {
        if (j.value("format", "") != "mixforge-two-layer") throw ParseError("not a mixforge two-layer document");
        TwoLayerModel m;
        const auto target = parse_target_token(j.at("final_target").get<std::string>());
        if (!target) throw ParseError("unknown final target");
        m.final_target_ = *target;
        const auto& hp = j.at("hyperparameters");
        m.hp_ = {hp.at("n_trees").get<int>(), hp.at("max_features").get<int>(),
                 hp.at("min_samples_split").get<int>()};
        m.seed_ = j.at("seed").get<std::uint64_t>();
        m.options_.include_final_target_mean = j.at("include_final_target_mean").get<bool>();
        m.config_.include_estimated_mass = j.at("include_estimated_mass").get<bool>();
        m.imputed_precond_ = j.at("imputed_precond_days").get<double>();
        Layer1Forests layer1;
        for (auto t : kAllTargets) {
            const auto& entry = j.at("layer1").at(std::string(target_token(t)));
            layer1.rows_[index_of(t)] = entry.at("rows").get<std::vector<std::size_t>>();
            layer1.forests_[index_of(t)] = forest_from_json_value(entry.at("forest"));
        }
        m.layer1_ = std::make_shared<const Layer1Forests>(std::move(layer1));
        m.layer2_ = forest_from_json_value(j.at("layer2"));
        m.layer2_row_ids_ = j.at("layer2_row_ids").get<std::vector<std::string>>();
        for (const auto& f : j.at("fallbacks")) {
            LayerFallback fb;
            fb.record_id = f.at("id").get<std::string>();
            fb.target = parse_target_token(f.at("target").get<std::string>()).value_or(TargetId::CarbonationK);
            fb.reason = f.at("reason").get<std::string>() == "in_every_bootstrap"
                            ? LayerFallback::Reason::InEveryBootstrap
                            : LayerFallback::Reason::NotTrainingRow;
            m.fallbacks_.push_back(fb);
        }
        return m;
    }
};

std::string TwoLayerModel::to_json() const { return TwoLayerJson::encode(*this).dump(); }

TwoLayerModel TwoLayerModel::from_json(std::string_view json) {
    try {
        return TwoLayerJson::decode(nlohmann::json::parse(json));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid two-layer document: ") + e.what());
    }
}

// ---------------------------------------------------------------------------------------------
// Imputation

ImputationModel ImputationModel::fit(const DatasetTable& table, TargetId final_target, const Hyperparameters& hp,
                                     std::uint64_t seed) {
    const auto rows = fully_measured_rows(table);
    if (rows.size() < 2) throw ValidationError("imputation model needs at least 2 fully measured rows");
    ImputationModel m;
    m.final_target_ = final_target;
    m.config_ = table.config();
    m.imputed_precond_ = preconditioning_fill(table);
    Matrix x;
    std::vector<double> y;
    for (auto r : rows) {
        x.append_row(m.features(table.record(r)));
        y.push_back(*table.record(r).measured[final_target]);
    }
    m.forest_ = ForestModel::fit(x, y, hp, derive_seed(seed, kImputationStream + index_of(final_target)));
    return m;
}

std::vector<double> ImputationModel::features(const MixRecord& record) const {
    auto row = derive_features(record, imputed_precond_).to_vector(config_);
    for (auto t : kAllTargets) {
        if (t == final_target_) continue;
        if (!record.measured.has(t)) {
            throw ValidationError("imputation model needs measured '" + std::string(target_token(t)) + "' for mix '" +
                                  record.id + "'");
        }
        row.push_back(*record.measured[t]);
    }
    return row;
}

PredictionWithUncertainty ImputationModel::predict(const MixRecord& record) const {
    return forest_.predict(features(record));
}

// ---------------------------------------------------------------------------------------------
// Cross-validation

std::uint64_t fold_seed(std::uint64_t seed, std::size_t row) { return derive_seed(seed, row); }

namespace {

std::vector<std::size_t> fold_rows(const DatasetTable& table, ModelKind kind, std::optional<TargetId> target) {
    if (kind == ModelKind::Imputation) return fully_measured_rows(table);
    if (target) return table.rows_with(*target);
    std::vector<std::size_t> rows(table.size());
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
}

// Trains on `train` and predicts `held` for every requested target.
std::vector<std::pair<TargetId, PredictionWithUncertainty>> fold_predictions(
    const DatasetTable& train, const MixRecord& held, ModelKind kind, std::span<const TargetId> targets,
    const Hyperparameters& hp, std::uint64_t seed, const TwoLayerOptions& options) {
    std::vector<std::pair<TargetId, PredictionWithUncertainty>> out;
    switch (kind) {
        case ModelKind::Linear: {
            const auto fill = preconditioning_fill(train);
            const auto x = derive_features(held, fill).to_vector(train.config());
            for (auto t : targets) {
                const auto rows = train.rows_with(t);
                auto model = LinearModel::fit(rows_of(train, rows), targets_of(train, rows, t), hp.max_features);
                out.emplace_back(t, PredictionWithUncertainty{model.predict(x), 0.0});
            }
            break;
        }
        case ModelKind::SingleRf:
            for (auto t : targets) out.emplace_back(t, SingleForestModel::fit(train, t, hp, seed).predict(held));
            break;
        case ModelKind::TwoLayer: {
            auto layer1 = std::make_shared<const Layer1Forests>(Layer1Forests::fit(train, hp, seed));
            for (auto t : targets) {
                out.emplace_back(t, TwoLayerModel::fit(train, layer1, t, hp, seed, options).predict(held));
            }
            break;
        }
        case ModelKind::Imputation:
            for (auto t : targets) out.emplace_back(t, ImputationModel::fit(train, t, hp, seed).predict(held));
            break;
    }
    return out;
}

std::optional<double> report_r2(const std::vector<CrossValFold>& folds) {
    std::vector<double> truth, pred;
    for (const auto& f : folds) {
        truth.push_back(f.truth);
        pred.push_back(f.prediction);
    }
    if (truth.size() < 2 || std::all_of(truth.begin(), truth.end(), [&](double v) { return v == truth[0]; })) {
        return std::nullopt;
    }
    return r_squared(truth, pred);
}

std::vector<CrossValReport> run_loocv(const DatasetTable& table, std::span<const TargetId> targets, ModelKind kind,
                                      const Hyperparameters& hp, std::uint64_t seed, const TwoLayerOptions& options,
                                      std::optional<TargetId> only) {
    const auto rows = fold_rows(table, kind, only);
    for (auto t : targets) {
        const std::size_t measured = kind == ModelKind::Imputation ? rows.size() : table.rows_with(t).size();
        if (measured < 3) {
            throw ValidationError("cross-validation needs at least 3 rows with '" + std::string(target_token(t)) +
                                  "' measured");
        }
    }

    std::vector<std::vector<std::pair<TargetId, PredictionWithUncertainty>>> results(rows.size());
    parallel_for(rows.size(), [&](std::size_t i) {
        const auto row = rows[i];
        const auto& held = table.record(row);
        std::vector<TargetId> wanted;
        for (auto t : targets) {
            if (held.measured.has(t)) wanted.push_back(t);
        }
        if (wanted.empty()) return;
        try {
            results[i] = fold_predictions(table.without_row(row), held, kind, wanted, hp, fold_seed(seed, row), options);
        } catch (const Error& e) {
            throw Error(e.kind(), "fold '" + held.id + "': " + e.what());
        }
    });

    std::vector<CrossValReport> reports;
    for (auto t : targets) {
        CrossValReport rep;
        rep.target = t;
        rep.kind = kind;
        rep.hp = hp;
        rep.seed = seed;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (const auto& [target, p] : results[i]) {
                if (target != t) continue;
                const auto& rec = table.record(rows[i]);
                rep.folds.push_back({rec.id, *rec.measured[t], p.mean, p.sigma});
            }
        }
        rep.r2 = report_r2(rep.folds);
        reports.push_back(std::move(rep));
    }
    return reports;
}

nlohmann::json hp_json(const Hyperparameters& hp) {
    return {{"n_trees", hp.n_trees}, {"max_features", hp.max_features}, {"min_samples_split", hp.min_samples_split}};
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::string r2_cell(const std::optional<double>& v) { return v ? format_number(*v) : std::string("NA"); }

}  // namespace

CrossValReport loocv(const DatasetTable& table, TargetId target, ModelKind kind, const Hyperparameters& hp,
                     std::uint64_t seed, const TwoLayerOptions& options) {
    const std::array<TargetId, 1> targets = {target};
    return std::move(run_loocv(table, targets, kind, hp, seed, options, target).front());
}

std::array<CrossValReport, kTargetCount> loocv_all(const DatasetTable& table, ModelKind kind,
                                                   const Hyperparameters& hp, std::uint64_t seed,
                                                   const TwoLayerOptions& options) {
    auto reports = run_loocv(table, kAllTargets, kind, hp, seed, options, std::nullopt);
    std::array<CrossValReport, kTargetCount> out;
    for (std::size_t i = 0; i < kTargetCount; ++i) out[i] = std::move(reports[i]);
    return out;
}

std::string CrossValReport::to_json() const {
    nlohmann::json folds_json = nlohmann::json::array();
    for (const auto& f : folds) {
        folds_json.push_back({{"id", f.record_id}, {"truth", f.truth}, {"prediction", f.prediction}, {"sigma", f.sigma}});
    }
    nlohmann::json j = {{"target", target_token(target)},
                        {"model", model_kind_token(kind)},
                        {"hyperparameters", hp_json(hp)},
                        {"seed", seed},
                        {"r2", optional_json(r2)},
                        {"folds", folds_json}};
    return j.dump(2);
}

std::string CrossValReport::to_csv() const {
    std::string out = "mix,truth,prediction,sigma\n";
    for (const auto& f : folds) {
        out += f.record_id + ',' + format_number(f.truth) + ',' + format_number(f.prediction) + ',' +
               format_number(f.sigma) + '\n';
    }
    return out;
}

std::string crossval_table_json(std::span<const CrossValReport> reports) {
    nlohmann::ordered_json models = nlohmann::ordered_json::object();
    for (const auto& r : reports) {
        auto& entry = models[std::string(model_kind_token(r.kind))];
        entry["hyperparameters"] = hp_json(r.hp);
        entry["seed"] = r.seed;
        entry["r2"][std::string(target_token(r.target))] = optional_json(r.r2);
    }
    nlohmann::ordered_json j = {{"models", models}};
    return j.dump(2);
}

std::string crossval_table_csv(std::span<const CrossValReport> reports) {
    std::string out = "model";
    for (auto t : kAllTargets) out += ',' + std::string(target_token(t));
    out += '\n';
    for (auto kind : kAllModelKinds) {
        std::array<const CrossValReport*, kTargetCount> cells{};
        bool any = false;
        for (const auto& r : reports) {
            if (r.kind == kind) {
                cells[index_of(r.target)] = &r;
                any = true;
            }
        }
        if (!any) continue;
        out += model_kind_token(kind);
        for (const auto* c : cells) out += ',' + (c ? r2_cell(c->r2) : std::string());
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Tuning

std::vector<Hyperparameters> default_tuning_grid(ModelKind kind, const FeatureConfig& config) {
    const int base = static_cast<int>(config.feature_count());
    std::vector<Hyperparameters> grid;
    if (kind == ModelKind::Linear) {
        for (int f = 1; f <= base; ++f) grid.push_back({1, f, 2});
        return grid;
    }
    // Both stacked layers share one setting, so the 9-feature first layer bounds max_features.
    const int limit = kind == ModelKind::Imputation ? base + 4 : base;
    for (int trees : {100, 200, 512}) {
        for (int f = 1; f <= limit; ++f) {
            for (int split : {2, 3, 5}) grid.push_back({trees, f, split});
        }
    }
    return grid;
}

TuneResult tune(const DatasetTable& table, std::span<const Hyperparameters> grid, ModelKind kind,
                std::uint64_t seed, std::optional<TargetId> target) {
    if (grid.empty()) throw ConfigError("tuning grid is empty");
    std::vector<double> scores(grid.size(), 0.0);
    auto evaluate = [&](std::size_t g) {
        double total = 0.0;
        if (target) {
            total = loocv(table, *target, kind, grid[g], seed).r2.value_or(-INFINITY);
        } else {
            for (const auto& rep : loocv_all(table, kind, grid[g], seed)) total += rep.r2.value_or(-INFINITY);
        }
        scores[g] = total;
    };
    if (grid.size() > 1 && grid.size() >= thread_budget()) {
        parallel_for(grid.size(), evaluate);
    } else {
        for (std::size_t g = 0; g < grid.size(); ++g) evaluate(g);
    }

    TuneResult result;
    std::size_t best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        result.scores.emplace_back(grid[g], scores[g]);
        if (g == 0) continue;
        const auto& a = grid[g];
        const auto& b = grid[best];
        const bool better = scores[g] > scores[best] ||
                            (scores[g] == scores[best] &&
                             std::tie(a.n_trees, a.max_features, a.min_samples_split) <
                                 std::tie(b.n_trees, b.max_features, b.min_samples_split));
        if (better) best = g;
    }
    result.best = grid[best];
    result.best_score = scores[best];
    return result;
}

std::string TuneResult::to_json() const {
    nlohmann::json evaluated = nlohmann::json::array();
    for (const auto& [hp, score] : scores) {
        auto e = hp_json(hp);
        e["score"] = std::isfinite(score) ? nlohmann::json(score) : nlohmann::json();
        evaluated.push_back(e);
    }
    nlohmann::json j = {{"best", hp_json(best)},
                        {"best_score", std::isfinite(best_score) ? nlohmann::json(best_score) : nlohmann::json()},
                        {"evaluated", evaluated}};
    return j.dump(2);
}

std::vector<Hyperparameters> parse_grid_json(std::string_view json) {
    std::vector<Hyperparameters> grid;
    try {
        const auto j = nlohmann::json::parse(json);
        const auto& points = j.is_object() ? j.at("grid") : j;
        if (!points.is_array()) throw ConfigError("grid must be a JSON array");
        for (const auto& p : points) {
            grid.push_back({p.at("n_trees").get<int>(), p.at("max_features").get<int>(),
                            p.value("min_samples_split", 2)});
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid grid file: ") + e.what());
    }
    if (grid.empty()) throw ConfigError("tuning grid is empty");
    return grid;
}

std::string hyperparameters_json(const Hyperparameters& hp) { return hp_json(hp).dump(2); }

}  // namespace mixforge
