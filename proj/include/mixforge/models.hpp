#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mixforge/dataset.hpp"
#include "mixforge/forest.hpp"

namespace mixforge {

enum class ModelKind { Linear, SingleRf, TwoLayer, Imputation };

inline constexpr std::array<ModelKind, 4> kAllModelKinds = {ModelKind::Linear, ModelKind::SingleRf,
                                                            ModelKind::TwoLayer, ModelKind::Imputation};

std::string_view model_kind_token(ModelKind kind);
ModelKind parse_model_kind(std::string_view token);  // throws ConfigError

/// Published defaults: linear max_features 8; single_rf (200, 3, 2); two_layer (512, 6, 2);
/// imputation (512, 13, 2).
Hyperparameters default_hyperparameters(ModelKind kind);

/// 1 - SS_res / SS_tot. Throws DomainError for constant truth or fewer than two points.
double r_squared(std::span<const double> truth, std::span<const double> pred);

/// Value used for a missing preconditioning time: the table's imputed constant, or the median
/// of its present values when no record needed imputing.
double preconditioning_fill(const DatasetTable& table);

/// Ordinary least squares with intercept over the max_features columns most correlated (in
/// absolute Pearson value) with the target. A 1e-8 ridge term keeps the solve well posed.
class LinearModel {
public:
    static LinearModel fit(const Matrix& features, std::span<const double> target, int max_features);

    double predict(std::span<const double> x) const;

    const std::vector<std::size_t>& selected_features() const { return selected_; }
    const std::vector<double>& coefficients() const { return coefficients_; }
    double intercept() const { return intercept_; }
    std::size_t feature_count() const { return feature_count_; }

private:
    std::vector<std::size_t> selected_;
    std::vector<double> coefficients_;
    double intercept_ = 0.0;
    std::size_t feature_count_ = 0;
};

/// Single-layer forest on the base features of the rows where the target is measured.
struct SingleForestModel {
    TargetId target = TargetId::CarbonationK;
    ForestModel forest;
    double imputed_precond = 0.0;
    FeatureConfig config;

    static SingleForestModel fit(const DatasetTable& table, TargetId target, const Hyperparameters& hp,
                                 std::uint64_t seed);
    PredictionWithUncertainty predict(const MixRecord& record) const;
};

/// One forest per target on the base features; the first layer of the stacked model.
class Layer1Forests {
public:
    /// Forest j is trained on the rows where target j is measured with seed derive_seed(seed, 100 + j).
    /// Throws ValidationError naming the target when it has fewer than 2 measured rows.
    static Layer1Forests fit(const DatasetTable& table, const Hyperparameters& hp, std::uint64_t seed);

    const ForestModel& forest(TargetId t) const { return forests_[index_of(t)]; }
    /// Table rows each forest was trained on; forest row p corresponds to table row rows(t)[p].
    const std::vector<std::size_t>& rows(TargetId t) const { return rows_[index_of(t)]; }

    std::array<PredictionWithUncertainty, kTargetCount> predict(std::span<const double> base) const;

private:
    std::array<ForestModel, kTargetCount> forests_;
    std::array<std::vector<std::size_t>, kTargetCount> rows_;

    friend struct TwoLayerJson;
};

struct TwoLayerOptions {
    /// When false the final target's own layer-1 mean is left out of the layer-2 inputs
    /// (its sigma is kept), giving 2 * 5 - 1 stacked channels instead of 10.
    bool include_final_target_mean = true;

    bool operator==(const TwoLayerOptions&) const = default;
};

/// Why a layer-2 training row used the full layer-1 forest instead of its out-of-bag estimate.
struct LayerFallback {
    enum class Reason { NotTrainingRow, InEveryBootstrap };
    std::string record_id;
    TargetId target = TargetId::CarbonationK;
    Reason reason = Reason::NotTrainingRow;

    bool operator==(const LayerFallback&) const = default;
};

std::vector<std::string> augmented_feature_names(TargetId final_target, const FeatureConfig& config = {},
                                                 const TwoLayerOptions& options = {});

/// Stacked forest: layer-1 (mean, sigma) estimates of all five targets augment the base
/// features of a layer-2 forest predicting the final target.
///
/// Layer-2 training rows use out-of-bag layer-1 predictions so a row's own target value never
/// leaks into its augmented inputs; inference uses the full layer-1 forests.
class TwoLayerModel {
public:
    static TwoLayerModel fit(const DatasetTable& table, TargetId final_target, const Hyperparameters& hp,
                             std::uint64_t seed, const TwoLayerOptions& options = {});

    /// Reuses already-trained layer-1 forests (they must come from the same table, hp and seed).
    static TwoLayerModel fit(const DatasetTable& table, std::shared_ptr<const Layer1Forests> layer1,
                             TargetId final_target, const Hyperparameters& hp, std::uint64_t seed,
                             const TwoLayerOptions& options = {});

    PredictionWithUncertainty predict(std::span<const double> base_features) const;
    PredictionWithUncertainty predict(const MixRecord& record) const;
    std::vector<double> tree_predictions(std::span<const double> base_features) const;

    std::vector<double> augment(std::span<const double> base_features) const;
    std::vector<double> base_features(const MixRecord& record) const;

    TargetId final_target() const { return final_target_; }
    const Hyperparameters& hyperparameters() const { return hp_; }
    std::uint64_t seed() const { return seed_; }
    const TwoLayerOptions& options() const { return options_; }
    const FeatureConfig& feature_config() const { return config_; }
    double imputed_preconditioning() const { return imputed_precond_; }
    const Layer1Forests& layer1() const { return *layer1_; }
    const ForestModel& layer2() const { return layer2_; }
    const Matrix& layer2_training() const { return layer2_training_; }
    const std::vector<std::string>& layer2_row_ids() const { return layer2_row_ids_; }
    const std::vector<LayerFallback>& fallbacks() const { return fallbacks_; }
    std::size_t augmented_feature_count() const { return layer2_.feature_count(); }

    std::string to_json() const;
    static TwoLayerModel from_json(std::string_view json);

private:
    TargetId final_target_ = TargetId::CarbonationK;
    Hyperparameters hp_;
    std::uint64_t seed_ = 0;
    TwoLayerOptions options_;
    FeatureConfig config_;
    double imputed_precond_ = 0.0;
    std::shared_ptr<const Layer1Forests> layer1_;
    ForestModel layer2_;
    Matrix layer2_training_;
    std::vector<std::string> layer2_row_ids_;
    std::vector<LayerFallback> fallbacks_;

    friend struct TwoLayerJson;
};

/// Single-layer forest whose inputs are the base features plus the measured values of the
/// other four targets. Needs every target measured, so it cannot score novel mixes.
class ImputationModel {
public:
    static ImputationModel fit(const DatasetTable& table, TargetId final_target, const Hyperparameters& hp,
                               std::uint64_t seed);

    /// Throws ValidationError when one of the other targets is not measured on the record.
    std::vector<double> features(const MixRecord& record) const;
    PredictionWithUncertainty predict(const MixRecord& record) const;

    TargetId final_target() const { return final_target_; }
    const ForestModel& forest() const { return forest_; }

private:
    TargetId final_target_ = TargetId::CarbonationK;
    ForestModel forest_;
    double imputed_precond_ = 0.0;
    FeatureConfig config_;
};

struct CrossValFold {
    std::string record_id;
    double truth = 0.0;
    double prediction = 0.0;
    double sigma = 0.0;
};

struct CrossValReport {
    TargetId target = TargetId::CarbonationK;
    ModelKind kind = ModelKind::TwoLayer;
    Hyperparameters hp;
    std::uint64_t seed = 0;
    std::vector<CrossValFold> folds;
    std::optional<double> r2;  // absent when the held-out truths are constant

    std::string to_json() const;
    std::string to_csv() const;
};

/// Seed for the fold that holds out table row `row`.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t row);

/// Leave-one-out cross-validation. Every fold retrains the whole model (both layers for the
/// stacked model) on the table without the held-out row. Folds run in parallel.
/// Imputation folds cover only the rows with all five targets measured.
CrossValReport loocv(const DatasetTable& table, TargetId target, ModelKind kind, const Hyperparameters& hp,
                     std::uint64_t seed, const TwoLayerOptions& options = {});

/// All five targets at once; layer-1 forests are shared between targets within a fold, which
/// gives the same reports as five separate loocv() calls.
std::array<CrossValReport, kTargetCount> loocv_all(const DatasetTable& table, ModelKind kind,
                                                   const Hyperparameters& hp, std::uint64_t seed,
                                                   const TwoLayerOptions& options = {});

std::string crossval_table_json(std::span<const CrossValReport> reports);
std::string crossval_table_csv(std::span<const CrossValReport> reports);

struct TuneResult {
    Hyperparameters best;
    double best_score = 0.0;
    std::vector<std::pair<Hyperparameters, double>> scores;  // grid order

    std::string to_json() const;
};

/// Default grid: n_trees in {100, 200, 512}, max_features in 1..feature_limit,
/// min_samples_split in {2, 3, 5}. Linear models only vary max_features.
std::vector<Hyperparameters> default_tuning_grid(ModelKind kind, const FeatureConfig& config = {});

/// Picks the grid point maximizing LOOCV R² summed over all five targets (or over `target`
/// alone when given). Ties go to fewer trees, then smaller max_features, then smaller
/// min_samples_split.
TuneResult tune(const DatasetTable& table, std::span<const Hyperparameters> grid, ModelKind kind,
                std::uint64_t seed, std::optional<TargetId> target = std::nullopt);

std::vector<Hyperparameters> parse_grid_json(std::string_view json);
std::string hyperparameters_json(const Hyperparameters& hp);

}  // namespace mixforge
