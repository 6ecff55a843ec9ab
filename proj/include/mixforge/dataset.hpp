#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mixforge/matrix.hpp"

namespace mixforge {

enum class CementType { CemIIA_32_5R = 0, CemI_52_5N = 1 };

std::string_view cement_type_token(CementType type);
CementType parse_cement_type(std::string_view token);  // throws ParseError

/// The five measured properties, in canonical order.
enum class TargetId { CarbonationK = 0, EnvImpact = 1, Strength = 2, Density = 3, Cost = 4 };

inline constexpr std::size_t kTargetCount = 5;
inline constexpr std::array<TargetId, kTargetCount> kAllTargets = {
    TargetId::CarbonationK, TargetId::EnvImpact, TargetId::Strength, TargetId::Density, TargetId::Cost};

inline constexpr std::size_t index_of(TargetId t) { return static_cast<std::size_t>(t); }

/// Column token used in CSV headers and criteria files: k4, env_impact, strength, density, cost.
std::string_view target_token(TargetId target);
std::optional<TargetId> parse_target_token(std::string_view token);

/// Mass fractions in percent of total mix mass.
struct MixComposition {
    double cement_pct = 0.0;
    double gravel_pct = 0.0;
    double sand_pct = 0.0;
    double water_pct = 0.0;

    double sum() const { return cement_pct + gravel_pct + sand_pct + water_pct; }

    // Each fraction in (0, 100) and the total within [99.5, 100.5].
    void validate() const;

    bool operator==(const MixComposition&) const = default;
};

inline constexpr double kFractionSumTolerance = 0.5;

struct MeasuredTargets {
    std::array<std::optional<double>, kTargetCount> values{};

    std::optional<double>& operator[](TargetId t) { return values[index_of(t)]; }
    const std::optional<double>& operator[](TargetId t) const { return values[index_of(t)]; }
    bool has(TargetId t) const { return values[index_of(t)].has_value(); }
    bool all_present() const;

    bool operator==(const MeasuredTargets&) const = default;
};

struct MixRecord {
    std::string id;
    CementType cement_type = CementType::CemI_52_5N;
    MixComposition composition;
    double estimated_mass_per_m3 = 0.0;
    std::optional<double> preconditioning_days;
    MeasuredTargets measured;

    // Measured values strictly positive; preconditioning present whenever K is.
    void validate() const;

    bool operator==(const MixRecord&) const = default;
};

/// Base input features, in canonical column order.
enum class Feature {
    CementTypeCode = 0,
    CementPct,
    GravelPct,
    SandPct,
    WaterPct,
    WaterCementRatio,
    TotalAggCementRatio,
    SandTotalAggRatio,
    PreconditioningDays,
    EstimatedMass,  // only when FeatureConfig::include_estimated_mass
};

inline constexpr std::size_t kBaseFeatureCount = 9;

struct FeatureConfig {
    bool include_estimated_mass = false;

    std::size_t feature_count() const { return kBaseFeatureCount + (include_estimated_mass ? 1 : 0); }
    bool operator==(const FeatureConfig&) const = default;
};

std::vector<std::string> feature_names(const FeatureConfig& config = {});

struct FeatureVector {
    double cement_type_code = 0.0;
    double cement_pct = 0.0;
    double gravel_pct = 0.0;
    double sand_pct = 0.0;
    double water_pct = 0.0;
    double water_cement_ratio = 0.0;
    double total_agg_cement_ratio = 0.0;
    double sand_total_agg_ratio = 0.0;
    double preconditioning_days = 0.0;
    double estimated_mass_per_m3 = 0.0;

    std::vector<double> to_vector(const FeatureConfig& config = {}) const;
};

/// Throws DomainError on a zero cement or zero aggregate fraction.
FeatureVector derive_features(const MixRecord& record, double imputed_precond);

/// Median of the present preconditioning times, taking the lower middle value for even counts.
double impute_preconditioning(std::span<const MixRecord> records);

/// Validated, ordered set of mix records with their derived feature vectors.
class DatasetTable {
public:
    DatasetTable() = default;
    explicit DatasetTable(std::vector<MixRecord> records, FeatureConfig config = {});

    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    const std::vector<MixRecord>& records() const { return records_; }
    const MixRecord& record(std::size_t i) const { return records_.at(i); }
    const std::vector<FeatureVector>& features() const { return features_; }
    const FeatureConfig& config() const { return config_; }

    // Absent only when no record needed imputing.
    std::optional<double> imputed_preconditioning() const { return imputed_precond_; }

    std::size_t feature_count() const { return config_.feature_count(); }
    std::vector<double> feature_row(std::size_t i) const { return features_.at(i).to_vector(config_); }
    Matrix feature_matrix() const;

    /// Indices of records with the given target measured, in table order.
    std::vector<std::size_t> rows_with(TargetId target) const;

    /// New table without record i; preconditioning imputation is recomputed on the remainder.
    DatasetTable without_row(std::size_t i) const;
    DatasetTable subset(std::span<const std::size_t> rows) const;

    std::optional<std::size_t> find(std::string_view id) const;

private:
    std::vector<MixRecord> records_;
    std::vector<FeatureVector> features_;
    FeatureConfig config_;
    std::optional<double> imputed_precond_;
};

inline constexpr std::string_view kTrainingCsvHeader =
    "mix,cement_type,cement_pct,gravel_pct,sand_pct,water_pct,est_mass_per_m3,precond_days,k4,env_impact,"
    "strength,density,cost";

DatasetTable parse_training_csv(std::istream& in, FeatureConfig config = {});
DatasetTable parse_training_csv(std::string_view text, FeatureConfig config = {});
DatasetTable load_training_csv(const std::string& path, FeatureConfig config = {});
std::string write_training_csv(const DatasetTable& table);

/// Shortest round-trip decimal representation.
std::string format_number(double value);

}  // namespace mixforge
