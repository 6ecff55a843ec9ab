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
#include "mixforge/models.hpp"

namespace mixforge {

/// Hypothetical mix family at fixed water content and wet density.
struct GeneratorParams {
    double water_mass = 205.0;    // kg/m3
    double wet_density = 2412.0;  // kg/m3
    // (w/c, sand share of total aggregate); the share is linear in w/c through both points.
    std::array<std::pair<double, double>, 2> fine_fraction_anchors{{{0.6, 0.3674}, {0.8, 0.4035}}};
    CementType cement_type = CementType::CemI_52_5N;
    double preconditioning_days = 17.0;
    double wc_min = 0.4;
    double wc_max = 0.95;
    double wc_step = 0.05;

    void validate() const;  // throws ConfigError
    std::vector<double> wc_grid() const;
    double sand_share(double wc) const;

    bool operator==(const GeneratorParams&) const = default;
};

/// Overrides on top of `base`, e.g. {"preconditioning_days": 28, "wc_step": 0.025,
/// "fine_fraction_anchors": [[0.6, 0.37], [0.8, 0.40]], "cement_type": "IIA"}.
GeneratorParams parse_generator_json(std::string_view json, GeneratorParams base);

struct Candidate {
    double wc = 0.0;
    double cement_mass = 0.0;  // kg/m3
    double gravel_mass = 0.0;
    double sand_mass = 0.0;
    MixRecord record;  // fractions in percent, no measurements
};

/// Throws DomainError when the cement leaves no room for aggregate.
Candidate generate_candidate(const GeneratorParams& params, double wc);
std::vector<Candidate> generate_candidates(const GeneratorParams& params);

enum class BoundDirection { Upper, Lower };  // value < threshold, value > threshold

struct Bound {
    TargetId target = TargetId::CarbonationK;
    BoundDirection direction = BoundDirection::Upper;
    double threshold = 0.0;

    bool operator==(const Bound&) const = default;
};

struct TargetCriteria {
    std::string name;
    std::vector<Bound> bounds;

    void validate() const;  // non-empty, one bound per target, no NaN thresholds

    /// {"name": "Low-K", "bounds": [{"target": "k4", "op": "<", "value": 1.2}, ...]}
    static TargetCriteria from_json(std::string_view json);
    std::string to_json() const;

    static TargetCriteria low_k();
    static TargetCriteria low_e();
};

enum class ProbabilityMode { Gaussian, Empirical };

std::string_view probability_mode_token(ProbabilityMode mode);
ProbabilityMode parse_probability_mode(std::string_view token);  // throws ConfigError

/// Mass of N(mean, sigma^2) inside the bound. With sigma = 0 the bound is checked directly,
/// and a mean exactly on the threshold scores 0.5.
double probability_of_bound(const PredictionWithUncertainty& pred, const Bound& bound);

/// Fraction of tree predictions strictly inside the bound, ties counting one half.
double probability_of_bound(std::span<const double> tree_predictions, const Bound& bound);

struct SuccessProbability {
    std::array<std::optional<double>, kTargetCount> per_target{};  // set for bounded targets
    double joint = 1.0;
};

using TargetPredictions = std::array<std::optional<PredictionWithUncertainty>, kTargetCount>;

/// Product of the per-bound probabilities. Throws ValidationError naming a bounded target
/// that has no prediction.
SuccessProbability probability_of_success(const TargetPredictions& preds, const TargetCriteria& criteria);

/// Two-layer models for all five targets sharing one set of layer-1 forests.
class DesignModelSet {
public:
    static DesignModelSet fit(const DatasetTable& table, const Hyperparameters& hp, std::uint64_t seed,
                              const TwoLayerOptions& options = {});

    const TwoLayerModel& model(TargetId t) const { return models_[index_of(t)]; }
    std::uint64_t seed() const { return seed_; }

    std::array<PredictionWithUncertainty, kTargetCount> predict(const MixRecord& record) const;
    std::array<std::vector<double>, kTargetCount> tree_predictions(const MixRecord& record) const;

private:
    std::array<TwoLayerModel, kTargetCount> models_;
    std::uint64_t seed_ = 0;
};

struct DesignResult {
    Candidate candidate;
    std::array<PredictionWithUncertainty, kTargetCount> predictions{};
    SuccessProbability probability;
};

struct ScanResult {
    std::string criteria_name;
    ProbabilityMode mode = ProbabilityMode::Gaussian;
    GeneratorParams params;
    std::vector<DesignResult> results;  // grid order
    std::size_t best = 0;               // argmax of the joint probability

    const DesignResult& selected() const { return results.at(best); }
    const DesignResult* at_wc(double wc) const;  // nearest grid point within 1e-9

    std::string to_csv() const;
    std::string selected_json() const;
    std::string to_svg() const;
};

/// Scores every generated candidate. Ties on the joint probability go to the lower cement fraction.
ScanResult scan(const DesignModelSet& models, const TargetCriteria& criteria, const GeneratorParams& params = {},
                ProbabilityMode mode = ProbabilityMode::Gaussian);

}  // namespace mixforge
