#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mixforge/matrix.hpp"

namespace mixforge {

struct Hyperparameters {
    int n_trees = 512;
    int max_features = 6;       // features considered per split
    int min_samples_split = 2;  // nodes smaller than this become leaves

    /// Throws ConfigError when a field is out of range or max_features exceeds feature_count.
    void validate(std::size_t feature_count) const;

    bool operator==(const Hyperparameters&) const = default;
};

struct PredictionWithUncertainty {
    double mean = 0.0;
    double sigma = 0.0;  // population standard deviation over trees, same unit as mean
};

/// CART regression tree stored as a flat node array; node 0 is the root.
class RegressionTree {
public:
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double value = 0.0;  // mean target of the samples routed here
        int count = 0;       // number of (bootstrap) samples routed here
        double gain = 0.0;   // sum-of-squares reduction achieved by this split

        bool is_leaf() const { return feature < 0; }
        bool operator==(const Node&) const = default;
    };

    RegressionTree() = default;
    explicit RegressionTree(std::vector<Node> nodes) : nodes_(std::move(nodes)) {}

    double predict(std::span<const double> x) const;
    const std::vector<Node>& nodes() const { return nodes_; }
    std::size_t split_count() const;

    bool operator==(const RegressionTree&) const = default;

private:
    std::vector<Node> nodes_;
};

struct FeatureImportances {
    std::vector<double> values;  // non-negative, sums to 1 when defined
    bool defined = false;        // false when no tree contains a split
};

/// Bootstrap-aggregated forest of CART regression trees.
///
/// Tree t is trained on N rows drawn with replacement from the N training rows using the
/// random stream derive_seed(seed, t); the same stream then drives feature subsampling at
/// each split node. Training is parallel over trees and bit-identical to serial training.
class ForestModel {
public:
    ForestModel() = default;

    static ForestModel fit(const Matrix& features, std::span<const double> targets, const Hyperparameters& hp,
                           std::uint64_t seed);

    /// Fits with caller-supplied bootstrap multisets (one per tree); feature subsampling still
    /// uses the per-tree stream of `seed`.
    static ForestModel fit_with_bootstraps(const Matrix& features, std::span<const double> targets,
                                           const Hyperparameters& hp, std::uint64_t seed,
                                           std::vector<std::vector<std::size_t>> bootstraps);

    PredictionWithUncertainty predict(std::span<const double> x) const;
    std::vector<double> tree_predictions(std::span<const double> x) const;

    /// Prediction over only the trees whose bootstrap excluded training row `row`.
    /// nullopt when every tree drew the row; callers fall back to predict().
    std::optional<PredictionWithUncertainty> oob_predict(std::size_t row) const;
    std::size_t oob_tree_count(std::size_t row) const;

    FeatureImportances feature_importances() const;

    const std::vector<RegressionTree>& trees() const { return trees_; }
    const std::vector<std::vector<std::size_t>>& bootstraps() const { return bootstraps_; }
    const Hyperparameters& hyperparameters() const { return hp_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t feature_count() const { return feature_count_; }
    std::size_t training_rows() const { return training_.rows(); }
    double target_min() const { return target_min_; }
    double target_max() const { return target_max_; }

    std::string to_json() const;
    static ForestModel from_json(std::string_view json);

    bool operator==(const ForestModel&) const = default;

private:
    Hyperparameters hp_;
    std::uint64_t seed_ = 0;
    std::size_t feature_count_ = 0;
    double target_min_ = 0.0;
    double target_max_ = 0.0;
    std::vector<RegressionTree> trees_;
    std::vector<std::vector<std::size_t>> bootstraps_;  // sorted row indices per tree
    Matrix training_;                                   // kept for OOB queries
    std::vector<double> training_targets_;

    friend struct ForestJson;
};

PredictionWithUncertainty summarize(std::span<const double> tree_predictions);

}  // namespace mixforge
