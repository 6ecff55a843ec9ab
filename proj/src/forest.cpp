#include "mixforge/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mixforge/error.hpp"
#include "mixforge/parallel.hpp"
#include "mixforge/random.hpp"
#include "forest_json.hpp"

namespace mixforge {

namespace {

using Node = RegressionTree::Node;

constexpr int kForestFormatVersion = 1;

struct SplitCandidate {
    int feature = -1;
    double threshold = 0.0;
    double children_sse = 0.0;
};

// SSE values within `tol` of each other count as equal, so that partitions which differ only
// in summation order fall through to the deterministic tie-break.
bool better(const SplitCandidate& a, const SplitCandidate& b, double tol) {
    if (b.feature < 0) return true;
    if (std::abs(a.children_sse - b.children_sse) > tol) return a.children_sse < b.children_sse;
    if (a.feature != b.feature) return a.feature < b.feature;
    return a.threshold < b.threshold;
}

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, std::span<const double> y, const Hyperparameters& hp, Rng& rng)
        : x_(x), y_(y), hp_(hp), rng_(rng), order_(x.cols()) {}

    RegressionTree build(std::vector<std::size_t> samples) {
        samples_ = std::move(samples);
        grow(0, samples_.size());
        return RegressionTree(std::move(nodes_));
    }

private:
    int grow(std::size_t lo, std::size_t hi) {
        const std::size_t n = hi - lo;
        double lo_y = y_[samples_[lo]], hi_y = lo_y, sum = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            const double v = y_[samples_[i]];
            lo_y = std::min(lo_y, v);
            hi_y = std::max(hi_y, v);
            sum += v;
        }
        const int id = static_cast<int>(nodes_.size());
        Node node;
        node.count = static_cast<int>(n);
        node.value = lo_y == hi_y ? lo_y : std::clamp(sum / static_cast<double>(n), lo_y, hi_y);
        nodes_.push_back(node);

        if (n < static_cast<std::size_t>(hp_.min_samples_split) || lo_y == hi_y) return id;

        const double mean = sum / static_cast<double>(n);
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            const double d = y_[samples_[i]] - mean;
            s1 += d;
            s2 += d * d;
        }
        const double parent_sse = s2 - s1 * s1 / static_cast<double>(n);

        const SplitCandidate best = find_split(lo, hi, mean, 1e-12 * parent_sse);
        if (best.feature < 0 || !(best.children_sse < parent_sse) ||
            parent_sse - best.children_sse <= 1e-12 * parent_sse) {
            return id;
        }

        const auto f = static_cast<std::size_t>(best.feature);
        auto mid_it = std::stable_partition(samples_.begin() + static_cast<std::ptrdiff_t>(lo),
                                            samples_.begin() + static_cast<std::ptrdiff_t>(hi),
                                            [&](std::size_t s) { return x_(s, f) <= best.threshold; });
        const auto mid = static_cast<std::size_t>(mid_it - samples_.begin());

        nodes_[id].feature = best.feature;
        nodes_[id].threshold = best.threshold;
        nodes_[id].gain = parent_sse - best.children_sse;
        const int left = grow(lo, mid);
        nodes_[id].left = left;
        const int right = grow(mid, hi);
        nodes_[id].right = right;
        return id;
    }

    // Visits features in a fresh random order; features constant at this node do not count
    // towards max_features, so a split is found whenever any feature varies.
    SplitCandidate find_split(std::size_t lo, std::size_t hi, double mean, double tol) {
        const std::size_t nf = x_.cols();
        std::iota(order_.begin(), order_.end(), 0);
        const std::size_t n = hi - lo;
        pairs_.resize(n);

        SplitCandidate best;
        int informative = 0;
        for (std::size_t k = 0; k < nf && informative < hp_.max_features; ++k) {
            const std::size_t j = k + static_cast<std::size_t>(rng_.below(nf - k));
            std::swap(order_[k], order_[j]);
            const std::size_t f = order_[k];

            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t s = samples_[lo + i];
                pairs_[i] = {x_(s, f), y_[s] - mean};
            }
            std::sort(pairs_.begin(), pairs_.end());
            if (pairs_.front().first == pairs_.back().first) continue;
            ++informative;

            double total1 = 0.0, total2 = 0.0;
            for (const auto& p : pairs_) {
                total1 += p.second;
                total2 += p.second * p.second;
            }
            double l1 = 0.0, l2 = 0.0;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                l1 += pairs_[i].second;
                l2 += pairs_[i].second * pairs_[i].second;
                if (pairs_[i].first == pairs_[i + 1].first) continue;
                const auto nl = static_cast<double>(i + 1);
                const auto nr = static_cast<double>(n - i - 1);
                const double r1 = total1 - l1;
                const double r2 = total2 - l2;
                const double sse = std::max(0.0, l2 - l1 * l1 / nl) + std::max(0.0, r2 - r1 * r1 / nr);
                double threshold = 0.5 * (pairs_[i].first + pairs_[i + 1].first);
                if (!(threshold < pairs_[i + 1].first)) threshold = pairs_[i].first;
                SplitCandidate c{static_cast<int>(f), threshold, sse};
                if (better(c, best, tol)) best = c;
            }
        }
        return best;
    }

    const Matrix& x_;
    std::span<const double> y_;
    const Hyperparameters& hp_;
    Rng& rng_;
    std::vector<std::size_t> order_;
    std::vector<std::pair<double, double>> pairs_;
    std::vector<std::size_t> samples_;
    std::vector<Node> nodes_;
};

void check_inputs(const Matrix& features, std::span<const double> targets, const Hyperparameters& hp) {
    if (features.rows() == 0 || targets.empty()) throw ValidationError("fit_forest: empty training data");
    if (features.rows() != targets.size()) throw ValidationError("fit_forest: feature/target row count mismatch");
    if (features.rows() < 2) throw ValidationError("fit_forest: need at least 2 training rows");
    hp.validate(features.cols());
    for (double v : features.data()) {
        if (!std::isfinite(v)) throw ValidationError("fit_forest: non-finite feature value");
    }
    for (double v : targets) {
        if (!std::isfinite(v)) throw ValidationError("fit_forest: non-finite target value");
    }
}

}  // namespace

void Hyperparameters::validate(std::size_t feature_count) const {
    if (n_trees < 1) throw ConfigError("n_trees must be positive");
    if (max_features < 1) throw ConfigError("max_features must be positive");
    if (min_samples_split < 2) throw ConfigError("min_samples_split must be at least 2");
    if (static_cast<std::size_t>(max_features) > feature_count) {
        throw ConfigError("max_features (" + std::to_string(max_features) + ") exceeds feature count (" +
                          std::to_string(feature_count) + ")");
    }
}

double RegressionTree::predict(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
        const auto& n = nodes_[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes_[i].value;
}

std::size_t RegressionTree::split_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return !n.is_leaf(); }));
}

PredictionWithUncertainty summarize(std::span<const double> p) {
    if (p.empty()) throw ValidationError("summarize: no tree predictions");
    if (std::all_of(p.begin(), p.end(), [&](double v) { return v == p[0]; })) return {p[0], 0.0};
    const auto n = static_cast<double>(p.size());
    const double mean_raw = std::accumulate(p.begin(), p.end(), 0.0) / n;
    const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
    const double mean = std::clamp(mean_raw, *lo, *hi);
    double ss = 0.0;
    for (double v : p) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / n)};
}

ForestModel ForestModel::fit(const Matrix& features, std::span<const double> targets, const Hyperparameters& hp,
                             std::uint64_t seed) {
    check_inputs(features, targets, hp);
    const std::size_t n = features.rows();
    std::vector<std::vector<std::size_t>> bootstraps(static_cast<std::size_t>(hp.n_trees));
    for (std::size_t t = 0; t < bootstraps.size(); ++t) {
        Rng rng(derive_seed(seed, t));
        auto& b = bootstraps[t];
        b.resize(n);
        for (auto& idx : b) idx = static_cast<std::size_t>(rng.below(n));
    }
    return fit_with_bootstraps(features, targets, hp, seed, std::move(bootstraps));
}

ForestModel ForestModel::fit_with_bootstraps(const Matrix& features, std::span<const double> targets,
                                             const Hyperparameters& hp, std::uint64_t seed,
                                             std::vector<std::vector<std::size_t>> bootstraps) {
    check_inputs(features, targets, hp);
    const std::size_t n = features.rows();
    if (bootstraps.size() != static_cast<std::size_t>(hp.n_trees)) {
        throw ConfigError("fit_with_bootstraps: one bootstrap set per tree required");
    }
    for (const auto& b : bootstraps) {
        if (b.size() != n) throw ConfigError("fit_with_bootstraps: bootstrap cardinality must equal row count");
        for (auto idx : b) {
            if (idx >= n) throw ConfigError("fit_with_bootstraps: bootstrap index out of range");
        }
    }

    ForestModel model;
    model.hp_ = hp;
    model.seed_ = seed;
    model.feature_count_ = features.cols();
    const auto [lo, hi] = std::minmax_element(targets.begin(), targets.end());
    model.target_min_ = *lo;
    model.target_max_ = *hi;
    model.training_ = features;
    model.training_targets_.assign(targets.begin(), targets.end());
    model.trees_.resize(bootstraps.size());

    parallel_for(bootstraps.size(), [&](std::size_t t) {
        // Same stream as the bootstrap draw in fit(); draws continue after the N indices.
        Rng rng(derive_seed(seed, t));
        for (std::size_t i = 0; i < n; ++i) rng.below(n);
        TreeBuilder builder(model.training_, model.training_targets_, hp, rng);
        model.trees_[t] = builder.build(bootstraps[t]);
    });

    for (auto& b : bootstraps) std::sort(b.begin(), b.end());
    model.bootstraps_ = std::move(bootstraps);
    return model;
}

std::vector<double> ForestModel::tree_predictions(std::span<const double> x) const {
    if (x.size() != feature_count_) {
        throw ValidationError("predict: expected " + std::to_string(feature_count_) + " features, got " +
                              std::to_string(x.size()));
    }
    for (double v : x) {
        if (!std::isfinite(v)) throw ValidationError("predict: non-finite feature value");
    }
    std::vector<double> out;
    out.reserve(trees_.size());
    for (const auto& t : trees_) out.push_back(t.predict(x));
    return out;
}

PredictionWithUncertainty ForestModel::predict(std::span<const double> x) const {
    return summarize(tree_predictions(x));
}

std::size_t ForestModel::oob_tree_count(std::size_t row) const {
    if (row >= training_.rows()) throw ValidationError("oob_predict: row is not a training row");
    std::size_t count = 0;
    for (const auto& b : bootstraps_) {
        if (!std::binary_search(b.begin(), b.end(), row)) ++count;
    }
    return count;
}

std::optional<PredictionWithUncertainty> ForestModel::oob_predict(std::size_t row) const {
    if (row >= training_.rows()) throw ValidationError("oob_predict: row is not a training row");
    const auto x = training_.row(row);
    std::vector<double> preds;
    for (std::size_t t = 0; t < trees_.size(); ++t) {
        const auto& b = bootstraps_[t];
        if (!std::binary_search(b.begin(), b.end(), row)) preds.push_back(trees_[t].predict(x));
    }
    if (preds.empty()) return std::nullopt;
    return summarize(preds);
}

FeatureImportances ForestModel::feature_importances() const {
    FeatureImportances out;
    out.values.assign(feature_count_, 0.0);
    for (const auto& tree : trees_) {
        for (const auto& node : tree.nodes()) {
            if (!node.is_leaf()) out.values[static_cast<std::size_t>(node.feature)] += node.gain;
        }
    }
    const double total = std::accumulate(out.values.begin(), out.values.end(), 0.0);
    if (!(total > 0.0)) {
        std::fill(out.values.begin(), out.values.end(), 0.0);
        out.defined = false;
        return out;
    }
    for (auto& v : out.values) v /= total;
    out.defined = true;
    return out;
}

struct ForestJson {
    static nlohmann::json encode(const ForestModel& m) {
        nlohmann::json trees = nlohmann::json::array();
        for (std::size_t t = 0; t < m.trees_.size(); ++t) {
            nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                           left = nlohmann::json::array(), right = nlohmann::json::array(),
                           value = nlohmann::json::array(), count = nlohmann::json::array(),
                           gain = nlohmann::json::array();
            for (const auto& n : m.trees_[t].nodes()) {
                feature.push_back(n.feature);
                threshold.push_back(n.threshold);
                left.push_back(n.left);
                right.push_back(n.right);
                value.push_back(n.value);
                count.push_back(n.count);
                gain.push_back(n.gain);
            }
            trees.push_back({{"feature", feature},
                             {"threshold", threshold},
                             {"left", left},
                             {"right", right},
                             {"value", value},
                             {"count", count},
                             {"gain", gain},
                             {"bootstrap", m.bootstraps_[t]}});
        }
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < m.training_.rows(); ++r) {
            auto row = m.training_.row(r);
            rows.push_back(std::vector<double>(row.begin(), row.end()));
        }
        return {{"format", "mixforge-forest"},
                {"version", kForestFormatVersion},
                {"hyperparameters",
                 {{"n_trees", m.hp_.n_trees},
                  {"max_features", m.hp_.max_features},
                  {"min_samples_split", m.hp_.min_samples_split}}},
                {"seed", m.seed_},
                {"feature_count", m.feature_count_},
                {"target_range", {m.target_min_, m.target_max_}},
                {"training", {{"features", rows}, {"targets", m.training_targets_}}},
                {"trees", trees}};
    }

    static ForestModel decode(const nlohmann::json& j) {
        if (j.value("format", "") != "mixforge-forest") throw ParseError("not a mixforge forest document");
        if (j.at("version").get<int>() != kForestFormatVersion) throw ParseError("unsupported forest version");
        ForestModel m;
        const auto& hp = j.at("hyperparameters");
        m.hp_ = {hp.at("n_trees").get<int>(), hp.at("max_features").get<int>(),
                 hp.at("min_samples_split").get<int>()};
        m.seed_ = j.at("seed").get<std::uint64_t>();
        m.feature_count_ = j.at("feature_count").get<std::size_t>();
        m.target_min_ = j.at("target_range").at(0).get<double>();
        m.target_max_ = j.at("target_range").at(1).get<double>();
        for (const auto& row : j.at("training").at("features")) m.training_.append_row(row.get<std::vector<double>>());
        m.training_targets_ = j.at("training").at("targets").get<std::vector<double>>();
        for (const auto& t : j.at("trees")) {
            const auto feature = t.at("feature").get<std::vector<int>>();
            const auto threshold = t.at("threshold").get<std::vector<double>>();
            const auto left = t.at("left").get<std::vector<int>>();
            const auto right = t.at("right").get<std::vector<int>>();
            const auto value = t.at("value").get<std::vector<double>>();
            const auto count = t.at("count").get<std::vector<int>>();
            const auto gain = t.at("gain").get<std::vector<double>>();
            std::vector<Node> nodes(feature.size());
            if (nodes.empty()) throw ParseError("forest document contains an empty tree");
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                nodes[i] = {feature.at(i), threshold.at(i), left.at(i), right.at(i), value.at(i), count.at(i),
                            gain.at(i)};
                const auto size = static_cast<int>(nodes.size());
                if (nodes[i].feature >= static_cast<int>(m.feature_count_) ||
                    (!nodes[i].is_leaf() && (nodes[i].left <= static_cast<int>(i) || nodes[i].left >= size ||
                                             nodes[i].right <= static_cast<int>(i) || nodes[i].right >= size))) {
                    throw ParseError("forest document has a malformed node");
                }
            }
            m.trees_.emplace_back(std::move(nodes));
            m.bootstraps_.push_back(t.at("bootstrap").get<std::vector<std::size_t>>());
        }
        if (m.trees_.size() != static_cast<std::size_t>(m.hp_.n_trees)) {
            throw ParseError("forest document tree count does not match n_trees");
        }
        return m;
    }
};

std::string ForestModel::to_json() const { return ForestJson::encode(*this).dump(); }

ForestModel ForestModel::from_json(std::string_view json) {
    try {
        return ForestJson::decode(nlohmann::json::parse(json));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid forest document: ") + e.what());
    }
}

// Exposed to the models module for embedding forests in larger documents.
nlohmann::json forest_to_json_value(const ForestModel& m) { return ForestJson::encode(m); }
ForestModel forest_from_json_value(const nlohmann::json& j) { return ForestJson::decode(j); }

}  // namespace mixforge
