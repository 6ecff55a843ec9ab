#include "mixforge/designer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mixforge/error.hpp"
#include "mixforge/parallel.hpp"
#include "svg.hpp"

namespace mixforge {

namespace {

double round12(double v) { return std::round(v * 1e12) / 1e12; }

}  // namespace

void GeneratorParams::validate() const {
    if (!(water_mass > 0.0) || !std::isfinite(water_mass)) throw ConfigError("generator: water_mass must be > 0");
    if (!(wet_density > water_mass) || !std::isfinite(wet_density)) {
        throw ConfigError("generator: wet_density must exceed water_mass");
    }
    const auto& [a, b] = fine_fraction_anchors;
    if (!std::isfinite(a.first) || !std::isfinite(b.first) || !std::isfinite(a.second) || !std::isfinite(b.second)) {
        throw ConfigError("generator: anchors must be finite");
    }
    if (a.first == b.first) throw ConfigError("generator: anchor w/c values must differ");
    if (!std::isfinite(preconditioning_days) || preconditioning_days < 0.0) {
        throw ConfigError("generator: preconditioning_days must be non-negative");
    }
    if (!(wc_min > 0.0) || !(wc_max <= 2.0) || !(wc_min <= wc_max)) {
        throw ConfigError("generator: w/c grid must lie within (0, 2] with min <= max");
    }
    if (!(wc_step > 0.0) || !std::isfinite(wc_step)) throw ConfigError("generator: wc_step must be > 0");
}

GeneratorParams parse_generator_json(std::string_view json, GeneratorParams base) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid generator file: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("generator file must be a JSON object");
    auto number = [](const nlohmann::json& v, const std::string& key) {
        if (!v.is_number()) throw ParseError("generator '" + key + "' must be a number");
        return v.get<double>();
    };
    for (const auto& [key, v] : j.items()) {
        if (key == "water_mass") base.water_mass = number(v, key);
        else if (key == "wet_density") base.wet_density = number(v, key);
        else if (key == "preconditioning_days") base.preconditioning_days = number(v, key);
        else if (key == "wc_min") base.wc_min = number(v, key);
        else if (key == "wc_max") base.wc_max = number(v, key);
        else if (key == "wc_step") base.wc_step = number(v, key);
        else if (key == "cement_type") {
            if (!v.is_string()) throw ParseError("generator 'cement_type' must be a string");
            base.cement_type = parse_cement_type(v.get<std::string>());
        } else if (key == "fine_fraction_anchors") {
            if (!v.is_array() || v.size() != 2) throw ParseError("'fine_fraction_anchors' must hold two [wc, share] pairs");
            for (std::size_t i = 0; i < 2; ++i) {
                if (!v[i].is_array() || v[i].size() != 2) {
                    throw ParseError("'fine_fraction_anchors' must hold two [wc, share] pairs");
                }
                base.fine_fraction_anchors[i] = {number(v[i][0], key), number(v[i][1], key)};
            }
        } else {
            throw ParseError("unknown generator key '" + key + "'");
        }
    }
    base.validate();
    return base;
}

std::vector<double> GeneratorParams::wc_grid() const {
    validate();
    const auto n = static_cast<std::size_t>(std::floor((wc_max - wc_min) / wc_step + 1e-9));
    std::vector<double> grid;
    for (std::size_t i = 0; i <= n; ++i) grid.push_back(round12(wc_min + static_cast<double>(i) * wc_step));
    return grid;
}

double GeneratorParams::sand_share(double wc) const {
    const auto& [a, b] = fine_fraction_anchors;
    return a.second + (wc - a.first) * (b.second - a.second) / (b.first - a.first);
}

Candidate generate_candidate(const GeneratorParams& params, double wc) {
    params.validate();
    if (!(wc > 0.0) || !std::isfinite(wc)) throw DomainError("generator: w/c must be positive");
    Candidate c;
    c.wc = wc;
    c.cement_mass = params.water_mass / wc;
    const double aggregate = params.wet_density - params.water_mass - c.cement_mass;
    if (!(aggregate > 0.0)) {
        throw DomainError("generator: w/c " + format_number(wc) + " leaves no aggregate (cement " +
                          format_number(c.cement_mass) + " kg/m3)");
    }
    const double s = params.sand_share(wc);
    if (!(s > 0.0 && s < 1.0)) {
        throw DomainError("generator: sand share " + format_number(s) + " at w/c " + format_number(wc) +
                          " is outside (0, 1)");
    }
    c.sand_mass = s * aggregate;
    c.gravel_mass = aggregate - c.sand_mass;

    auto& r = c.record;
    std::ostringstream id;
    id << "wc" << std::fixed << std::setprecision(2) << wc;
    r.id = id.str();
    r.cement_type = params.cement_type;
    r.composition.cement_pct = c.cement_mass / params.wet_density * 100.0;
    r.composition.gravel_pct = c.gravel_mass / params.wet_density * 100.0;
    r.composition.sand_pct = c.sand_mass / params.wet_density * 100.0;
    r.composition.water_pct = params.water_mass / params.wet_density * 100.0;
    r.estimated_mass_per_m3 = params.wet_density;
    r.preconditioning_days = params.preconditioning_days;
    return c;
}

std::vector<Candidate> generate_candidates(const GeneratorParams& params) {
    std::vector<Candidate> out;
    for (double wc : params.wc_grid()) out.push_back(generate_candidate(params, wc));
    return out;
}

void TargetCriteria::validate() const {
    if (bounds.empty()) throw ValidationError("criteria '" + name + "' has no bounds");
    std::array<bool, kTargetCount> seen{};
    for (const auto& b : bounds) {
        if (std::isnan(b.threshold)) {
            throw ValidationError("criteria '" + name + "': threshold for " + std::string(target_token(b.target)) +
                                  " is NaN");
        }
        if (seen[index_of(b.target)]) {
            throw ValidationError("criteria '" + name + "': duplicate bound on " + std::string(target_token(b.target)));
        }
        seen[index_of(b.target)] = true;
    }
}

TargetCriteria TargetCriteria::from_json(std::string_view json) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid criteria file: ") + e.what());
    }
    if (!j.is_object() || !j.contains("bounds") || !j["bounds"].is_array()) {
        throw ParseError("criteria file must be an object with a 'bounds' array");
    }
    TargetCriteria c;
    if (j.contains("name")) {
        if (!j["name"].is_string()) throw ParseError("criteria 'name' must be a string");
        c.name = j["name"].get<std::string>();
    }
    for (const auto& [key, _] : j.items()) {
        if (key != "name" && key != "bounds") throw ParseError("unknown criteria key '" + key + "'");
    }
    for (const auto& b : j["bounds"]) {
        if (!b.is_object()) throw ParseError("each bound must be an object");
        for (const auto& [key, _] : b.items()) {
            if (key != "target" && key != "op" && key != "value") throw ParseError("unknown bound key '" + key + "'");
        }
        if (!b.contains("target") || !b["target"].is_string()) throw ParseError("bound needs a string 'target'");
        if (!b.contains("op") || !b["op"].is_string()) throw ParseError("bound needs a string 'op'");
        if (!b.contains("value") || !b["value"].is_number()) throw ParseError("bound needs a numeric 'value'");
        const auto token = b["target"].get<std::string>();
        const auto target = parse_target_token(token);
        if (!target) {
            throw ParseError("unknown target '" + token + "' (expected k4, env_impact, strength, density or cost)");
        }
        const auto op = b["op"].get<std::string>();
        if (op != "<" && op != ">") throw ParseError("unknown op '" + op + "' (expected < or >)");
        c.bounds.push_back({*target, op == "<" ? BoundDirection::Upper : BoundDirection::Lower,
                            b["value"].get<double>()});
    }
    c.validate();
    return c;
}

std::string TargetCriteria::to_json() const {
    nlohmann::ordered_json j;
    j["name"] = name;
    j["bounds"] = nlohmann::ordered_json::array();
    for (const auto& b : bounds) {
        j["bounds"].push_back({{"target", target_token(b.target)},
                               {"op", b.direction == BoundDirection::Upper ? "<" : ">"},
                               {"value", b.threshold}});
    }
    return j.dump(2);
}

TargetCriteria TargetCriteria::low_k() {
    return {"Low-K",
            {{TargetId::CarbonationK, BoundDirection::Upper, 1.2},
             {TargetId::EnvImpact, BoundDirection::Upper, 0.150},
             {TargetId::Strength, BoundDirection::Lower, 30.0},
             {TargetId::Density, BoundDirection::Upper, 2350.0},
             {TargetId::Cost, BoundDirection::Upper, 0.028}}};
}

TargetCriteria TargetCriteria::low_e() {
    return {"Low-E",
            {{TargetId::CarbonationK, BoundDirection::Upper, 2.4},
             {TargetId::EnvImpact, BoundDirection::Upper, 0.108},
             {TargetId::Strength, BoundDirection::Lower, 20.0},
             {TargetId::Density, BoundDirection::Upper, 2350.0},
             {TargetId::Cost, BoundDirection::Upper, 0.028}}};
}

std::string_view probability_mode_token(ProbabilityMode mode) {
    return mode == ProbabilityMode::Gaussian ? "gaussian" : "empirical";
}

ProbabilityMode parse_probability_mode(std::string_view token) {
    if (token == "gaussian") return ProbabilityMode::Gaussian;
    if (token == "empirical") return ProbabilityMode::Empirical;
    throw ConfigError("unknown probability mode '" + std::string(token) + "' (expected gaussian or empirical)");
}

double probability_of_bound(const PredictionWithUncertainty& pred, const Bound& bound) {
    double below;  // P(value < threshold)
    if (pred.sigma > 0.0) {
        below = 0.5 * std::erfc(-(bound.threshold - pred.mean) / (pred.sigma * std::sqrt(2.0)));
    } else if (pred.mean < bound.threshold) {
        below = 1.0;
    } else if (pred.mean > bound.threshold) {
        below = 0.0;
    } else {
        below = 0.5;
    }
    return bound.direction == BoundDirection::Upper ? below : 1.0 - below;
}

double probability_of_bound(std::span<const double> tree_predictions, const Bound& bound) {
    if (tree_predictions.empty()) throw ValidationError("empirical probability needs at least one prediction");
    double inside = 0.0;
    for (double v : tree_predictions) {
        if (v == bound.threshold) inside += 0.5;
        else if ((bound.direction == BoundDirection::Upper) == (v < bound.threshold)) inside += 1.0;
    }
    return inside / static_cast<double>(tree_predictions.size());
}

SuccessProbability probability_of_success(const TargetPredictions& preds, const TargetCriteria& criteria) {
    criteria.validate();
    SuccessProbability out;
    for (const auto& b : criteria.bounds) {
        const auto& p = preds[index_of(b.target)];
        if (!p) throw ValidationError("no prediction for bounded target " + std::string(target_token(b.target)));
        const double prob = probability_of_bound(*p, b);
        out.per_target[index_of(b.target)] = prob;
        out.joint *= prob;
    }
    return out;
}

DesignModelSet DesignModelSet::fit(const DatasetTable& table, const Hyperparameters& hp, std::uint64_t seed,
                                   const TwoLayerOptions& options) {
    DesignModelSet set;
    set.seed_ = seed;
    auto layer1 = std::make_shared<const Layer1Forests>(Layer1Forests::fit(table, hp, seed));
    for (auto t : kAllTargets) set.models_[index_of(t)] = TwoLayerModel::fit(table, layer1, t, hp, seed, options);
    return set;
}

std::array<PredictionWithUncertainty, kTargetCount> DesignModelSet::predict(const MixRecord& record) const {
    std::array<PredictionWithUncertainty, kTargetCount> out;
    const auto base = models_[0].base_features(record);
    for (auto t : kAllTargets) out[index_of(t)] = models_[index_of(t)].predict(base);
    return out;
}

std::array<std::vector<double>, kTargetCount> DesignModelSet::tree_predictions(const MixRecord& record) const {
    std::array<std::vector<double>, kTargetCount> out;
    const auto base = models_[0].base_features(record);
    for (auto t : kAllTargets) out[index_of(t)] = models_[index_of(t)].tree_predictions(base);
    return out;
}

ScanResult scan(const DesignModelSet& models, const TargetCriteria& criteria, const GeneratorParams& params,
                ProbabilityMode mode) {
    criteria.validate();
    ScanResult out;
    out.criteria_name = criteria.name;
    out.mode = mode;
    out.params = params;
    const auto candidates = generate_candidates(params);
    out.results.resize(candidates.size());
    parallel_for(candidates.size(), [&](std::size_t i) {
        auto& r = out.results[i];
        r.candidate = candidates[i];
        r.predictions = models.predict(r.candidate.record);
        if (mode == ProbabilityMode::Gaussian) {
            TargetPredictions preds;
            for (auto t : kAllTargets) preds[index_of(t)] = r.predictions[index_of(t)];
            r.probability = probability_of_success(preds, criteria);
        } else {
            const auto trees = models.tree_predictions(r.candidate.record);
            for (const auto& b : criteria.bounds) {
                const double p = probability_of_bound(trees[index_of(b.target)], b);
                r.probability.per_target[index_of(b.target)] = p;
                r.probability.joint *= p;
            }
        }
    });
    for (std::size_t i = 1; i < out.results.size(); ++i) {
        const auto& cur = out.results[i];
        const auto& best = out.results[out.best];
        if (cur.probability.joint > best.probability.joint ||
            (cur.probability.joint == best.probability.joint &&
             cur.candidate.record.composition.cement_pct < best.candidate.record.composition.cement_pct)) {
            out.best = i;
        }
    }
    return out;
}

const DesignResult* ScanResult::at_wc(double wc) const {
    for (const auto& r : results) {
        if (std::abs(r.candidate.wc - wc) < 1e-9) return &r;
    }
    return nullptr;
}

std::string ScanResult::to_csv() const {
    std::ostringstream os;
    os << "wc,cement_pct,gravel_pct,sand_pct,water_pct";
    for (const char* prefix : {"mean_", "sigma_", "p_"}) {
        for (auto t : kAllTargets) os << ',' << prefix << target_token(t);
    }
    os << ",joint\n";
    for (const auto& r : results) {
        const auto& c = r.candidate.record.composition;
        os << format_number(r.candidate.wc) << ',' << format_number(c.cement_pct) << ',' << format_number(c.gravel_pct)
           << ',' << format_number(c.sand_pct) << ',' << format_number(c.water_pct);
        for (const auto& p : r.predictions) os << ',' << format_number(p.mean);
        for (const auto& p : r.predictions) os << ',' << format_number(p.sigma);
        for (const auto& p : r.probability.per_target) os << ',' << (p ? format_number(*p) : std::string("NA"));
        os << ',' << format_number(r.probability.joint) << '\n';
    }
    return os.str();
}

std::string ScanResult::selected_json() const {
    const auto& r = selected();
    const auto& c = r.candidate.record.composition;
    nlohmann::ordered_json j;
    j["criteria"] = criteria_name;
    j["probability_mode"] = probability_mode_token(mode);
    j["wc"] = r.candidate.wc;
    j["cement_type"] = cement_type_token(r.candidate.record.cement_type);
    j["preconditioning_days"] = params.preconditioning_days;
    j["composition"] = {{"cement_pct", c.cement_pct},
                        {"gravel_pct", c.gravel_pct},
                        {"sand_pct", c.sand_pct},
                        {"water_pct", c.water_pct}};
    j["masses_kg_per_m3"] = {{"cement", r.candidate.cement_mass},
                             {"gravel", r.candidate.gravel_mass},
                             {"sand", r.candidate.sand_mass},
                             {"water", params.water_mass}};
    nlohmann::ordered_json targets = nlohmann::ordered_json::object();
    for (auto t : kAllTargets) {
        nlohmann::ordered_json e = {{"mean", r.predictions[index_of(t)].mean},
                                    {"sigma", r.predictions[index_of(t)].sigma}};
        const auto& p = r.probability.per_target[index_of(t)];
        e["probability"] = p ? nlohmann::ordered_json(*p) : nlohmann::ordered_json(nullptr);
        targets[std::string(target_token(t))] = e;
    }
    j["targets"] = targets;
    j["joint_probability"] = r.probability.joint;
    return j.dump(2);
}

std::string ScanResult::to_svg() const {
    const double left = 60, top = 30, width = 420, height = 260;
    svg::Document doc(left + width + 130, top + height + 50);
    double lo = results.empty() ? 0.0 : results.front().candidate.wc;
    double hi = results.empty() ? 1.0 : results.back().candidate.wc;
    if (hi <= lo) hi = lo + 1.0;
    auto px = [&](double wc) { return left + (wc - lo) / (hi - lo) * width; };
    auto py = [&](double p) { return top + (1.0 - p) * height; };

    doc.line(left, top + height, left + width, top + height);
    doc.line(left, top, left, top + height);
    for (int i = 0; i <= 4; ++i) {
        const double p = i / 4.0;
        doc.line(left - 4, py(p), left, py(p));
        std::ostringstream label;
        label << std::setprecision(2) << p;
        doc.text(left - 8, py(p) + 4, label.str(), 10, "end");
    }
    for (const auto& r : results) {
        std::ostringstream label;
        label << std::fixed << std::setprecision(2) << r.candidate.wc;
        doc.line(px(r.candidate.wc), top + height, px(r.candidate.wc), top + height + 4);
        doc.text(px(r.candidate.wc), top + height + 16, label.str(), 9, "middle");
    }
    doc.text(left + width / 2, top + height + 36, "water/cement ratio", 12, "middle");
    doc.text(18, top + height / 2, "probability of success", 12, "middle", -90);
    doc.text(left + width / 2, 18, criteria_name, 13, "middle");

    static const char* colors[kTargetCount] = {"#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
    double legend_y = top + 10;
    for (auto t : kAllTargets) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& r : results) {
            const auto& p = r.probability.per_target[index_of(t)];
            if (p) pts.emplace_back(px(r.candidate.wc), py(*p));
        }
        if (pts.empty()) continue;
        doc.polyline(pts, colors[index_of(t)], "4 3");
        doc.line(left + width + 10, legend_y, left + width + 30, legend_y, colors[index_of(t)], "4 3");
        doc.text(left + width + 34, legend_y + 4, std::string(target_token(t)), 10);
        legend_y += 16;
    }
    std::vector<std::pair<double, double>> joint;
    for (const auto& r : results) {
        joint.emplace_back(px(r.candidate.wc), py(r.probability.joint));
        doc.circle(px(r.candidate.wc), py(r.probability.joint), 2.5, "#000000", "#000000");
    }
    doc.polyline(joint, "#000000");
    doc.line(left + width + 10, legend_y, left + width + 30, legend_y);
    doc.text(left + width + 34, legend_y + 4, "joint", 10);
    if (!results.empty()) {
        const auto& s = selected();
        doc.circle(px(s.candidate.wc), py(s.probability.joint), 8, "#e31a1c");
    }
    return doc.str();
}

}  // namespace mixforge
