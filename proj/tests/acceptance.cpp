// Acceptance run: one PASS/FAIL line per criterion, exit status 1 when any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mixforge/correlation.hpp"
#include "mixforge/dataset.hpp"
#include "mixforge/designer.hpp"
#include "mixforge/forest.hpp"
#include "mixforge/models.hpp"
#include "mixforge/properties.hpp"
#include "mixforge/random.hpp"

using namespace mixforge;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

const DatasetTable& table() {
    static const DatasetTable t = load_training_csv(MIXFORGE_DATA_FILE);
    return t;
}

constexpr std::array<std::uint64_t, 3> kSeeds = {0, 1, 2};

// LOOCV reports per (model, seed), computed once and shared by criteria 2 and 3.
const std::array<CrossValReport, kTargetCount>& reports(ModelKind kind, std::size_t seed_index) {
    static std::array<std::array<std::optional<std::array<CrossValReport, kTargetCount>>, 3>, 4> cache;
    auto& slot = cache[static_cast<std::size_t>(kind)][seed_index];
    if (!slot) slot = loocv_all(table(), kind, default_hyperparameters(kind), kSeeds[seed_index]);
    return *slot;
}

double mean_r2(const std::array<CrossValReport, kTargetCount>& reps) {
    double s = 0;
    for (const auto& r : reps) s += r.r2.value_or(-INFINITY);
    return s / kTargetCount;
}

// Maclaurin series of erf near the centre, Laplace continued fraction in the tails.
double phi_series(double z) {
    const long double pi = 3.14159265358979323846264338327950288L;
    if (std::abs(z) > 4) {
        const long double a = std::abs(z);
        long double frac = a;
        for (int n = 200; n >= 1; --n) frac = a + n / frac;
        const long double tail = std::exp(-a * a / 2) / std::sqrt(2 * pi) / frac;
        return static_cast<double>(z > 0 ? 1 - tail : tail);
    }
    const long double x = z / std::sqrt(2.0L);
    long double term = x, sum = x;
    for (int n = 1; n < 300; ++n) {
        term *= -x * x / n;
        sum += term / (2 * n + 1);
    }
    return static_cast<double>(0.5L + sum / std::sqrt(pi));
}

Outcome analytic_oracle() {
    const auto start = Clock::now();
    double worst_env = 0, worst_cost = 0;
    std::vector<std::string> misses;
    for (const auto& r : table().records()) {
        const double env = std::abs(embodied_carbon(r.composition, r.cement_type) - *r.measured[TargetId::EnvImpact]);
        const double price = std::abs(cost(r.composition, r.cement_type) - *r.measured[TargetId::Cost]);
        worst_env = std::max(worst_env, env);
        worst_cost = std::max(worst_cost, price);
        if (env > 0.001) misses.push_back(r.id + " env off by " + fmt(env, 5));
        if (price > 0.0005) misses.push_back(r.id + " cost off by " + fmt(price, 5));
    }
    const double elapsed = seconds_since(start);
    std::string detail = "max |d env| " + fmt(worst_env, 5) + " (tol 0.001), max |d cost| " + fmt(worst_cost, 5) +
                         " (tol 0.0005), " + fmt(elapsed, 3) + " s";
    for (const auto& m : misses) detail += "; " + m;
    return {misses.empty() && elapsed < 1.0, detail};
}

Outcome loocv_bounds() {
    const auto start = Clock::now();
    bool env_cost_ok = true;
    int density_ok = 0;
    std::string detail;
    for (std::size_t s = 0; s < kSeeds.size(); ++s) {
        const auto& reps = reports(ModelKind::TwoLayer, s);
        const double env = *reps[index_of(TargetId::EnvImpact)].r2;
        const double price = *reps[index_of(TargetId::Cost)].r2;
        const double density = *reps[index_of(TargetId::Density)].r2;
        env_cost_ok = env_cost_ok && env > 0.99 && price > 0.99;
        density_ok += density > 0.5;
        detail += "seed " + std::to_string(kSeeds[s]) + ": env " + fmt(env) + " cost " + fmt(price) + " density " +
                  fmt(density) + "; ";
    }
    const double elapsed = seconds_since(start);
    detail += "bars env, cost > 0.99 on 3/3 and density > 0.5 on 2/3; " + fmt(elapsed, 1) + " s";
    return {env_cost_ok && density_ok >= 2 && elapsed < 120.0, detail};
}

Outcome architecture_ordering() {
    int over_single = 0, over_linear = 0, imputation_over = 0;
    std::string detail;
    for (std::size_t s = 0; s < kSeeds.size(); ++s) {
        const double two = mean_r2(reports(ModelKind::TwoLayer, s));
        const double single = mean_r2(reports(ModelKind::SingleRf, s));
        const double linear = mean_r2(reports(ModelKind::Linear, s));
        const double imputation = mean_r2(reports(ModelKind::Imputation, s));
        over_single += two >= single;
        over_linear += two >= linear;
        imputation_over += imputation >= two;
        detail += "seed " + std::to_string(kSeeds[s]) + ": two_layer " + fmt(two) + " single_rf " + fmt(single) +
                  " linear " + fmt(linear) + " imputation " + fmt(imputation) + "; ";
    }
    detail += "majorities " + std::to_string(over_single) + "/3, " + std::to_string(over_linear) + "/3, " +
              std::to_string(imputation_over) + "/3";
    return {over_single >= 2 && over_linear >= 2 && imputation_over >= 2, detail};
}

Outcome generator_anchors() {
    const GeneratorParams params;
    struct Anchor {
        double wc;
        std::array<double, 4> published;
    };
    double worst = 0;
    for (const Anchor& a : {Anchor{0.6, {14.2, 48.9, 28.4, 8.5}}, Anchor{0.8, {10.5, 48.2, 32.6, 8.5}}}) {
        const auto c = generate_candidate(params, a.wc).record.composition;
        const std::array<double, 4> got = {c.cement_pct, c.gravel_pct, c.sand_pct, c.water_pct};
        for (std::size_t i = 0; i < 4; ++i) worst = std::max(worst, std::abs(got[i] - a.published[i]));
    }
    return {worst <= 0.2, "max deviation " + fmt(worst, 3) + " pp (tol 0.2)"};
}

Outcome design_selection() {
    const auto start = Clock::now();
    const auto models = DesignModelSet::fit(table(), default_hyperparameters(ModelKind::TwoLayer), 42);
    const auto low_k = scan(models, TargetCriteria::low_k());
    const auto low_e = scan(models, TargetCriteria::low_e());
    const double elapsed = seconds_since(start);

    const auto& k_best = low_k.selected();
    const bool k_ok = std::abs(k_best.candidate.wc - 0.6) < 1e-9 && std::abs(k_best.probability.joint - 0.79) <= 0.15;

    const double p08 = low_e.at_wc(0.8)->probability.joint;
    double below = 0;
    for (const auto& r : low_e.results) {
        if (r.candidate.wc <= 0.7 + 1e-9) below = std::max(below, r.probability.joint);
    }
    const bool e_ok = std::abs(p08 - 0.89) <= 0.15 && p08 > below;

    std::string factors;
    for (auto t : kAllTargets) {
        if (const auto& p = k_best.probability.per_target[index_of(t)]) {
            factors += std::string(target_token(t)) + " " + fmt(*p, 3) + " ";
        }
    }
    const std::string detail = "Low-K argmax wc " + fmt(k_best.candidate.wc, 2) + " P " + fmt(k_best.probability.joint, 3) +
                               " (want wc 0.60, P 0.79 +/- 0.15; factors " + factors + "); Low-E P(0.80) " +
                               fmt(p08, 3) + " (want 0.89 +/- 0.15) vs max P(wc <= 0.70) " + fmt(below, 3) +
                               ", argmax wc " + fmt(low_e.selected().candidate.wc, 2) + "; " + fmt(elapsed, 1) + " s";
    return {k_ok && e_ok && elapsed < 60.0, detail};
}

Outcome carbonation_fit() {
    const std::vector<double> times = {1, 4, 9, 16, 25};
    double worst = 0, worst_err = 0;
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
            const double k = i * 1.0, x0 = j * 1.25;
            std::vector<CarbonationObservation> obs;
            for (double t : times) obs.push_back({t, carbonation_depth(k, x0, t), 0.0});
            const auto f = fit_carbonation(obs);
            worst = std::max({worst, std::abs(f.k - k), std::abs(f.x0 - x0)});
            worst_err = std::max(worst_err, f.k_err);
        }
    }
    return {worst <= 1e-6 && worst_err == 0.0,
            "25 grid points, max parameter error " + sci(worst) + " (tol 1e-6), max k_err at zero sigma " + sci(worst_err)};
}

Outcome probability_math() {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(-2, 2);
    double worst_phi = 0;
    for (int i = 0; i < 10000; ++i) {
        const double mean = u(gen), sigma = 0.05 + std::abs(u(gen)), threshold = u(gen);
        const double ref = phi_series((threshold - mean) / sigma);
        worst_phi = std::max({worst_phi,
                              std::abs(probability_of_bound({mean, sigma}, {TargetId::Cost, BoundDirection::Upper, threshold}) - ref),
                              std::abs(probability_of_bound({mean, sigma}, {TargetId::Cost, BoundDirection::Lower, threshold}) -
                                       (1 - ref))});
    }

    std::uniform_int_distribution<int> coin(0, 1);
    double worst_mc = 0;
    for (int set = 0; set < 10; ++set) {
        TargetPredictions preds;
        std::array<std::normal_distribution<double>, kTargetCount> dists;
        TargetCriteria c{"random", {}};
        for (auto t : kAllTargets) {
            const PredictionWithUncertainty p{u(gen), 0.2 + std::abs(u(gen))};
            preds[index_of(t)] = p;
            dists[index_of(t)] = std::normal_distribution<double>(p.mean, p.sigma);
            if (set == 0 || coin(gen)) {
                c.bounds.push_back({t, coin(gen) ? BoundDirection::Upper : BoundDirection::Lower, 0.5 * u(gen)});
            }
        }
        if (c.bounds.empty()) c.bounds.push_back({TargetId::Strength, BoundDirection::Upper, 0.0});
        const double p = probability_of_success(preds, c).joint;
        int hits = 0;
        constexpr int kDraws = 1000000;
        for (int n = 0; n < kDraws; ++n) {
            bool ok = true;
            for (const auto& b : c.bounds) {
                const double v = dists[index_of(b.target)](gen);
                ok = ok && (b.direction == BoundDirection::Upper ? v < b.threshold : v > b.threshold);
            }
            hits += ok;
        }
        worst_mc = std::max(worst_mc, std::abs(hits / static_cast<double>(kDraws) - p));
    }
    return {worst_phi <= 1e-6 && worst_mc <= 0.005,
            "max |P - erf reference| " + sci(worst_phi) + " (tol 1e-6), max |joint - Monte-Carlo| " +
                fmt(worst_mc, 5) + " over 10 sets x 1e6 draws (tol 0.005)"};
}

Outcome correlation_signs() {
    const auto m = correlation_matrix(table(), CorrelationMethod::Pearson);
    struct Sign {
        const char* a;
        const char* b;
        int sign;
    };
    const Sign signs[] = {{"k4", "cement_pct", -1},       {"env_impact", "cement_pct", 1},
                          {"env_impact", "total_agg_cement_ratio", -1}, {"strength", "water_cement_ratio", -1},
                          {"strength", "k4", -1},         {"cost", "cement_pct", 1}};
    int held = 0;
    std::string detail;
    for (const auto& s : signs) {
        const double r = m.at(s.a, s.b).value_or(0.0);
        held += (s.sign > 0 ? r > 0 : r < 0);
        detail += std::string(s.a) + "~" + s.b + " " + fmt(r, 3) + "; ";
    }
    return {held == 6, detail + std::to_string(held) + "/6 hold"};
}

Outcome forest_invariants() {
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> u(-3, 3);
    int datasets = 0, failures = 0;
    for (int trial = 0; trial < 120; ++trial) {
        const std::size_t n = 3 + trial % 15, nf = 1 + trial % 6;
        Matrix x;
        std::vector<double> y;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> row(nf);
            for (auto& v : row) v = trial % 4 == 0 ? std::round(u(gen)) : u(gen);
            x.append_row(row);
            y.push_back(std::cos(row[0]) + 0.3 * row[nf - 1] + 0.1 * u(gen));
        }
        const Hyperparameters hp{1 + trial % 30, 1 + trial % static_cast<int>(nf), 2 + trial % 3};
        const auto a = ForestModel::fit(x, y, hp, trial);
        const auto b = ForestModel::fit(x, y, hp, trial);
        bool ok = a.to_json() == b.to_json();
        const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
        for (int q = 0; q < 20; ++q) {
            std::vector<double> probe(nf);
            for (auto& v : probe) v = 1.5 * u(gen);
            const auto p = a.predict(probe);
            ok = ok && p.mean >= *lo && p.mean <= *hi && p.sigma >= 0.0;
        }
        const auto imp = a.feature_importances();
        if (imp.defined) {
            const double total = std::accumulate(imp.values.begin(), imp.values.end(), 0.0);
            ok = ok && std::abs(total - 1.0) <= 1e-12;
        }
        for (double v : imp.values) ok = ok && v >= 0.0;
        ++datasets;
        failures += !ok;
    }

    const auto& t = table();
    std::vector<double> y;
    for (const auto& r : t.records()) y.push_back(*r.measured[TargetId::Cost]);
    const auto imp = ForestModel::fit(t.feature_matrix(), y, default_hyperparameters(ModelKind::TwoLayer), 0).feature_importances();
    const auto top = static_cast<std::size_t>(std::max_element(imp.values.begin(), imp.values.end()) - imp.values.begin());
    const bool cement_top = top == static_cast<std::size_t>(Feature::CementPct);
    return {failures == 0 && cement_top,
            std::to_string(datasets) + " random datasets, " + std::to_string(failures) +
                " violating; cost importance leader " + feature_names()[top] + " (" + fmt(imp.values[top], 3) + ")"};
}

Outcome uncertainty_signal() {
    const auto& t = table();
    int negative = 0;
    std::string detail;
    for (auto seed : kSeeds) {
        const auto layer1 = Layer1Forests::fit(t, default_hyperparameters(ModelKind::TwoLayer), seed);
        const auto& forest = layer1.forest(TargetId::CarbonationK);
        const auto& rows = layer1.rows(TargetId::CarbonationK);
        std::vector<double> sigma, oob_sigma, held_out_sigma, strength;
        for (std::size_t p = 0; p < rows.size(); ++p) {
            sigma.push_back(forest.predict(t.feature_row(rows[p])).sigma);
            const auto without = Layer1Forests::fit(t.without_row(rows[p]), default_hyperparameters(ModelKind::TwoLayer),
                                                    derive_seed(seed, rows[p]));
            held_out_sigma.push_back(without.forest(TargetId::CarbonationK).predict(t.feature_row(rows[p])).sigma);
            oob_sigma.push_back(forest.oob_predict(p).value_or(forest.predict(t.feature_row(rows[p]))).sigma);
            strength.push_back(*t.record(rows[p]).measured[TargetId::Strength]);
        }
        const double rho = spearman(sigma, strength).value_or(0.0);
        const double rho_oob = spearman(oob_sigma, strength).value_or(0.0);
        const double rho_held = spearman(held_out_sigma, strength).value_or(0.0);
        negative += rho < 0;
        detail += "seed " + std::to_string(seed) + ": " + fmt(rho, 3) + " (out-of-bag " + fmt(rho_oob, 3) +
                  ", held-out " + fmt(rho_held, 3) + "); ";
    }
    return {negative == 3, detail + "over " + std::to_string(t.rows_with(TargetId::CarbonationK).size()) +
                               " rows, reference -0.79, bar: negative on 3/3"};
}

}  // namespace

int main() {
    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"analytic oracle fidelity", analytic_oracle},
        {"LOOCV bounds", loocv_bounds},
        {"architecture ordering", architecture_ordering},
        {"generator anchors", generator_anchors},
        {"design selection", design_selection},
        {"carbonation fit oracle", carbonation_fit},
        {"probability math", probability_math},
        {"correlation signs", correlation_signs},
        {"forest invariants", forest_invariants},
        {"uncertainty-as-signal diagnostic", uncertainty_signal},
    };
    int failed = 0;
    int number = 0;
    for (const auto& [name, check] : criteria) {
        ++number;
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", number, name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", number - failed, number);
    return failed == 0 ? 0 : 1;
}
