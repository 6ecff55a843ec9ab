#include "mixforge/properties.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <istream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mixforge/error.hpp"

namespace mixforge {

void MaterialCoefficients::validate() const {
    for (const auto* c : {&cement_iia, &cement_i, &aggregate, &water}) {
        if (!(std::isfinite(c->embodied) && std::isfinite(c->price) && c->embodied >= 0.0 && c->price >= 0.0)) {
            throw ValidationError("material coefficients must be finite and non-negative");
        }
    }
}

MaterialCoefficients MaterialCoefficients::from_json(std::string_view json, MaterialCoefficients base) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid coefficient file: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("coefficient file must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        MaterialCoefficient* target = nullptr;
        if (key == "cement_iia") target = &base.cement_iia;
        else if (key == "cement_i") target = &base.cement_i;
        else if (key == "aggregate" || key == "gravel" || key == "sand") target = &base.aggregate;
        else if (key == "water") target = &base.water;
        else throw ParseError("unknown material '" + key + "' in coefficient file");
        if (!value.is_object()) throw ParseError("material '" + key + "' must map to an object");
        for (const auto& [field, v] : value.items()) {
            if (!v.is_number()) throw ParseError("coefficient '" + key + "." + field + "' must be a number");
            if (field == "e") target->embodied = v.get<double>();
            else if (field == "c") target->price = v.get<double>();
            else throw ParseError("unknown coefficient field '" + field + "' (expected e or c)");
        }
    }
    base.validate();
    return base;
}

MaterialCoefficients MaterialCoefficients::from_json(std::string_view json) {
    return from_json(json, MaterialCoefficients{});
}

void validate_blend(const MixComposition& mix) {
    for (double f : {mix.cement_pct, mix.gravel_pct, mix.sand_pct, mix.water_pct}) {
        if (!std::isfinite(f) || f < 0.0) throw ValidationError("mass fractions must be finite and non-negative");
    }
    if (std::abs(mix.sum() - 100.0) > kFractionSumTolerance + 1e-9) {
        throw ValidationError("mass fractions sum to " + format_number(mix.sum()) + ", expected 100 +/- 0.5");
    }
}

namespace {

double weighted(const MixComposition& mix, double cement, double aggregate, double water) {
    return (cement * mix.cement_pct + aggregate * (mix.gravel_pct + mix.sand_pct) + water * mix.water_pct) / 100.0;
}

}  // namespace

double embodied_carbon(const MixComposition& mix, CementType cement_type, const MaterialCoefficients& coeffs) {
    validate_blend(mix);
    return weighted(mix, coeffs.cement(cement_type).embodied, coeffs.aggregate.embodied, coeffs.water.embodied);
}

double cost(const MixComposition& mix, CementType cement_type, const MaterialCoefficients& coeffs) {
    validate_blend(mix);
    return weighted(mix, coeffs.cement(cement_type).price, coeffs.aggregate.price, coeffs.water.price);
}

double carbonation_depth(double k, double x0, double t) {
    if (k < 0.0 || x0 < 0.0 || t < 0.0) throw DomainError("carbonation_depth: k, x0 and t must be non-negative");
    return std::sqrt(x0 * x0 + k * k * t);
}

namespace {

struct Params {
    double k;
    double x0;
};

double sse_of(Params p, std::span<const double> t, std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double r = std::sqrt(p.x0 * p.x0 + p.k * p.k * t[i]) - x[i];
        s += r * r;
    }
    return s;
}

// Levenberg-Marquardt with projection onto k, x0 >= 0.
CurveFit refine(Params p, std::span<const double> t, std::span<const double> x) {
    double sse = sse_of(p, t, x);
    double lambda = 1e-3;
    int it = 0;
    for (; it < 1000; ++it) {
        if (sse < 1e-30) break;
        double a11 = 0, a12 = 0, a22 = 0, g1 = 0, g2 = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double m = std::sqrt(p.x0 * p.x0 + p.k * p.k * t[i]);
            double dk, dx0;
            if (m > 0.0) {
                dk = p.k * t[i] / m;
                dx0 = p.x0 / m;
            } else {
                dk = std::sqrt(t[i]);
                dx0 = 1.0;
            }
            const double r = m - x[i];
            a11 += dk * dk;
            a12 += dk * dx0;
            a22 += dx0 * dx0;
            g1 += dk * r;
            g2 += dx0 * r;
        }
        bool accepted = false;
        while (lambda < 1e16) {
            const double b11 = a11 + lambda * (a11 > 0 ? a11 : 1.0);
            const double b22 = a22 + lambda * (a22 > 0 ? a22 : 1.0);
            const double det = b11 * b22 - a12 * a12;
            if (det <= 0.0 || !std::isfinite(det)) {
                lambda *= 10.0;
                continue;
            }
            const double dk = -(b22 * g1 - a12 * g2) / det;
            const double dx = -(b11 * g2 - a12 * g1) / det;
            const Params next{std::max(0.0, p.k + dk), std::max(0.0, p.x0 + dx)};
            const double next_sse = sse_of(next, t, x);
            if (next_sse < sse) {
                const double step = std::abs(next.k - p.k) + std::abs(next.x0 - p.x0);
                const double gain = std::sqrt(sse) - std::sqrt(next_sse);
                p = next;
                sse = next_sse;
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                if (gain < 1e-10 * 1e-4 && step < 1e-13 * (1.0 + p.k + p.x0)) return {p.k, p.x0, sse, it + 1};
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) break;
    }
    return {p.k, p.x0, sse, it};
}

void check_series(std::span<const double> t, std::span<const double> x) {
    if (t.size() != x.size()) throw ValidationError("carbonation fit: t and x lengths differ");
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i]) || !std::isfinite(x[i]) || t[i] < 0.0 || x[i] < 0.0) {
            throw ValidationError("carbonation fit: t and x must be finite and non-negative");
        }
    }
    std::set<double> distinct(t.begin(), t.end());
    if (distinct.size() < 2) throw DomainError("carbonation fit: need at least 2 distinct exposure times");
}

}  // namespace

CurveFit fit_carbonation_curve(std::span<const double> t, std::span<const double> x) {
    check_series(t, x);
    if (std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; })) return {0.0, 0.0, 0.0, 0};

    const auto n = static_cast<double>(t.size());
    // Linearized start: x^2 = x0^2 + k^2 t.
    double st = 0, sx2 = 0, stt = 0, stx2 = 0, sux = 0, suu = 0, sx = 0;
    double x_min = x[0];
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double x2 = x[i] * x[i];
        st += t[i];
        sx2 += x2;
        stt += t[i] * t[i];
        stx2 += t[i] * x2;
        sux += std::sqrt(t[i]) * x[i];
        suu += t[i];
        sx += x[i];
        x_min = std::min(x_min, x[i]);
    }
    const double denom = n * stt - st * st;
    const double slope = denom > 0 ? (n * stx2 - st * sx2) / denom : 0.0;
    const double intercept = (sx2 - slope * st) / n;

    const std::array<Params, 4> starts = {{
        {std::sqrt(std::max(slope, 0.0)), std::sqrt(std::max(intercept, 0.0))},
        {suu > 0 ? sux / suu : 0.0, 0.0},
        {suu > 0 ? sux / suu : 0.0, std::max(0.5 * x_min, 1e-3)},
        {0.0, sx / n},
    }};
    CurveFit best{0, 0, INFINITY, 0};
    for (const auto& s : starts) {
        const auto fit = refine(s, t, x);
        if (fit.sse < best.sse) best = fit;
    }
    return best;
}

CarbonationFit fit_carbonation(std::span<const CarbonationObservation> series) {
    std::vector<double> t, x, upper;
    for (const auto& o : series) {
        if (!(o.sigma_x >= 0.0) || !std::isfinite(o.sigma_x)) {
            throw ValidationError("carbonation fit: sigma_x must be finite and non-negative");
        }
        t.push_back(o.t);
        x.push_back(o.x);
        upper.push_back(o.x + o.sigma_x);
    }
    const auto mean_fit = fit_carbonation_curve(t, x);
    const auto upper_fit = fit_carbonation_curve(t, upper);
    return {mean_fit.k, mean_fit.x0, std::max(0.0, upper_fit.k - mean_fit.k)};
}

std::vector<CarbonationObservation> parse_carbonation_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("carbonation series: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (line != "t_days,x_mm,sigma_mm") throw ParseError("carbonation series: expected header 't_days,x_mm,sigma_mm'");
    std::vector<CarbonationObservation> out;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::array<double, 3> v{};
        std::size_t start = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            const auto end = c < 2 ? line.find(',', start) : line.size();
            if (end == std::string::npos) {
                throw ParseError("carbonation series: row " + std::to_string(row) + " has fewer than 3 cells");
            }
            std::string_view cell(line.data() + start, end - start);
            while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
            while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v[c]);
            if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size()) {
                throw ParseError("carbonation series: malformed number at row " + std::to_string(row) + ", column " +
                                 std::to_string(c + 1));
            }
            start = end + 1;
        }
        out.push_back({v[0], v[1], v[2]});
    }
    return out;
}

std::vector<CarbonationObservation> parse_carbonation_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_carbonation_csv(in);
}

std::string carbonation_fit_json(const CarbonationFit& fit) {
    nlohmann::ordered_json j = {{"k", fit.k}, {"x0", fit.x0}, {"k_err", fit.k_err}};
    return j.dump(2);
}

}  // namespace mixforge
