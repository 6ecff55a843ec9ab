#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mixforge/dataset.hpp"

namespace mixforge {

struct MaterialCoefficient {
    double embodied = 0.0;  // kgCO2e per kg of material
    double price = 0.0;     // GBP per kg of material

    bool operator==(const MaterialCoefficient&) const = default;
};

/// Per-material embodied emissions and prices. Gravel and sand share the aggregate row.
struct MaterialCoefficients {
    MaterialCoefficient cement_iia{0.799, 0.089};
    MaterialCoefficient cement_i{0.912, 0.089};
    MaterialCoefficient aggregate{0.007, 0.018};
    MaterialCoefficient water{0.0008, 0.007};

    const MaterialCoefficient& cement(CementType type) const {
        return type == CementType::CemIIA_32_5R ? cement_iia : cement_i;
    }
    void validate() const;  // all entries non-negative and finite

    /// Applies overrides such as {"cement_i": {"e": 0.9, "c": 0.1}, "water": {"c": 0.01}} on top
    /// of `base`. Keys: cement_iia, cement_i, aggregate (aliases gravel, sand), water.
    static MaterialCoefficients from_json(std::string_view json, MaterialCoefficients base);
    static MaterialCoefficients from_json(std::string_view json);

    bool operator==(const MaterialCoefficients&) const = default;
};

/// Blend check for the calculators: non-negative fractions summing to 100 +/- 0.5.
void validate_blend(const MixComposition& mix);

/// Sum of e_i * f_i with f_i the unit mass fraction of material i.
double embodied_carbon(const MixComposition& mix, CementType cement_type, const MaterialCoefficients& coeffs = {});

/// Sum of c_i * f_i.
double cost(const MixComposition& mix, CementType cement_type, const MaterialCoefficients& coeffs = {});

/// x(t) = sqrt(x0^2 + k^2 t).
double carbonation_depth(double k, double x0, double t);

struct CarbonationObservation {
    double t = 0.0;        // days of exposure
    double x = 0.0;        // mean depth, mm
    double sigma_x = 0.0;  // depth standard deviation, mm
};

struct CarbonationFit {
    double k = 0.0;      // mm/day^0.5
    double x0 = 0.0;     // mm
    double k_err = 0.0;  // upper-bound refit minus k
};

struct CurveFit {
    double k = 0.0;
    double x0 = 0.0;
    double sse = 0.0;
    int iterations = 0;
};

/// Least squares fit of depth against sqrt(t) with k, x0 >= 0 (projected Levenberg-Marquardt).
CurveFit fit_carbonation_curve(std::span<const double> t, std::span<const double> x);

/// Fits the mean depths, then refits x + sigma_x for the one-sided error on k.
CarbonationFit fit_carbonation(std::span<const CarbonationObservation> series);

/// CSV with header `t_days,x_mm,sigma_mm`.
std::vector<CarbonationObservation> parse_carbonation_csv(std::istream& in);
std::vector<CarbonationObservation> parse_carbonation_csv(std::string_view text);

std::string carbonation_fit_json(const CarbonationFit& fit);

}  // namespace mixforge
