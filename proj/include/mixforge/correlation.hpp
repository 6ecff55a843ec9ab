#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mixforge/dataset.hpp"

namespace mixforge {

enum class CorrelationMethod { Pearson, Spearman };

std::string_view correlation_method_token(CorrelationMethod method);
CorrelationMethod parse_correlation_method(std::string_view token);

/// Pearson coefficient; nullopt when either input has zero variance or fewer than two points.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Spearman rank coefficient with average ranks for ties.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

/// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Square matrix over the feature columns followed by the five targets.
/// Undefined entries (zero variance over the shared rows) are nullopt.
struct CorrelationMatrix {
    std::vector<std::string> labels;
    std::vector<std::optional<double>> values;
    CorrelationMethod method = CorrelationMethod::Pearson;

    std::size_t size() const { return labels.size(); }
    const std::optional<double>& at(std::size_t i, std::size_t j) const { return values[i * labels.size() + j]; }
    std::optional<double> at(std::string_view row, std::string_view col) const;
    std::size_t index_of(std::string_view label) const;  // throws std::out_of_range
};

/// Pairwise deletion: each entry uses only the rows where both variables are present.
/// Preconditioning time enters as measured (not imputed).
CorrelationMatrix correlation_matrix(const DatasetTable& table, CorrelationMethod method);

std::string correlation_csv(const CorrelationMatrix& matrix);
std::string correlation_svg(const CorrelationMatrix& matrix);

}  // namespace mixforge
