#include "mixforge/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mixforge/error.hpp"
#include "svg.hpp"

namespace mixforge {

std::string_view correlation_method_token(CorrelationMethod method) {
    return method == CorrelationMethod::Pearson ? "pearson" : "spearman";
}

CorrelationMethod parse_correlation_method(std::string_view token) {
    if (token == "pearson") return CorrelationMethod::Pearson;
    if (token == "spearman") return CorrelationMethod::Spearman;
    throw ConfigError("unknown correlation method '" + std::string(token) + "'");
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    const std::size_t n = x.size();
    if (n < 2) return std::nullopt;
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    const bool x_constant = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
    const bool y_constant = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (x_constant || y_constant || sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
    auto rx = average_ranks(x);
    auto ry = average_ranks(y);
    return pearson(rx, ry);
}

std::optional<double> CorrelationMatrix::at(std::string_view row, std::string_view col) const {
    return at(index_of(row), index_of(col));
}

std::size_t CorrelationMatrix::index_of(std::string_view label) const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == label) return i;
    }
    throw std::out_of_range("no correlation variable '" + std::string(label) + "'");
}

CorrelationMatrix correlation_matrix(const DatasetTable& table, CorrelationMethod method) {
    if (table.empty()) throw ValidationError("no records");
    if (table.size() < 3) throw ValidationError("correlation needs at least 3 records");

    const auto& cfg = table.config();
    const std::size_t nf = cfg.feature_count();
    CorrelationMatrix out;
    out.method = method;
    out.labels = feature_names(cfg);
    for (auto t : kAllTargets) out.labels.emplace_back(target_token(t));
    const std::size_t nv = out.labels.size();

    // Column-wise values with presence masks.
    std::vector<std::vector<std::optional<double>>> columns(nv, std::vector<std::optional<double>>(table.size()));
    for (std::size_t r = 0; r < table.size(); ++r) {
        const auto row = table.feature_row(r);
        const auto& rec = table.record(r);
        for (std::size_t f = 0; f < nf; ++f) columns[f][r] = row[f];
        columns[static_cast<std::size_t>(Feature::PreconditioningDays)][r] = rec.preconditioning_days;
        for (auto t : kAllTargets) columns[nf + index_of(t)][r] = rec.measured[t];
    }

    out.values.assign(nv * nv, std::nullopt);
    for (std::size_t i = 0; i < nv; ++i) {
        for (std::size_t j = i; j < nv; ++j) {
            std::vector<double> x, y;
            for (std::size_t r = 0; r < table.size(); ++r) {
                if (columns[i][r] && columns[j][r]) {
                    x.push_back(*columns[i][r]);
                    y.push_back(*columns[j][r]);
                }
            }
            std::optional<double> v =
                method == CorrelationMethod::Pearson ? pearson(x, y) : spearman(x, y);
            if (i == j && v) v = 1.0;
            out.values[i * nv + j] = v;
            out.values[j * nv + i] = v;
        }
    }
    return out;
}

std::string correlation_csv(const CorrelationMatrix& m) {
    std::ostringstream os;
    os << "variable";
    for (const auto& l : m.labels) os << ',' << l;
    os << '\n';
    for (std::size_t i = 0; i < m.size(); ++i) {
        os << m.labels[i];
        for (std::size_t j = 0; j < m.size(); ++j) {
            const auto& v = m.at(i, j);
            os << ',' << (v ? format_number(*v) : std::string("NA"));
        }
        os << '\n';
    }
    return os.str();
}

std::string correlation_svg(const CorrelationMatrix& m) {
    const double cell = 36.0;
    const double margin = 170.0;
    const double n = static_cast<double>(m.size());
    svg::Document doc(margin + n * cell + 20.0, margin + n * cell + 20.0);
    doc.text(10, 20, std::string("Correlation (") + std::string(correlation_method_token(m.method)) + ")", 14);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double y = margin + static_cast<double>(i) * cell;
        doc.text(margin - 6, y + cell * 0.6, m.labels[i], 11, "end");
        doc.text(margin + static_cast<double>(i) * cell + cell * 0.5, margin - 6, m.labels[i], 11, "start",
                 -60.0);
        for (std::size_t j = 0; j < m.size(); ++j) {
            const double x = margin + static_cast<double>(j) * cell;
            const auto& v = m.at(i, j);
            doc.rect(x, y, cell, cell, v ? svg::diverging_color(*v) : std::string("#cccccc"));
            if (v) {
                std::ostringstream label;
                label.precision(2);
                label << std::fixed << *v;
                doc.text(x + cell * 0.5, y + cell * 0.6, label.str(), 9, "middle");
            }
        }
    }
    return doc.str();
}

}  // namespace mixforge
