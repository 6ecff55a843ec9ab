#include "mixforge/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "mixforge/error.hpp"

namespace mixforge {

namespace {

constexpr std::array<std::string_view, kTargetCount> kTargetTokens = {"k4", "env_impact", "strength", "density",
                                                                      "cost"};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string_view> split_row(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            break;
        }
        cells.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return cells;
}

std::string location(std::size_t row, std::string_view column) {
    std::ostringstream os;
    os << "row " << row << ", column '" << column << "'";
    return os.str();
}

double parse_number(std::string_view cell, std::size_t row, std::string_view column) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
        throw ParseError("malformed number '" + std::string(cell) + "' at " + location(row, column));
    }
    return value;
}

std::optional<double> parse_optional(std::string_view cell, std::size_t row, std::string_view column) {
    if (cell == "-") return std::nullopt;
    return parse_number(cell, row, column);
}

}  // namespace

std::string_view cement_type_token(CementType type) {
    return type == CementType::CemIIA_32_5R ? "IIA 32.5 R" : "I 52.5 N";
}

CementType parse_cement_type(std::string_view token) {
    token = trim(token);
    if (token == "IIA 32.5 R" || token == "IIA") return CementType::CemIIA_32_5R;
    if (token == "I 52.5 N" || token == "I") return CementType::CemI_52_5N;
    throw ParseError("unknown cement type '" + std::string(token) + "'");
}

std::string_view target_token(TargetId target) { return kTargetTokens[index_of(target)]; }

std::optional<TargetId> parse_target_token(std::string_view token) {
    for (auto t : kAllTargets) {
        if (kTargetTokens[index_of(t)] == token) return t;
    }
    return std::nullopt;
}

void MixComposition::validate() const {
    const std::array<std::pair<const char*, double>, 4> parts = {
        {{"cement_pct", cement_pct}, {"gravel_pct", gravel_pct}, {"sand_pct", sand_pct}, {"water_pct", water_pct}}};
    for (const auto& [name, value] : parts) {
        if (!(value > 0.0 && value < 100.0)) {
            throw ValidationError(std::string(name) + " must lie in (0, 100), got " + format_number(value));
        }
    }
    if (std::abs(sum() - 100.0) > kFractionSumTolerance + 1e-9) {
        throw ValidationError("mass fractions sum to " + format_number(sum()) + ", expected 100 +/- 0.5");
    }
}

bool MeasuredTargets::all_present() const {
    return std::all_of(values.begin(), values.end(), [](const auto& v) { return v.has_value(); });
}

void MixRecord::validate() const {
    try {
        composition.validate();
    } catch (const ValidationError& e) {
        throw ValidationError("mix '" + id + "': " + e.what());
    }
    for (auto t : kAllTargets) {
        const auto& v = measured[t];
        if (v && !(*v > 0.0)) {
            throw ValidationError("mix '" + id + "': measured " + std::string(target_token(t)) +
                                  " must be strictly positive");
        }
    }
    if (measured.has(TargetId::CarbonationK) && !preconditioning_days) {
        throw ValidationError("mix '" + id + "': carbonation coefficient present without preconditioning time");
    }
    if (preconditioning_days && *preconditioning_days < 0.0) {
        throw ValidationError("mix '" + id + "': negative preconditioning time");
    }
}

std::vector<std::string> feature_names(const FeatureConfig& config) {
    std::vector<std::string> names = {"cement_type",       "cement_pct",           "gravel_pct",
                                      "sand_pct",          "water_pct",            "water_cement_ratio",
                                      "total_agg_cement_ratio", "sand_total_agg_ratio", "precond_days"};
    if (config.include_estimated_mass) names.emplace_back("est_mass_per_m3");
    return names;
}

std::vector<double> FeatureVector::to_vector(const FeatureConfig& config) const {
    std::vector<double> v = {cement_type_code,       cement_pct,           gravel_pct,
                             sand_pct,               water_pct,            water_cement_ratio,
                             total_agg_cement_ratio, sand_total_agg_ratio, preconditioning_days};
    if (config.include_estimated_mass) v.push_back(estimated_mass_per_m3);
    return v;
}

FeatureVector derive_features(const MixRecord& record, double imputed_precond) {
    const auto& c = record.composition;
    if (c.cement_pct == 0.0) throw DomainError("mix '" + record.id + "': zero cement fraction");
    const double aggregate = c.gravel_pct + c.sand_pct;
    if (aggregate == 0.0) throw DomainError("mix '" + record.id + "': zero aggregate fraction");

    FeatureVector f;
    f.cement_type_code = static_cast<double>(record.cement_type);
    f.cement_pct = c.cement_pct;
    f.gravel_pct = c.gravel_pct;
    f.sand_pct = c.sand_pct;
    f.water_pct = c.water_pct;
    f.water_cement_ratio = c.water_pct / c.cement_pct;
    f.total_agg_cement_ratio = aggregate / c.cement_pct;
    f.sand_total_agg_ratio = c.sand_pct / aggregate;
    f.preconditioning_days = record.preconditioning_days.value_or(imputed_precond);
    f.estimated_mass_per_m3 = record.estimated_mass_per_m3;
    return f;
}

double impute_preconditioning(std::span<const MixRecord> records) {
    std::vector<double> present;
    for (const auto& r : records) {
        if (r.preconditioning_days) present.push_back(*r.preconditioning_days);
    }
    if (present.empty()) throw ValidationError("cannot impute preconditioning time: no record has a value");
    std::sort(present.begin(), present.end());
    return present[(present.size() - 1) / 2];
}

DatasetTable::DatasetTable(std::vector<MixRecord> records, FeatureConfig config)
    : records_(std::move(records)), config_(config) {
    std::set<std::string, std::less<>> ids;
    bool needs_imputation = false;
    for (const auto& r : records_) {
        r.validate();
        if (!ids.insert(r.id).second) throw ValidationError("duplicate mix id '" + r.id + "'");
        needs_imputation = needs_imputation || !r.preconditioning_days;
    }
    double fill = 0.0;
    if (needs_imputation) {
        fill = impute_preconditioning(records_);
        imputed_precond_ = fill;
    }
    features_.reserve(records_.size());
    for (const auto& r : records_) features_.push_back(derive_features(r, fill));
}

Matrix DatasetTable::feature_matrix() const {
    Matrix m(records_.size(), feature_count());
    for (std::size_t i = 0; i < records_.size(); ++i) {
        auto row = feature_row(i);
        std::copy(row.begin(), row.end(), m.row(i).begin());
    }
    return m;
}

std::vector<std::size_t> DatasetTable::rows_with(TargetId target) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (records_[i].measured.has(target)) rows.push_back(i);
    }
    return rows;
}

DatasetTable DatasetTable::without_row(std::size_t i) const {
    std::vector<MixRecord> rest;
    rest.reserve(records_.size());
    for (std::size_t j = 0; j < records_.size(); ++j) {
        if (j != i) rest.push_back(records_[j]);
    }
    return DatasetTable(std::move(rest), config_);
}

DatasetTable DatasetTable::subset(std::span<const std::size_t> rows) const {
    std::vector<MixRecord> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(records_.at(r));
    return DatasetTable(std::move(out), config_);
}

std::optional<std::size_t> DatasetTable::find(std::string_view id) const {
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (records_[i].id == id) return i;
    }
    return std::nullopt;
}

DatasetTable parse_training_csv(std::istream& in, FeatureConfig config) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty input: missing header");
    std::string_view header = line;
    if (header.starts_with("\xEF\xBB\xBF")) header.remove_prefix(3);
    header = trim(header);
    if (header != kTrainingCsvHeader) {
        throw ParseError("unexpected header; expected '" + std::string(kTrainingCsvHeader) + "'");
    }
    const auto columns = split_row(kTrainingCsvHeader);

    std::vector<MixRecord> records;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto cells = split_row(line);
        if (cells.size() != columns.size()) {
            std::ostringstream os;
            os << "row " << row << ": expected " << columns.size() << " cells, got " << cells.size();
            throw ParseError(os.str());
        }
        MixRecord r;
        r.id = std::string(cells[0]);
        if (r.id.empty()) throw ParseError(location(row, columns[0]) + ": empty mix id");
        try {
            r.cement_type = parse_cement_type(cells[1]);
        } catch (const ParseError& e) {
            throw ParseError(std::string(e.what()) + " at " + location(row, columns[1]));
        }
        r.composition.cement_pct = parse_number(cells[2], row, columns[2]);
        r.composition.gravel_pct = parse_number(cells[3], row, columns[3]);
        r.composition.sand_pct = parse_number(cells[4], row, columns[4]);
        r.composition.water_pct = parse_number(cells[5], row, columns[5]);
        r.estimated_mass_per_m3 = parse_number(cells[6], row, columns[6]);
        r.preconditioning_days = parse_optional(cells[7], row, columns[7]);
        for (std::size_t t = 0; t < kTargetCount; ++t) {
            r.measured.values[t] = parse_optional(cells[8 + t], row, columns[8 + t]);
        }
        records.push_back(std::move(r));
    }
    return DatasetTable(std::move(records), config);
}

DatasetTable parse_training_csv(std::string_view text, FeatureConfig config) {
    std::istringstream in{std::string(text)};
    return parse_training_csv(in, config);
}

DatasetTable load_training_csv(const std::string& path, FeatureConfig config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return parse_training_csv(in, config);
}

std::string format_number(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) return "nan";
    return std::string(buf, ptr);
}

std::string write_training_csv(const DatasetTable& table) {
    std::ostringstream os;
    os << kTrainingCsvHeader << '\n';
    auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("-"); };
    for (const auto& r : table.records()) {
        const auto& c = r.composition;
        os << r.id << ',' << cement_type_token(r.cement_type) << ',' << format_number(c.cement_pct) << ','
           << format_number(c.gravel_pct) << ',' << format_number(c.sand_pct) << ',' << format_number(c.water_pct)
           << ',' << format_number(r.estimated_mass_per_m3) << ',' << opt(r.preconditioning_days);
        for (const auto& v : r.measured.values) os << ',' << opt(v);
        os << '\n';
    }
    return os.str();
}

}  // namespace mixforge
