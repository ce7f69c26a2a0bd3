#include "randadj/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "randadj/error.hpp"

namespace randadj {

void validate(const ExperimentData& data) {
    const Eigen::Index n = data.outcome.size();
    if (n < 2) throw InputError("dataset: need at least 2 units");
    if (data.treatment.size() != n) throw InputError("dataset: treatment length mismatch");
    if (data.covariates.rows() != n || data.mask.rows() != n ||
        data.mask.cols() != data.covariates.cols()) {
        throw InputError("dataset: covariate/mask dimensions mismatch");
    }
    if (static_cast<Eigen::Index>(data.covariate_names.size()) != data.covariates.cols()) {
        throw InputError("dataset: covariate name count mismatch");
    }
    Eigen::Index n1 = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int z = data.treatment(i);
        if (z != 0 && z != 1) throw InputError("dataset: treatment entries must be 0 or 1");
        n1 += z;
        if (!std::isfinite(data.outcome(i))) throw InputError("dataset: non-finite outcome");
    }
    if (n1 == 0 || n1 == n) throw InputError("dataset: both treatment arms must be nonempty");
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < data.mask.cols(); ++j) {
            const int m = data.mask(i, j);
            if (m != 0 && m != 1) throw InputError("dataset: mask entries must be 0 or 1");
            if (m == 1 && data.covariates(i, j) != 0.0) {
                throw InputError("dataset: masked cells must carry a zero payload");
            }
            if (m == 0 && !std::isfinite(data.covariates(i, j))) {
                throw InputError("dataset: non-finite covariate");
            }
        }
    }
    if (data.cluster_id) {
        if (data.cluster_id->size() != n) throw InputError("dataset: cluster_id length mismatch");
        std::unordered_map<int, int> arm;
        for (Eigen::Index i = 0; i < n; ++i) {
            auto [it, inserted] = arm.emplace((*data.cluster_id)(i), data.treatment(i));
            if (!inserted && it->second != data.treatment(i)) {
                throw InputError("dataset: treatment varies within cluster " +
                                 std::to_string((*data.cluster_id)(i)));
            }
        }
    }
    if (data.stratum_id && data.stratum_id->size() != n) {
        throw InputError("dataset: stratum_id length mismatch");
    }
}

ExperimentData subset(const ExperimentData& data, const std::vector<Eigen::Index>& rows) {
    const auto m = static_cast<Eigen::Index>(rows.size());
    ExperimentData out;
    out.outcome.resize(m);
    out.treatment.resize(m);
    out.covariates.resize(m, data.covariates.cols());
    out.mask.resize(m, data.mask.cols());
    out.covariate_names = data.covariate_names;
    if (data.cluster_id) out.cluster_id = Eigen::VectorXi(m);
    if (data.stratum_id) out.stratum_id = Eigen::VectorXi(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index i = rows[static_cast<std::size_t>(k)];
        out.outcome(k) = data.outcome(i);
        out.treatment(k) = data.treatment(i);
        out.covariates.row(k) = data.covariates.row(i);
        out.mask.row(k) = data.mask.row(i);
        if (data.cluster_id) (*out.cluster_id)(k) = (*data.cluster_id)(i);
        if (data.stratum_id) (*out.stratum_id)(k) = (*data.stratum_id)(i);
    }
    return out;
}

PatternTable pattern_table(const ExperimentData& data) {
    const Eigen::Index n = data.n();
    const Eigen::Index j = data.n_covariates();
    std::map<std::vector<std::uint8_t>, Eigen::Index> index;  // lexicographic order
    std::vector<std::vector<std::uint8_t>> row_patterns(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<std::uint8_t> m(static_cast<std::size_t>(j));
        for (Eigen::Index c = 0; c < j; ++c) {
            m[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(data.mask(i, c));
        }
        index.emplace(m, 0);
        row_patterns[static_cast<std::size_t>(i)] = std::move(m);
    }

    PatternTable table;
    Eigen::Index next = 0;
    for (auto& [pattern, slot] : index) {
        slot = next++;
        table.patterns.push_back(pattern);
    }
    table.counts.assign(table.patterns.size(), 0);
    table.membership.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index p = index[row_patterns[static_cast<std::size_t>(i)]];
        table.membership[static_cast<std::size_t>(i)] = p;
        ++table.counts[static_cast<std::size_t>(p)];
    }
    table.proportions.resize(table.patterns.size());
    for (std::size_t p = 0; p < table.patterns.size(); ++p) {
        table.proportions[p] = static_cast<double>(table.counts[p]) / static_cast<double>(n);
    }
    return table;
}

std::string pattern_label(const std::vector<std::uint8_t>& pattern) {
    std::string s;
    s.reserve(pattern.size());
    for (auto b : pattern) s.push_back(b ? '1' : '0');
    return s;
}

CompleteCovariateSet complete_covariate_set(const ExperimentData& data) {
    CompleteCovariateSet set;
    for (Eigen::Index c = 0; c < data.n_covariates(); ++c) {
        if (data.mask.col(c).sum() == 0) set.indices.push_back(c);
    }
    return set;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

bool is_missing_token(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s.empty() || s == "na" || s == "nan";
}

double parse_double(const std::string& cell, Eigen::Index row, const std::string& what) {
    double v = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end) {
        throw InputError("row " + std::to_string(row) + ": cannot parse " + what + " value '" +
                         cell + "'");
    }
    return v;
}

}  // namespace

ExperimentData load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw InputError("'" + path + "': empty file");
    const std::vector<std::string> header = split_row(line);

    auto column_of = [&](const std::string& name) -> Eigen::Index {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (header[c] == name) return static_cast<Eigen::Index>(c);
        }
        throw InputError("'" + path + "': no column named '" + name + "'");
    };

    const Eigen::Index outcome_col = column_of(schema.outcome);
    const Eigen::Index treatment_col = column_of(schema.treatment);
    std::optional<Eigen::Index> cluster_col;
    std::optional<Eigen::Index> stratum_col;
    if (schema.cluster) cluster_col = column_of(*schema.cluster);
    if (schema.stratum) stratum_col = column_of(*schema.stratum);

    std::vector<Eigen::Index> covariate_cols;
    std::vector<std::string> covariate_names;
    if (!schema.covariates.empty()) {
        for (const auto& name : schema.covariates) {
            covariate_cols.push_back(column_of(name));
            covariate_names.push_back(name);
        }
    } else {
        for (std::size_t c = 0; c < header.size(); ++c) {
            const auto idx = static_cast<Eigen::Index>(c);
            if (idx == outcome_col || idx == treatment_col) continue;
            if (cluster_col && idx == *cluster_col) continue;
            if (stratum_col && idx == *stratum_col) continue;
            covariate_cols.push_back(idx);
            covariate_names.push_back(header[c]);
        }
    }

    std::vector<double> outcomes;
    std::vector<int> treatments;
    std::vector<int> clusters;
    std::vector<int> strata;
    std::vector<double> covariate_values;  // row-major
    std::vector<std::uint8_t> mask_values;
    const std::size_t j = covariate_cols.size();

    Eigen::Index row = 1;  // header is row 1
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const std::vector<std::string> cells = split_row(line);
        if (cells.size() != header.size()) {
            throw InputError("row " + std::to_string(row) + ": expected " +
                             std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size()));
        }
        const std::string& ycell = cells[static_cast<std::size_t>(outcome_col)];
        if (is_missing_token(ycell)) {
            throw InputError("row " + std::to_string(row) + ": missing outcome cell");
        }
        outcomes.push_back(parse_double(ycell, row, "outcome"));

        const std::string& zcell = cells[static_cast<std::size_t>(treatment_col)];
        if (is_missing_token(zcell)) {
            throw InputError("row " + std::to_string(row) + ": missing treatment cell");
        }
        if (zcell == "0" || zcell == "1") {
            treatments.push_back(zcell == "1" ? 1 : 0);
        } else {
            throw InputError("row " + std::to_string(row) + ": non-binary treatment value '" +
                             zcell + "'");
        }

        if (cluster_col) {
            clusters.push_back(static_cast<int>(
                parse_double(cells[static_cast<std::size_t>(*cluster_col)], row, "cluster")));
        }
        if (stratum_col) {
            strata.push_back(static_cast<int>(
                parse_double(cells[static_cast<std::size_t>(*stratum_col)], row, "stratum")));
        }
        for (std::size_t c = 0; c < j; ++c) {
            const std::string& cell = cells[static_cast<std::size_t>(covariate_cols[c])];
            if (is_missing_token(cell)) {
                covariate_values.push_back(0.0);
                mask_values.push_back(1);
            } else {
                covariate_values.push_back(parse_double(cell, row, "covariate"));
                mask_values.push_back(0);
            }
        }
    }

    const auto n = static_cast<Eigen::Index>(outcomes.size());
    ExperimentData data;
    data.outcome = Eigen::Map<Eigen::VectorXd>(outcomes.data(), n);
    data.treatment = Eigen::Map<Eigen::VectorXi>(treatments.data(), n);
    data.covariates.resize(n, static_cast<Eigen::Index>(j));
    data.mask.resize(n, static_cast<Eigen::Index>(j));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < j; ++c) {
            data.covariates(i, static_cast<Eigen::Index>(c)) =
                covariate_values[static_cast<std::size_t>(i) * j + c];
            data.mask(i, static_cast<Eigen::Index>(c)) =
                mask_values[static_cast<std::size_t>(i) * j + c];
        }
    }
    data.covariate_names = covariate_names;
    if (cluster_col) data.cluster_id = Eigen::Map<Eigen::VectorXi>(clusters.data(), n);
    if (stratum_col) data.stratum_id = Eigen::Map<Eigen::VectorXi>(strata.data(), n);
    validate(data);
    return data;
}

void write_csv(const std::string& path, const ExperimentData& data) {
    std::FILE* out = std::fopen(path.c_str(), "wb");
    if (!out) throw InputError("cannot open '" + path + "' for writing");

    std::fputs("outcome,treatment", out);
    for (const auto& name : data.covariate_names) std::fprintf(out, ",%s", name.c_str());
    if (data.cluster_id) std::fputs(",cluster", out);
    if (data.stratum_id) std::fputs(",stratum", out);
    std::fputc('\n', out);

    for (Eigen::Index i = 0; i < data.n(); ++i) {
        std::fprintf(out, "%.17g,%d", data.outcome(i), data.treatment(i));
        for (Eigen::Index c = 0; c < data.n_covariates(); ++c) {
            if (data.mask(i, c)) {
                std::fputs(",NA", out);
            } else {
                std::fprintf(out, ",%.17g", data.covariates(i, c));
            }
        }
        if (data.cluster_id) std::fprintf(out, ",%d", (*data.cluster_id)(i));
        if (data.stratum_id) std::fprintf(out, ",%d", (*data.stratum_id)(i));
        std::fputc('\n', out);
    }
    std::fclose(out);
}

}  // namespace randadj
