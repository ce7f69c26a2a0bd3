#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace randadj {

/// Observed data from a two-arm randomized experiment. Covariate cells with
/// mask = 1 are absent: their stored numeric payload is fixed at 0 and must
/// never be read directly; every consumer goes through the mask.
/// Immutable after construction by convention; safe to share across threads.
struct ExperimentData {
    Eigen::VectorXd outcome;                    // length N
    Eigen::VectorXi treatment;                  // length N, entries in {0,1}
    Eigen::MatrixXd covariates;                 // N x J, zeros under the mask
    Eigen::MatrixXi mask;                       // N x J, 1 = missing
    std::optional<Eigen::VectorXi> cluster_id;  // constant treatment within cluster
    std::optional<Eigen::VectorXi> stratum_id;
    std::vector<std::string> covariate_names;   // length J

    Eigen::Index n() const { return outcome.size(); }
    Eigen::Index n_covariates() const { return covariates.cols(); }
    Eigen::Index n_treated() const { return treatment.sum(); }
    Eigen::Index n_control() const { return n() - n_treated(); }
};

/// Checks the structural invariants (N >= 2, both arms nonempty, {0,1}
/// treatment, matching dimensions, zero payload under the mask, cluster-wise
/// constant treatment). Throws InputError on violation.
void validate(const ExperimentData& data);

/// Row subset, in the given order. Does not re-validate: internal callers may
/// form subsets with an empty arm and must check feasibility themselves.
ExperimentData subset(const ExperimentData& data, const std::vector<Eigen::Index>& rows);

/// Realized missingness patterns m in {0,1}^J, lexicographically sorted
/// (m_1 is the most significant position). Only patterns with a positive
/// count are stored.
struct PatternTable {
    std::vector<std::vector<std::uint8_t>> patterns;
    std::vector<Eigen::Index> counts;
    std::vector<double> proportions;       // counts / N
    std::vector<Eigen::Index> membership;  // unit -> pattern index

    Eigen::Index size() const { return static_cast<Eigen::Index>(patterns.size()); }
};

PatternTable pattern_table(const ExperimentData& data);

/// Human-readable pattern label, e.g. "010".
std::string pattern_label(const std::vector<std::uint8_t>& pattern);

/// Columns observed for every unit.
struct CompleteCovariateSet {
    std::vector<Eigen::Index> indices;
};

CompleteCovariateSet complete_covariate_set(const ExperimentData& data);

/// Column-role assignment for CSV ingestion. Covariates listed by header
/// name; empty `covariates` means "all remaining columns".
struct CsvSchema {
    std::string outcome;
    std::string treatment;
    std::vector<std::string> covariates;
    std::optional<std::string> cluster;
    std::optional<std::string> stratum;
};

/// Reads a headered CSV. Missing covariate cells are the empty string, "NA",
/// or "nan" (case-insensitive). Malformed rows are reported with their
/// 1-based row number. The returned data is validated.
ExperimentData load_csv(const std::string& path, const CsvSchema& schema);

/// Writes data back out ('.' decimal separator, LF line endings, missing
/// cells as "NA") with enough digits that load_csv round-trips bit-exactly.
void write_csv(const std::string& path, const ExperimentData& data);

}  // namespace randadj
