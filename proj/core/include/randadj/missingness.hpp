#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "randadj/dataset.hpp"

namespace randadj {

/// Covariates with every masked cell replaced by its column's constant:
/// values(i,j) = x_ij when observed, c_j when missing.
struct ImputedCovariates {
    Eigen::MatrixXd values;
    Eigen::VectorXd constants;
};

ImputedCovariates impute(const ExperimentData& data, const Eigen::VectorXd& constants);

/// Column-wise means over the observed cells. Throws EstimationError when a
/// column has no observed value.
Eigen::VectorXd observed_means(const ExperimentData& data);

/// Imputed covariates augmented with one missingness indicator per incomplete
/// column; among indicator columns that are identical only the first (in
/// column order) is kept.
struct MimFeatures {
    Eigen::MatrixXd matrix;
    std::vector<std::string> names;
    Eigen::Index n_indicators = 0;  // trailing block width
};

MimFeatures mim_features(const ExperimentData& data, const Eigen::VectorXd& constants);

/// Full pattern-interaction features: the non-constant part of
/// (1, x_imp') kron f, where f stacks all products of missingness indicators.
/// Layout is normative for left-to-right pruning: the imputed block first,
/// then the indicator products (subsets ordered with covariate 1 as the low
/// bit), then each covariate's products with every indicator subset.
/// Collinear entries (e.g. x_imp_j * M_j = c_j * M_j) are left in place for
/// the fit to prune.
struct MpFeatures {
    Eigen::MatrixXd matrix;
    std::vector<std::string> labels;
    Eigen::Index n_imputed = 0;     // leading x_imp block width (J)
    Eigen::Index n_indicator = 0;   // f' block width (2^J - 1)
};

/// Throws EstimationError when J exceeds max_j (the feature count
/// (J+1) * 2^J - 1 grows too fast beyond that).
MpFeatures mp_features(const ExperimentData& data, const Eigen::VectorXd& constants,
                       int max_j = 12);

/// Per-unit count of observed covariates and the complete-case indicator.
struct UnitScalars {
    Eigen::VectorXd observed_count;  // J_i
    Eigen::VectorXd complete_case;   // C_i
};

UnitScalars count_and_cc_scalars(const ExperimentData& data);

/// Arm-wise missingness rates per covariate with two-proportion z statistics;
/// a diagnostic for treatment-dependent missingness, not a formal test.
struct BalanceReport {
    Eigen::VectorXd rate_treated;
    Eigen::VectorXd rate_control;
    Eigen::VectorXd difference;
    Eigen::VectorXd z_statistic;        // 0 when the pooled rate is degenerate
    double cc_rate_treated = 0.0;       // complete-case rates
    double cc_rate_control = 0.0;
    double cc_difference = 0.0;
    double cc_z_statistic = 0.0;
};

BalanceReport balance_check(const ExperimentData& data);

/// Imputation constants that remove the leading bias of single imputation
/// when missingness differs by arm: c_j is the ratio of the arm-wise
/// differences in observed-cell covariate means and observed-cell rates.
/// Throws EstimationError listing columns whose rate difference is zero.
Eigen::VectorXd debias_constants(const ExperimentData& data);

}  // namespace randadj
