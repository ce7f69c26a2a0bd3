#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "randadj/dataset.hpp"
#include "randadj/estimators.hpp"

namespace randadj {

/// Cluster-level view: per-cluster treatment, sizes, and totals of outcome,
/// zero-imputed covariates, and missingness indicators, each scaled by the
/// average cluster size nbar = N / I.
struct ClusterView {
    Eigen::Index n_clusters = 0;
    double nbar = 0.0;
    std::vector<int> ids;                          // cluster label per row
    Eigen::VectorXd sizes;                         // n_i
    Eigen::VectorXi treatment;                     // Z_i
    Eigen::VectorXd outcome_total;                 // nbar^-1 sum_l Y_il
    Eigen::MatrixXd covariate_total;               // nbar^-1 sum_l x0_il
    Eigen::MatrixXd mask_total;                    // nbar^-1 sum_l M_il
    std::vector<std::vector<Eigen::Index>> members;
};

/// Requires cluster ids with cluster-constant treatment and both arms
/// represented at the cluster level.
ClusterView make_cluster_view(const ExperimentData& data);

/// Individual-level regression of the strategy's features with a
/// cluster-robust (CR0) standard error. The pattern-wise strategy routes
/// through its aggregate regression.
EstimateResult cluster_unit_level(const ExperimentData& data, const EstimatorSpec& spec);

/// Scaled-cluster-total regression over the I clusters: the feature vector is
/// (n_i, scaled totals of the strategy's unit-level features); Neyman uses no
/// features at all. The interacted form over clusters is the recommended
/// estimator under cluster randomization.
EstimateResult cluster_total_level(const ExperimentData& data, const EstimatorSpec& spec);

/// Per-stratum estimation combined with stratum-share weights:
/// estimate = sum w_k * estimate_k, se^2 = sum w_k^2 * se_k^2.
struct StratifiedPlan {
    std::vector<EstimatorSpec> specs;         // one shared spec, or one per stratum
    std::optional<Eigen::VectorXd> weights;   // defaults to unit shares; must sum to 1
    /// A stratum where the requested fit fails falls back to its difference
    /// in means when true; otherwise the failure propagates.
    bool neyman_fallback = true;
};

EstimateResult stratified(const ExperimentData& data, const StratifiedPlan& plan);

}  // namespace randadj
