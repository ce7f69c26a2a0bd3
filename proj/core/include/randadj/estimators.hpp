#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "randadj/dataset.hpp"
#include "randadj/missingness.hpp"
#include "randadj/ols.hpp"

namespace randadj {

/// Missing-covariate strategies. The first five mirror the core menu
/// (difference in means, complete cases, complete covariates, single
/// imputation, missingness indicators, pattern-wise fits); MpAggregate
/// recovers the pattern-wise results through one regression; the last three
/// are restricted variants trading asymptotic efficiency for fewer columns.
enum class Strategy {
    Neyman,
    CompleteCase,
    CompleteCovariate,
    Imputation,
    Mim,
    Mp,
    MpAggregate,
    MissCount,
    CcIndicator,
    SecondOrder,
};

enum class Model { F, L };  // F: additive; L: fully interacted with centered features

enum class ImputePolicy { Zeros, ObservedMeans, Debias, Explicit };

enum class MpFallback { Error, NeymanWithinPattern, FallbackToMim };

std::string to_string(Strategy s);
std::string to_string(Model m);
Strategy strategy_from_string(const std::string& token);
Model model_from_string(const std::string& token);
MpFallback mp_fallback_from_string(const std::string& token);

struct EstimatorSpec {
    Strategy strategy = Strategy::Mim;
    Model model = Model::L;
    ImputePolicy impute = ImputePolicy::Zeros;
    Eigen::VectorXd impute_values;  // used when impute == Explicit
    CovFlavor flavor = CovFlavor::HC0;
    MpFallback mp_fallback = MpFallback::NeymanWithinPattern;
    double ci_level = 0.95;
    int mp_max_j = 12;
    bool collect_diagnostics = true;
};

/// Per-pattern bookkeeping: sizes by arm and which method produced the
/// pattern's contribution ("L", "F", or "neyman" after a size fallback).
struct PatternUse {
    std::string pattern;
    Eigen::Index n = 0;
    Eigen::Index n_treated = 0;
    Eigen::Index n_control = 0;
    std::string method;
};

struct Diagnostics {
    std::vector<std::string> dropped_columns;
    std::vector<PatternUse> patterns;
    int neyman_fallbacks = 0;
    bool fell_back_to_mim = false;
    std::optional<BalanceReport> balance;
};

struct EstimateResult {
    double estimate = 0.0;
    double se = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double p_value = 1.0;
    Diagnostics diagnostics;
};

struct WaldSummary {
    double lo = 0.0;
    double hi = 0.0;
    double p = 1.0;
};

/// Normal-quantile interval and two-sided p-value; se = 0 degenerates to a
/// point interval. Throws InputError unless level lies in (0,1).
WaldSummary wald(double estimate, double se, double level);

/// Resolves the spec's imputation policy into a constant vector.
Eigen::VectorXd resolve_constants(const ExperimentData& data, const EstimatorSpec& spec);

/// The covariate block a strategy feeds into the additive/interacted fits.
/// Defined for every strategy except the row-subsetting CompleteCase; the
/// pattern-wise Mp maps to the full pattern-interaction features.
struct FeatureBlock {
    Eigen::MatrixXd matrix;
    std::vector<std::string> names;
};

FeatureBlock strategy_feature_block(const ExperimentData& data, const EstimatorSpec& spec);

/// The one-regression design for the spec (every strategy except the
/// row-subsetting CompleteCase and the pattern-wise Mp).
DesignMatrix single_regression_design(const ExperimentData& data, const EstimatorSpec& spec);

/// Dispatch over spec.strategy.
EstimateResult estimate(const ExperimentData& data, const EstimatorSpec& spec);

EstimateResult neyman(const ExperimentData& data, const EstimatorSpec& spec = {});
EstimateResult complete_case(const ExperimentData& data, const EstimatorSpec& spec);
EstimateResult complete_covariate(const ExperimentData& data, const EstimatorSpec& spec);
EstimateResult single_imputation(const ExperimentData& data, const EstimatorSpec& spec);
EstimateResult missingness_indicator(const ExperimentData& data, const EstimatorSpec& spec);
EstimateResult missingness_pattern(const ExperimentData& data, const EstimatorSpec& spec);
EstimateResult missingness_pattern_aggregate(const ExperimentData& data, const EstimatorSpec& spec);
EstimateResult count_variant(const ExperimentData& data, const EstimatorSpec& spec);
EstimateResult cc_indicator_variant(const ExperimentData& data, const EstimatorSpec& spec);
EstimateResult second_order_variant(const ExperimentData& data, const EstimatorSpec& spec);

struct FrtResult {
    double p_value = 1.0;
    double t_observed = 0.0;
    int valid_draws = 0;
    int degenerate_draws = 0;
};

/// Studentized Fisher randomization test: redraws the assignment with the
/// arm sizes fixed, recomputes estimate/se per draw, and reports
/// (1 + #{|t_perm| >= |t_obs|}) / (valid + 1). Draws where the fit fails are
/// dropped and counted; zero-se draws count as exceedances. Per-draw streams
/// are indexed by the draw counter, so results do not depend on the worker
/// count. Throws EstimationError when fewer than 10% of draws are valid.
FrtResult frt_studentized(const ExperimentData& data, const EstimatorSpec& spec, int draws,
                          std::uint64_t seed, int threads = 0);

}  // namespace randadj
