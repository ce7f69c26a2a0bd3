#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "randadj/dataset.hpp"
#include "randadj/estimators.hpp"
#include "randadj/rng.hpp"

namespace randadj {

/// A fixed finite population of potential outcomes. Under
/// treatment-independent missingness mask0 == mask1 and the missingness
/// indicators behave as ordinary pretreatment covariates.
struct PotentialPopulation {
    Eigen::VectorXd y0;
    Eigen::VectorXd y1;
    Eigen::MatrixXd covariates;
    Eigen::MatrixXi mask0;
    Eigen::MatrixXi mask1;
    Eigen::VectorXd latent;  // class indicator used by the generators; may be empty
    double tau = 0.0;

    Eigen::Index n() const { return y0.size(); }
    Eigen::Index n_covariates() const { return covariates.cols(); }
    bool treatment_independent_missingness() const { return mask0 == mask1; }
};

/// Uniform draw over all arrangements with exactly n1 ones.
Eigen::VectorXi complete_randomization(Eigen::Index n, Eigen::Index n1, Rng& rng);
Eigen::VectorXi complete_randomization(Eigen::Index n, Eigen::Index n1, std::uint64_t seed);

/// Observed data for the given assignment: the assigned arm's outcome and
/// missingness are revealed and masked covariate payloads are zeroed.
ExperimentData reveal(const PotentialPopulation& pop, const Eigen::VectorXi& assignment);

enum class Scenario { I, II, III };

Scenario scenario_from_string(const std::string& token);

/// Three-covariate benchmark populations: a latent severity class drives both
/// the covariates and the missingness of covariates 2-3 (covariate 1 is
/// always observed; missingness is identical across arms); the three
/// scenarios vary how strongly the missingness indicators and their
/// interactions enter the outcome means. Potential outcomes are centered so
/// tau = 0. Requires n >= 50.
PotentialPopulation gen_scenario(Scenario which, Eigen::Index n, std::uint64_t seed);

/// Population whose missingness depends on the assignment: each covariate
/// cell is missing under control with the baseline rate and under treatment
/// with the baseline rate plus `effect_on_missingness` (coupled draws, so
/// effect 0 gives identical masks).
PotentialPopulation gen_treatment_dependent(Eigen::Index n, std::uint64_t seed,
                                            double effect_on_missingness);

/// Finite-population limit of N * Var for the strategy's estimator, computed
/// exactly from population projections (imputation strategies evaluated at
/// constants 0). Requires treatment-independent missingness; `n1` fixes the
/// treated arm size entering e0/e1.
double oracle_variance(const PotentialPopulation& pop, Strategy strategy, Model model,
                       Eigen::Index n1);

struct CcBias {
    double tau_cc = 0.0;   // effect among complete cases
    double tau_ic = 0.0;   // effect among incomplete cases
    double bias = 0.0;     // tau_cc - tau
    double s_c_tau = 0.0;  // finite-population covariance of (C_i, tau_i)
};

/// Exact complete-case bias decomposition; requires treatment-independent
/// missingness and at least one complete case.
CcBias oracle_cc_bias(const PotentialPopulation& pop);

struct McSpec {
    std::string name;
    EstimatorSpec spec;
};

struct McSpecSummary {
    std::string name;
    EstimatorSpec spec;
    std::vector<double> estimates;      // per replicate; NaN where the fit failed
    std::vector<double> ses;
    std::vector<std::uint8_t> covered;  // CI covers tau
    std::vector<std::uint8_t> ok;
    Eigen::Index n_ok = 0;
    double mean_bias = 0.0;
    double sd = 0.0;
    double rmse = 0.0;
    double mean_se = 0.0;
    double coverage = 0.0;
    double mcse_bias = 0.0;      // sd / sqrt(n_ok)
    double mcse_sd = 0.0;        // batch means, 20 batches
    double mcse_coverage = 0.0;  // binomial
};

struct McSummary {
    double tau = 0.0;
    Eigen::Index reps = 0;
    Eigen::Index n1 = 0;
    std::vector<McSpecSummary> per_spec;
};

struct McOptions {
    Eigen::Index n1 = 0;  // 0: default design with a 0.2 treated share
    int threads = 0;      // 0: default_threads()
};

/// Repeated assignment draws over a fixed population. Replicate r uses the
/// substream (seed, r), so the output is identical for any worker count.
/// A spec failing on more than half the replicates aborts with diagnostics.
McSummary monte_carlo(const PotentialPopulation& pop, const std::vector<McSpec>& specs,
                      Eigen::Index reps, std::uint64_t seed, const McOptions& options = {});

/// Replicate-level dump: rep, strategy, model, estimate, se, ci_lo, ci_hi, covered.
void write_replicates_csv(const std::string& path, const McSummary& summary);

/// Per-estimator summary table as CSV.
void write_summary_csv(const std::string& path, const McSummary& summary);

}  // namespace randadj
