#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "randadj/error.hpp"
#include "randadj/estimators.hpp"
#include "randadj/simulation.hpp"

using namespace randadj;

namespace {

EstimatorSpec spec_of(Strategy strategy, Model model = Model::L) {
    EstimatorSpec s;
    s.strategy = strategy;
    s.model = model;
    return s;
}

ExperimentData tiny_two_by_two() {
    ExperimentData d;
    d.outcome.resize(4);
    d.outcome << 1, 3, 0, 2;
    d.treatment.resize(4);
    d.treatment << 1, 1, 0, 0;
    d.covariates.resize(4, 0);
    d.mask.resize(4, 0);
    return d;
}

}  // namespace

TEST_CASE("difference in means with its closed-form standard error") {
    const ExperimentData d = tiny_two_by_two();
    const EstimateResult r = neyman(d);
    CHECK(r.estimate == doctest::Approx(1.0));
    // per-arm variances are both 1, so se^2 = 1/2 + 1/2
    CHECK(r.se * r.se == doctest::Approx(1.0).epsilon(1e-12));

    SUBCASE("equals the Z coefficient of the simple regression") {
        const EstimateResult via_design = estimate(d, spec_of(Strategy::Neyman));
        CHECK(via_design.estimate == doctest::Approx(r.estimate).epsilon(1e-14));
    }
    SUBCASE("constant outcome gives estimate 0 with zero se") {
        ExperimentData c = d;
        c.outcome.setConstant(5.0);
        const EstimateResult rc = neyman(c);
        CHECK(rc.estimate == doctest::Approx(0.0));
        CHECK(rc.se == 0.0);
    }
}

TEST_CASE("complete-covariate analysis with no complete column equals the difference in means") {
    ExperimentData d = testutil::random_dataset(60, 2, 0.0, 40);
    d.mask(0, 0) = 1;
    d.mask(1, 1) = 1;
    d.covariates(0, 0) = 0.0;
    d.covariates(1, 1) = 0.0;
    const EstimateResult ney = neyman(d);
    for (const Model model : {Model::F, Model::L}) {
        const EstimateResult r = complete_covariate(d, spec_of(Strategy::CompleteCovariate, model));
        CHECK(r.estimate == doctest::Approx(ney.estimate).epsilon(1e-12));
        CHECK(r.se == doctest::Approx(ney.se).epsilon(1e-12));
    }
}

TEST_CASE("with a zero mask every all-unit strategy collapses to the full-data fit") {
    const ExperimentData d = testutil::random_dataset(80, 3, 0.0, 41);
    for (const Model model : {Model::F, Model::L}) {
        const EstimateResult cc = complete_case(d, spec_of(Strategy::CompleteCase, model));
        for (const Strategy s : {Strategy::CompleteCovariate, Strategy::Imputation, Strategy::Mim,
                                 Strategy::Mp, Strategy::MpAggregate, Strategy::MissCount,
                                 Strategy::CcIndicator, Strategy::SecondOrder}) {
            const EstimateResult r = estimate(d, spec_of(s, model));
            CAPTURE(to_string(s));
            CHECK(r.estimate == doctest::Approx(cc.estimate).epsilon(1e-10));
            CHECK(r.se == doctest::Approx(cc.se).epsilon(1e-10));
        }
    }
}

TEST_CASE("complete-case analysis errors when no usable complete cases exist") {
    ExperimentData d = testutil::random_dataset(20, 1, 0.0, 42);
    d.mask.setOnes();
    d.covariates.setZero();
    CHECK_THROWS_AS(complete_case(d, spec_of(Strategy::CompleteCase)), EstimationError);
}

TEST_CASE("indicator-method estimates do not depend on the imputation constants") {
    const ExperimentData d = testutil::random_dataset(90, 3, 0.25, 43);
    for (const Model model : {Model::F, Model::L}) {
        EstimatorSpec zeros = spec_of(Strategy::Mim, model);
        EstimatorSpec shifted = zeros;
        shifted.impute = ImputePolicy::Explicit;
        shifted.impute_values = Eigen::VectorXd(3);
        shifted.impute_values << 3.5, 0.0, 1.0;
        const EstimateResult a = missingness_indicator(d, zeros);
        const EstimateResult b = missingness_indicator(d, shifted);
        CHECK(b.estimate == doctest::Approx(a.estimate).epsilon(1e-8));
        CHECK(b.se == doctest::Approx(a.se).epsilon(1e-8));

        EstimatorSpec means = zeros;
        means.impute = ImputePolicy::ObservedMeans;
        const EstimateResult c = missingness_indicator(d, means);
        CHECK(c.estimate == doctest::Approx(a.estimate).epsilon(1e-8));
    }
}

TEST_CASE("pattern-wise and aggregate estimators agree when every pattern is ample") {
    for (const Eigen::Index j : {2, 3}) {
        const ExperimentData d = testutil::ample_pattern_dataset(60, j, 44 + j);
        for (const Model model : {Model::F, Model::L}) {
            EstimatorSpec s = spec_of(Strategy::Mp, model);
            s.mp_fallback = MpFallback::Error;
            const EstimateResult mp = missingness_pattern(d, s);
            const EstimateResult agg = missingness_pattern_aggregate(d, s);
            CAPTURE(j);
            CHECK(agg.estimate == doctest::Approx(mp.estimate).epsilon(1e-8));
            CHECK(agg.se == doctest::Approx(mp.se).epsilon(1e-8));
        }
    }
}

TEST_CASE("aggregate estimator ignores the imputation constants") {
    const ExperimentData d = testutil::ample_pattern_dataset(50, 2, 47);
    EstimatorSpec zeros = spec_of(Strategy::MpAggregate, Model::L);
    EstimatorSpec shifted = zeros;
    shifted.impute = ImputePolicy::Explicit;
    shifted.impute_values = Eigen::VectorXd(2);
    shifted.impute_values << -2.5, 4.0;
    const EstimateResult a = missingness_pattern_aggregate(d, zeros);
    const EstimateResult b = missingness_pattern_aggregate(d, shifted);
    CHECK(b.estimate == doctest::Approx(a.estimate).epsilon(1e-8));
    CHECK(b.se == doctest::Approx(a.se).epsilon(1e-8));
}

TEST_CASE("J=1: pattern-wise, aggregate, and indicator estimators coincide") {
    for (std::uint64_t seed = 50; seed < 70; ++seed) {
        ExperimentData d = testutil::random_dataset(70, 1, 0.3, seed);
        const EstimateResult mim = missingness_indicator(d, spec_of(Strategy::Mim));
        const EstimateResult mp = missingness_pattern(d, spec_of(Strategy::Mp));
        const EstimateResult agg = missingness_pattern_aggregate(d, spec_of(Strategy::MpAggregate));
        CHECK(mp.estimate == doctest::Approx(mim.estimate).epsilon(1e-8));
        CHECK(mp.se == doctest::Approx(mim.se).epsilon(1e-8));
        CHECK(agg.estimate == doctest::Approx(mim.estimate).epsilon(1e-8));
    }
}

TEST_CASE("the all-missing pattern contributes its within-pattern mean difference") {
    // Two patterns: fully observed and fully missing, each with both arms.
    ExperimentData d = testutil::random_dataset(100, 2, 0.0, 71);
    for (Eigen::Index i = 60; i < 100; ++i) {
        d.mask.row(i).setOnes();
        d.covariates.row(i).setZero();
    }
    EstimatorSpec s = spec_of(Strategy::Mp, Model::L);
    s.mp_fallback = MpFallback::Error;
    const EstimateResult mp = missingness_pattern(d, s);

    // independent recomputation: rho-weighted pattern estimates
    std::vector<Eigen::Index> complete, missing;
    for (Eigen::Index i = 0; i < 100; ++i) {
        (d.mask(i, 0) ? missing : complete).push_back(i);
    }
    const ExperimentData dc = subset(d, complete);
    const ExperimentData dm = subset(d, missing);
    const double tau_c = estimate(dc, spec_of(Strategy::Imputation, Model::L)).estimate;
    const double tau_m = neyman(dm).estimate;
    const double expected = 0.6 * tau_c + 0.4 * tau_m;
    CHECK(mp.estimate == doctest::Approx(expected).epsilon(1e-10));

    REQUIRE(mp.diagnostics.patterns.size() == 2);
    CHECK(mp.diagnostics.patterns[1].pattern == "11");
}

TEST_CASE("mp fallback policies") {
    // pattern "01" holds units {0,1,2} with one treated unit, so the
    // interacted fit needs min arm >= 2 and fails its threshold
    ExperimentData d = testutil::random_dataset(40, 2, 0.0, 72);
    for (Eigen::Index i = 0; i < 3; ++i) {
        d.mask(i, 1) = 1;
        d.covariates(i, 1) = 0.0;
        d.treatment(i) = i == 0 ? 1 : 0;
    }
    EstimatorSpec s = spec_of(Strategy::Mp, Model::L);

    SUBCASE("error policy names the pattern and sizes") {
        s.mp_fallback = MpFallback::Error;
        CHECK_THROWS_WITH_AS(missingness_pattern(d, s), doctest::Contains("pattern 01"),
                             EstimationError);
    }
    SUBCASE("neyman policy substitutes the within-pattern mean difference") {
        s.mp_fallback = MpFallback::NeymanWithinPattern;
        const EstimateResult r = missingness_pattern(d, s);
        CHECK(r.diagnostics.neyman_fallbacks == 1);
        CHECK_FALSE(r.diagnostics.fell_back_to_mim);
    }
    SUBCASE("indicator policy abandons the pattern route") {
        s.mp_fallback = MpFallback::FallbackToMim;
        const EstimateResult r = missingness_pattern(d, s);
        const EstimateResult mim = missingness_indicator(d, s);
        CHECK(r.diagnostics.fell_back_to_mim);
        CHECK(r.estimate == doctest::Approx(mim.estimate).epsilon(1e-12));
    }
    SUBCASE("an empty-arm pattern escalates past the neyman policy") {
        ExperimentData e = d;
        e.treatment(0) = 0;  // every pattern-01 unit now sits in control
        s.mp_fallback = MpFallback::NeymanWithinPattern;
        const EstimateResult r = missingness_pattern(e, s);
        CHECK(r.diagnostics.fell_back_to_mim);
    }
}

TEST_CASE("restricted variants") {
    SUBCASE("zero mask: the scalar summaries are constant and prune away") {
        const ExperimentData d = testutil::random_dataset(50, 2, 0.0, 73);
        const EstimateResult imp = single_imputation(d, spec_of(Strategy::Imputation));
        const EstimateResult mc = count_variant(d, spec_of(Strategy::MissCount));
        const EstimateResult cim = cc_indicator_variant(d, spec_of(Strategy::CcIndicator));
        CHECK(mc.estimate == doctest::Approx(imp.estimate).epsilon(1e-10));
        CHECK(cim.estimate == doctest::Approx(imp.estimate).epsilon(1e-10));
    }
    SUBCASE("J=1: count, complete-case-indicator, and mim spans coincide") {
        const ExperimentData d = testutil::random_dataset(60, 1, 0.3, 74);
        const double mim = missingness_indicator(d, spec_of(Strategy::Mim)).estimate;
        CHECK(count_variant(d, spec_of(Strategy::MissCount)).estimate ==
              doctest::Approx(mim).epsilon(1e-8));
        CHECK(cc_indicator_variant(d, spec_of(Strategy::CcIndicator)).estimate ==
              doctest::Approx(mim).epsilon(1e-8));
    }
    SUBCASE("second-order features are not c-invariant but fit cleanly") {
        const ExperimentData d = testutil::random_dataset(120, 3, 0.25, 75);
        CHECK_NOTHROW(second_order_variant(d, spec_of(Strategy::SecondOrder)));
    }
}

TEST_CASE("wald inference") {
    SUBCASE("zero se degenerates to a point interval") {
        const WaldSummary w = wald(1.5, 0.0, 0.95);
        CHECK(w.lo == 1.5);
        CHECK(w.hi == 1.5);
        CHECK(w.p == 0.0);
    }
    SUBCASE("published-style rounding: estimate 0.112, se 0.039 gives p 0.004") {
        const WaldSummary w = wald(0.112, 0.039, 0.95);
        CHECK(std::round(w.p * 1000.0) / 1000.0 == doctest::Approx(0.004));
    }
    SUBCASE("the 95% interval uses the 1.96 quantile") {
        const WaldSummary w = wald(0.0, 1.0, 0.95);
        CHECK(w.lo == doctest::Approx(-1.959964).epsilon(1e-6));
        CHECK(w.hi == doctest::Approx(1.959964).epsilon(1e-6));
    }
    SUBCASE("level outside (0,1) is rejected") {
        CHECK_THROWS_AS(wald(0.0, 1.0, 0.0), InputError);
        CHECK_THROWS_AS(wald(0.0, 1.0, 1.0), InputError);
    }
}

TEST_CASE("interacted estimate decomposes into the mean difference minus the slope correction") {
    const ExperimentData d = testutil::random_dataset(100, 2, 0.0, 76);
    const Eigen::Index n = d.n();
    const double tau_n = neyman(d).estimate;

    // per-arm slope fits y ~ 1 + x via the normal equations
    Eigen::VectorXd slope[2];
    double e[2];
    for (int arm = 0; arm < 2; ++arm) {
        std::vector<Eigen::Index> rows;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (d.treatment(i) == arm) rows.push_back(i);
        }
        const auto m = static_cast<Eigen::Index>(rows.size());
        e[arm] = static_cast<double>(m) / static_cast<double>(n);
        Eigen::MatrixXd x(m, 3);
        Eigen::VectorXd y(m);
        for (Eigen::Index r = 0; r < m; ++r) {
            x(r, 0) = 1.0;
            x.row(r).tail(2) = d.covariates.row(rows[static_cast<std::size_t>(r)]);
            y(r) = d.outcome(rows[static_cast<std::size_t>(r)]);
        }
        slope[arm] = x.colPivHouseholderQr().solve(y).tail(2);
    }
    Eigen::VectorXd tau_x(2);
    Eigen::VectorXd mean1 = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd mean0 = Eigen::VectorXd::Zero(2);
    for (Eigen::Index i = 0; i < n; ++i) {
        (d.treatment(i) ? mean1 : mean0) += d.covariates.row(i).transpose();
    }
    mean1 /= e[1] * n;
    mean0 /= e[0] * n;
    tau_x = mean1 - mean0;

    const Eigen::VectorXd gamma_l = e[0] * slope[1] + e[1] * slope[0];
    const double expected = tau_n - tau_x.dot(gamma_l);
    const double actual = single_imputation(d, spec_of(Strategy::Imputation, Model::L)).estimate;
    CHECK(actual == doctest::Approx(expected).epsilon(1e-8));
}

TEST_CASE("estimates are invariant to per-column rescaling of the covariates") {
    ExperimentData d = testutil::random_dataset(90, 2, 0.2, 77);
    ExperimentData scaled = d;
    const double a1 = 2.5, a2 = -0.4;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        if (!scaled.mask(i, 0)) scaled.covariates(i, 0) *= a1;
        if (!scaled.mask(i, 1)) scaled.covariates(i, 1) *= a2;
    }
    for (const Strategy s :
         {Strategy::CompleteCovariate, Strategy::Imputation, Strategy::Mim, Strategy::Mp}) {
        for (const Model model : {Model::F, Model::L}) {
            CAPTURE(to_string(s));
            const double base = estimate(d, spec_of(s, model)).estimate;
            const double transformed = estimate(scaled, spec_of(s, model)).estimate;
            CHECK(transformed == doctest::Approx(base).epsilon(1e-8));
        }
    }
}

TEST_CASE("estimate() validates preconditions through its strategies") {
    ExperimentData d = testutil::random_dataset(30, 1, 0.1, 78);
    EstimatorSpec s = spec_of(Strategy::Imputation);
    s.impute = ImputePolicy::Explicit;
    s.impute_values = Eigen::VectorXd::Zero(4);  // wrong length
    CHECK_THROWS_AS(estimate(d, s), InputError);
}
