#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "randadj/error.hpp"
#include "randadj/missingness.hpp"
#include "randadj/ols.hpp"
#include "randadj/simulation.hpp"

using namespace randadj;

namespace {

// Residual of projecting each column of `small` on the span of `big`
// (with an intercept); near-zero means span containment.
double containment_residual(const Eigen::MatrixXd& small, const Eigen::MatrixXd& big) {
    Eigen::MatrixXd basis(big.rows(), big.cols() + 1);
    basis.col(0).setOnes();
    basis.rightCols(big.cols()) = big;
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(basis)
                                  .householderQ() *
                              Eigen::MatrixXd::Identity(big.rows(), basis.cols());
    double worst = 0.0;
    for (Eigen::Index c = 0; c < small.cols(); ++c) {
        const Eigen::VectorXd v = small.col(c);
        const Eigen::VectorXd r = v - q * (q.transpose() * v);
        worst = std::max(worst, r.norm() / std::max(1.0, v.norm()));
    }
    return worst;
}

}  // namespace

TEST_CASE("impute fills masked cells with the column constant") {
    ExperimentData d = testutil::random_dataset(6, 2, 0.0, 1);
    d.mask(0, 1) = 1;
    d.covariates(0, 0) = 1.5;
    d.covariates(0, 1) = 0.0;
    Eigen::VectorXd c(2);
    c << 0.0, 0.0;
    const ImputedCovariates zero = impute(d, c);
    CHECK(zero.values(0, 0) == 1.5);
    CHECK(zero.values(0, 1) == 0.0);

    c << 7.0, -3.0;
    const ImputedCovariates other = impute(d, c);
    CHECK(other.values(0, 1) == -3.0);
    CHECK(other.values(0, 0) == 1.5);  // observed cells untouched

    SUBCASE("zero mask makes impute the identity for any c") {
        ExperimentData full = testutil::random_dataset(10, 2, 0.0, 2);
        CHECK(impute(full, c).values == full.covariates);
    }
    SUBCASE("length mismatch") {
        CHECK_THROWS_AS(impute(d, Eigen::VectorXd::Zero(3)), InputError);
    }
}

TEST_CASE("observed_means") {
    ExperimentData d = testutil::random_dataset(3, 1, 0.0, 3);
    d.covariates << 1.0, 0.0, 3.0;
    d.mask << 0, 1, 0;
    CHECK(observed_means(d)(0) == doctest::Approx(2.0));

    SUBCASE("zero mask gives ordinary column means") {
        const ExperimentData full = testutil::random_dataset(40, 3, 0.0, 4);
        const Eigen::VectorXd m = observed_means(full);
        CHECK((m - full.covariates.colwise().mean().transpose()).norm() < 1e-12);
    }
    SUBCASE("a single observed value is returned as is") {
        ExperimentData one = testutil::random_dataset(3, 1, 0.0, 5);
        one.covariates << 0.0, 9.25, 0.0;
        one.mask << 1, 0, 1;
        CHECK(observed_means(one)(0) == 9.25);
    }
    SUBCASE("fully-missing column errors") {
        ExperimentData none = testutil::random_dataset(3, 1, 0.0, 6);
        none.mask.setOnes();
        none.covariates.setZero();
        CHECK_THROWS_AS(observed_means(none), EstimationError);
    }
    SUBCASE("observed-mean imputation reproduces the column averages") {
        ExperimentData d2 = testutil::random_dataset(50, 2, 0.3, 7);
        const Eigen::VectorXd m = observed_means(d2);
        const ImputedCovariates imp = impute(d2, m);
        for (Eigen::Index i = 0; i < d2.n(); ++i) {
            for (Eigen::Index c = 0; c < 2; ++c) {
                if (d2.mask(i, c)) CHECK(imp.values(i, c) == m(c));
            }
        }
    }
}

TEST_CASE("mim_features") {
    SUBCASE("zero mask yields no indicator columns") {
        const ExperimentData d = testutil::random_dataset(20, 3, 0.0, 8);
        const MimFeatures f = mim_features(d, Eigen::VectorXd::Zero(3));
        CHECK(f.matrix.cols() == 3);
        CHECK(f.n_indicators == 0);
    }
    SUBCASE("one incomplete column adds one indicator") {
        ExperimentData d = testutil::random_dataset(20, 2, 0.0, 9);
        d.mask(3, 1) = 1;
        d.covariates(3, 1) = 0.0;
        const MimFeatures f = mim_features(d, Eigen::VectorXd::Zero(2));
        CHECK(f.matrix.cols() == 3);
        CHECK(f.names.back() == "M:x2");
    }
    SUBCASE("identical indicator columns are deduplicated, first kept") {
        ExperimentData d = testutil::random_dataset(20, 3, 0.0, 10);
        for (Eigen::Index i = 0; i < 20; i += 4) {
            d.mask(i, 1) = d.mask(i, 2) = 1;
            d.covariates(i, 1) = d.covariates(i, 2) = 0.0;
        }
        const MimFeatures f = mim_features(d, Eigen::VectorXd::Zero(3));
        CHECK(f.n_indicators == 1);
        CHECK(f.names.back() == "M:x2");
    }
}

TEST_CASE("mp_features") {
    SUBCASE("J=1 spans exactly the indicator-augmented features") {
        ExperimentData d = testutil::random_dataset(30, 1, 0.3, 11);
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
        const MpFeatures u = mp_features(d, zero);
        const MimFeatures m = mim_features(d, zero);
        CHECK(u.matrix.cols() == 3);  // x, M, x*M
        CHECK(containment_residual(u.matrix, m.matrix) < 1e-10);
        CHECK(containment_residual(m.matrix, u.matrix) < 1e-10);
    }
    SUBCASE("J=2 retained span matches the expected label set") {
        const ExperimentData d = testutil::ample_pattern_dataset(40, 2, 12);
        const MpFeatures u = mp_features(d, Eigen::VectorXd::Zero(2));
        Eigen::MatrixXd with_ones(d.n(), u.matrix.cols() + 1);
        with_ones.col(0).setOnes();
        with_ones.rightCols(u.matrix.cols()) = u.matrix;
        const std::vector<Eigen::Index> kept = independent_columns(with_ones);
        std::vector<std::string> retained;
        for (const Eigen::Index c : kept) {
            if (c > 0) retained.push_back(u.labels[static_cast<std::size_t>(c - 1)]);
        }
        const std::vector<std::string> expected = {"x1",       "x2",       "M:x1",
                                                   "M:x2",     "M:x1*M:x2", "x1*M:x2",
                                                   "x2*M:x1"};
        CHECK(retained == expected);
    }
    SUBCASE("zero mask reduces to the raw covariates after pruning") {
        const ExperimentData d = testutil::random_dataset(25, 2, 0.0, 13);
        const MpFeatures u = mp_features(d, Eigen::VectorXd::Zero(2));
        Eigen::MatrixXd with_ones(d.n(), u.matrix.cols() + 1);
        with_ones.col(0).setOnes();
        with_ones.rightCols(u.matrix.cols()) = u.matrix;
        const std::vector<Eigen::Index> kept = independent_columns(with_ones);
        CHECK(kept == std::vector<Eigen::Index>{0, 1, 2});
    }
    SUBCASE("dimension cap") {
        const ExperimentData d = testutil::random_dataset(30, 5, 0.2, 14);
        CHECK_THROWS_AS(mp_features(d, Eigen::VectorXd::Zero(5), 4), EstimationError);
    }
}

TEST_CASE("feature spans are nested: ccov within imp within mim within mp") {
    const ExperimentData d = testutil::random_dataset(120, 3, 0.25, 15);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
    const Eigen::MatrixXd imp = impute(d, zero).values;
    const MimFeatures mim = mim_features(d, zero);
    const MpFeatures mp = mp_features(d, zero);

    const auto ccov = complete_covariate_set(d);
    Eigen::MatrixXd ccov_block(d.n(), static_cast<Eigen::Index>(ccov.indices.size()));
    for (std::size_t c = 0; c < ccov.indices.size(); ++c) {
        ccov_block.col(static_cast<Eigen::Index>(c)) = d.covariates.col(ccov.indices[c]);
    }

    CHECK(containment_residual(ccov_block, imp) < 1e-8);
    CHECK(containment_residual(imp, mim.matrix) < 1e-8);
    CHECK(containment_residual(mim.matrix, mp.matrix) < 1e-8);
}

TEST_CASE("deduplicated indicator block has full column rank") {
    ExperimentData d = testutil::random_dataset(60, 4, 0.3, 16);
    const MimFeatures f = mim_features(d, Eigen::VectorXd::Zero(4));
    const Eigen::MatrixXd indicators = f.matrix.rightCols(f.n_indicators);
    CHECK(static_cast<Eigen::Index>(independent_columns(indicators).size()) == f.n_indicators);
}

TEST_CASE("count_and_cc_scalars") {
    ExperimentData d = testutil::random_dataset(3, 2, 0.0, 17);
    d.mask << 0, 0, 1, 1, 0, 1;
    d.covariates = (1 - d.mask.array()).cast<double>() * d.covariates.array();
    const UnitScalars s = count_and_cc_scalars(d);
    CHECK(s.observed_count(0) == 2.0);
    CHECK(s.complete_case(0) == 1.0);
    CHECK(s.observed_count(1) == 0.0);
    CHECK(s.complete_case(1) == 0.0);
    CHECK(s.observed_count(2) == 1.0);
    CHECK(s.complete_case(2) == 0.0);
}

TEST_CASE("balance_check") {
    SUBCASE("identical masks across arms give zero differences") {
        ExperimentData d = testutil::random_dataset(40, 2, 0.0, 18);
        for (Eigen::Index i = 0; i < 40; ++i) d.treatment(i) = i % 2;
        for (Eigen::Index i = 0; i < 40; i += 2) {
            d.mask(i, 0) = d.mask(i + 1, 0) = 1;  // same rate in both arms
            d.covariates(i, 0) = d.covariates(i + 1, 0) = 0.0;
        }
        const BalanceReport r = balance_check(d);
        CHECK(r.difference(0) == doctest::Approx(0.0));
        CHECK(r.z_statistic(0) == doctest::Approx(0.0));
    }
    SUBCASE("all-treated missing gives difference one") {
        ExperimentData d = testutil::random_dataset(30, 1, 0.0, 19);
        for (Eigen::Index i = 0; i < 30; ++i) {
            if (d.treatment(i) == 1) {
                d.mask(i, 0) = 1;
                d.covariates(i, 0) = 0.0;
            }
        }
        const BalanceReport r = balance_check(d);
        CHECK(r.difference(0) == doctest::Approx(1.0));
    }
    SUBCASE("z statistics are roughly standard normal under balanced missingness") {
        // Monte Carlo over assignments of a fixed population.
        const PotentialPopulation pop = gen_scenario(Scenario::I, 400, 100);
        Rng master(101);
        double sum = 0.0, sumsq = 0.0;
        const int reps = 400;
        for (int r = 0; r < reps; ++r) {
            Rng rng = Rng::substream(101, static_cast<std::uint64_t>(r));
            const ExperimentData data = reveal(pop, complete_randomization(400, 80, rng));
            const double z = balance_check(data).z_statistic(1);
            sum += z;
            sumsq += z * z;
        }
        const double mean = sum / reps;
        const double sd = std::sqrt(sumsq / reps - mean * mean);
        CHECK(std::fabs(mean) < 0.2);
        CHECK(sd == doctest::Approx(1.0).epsilon(0.2));
    }
}

TEST_CASE("debias_constants") {
    SUBCASE("hand-built six-unit dataset matches the arithmetic") {
        ExperimentData d;
        d.outcome.resize(6);
        d.outcome << 1, 2, 3, 4, 5, 6;
        d.treatment.resize(6);
        d.treatment << 1, 1, 1, 0, 0, 0;
        d.covariates.resize(6, 1);
        d.covariates << 2.0, 4.0, 0.0, 1.0, 0.0, 0.0;
        d.mask.resize(6, 1);
        d.mask << 0, 0, 1, 0, 1, 1;
        d.covariate_names = {"x1"};
        // treated: observed {2,4}, rate 2/3, mean-sum 6/3; control: observed {1}, rate 1/3.
        // c = (6/3 - 1/3) / (2/3 - 1/3) = (5/3) / (1/3) = 5.
        const Eigen::VectorXd c = debias_constants(d);
        CHECK(c(0) == doctest::Approx(5.0).epsilon(1e-12));
    }
    SUBCASE("equal arm-wise observed rates error, naming the column") {
        ExperimentData d = testutil::random_dataset(8, 2, 0.0, 20);
        for (Eigen::Index i = 0; i < 8; ++i) d.treatment(i) = i % 2;
        // column 1: same single missing cell per arm -> equal rates
        d.mask(0, 0) = d.mask(1, 0) = 1;
        d.covariates(0, 0) = d.covariates(1, 0) = 0.0;
        CHECK_THROWS_WITH_AS(debias_constants(d), doctest::Contains("x1"), EstimationError);
    }
    SUBCASE("a complete column has a zero denominator and errors") {
        ExperimentData d = testutil::random_dataset(10, 1, 0.0, 21);
        CHECK_THROWS_AS(debias_constants(d), EstimationError);
    }
}
