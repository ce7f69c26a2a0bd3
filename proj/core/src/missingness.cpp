#include "randadj/missingness.hpp"

#include <bit>
#include <cmath>
#include <cstdint>

#include "randadj/error.hpp"

namespace randadj {

ImputedCovariates impute(const ExperimentData& data, const Eigen::VectorXd& constants) {
    if (constants.size() != data.n_covariates()) {
        throw InputError("impute: constants length must equal the covariate count");
    }
    if (!constants.allFinite()) throw InputError("impute: constants must be finite");
    ImputedCovariates out;
    out.constants = constants;
    // Masked cells store 0, so adding M * diag(c) imputes them in place.
    out.values = data.covariates + data.mask.cast<double>() * constants.asDiagonal();
    return out;
}

Eigen::VectorXd observed_means(const ExperimentData& data) {
    const Eigen::Index j = data.n_covariates();
    Eigen::VectorXd means(j);
    for (Eigen::Index c = 0; c < j; ++c) {
        const double observed = data.n() - data.mask.col(c).sum();
        if (observed == 0) {
            throw EstimationError("observed_means: covariate '" + data.covariate_names[c] +
                                  "' has no observed values");
        }
        means(c) = data.covariates.col(c).sum() / observed;
    }
    return means;
}

MimFeatures mim_features(const ExperimentData& data, const Eigen::VectorXd& constants) {
    const ImputedCovariates imp = impute(data, constants);
    const Eigen::Index n = data.n();
    const Eigen::Index j = data.n_covariates();

    std::vector<Eigen::Index> indicator_cols;
    for (Eigen::Index c = 0; c < j; ++c) {
        if (data.mask.col(c).sum() == 0) continue;
        bool duplicate = false;
        for (Eigen::Index prior : indicator_cols) {
            if (data.mask.col(c) == data.mask.col(prior)) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) indicator_cols.push_back(c);
    }

    MimFeatures out;
    out.n_indicators = static_cast<Eigen::Index>(indicator_cols.size());
    out.matrix.resize(n, j + out.n_indicators);
    out.matrix.leftCols(j) = imp.values;
    out.names = data.covariate_names;
    for (Eigen::Index k = 0; k < out.n_indicators; ++k) {
        const Eigen::Index c = indicator_cols[static_cast<std::size_t>(k)];
        out.matrix.col(j + k) = data.mask.col(c).cast<double>();
        out.names.push_back("M:" + data.covariate_names[c]);
    }
    return out;
}

MpFeatures mp_features(const ExperimentData& data, const Eigen::VectorXd& constants, int max_j) {
    const Eigen::Index j = data.n_covariates();
    if (j > max_j) {
        throw EstimationError("mp_features: " + std::to_string(j) + " covariates exceed the cap " +
                              std::to_string(max_j) + " (feature count is (J+1)*2^J - 1)");
    }
    const ImputedCovariates imp = impute(data, constants);
    const Eigen::Index n = data.n();
    const auto n_subsets = static_cast<Eigen::Index>(1) << j;  // includes the empty subset

    // f_s for subset s: product of M_ij over the bits of s (covariate 1 = bit 0).
    Eigen::MatrixXd f(n, n_subsets);
    std::vector<std::string> f_label(static_cast<std::size_t>(n_subsets));
    f.col(0).setOnes();
    for (Eigen::Index s = 1; s < n_subsets; ++s) {
        const Eigen::Index lowest = s & -s;
        const auto bit = static_cast<Eigen::Index>(std::countr_zero(static_cast<std::uint64_t>(s)));
        f.col(s) = f.col(s ^ lowest).cwiseProduct(data.mask.col(bit).cast<double>());
        std::string label;
        for (Eigen::Index b = 0; b < j; ++b) {
            if ((s >> b) & 1) {
                if (!label.empty()) label += "*";
                label += "M:" + data.covariate_names[static_cast<std::size_t>(b)];
            }
        }
        f_label[static_cast<std::size_t>(s)] = label;
    }

    MpFeatures out;
    out.n_imputed = j;
    out.n_indicator = n_subsets - 1;
    out.matrix.resize(n, (j + 1) * n_subsets - 1);
    out.labels.reserve(static_cast<std::size_t>(out.matrix.cols()));

    out.matrix.leftCols(j) = imp.values;
    for (Eigen::Index c = 0; c < j; ++c) out.labels.push_back(data.covariate_names[c]);

    out.matrix.middleCols(j, out.n_indicator) = f.rightCols(out.n_indicator);
    for (Eigen::Index s = 1; s < n_subsets; ++s) {
        out.labels.push_back(f_label[static_cast<std::size_t>(s)]);
    }

    Eigen::Index col = j + out.n_indicator;
    for (Eigen::Index c = 0; c < j; ++c) {
        for (Eigen::Index s = 1; s < n_subsets; ++s) {
            out.matrix.col(col++) = imp.values.col(c).cwiseProduct(f.col(s));
            out.labels.push_back(data.covariate_names[c] + "*" +
                                 f_label[static_cast<std::size_t>(s)]);
        }
    }
    return out;
}

UnitScalars count_and_cc_scalars(const ExperimentData& data) {
    const Eigen::Index n = data.n();
    const Eigen::Index j = data.n_covariates();
    UnitScalars out;
    out.observed_count.resize(n);
    out.complete_case.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index missing = data.mask.row(i).sum();
        out.observed_count(i) = static_cast<double>(j - missing);
        out.complete_case(i) = missing == 0 ? 1.0 : 0.0;
    }
    return out;
}

namespace {

double two_proportion_z(double p1, double p0, double n1, double n0) {
    const double pooled = (p1 * n1 + p0 * n0) / (n1 + n0);
    const double denom = std::sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n0));
    if (denom == 0.0) return 0.0;
    return (p1 - p0) / denom;
}

}  // namespace

BalanceReport balance_check(const ExperimentData& data) {
    const Eigen::Index j = data.n_covariates();
    const auto n1 = static_cast<double>(data.n_treated());
    const auto n0 = static_cast<double>(data.n_control());

    BalanceReport report;
    report.rate_treated.resize(j);
    report.rate_control.resize(j);
    report.difference.resize(j);
    report.z_statistic.resize(j);

    const UnitScalars scalars = count_and_cc_scalars(data);
    double cc1 = 0.0;
    double cc0 = 0.0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        (data.treatment(i) == 1 ? cc1 : cc0) += scalars.complete_case(i);
    }
    report.cc_rate_treated = cc1 / n1;
    report.cc_rate_control = cc0 / n0;
    report.cc_difference = report.cc_rate_treated - report.cc_rate_control;
    report.cc_z_statistic =
        two_proportion_z(report.cc_rate_treated, report.cc_rate_control, n1, n0);

    for (Eigen::Index c = 0; c < j; ++c) {
        double m1 = 0.0;
        double m0 = 0.0;
        for (Eigen::Index i = 0; i < data.n(); ++i) {
            (data.treatment(i) == 1 ? m1 : m0) += data.mask(i, c);
        }
        report.rate_treated(c) = m1 / n1;
        report.rate_control(c) = m0 / n0;
        report.difference(c) = report.rate_treated(c) - report.rate_control(c);
        report.z_statistic(c) =
            two_proportion_z(report.rate_treated(c), report.rate_control(c), n1, n0);
    }
    return report;
}

Eigen::VectorXd debias_constants(const ExperimentData& data) {
    const Eigen::Index j = data.n_covariates();
    const auto n1 = static_cast<double>(data.n_treated());
    const auto n0 = static_cast<double>(data.n_control());

    Eigen::VectorXd constants(j);
    std::string degenerate;
    for (Eigen::Index c = 0; c < j; ++c) {
        double a1 = 0.0, a0 = 0.0;    // observed-cell rates by arm
        double ax1 = 0.0, ax0 = 0.0;  // observed-cell covariate means by arm
        for (Eigen::Index i = 0; i < data.n(); ++i) {
            const double available = 1.0 - data.mask(i, c);
            const double value = available * data.covariates(i, c);
            if (data.treatment(i) == 1) {
                a1 += available;
                ax1 += value;
            } else {
                a0 += available;
                ax0 += value;
            }
        }
        const double denom = a1 / n1 - a0 / n0;
        // Rates are multiples of 1/N_z, so a tiny threshold only flags exact ties.
        if (std::fabs(denom) < 1e-9) {
            if (!degenerate.empty()) degenerate += ", ";
            degenerate += data.covariate_names[c];
            constants(c) = 0.0;
            continue;
        }
        constants(c) = (ax1 / n1 - ax0 / n0) / denom;
    }
    if (!degenerate.empty()) {
        throw EstimationError(
            "debias_constants: equal arm-wise observed rates leave the bias unremovable for "
            "columns: " + degenerate);
    }
    return constants;
}

}  // namespace randadj
