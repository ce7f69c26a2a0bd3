#include "randadj/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "randadj/error.hpp"
#include "randadj/parallel.hpp"
#include "randadj/rng.hpp"
#include "randadj/simulation.hpp"
#include "randadj/stats.hpp"

namespace randadj {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Neyman: return "neyman";
        case Strategy::CompleteCase: return "cc";
        case Strategy::CompleteCovariate: return "ccov";
        case Strategy::Imputation: return "imp";
        case Strategy::Mim: return "mim";
        case Strategy::Mp: return "mp";
        case Strategy::MpAggregate: return "mp_aggregate";
        case Strategy::MissCount: return "mc";
        case Strategy::CcIndicator: return "cim";
        case Strategy::SecondOrder: return "mim2";
    }
    return "?";
}

std::string to_string(Model m) {
    return m == Model::F ? "F" : "L";
}

Strategy strategy_from_string(const std::string& token) {
    if (token == "neyman") return Strategy::Neyman;
    if (token == "cc") return Strategy::CompleteCase;
    if (token == "ccov") return Strategy::CompleteCovariate;
    if (token == "imp") return Strategy::Imputation;
    if (token == "mim") return Strategy::Mim;
    if (token == "mp") return Strategy::Mp;
    if (token == "mp_aggregate") return Strategy::MpAggregate;
    if (token == "mc") return Strategy::MissCount;
    if (token == "cim") return Strategy::CcIndicator;
    if (token == "mim2") return Strategy::SecondOrder;
    throw InputError("unknown strategy '" + token + "'");
}

Model model_from_string(const std::string& token) {
    if (token == "F" || token == "f") return Model::F;
    if (token == "L" || token == "l") return Model::L;
    throw InputError("unknown model '" + token + "' (expected F or L)");
}

MpFallback mp_fallback_from_string(const std::string& token) {
    if (token == "error") return MpFallback::Error;
    if (token == "neyman") return MpFallback::NeymanWithinPattern;
    if (token == "mim") return MpFallback::FallbackToMim;
    throw InputError("unknown mp fallback '" + token + "' (expected error|neyman|mim)");
}

WaldSummary wald(double estimate, double se, double level) {
    if (!(level > 0.0 && level < 1.0)) {
        throw InputError("confidence level must lie strictly in (0,1)");
    }
    WaldSummary w;
    if (se == 0.0) {
        w.lo = w.hi = estimate;
        w.p = estimate == 0.0 ? 1.0 : 0.0;
        return w;
    }
    const double z = normal_quantile(0.5 + level / 2.0);
    w.lo = estimate - z * se;
    w.hi = estimate + z * se;
    w.p = two_sided_normal_p(estimate / se);
    return w;
}

Eigen::VectorXd resolve_constants(const ExperimentData& data, const EstimatorSpec& spec) {
    switch (spec.impute) {
        case ImputePolicy::Zeros: return Eigen::VectorXd::Zero(data.n_covariates());
        case ImputePolicy::ObservedMeans: return observed_means(data);
        case ImputePolicy::Debias: return debias_constants(data);
        case ImputePolicy::Explicit:
            if (spec.impute_values.size() != data.n_covariates()) {
                throw InputError("impute constants length must equal the covariate count");
            }
            return spec.impute_values;
    }
    throw InternalError("unreachable impute policy");
}

namespace {

struct TreatmentFit {
    double estimate = 0.0;
    double se = 0.0;
    std::vector<std::string> dropped;
};

TreatmentFit fit_treatment(const DesignMatrix& design, const Eigen::VectorXd& y, CovFlavor flavor,
                           const std::optional<Eigen::VectorXi>& cluster = std::nullopt) {
    const OlsFit ols = fit(design, y);
    const Eigen::Index z_col = design.treatment_column();
    if (!ols.is_kept(z_col)) {
        throw EstimationError(
            "treatment column is collinear with earlier regressors (is one arm empty?)");
    }
    const SandwichCov cov = robust_cov(ols, flavor, cluster);
    const Eigen::Index pos = ols.kept_position(z_col);

    TreatmentFit out;
    out.estimate = ols.coefficients(z_col);
    out.se = std::sqrt(std::max(0.0, cov.matrix(pos, pos)));
    for (Eigen::Index c = 0; c < design.columns.cols(); ++c) {
        if (!ols.is_kept(c)) out.dropped.push_back(design.labels[static_cast<std::size_t>(c)]);
    }
    return out;
}

EstimateResult finish(TreatmentFit&& tf, const ExperimentData& data, const EstimatorSpec& spec) {
    EstimateResult result;
    result.estimate = tf.estimate;
    result.se = tf.se;
    result.diagnostics.dropped_columns = std::move(tf.dropped);
    const WaldSummary w = wald(result.estimate, result.se, spec.ci_level);
    result.ci_lo = w.lo;
    result.ci_hi = w.hi;
    result.p_value = w.p;
    if (spec.collect_diagnostics && data.n_covariates() > 0) {
        result.diagnostics.balance = balance_check(data);
    }
    return result;
}

DesignMatrix model_design(const Eigen::VectorXi& treatment, const Eigen::MatrixXd& features,
                          const std::vector<std::string>& names, Model model) {
    return model == Model::F ? build_additive(treatment, features, names)
                             : build_interacted(treatment, features, names);
}

Eigen::MatrixXd empty_features(Eigen::Index n) {
    return Eigen::MatrixXd(n, 0);
}

// Additive aggregate for the pattern-wise fits: regressors
// (1, Z, x_imp') kron (1, f' - fbar'), where f' holds the indicator products.
DesignMatrix mp_aggregate_additive_design(const ExperimentData& data, const MpFeatures& u) {
    const Eigen::Index n = data.n();
    const Eigen::Index j = u.n_imputed;
    const Eigen::Index k = u.n_indicator;
    const Eigen::VectorXd z = data.treatment.cast<double>();

    const Eigen::MatrixXd fprime = u.matrix.middleCols(j, k);
    const Eigen::VectorXd fbar = fprime.colwise().mean();
    const Eigen::MatrixXd fc = fprime.rowwise() - fbar.transpose();

    DesignMatrix design;
    design.centering = fbar;
    design.columns.resize(n, (j + 2) * (k + 1));
    design.labels.resize(static_cast<std::size_t>(design.columns.cols()));
    design.kinds.resize(static_cast<std::size_t>(design.columns.cols()));

    auto put = [&](Eigen::Index col, const Eigen::VectorXd& v, std::string label, ColumnKind kind) {
        design.columns.col(col) = v;
        design.labels[static_cast<std::size_t>(col)] = std::move(label);
        design.kinds[static_cast<std::size_t>(col)] = kind;
    };

    const auto& f_label = [&](Eigen::Index s) {
        return u.labels[static_cast<std::size_t>(j + s)];
    };

    Eigen::Index col = 0;
    put(col++, Eigen::VectorXd::Ones(n), "1", ColumnKind::Intercept);
    for (Eigen::Index s = 0; s < k; ++s) put(col++, fc.col(s), f_label(s), ColumnKind::Feature);
    put(col++, z, "Z", ColumnKind::Treatment);
    for (Eigen::Index s = 0; s < k; ++s) {
        put(col++, fc.col(s).cwiseProduct(z), "Z:" + f_label(s), ColumnKind::Interaction);
    }
    for (Eigen::Index c = 0; c < j; ++c) {
        const std::string& name = data.covariate_names[static_cast<std::size_t>(c)];
        put(col++, u.matrix.col(c), name, ColumnKind::Feature);
        for (Eigen::Index s = 0; s < k; ++s) {
            put(col++, u.matrix.col(c).cwiseProduct(fc.col(s)), name + ":" + f_label(s),
                ColumnKind::Feature);
        }
    }
    return design;
}

}  // namespace

FeatureBlock strategy_feature_block(const ExperimentData& data, const EstimatorSpec& spec) {
    switch (spec.strategy) {
        case Strategy::Neyman: return {empty_features(data.n()), {}};
        case Strategy::CompleteCovariate: {
            const CompleteCovariateSet set = complete_covariate_set(data);
            FeatureBlock block;
            block.matrix.resize(data.n(), static_cast<Eigen::Index>(set.indices.size()));
            for (std::size_t c = 0; c < set.indices.size(); ++c) {
                block.matrix.col(static_cast<Eigen::Index>(c)) =
                    data.covariates.col(set.indices[c]);
                block.names.push_back(
                    data.covariate_names[static_cast<std::size_t>(set.indices[c])]);
            }
            return block;
        }
        case Strategy::Imputation: {
            const ImputedCovariates imp = impute(data, resolve_constants(data, spec));
            return {imp.values, data.covariate_names};
        }
        case Strategy::Mim: {
            MimFeatures f = mim_features(data, resolve_constants(data, spec));
            return {std::move(f.matrix), std::move(f.names)};
        }
        case Strategy::Mp:
        case Strategy::MpAggregate: {
            MpFeatures u = mp_features(data, resolve_constants(data, spec), spec.mp_max_j);
            return {std::move(u.matrix), std::move(u.labels)};
        }
        case Strategy::MissCount:
        case Strategy::CcIndicator: {
            const ImputedCovariates imp = impute(data, resolve_constants(data, spec));
            const UnitScalars scalars = count_and_cc_scalars(data);
            FeatureBlock block;
            block.matrix.resize(data.n(), imp.values.cols() + 1);
            block.matrix.leftCols(imp.values.cols()) = imp.values;
            block.names = data.covariate_names;
            if (spec.strategy == Strategy::MissCount) {
                block.matrix.col(imp.values.cols()) = scalars.observed_count;
                block.names.push_back("obs_count");
            } else {
                block.matrix.col(imp.values.cols()) = scalars.complete_case;
                block.names.push_back("complete_case");
            }
            return block;
        }
        case Strategy::SecondOrder: {
            const MimFeatures base = mim_features(data, resolve_constants(data, spec));
            const Eigen::Index j = data.n_covariates();
            const Eigen::Index m = base.n_indicators;
            const Eigen::MatrixXd indicators = base.matrix.rightCols(m);
            FeatureBlock block;
            block.matrix.resize(data.n(), j + m + j * m + m * (m - 1) / 2);
            block.names = base.names;
            block.matrix.leftCols(j + m) = base.matrix;
            Eigen::Index col = j + m;
            for (Eigen::Index c = 0; c < j; ++c) {
                for (Eigen::Index s = 0; s < m; ++s) {
                    block.matrix.col(col++) =
                        base.matrix.col(c).cwiseProduct(indicators.col(s));
                    block.names.push_back(base.names[static_cast<std::size_t>(c)] + "*" +
                                          base.names[static_cast<std::size_t>(j + s)]);
                }
            }
            for (Eigen::Index s = 0; s < m; ++s) {
                for (Eigen::Index t = s + 1; t < m; ++t) {
                    block.matrix.col(col++) = indicators.col(s).cwiseProduct(indicators.col(t));
                    block.names.push_back(base.names[static_cast<std::size_t>(j + s)] + "*" +
                                          base.names[static_cast<std::size_t>(j + t)]);
                }
            }
            return block;
        }
        case Strategy::CompleteCase:
            throw InternalError("complete-case restricts rows, it has no single feature block");
    }
    throw InternalError("unreachable strategy");
}

DesignMatrix single_regression_design(const ExperimentData& data, const EstimatorSpec& spec) {
    if (spec.strategy == Strategy::CompleteCase || spec.strategy == Strategy::Mp) {
        throw InternalError("strategy has no single-regression design");
    }
    if (spec.strategy == Strategy::MpAggregate && spec.model == Model::F) {
        const MpFeatures u = mp_features(data, resolve_constants(data, spec), spec.mp_max_j);
        return mp_aggregate_additive_design(data, u);
    }
    if (spec.strategy == Strategy::Neyman) {
        return model_design(data.treatment, empty_features(data.n()), {}, Model::F);
    }
    FeatureBlock block = strategy_feature_block(data, spec);
    return model_design(data.treatment, block.matrix, block.names, spec.model);
}

EstimateResult neyman(const ExperimentData& data, const EstimatorSpec& spec) {
    if (data.n_treated() == 0 || data.n_control() == 0) {
        throw EstimationError("difference in means needs both arms nonempty");
    }
    DesignMatrix design = model_design(data.treatment, empty_features(data.n()), {}, Model::F);
    return finish(fit_treatment(design, data.outcome, spec.flavor), data, spec);
}

EstimateResult complete_case(const ExperimentData& data, const EstimatorSpec& spec) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        if (data.mask.row(i).sum() == 0) rows.push_back(i);
    }
    if (rows.empty()) throw EstimationError("complete-case analysis: no complete cases");
    const ExperimentData sub = subset(data, rows);
    if (sub.n_treated() == 0 || sub.n_control() == 0) {
        throw EstimationError("complete-case analysis: complete cases cover a single arm");
    }
    DesignMatrix design =
        model_design(sub.treatment, sub.covariates, sub.covariate_names, spec.model);
    return finish(fit_treatment(design, sub.outcome, spec.flavor), data, spec);
}

EstimateResult complete_covariate(const ExperimentData& data, const EstimatorSpec& spec) {
    EstimatorSpec own = spec;
    own.strategy = Strategy::CompleteCovariate;
    return finish(fit_treatment(single_regression_design(data, own), data.outcome, own.flavor),
                  data, own);
}

EstimateResult single_imputation(const ExperimentData& data, const EstimatorSpec& spec) {
    EstimatorSpec own = spec;
    own.strategy = Strategy::Imputation;
    return finish(fit_treatment(single_regression_design(data, own), data.outcome, own.flavor),
                  data, own);
}

EstimateResult missingness_indicator(const ExperimentData& data, const EstimatorSpec& spec) {
    EstimatorSpec own = spec;
    own.strategy = Strategy::Mim;
    return finish(fit_treatment(single_regression_design(data, own), data.outcome, own.flavor),
                  data, own);
}

EstimateResult missingness_pattern_aggregate(const ExperimentData& data, const EstimatorSpec& spec) {
    EstimatorSpec own = spec;
    own.strategy = Strategy::MpAggregate;
    return finish(fit_treatment(single_regression_design(data, own), data.outcome, own.flavor),
                  data, own);
}

EstimateResult count_variant(const ExperimentData& data, const EstimatorSpec& spec) {
    EstimatorSpec own = spec;
    own.strategy = Strategy::MissCount;
    return finish(fit_treatment(single_regression_design(data, own), data.outcome, own.flavor),
                  data, own);
}

EstimateResult cc_indicator_variant(const ExperimentData& data, const EstimatorSpec& spec) {
    EstimatorSpec own = spec;
    own.strategy = Strategy::CcIndicator;
    return finish(fit_treatment(single_regression_design(data, own), data.outcome, own.flavor),
                  data, own);
}

EstimateResult second_order_variant(const ExperimentData& data, const EstimatorSpec& spec) {
    EstimatorSpec own = spec;
    own.strategy = Strategy::SecondOrder;
    return finish(fit_treatment(single_regression_design(data, own), data.outcome, own.flavor),
                  data, own);
}

EstimateResult missingness_pattern(const ExperimentData& data, const EstimatorSpec& spec) {
    const PatternTable table = pattern_table(data);
    const Eigen::Index n = data.n();

    struct PatternPlan {
        std::vector<Eigen::Index> rows;
        std::vector<Eigen::Index> available;
        Eigen::Index n1 = 0;
    };
    std::vector<PatternPlan> plans(static_cast<std::size_t>(table.size()));
    for (std::size_t p = 0; p < plans.size(); ++p) {
        const auto& pattern = table.patterns[p];
        for (std::size_t c = 0; c < pattern.size(); ++c) {
            if (pattern[c] == 0) plans[p].available.push_back(static_cast<Eigen::Index>(c));
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        auto& plan = plans[static_cast<std::size_t>(table.membership[static_cast<std::size_t>(i)])];
        plan.rows.push_back(i);
        plan.n1 += data.treatment(i);
    }

    EstimateResult result;
    double total = 0.0;
    double var = 0.0;

    for (std::size_t p = 0; p < plans.size(); ++p) {
        const PatternPlan& plan = plans[p];
        const auto n_m = static_cast<Eigen::Index>(plan.rows.size());
        const Eigen::Index n1_m = plan.n1;
        const Eigen::Index n0_m = n_m - n1_m;
        const auto j_m = static_cast<Eigen::Index>(plan.available.size());
        const double rho = table.proportions[p];
        const std::string label = pattern_label(table.patterns[p]);

        const bool arms_ok = n1_m >= 1 && n0_m >= 1;
        const bool feasible = spec.model == Model::F
                                  ? (arms_ok && n_m >= j_m + 2)
                                  : std::min(n1_m, n0_m) >= j_m + 1;

        PatternUse use{label, n_m, n1_m, n0_m, ""};
        if (feasible) {
            const ExperimentData sub = subset(data, plan.rows);
            Eigen::MatrixXd w(n_m, j_m);
            std::vector<std::string> names;
            for (Eigen::Index c = 0; c < j_m; ++c) {
                w.col(c) = sub.covariates.col(plan.available[static_cast<std::size_t>(c)]);
                names.push_back(
                    data.covariate_names[static_cast<std::size_t>(
                        plan.available[static_cast<std::size_t>(c)])]);
            }
            DesignMatrix design = model_design(sub.treatment, w, names, spec.model);
            const TreatmentFit tf = fit_treatment(design, sub.outcome, spec.flavor);
            total += rho * tf.estimate;
            var += rho * rho * tf.se * tf.se;
            use.method = to_string(spec.model);
        } else if (spec.mp_fallback == MpFallback::Error) {
            throw EstimationError("pattern " + label + " (n=" + std::to_string(n_m) +
                                  ", treated=" + std::to_string(n1_m) + ", control=" +
                                  std::to_string(n0_m) + ") is below the size threshold");
        } else if (spec.mp_fallback == MpFallback::NeymanWithinPattern && arms_ok) {
            const ExperimentData sub = subset(data, plan.rows);
            DesignMatrix design =
                model_design(sub.treatment, empty_features(n_m), {}, Model::F);
            const TreatmentFit tf = fit_treatment(design, sub.outcome, spec.flavor);
            total += rho * tf.estimate;
            var += rho * rho * tf.se * tf.se;
            use.method = "neyman";
            ++result.diagnostics.neyman_fallbacks;
        } else {
            // Not even a within-pattern mean difference exists; abandon the
            // pattern-wise route for the missingness-indicator method.
            EstimateResult mim = missingness_indicator(data, spec);
            mim.diagnostics.fell_back_to_mim = true;
            if (spec.collect_diagnostics) {
                use.method = "escalated";
                mim.diagnostics.patterns = std::move(result.diagnostics.patterns);
                mim.diagnostics.patterns.push_back(std::move(use));
            }
            return mim;
        }
        if (spec.collect_diagnostics) result.diagnostics.patterns.push_back(std::move(use));
    }

    result.estimate = total;
    result.se = std::sqrt(var);
    const WaldSummary w = wald(result.estimate, result.se, spec.ci_level);
    result.ci_lo = w.lo;
    result.ci_hi = w.hi;
    result.p_value = w.p;
    if (spec.collect_diagnostics && data.n_covariates() > 0) {
        result.diagnostics.balance = balance_check(data);
    }
    return result;
}

EstimateResult estimate(const ExperimentData& data, const EstimatorSpec& spec) {
    switch (spec.strategy) {
        case Strategy::Neyman: return neyman(data, spec);
        case Strategy::CompleteCase: return complete_case(data, spec);
        case Strategy::CompleteCovariate: return complete_covariate(data, spec);
        case Strategy::Imputation: return single_imputation(data, spec);
        case Strategy::Mim: return missingness_indicator(data, spec);
        case Strategy::Mp: return missingness_pattern(data, spec);
        case Strategy::MpAggregate: return missingness_pattern_aggregate(data, spec);
        case Strategy::MissCount: return count_variant(data, spec);
        case Strategy::CcIndicator: return cc_indicator_variant(data, spec);
        case Strategy::SecondOrder: return second_order_variant(data, spec);
    }
    throw InternalError("unreachable strategy");
}

FrtResult frt_studentized(const ExperimentData& data, const EstimatorSpec& spec, int draws,
                          std::uint64_t seed, int threads) {
    if (draws < 1) throw InputError("frt: draws must be positive");
    EstimatorSpec lean = spec;
    lean.collect_diagnostics = false;

    const EstimateResult observed = estimate(data, lean);
    if (!std::isfinite(observed.se)) {
        throw EstimationError("frt: the observed fit has a non-finite standard error");
    }

    FrtResult result;
    if (observed.se == 0.0 && observed.estimate == 0.0) {
        result.p_value = 1.0;  // 0/0 statistic: every draw ties
        result.t_observed = 0.0;
        return result;
    }
    const double t_obs = observed.se > 0.0
                             ? observed.estimate / observed.se
                             : std::numeric_limits<double>::infinity();
    result.t_observed = t_obs;

    const Eigen::Index n = data.n();
    const Eigen::Index n1 = data.n_treated();
    std::vector<double> t_abs(static_cast<std::size_t>(draws),
                              std::numeric_limits<double>::quiet_NaN());
    std::vector<std::uint8_t> valid(static_cast<std::size_t>(draws), 0);

    if (threads == 0) threads = default_threads();
    parallel_for(draws, threads, [&](std::int64_t b) {
        Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(b));
        ExperimentData perm = data;
        perm.treatment = complete_randomization(n, n1, rng);
        try {
            const EstimateResult r = estimate(perm, lean);
            valid[static_cast<std::size_t>(b)] = 1;
            // Zero-se draws (ties and 0/0 included) count as exceedances.
            t_abs[static_cast<std::size_t>(b)] =
                r.se > 0.0 ? std::fabs(r.estimate / r.se)
                           : std::numeric_limits<double>::infinity();
        } catch (const EstimationError&) {
            // degenerate draw, dropped
        }
    });

    int exceed = 0;
    for (int b = 0; b < draws; ++b) {
        if (!valid[static_cast<std::size_t>(b)]) continue;
        ++result.valid_draws;
        if (t_abs[static_cast<std::size_t>(b)] >= std::fabs(t_obs)) ++exceed;
    }
    result.degenerate_draws = draws - result.valid_draws;
    if (result.valid_draws < std::max(1, draws / 10)) {
        throw EstimationError("frt: fewer than 10% of permutation draws were valid");
    }
    result.p_value = (1.0 + exceed) / (result.valid_draws + 1.0);
    return result;
}

}  // namespace randadj
