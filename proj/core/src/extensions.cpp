#include "randadj/extensions.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "randadj/error.hpp"
#include "randadj/stats.hpp"

namespace randadj {

ClusterView make_cluster_view(const ExperimentData& data) {
    if (!data.cluster_id) throw InputError("cluster analysis requires cluster ids");
    const Eigen::Index n = data.n();
    const Eigen::Index j = data.n_covariates();

    std::map<int, Eigen::Index> slot;  // sorted by cluster label
    for (Eigen::Index i = 0; i < n; ++i) slot.emplace((*data.cluster_id)(i), 0);
    Eigen::Index next = 0;
    for (auto& [id, s] : slot) s = next++;

    ClusterView view;
    view.n_clusters = next;
    view.nbar = static_cast<double>(n) / static_cast<double>(next);
    view.ids.resize(static_cast<std::size_t>(next));
    view.sizes = Eigen::VectorXd::Zero(next);
    view.treatment = Eigen::VectorXi::Zero(next);
    view.outcome_total = Eigen::VectorXd::Zero(next);
    view.covariate_total = Eigen::MatrixXd::Zero(next, j);
    view.mask_total = Eigen::MatrixXd::Zero(next, j);
    view.members.resize(static_cast<std::size_t>(next));
    for (const auto& [id, s] : slot) view.ids[static_cast<std::size_t>(s)] = id;

    std::vector<bool> seen(static_cast<std::size_t>(next), false);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index s = slot[(*data.cluster_id)(i)];
        if (!seen[static_cast<std::size_t>(s)]) {
            view.treatment(s) = data.treatment(i);
            seen[static_cast<std::size_t>(s)] = true;
        } else if (view.treatment(s) != data.treatment(i)) {
            throw InputError("treatment varies within cluster " +
                             std::to_string((*data.cluster_id)(i)));
        }
        view.sizes(s) += 1.0;
        view.outcome_total(s) += data.outcome(i);
        view.covariate_total.row(s) += data.covariates.row(i);
        view.mask_total.row(s) += data.mask.row(i).cast<double>();
        view.members[static_cast<std::size_t>(s)].push_back(i);
    }
    view.outcome_total /= view.nbar;
    view.covariate_total /= view.nbar;
    view.mask_total /= view.nbar;

    const Eigen::Index treated = view.treatment.sum();
    if (treated == 0 || treated == view.n_clusters) {
        throw EstimationError("cluster analysis: both arms need at least one cluster");
    }
    return view;
}

namespace {

EstimateResult finish_wald(double estimate, double se, std::vector<std::string> dropped,
                           const EstimatorSpec& spec) {
    EstimateResult result;
    result.estimate = estimate;
    result.se = se;
    result.diagnostics.dropped_columns = std::move(dropped);
    const WaldSummary w = wald(estimate, se, spec.ci_level);
    result.ci_lo = w.lo;
    result.ci_hi = w.hi;
    result.p_value = w.p;
    return result;
}

struct ZFit {
    double estimate;
    double se;
    std::vector<std::string> dropped;
};

ZFit fit_z(const DesignMatrix& design, const Eigen::VectorXd& y, CovFlavor flavor,
           const std::optional<Eigen::VectorXi>& cluster) {
    const OlsFit ols = fit(design, y);
    const Eigen::Index z_col = design.treatment_column();
    if (!ols.is_kept(z_col)) {
        throw EstimationError("treatment column is collinear (single-arm fit?)");
    }
    const SandwichCov cov = robust_cov(ols, flavor, cluster);
    const Eigen::Index pos = ols.kept_position(z_col);
    ZFit out;
    out.estimate = ols.coefficients(z_col);
    out.se = std::sqrt(std::max(0.0, cov.matrix(pos, pos)));
    for (Eigen::Index c = 0; c < design.columns.cols(); ++c) {
        if (!ols.is_kept(c)) out.dropped.push_back(design.labels[static_cast<std::size_t>(c)]);
    }
    return out;
}

}  // namespace

EstimateResult cluster_unit_level(const ExperimentData& data, const EstimatorSpec& spec) {
    make_cluster_view(data);  // validates ids and cluster-constant treatment

    EstimatorSpec unit_spec = spec;
    if (spec.strategy == Strategy::Mp) unit_spec.strategy = Strategy::MpAggregate;

    if (spec.strategy == Strategy::CompleteCase) {
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
            spec.model == Model::F
                ? build_additive(sub.treatment, sub.covariates, sub.covariate_names)
                : build_interacted(sub.treatment, sub.covariates, sub.covariate_names);
        ZFit zf = fit_z(design, sub.outcome, CovFlavor::CR0, sub.cluster_id);
        return finish_wald(zf.estimate, zf.se, std::move(zf.dropped), spec);
    }

    DesignMatrix design = single_regression_design(data, unit_spec);
    ZFit zf = fit_z(design, data.outcome, CovFlavor::CR0, data.cluster_id);
    return finish_wald(zf.estimate, zf.se, std::move(zf.dropped), spec);
}

EstimateResult cluster_total_level(const ExperimentData& data, const EstimatorSpec& spec) {
    if (spec.strategy == Strategy::CompleteCase) {
        throw EstimationError("complete-case is not defined for cluster totals");
    }
    const ClusterView view = make_cluster_view(data);
    const Eigen::Index count = view.n_clusters;

    Eigen::MatrixXd u(count, 0);
    std::vector<std::string> names;
    if (spec.strategy != Strategy::Neyman) {
        EstimatorSpec unit_spec = spec;
        if (spec.strategy == Strategy::Mp) unit_spec.strategy = Strategy::MpAggregate;
        const FeatureBlock block = strategy_feature_block(data, unit_spec);

        u.resize(count, block.matrix.cols() + 1);
        u.col(0) = view.sizes;
        u.rightCols(block.matrix.cols()).setZero();
        for (Eigen::Index s = 0; s < count; ++s) {
            for (const Eigen::Index i : view.members[static_cast<std::size_t>(s)]) {
                u.block(s, 1, 1, block.matrix.cols()) += block.matrix.row(i);
            }
        }
        u.rightCols(block.matrix.cols()) /= view.nbar;
        names.push_back("cluster_size");
        for (const auto& name : block.names) names.push_back("total:" + name);

        const Eigen::Index treated = view.treatment.sum();
        const Eigen::Index needed = u.cols() + 1;
        if (spec.model == Model::L &&
            std::min(treated, count - treated) < needed) {
            throw EstimationError("cluster totals: need at least " + std::to_string(needed) +
                                  " clusters per arm, have " +
                                  std::to_string(std::min(treated, count - treated)));
        }
    }

    DesignMatrix design = spec.model == Model::F ? build_additive(view.treatment, u, names)
                                                 : build_interacted(view.treatment, u, names);
    const CovFlavor flavor = spec.flavor == CovFlavor::CR0 ? CovFlavor::HC0 : spec.flavor;
    ZFit zf = fit_z(design, view.outcome_total, flavor, std::nullopt);
    return finish_wald(zf.estimate, zf.se, std::move(zf.dropped), spec);
}

EstimateResult stratified(const ExperimentData& data, const StratifiedPlan& plan) {
    if (!data.stratum_id) throw InputError("stratified analysis requires stratum ids");
    if (plan.specs.empty()) throw InputError("stratified analysis: no estimator spec");

    std::map<int, std::vector<Eigen::Index>> strata;
    for (Eigen::Index i = 0; i < data.n(); ++i) strata[(*data.stratum_id)(i)].push_back(i);
    const auto k = static_cast<Eigen::Index>(strata.size());
    if (plan.specs.size() != 1 && static_cast<Eigen::Index>(plan.specs.size()) != k) {
        throw InputError("stratified analysis: need one spec or one per stratum");
    }

    Eigen::VectorXd weights(k);
    if (plan.weights) {
        if (plan.weights->size() != k) {
            throw InputError("stratified analysis: weight count must match the strata");
        }
        weights = *plan.weights;
        if (std::fabs(weights.sum() - 1.0) > 1e-8) {
            throw InputError("stratified analysis: weights must sum to 1");
        }
    } else {
        Eigen::Index s = 0;
        for (const auto& [label, rows] : strata) {
            weights(s++) = static_cast<double>(rows.size()) / static_cast<double>(data.n());
        }
    }

    EstimateResult result;
    double total = 0.0;
    double var = 0.0;
    Eigen::Index s = 0;
    for (const auto& [label, rows] : strata) {
        const EstimatorSpec& spec =
            plan.specs.size() == 1 ? plan.specs[0] : plan.specs[static_cast<std::size_t>(s)];
        ExperimentData sub = subset(data, rows);
        const Eigen::Index n1 = sub.n_treated();
        if (n1 == 0 || n1 == sub.n()) {
            throw EstimationError("stratum " + std::to_string(label) + " has an empty arm");
        }
        EstimatorSpec lean = spec;
        lean.collect_diagnostics = false;
        PatternUse use{std::to_string(label), sub.n(), n1, sub.n() - n1,
                       to_string(spec.strategy)};
        EstimateResult part;
        try {
            part = estimate(sub, lean);
        } catch (const EstimationError&) {
            if (!plan.neyman_fallback) throw;
            part = neyman(sub, lean);
            use.method = "neyman";
            ++result.diagnostics.neyman_fallbacks;
        }
        total += weights(s) * part.estimate;
        var += weights(s) * weights(s) * part.se * part.se;
        result.diagnostics.patterns.push_back(std::move(use));
        ++s;
    }

    result.estimate = total;
    result.se = std::sqrt(var);
    const WaldSummary w = wald(result.estimate, result.se, plan.specs[0].ci_level);
    result.ci_lo = w.lo;
    result.ci_hi = w.hi;
    result.p_value = w.p;
    return result;
}

}  // namespace randadj
