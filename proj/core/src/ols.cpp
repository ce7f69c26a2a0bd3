#include "randadj/ols.hpp"

#include <cmath>
#include <limits>
#include <unordered_map>

#include "randadj/error.hpp"

namespace randadj {

Eigen::Index DesignMatrix::treatment_column() const {
    Eigen::Index found = -1;
    for (std::size_t c = 0; c < kinds.size(); ++c) {
        if (kinds[c] == ColumnKind::Treatment) {
            if (found >= 0) throw InternalError("design has two treatment columns");
            found = static_cast<Eigen::Index>(c);
        }
    }
    if (found < 0) throw InternalError("design has no treatment column");
    return found;
}

bool OlsFit::is_kept(Eigen::Index column) const {
    for (Eigen::Index k : kept) {
        if (k == column) return true;
    }
    return false;
}

Eigen::Index OlsFit::kept_position(Eigen::Index column) const {
    for (std::size_t p = 0; p < kept.size(); ++p) {
        if (kept[p] == column) return static_cast<Eigen::Index>(p);
    }
    throw EstimationError("column " + std::to_string(column) + " was pruned from the fit");
}

std::string to_string(CovFlavor flavor) {
    switch (flavor) {
        case CovFlavor::HC0: return "HC0";
        case CovFlavor::HC1: return "HC1";
        case CovFlavor::CR0: return "CR0";
    }
    return "?";
}

namespace {

// Modified Gram-Schmidt with one re-orthogonalization pass. Writes the kept
// columns' orthonormal basis into q and the triangular factor into r; returns
// the kept column indices. q must be preallocated n x p.
std::vector<Eigen::Index> orthogonalize(const Eigen::MatrixXd& x, double rel_tol,
                                        Eigen::MatrixXd& q, Eigen::MatrixXd& r) {
    const Eigen::Index p = x.cols();
    std::vector<Eigen::Index> kept;
    kept.reserve(static_cast<std::size_t>(p));
    r.setZero(p, p);

    for (Eigen::Index c = 0; c < p; ++c) {
        Eigen::VectorXd v = x.col(c);
        const double own_norm = v.norm();
        const auto k = static_cast<Eigen::Index>(kept.size());
        Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(k);
        if (k > 0) {
            const auto qk = q.leftCols(k);
            Eigen::VectorXd c1 = qk.transpose() * v;
            v.noalias() -= qk * c1;
            Eigen::VectorXd c2 = qk.transpose() * v;
            v.noalias() -= qk * c2;
            coeffs = c1 + c2;
        }
        const double resid_norm = v.norm();
        if (resid_norm <= rel_tol * own_norm) continue;  // covers exact-zero columns
        r.col(k).head(k) = coeffs;
        r(k, k) = resid_norm;
        q.col(k) = v / resid_norm;
        kept.push_back(c);
    }
    return kept;
}

}  // namespace

std::vector<Eigen::Index> independent_columns(const Eigen::MatrixXd& x, double rel_tol) {
    Eigen::MatrixXd q(x.rows(), x.cols());
    Eigen::MatrixXd r;
    return orthogonalize(x, rel_tol, q, r);
}

OlsFit fit(const DesignMatrix& design, const Eigen::VectorXd& y, double rel_tol) {
    const Eigen::MatrixXd& x = design.columns;
    if (y.size() != x.rows()) throw InputError("fit: y length does not match the design");
    if (!y.allFinite() || !x.allFinite()) throw InputError("fit: non-finite values in y or X");

    OlsFit result;
    Eigen::MatrixXd q(x.rows(), x.cols());
    Eigen::MatrixXd r;
    result.kept = orthogonalize(x, rel_tol, q, r);
    const auto k = static_cast<Eigen::Index>(result.kept.size());
    if (k == 0) throw EstimationError("fit: degenerate design, every column was pruned");

    result.q = q.leftCols(k);
    result.r = r.topLeftCorner(k, k);

    const Eigen::VectorXd qty = result.q.transpose() * y;
    const Eigen::VectorXd beta = result.r.triangularView<Eigen::Upper>().solve(qty);

    result.coefficients =
        Eigen::VectorXd::Constant(x.cols(), std::numeric_limits<double>::quiet_NaN());
    result.fitted = Eigen::VectorXd::Zero(x.rows());
    for (Eigen::Index p = 0; p < k; ++p) {
        const Eigen::Index col = result.kept[static_cast<std::size_t>(p)];
        result.coefficients(col) = beta(p);
        result.fitted.noalias() += beta(p) * x.col(col);
    }
    result.residuals = y - result.fitted;
    return result;
}

SandwichCov robust_cov(const OlsFit& fit, CovFlavor flavor,
                       const std::optional<Eigen::VectorXi>& cluster_id) {
    const Eigen::Index n = fit.q.rows();
    const Eigen::Index k = fit.q.cols();
    Eigen::MatrixXd meat(k, k);

    if (flavor == CovFlavor::CR0) {
        if (!cluster_id) throw InputError("robust_cov: CR0 requires cluster ids");
        if (cluster_id->size() != n) throw InputError("robust_cov: cluster id length mismatch");
        std::unordered_map<int, Eigen::Index> slot;  // first-appearance order
        for (Eigen::Index i = 0; i < n; ++i) {
            slot.try_emplace((*cluster_id)(i), static_cast<Eigen::Index>(slot.size()));
        }
        const auto n_clusters = static_cast<Eigen::Index>(slot.size());
        if (n_clusters == n) {
            // singleton clusters: identical to the heteroskedastic meat
            const Eigen::ArrayXd e2 = fit.residuals.array().square();
            meat.noalias() = fit.q.transpose() * (fit.q.array().colwise() * e2).matrix();
        } else {
            Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(n_clusters, k);
            for (Eigen::Index i = 0; i < n; ++i) {
                scores.row(slot[(*cluster_id)(i)]) += fit.residuals(i) * fit.q.row(i);
            }
            meat.noalias() = scores.transpose() * scores;
        }
    } else {
        const Eigen::ArrayXd e2 = fit.residuals.array().square();
        meat.noalias() = fit.q.transpose() * (fit.q.array().colwise() * e2).matrix();
    }

    // (X'X)^-1 X' M X (X'X)^-1 = R^-1 (Q' M Q) R^-T with X_kept = Q R.
    const auto rt = fit.r.triangularView<Eigen::Upper>();
    Eigen::MatrixXd half = rt.solve(meat);
    Eigen::MatrixXd cov = rt.solve(half.transpose()).transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();

    if (flavor == CovFlavor::HC1) {
        if (n <= k) throw EstimationError("robust_cov: HC1 needs n > kept columns");
        cov *= static_cast<double>(n) / static_cast<double>(n - k);
    }
    return SandwichCov{std::move(cov), flavor};
}

namespace {

Eigen::VectorXd as_double(const Eigen::VectorXi& z) {
    return z.cast<double>();
}

void check_feature_shape(const Eigen::VectorXi& treatment, const Eigen::MatrixXd& features,
                         const std::vector<std::string>& names) {
    if (features.rows() != treatment.size()) {
        throw InputError("design builder: feature rows do not align with units");
    }
    if (static_cast<Eigen::Index>(names.size()) != features.cols()) {
        throw InputError("design builder: feature name count mismatch");
    }
}

}  // namespace

DesignMatrix build_additive(const Eigen::VectorXi& treatment, const Eigen::MatrixXd& features,
                            const std::vector<std::string>& names) {
    check_feature_shape(treatment, features, names);
    const Eigen::Index n = treatment.size();
    const Eigen::Index q = features.cols();

    DesignMatrix design;
    design.columns.resize(n, 2 + q);
    design.columns.col(0).setOnes();
    design.columns.col(1) = as_double(treatment);
    design.columns.rightCols(q) = features;
    design.labels = {"1", "Z"};
    design.kinds = {ColumnKind::Intercept, ColumnKind::Treatment};
    for (const auto& name : names) {
        design.labels.push_back(name);
        design.kinds.push_back(ColumnKind::Feature);
    }
    return design;
}

DesignMatrix build_interacted(const Eigen::VectorXi& treatment, const Eigen::MatrixXd& features,
                              const std::vector<std::string>& names) {
    check_feature_shape(treatment, features, names);
    const Eigen::Index n = treatment.size();
    const Eigen::Index q = features.cols();
    const Eigen::VectorXd z = as_double(treatment);

    DesignMatrix design;
    design.centering = features.colwise().mean();
    const Eigen::MatrixXd centered = features.rowwise() - design.centering.transpose();

    design.columns.resize(n, 2 + 2 * q);
    design.columns.col(0).setOnes();
    design.columns.col(1) = z;
    design.columns.middleCols(2, q) = centered;
    design.columns.rightCols(q) = centered.array().colwise() * z.array();

    design.labels = {"1", "Z"};
    design.kinds = {ColumnKind::Intercept, ColumnKind::Treatment};
    for (const auto& name : names) {
        design.labels.push_back(name);
        design.kinds.push_back(ColumnKind::Feature);
    }
    for (const auto& name : names) {
        design.labels.push_back("Z:" + name);
        design.kinds.push_back(ColumnKind::Interaction);
    }
    return design;
}

}  // namespace randadj
