#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace randadj {

enum class ColumnKind { Intercept, Treatment, Feature, Interaction };

/// Regression design with per-column provenance. The first column is always
/// the all-ones intercept and exactly one column is the treatment indicator.
/// Column order is normative: the fit prunes collinear columns left to right,
/// so which column of a collinear set survives is determined here.
struct DesignMatrix {
    Eigen::MatrixXd columns;
    std::vector<std::string> labels;
    std::vector<ColumnKind> kinds;
    Eigen::VectorXd centering;  // subtracted feature means; empty when uncentered

    Eigen::Index treatment_column() const;
};

/// Least-squares fit over the retained columns. `coefficients` has one entry
/// per design column with NaN marking a pruned column (its coefficient is
/// taken as zero everywhere downstream). Q/R hold the thin factorization of
/// the kept columns and back the sandwich covariances.
struct OlsFit {
    Eigen::VectorXd coefficients;
    std::vector<Eigen::Index> kept;
    Eigen::VectorXd residuals;
    Eigen::VectorXd fitted;
    Eigen::MatrixXd q;  // n x k, orthonormal
    Eigen::MatrixXd r;  // k x k, upper triangular

    bool is_kept(Eigen::Index column) const;
    /// Position of `column` inside the kept set; throws if pruned.
    Eigen::Index kept_position(Eigen::Index column) const;
};

enum class CovFlavor { HC0, HC1, CR0 };

std::string to_string(CovFlavor flavor);

/// Robust covariance of the kept coefficients.
struct SandwichCov {
    Eigen::MatrixXd matrix;  // k x k
    CovFlavor flavor = CovFlavor::HC0;
};

/// Indices of the columns that survive left-to-right pruning: a column is
/// dropped when its residual norm after projection on the previously kept
/// columns falls at or below rel_tol times its own norm.
std::vector<Eigen::Index> independent_columns(const Eigen::MatrixXd& x, double rel_tol = 1e-10);

/// Minimum-residual fit of y on the design's kept columns.
/// Throws InputError on non-finite input and EstimationError when every
/// column is pruned.
OlsFit fit(const DesignMatrix& design, const Eigen::VectorXd& y, double rel_tol = 1e-10);

/// HC0 = (X'X)^-1 X' diag(e^2) X (X'X)^-1 over the kept columns,
/// HC1 = HC0 * n/(n-k), CR0 sums score outer products within clusters.
SandwichCov robust_cov(const OlsFit& fit, CovFlavor flavor,
                       const std::optional<Eigen::VectorXi>& cluster_id = std::nullopt);

/// Columns (1, Z, features), uncentered.
DesignMatrix build_additive(const Eigen::VectorXi& treatment, const Eigen::MatrixXd& features,
                            const std::vector<std::string>& names);

/// Columns (1, Z, features - mean, Z * (features - mean)); the subtracted
/// means are recorded in `centering`.
DesignMatrix build_interacted(const Eigen::VectorXi& treatment, const Eigen::MatrixXd& features,
                              const std::vector<std::string>& names);

}  // namespace randadj
