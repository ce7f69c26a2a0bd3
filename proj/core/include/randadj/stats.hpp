#pragma once

namespace randadj {

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile (inverse CDF), Wichura's AS 241 rational
/// approximation (double precision). Pure arithmetic apart from sqrt/log,
/// so results are reproducible across platforms. Requires p in (0,1).
double normal_quantile(double p);

/// Two-sided p-value for a standard-normal reference: P(|N(0,1)| >= |z|).
double two_sided_normal_p(double z);

}  // namespace randadj
