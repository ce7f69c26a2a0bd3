#pragma once

#include <string>
#include <vector>

#include "randadj/dataset.hpp"
#include "randadj/rng.hpp"

namespace testutil {

using randadj::ExperimentData;
using randadj::Rng;

/// Random two-arm dataset with independent missingness, a linear outcome
/// signal in the observed covariates, and an additive effect of missingness.
inline ExperimentData random_dataset(Eigen::Index n, Eigen::Index j, double missing_rate,
                                     std::uint64_t seed, double treated_share = 0.4) {
    Rng rng(seed);
    ExperimentData d;
    d.outcome.resize(n);
    d.treatment.resize(n);
    d.covariates.resize(n, j);
    d.mask.resize(n, j);
    for (Eigen::Index c = 0; c < j; ++c) d.covariate_names.push_back("x" + std::to_string(c + 1));

    Eigen::Index n1 = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        d.treatment(i) = rng.bernoulli(treated_share) ? 1 : 0;
        n1 += d.treatment(i);
        double y = 1.5 * d.treatment(i) + rng.normal();
        for (Eigen::Index c = 0; c < j; ++c) {
            const bool missing = rng.bernoulli(missing_rate);
            d.mask(i, c) = missing ? 1 : 0;
            const double x = rng.normal() + 0.3 * c;
            if (missing) {
                d.covariates(i, c) = 0.0;
                y += 0.4;
            } else {
                d.covariates(i, c) = x;
                y += 0.8 * x;
            }
        }
        d.outcome(i) = y;
    }
    // guarantee both arms
    if (n1 == 0) d.treatment(0) = 1;
    if (n1 == n) d.treatment(0) = 0;
    return d;
}

/// Dataset whose missingness patterns all appear with ample sizes in both
/// arms, so every pattern-wise fit is feasible.
inline ExperimentData ample_pattern_dataset(Eigen::Index per_pattern, Eigen::Index j,
                                            std::uint64_t seed) {
    const Eigen::Index n_patterns = Eigen::Index(1) << j;
    const Eigen::Index n = per_pattern * n_patterns;
    Rng rng(seed);
    ExperimentData d;
    d.outcome.resize(n);
    d.treatment.resize(n);
    d.covariates.resize(n, j);
    d.mask.resize(n, j);
    for (Eigen::Index c = 0; c < j; ++c) d.covariate_names.push_back("x" + std::to_string(c + 1));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto pattern = static_cast<int>(i % n_patterns);
        d.treatment(i) = (i / n_patterns) % 5 < 2 ? 1 : 0;  // 40% treated within each pattern
        double y = 1.2 * d.treatment(i) + 0.5 * (pattern & 1) + rng.normal();
        for (Eigen::Index c = 0; c < j; ++c) {
            d.mask(i, c) = (pattern >> c) & 1;
            if (d.mask(i, c)) {
                d.covariates(i, c) = 0.0;
                y += 0.3;
            } else {
                d.covariates(i, c) = rng.normal();
                y += 0.7 * d.covariates(i, c);
            }
        }
        d.outcome(i) = y;
    }
    return d;
}

inline std::string write_temp_csv(const std::string& name, const std::string& contents) {
    const std::string path = "/tmp/randadj_test_" + name;
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fwrite(contents.data(), 1, contents.size(), f);
    std::fclose(f);
    return path;
}

}  // namespace testutil
