#include "randadj/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "randadj/error.hpp"
#include "randadj/parallel.hpp"

namespace randadj {

Eigen::VectorXi complete_randomization(Eigen::Index n, Eigen::Index n1, Rng& rng) {
    if (!(n1 > 0 && n1 < n)) throw InputError("complete_randomization: need 0 < n1 < n");
    std::vector<int> z(static_cast<std::size_t>(n), 0);
    std::fill(z.begin(), z.begin() + n1, 1);
    rng.shuffle(z);
    return Eigen::Map<Eigen::VectorXi>(z.data(), n);
}

Eigen::VectorXi complete_randomization(Eigen::Index n, Eigen::Index n1, std::uint64_t seed) {
    Rng rng(seed);
    return complete_randomization(n, n1, rng);
}

ExperimentData reveal(const PotentialPopulation& pop, const Eigen::VectorXi& assignment) {
    const Eigen::Index n = pop.n();
    if (assignment.size() != n) throw InputError("reveal: assignment length mismatch");
    ExperimentData data;
    data.outcome.resize(n);
    data.treatment = assignment;
    data.covariates.resize(n, pop.n_covariates());
    data.mask.resize(n, pop.n_covariates());
    data.covariate_names.resize(static_cast<std::size_t>(pop.n_covariates()));
    for (std::size_t c = 0; c < data.covariate_names.size(); ++c) {
        data.covariate_names[c] = "x" + std::to_string(c + 1);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool treated = assignment(i) == 1;
        data.outcome(i) = treated ? pop.y1(i) : pop.y0(i);
        data.mask.row(i) = treated ? pop.mask1.row(i) : pop.mask0.row(i);
        for (Eigen::Index c = 0; c < pop.n_covariates(); ++c) {
            data.covariates(i, c) = data.mask(i, c) ? 0.0 : pop.covariates(i, c);
        }
    }
    return data;
}

Scenario scenario_from_string(const std::string& token) {
    if (token == "i" || token == "1") return Scenario::I;
    if (token == "ii" || token == "2") return Scenario::II;
    if (token == "iii" || token == "3") return Scenario::III;
    throw InputError("unknown scenario '" + token + "' (expected i, ii, or iii)");
}

namespace {

double slope(int z, double xi) {
    // gamma_{z|xi}: components of the covariate slope vector, all equal.
    if (z == 1) return xi > 0.5 ? 1.0 : 0.5;
    return xi > 0.5 ? -1.0 : -0.5;
}

void center_to_zero_tau(PotentialPopulation& pop) {
    pop.y0.array() -= pop.y0.mean();
    pop.y1.array() -= pop.y1.mean();
    pop.tau = 0.0;
}

}  // namespace

PotentialPopulation gen_scenario(Scenario which, Eigen::Index n, std::uint64_t seed) {
    if (n < 50) throw InputError("gen_scenario: need n >= 50");
    const Eigen::Index j = 3;
    Rng rng(seed);

    PotentialPopulation pop;
    pop.latent.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) pop.latent(i) = rng.bernoulli(0.2) ? 1.0 : 0.0;

    pop.covariates.resize(n, j);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < j; ++c) pop.covariates(i, c) = pop.latent(i) + rng.normal();
    }

    // Covariate 1 is always observed; 2 and 3 are missing at class-dependent
    // rates, identically under both arms.
    pop.mask0 = Eigen::MatrixXi::Zero(n, j);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double rate = 0.1 * pop.latent(i) + 0.05 * (1.0 - pop.latent(i));
        for (Eigen::Index c = 1; c < j; ++c) {
            pop.mask0(i, c) = rng.bernoulli(rate) ? 1 : 0;
        }
    }
    pop.mask1 = pop.mask0;

    pop.y0.resize(n);
    pop.y1.resize(n);
    Eigen::VectorXd noise0(n);
    Eigen::VectorXd noise1(n);
    for (Eigen::Index i = 0; i < n; ++i) noise0(i) = rng.normal();
    for (Eigen::Index i = 0; i < n; ++i) noise1(i) = rng.normal();

    for (Eigen::Index i = 0; i < n; ++i) {
        const double xi = pop.latent(i);
        const double sum_x = pop.covariates.row(i).sum();
        const double sum_m = pop.mask0.row(i).sum();
        const double m2 = pop.mask0(i, 1);
        const double m3 = pop.mask0(i, 2);
        double mu0 = 5.0 * xi;
        double mu1 = 5.0 * xi;
        switch (which) {
            case Scenario::I:
                mu0 += 2.0 * slope(0, xi) * sum_x;
                mu1 += 2.0 * slope(1, xi) * sum_x;
                break;
            case Scenario::II:
                mu0 += slope(0, xi) * sum_x + 2.0 * sum_m;
                mu1 += slope(1, xi) * sum_x + 2.0 * sum_m;
                break;
            case Scenario::III:
                mu0 += slope(0, xi) * sum_x + sum_m + m2 * m3 + 5.0 * m2 * sum_x;
                mu1 += slope(1, xi) * sum_x + sum_m + m2 * m3 + 5.0 * m2 * sum_x;
                break;
        }
        pop.y0(i) = mu0 + noise0(i);
        pop.y1(i) = mu1 + noise1(i);
    }
    center_to_zero_tau(pop);
    return pop;
}

PotentialPopulation gen_treatment_dependent(Eigen::Index n, std::uint64_t seed,
                                            double effect_on_missingness) {
    if (n < 50) throw InputError("gen_treatment_dependent: need n >= 50");
    if (effect_on_missingness < 0.0) {
        throw InputError("gen_treatment_dependent: effect must be nonnegative");
    }
    const Eigen::Index j = 3;
    Rng rng(seed);

    PotentialPopulation pop;
    pop.latent.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) pop.latent(i) = rng.bernoulli(0.2) ? 1.0 : 0.0;

    pop.covariates.resize(n, j);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < j; ++c) pop.covariates(i, c) = pop.latent(i) + rng.normal();
    }

    // Shared uniforms couple the two potential masks: the treated-arm rate
    // adds `effect` on top of the control-arm rate cell by cell.
    pop.mask0.resize(n, j);
    pop.mask1.resize(n, j);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double rate0 = 0.05 + 0.1 * pop.latent(i);
        const double rate1 = std::min(rate0 + effect_on_missingness, 0.95);
        for (Eigen::Index c = 0; c < j; ++c) {
            const double u = rng.uniform();
            pop.mask0(i, c) = u < rate0 ? 1 : 0;
            pop.mask1(i, c) = u < rate1 ? 1 : 0;
        }
    }

    pop.y0.resize(n);
    pop.y1.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double xi = pop.latent(i);
        const double sum_x = pop.covariates.row(i).sum();
        pop.y0(i) = 5.0 * xi + 2.0 * slope(0, xi) * sum_x + rng.normal();
        pop.y1(i) = 5.0 * xi + 2.0 * slope(1, xi) * sum_x + rng.normal();
    }
    center_to_zero_tau(pop);
    return pop;
}

namespace {

Eigen::MatrixXd strategy_population_features(const PotentialPopulation& pop, Strategy strategy) {
    if (strategy == Strategy::CompleteCase) {
        throw InputError(
            "oracle_variance: complete-case has no variance oracle; use oracle_cc_bias");
    }
    // Feature builders only read covariates/mask, so wrap the population in a
    // dataset view with placeholder outcome/treatment.
    ExperimentData view;
    view.outcome = pop.y0;
    view.treatment = Eigen::VectorXi::Zero(pop.n());
    view.mask = pop.mask0;
    view.covariates = pop.covariates;
    for (Eigen::Index i = 0; i < pop.n(); ++i) {
        for (Eigen::Index c = 0; c < pop.n_covariates(); ++c) {
            if (view.mask(i, c)) view.covariates(i, c) = 0.0;
        }
    }
    view.covariate_names.resize(static_cast<std::size_t>(pop.n_covariates()));
    for (std::size_t c = 0; c < view.covariate_names.size(); ++c) {
        view.covariate_names[c] = "x" + std::to_string(c + 1);
    }
    EstimatorSpec spec;
    spec.strategy = strategy;
    spec.impute = ImputePolicy::Zeros;  // population limit of the imputation constants
    return strategy_feature_block(view, spec).matrix;
}

Eigen::VectorXd population_projection(const Eigen::MatrixXd& centered, const Eigen::VectorXd& y,
                                      double divisor) {
    const Eigen::VectorXd yc = y.array() - y.mean();
    const Eigen::MatrixXd s_ww = centered.transpose() * centered / divisor;
    const Eigen::VectorXd s_wy = centered.transpose() * yc / divisor;
    Eigen::LDLT<Eigen::MatrixXd> solver(s_ww);
    if (solver.info() != Eigen::Success) {
        throw EstimationError("oracle_variance: singular population covariance");
    }
    return solver.solve(s_wy);
}

double finite_pop_variance(const Eigen::VectorXd& v) {
    const Eigen::ArrayXd d = v.array() - v.mean();
    return d.square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

double oracle_variance(const PotentialPopulation& pop, Strategy strategy, Model model,
                       Eigen::Index n1) {
    if (!pop.treatment_independent_missingness()) {
        throw InputError("oracle_variance: requires treatment-independent missingness");
    }
    const Eigen::Index n = pop.n();
    if (!(n1 > 0 && n1 < n)) throw InputError("oracle_variance: need 0 < n1 < n");
    const double e1 = static_cast<double>(n1) / static_cast<double>(n);
    const double e0 = 1.0 - e1;

    Eigen::MatrixXd w = strategy_population_features(pop, strategy);
    // Reduce to a full-rank basis (constants drop against the leading ones).
    Eigen::MatrixXd with_ones(n, w.cols() + 1);
    with_ones.col(0).setOnes();
    with_ones.rightCols(w.cols()) = w;
    const std::vector<Eigen::Index> kept = independent_columns(with_ones);
    Eigen::MatrixXd basis(n, static_cast<Eigen::Index>(kept.size()) - 1);
    Eigen::Index out = 0;
    for (const Eigen::Index c : kept) {
        if (c == 0) continue;
        basis.col(out++) = w.col(c - 1);
    }

    Eigen::VectorXd a0 = pop.y0;
    Eigen::VectorXd a1 = pop.y1;
    if (out > 0) {
        const Eigen::MatrixXd centered = basis.rowwise() - basis.colwise().mean();
        const double divisor = static_cast<double>(n - 1);
        const Eigen::VectorXd g0 = population_projection(centered, pop.y0, divisor);
        const Eigen::VectorXd g1 = population_projection(centered, pop.y1, divisor);
        if (model == Model::L) {
            a0 -= basis * g0;
            a1 -= basis * g1;
        } else {
            const Eigen::VectorXd gf = e0 * g0 + e1 * g1;
            a0 -= basis * gf;
            a1 -= basis * gf;
        }
    }
    return finite_pop_variance(a0) / e0 + finite_pop_variance(a1) / e1 -
           finite_pop_variance(a1 - a0);
}

CcBias oracle_cc_bias(const PotentialPopulation& pop) {
    if (!pop.treatment_independent_missingness()) {
        throw InputError("oracle_cc_bias: requires treatment-independent missingness");
    }
    const Eigen::Index n = pop.n();
    double sum_cc = 0.0, sum_ic = 0.0;
    Eigen::Index n_cc = 0;
    Eigen::VectorXd c(n);
    const Eigen::VectorXd tau_i = pop.y1 - pop.y0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool complete = pop.mask0.row(i).sum() == 0;
        c(i) = complete ? 1.0 : 0.0;
        (complete ? sum_cc : sum_ic) += tau_i(i);
        n_cc += complete;
    }
    if (n_cc == 0) throw EstimationError("oracle_cc_bias: no complete cases");

    CcBias out;
    out.tau_cc = sum_cc / static_cast<double>(n_cc);
    out.tau_ic = n_cc == n ? 0.0 : sum_ic / static_cast<double>(n - n_cc);
    out.bias = out.tau_cc - pop.tau;
    const double cbar = c.mean();
    const double tbar = tau_i.mean();
    out.s_c_tau =
        ((c.array() - cbar) * (tau_i.array() - tbar)).sum() / static_cast<double>(n - 1);
    return out;
}

namespace {

double batch_means_sd_mcse(const std::vector<double>& values, int batches = 20) {
    const auto n = static_cast<Eigen::Index>(values.size());
    if (n < 2 * batches) batches = std::max(2, static_cast<int>(n / 2));
    if (n < 4) return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> batch_sd;
    const Eigen::Index base = n / batches;
    Eigen::Index start = 0;
    for (int b = 0; b < batches; ++b) {
        const Eigen::Index len = base + (b < n % batches ? 1 : 0);
        double mean = 0.0;
        for (Eigen::Index i = 0; i < len; ++i) mean += values[static_cast<std::size_t>(start + i)];
        mean /= static_cast<double>(len);
        double ss = 0.0;
        for (Eigen::Index i = 0; i < len; ++i) {
            const double d = values[static_cast<std::size_t>(start + i)] - mean;
            ss += d * d;
        }
        batch_sd.push_back(std::sqrt(ss / static_cast<double>(len - 1)));
        start += len;
    }
    double mean = 0.0;
    for (double v : batch_sd) mean += v;
    mean /= static_cast<double>(batch_sd.size());
    double ss = 0.0;
    for (double v : batch_sd) ss += (v - mean) * (v - mean);
    const double sd_of_batches = std::sqrt(ss / static_cast<double>(batch_sd.size() - 1));
    return sd_of_batches / std::sqrt(static_cast<double>(batch_sd.size()));
}

}  // namespace

McSummary monte_carlo(const PotentialPopulation& pop, const std::vector<McSpec>& specs,
                      Eigen::Index reps, std::uint64_t seed, const McOptions& options) {
    if (reps < 2) throw InputError("monte_carlo: need reps >= 2");
    if (specs.empty()) throw InputError("monte_carlo: no estimator specs given");
    const Eigen::Index n = pop.n();
    const Eigen::Index n1 =
        options.n1 > 0 ? options.n1 : static_cast<Eigen::Index>(std::lround(0.2 * n));
    if (!(n1 > 0 && n1 < n)) throw InputError("monte_carlo: invalid treated arm size");

    McSummary summary;
    summary.tau = pop.tau;
    summary.reps = reps;
    summary.n1 = n1;
    summary.per_spec.resize(specs.size());
    for (std::size_t s = 0; s < specs.size(); ++s) {
        auto& entry = summary.per_spec[s];
        entry.name = specs[s].name;
        entry.spec = specs[s].spec;
        entry.spec.collect_diagnostics = false;
        entry.estimates.assign(static_cast<std::size_t>(reps),
                               std::numeric_limits<double>::quiet_NaN());
        entry.ses.assign(static_cast<std::size_t>(reps),
                         std::numeric_limits<double>::quiet_NaN());
        entry.covered.assign(static_cast<std::size_t>(reps), 0);
        entry.ok.assign(static_cast<std::size_t>(reps), 0);
    }

    const int threads = options.threads > 0 ? options.threads : default_threads();
    parallel_for(reps, threads, [&](std::int64_t r) {
        Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(r));
        const Eigen::VectorXi z = complete_randomization(n, n1, rng);
        const ExperimentData data = reveal(pop, z);
        for (auto& entry : summary.per_spec) {
            try {
                const EstimateResult res = estimate(data, entry.spec);
                const auto idx = static_cast<std::size_t>(r);
                entry.estimates[idx] = res.estimate;
                entry.ses[idx] = res.se;
                entry.covered[idx] = (res.ci_lo <= pop.tau && pop.tau <= res.ci_hi) ? 1 : 0;
                entry.ok[idx] = 1;
            } catch (const EstimationError&) {
                // failed replicate, recorded below
            }
        }
    });

    for (auto& entry : summary.per_spec) {
        std::vector<double> est;
        std::vector<double> se;
        Eigen::Index covered = 0;
        for (Eigen::Index r = 0; r < reps; ++r) {
            const auto idx = static_cast<std::size_t>(r);
            if (!entry.ok[idx]) continue;
            est.push_back(entry.estimates[idx]);
            se.push_back(entry.ses[idx]);
            covered += entry.covered[idx];
        }
        entry.n_ok = static_cast<Eigen::Index>(est.size());
        if (entry.n_ok * 2 < reps) {
            throw EstimationError("monte_carlo: estimator '" + entry.name + "' failed on " +
                                  std::to_string(reps - entry.n_ok) + " of " +
                                  std::to_string(reps) + " replicates");
        }
        const double n_ok = static_cast<double>(entry.n_ok);
        double mean = 0.0;
        for (double v : est) mean += v;
        mean /= n_ok;
        double ss = 0.0, sq = 0.0, mean_se = 0.0;
        for (std::size_t i = 0; i < est.size(); ++i) {
            ss += (est[i] - mean) * (est[i] - mean);
            sq += (est[i] - pop.tau) * (est[i] - pop.tau);
            mean_se += se[i];
        }
        entry.mean_bias = mean - pop.tau;
        entry.sd = std::sqrt(ss / (n_ok - 1.0));
        entry.rmse = std::sqrt(sq / n_ok);
        entry.mean_se = mean_se / n_ok;
        entry.coverage = static_cast<double>(covered) / n_ok;
        entry.mcse_bias = entry.sd / std::sqrt(n_ok);
        entry.mcse_sd = batch_means_sd_mcse(est);
        entry.mcse_coverage = std::sqrt(entry.coverage * (1.0 - entry.coverage) / n_ok);
    }
    return summary;
}

void write_replicates_csv(const std::string& path, const McSummary& summary) {
    std::FILE* out = std::fopen(path.c_str(), "wb");
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    std::fputs("rep,strategy,model,estimate,se,ci_lo,ci_hi,covered\n", out);
    const double z95 = normal_quantile(0.5 + 0.95 / 2.0);
    for (const auto& entry : summary.per_spec) {
        const double zq = entry.spec.ci_level == 0.95
                              ? z95
                              : normal_quantile(0.5 + entry.spec.ci_level / 2.0);
        for (Eigen::Index r = 0; r < summary.reps; ++r) {
            const auto idx = static_cast<std::size_t>(r);
            if (!entry.ok[idx]) continue;
            const double est = entry.estimates[idx];
            const double se = entry.ses[idx];
            std::fprintf(out, "%lld,%s,%s,%.17g,%.17g,%.17g,%.17g,%d\n",
                         static_cast<long long>(r), to_string(entry.spec.strategy).c_str(),
                         to_string(entry.spec.model).c_str(), est, se, est - zq * se,
                         est + zq * se, static_cast<int>(entry.covered[idx]));
        }
    }
    std::fclose(out);
}

void write_summary_csv(const std::string& path, const McSummary& summary) {
    std::FILE* out = std::fopen(path.c_str(), "wb");
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    std::fputs(
        "name,strategy,model,n_ok,mean_bias,sd,rmse,mean_se,coverage,"
        "mcse_bias,mcse_sd,mcse_coverage\n",
        out);
    for (const auto& entry : summary.per_spec) {
        std::fprintf(out, "%s,%s,%s,%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                     entry.name.c_str(), to_string(entry.spec.strategy).c_str(),
                     to_string(entry.spec.model).c_str(), static_cast<long long>(entry.n_ok),
                     entry.mean_bias, entry.sd, entry.rmse, entry.mean_se, entry.coverage,
                     entry.mcse_bias, entry.mcse_sd, entry.mcse_coverage);
    }
    std::fclose(out);
}

}  // namespace randadj
