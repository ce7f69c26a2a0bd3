#include <CLI11.hpp>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "randadj/dataset.hpp"
#include "randadj/error.hpp"
#include "randadj/estimators.hpp"
#include "randadj/extensions.hpp"
#include "randadj/parallel.hpp"
#include "randadj/simulation.hpp"

namespace {

using namespace randadj;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitEstimation = 2;
constexpr int kExitInternal = 3;

struct DataFlags {
    std::string input;
    std::string outcome;
    std::string treatment;
    std::string covariates = "rest";
    std::string cluster;
    std::string stratum;
};

struct SpecFlags {
    std::string strategy = "mim";
    std::string model = "L";
    std::string impute = "zeros";
    std::string hc = "hc0";
    std::string mp_fallback = "neyman";
    double ci = 0.95;
};

void add_data_flags(CLI::App* cmd, DataFlags& flags) {
    cmd->add_option("--input", flags.input, "input CSV path")->required();
    cmd->add_option("--outcome", flags.outcome, "outcome column name")->required();
    cmd->add_option("--treatment", flags.treatment, "treatment column name")->required();
    cmd->add_option("--covariates", flags.covariates,
                    "comma-separated covariate columns, or 'rest' (default)");
    cmd->add_option("--cluster", flags.cluster, "cluster id column");
    cmd->add_option("--stratum", flags.stratum, "stratum id column");
}

void add_spec_flags(CLI::App* cmd, SpecFlags& flags) {
    cmd->add_option("--strategy", flags.strategy,
                    "neyman|cc|ccov|imp|mim|mp|mp_aggregate|mc|cim|mim2");
    cmd->add_option("--model", flags.model, "F (additive) or L (interacted)");
    cmd->add_option("--impute-const", flags.impute, "zeros|means|debias|v1,v2,...");
    cmd->add_option("--hc", flags.hc, "hc0|hc1 robust variance flavor");
    cmd->add_option("--mp-fallback", flags.mp_fallback,
                    "error|neyman|mim for undersized patterns");
    cmd->add_option("--ci", flags.ci, "confidence level (default 0.95)");
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::string token;
    for (char c : csv) {
        if (c == ',') {
            out.push_back(token);
            token.clear();
        } else {
            token.push_back(c);
        }
    }
    if (!token.empty()) out.push_back(token);
    return out;
}

ExperimentData load_data(const DataFlags& flags) {
    CsvSchema schema;
    schema.outcome = flags.outcome;
    schema.treatment = flags.treatment;
    if (flags.covariates != "rest") schema.covariates = split_list(flags.covariates);
    if (!flags.cluster.empty()) schema.cluster = flags.cluster;
    if (!flags.stratum.empty()) schema.stratum = flags.stratum;
    return load_csv(flags.input, schema);
}

EstimatorSpec make_spec(const SpecFlags& flags) {
    EstimatorSpec spec;
    spec.strategy = strategy_from_string(flags.strategy);
    spec.model = model_from_string(flags.model);
    if (flags.impute == "zeros") {
        spec.impute = ImputePolicy::Zeros;
    } else if (flags.impute == "means") {
        spec.impute = ImputePolicy::ObservedMeans;
    } else if (flags.impute == "debias") {
        spec.impute = ImputePolicy::Debias;
    } else {
        const std::vector<std::string> parts = split_list(flags.impute);
        spec.impute = ImputePolicy::Explicit;
        spec.impute_values.resize(static_cast<Eigen::Index>(parts.size()));
        for (std::size_t i = 0; i < parts.size(); ++i) {
            try {
                spec.impute_values(static_cast<Eigen::Index>(i)) = std::stod(parts[i]);
            } catch (const std::exception&) {
                throw InputError("--impute-const: cannot parse '" + parts[i] + "'");
            }
        }
    }
    if (flags.hc == "hc0") {
        spec.flavor = CovFlavor::HC0;
    } else if (flags.hc == "hc1") {
        spec.flavor = CovFlavor::HC1;
    } else {
        throw InputError("--hc: expected hc0 or hc1");
    }
    spec.mp_fallback = mp_fallback_from_string(flags.mp_fallback);
    spec.ci_level = flags.ci;
    return spec;
}

void write_result_csv(const std::string& path, const std::string& strategy,
                      const std::string& model, const EstimateResult& r, bool append) {
    std::FILE* out = std::fopen(path.c_str(), append ? "ab" : "wb");
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    if (!append) std::fputs("strategy,model,estimate,se,ci_lo,ci_hi,p_value\n", out);
    std::fprintf(out, "%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g\n", strategy.c_str(), model.c_str(),
                 r.estimate, r.se, r.ci_lo, r.ci_hi, r.p_value);
    std::fclose(out);
}

void print_result(const EstimateResult& r, const EstimatorSpec& spec) {
    std::printf("estimate   %.6g\n", r.estimate);
    std::printf("se         %.6g (%s)\n", r.se, to_string(spec.flavor).c_str());
    std::printf("%.0f%% CI     [%.6g, %.6g]\n", spec.ci_level * 100.0, r.ci_lo, r.ci_hi);
    std::printf("p-value    %.6g\n", r.p_value);
    if (!r.diagnostics.patterns.empty()) {
        std::printf("patterns:\n");
        for (const auto& p : r.diagnostics.patterns) {
            std::printf("  %s: n=%lld (treated %lld, control %lld)%s%s\n", p.pattern.c_str(),
                        static_cast<long long>(p.n), static_cast<long long>(p.n_treated),
                        static_cast<long long>(p.n_control), p.method.empty() ? "" : " via ",
                        p.method.c_str());
        }
    }
    if (r.diagnostics.neyman_fallbacks > 0) {
        std::printf("fallbacks  %d pattern(s) used the within-pattern mean difference\n",
                    r.diagnostics.neyman_fallbacks);
    }
    if (r.diagnostics.fell_back_to_mim) {
        std::printf("fallbacks  pattern-wise fit infeasible; missingness-indicator result shown\n");
    }
    if (r.diagnostics.balance) {
        const auto& b = *r.diagnostics.balance;
        std::printf("balance (missingness rate, treated - control):\n");
        for (Eigen::Index c = 0; c < b.difference.size(); ++c) {
            std::printf("  column %lld: %+.4f (z = %+.2f)\n", static_cast<long long>(c + 1),
                        b.difference(c), b.z_statistic(c));
        }
        std::printf("  complete-case rate: %+.4f (z = %+.2f)\n", b.cc_difference,
                    b.cc_z_statistic);
    }
    if (!r.diagnostics.dropped_columns.empty()) {
        std::printf("dropped    ");
        for (std::size_t i = 0; i < r.diagnostics.dropped_columns.size(); ++i) {
            std::printf("%s%s", i ? ", " : "", r.diagnostics.dropped_columns[i].c_str());
        }
        std::printf("\n");
    }
}

int run_analyze(const DataFlags& data_flags, const SpecFlags& spec_flags, const std::string& out,
                const std::string& cluster_fit) {
    const ExperimentData data = load_data(data_flags);
    const EstimatorSpec spec = make_spec(spec_flags);

    if (!data_flags.cluster.empty() && !data_flags.stratum.empty()) {
        throw InputError("combined cluster and stratum analysis is not supported");
    }

    EstimateResult result;
    if (!data_flags.cluster.empty()) {
        result = cluster_fit == "unit" ? cluster_unit_level(data, spec)
                                       : cluster_total_level(data, spec);
    } else if (!data_flags.stratum.empty()) {
        StratifiedPlan plan;
        plan.specs = {spec};
        result = stratified(data, plan);
    } else {
        result = estimate(data, spec);
    }
    print_result(result, spec);
    if (!out.empty()) {
        write_result_csv(out, spec_flags.strategy, to_string(spec.model), result, false);
    }
    return kExitOk;
}

int run_compare(const DataFlags& data_flags, const SpecFlags& spec_flags,
                const std::string& out) {
    const ExperimentData data = load_data(data_flags);
    EstimatorSpec base = make_spec(spec_flags);

    const std::vector<Strategy> strategies = {Strategy::CompleteCase, Strategy::CompleteCovariate,
                                              Strategy::Imputation, Strategy::Mim, Strategy::Mp};
    std::printf("%-8s | %28s | %28s\n", "", "F", "L");
    std::printf("%-8s | %9s %9s %8s | %9s %9s %8s\n", "strategy", "estimate", "robust se",
                "p-value", "estimate", "robust se", "p-value");

    bool wrote_header = false;
    std::string mp_note;
    for (const Strategy strategy : strategies) {
        EstimatorSpec spec = base;
        spec.strategy = strategy;
        spec.mp_fallback = MpFallback::Error;  // the comparison excludes rather than patches
        std::string cells[2];
        bool feasible = true;
        EstimateResult results[2];
        for (int m = 0; m < 2; ++m) {
            spec.model = m == 0 ? Model::F : Model::L;
            try {
                results[m] = estimate(data, spec);
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%9.3f %9.3f %8.3f", results[m].estimate,
                              results[m].se, results[m].p_value);
                cells[m] = buf;
            } catch (const EstimationError& e) {
                feasible = false;
                mp_note = e.what();
            }
        }
        if (!feasible) {
            std::printf("%-8s | excluded: %s\n", to_string(strategy).c_str(), mp_note.c_str());
            continue;
        }
        std::printf("%-8s | %s | %s\n", to_string(strategy).c_str(), cells[0].c_str(),
                    cells[1].c_str());
        if (!out.empty()) {
            write_result_csv(out, to_string(strategy), "F", results[0], wrote_header);
            wrote_header = true;
            write_result_csv(out, to_string(strategy), "L", results[1], true);
        }
    }

    EstimatorSpec ney = base;
    ney.strategy = Strategy::Neyman;
    const EstimateResult reference = neyman(data, ney);
    std::printf("reference: neyman estimate %.3f, se %.3f, p-value %.3f\n", reference.estimate,
                reference.se, reference.p_value);
    if (!out.empty()) write_result_csv(out, "neyman", "F", reference, wrote_header);
    return kExitOk;
}

int run_simulate(const std::string& scenario, long n, long reps, unsigned long long seed, long n1,
                 double effect, const SpecFlags& spec_flags, const std::string& out) {
    if (reps < 2) throw InputError("--reps must be at least 2");

    PotentialPopulation pop;
    if (scenario == "tdep") {
        pop = gen_treatment_dependent(n, seed, effect);
    } else {
        pop = gen_scenario(scenario_from_string(scenario), n, seed);
    }

    EstimatorSpec base = make_spec(spec_flags);
    std::vector<McSpec> specs;
    EstimatorSpec ney = base;
    ney.strategy = Strategy::Neyman;
    specs.push_back({"neyman", ney});
    for (const Strategy strategy : {Strategy::CompleteCase, Strategy::CompleteCovariate,
                                    Strategy::Imputation, Strategy::Mim, Strategy::Mp}) {
        for (const Model model : {Model::F, Model::L}) {
            EstimatorSpec spec = base;
            spec.strategy = strategy;
            spec.model = model;
            specs.push_back({to_string(strategy) + "." + to_string(model), spec});
        }
    }

    McOptions options;
    options.n1 = n1 > 0 ? n1 : 0;
    const McSummary summary = monte_carlo(pop, specs, reps, seed, options);

    std::printf("scenario %s  N=%ld  (N0,N1)=(%lld,%lld)  reps=%ld  seed=%llu  tau=%.17g\n",
                scenario.c_str(), n, static_cast<long long>(n - summary.n1),
                static_cast<long long>(summary.n1), reps, seed, summary.tau);
    std::printf("%-10s %10s %9s %10s %9s %9s %9s %9s %9s\n", "name", "bias", "(mcse)", "sd",
                "(mcse)", "rmse", "mean_se", "coverage", "(mcse)");
    for (const auto& entry : summary.per_spec) {
        std::printf("%-10s %10.4f %9.4f %10.4f %9.4f %9.4f %9.4f %9.4f %9.4f\n",
                    entry.name.c_str(), entry.mean_bias, entry.mcse_bias, entry.sd, entry.mcse_sd,
                    entry.rmse, entry.mean_se, entry.coverage, entry.mcse_coverage);
    }
    if (!out.empty()) {
        write_summary_csv(out + "_summary.csv", summary);
        write_replicates_csv(out + "_replicates.csv", summary);
    }
    return kExitOk;
}

int run_frt(const DataFlags& data_flags, const SpecFlags& spec_flags, int draws,
            unsigned long long seed) {
    const ExperimentData data = load_data(data_flags);
    const EstimatorSpec spec = make_spec(spec_flags);
    const FrtResult r = frt_studentized(data, spec, draws, seed);
    std::printf("p-value       %.6g\n", r.p_value);
    std::printf("t observed    %.6g\n", r.t_observed);
    std::printf("valid draws   %d\n", r.valid_draws);
    std::printf("degenerate    %d\n", r.degenerate_draws);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"randadj: regression adjustment for randomized experiments with missing covariates"};
    app.require_subcommand(1);

    DataFlags data_flags;
    SpecFlags spec_flags;
    std::string out;
    std::string cluster_fit = "total";
    std::string scenario = "i";
    long n = 500;
    long reps = 1000;
    long n1 = 0;
    unsigned long long seed = 1;
    double effect = 0.3;
    int frt_draws = 2000;

    CLI::App* analyze = app.add_subcommand("analyze", "estimate the effect on a dataset");
    add_data_flags(analyze, data_flags);
    add_spec_flags(analyze, spec_flags);
    analyze->add_option("--out", out, "write the estimate row as CSV");
    analyze->add_option("--cluster-fit", cluster_fit,
                        "unit|total regression under cluster randomization (default total)");

    CLI::App* compare = app.add_subcommand("compare", "side-by-side strategy table");
    add_data_flags(compare, data_flags);
    add_spec_flags(compare, spec_flags);
    compare->add_option("--out", out, "write rows as CSV");

    CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo over a benchmark population");
    simulate->add_option("--scenario", scenario, "i|ii|iii|tdep");
    simulate->add_option("--n", n, "population size");
    simulate->add_option("--reps", reps, "assignment replicates");
    simulate->add_option("--seed", seed, "master seed");
    simulate->add_option("--n1", n1, "treated arm size (default 0.2N)");
    simulate->add_option("--effect", effect, "missingness shift for the tdep scenario");
    add_spec_flags(simulate, spec_flags);
    simulate->add_option("--out", out, "prefix for <out>_summary.csv and <out>_replicates.csv");

    CLI::App* frt = app.add_subcommand("frt", "studentized Fisher randomization test");
    add_data_flags(frt, data_flags);
    add_spec_flags(frt, spec_flags);
    frt->add_option("--frt-draws", frt_draws, "permutation draws (default 2000)");
    frt->add_option("--seed", seed, "master seed");

    try {
        app.parse(argc, argv);
        if (analyze->parsed()) return run_analyze(data_flags, spec_flags, out, cluster_fit);
        if (compare->parsed()) return run_compare(data_flags, spec_flags, out);
        if (simulate->parsed())
            return run_simulate(scenario, n, reps, seed, n1, effect, spec_flags, out);
        if (frt->parsed()) return run_frt(data_flags, spec_flags, frt_draws, seed);
        return kExitInput;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    } catch (const randadj::InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    } catch (const randadj::EstimationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitEstimation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kExitInternal;
    }
}
