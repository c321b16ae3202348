#include "cli.hpp"
#include "trial_csv.hpp"

#include "pretest/design.hpp"
#include "pretest/estimators.hpp"
#include "pretest/frt.hpp"
#include "pretest/refdist.hpp"
#include "pretest/simharness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

namespace pretest::cli {

namespace {

using json = nlohmann::ordered_json;

json number(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

json vector_json(const Vector& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
    return out;
}

struct ThresholdFlags {
    std::string a;
    double quantile = -1.0;

    void add(CLI::App& cmd) {
        cmd.add_option("--a", a, "balance threshold: a number, inf, or chi2_quantile(p)");
        cmd.add_option("--a-quantile", quantile, "balance threshold as the chi2_J quantile at level p");
    }

    Threshold resolve_spec() const {
        if (!a.empty() && quantile >= 0.0) fail(ErrorCode::Config, "give either --a or --a-quantile, not both");
        if (quantile >= 0.0) {
            require(quantile <= 1.0, ErrorCode::Config, "--a-quantile must lie in [0, 1]");
            return Threshold::chi2_quantile(quantile);
        }
        if (!a.empty()) return Threshold::parse(a);
        return Threshold::chi2_quantile(0.5);
    }
};

struct FrtFlags {
    std::vector<std::string> statistics;
    std::string mode = "unconditional";
    Index reps = 1000;
    std::uint64_t enumeration_cap = 100'000;
    Index prepivot_draws = 10'000;

    void add(CLI::App& cmd) {
        cmd.add_option("--statistic", statistics, "FRT statistic (repeatable), e.g. t_L, tau_PT_L, prepivot_t_PT_L");
        cmd.add_option("--mode", mode, "unconditional or conditional (on the observed balance indicator)");
        cmd.add_option("--reps", reps, "Monte Carlo permutations when enumeration is too large");
        cmd.add_option("--enumeration-cap", enumeration_cap, "enumerate all assignments when C(N, N1) <= cap");
        cmd.add_option("--prepivot-draws", prepivot_draws, "reference draws per component for prepivoted statistics");
    }
};

struct CommonFlags {
    double alpha = 0.05;
    std::string hc = "HC2";
    std::optional<std::uint64_t> seed;
    int threads = 1;

    void add(CLI::App& cmd) {
        cmd.add_option("--alpha", alpha, "significance level");
        cmd.add_option("--hc", hc, "robust covariance variant HC0..HC3");
        cmd.add_option("--seed", seed, "seed for every random quantity (required whenever randomness is used)");
        cmd.add_option("--threads", threads, "worker threads");
    }

    std::uint64_t require_seed(const std::string& why) const {
        if (!seed) fail(ErrorCode::Config, "--seed is required because " + why);
        return *seed;
    }
};

void emit(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

json input_json(const TrialTable& table) {
    json j;
    j["n"] = table.trial.size();
    j["n1"] = table.trial.assignment().n1();
    j["covariates"] = table.covariate_names;
    return j;
}

json report_json(const EstimateReport& r, const char* ci_style) {
    json j;
    j["method"] = to_string(r.method);
    j["tau_hat"] = number(r.tau_hat);
    j["se_hat"] = number(r.se_hat);
    j["ci"] = json::array({number(r.ci_lo), number(r.ci_hi)});
    j["ci_style"] = ci_style;
    j["alpha"] = r.alpha;
    if (r.adjusted_arm_used) j["adjusted_arm_used"] = to_string(*r.adjusted_arm_used);
    return j;
}

json frt_json(const FRTResult& r) {
    json j;
    j["statistic"] = to_string(r.statistic);
    j["mode"] = to_string(r.mode);
    j["p_value"] = number(r.p_value);
    j["observed_stat"] = number(r.observed_stat);
    j["reps_used"] = r.reps_used;
    j["exact"] = r.exact;
    if (r.phi_observed) j["phi_observed"] = *r.phi_observed ? 1 : 0;
    return j;
}

// FRT results, or nothing when no statistic was requested.
json run_frt_flags(const TrialTable& table, const FrtFlags& flags, const CommonFlags& common, double a,
                   bool default_statistic) {
    std::vector<std::string> names = flags.statistics;
    if (names.empty()) {
        if (!default_statistic) return nullptr;
        names.push_back("t_L");
    }
    std::vector<Statistic> stats;
    for (const auto& n : names) stats.push_back(parse_statistic(n));

    FRTSpec spec;
    spec.mode = parse_frt_mode(flags.mode);
    spec.reps = flags.reps;
    spec.enumeration_cap = flags.enumeration_cap;
    spec.a = a;
    spec.alpha = common.alpha;
    spec.hc = parse_hc(common.hc);
    spec.refdraws = flags.prepivot_draws;
    spec.threads = common.threads;
    spec.validate();

    const auto n = static_cast<std::uint64_t>(table.trial.size());
    const auto n1 = static_cast<std::uint64_t>(table.trial.assignment().n1());
    const bool monte_carlo = binomial_capped(n, n1, spec.enumeration_cap) > spec.enumeration_cap;
    const bool prepivot = std::any_of(stats.begin(), stats.end(), is_prepivot);
    std::uint64_t seed = 0;
    if (monte_carlo) seed = common.require_seed("the FRT samples permutations (C(N, N1) exceeds the enumeration cap)");
    if (prepivot) seed = common.require_seed("prepivoted statistics use Monte Carlo reference draws");
    spec.ref_seed = seed;

    const auto results = run_frt_batch(table.trial, spec, stats, RngKey{seed, Stream::Permutation, 0});
    json out = json::array();
    for (const auto& r : results) out.push_back(frt_json(r));
    return out;
}

int analyze(const std::string& path, const ThresholdFlags& threshold, const CommonFlags& common,
            const std::string& ci_style, Index refdraws, const FrtFlags& frt, std::ostream& out) {
    require(ci_style == "normal" || ci_style == "pt_specific", ErrorCode::Config,
            "--ci-style must be normal or pt_specific");
    require(common.alpha > 0.0 && common.alpha < 1.0, ErrorCode::Config, "--alpha must lie in (0, 1)");
    const TrialTable table = read_trial_csv(path);
    const ObservedTrial& trial = table.trial;
    const Threshold spec = threshold.resolve_spec();
    const double a = spec.resolve(trial.covariates());
    const HcVariant hc = parse_hc(common.hc);

    TrialAnalyzer analyzer(trial.x(), {hc, common.alpha});
    const BalanceReport balance = analyzer.balance().report(trial.assignment(), a);
    const EstimateReport n = analyzer.estimate(Adjustment::N, trial.assignment(), trial.y());
    const EstimateReport f = analyzer.estimate(Adjustment::F, trial.assignment(), trial.y());
    const EstimateReport l = analyzer.estimate(Adjustment::L, trial.assignment(), trial.y());
    EstimateReport pt_f = compose_pt(n, f, balance);
    EstimateReport pt_l = compose_pt(n, l, balance);

    const bool specific = ci_style == "pt_specific";
    if (specific) {
        const std::uint64_t seed = common.require_seed("PT-specific intervals use Monte Carlo reference draws");
        require(refdraws >= 1, ErrorCode::Config, "--refdraws must be positive");
        const ReferenceDraws draws(trial.covariates(), a, refdraws, seed);
        const double nd = static_cast<double>(trial.size());
        for (EstimateReport* r : {&pt_f, &pt_l}) {
            PtCiInputs in;
            in.tau_hat = r->tau_hat;
            in.v_n = nd * n.se_hat * n.se_hat;
            in.v_f = nd * f.se_hat * f.se_hat;
            in.v_l = nd * l.se_hat * l.se_hat;
            in.dof = trial.covariates();
            in.a = a;
            in.phi = balance.phi;
            in.arm = r == &pt_f ? Adjustment::F : Adjustment::L;
            in.alpha = common.alpha;
            in.n = trial.size();
            const Interval ci = pt_specific_ci(in, draws);
            r->ci_lo = ci.lo;
            r->ci_hi = ci.hi;
        }
    }

    json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = "analyze";
    j["input"] = input_json(table);
    json settings;
    settings["a"] = spec.describe();
    settings["alpha"] = common.alpha;
    settings["hc"] = to_string(hc);
    settings["ci_style"] = ci_style;
    if (specific) settings["refdraws"] = refdraws;
    if (common.seed) settings["seed"] = *common.seed;
    j["settings"] = settings;
    json b;
    b["tau_x"] = vector_json(balance.tau_x);
    b["m"] = number(balance.m);
    b["a"] = number(balance.a);
    b["phi"] = balance.phi ? 1 : 0;
    j["balance"] = b;
    json estimates = json::array();
    estimates.push_back(report_json(n, "normal"));
    estimates.push_back(report_json(f, "normal"));
    estimates.push_back(report_json(l, "normal"));
    estimates.push_back(report_json(pt_f, specific ? "pt_specific" : "normal"));
    estimates.push_back(report_json(pt_l, specific ? "pt_specific" : "normal"));
    j["estimates"] = estimates;
    const json frt_results = run_frt_flags(table, frt, common, a, false);
    if (!frt_results.is_null()) j["frt"] = frt_results;
    emit(out, j);
    return kExitOk;
}

int frt(const std::string& path, const ThresholdFlags& threshold, const CommonFlags& common, const FrtFlags& flags,
        std::ostream& out) {
    const TrialTable table = read_trial_csv(path);
    const Threshold spec = threshold.resolve_spec();
    const double a = spec.resolve(table.trial.covariates());
    json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = "frt";
    j["input"] = input_json(table);
    json settings;
    settings["a"] = spec.describe();
    settings["hc"] = common.hc;
    settings["mode"] = flags.mode;
    if (common.seed) settings["seed"] = *common.seed;
    j["settings"] = settings;
    j["results"] = run_frt_flags(table, flags, common, a, true);
    emit(out, j);
    return kExitOk;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

int simulate(const std::string& path, const CommonFlags& common, bool threads_given, const std::string& output,
             bool plot_data, std::ostream& out, std::ostream& err) {
    SimulationConfig config = SimulationConfig::from_json(read_text(path));
    if (common.seed) config.seed = *common.seed;
    if (threads_given) config.threads = common.threads;
    if (!output.empty()) config.output_path = output;
    config.validate();
    const SimulationSummary summary = run_study(config);
    if (config.output_path.empty()) {
        require(!plot_data, ErrorCode::Config, "--emit-plot-data needs an output path");
        out << summary_csv(summary);
    } else {
        for (const auto& file : write_outputs(summary, config.output_path, plot_data)) err << "wrote " << file << '\n';
    }
    err << "runtime " << summary.runtime_seconds << " s\n";
    return kExitOk;
}

struct RefdistFlags {
    Index dof = 1;
    double v_n = 1.0;
    double v_f = -1.0;
    double v_l = 1.0;
    std::string arm = "L";
    Index draws = 1'000'000;
    std::vector<double> probs{0.005, 0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975, 0.995};
};

int refdist(const RefdistFlags& f, const ThresholdFlags& threshold, const CommonFlags& common, std::ostream& out) {
    require(f.dof >= 1, ErrorCode::Config, "--dof must be >= 1");
    require(f.draws >= 1, ErrorCode::Config, "--draws must be positive");
    require(f.v_n >= 0.0 && f.v_l >= 0.0, ErrorCode::Config, "variances must be >= 0");
    require(f.arm == "F" || f.arm == "L", ErrorCode::Config, "--arm must be F or L");
    for (double p : f.probs) require(p > 0.0 && p < 1.0, ErrorCode::Config, "--probs must lie in (0, 1)");
    const std::uint64_t seed = common.require_seed("quantiles come from Monte Carlo draws");
    const double a = threshold.resolve_spec().resolve(f.dof);
    const double v_f = f.v_f >= 0.0 ? f.v_f : f.v_l;
    const double v_adj = f.arm == "F" ? v_f : f.v_l;

    struct Law {
        const char* name;
        double weight;
        MixtureReference ref;
    };
    std::vector<Law> laws;
    laws.push_back({"mixture", 1.0, pt_mixture(f.dof, a, f.v_n, v_adj, f.v_l, f.draws, seed)});
    for (const auto& c : laws[0].ref.components) {
        if (c.weight <= 0.0) continue;
        MixtureComponent single = c;
        single.weight = 1.0;
        MixtureReference ref{{single}, f.draws, 0};
        // Keep the component's own substream so the rows share draws with the mixture.
        const bool inside = c.trunc.kind == Truncation::Inside;
        if (!inside) ref.components.insert(ref.components.begin(), MixtureComponent{0.0, 1.0, 0.0, {}});
        ref.seed = seed;
        laws.push_back({inside ? "phi1" : "phi0", c.weight, ref});
    }

    std::ostringstream csv;
    csv << "law,weight,p,quantile\n";
    for (const auto& law : laws) {
        const std::vector<double> q = mixture_quantiles(law.ref, f.probs);
        for (std::size_t k = 0; k < q.size(); ++k) {
            csv << law.name << ',' << format_number(law.weight) << ',' << format_number(f.probs[k]) << ','
                << format_number(q[k]) << '\n';
        }
    }
    out << csv.str();
    return kExitOk;
}

int generate(const std::string& recipe_name, double sigma_eps, const CommonFlags& common, Index n1,
             Index replication, bool population_only, const std::string& output, std::ostream& out,
             std::ostream& err) {
    const std::uint64_t seed = common.require_seed("populations and assignments are random");
    const Recipe recipe = Recipe::parse(recipe_name, sigma_eps);
    require(replication >= 0, ErrorCode::Config, "--replication must be >= 0");
    const FinitePopulation pop = generate_population(recipe, seed);
    std::string text;
    if (population_only) {
        std::ostringstream csv;
        csv << "y0,y1";
        for (Index k = 0; k < pop.covariates(); ++k) csv << ",x" << k + 1;
        csv << '\n';
        char buf[40];
        for (Index i = 0; i < pop.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", pop.y0()(i));
            csv << buf;
            std::snprintf(buf, sizeof buf, "%.17g", pop.y1()(i));
            csv << ',' << buf;
            for (Index k = 0; k < pop.covariates(); ++k) {
                std::snprintf(buf, sizeof buf, "%.17g", pop.x()(i, k));
                csv << ',' << buf;
            }
            csv << '\n';
        }
        text = csv.str();
    } else {
        const Index arm = n1 > 0 ? n1 : recipe.default_n1();
        require(arm < pop.size(), ErrorCode::Config, "--n1 must be below the population size");
        Rng rng(seed, Stream::Assignment, static_cast<std::uint64_t>(replication));
        const Assignment z = complete_randomization(pop.size(), arm, rng);
        text = trial_csv(ObservedTrial::observe(pop, z));
    }
    if (output.empty()) {
        out << text;
    } else {
        std::ofstream file(output, std::ios::binary);
        if (!file) fail(ErrorCode::Io, "cannot open " + output + " for writing");
        file << text;
        if (!file) fail(ErrorCode::Io, "write to " + output + " failed");
        err << "wrote " << output << '\n';
    }
    return kExitOk;
}

const char* hint(ErrorCode code) {
    switch (code) {
        case ErrorCode::RankDeficient:
        case ErrorCode::RankDeficientObserved:
            return "drop collinear covariates, or use fewer covariates than units per arm";
        case ErrorCode::LeverageOne:
            return "a unit determines its own fit; try --hc HC0 or HC1, or drop covariates";
        case ErrorCode::SingularCovariates:
            return "the covariate covariance is singular; remove constant or duplicated columns";
        case ErrorCode::AcceptanceExhausted:
            return "the balance region is too small or too large; choose a less extreme --a";
        case ErrorCode::EmptyConditionSet:
            return "no assignment shares the observed balance status; use --mode unconditional or another --a";
        case ErrorCode::DegenerateAnchor:
            return "try another --seed";
        default:
            return nullptr;
    }
}

int exit_code(const Error& e) {
    if (e.is_statistical()) return kExitStatistical;
    switch (e.code()) {
        case ErrorCode::Parse:
        case ErrorCode::DimensionMismatch:
        case ErrorCode::InvalidSizes:
        case ErrorCode::Io:
            return kExitInput;
        default:
            return kExitConfig;
    }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Preliminary-test covariate adjustment and randomization inference for two-arm trials"};
    app.require_subcommand(1);

    ThresholdFlags threshold;
    CommonFlags common;
    FrtFlags frt_flags;
    std::string input;

    auto* analyze_cmd = app.add_subcommand("analyze", "Balance test, the five estimators and optional FRTs for a trial CSV");
    analyze_cmd->add_option("csv", input, "trial CSV with header z,y,x1,...,xJ")->required();
    threshold.add(*analyze_cmd);
    common.add(*analyze_cmd);
    frt_flags.add(*analyze_cmd);
    std::string ci_style = "normal";
    Index refdraws = 1'000'000;
    analyze_cmd->add_option("--ci-style", ci_style, "normal or pt_specific intervals for the PT estimators");
    analyze_cmd->add_option("--refdraws", refdraws, "reference draws per component for pt_specific intervals");

    auto* frt_cmd = app.add_subcommand("frt", "Fisher randomization test for a trial CSV");
    frt_cmd->add_option("csv", input, "trial CSV with header z,y,x1,...,xJ")->required();
    threshold.add(*frt_cmd);
    common.add(*frt_cmd);
    frt_flags.add(*frt_cmd);

    auto* sim_cmd = app.add_subcommand("simulate", "Run a Monte Carlo study from a JSON config");
    std::string config_path, output;
    bool plot_data = false;
    sim_cmd->add_option("config", config_path, "study config (JSON)")->required();
    auto* sim_seed = sim_cmd->add_option("--seed", common.seed, "override the config seed");
    auto* sim_threads = sim_cmd->add_option("--threads", common.threads, "worker threads (results do not depend on it)");
    sim_cmd->add_option("--output", output, "summary CSV path; the JSON sidecar is written next to it");
    sim_cmd->add_flag("--emit-plot-data", plot_data, "also write per-replication draws and quantile/histogram CSVs");
    (void)sim_seed;

    auto* ref_cmd = app.add_subcommand("refdist", "Quantile table of the PT reference law and its two components");
    RefdistFlags ref;
    ref_cmd->add_option("--dof", ref.dof, "number of covariates J");
    ref_cmd->add_option("--v-n", ref.v_n, "v_N");
    ref_cmd->add_option("--v-f", ref.v_f, "v_F (defaults to v_L)");
    ref_cmd->add_option("--v-l", ref.v_l, "v_L");
    ref_cmd->add_option("--arm", ref.arm, "adjusted arm, F or L");
    ref_cmd->add_option("--draws", ref.draws, "draws per component");
    ref_cmd->add_option("--probs", ref.probs, "quantile levels")->delimiter(',');
    ref_cmd->add_option("--seed", common.seed, "seed of the reference draws");
    threshold.add(*ref_cmd);

    auto* gen_cmd = app.add_subcommand("generate", "Draw a simulation population and one assignment as a trial CSV");
    std::string recipe = "coverage";
    double sigma_eps = 1.0;
    Index n1 = 0, replication = 0;
    bool population_only = false;
    gen_cmd->add_option("--recipe", recipe, "efficiency, coverage, frt_p1 or frt_p2");
    gen_cmd->add_option("--sigma-eps", sigma_eps, "noise SD for the coverage recipe");
    gen_cmd->add_option("--seed", common.seed, "population seed");
    gen_cmd->add_option("--n1", n1, "treated units (default: recipe size)");
    gen_cmd->add_option("--replication", replication, "assignment index, as in the simulation harness");
    gen_cmd->add_flag("--population", population_only, "write the science table y0,y1,x1..xJ instead of a trial");
    gen_cmd->add_option("--output", output, "output path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        if (*analyze_cmd) return analyze(input, threshold, common, ci_style, refdraws, frt_flags, out);
        if (*frt_cmd) return frt(input, threshold, common, frt_flags, out);
        if (*sim_cmd) return simulate(config_path, common, sim_threads->count() > 0, output, plot_data, out, err);
        if (*ref_cmd) return refdist(ref, threshold, common, out);
        if (*gen_cmd) return generate(recipe, sigma_eps, common, n1, replication, population_only, output, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        if (const char* h = hint(e.code())) err << "hint: " << h << '\n';
        return exit_code(e);
    }
    return kExitConfig;
}

}  // namespace pretest::cli
