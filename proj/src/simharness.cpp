#include "pretest/simharness.hpp"

#include "pretest/parallel.hpp"
#include "pretest/refdist.hpp"
#include "pretest/special.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace pretest {

using json = nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Moments {
    double mean = kNaN;
    double sd = kNaN;
    double se_mean = kNaN;
    double se_sd = kNaN;
};

// Sample mean and SD (divisor R - 1); the SD's Monte Carlo error by the delta
// method from the fourth central moment.
Moments moments(const std::vector<double>& v) {
    Moments out;
    const auto r = static_cast<double>(v.size());
    if (v.empty()) return out;
    double sum = 0.0;
    for (double x : v) sum += x;
    out.mean = sum / r;
    if (v.size() == 1) {
        out.sd = 0.0;
        out.se_mean = 0.0;
        out.se_sd = 0.0;
        return out;
    }
    double m2 = 0.0, m4 = 0.0;
    for (double x : v) {
        const double d = x - out.mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    out.sd = std::sqrt(m2 / (r - 1.0));
    out.se_mean = out.sd / std::sqrt(r);
    const double pop_var = m2 / r;
    const double se_var = std::sqrt(std::max(m4 / r - pop_var * pop_var, 0.0) / r);
    out.se_sd = out.sd > 0.0 ? se_var / (2.0 * out.sd) : 0.0;
    return out;
}

// Type-1 empirical quantile: smallest x with F_n(x) >= p.
double quantile(std::vector<double> v, double p) {
    if (v.empty()) return kNaN;
    const auto n = static_cast<std::ptrdiff_t>(v.size());
    const auto k = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::ceil(p * n)) - 1, 0, n - 1);
    std::nth_element(v.begin(), v.begin() + k, v.end());
    return v[static_cast<std::size_t>(k)];
}

double rate_se(double p, double n) { return n > 0 ? std::sqrt(p * (1.0 - p) / n) : kNaN; }

std::uint64_t population_seed(std::uint64_t seed, Index p) {
    if (p == 0) return seed;
    return mix_key(RngKey{seed, Stream::Population, static_cast<std::uint64_t>(p)});
}

std::string population_id(const SimulationConfig& c, Index p) {
    if (c.population_redraws == 1) return c.config_id;
    return c.config_id + "/pop" + std::to_string(p);
}

void add(std::vector<MetricRow>& rows, const std::string& id, const std::string& method, const std::string& metric,
         double value, double se = kNaN) {
    rows.push_back({id, method, metric, value, se});
}

void add_population_rows(std::vector<MetricRow>& rows, const std::string& id, const FinitePopulation& pop, Index n1,
                         double a) {
    const double e1 = static_cast<double>(n1) / static_cast<double>(pop.size());
    add(rows, id, "population", "tau", pop.tau());
    add(rows, id, "population", "a", a);
    add(rows, id, "population", "pi_a", pi_a(pop.covariates(), a));
    const TrueParameters tp = true_parameters(pop, e1);
    for (Adjustment adj : kAdjustments) {
        const std::string s = to_string(adj);
        add(rows, id, "population", "v_" + s, tp.v[adj]);
        add(rows, id, "population", "rho_" + s, tp.rho[adj]);
        add(rows, id, "population", "kappa_" + s, tp.kappa[adj]);
    }
    const RandomizationReference rr = randomization_reference(pop, e1);
    add(rows, id, "population", "v_tilde_N", rr.v_tilde_N);
    add(rows, id, "population", "v_tilde_L", rr.v_tilde_L);
}

struct FitNeeds {
    bool n = false, f = false, l = false, specific = false;
};

FitNeeds needs_for(const std::vector<SimMethod>& methods) {
    FitNeeds need;
    for (const auto& m : methods) {
        switch (m.method) {
            case Method::N: need.n = true; break;
            case Method::F: need.f = true; break;
            case Method::L: need.l = true; break;
            case Method::PT_F: need.n = need.f = true; break;
            case Method::PT_L: need.n = need.l = true; break;
        }
        if (m.pt_specific_ci) need.n = need.f = need.l = need.specific = true;
    }
    return need;
}

SimulationSummary estimation_study(const SimulationConfig& config, bool overlay) {
    config.validate();
    require(!config.methods.empty(), ErrorCode::Config, "estimation study needs at least one method");
    const auto start = std::chrono::steady_clock::now();

    SimulationSummary summary;
    summary.config = config;
    for (const auto& m : config.methods) summary.columns.push_back(m.name());
    const FitNeeds need = needs_for(config.methods);
    const Index reps = config.replications;
    const std::size_t nm = config.methods.size();

    for (Index p = 0; p < config.population_redraws; ++p) {
        const std::uint64_t seed = population_seed(config.seed, p);
        const FinitePopulation pop = generate_population(config.recipe, seed);
        const Index n = pop.size();
        const Index n1 = config.arm_size();
        require(n1 >= 1 && n1 < n, ErrorCode::Config, "n1 must lie in [1, N-1]");
        const Index dof = pop.covariates();
        const double a = config.a_spec.resolve(dof);
        const double tau = pop.tau();
        summary.a = a;
        summary.tau.push_back(tau);
        const std::string id = population_id(config, p);

        std::optional<ReferenceDraws> reference;
        if (need.specific) reference.emplace(dof, a, config.refdraws, seed);

        std::vector<double> est(nm * static_cast<std::size_t>(reps)), lo(est.size()), hi(est.size());
        std::vector<unsigned char> phi(static_cast<std::size_t>(reps));
        std::vector<double> m_stat(static_cast<std::size_t>(reps));

        parallel_for(reps, config.threads, [&](std::int64_t begin, std::int64_t end, int) {
            TrialAnalyzer analyzer(pop.x(), {config.hc, config.alpha});
            for (std::int64_t r = begin; r < end; ++r) {
                Rng rng(seed, Stream::Assignment, static_cast<std::uint64_t>(r));
                const Assignment z = complete_randomization(n, n1, rng);
                const Vector y = pop.y0() + z.z().cwiseProduct(pop.y1() - pop.y0());
                const BalanceReport balance = analyzer.balance().report(z, a);
                std::optional<EstimateReport> fn, ff, fl;
                if (need.n) fn = analyzer.estimate(Adjustment::N, z, y);
                if (need.f) ff = analyzer.estimate(Adjustment::F, z, y);
                if (need.l) fl = analyzer.estimate(Adjustment::L, z, y);
                const auto slot = static_cast<std::size_t>(r);
                phi[slot] = balance.phi ? 1 : 0;
                m_stat[slot] = balance.m;
                for (std::size_t k = 0; k < nm; ++k) {
                    const SimMethod& m = config.methods[k];
                    EstimateReport rep;
                    switch (m.method) {
                        case Method::N: rep = *fn; break;
                        case Method::F: rep = *ff; break;
                        case Method::L: rep = *fl; break;
                        case Method::PT_F: rep = compose_pt(*fn, *ff, balance); break;
                        case Method::PT_L: rep = compose_pt(*fn, *fl, balance); break;
                    }
                    if (m.pt_specific_ci) {
                        const double nd = static_cast<double>(n);
                        PtCiInputs in;
                        in.tau_hat = rep.tau_hat;
                        in.v_n = nd * fn->se_hat * fn->se_hat;
                        in.v_f = nd * ff->se_hat * ff->se_hat;
                        in.v_l = nd * fl->se_hat * fl->se_hat;
                        in.dof = dof;
                        in.a = a;
                        in.phi = balance.phi;
                        in.arm = m.method == Method::PT_F ? Adjustment::F : Adjustment::L;
                        in.alpha = config.alpha;
                        in.n = n;
                        const Interval ci = pt_specific_ci(in, *reference);
                        rep.ci_lo = ci.lo;
                        rep.ci_hi = ci.hi;
                    }
                    const std::size_t idx = k * static_cast<std::size_t>(reps) + slot;
                    est[idx] = rep.tau_hat;
                    lo[idx] = rep.ci_lo;
                    hi[idx] = rep.ci_hi;
                }
            }
        });

        std::size_t n_phi1 = 0;
        for (unsigned char f : phi) n_phi1 += f;
        const std::size_t n_phi0 = static_cast<std::size_t>(reps) - n_phi1;
        if (overlay && n_phi1 == 0) {
            fail(ErrorCode::EmptyConditionSet, "no replication satisfied M < a; the ReM columns are empty");
        }

        add_population_rows(summary.rows, id, pop, n1, a);
        add(summary.rows, id, "all", "replications", static_cast<double>(reps));
        add(summary.rows, id, "all", "n_phi1", static_cast<double>(n_phi1));
        add(summary.rows, id, "all", "n_phi0", static_cast<double>(n_phi0));
        add(summary.rows, id, "all", "rate_phi1", static_cast<double>(n_phi1) / static_cast<double>(reps),
            rate_se(static_cast<double>(n_phi1) / static_cast<double>(reps), static_cast<double>(reps)));

        for (std::size_t k = 0; k < nm; ++k) {
            const std::string name = config.methods[k].name();
            std::vector<double> err, err_rem, len;
            err.reserve(static_cast<std::size_t>(reps));
            len.reserve(static_cast<std::size_t>(reps));
            std::size_t cover1 = 0, cover0 = 0;
            for (Index r = 0; r < reps; ++r) {
                const std::size_t idx = k * static_cast<std::size_t>(reps) + static_cast<std::size_t>(r);
                err.push_back(est[idx] - tau);
                len.push_back(hi[idx] - lo[idx]);
                const bool covered = lo[idx] <= tau && tau <= hi[idx];
                if (phi[static_cast<std::size_t>(r)]) {
                    cover1 += covered;
                    err_rem.push_back(est[idx] - tau);
                } else {
                    cover0 += covered;
                }
            }
            const Moments me = moments(err);
            const Moments ml = moments(len);
            const auto rd = static_cast<double>(reps);
            add(summary.rows, id, name, "mean", me.mean + tau, me.se_mean);
            add(summary.rows, id, name, "bias", me.mean, me.se_mean);
            add(summary.rows, id, name, "sd", me.sd, me.se_sd);
            const double cov1 = n_phi1 ? static_cast<double>(cover1) / static_cast<double>(n_phi1) : kNaN;
            const double cov0 = n_phi0 ? static_cast<double>(cover0) / static_cast<double>(n_phi0) : kNaN;
            const double cov = static_cast<double>(cover1 + cover0) / rd;
            add(summary.rows, id, name, "coverage", cov, rate_se(cov, rd));
            if (config.conditional_breakdown) {
                add(summary.rows, id, name, "coverage_phi1", cov1, rate_se(cov1, static_cast<double>(n_phi1)));
                add(summary.rows, id, name, "coverage_phi0", cov0, rate_se(cov0, static_cast<double>(n_phi0)));
            }
            add(summary.rows, id, name, "ci_length", ml.mean, ml.se_mean);
            add(summary.rows, id, name, "q025", quantile(err, 0.025));
            add(summary.rows, id, name, "q975", quantile(err, 0.975));
            if (overlay) {
                const Moments mr = moments(err_rem);
                add(summary.rows, id, name, "bias_rem", mr.mean, mr.se_mean);
                add(summary.rows, id, name, "sd_rem", mr.sd, mr.se_sd);
                add(summary.rows, id, name, "q025_rem", quantile(err_rem, 0.025));
                add(summary.rows, id, name, "q975_rem", quantile(err_rem, 0.975));
            }
        }

        for (Index r = 0; r < reps; ++r) {
            ReplicationRecord rec;
            rec.population = p;
            rec.replication = r;
            rec.m = m_stat[static_cast<std::size_t>(r)];
            rec.phi = phi[static_cast<std::size_t>(r)] != 0;
            rec.values.reserve(nm);
            for (std::size_t k = 0; k < nm; ++k) {
                rec.values.push_back(est[k * static_cast<std::size_t>(reps) + static_cast<std::size_t>(r)] - tau);
            }
            summary.records.push_back(std::move(rec));
        }
    }
    summary.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return summary;
}

}  // namespace

const char* to_string(Study s) noexcept {
    switch (s) {
        case Study::Estimation: return "estimation";
        case Study::Overlay: return "overlay";
        case Study::FrtType1: return "frt_type1";
    }
    return "?";
}

std::string SimMethod::name() const {
    std::string out = to_string(method);
    if (pt_specific_ci) out += "_specific";
    return out;
}

SimMethod SimMethod::parse(const std::string& text) {
    const std::string suffix = "_specific";
    if (text.size() > suffix.size() && text.compare(text.size() - suffix.size(), suffix.size(), suffix) == 0) {
        const Method m = parse_method(text.substr(0, text.size() - suffix.size()));
        if (m != Method::PT_F && m != Method::PT_L) {
            fail(ErrorCode::Config, "PT-specific intervals exist for PT_F and PT_L only");
        }
        return {m, true};
    }
    return {parse_method(text), false};
}

void SimulationConfig::validate() const {
    require(!config_id.empty(), ErrorCode::Config, "config_id must be nonempty");
    require(replications >= 1, ErrorCode::Config, "replications must be >= 1");
    require(threads >= 1, ErrorCode::Config, "threads must be >= 1");
    require(population_redraws >= 1, ErrorCode::Config, "population_redraws must be >= 1");
    require(alpha > 0.0 && alpha < 1.0, ErrorCode::Config, "alpha must lie in (0, 1)");
    require(refdraws >= 1, ErrorCode::Config, "refdraws must be >= 1");
    require(n1 >= 0, ErrorCode::Config, "n1 must be >= 0");
    if (recipe.kind == RecipeKind::Coverage) {
        require(recipe.sigma_eps > 0.0, ErrorCode::Config, "coverage recipe needs sigma_eps > 0");
    }
    if (study == Study::FrtType1) {
        require(frt.has_value() && !frt->statistics.empty(), ErrorCode::Config,
                "frt_type1 study needs frt.statistics");
        require(frt->reps >= 1 && frt->refdraws >= 1, ErrorCode::Config, "frt.reps and frt.refdraws must be >= 1");
    }
}

namespace {

const std::set<std::string> kConfigKeys{
    "config_id", "study",   "recipe",  "sigma_eps",          "n1",    "a",  "replications", "methods",
    "conditional_breakdown", "frt", "seed", "threads", "population_redraws", "alpha", "hc", "refdraws",
    "output_path"};
const std::set<std::string> kFrtKeys{"statistics", "mode", "reps", "enumeration_cap", "refdraws"};

template <typename T>
T get(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(ErrorCode::Config, std::string("config key '") + key + "' is missing or has the wrong type");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = get<T>(j, key);
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) fail(ErrorCode::Config, "unknown key '" + item.key() + "' in " + where);
    }
}

json number_or_string(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

}  // namespace

SimulationConfig SimulationConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::Config, std::string("config is not valid JSON: ") + e.what());
    }
    require(j.is_object(), ErrorCode::Config, "config must be a JSON object");
    reject_unknown(j, kConfigKeys, "config");

    SimulationConfig c;
    read(j, "config_id", c.config_id);
    if (j.contains("study")) {
        const auto s = get<std::string>(j, "study");
        if (s == "estimation") c.study = Study::Estimation;
        else if (s == "overlay") c.study = Study::Overlay;
        else if (s == "frt_type1") c.study = Study::FrtType1;
        else fail(ErrorCode::Config, "unknown study '" + s + "' (estimation|overlay|frt_type1)");
    }
    double sigma = 1.0;
    read(j, "sigma_eps", sigma);
    c.recipe = Recipe::parse(get<std::string>(j, "recipe"), sigma);
    read(j, "n1", c.n1);
    if (j.contains("a")) {
        const json& a = j.at("a");
        if (a.is_number()) c.a_spec = Threshold::absolute(a.get<double>());
        else if (a.is_string()) c.a_spec = Threshold::parse(a.get<std::string>());
        else fail(ErrorCode::Config, "config key 'a' must be a number or a string");
        if (c.a_spec.kind == Threshold::Kind::Value) {
            require(c.a_spec.value >= 0.0, ErrorCode::Config, "threshold a must be >= 0");
        }
    }
    read(j, "replications", c.replications);
    if (j.contains("methods")) {
        for (const auto& m : get<std::vector<std::string>>(j, "methods")) c.methods.push_back(SimMethod::parse(m));
    } else {
        for (Method m : kMethods) c.methods.push_back({m, false});
    }
    read(j, "conditional_breakdown", c.conditional_breakdown);
    if (j.contains("frt")) {
        const json& f = j.at("frt");
        require(f.is_object(), ErrorCode::Config, "config key 'frt' must be an object");
        reject_unknown(f, kFrtKeys, "frt");
        FrtStudySpec spec;
        for (const auto& s : get<std::vector<std::string>>(f, "statistics")) spec.statistics.push_back(parse_statistic(s));
        if (f.contains("mode")) spec.mode = parse_frt_mode(get<std::string>(f, "mode"));
        read(f, "reps", spec.reps);
        read(f, "enumeration_cap", spec.enumeration_cap);
        read(f, "refdraws", spec.refdraws);
        c.frt = spec;
    }
    require(j.contains("seed"), ErrorCode::Config, "config key 'seed' is required");
    c.seed = get<std::uint64_t>(j, "seed");
    read(j, "threads", c.threads);
    read(j, "population_redraws", c.population_redraws);
    read(j, "alpha", c.alpha);
    if (j.contains("hc")) c.hc = parse_hc(get<std::string>(j, "hc"));
    read(j, "refdraws", c.refdraws);
    read(j, "output_path", c.output_path);
    c.validate();
    return c;
}

namespace {

json config_json(const SimulationConfig& c) {
    json j;
    j["config_id"] = c.config_id;
    j["study"] = to_string(c.study);
    j["recipe"] = c.recipe.name();
    if (c.recipe.kind == RecipeKind::Coverage) j["sigma_eps"] = c.recipe.sigma_eps;
    j["n1"] = c.arm_size();
    j["a"] = c.a_spec.describe();
    j["replications"] = c.replications;
    json methods = json::array();
    for (const auto& m : c.methods) methods.push_back(m.name());
    j["methods"] = methods;
    j["conditional_breakdown"] = c.conditional_breakdown;
    if (c.frt) {
        json f;
        json stats = json::array();
        for (Statistic s : c.frt->statistics) stats.push_back(to_string(s));
        f["statistics"] = stats;
        f["mode"] = to_string(c.frt->mode);
        f["reps"] = c.frt->reps;
        f["enumeration_cap"] = c.frt->enumeration_cap;
        f["refdraws"] = c.frt->refdraws;
        j["frt"] = f;
    }
    j["seed"] = c.seed;
    j["population_redraws"] = c.population_redraws;
    j["alpha"] = c.alpha;
    j["hc"] = to_string(c.hc);
    j["refdraws"] = c.refdraws;
    // threads and output_path do not affect results and are left out of the echo.
    return j;
}

}  // namespace

std::string SimulationConfig::to_json() const { return config_json(*this).dump(2); }

const MetricRow& SimulationSummary::row(const std::string& method, const std::string& metric) const {
    for (const auto& r : rows) {
        if (r.method == method && r.metric == metric) return r;
    }
    fail(ErrorCode::InvalidArgument, "no metric '" + metric + "' for '" + method + "'");
}

SimulationSummary run_simulation(const SimulationConfig& config) { return estimation_study(config, false); }

SimulationSummary rem_vs_cr_overlay(const SimulationConfig& config) { return estimation_study(config, true); }

SimulationSummary frt_type1_study(const SimulationConfig& config) {
    config.validate();
    require(config.frt.has_value(), ErrorCode::Config, "frt_type1 study needs an frt section");
    const auto start = std::chrono::steady_clock::now();
    const FrtStudySpec& fs = *config.frt;

    SimulationSummary summary;
    summary.config = config;
    for (Statistic s : fs.statistics) summary.columns.push_back(to_string(s));
    const Index reps = config.replications;
    const std::size_t ns = fs.statistics.size();
    const bool needs_reference = std::any_of(fs.statistics.begin(), fs.statistics.end(), is_prepivot);

    for (Index p = 0; p < config.population_redraws; ++p) {
        const std::uint64_t seed = population_seed(config.seed, p);
        const FinitePopulation pop = generate_population(config.recipe, seed);
        const Index n = pop.size();
        const Index n1 = config.arm_size();
        require(n1 >= 1 && n1 < n, ErrorCode::Config, "n1 must lie in [1, N-1]");
        const Index dof = pop.covariates();
        const double a = config.a_spec.resolve(dof);
        summary.a = a;
        summary.tau.push_back(pop.tau());
        const std::string id = population_id(config, p);

        FRTSpec spec;
        spec.mode = fs.mode;
        spec.reps = fs.reps;
        spec.enumeration_cap = fs.enumeration_cap;
        spec.a = a;
        spec.alpha = config.alpha;
        spec.hc = config.hc;
        spec.refdraws = fs.refdraws;
        spec.ref_seed = seed;
        spec.threads = 1;
        std::optional<ReferenceDraws> reference;
        if (needs_reference) reference.emplace(dof, a, fs.refdraws, seed);

        std::vector<double> pvals(ns * static_cast<std::size_t>(reps));
        std::vector<unsigned char> phi(static_cast<std::size_t>(reps));
        std::vector<double> m_stat(static_cast<std::size_t>(reps));
        const BalanceChecker checker(pop.x());

        parallel_for(reps, config.threads, [&](std::int64_t begin, std::int64_t end, int) {
            for (std::int64_t r = begin; r < end; ++r) {
                Rng rng(seed, Stream::Assignment, static_cast<std::uint64_t>(r));
                const Assignment z = complete_randomization(n, n1, rng);
                const ObservedTrial trial = ObservedTrial::observe(pop, z);
                const auto results = run_frt_batch(trial, spec, fs.statistics,
                                                   RngKey{seed, Stream::Permutation, static_cast<std::uint64_t>(r)},
                                                   reference ? &*reference : nullptr);
                const auto slot = static_cast<std::size_t>(r);
                m_stat[slot] = checker.mahalanobis(z);
                phi[slot] = m_stat[slot] < a ? 1 : 0;
                for (std::size_t k = 0; k < ns; ++k) pvals[k * static_cast<std::size_t>(reps) + slot] = results[k].p_value;
            }
        });

        std::size_t n_phi1 = 0;
        for (unsigned char f : phi) n_phi1 += f;
        add_population_rows(summary.rows, id, pop, n1, a);
        add(summary.rows, id, "all", "replications", static_cast<double>(reps));
        add(summary.rows, id, "all", "n_phi1", static_cast<double>(n_phi1));
        add(summary.rows, id, "all", "n_phi0", static_cast<double>(static_cast<std::size_t>(reps) - n_phi1));

        const auto rd = static_cast<double>(reps);
        for (std::size_t k = 0; k < ns; ++k) {
            const std::string name = to_string(fs.statistics[k]);
            std::vector<double> pv(pvals.begin() + static_cast<std::ptrdiff_t>(k * static_cast<std::size_t>(reps)),
                                   pvals.begin() + static_cast<std::ptrdiff_t>((k + 1) * static_cast<std::size_t>(reps)));
            for (double alpha : kAlphaGrid) {
                std::size_t rejected = 0;
                for (double v : pv) rejected += v <= alpha;
                const double rate = static_cast<double>(rejected) / rd;
                char metric[32];
                std::snprintf(metric, sizeof metric, "reject_%.2f", alpha);
                add(summary.rows, id, name, metric, rate, rate_se(rate, rd));
            }
            const Moments mp = moments(pv);
            add(summary.rows, id, name, "mean_p", mp.mean, mp.se_mean);
        }

        for (Index r = 0; r < reps; ++r) {
            ReplicationRecord rec;
            rec.population = p;
            rec.replication = r;
            rec.m = m_stat[static_cast<std::size_t>(r)];
            rec.phi = phi[static_cast<std::size_t>(r)] != 0;
            for (std::size_t k = 0; k < ns; ++k) {
                rec.values.push_back(pvals[k * static_cast<std::size_t>(reps) + static_cast<std::size_t>(r)]);
            }
            summary.records.push_back(std::move(rec));
        }
    }
    summary.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return summary;
}

SimulationSummary run_study(const SimulationConfig& config) {
    switch (config.study) {
        case Study::Estimation: return run_simulation(config);
        case Study::Overlay: return rem_vs_cr_overlay(config);
        case Study::FrtType1: return frt_type1_study(config);
    }
    fail(ErrorCode::Config, "unknown study");
}

std::string format_number(double v) {
    if (std::isnan(v)) return "NA";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::string summary_csv(const SimulationSummary& summary) {
    std::ostringstream out;
    out << "config_id,method,metric,value,mc_se\n";
    for (const auto& r : summary.rows) {
        out << r.config_id << ',' << r.method << ',' << r.metric << ',' << format_number(r.value) << ','
            << format_number(r.mc_se) << '\n';
    }
    return out.str();
}

std::string summary_json(const SimulationSummary& summary) {
    json j;
    j["schema_version"] = 1;
    j["config"] = config_json(summary.config);
    j["a"] = number_or_string(summary.a);
    json pops = json::array();
    for (std::size_t p = 0; p < summary.tau.size(); ++p) {
        json item;
        item["index"] = p;
        item["tau"] = summary.tau[p];
        pops.push_back(item);
    }
    j["populations"] = pops;
    json rows = json::array();
    for (const auto& r : summary.rows) {
        json item;
        item["config_id"] = r.config_id;
        item["method"] = r.method;
        item["metric"] = r.metric;
        item["value"] = number_or_string(r.value);
        item["mc_se"] = number_or_string(r.mc_se);
        rows.push_back(item);
    }
    j["metrics"] = rows;
    return j.dump(2) + "\n";
}

std::string plot_draws_csv(const SimulationSummary& summary) {
    std::ostringstream out;
    const bool frt = summary.config.study == Study::FrtType1;
    out << "config_id,population,replication,phi,m,method," << (frt ? "p_value" : "error") << '\n';
    for (const auto& rec : summary.records) {
        const std::string id = population_id(summary.config, rec.population);
        for (std::size_t k = 0; k < rec.values.size(); ++k) {
            out << id << ',' << rec.population << ',' << rec.replication << ',' << (rec.phi ? 1 : 0) << ','
                << format_number(rec.m) << ',' << summary.columns[k] << ',' << format_number(rec.values[k]) << '\n';
        }
    }
    return out.str();
}

std::string plot_quantiles_csv(const SimulationSummary& summary) {
    std::ostringstream out;
    out << "config_id,population,method,design,q025,q975,sd\n";
    const Index pops = summary.config.population_redraws;
    for (Index p = 0; p < pops; ++p) {
        const std::string id = population_id(summary.config, p);
        for (std::size_t k = 0; k < summary.columns.size(); ++k) {
            std::vector<double> cr, rem;
            for (const auto& rec : summary.records) {
                if (rec.population != p) continue;
                cr.push_back(rec.values[k]);
                if (rec.phi) rem.push_back(rec.values[k]);
            }
            const auto line = [&](const char* design, const std::vector<double>& v) {
                out << id << ',' << p << ',' << summary.columns[k] << ',' << design << ','
                    << format_number(quantile(v, 0.025)) << ',' << format_number(quantile(v, 0.975)) << ','
                    << format_number(moments(v).sd) << '\n';
            };
            line("CR", cr);
            line("ReM", rem);
        }
    }
    return out.str();
}

std::string plot_histogram_csv(const SimulationSummary& summary, int bins) {
    std::ostringstream out;
    out << "config_id,population,statistic,bin_lo,bin_hi,count,density\n";
    const Index pops = summary.config.population_redraws;
    for (Index p = 0; p < pops; ++p) {
        const std::string id = population_id(summary.config, p);
        for (std::size_t k = 0; k < summary.columns.size(); ++k) {
            std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
            std::size_t total = 0;
            for (const auto& rec : summary.records) {
                if (rec.population != p) continue;
                const double v = rec.values[k];
                const auto b = std::clamp(static_cast<int>(std::floor(v * bins)), 0, bins - 1);
                ++counts[static_cast<std::size_t>(b)];
                ++total;
            }
            for (int b = 0; b < bins; ++b) {
                const double width = 1.0 / bins;
                const double density =
                    total ? static_cast<double>(counts[static_cast<std::size_t>(b)]) / (static_cast<double>(total) * width) : 0.0;
                out << id << ',' << p << ',' << summary.columns[k] << ',' << format_number(b * width) << ','
                    << format_number((b + 1) * width) << ',' << counts[static_cast<std::size_t>(b)] << ','
                    << format_number(density) << '\n';
            }
        }
    }
    return out.str();
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) fail(ErrorCode::Io, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) fail(ErrorCode::Io, "write to " + path.string() + " failed");
}

}  // namespace

std::vector<std::string> write_outputs(const SimulationSummary& summary, const std::string& path, bool plot_data) {
    require(!path.empty(), ErrorCode::Config, "no output path given");
    const std::filesystem::path csv(path);
    const std::filesystem::path dir = csv.parent_path();
    const std::string stem = csv.stem().string();
    std::vector<std::string> written;
    const auto emit = [&](const std::filesystem::path& p, const std::string& text) {
        write_file(p, text);
        written.push_back(p.string());
    };
    emit(csv, summary_csv(summary));
    emit(dir / (stem + ".json"), summary_json(summary));
    if (plot_data) {
        emit(dir / (stem + (summary.config.study == Study::FrtType1 ? "_pvalues.csv" : "_draws.csv")),
             plot_draws_csv(summary));
        if (summary.config.study == Study::FrtType1) emit(dir / (stem + "_histogram.csv"), plot_histogram_csv(summary));
        else emit(dir / (stem + "_quantiles.csv"), plot_quantiles_csv(summary));
    }
    return written;
}

}  // namespace pretest
