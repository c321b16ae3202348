#include "pretest/frt.hpp"

#include "pretest/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace pretest {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct StatisticTraits {
    Adjustment adj;  // arm for PT statistics
    bool pt;
    bool studentized;
    bool prepivot;
};

StatisticTraits traits(Statistic s) {
    switch (s) {
        case Statistic::tau_N: return {Adjustment::N, false, false, false};
        case Statistic::tau_F: return {Adjustment::F, false, false, false};
        case Statistic::tau_L: return {Adjustment::L, false, false, false};
        case Statistic::tau_PT_F: return {Adjustment::F, true, false, false};
        case Statistic::tau_PT_L: return {Adjustment::L, true, false, false};
        case Statistic::t_N: return {Adjustment::N, false, true, false};
        case Statistic::t_F: return {Adjustment::F, false, true, false};
        case Statistic::t_L: return {Adjustment::L, false, true, false};
        case Statistic::t_PT_F: return {Adjustment::F, true, true, false};
        case Statistic::t_PT_L: return {Adjustment::L, true, true, false};
        case Statistic::prepivot_PT_F: return {Adjustment::F, true, false, true};
        case Statistic::prepivot_PT_L: return {Adjustment::L, true, false, true};
        case Statistic::prepivot_t_PT_F: return {Adjustment::F, true, true, true};
        case Statistic::prepivot_t_PT_L: return {Adjustment::L, true, true, true};
    }
    return {Adjustment::N, false, false, false};
}

double t_ratio(double tau, double se) {
    if (se > 0.0) return tau / se;
    if (tau == 0.0) return 0.0;
    return tau > 0.0 ? kInf : -kInf;
}

double unit_ratio(double num, double den) {
    if (!(den > 0.0)) return 1.0;
    return std::clamp(num / den, 0.0, 1.0);
}

bool next_combination(std::vector<Index>& c, Index n) {
    const auto k = static_cast<Index>(c.size());
    Index i = k - 1;
    while (i >= 0 && c[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) return false;
    ++c[static_cast<std::size_t>(i)];
    for (Index j = i + 1; j < k; ++j) c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] + 1;
    return true;
}

Assignment from_combination(const std::vector<Index>& c, Index n) {
    Vector z = Vector::Zero(n);
    for (Index i : c) z(i) = 1.0;
    return Assignment(std::move(z));
}

}  // namespace

const char* to_string(Statistic s) noexcept {
    switch (s) {
        case Statistic::tau_N: return "tau_N";
        case Statistic::tau_F: return "tau_F";
        case Statistic::tau_L: return "tau_L";
        case Statistic::tau_PT_F: return "tau_PT_F";
        case Statistic::tau_PT_L: return "tau_PT_L";
        case Statistic::t_N: return "t_N";
        case Statistic::t_F: return "t_F";
        case Statistic::t_L: return "t_L";
        case Statistic::t_PT_F: return "t_PT_F";
        case Statistic::t_PT_L: return "t_PT_L";
        case Statistic::prepivot_PT_F: return "prepivot_PT_F";
        case Statistic::prepivot_PT_L: return "prepivot_PT_L";
        case Statistic::prepivot_t_PT_F: return "prepivot_t_PT_F";
        case Statistic::prepivot_t_PT_L: return "prepivot_t_PT_L";
    }
    return "?";
}

Statistic parse_statistic(const std::string& text) {
    for (Statistic s : kStatistics) {
        if (text == to_string(s)) return s;
    }
    fail(ErrorCode::Config, "unknown statistic '" + text + "'");
}

bool is_prepivot(Statistic s) noexcept { return traits(s).prepivot; }

const char* to_string(FrtMode m) noexcept { return m == FrtMode::Conditional ? "conditional" : "unconditional"; }

FrtMode parse_frt_mode(const std::string& text) {
    if (text == "unconditional") return FrtMode::Unconditional;
    if (text == "conditional") return FrtMode::Conditional;
    fail(ErrorCode::Config, "unknown FRT mode '" + text + "' (unconditional|conditional)");
}

void FRTSpec::validate() const {
    require(reps >= 1, ErrorCode::Config, "reps must be positive");
    require(a >= 0.0, ErrorCode::Config, "threshold a must be >= 0");
    require(alpha > 0.0 && alpha < 1.0, ErrorCode::Config, "alpha must lie in (0, 1)");
    require(refdraws >= 1, ErrorCode::Config, "refdraws must be positive");
    require(threads >= 1, ErrorCode::Config, "threads must be positive");
}

RandomizationReference randomization_reference(const FinitePopulation& pop, double e1) {
    const TrueParameters tp = true_parameters(pop, e1);
    RandomizationReference out;
    const double tau2 = tp.tau * tp.tau;
    out.v_tilde_N = tp.s2_control[Adjustment::N] / tp.e1 + tp.s2_treated[Adjustment::N] / tp.e0 + tau2;
    out.v_tilde_L = tp.s2_control[Adjustment::F] / tp.e1 + tp.s2_treated[Adjustment::F] / tp.e0 + tau2;
    out.rho_tilde_N = unit_ratio(out.v_tilde_L, out.v_tilde_N);
    return out;
}

StatisticEvaluator::StatisticEvaluator(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& y,
                                       const FRTSpec& spec, const ReferenceDraws* reference)
    : y_(y), spec_(spec), reference_(reference), analyzer_(x, {spec.hc, spec.alpha}) {}

const EstimateReport* StatisticEvaluator::fit(Adjustment adj, const Assignment& z, bool observed) {
    const auto slot = static_cast<std::size_t>(adj);
    if (!tried_[slot]) {
        tried_[slot] = true;
        try {
            fits_[slot] = analyzer_.estimate(adj, z, y_);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::RankDeficient && e.code() != ErrorCode::LeverageOne) throw;
            if (observed) {
                fail(ErrorCode::RankDeficientObserved,
                     std::string("the observed data cannot fit regression ") + to_string(adj) + ": " + e.what());
            }
            fits_[slot].reset();
        }
    }
    return fits_[slot] ? &*fits_[slot] : nullptr;
}

bool StatisticEvaluator::phi(const Assignment& z) { return analyzer_.balance().mahalanobis(z) < spec_.a; }

bool StatisticEvaluator::cached_phi(const Assignment& z) {
    if (!phi_) phi_ = phi(z);
    return *phi_;
}

double StatisticEvaluator::mahalanobis(const Assignment& z) { return analyzer_.balance().mahalanobis(z); }

double StatisticEvaluator::prepivot(Adjustment arm, bool studentized, const Assignment& z, bool observed) {
    require(reference_ != nullptr, ErrorCode::InvalidArgument, "prepivoted statistics need reference draws");
    const bool balanced = cached_phi(z);
    const EstimateReport* fn = fit(Adjustment::N, z, observed);
    const EstimateReport* fa = fit(arm, z, observed);
    const EstimateReport* fl = fit(Adjustment::L, z, observed);
    if (fn == nullptr || fa == nullptr || fl == nullptr) return kInf;

    const double n = static_cast<double>(z.size());
    const double v_n = n * fn->se_hat * fn->se_hat;
    const double v_a = n * fa->se_hat * fa->se_hat;
    const double v_l = n * fl->se_hat * fl->se_hat;
    const EstimateReport& chosen = balanced ? *fn : *fa;

    double t = 0.0;
    double in_eps = 0.0, in_trunc = 0.0, out_eps = 0.0, out_trunc = 0.0;
    if (studentized) {
        t = std::abs(t_ratio(chosen.tau_hat, chosen.se_hat));
        const double rho_n = unit_ratio(v_l, v_n);
        const double rho_a = unit_ratio(v_l, v_a);
        in_eps = std::sqrt(rho_n);
        in_trunc = std::sqrt(1.0 - rho_n);
        out_eps = std::sqrt(rho_a);
        out_trunc = std::sqrt(1.0 - rho_a);
    } else {
        t = std::sqrt(n) * std::abs(chosen.tau_hat);
        in_eps = out_eps = std::sqrt(v_l);
        in_trunc = std::sqrt(std::max(v_n - v_l, 0.0));
        out_trunc = std::sqrt(std::max(v_a - v_l, 0.0));
    }
    if (std::isinf(t)) return 1.0;

    const double pi = reference_->pi();
    double cdf = 0.0;
    if (pi > 0.0) cdf += pi * reference_->abs_cdf(Truncation::Inside, in_eps, in_trunc, t);
    if (pi < 1.0) cdf += (1.0 - pi) * reference_->abs_cdf(Truncation::Outside, out_eps, out_trunc, t);
    return std::clamp(cdf, 0.0, 1.0);
}

double StatisticEvaluator::value(Statistic s, const Assignment& z, bool observed) {
    const StatisticTraits tr = traits(s);
    if (tr.prepivot) return prepivot(tr.adj, tr.studentized, z, observed);
    Adjustment adj = tr.adj;
    if (tr.pt && cached_phi(z)) adj = Adjustment::N;
    const EstimateReport* f = fit(adj, z, observed);
    if (f == nullptr) return kInf;
    return tr.studentized ? t_ratio(f->tau_hat, f->se_hat) : f->tau_hat;
}

void StatisticEvaluator::evaluate(const Assignment& z, std::span<const Statistic> stats, std::span<double> out,
                                  bool observed) {
    require(stats.size() == out.size(), ErrorCode::DimensionMismatch, "one output slot per statistic");
    tried_.fill(false);
    for (auto& f : fits_) f.reset();
    phi_.reset();
    for (std::size_t k = 0; k < stats.size(); ++k) out[k] = value(stats[k], z, observed);
}

double StatisticEvaluator::evaluate(const Assignment& z, Statistic s, bool observed) {
    double out = 0.0;
    evaluate(z, std::span<const Statistic>(&s, 1), std::span<double>(&out, 1), observed);
    return out;
}

bool at_least_as_extreme(Statistic s, double value, double observed) noexcept {
    if (!is_prepivot(s)) {
        value = std::abs(value);
        observed = std::abs(observed);
    }
    // Relative slack so that floating-point noise in equal statistics counts as a tie.
    return value >= observed - 1e-10 * std::max(1.0, std::abs(observed));
}

std::uint64_t binomial_capped(std::uint64_t n, std::uint64_t k, std::uint64_t cap) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 c = 1;
    for (std::uint64_t i = 0; i < k; ++i) {
        c = c * (n - i) / (i + 1);
        if (c > cap) return cap + 1;
    }
    return static_cast<std::uint64_t>(c);
}

std::vector<Index> unrank_combination(std::uint64_t rank, Index n, Index k) {
    const auto big = std::numeric_limits<std::uint64_t>::max() - 1;
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(k));
    Index next = 0;
    for (Index i = 0; i < k; ++i) {
        for (Index c = next;; ++c) {
            require(c < n, ErrorCode::InvalidArgument, "combination rank out of range");
            const std::uint64_t block = binomial_capped(static_cast<std::uint64_t>(n - c - 1),
                                                        static_cast<std::uint64_t>(k - i - 1), big);
            if (rank < block) {
                out.push_back(c);
                next = c + 1;
                break;
            }
            rank -= block;
        }
    }
    return out;
}

std::vector<FRTResult> run_frt_batch(const ObservedTrial& trial, const FRTSpec& spec,
                                     std::span<const Statistic> stats, const RngKey& key,
                                     const ReferenceDraws* reference) {
    spec.validate();
    require(!stats.empty(), ErrorCode::InvalidArgument, "no statistics requested");
    const bool conditional = spec.mode == FrtMode::Conditional;
    const bool needs_reference = std::any_of(stats.begin(), stats.end(), is_prepivot);

    std::unique_ptr<ReferenceDraws> owned;
    if (needs_reference && reference == nullptr) {
        owned = std::make_unique<ReferenceDraws>(trial.covariates(), spec.a, spec.refdraws, spec.ref_seed);
        reference = owned.get();
    }
    if (needs_reference) {
        require(reference->dof() == trial.covariates() && reference->a() == spec.a, ErrorCode::InvalidArgument,
                "reference draws were built for a different J or a");
    }

    const std::size_t m = stats.size();
    const Assignment& z_obs = trial.assignment();
    StatisticEvaluator observed_eval(trial.x(), trial.y(), spec, reference);
    std::vector<double> observed(m);
    observed_eval.evaluate(z_obs, stats, observed, true);
    std::optional<bool> phi_obs;
    if (conditional) phi_obs = observed_eval.phi(z_obs);

    const Index n = trial.size();
    const Index n1 = z_obs.n1();
    const std::uint64_t total =
        binomial_capped(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(n1), spec.enumeration_cap);
    const bool enumerate = total <= spec.enumeration_cap;
    if (!enumerate) require(spec.reps >= 100, ErrorCode::Config, "Monte Carlo FRT needs reps >= 100");

    struct Tally {
        std::vector<std::uint64_t> ge;
        std::uint64_t members = 0;
    };
    const auto count = enumerate ? static_cast<std::int64_t>(total) : static_cast<std::int64_t>(spec.reps);
    const int workers = static_cast<int>(std::clamp<std::int64_t>(spec.threads, 1, count));
    std::vector<Tally> tallies(static_cast<std::size_t>(workers), Tally{std::vector<std::uint64_t>(m, 0), 0});

    parallel_for(count, workers, [&](std::int64_t begin, std::int64_t end, int w) {
        StatisticEvaluator eval(trial.x(), trial.y(), spec, reference);
        Tally& tally = tallies[static_cast<std::size_t>(w)];
        std::vector<double> values(m);
        const auto record = [&](const Assignment& z) {
            eval.evaluate(z, stats, values);
            ++tally.members;
            for (std::size_t k = 0; k < m; ++k) {
                if (at_least_as_extreme(stats[k], values[k], observed[k])) ++tally.ge[k];
            }
        };
        if (enumerate) {
            std::vector<Index> comb = unrank_combination(static_cast<std::uint64_t>(begin), n, n1);
            for (std::int64_t r = begin; r < end; ++r) {
                const Assignment z = from_combination(comb, n);
                if (!conditional || eval.phi(z) == *phi_obs) record(z);
                next_combination(comb, n);
            }
            return;
        }
        for (std::int64_t r = begin; r < end; ++r) {
            Rng rng(key.child(static_cast<std::uint64_t>(r)));
            for (std::uint64_t attempt = 1;; ++attempt) {
                Assignment z = complete_randomization(n, n1, rng);
                if (!conditional) {
                    record(z);
                    break;
                }
                if (eval.phi(z) == *phi_obs) {
                    record(z);
                    break;
                }
                if (attempt >= kMaxConditionalAttempts) {
                    fail(ErrorCode::AcceptanceExhausted,
                         "conditional FRT: no permutation with the observed balance status in " +
                             std::to_string(kMaxConditionalAttempts) + " draws");
                }
            }
        }
    });

    Tally sum{std::vector<std::uint64_t>(m, 0), 0};
    for (const auto& t : tallies) {
        sum.members += t.members;
        for (std::size_t k = 0; k < m; ++k) sum.ge[k] += t.ge[k];
    }
    if (sum.members == 0) fail(ErrorCode::EmptyConditionSet, "no permutation shares the observed balance status");

    std::vector<FRTResult> out(m);
    for (std::size_t k = 0; k < m; ++k) {
        FRTResult& r = out[k];
        r.statistic = stats[k];
        r.mode = spec.mode;
        r.observed_stat = observed[k];
        r.reps_used = static_cast<Index>(sum.members);
        r.exact = enumerate;
        r.phi_observed = phi_obs;
        const auto members = static_cast<double>(sum.members);
        const auto ge = static_cast<double>(sum.ge[k]);
        r.p_value = enumerate ? ge / members : (1.0 + ge) / (members + 1.0);
    }
    return out;
}

FRTResult run_frt(const ObservedTrial& trial, const FRTSpec& spec, const RngKey& key) {
    FRTSpec s = spec;
    s.mode = FrtMode::Unconditional;
    const Statistic stat[] = {spec.statistic};
    return run_frt_batch(trial, s, stat, key).front();
}

FRTResult run_conditional_frt(const ObservedTrial& trial, const FRTSpec& spec, const RngKey& key) {
    FRTSpec s = spec;
    s.mode = FrtMode::Conditional;
    const Statistic stat[] = {spec.statistic};
    return run_frt_batch(trial, s, stat, key).front();
}

double prepivot_statistic(const ObservedTrial& trial, PrepivotBase base, Adjustment arm, double a, HcVariant hc,
                          Index refdraws, std::uint64_t seed) {
    require(arm != Adjustment::N, ErrorCode::InvalidArgument, "prepivoting applies to the F or L arm");
    FRTSpec spec;
    spec.a = a;
    spec.hc = hc;
    spec.refdraws = refdraws;
    spec.ref_seed = seed;
    const ReferenceDraws reference(trial.covariates(), a, refdraws, seed);
    StatisticEvaluator eval(trial.x(), trial.y(), spec, &reference);
    Statistic s = Statistic::prepivot_PT_L;
    if (base == PrepivotBase::AbsTauPT) s = arm == Adjustment::F ? Statistic::prepivot_PT_F : Statistic::prepivot_PT_L;
    else s = arm == Adjustment::F ? Statistic::prepivot_t_PT_F : Statistic::prepivot_t_PT_L;
    return eval.evaluate(trial.assignment(), s, true);
}

}  // namespace pretest
