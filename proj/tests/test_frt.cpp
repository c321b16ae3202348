#include "doctest.h"

#include "pretest/frt.hpp"
#include "pretest/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

using namespace pretest;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Eight units, one covariate, y1 = y0 (sharp null).
FinitePopulation sharp_null_population() {
    Vector x(8), y(8);
    x << -1.3, -0.4, 0.2, 0.9, 1.7, -2.1, 0.5, 2.6;
    y << 0.8, -0.2, 1.1, 2.4, 3.9, -1.5, 0.3, 5.2;
    return {y, y, Matrix(x)};
}

std::vector<Assignment> all_assignments(Index n, Index n1) {
    std::vector<Assignment> out;
    for (int mask = 0; mask < (1 << n); ++mask) {
        if (__builtin_popcount(static_cast<unsigned>(mask)) != n1) continue;
        Vector z(n);
        for (Index i = 0; i < n; ++i) z(i) = (mask >> i) & 1;
        out.emplace_back(z);
    }
    return out;
}

// P(p <= alpha) <= alpha at every attainable alpha, counted exactly.
bool super_uniform(std::vector<double> p) {
    std::sort(p.begin(), p.end());
    const double n = static_cast<double>(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
        const auto le = static_cast<double>(std::upper_bound(p.begin(), p.end(), p[k]) - p.begin());
        if (le > p[k] * n + 1e-9) return false;
    }
    return true;
}

constexpr std::array<Statistic, 10> kPlain{Statistic::tau_N,  Statistic::tau_F,    Statistic::tau_L,
                                           Statistic::tau_PT_F, Statistic::tau_PT_L, Statistic::t_N,
                                           Statistic::t_F,    Statistic::t_L,      Statistic::t_PT_F,
                                           Statistic::t_PT_L};

}  // namespace

TEST_CASE("combinatorics") {
    CHECK(binomial_capped(8, 4, 1000) == 70);
    CHECK(binomial_capped(100, 10, 1000) == 1001);
    CHECK(binomial_capped(5, 7, 10) == 0);
    std::set<std::vector<Index>> seen;
    std::vector<Index> prev;
    for (std::uint64_t r = 0; r < 70; ++r) {
        const auto c = unrank_combination(r, 8, 4);
        CHECK(std::is_sorted(c.begin(), c.end()));
        if (!prev.empty()) CHECK(prev < c);
        prev = c;
        seen.insert(c);
    }
    CHECK(seen.size() == 70);
    CHECK_THROWS_AS(unrank_combination(70, 8, 4), Error);
}

TEST_CASE("enumeration p-values are exactly super-uniform under the sharp null") {
    const FinitePopulation pop = sharp_null_population();
    const auto zs = all_assignments(8, 4);
    REQUIRE(zs.size() == 70);
    FRTSpec spec;
    spec.a = special::chi2_quantile(1, 0.5);
    for (FrtMode mode : {FrtMode::Unconditional, FrtMode::Conditional}) {
        spec.mode = mode;
        std::vector<std::vector<double>> p(kPlain.size());
        std::map<bool, std::vector<std::vector<double>>> by_phi;
        for (const Assignment& z : zs) {
            const auto results = run_frt_batch(ObservedTrial::observe(pop, z), spec, kPlain, {1});
            for (std::size_t k = 0; k < kPlain.size(); ++k) {
                CHECK(results[k].exact);
                p[k].push_back(results[k].p_value);
                if (mode == FrtMode::Conditional) {
                    auto& slot = by_phi[*results[k].phi_observed];
                    slot.resize(kPlain.size());
                    slot[k].push_back(results[k].p_value);
                }
            }
        }
        for (std::size_t k = 0; k < kPlain.size(); ++k) {
            INFO(to_string(kPlain[k]), " ", to_string(mode));
            CHECK(super_uniform(p[k]));
        }
        if (mode == FrtMode::Conditional) {
            REQUIRE(by_phi.size() == 2);
            for (auto& [phi, lists] : by_phi) {
                for (std::size_t k = 0; k < kPlain.size(); ++k) CHECK(super_uniform(lists[k]));
            }
        }
    }
}

TEST_CASE("constant outcome gives p = 1") {
    Vector x(8);
    x << 1, 2, 3, 4, 5, 6, 7, 9;
    Vector z(8);
    z << 1, 0, 1, 0, 1, 0, 1, 0;
    const ObservedTrial trial(Assignment(z), Vector::Constant(8, 2.5), Matrix(x));
    FRTSpec spec;
    spec.statistic = Statistic::tau_N;
    const FRTResult r = run_frt(trial, spec, {1});
    CHECK(r.p_value == 1.0);
    CHECK(r.reps_used == 70);
}

TEST_CASE("enumeration is invariant to relabeling units") {
    const FinitePopulation pop = sharp_null_population();
    Vector z(8);
    z << 1, 1, 0, 0, 1, 0, 1, 0;
    const ObservedTrial trial = ObservedTrial::observe(pop, Assignment(z));
    std::vector<Index> perm{3, 7, 0, 5, 1, 6, 2, 4};
    Vector zp(8), yp(8);
    Matrix xp(8, 1);
    for (Index i = 0; i < 8; ++i) {
        zp(i) = z(perm[i]);
        yp(i) = trial.y()(perm[i]);
        xp(i, 0) = trial.x()(perm[i], 0);
    }
    const ObservedTrial relabeled(Assignment(zp), yp, xp);
    FRTSpec spec;
    spec.a = 0.7;
    const auto a = run_frt_batch(trial, spec, kPlain, {1});
    const auto b = run_frt_batch(relabeled, spec, kPlain, {1});
    for (std::size_t k = 0; k < kPlain.size(); ++k) CHECK(a[k].p_value == b[k].p_value);
}

TEST_CASE("Monte Carlo p-values approach the enumeration value") {
    const FinitePopulation pop = sharp_null_population();
    Vector z(8);
    z << 0, 1, 0, 1, 1, 0, 1, 0;
    const ObservedTrial trial = ObservedTrial::observe(pop, Assignment(z));
    FRTSpec exact;
    exact.a = 0.7;
    FRTSpec mc = exact;
    mc.enumeration_cap = 10;
    mc.reps = 50 * 70;
    for (FrtMode mode : {FrtMode::Unconditional, FrtMode::Conditional}) {
        exact.mode = mc.mode = mode;
        const auto e = run_frt_batch(trial, exact, kPlain, {1});
        const auto m = run_frt_batch(trial, mc, kPlain, {1, Stream::Permutation, 0});
        for (std::size_t k = 0; k < kPlain.size(); ++k) {
            CHECK_FALSE(m[k].exact);
            CHECK(m[k].reps_used == mc.reps);
            CHECK(std::abs(e[k].p_value - m[k].p_value) < 0.02);
            // (1 + k) / (R + 1)
            const double count = m[k].p_value * (mc.reps + 1) - 1.0;
            CHECK(std::abs(count - std::round(count)) < 1e-6);
        }
    }
}

TEST_CASE("conditioning on an infinite threshold changes nothing") {
    const FinitePopulation pop = generate_population(Recipe::parse("frt_p1"), 3);
    Rng rng(4, Stream::Assignment, 0);
    const ObservedTrial trial = ObservedTrial::observe(pop, complete_randomization(100, 10, rng));
    FRTSpec spec;
    spec.statistic = Statistic::t_PT_L;
    spec.reps = 300;
    spec.a = kInf;
    const RngKey key{5, Stream::Permutation, 0};
    const FRTResult u = run_frt(trial, spec, key);
    const FRTResult c = run_conditional_frt(trial, spec, key);
    CHECK(u.p_value == c.p_value);
    CHECK(c.phi_observed == true);
}

TEST_CASE("results do not depend on the thread count") {
    const FinitePopulation pop = generate_population(Recipe::parse("frt_p2"), 6);
    Rng rng(7, Stream::Assignment, 0);
    const ObservedTrial trial = ObservedTrial::observe(pop, complete_randomization(100, 10, rng));
    FRTSpec spec;
    spec.reps = 400;
    spec.a = special::chi2_quantile(1, 0.5);
    spec.refdraws = 500;
    spec.mode = FrtMode::Conditional;
    std::vector<Statistic> all(kStatistics.begin(), kStatistics.end());
    const auto one = run_frt_batch(trial, spec, all, {8});
    spec.threads = 4;
    const auto four = run_frt_batch(trial, spec, all, {8});
    for (std::size_t k = 0; k < all.size(); ++k) {
        CHECK(one[k].p_value == four[k].p_value);
        CHECK(one[k].observed_stat == four[k].observed_stat);
    }

    const FinitePopulation small = sharp_null_population();
    Vector z(8);
    z << 1, 0, 0, 1, 1, 0, 0, 1;
    const ObservedTrial t8 = ObservedTrial::observe(small, Assignment(z));
    FRTSpec e;
    e.threads = 3;
    const auto e3 = run_frt_batch(t8, e, kPlain, {1});
    e.threads = 1;
    const auto e1 = run_frt_batch(t8, e, kPlain, {1});
    for (std::size_t k = 0; k < kPlain.size(); ++k) CHECK(e1[k].p_value == e3[k].p_value);
}

TEST_CASE("prepivoting reduces to folded normal CDFs at the extreme thresholds") {
    const FinitePopulation pop = generate_population(Recipe::parse("frt_p1"), 9);
    Rng rng(10, Stream::Assignment, 0);
    const ObservedTrial trial = ObservedTrial::observe(pop, complete_randomization(100, 10, rng));
    constexpr Index draws = 100'000;
    const double tol = 2.0 / std::sqrt(static_cast<double>(draws));
    const auto folded = [](double t) { return 2.0 * special::normal_cdf(t) - 1.0; };

    // a = inf: always balanced; the inside law is untruncated with total variance v_N.
    const EstimateReport n = estimate_N(trial);
    const double t_n = std::abs(n.tau_hat / n.se_hat);
    for (Adjustment arm : {Adjustment::F, Adjustment::L}) {
        CHECK(std::abs(prepivot_statistic(trial, PrepivotBase::AbsTauPT, arm, kInf, HcVariant::HC2, draws, 1) -
                       folded(t_n)) < tol);
        CHECK(std::abs(prepivot_statistic(trial, PrepivotBase::AbsTPT, arm, kInf, HcVariant::HC2, draws, 1) -
                       folded(t_n)) < tol);
    }
    // a = 0: never balanced; the outside law is untruncated with total variance v_adj.
    for (Adjustment arm : {Adjustment::F, Adjustment::L}) {
        const EstimateReport adj = arm == Adjustment::F ? estimate_F(trial) : estimate_L(trial);
        const double t = std::abs(adj.tau_hat / adj.se_hat);
        CHECK(std::abs(prepivot_statistic(trial, PrepivotBase::AbsTauPT, arm, 0.0, HcVariant::HC2, draws, 2) -
                       folded(t)) < tol);
        CHECK(std::abs(prepivot_statistic(trial, PrepivotBase::AbsTPT, arm, 0.0, HcVariant::HC2, draws, 2) -
                       folded(t)) < tol);
    }
}

TEST_CASE("prepivoted statistics lie in the unit interval") {
    const FinitePopulation pop = generate_population(Recipe::parse("frt_p2"), 11);
    Rng rng(12, Stream::Assignment, 0);
    const double a = special::chi2_quantile(1, 0.5);
    for (int r = 0; r < 30; ++r) {
        const ObservedTrial trial = ObservedTrial::observe(pop, complete_randomization(100, 10, rng));
        for (PrepivotBase base : {PrepivotBase::AbsTauPT, PrepivotBase::AbsTPT}) {
            for (Adjustment arm : {Adjustment::F, Adjustment::L}) {
                const double t = prepivot_statistic(trial, base, arm, a, HcVariant::HC2, 2000, 3);
                CHECK(t >= 0.0);
                CHECK(t <= 1.0);
            }
        }
    }
}

TEST_CASE("degenerate permutations count as extreme, a degenerate observation aborts") {
    // Units 0..3 share x, so the assignment treating exactly them cannot fit L.
    Vector x(8), y(8), z(8);
    x << 1, 1, 1, 1, 2, 3, 4, 5;
    y << 0.5, -0.3, 1.2, 0.1, 2.0, -1.0, 0.7, 1.5;
    z << 1, 0, 1, 0, 1, 0, 1, 0;
    const ObservedTrial trial(Assignment(z), y, Matrix(x));
    FRTSpec spec;
    spec.statistic = Statistic::t_L;
    spec.hc = HcVariant::HC0;
    const FRTResult r = run_frt(trial, spec, {1});
    CHECK(r.p_value >= 2.0 / 70.0);

    Vector zd(8);
    zd << 1, 1, 1, 1, 0, 0, 0, 0;
    const ObservedTrial bad(Assignment(zd), y, Matrix(x));
    try {
        run_frt(bad, spec, {1});
        FAIL("expected RankDeficientObserved");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::RankDeficientObserved);
    }
}

TEST_CASE("unreachable conditioning set is reported") {
    const FinitePopulation pop = generate_population(Recipe::parse("frt_p1"), 13);
    Rng rng(14, Stream::Assignment, 0);
    // Find an assignment whose M is the smallest among many, then condition on M < a with a just above it.
    const BalanceChecker checker(pop.x());
    Assignment best = complete_randomization(100, 10, rng);
    for (int r = 0; r < 20000; ++r) {
        Assignment z = complete_randomization(100, 10, rng);
        if (checker.mahalanobis(z) < checker.mahalanobis(best)) best = z;
    }
    FRTSpec spec;
    spec.statistic = Statistic::tau_N;
    spec.reps = 100;
    spec.a = std::nextafter(checker.mahalanobis(best), kInf);
    spec.mode = FrtMode::Conditional;
    try {
        run_conditional_frt(ObservedTrial::observe(pop, best), spec, {1});
        FAIL("expected AcceptanceExhausted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AcceptanceExhausted);
    }
}

TEST_CASE("randomization reference constants") {
    for (std::uint64_t seed = 1; seed < 6; ++seed) {
        const FinitePopulation pop = generate_population(Recipe::parse("efficiency"), seed);
        const RandomizationReference ref = randomization_reference(pop, 0.2);
        CHECK(ref.v_tilde_L <= ref.v_tilde_N);
        CHECK(ref.rho_tilde_N <= 1.0);
        CHECK(ref.rho_tilde_N == doctest::Approx(ref.v_tilde_L / ref.v_tilde_N));

        // gamma_F minimizes e1^-1 S^2(Y0 - x g) + e0^-1 S^2(Y1 - x g).
        const TrueParameters tp = true_parameters(pop, 0.2);
        const auto objective = [&](const Vector& g) {
            const Vector a = pop.y0() - pop.x() * g;
            const Vector b = pop.y1() - pop.x() * g;
            const auto var = [](const Vector& v) { return (v.array() - v.mean()).square().sum() / (v.size() - 1.0); };
            return var(a) / 0.2 + var(b) / 0.8 + tp.tau * tp.tau;
        };
        CHECK(objective(tp.gammaF) == doctest::Approx(ref.v_tilde_L).epsilon(1e-12));
        Rng rng(seed);
        for (int k = 0; k < 5; ++k) {
            Vector g = tp.gammaF;
            for (Index j = 0; j < g.size(); ++j) g(j) += 0.05 * rng.normal();
            CHECK(objective(g) > ref.v_tilde_L);
        }
    }
}

TEST_CASE("names round trip") {
    for (Statistic s : kStatistics) CHECK(parse_statistic(to_string(s)) == s);
    CHECK(parse_frt_mode("conditional") == FrtMode::Conditional);
    CHECK_THROWS_AS(parse_statistic("t_X"), Error);
}
