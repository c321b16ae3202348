#pragma once

#include "pretest/core.hpp"
#include "pretest/design.hpp"
#include "pretest/estimators.hpp"
#include "pretest/population.hpp"
#include "pretest/refdist.hpp"
#include "pretest/rng.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pretest {

enum class Statistic {
    tau_N,
    tau_F,
    tau_L,
    tau_PT_F,
    tau_PT_L,
    t_N,
    t_F,
    t_L,
    t_PT_F,
    t_PT_L,
    prepivot_PT_F,
    prepivot_PT_L,
    prepivot_t_PT_F,
    prepivot_t_PT_L,
};

inline constexpr std::array<Statistic, 14> kStatistics{
    Statistic::tau_N,         Statistic::tau_F,         Statistic::tau_L,           Statistic::tau_PT_F,
    Statistic::tau_PT_L,      Statistic::t_N,           Statistic::t_F,             Statistic::t_L,
    Statistic::t_PT_F,        Statistic::t_PT_L,        Statistic::prepivot_PT_F,   Statistic::prepivot_PT_L,
    Statistic::prepivot_t_PT_F, Statistic::prepivot_t_PT_L,
};

const char* to_string(Statistic s) noexcept;
Statistic parse_statistic(const std::string& text);
bool is_prepivot(Statistic s) noexcept;

enum class FrtMode { Unconditional, Conditional };

const char* to_string(FrtMode m) noexcept;
FrtMode parse_frt_mode(const std::string& text);

struct FRTSpec {
    Statistic statistic = Statistic::t_L;
    FrtMode mode = FrtMode::Unconditional;
    Index reps = 1000;                       // Monte Carlo permutations
    std::uint64_t enumeration_cap = 100'000;  // enumerate when C(N, n1) <= cap
    double a = std::numeric_limits<double>::infinity();
    double alpha = 0.05;
    HcVariant hc = HcVariant::HC2;
    Index refdraws = 10'000;    // per component, prepivoted statistics only
    std::uint64_t ref_seed = 0;  // seed of the prepivot reference draws
    int threads = 1;

    void validate() const;
};

struct FRTResult {
    Statistic statistic = Statistic::t_L;
    FrtMode mode = FrtMode::Unconditional;
    double p_value = 1.0;
    double observed_stat = 0.0;
    Index reps_used = 0;
    bool exact = false;
    std::optional<bool> phi_observed;  // conditional mode

    bool rejects(double alpha) const { return p_value <= alpha; }
};

// Limiting-variance constants of the randomization distribution, available
// only when both potential outcomes are known.
struct RandomizationReference {
    double v_tilde_N = 0.0;
    double v_tilde_L = 0.0;
    double rho_tilde_N = 1.0;
};

RandomizationReference randomization_reference(const FinitePopulation& pop, double e1);

// Statistics of (z, Y, X) for fixed Y and X. Fits are computed on demand and
// the workspaces are reused across assignments; one instance per thread.
class StatisticEvaluator {
public:
    StatisticEvaluator(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& y, const FRTSpec& spec,
                       const ReferenceDraws* reference);

    // Signed T for two-sided statistics, T' for prepivoted ones. A regression
    // that cannot be fitted on z yields +inf (or throws RankDeficientObserved
    // when observed is true).
    void evaluate(const Assignment& z, std::span<const Statistic> stats, std::span<double> out,
                  bool observed = false);
    double evaluate(const Assignment& z, Statistic s, bool observed = false);

    bool phi(const Assignment& z);
    double mahalanobis(const Assignment& z);

private:
    bool cached_phi(const Assignment& z);
    const EstimateReport* fit(Adjustment adj, const Assignment& z, bool observed);
    double value(Statistic s, const Assignment& z, bool observed);
    double prepivot(Adjustment arm, bool studentized, const Assignment& z, bool observed);

    Vector y_;
    FRTSpec spec_;
    const ReferenceDraws* reference_;
    TrialAnalyzer analyzer_;
    std::array<std::optional<EstimateReport>, 3> fits_;
    std::array<bool, 3> tried_{};
    std::optional<bool> phi_;
};

// Two-sided statistics are compared by |T|; prepivoted ones one-sided.
bool at_least_as_extreme(Statistic s, double value, double observed) noexcept;

// Runs one permutation scheme for several statistics at once (the same
// permutations serve all of them). Honors spec.mode; spec.statistic is
// ignored. Monte Carlo permutation r draws from key.child(r), so the result
// does not depend on spec.threads. reference may be shared across calls with
// matching (J, a, refdraws, ref_seed); when null it is built on demand.
std::vector<FRTResult> run_frt_batch(const ObservedTrial& trial, const FRTSpec& spec,
                                     std::span<const Statistic> stats, const RngKey& key,
                                     const ReferenceDraws* reference = nullptr);

FRTResult run_frt(const ObservedTrial& trial, const FRTSpec& spec, const RngKey& key);
FRTResult run_conditional_frt(const ObservedTrial& trial, const FRTSpec& spec, const RngKey& key);

enum class PrepivotBase { AbsTauPT, AbsTPT };

double prepivot_statistic(const ObservedTrial& trial, PrepivotBase base, Adjustment arm, double a, HcVariant hc,
                          Index refdraws, std::uint64_t seed);

// Rejection draws allowed for one conditional permutation before giving up.
inline constexpr std::uint64_t kMaxConditionalAttempts = 100'000;

// min(C(n, k), cap + 1), without overflow.
std::uint64_t binomial_capped(std::uint64_t n, std::uint64_t k, std::uint64_t cap);

// Lexicographic unranking of k-subsets of {0..n-1}.
std::vector<Index> unrank_combination(std::uint64_t rank, Index n, Index k);

}  // namespace pretest
