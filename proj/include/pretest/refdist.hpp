#pragma once

#include "pretest/core.hpp"
#include "pretest/population.hpp"
#include "pretest/rng.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace pretest {

// pi_a = P(chi^2_J < a).
double pi_a(Index dof, double a);

// First coordinate of D ~ N(0, I_J), conditioned inside (D'D < a) or outside
// (D'D >= a) the ball, or left unconstrained.
enum class Truncation { Inside, Outside, Unconstrained };

const char* to_string(Truncation t) noexcept;

struct TruncatedGaussianComponent {
    Truncation kind = Truncation::Unconstrained;
    Index dof = 1;
    double a = 0.0;

    // Probability that a draw of D is accepted.
    double acceptance() const;
};

// Rejection sampler; AcceptanceExhausted below this acceptance probability.
inline constexpr double kMinAcceptance = 1e-6;

Vector sample_truncated(const TruncatedGaussianComponent& component, Index n, Rng& rng);

// One law scale_eps * eps + scale_trunc * T with eps ~ N(0,1) independent of T.
struct MixtureComponent {
    double weight = 1.0;
    double scale_eps = 1.0;
    double scale_trunc = 0.0;
    TruncatedGaussianComponent trunc;
};

// Monte Carlo reference law. Each component with positive weight receives
// sample_count draws from its own substream of (seed, RefDist); the mixture is
// the weighted empirical law, so queries are deterministic given the seed.
struct MixtureReference {
    std::vector<MixtureComponent> components;
    Index sample_count = 1'000'000;
    std::uint64_t seed = 0;

    void validate() const;
};

double mixture_quantile(const MixtureReference& ref, double p);
std::vector<double> mixture_quantiles(const MixtureReference& ref, std::span<const double> ps);
double mixture_cdf(const MixtureReference& ref, double t);

// The two-component law of the preliminary-test estimator,
//   pi_a : sqrt(v_L) eps + sqrt(v_N - v_L) L,   1 - pi_a : sqrt(v_L) eps + sqrt(v_adj - v_L) L',
// with negative differences clamped to zero.
MixtureReference pt_mixture(Index dof, double a, double v_n, double v_adj, double v_l,
                            Index sample_count = 1'000'000, std::uint64_t seed = 0);

// Cached base draws (eps, L) and (eps, L') for one (J, a, seed). Scales are
// applied at query time, so many laws that differ only in scale share common
// random numbers.
class ReferenceDraws {
public:
    ReferenceDraws(Index dof, double a, Index draws, std::uint64_t seed);

    Index dof() const { return dof_; }
    double a() const { return a_; }
    double pi() const { return pi_; }
    Index draws() const { return draws_; }

    // P(|s_eps eps + s_trunc T| <= t) under the empirical law of the component.
    double abs_cdf(Truncation kind, double scale_eps, double scale_trunc, double t) const;
    // Central (lo, hi) quantiles at levels alpha/2 and 1 - alpha/2.
    std::pair<double, double> central_range(Truncation kind, double scale_eps, double scale_trunc,
                                            double alpha) const;

private:
    const Vector& trunc_draws(Truncation kind) const;

    Index dof_;
    double a_;
    double pi_;
    Index draws_;
    Vector eps_inside_, l_inside_;
    Vector eps_outside_, l_outside_;
};

struct PtCiInputs {
    double tau_hat = 0.0;
    double v_n = 0.0;  // N se_N^2
    double v_f = 0.0;  // N se_F^2
    double v_l = 0.0;  // N se_L^2
    Index dof = 1;
    double a = 0.0;
    bool phi = true;
    Adjustment arm = Adjustment::L;
    double alpha = 0.05;
    Index n = 1;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

// Preliminary-test-specific interval: central 1 - alpha range of the plug-in
// conditional law of sqrt(N)(tau_pt - tau), scaled back by N^{-1/2}.
Interval pt_specific_ci(const PtCiInputs& in, const ReferenceDraws& draws);
Interval pt_specific_ci(const PtCiInputs& in, Index draws = 1'000'000, std::uint64_t seed = 0);

}  // namespace pretest
