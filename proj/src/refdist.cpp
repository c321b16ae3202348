#include "pretest/refdist.hpp"

#include "pretest/estimators.hpp"
#include "pretest/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pretest {

double pi_a(Index dof, double a) {
    require(dof >= 1, ErrorCode::InvalidArgument, "pi_a needs J >= 1");
    require(a >= 0.0, ErrorCode::InvalidArgument, "pi_a needs a >= 0");
    if (std::isinf(a)) return 1.0;
    return special::chi2_cdf(static_cast<int>(dof), a);
}

const char* to_string(Truncation t) noexcept {
    switch (t) {
        case Truncation::Inside: return "inside";
        case Truncation::Outside: return "outside";
        case Truncation::Unconstrained: return "unconstrained";
    }
    return "?";
}

double TruncatedGaussianComponent::acceptance() const {
    switch (kind) {
        case Truncation::Inside: return pi_a(dof, a);
        case Truncation::Outside: return 1.0 - pi_a(dof, a);
        case Truncation::Unconstrained: return 1.0;
    }
    return 0.0;
}

Vector sample_truncated(const TruncatedGaussianComponent& component, Index n, Rng& rng) {
    require(component.dof >= 1, ErrorCode::InvalidArgument, "truncated normal needs J >= 1");
    const double accept = component.acceptance();
    if (accept < kMinAcceptance) {
        fail(ErrorCode::AcceptanceExhausted, std::string("acceptance probability of the ") +
                                                 to_string(component.kind) + " region is below 1e-6");
    }
    Vector out(n);
    const Index dof = component.dof;
    const double a = component.a;
    for (Index k = 0; k < n; ++k) {
        if (component.kind == Truncation::Unconstrained) {
            out(k) = rng.normal();
            continue;
        }
        for (;;) {
            const double first = rng.normal();
            double norm2 = first * first;
            for (Index j = 1; j < dof; ++j) {
                const double d = rng.normal();
                norm2 += d * d;
            }
            const bool inside = norm2 < a;
            if (inside == (component.kind == Truncation::Inside)) {
                out(k) = first;
                break;
            }
        }
    }
    return out;
}

void MixtureReference::validate() const {
    require(!components.empty(), ErrorCode::InvalidArgument, "mixture needs at least one component");
    require(sample_count >= 1, ErrorCode::InvalidArgument, "mixture needs sample_count >= 1");
    double total = 0.0;
    for (const auto& c : components) {
        require(c.weight >= 0.0, ErrorCode::InvalidArgument, "mixture weights must be nonnegative");
        require(c.scale_eps >= 0.0 && c.scale_trunc >= 0.0, ErrorCode::InvalidArgument,
                "mixture scales must be nonnegative");
        total += c.weight;
    }
    require(std::abs(total - 1.0) < 1e-12, ErrorCode::InvalidArgument, "mixture weights must sum to 1");
}

namespace {

struct WeightedSample {
    std::vector<double> values;
    std::vector<double> weights;
};

// Draws for component i come from (seed, RefDist, i): eps first, then T.
void draw_component(const MixtureComponent& c, Index count, std::uint64_t seed, std::uint64_t index, Vector& eps,
                    Vector& trunc) {
    Rng rng(seed, Stream::RefDist, index);
    eps.resize(count);
    for (Index k = 0; k < count; ++k) eps(k) = rng.normal();
    trunc = sample_truncated(c.trunc, count, rng);
}

WeightedSample sorted_mixture(const MixtureReference& ref) {
    ref.validate();
    const Index count = ref.sample_count;
    std::vector<std::pair<double, double>> pairs;
    Vector eps, trunc;
    for (std::size_t i = 0; i < ref.components.size(); ++i) {
        const auto& c = ref.components[i];
        if (c.weight == 0.0) continue;
        draw_component(c, count, ref.seed, i, eps, trunc);
        const double w = c.weight / static_cast<double>(count);
        for (Index k = 0; k < count; ++k) pairs.emplace_back(c.scale_eps * eps(k) + c.scale_trunc * trunc(k), w);
    }
    std::sort(pairs.begin(), pairs.end());
    WeightedSample out;
    out.values.reserve(pairs.size());
    out.weights.reserve(pairs.size());
    for (const auto& [v, w] : pairs) {
        out.values.push_back(v);
        out.weights.push_back(w);
    }
    return out;
}

// Smallest sample value whose cumulative weight reaches p.
double weighted_quantile(const WeightedSample& s, double p) {
    double cum = 0.0;
    for (std::size_t k = 0; k < s.values.size(); ++k) {
        cum += s.weights[k];
        if (cum >= p * (1.0 - 1e-12)) return s.values[k];
    }
    return s.values.back();
}

}  // namespace

std::vector<double> mixture_quantiles(const MixtureReference& ref, std::span<const double> ps) {
    for (double p : ps) require(p > 0.0 && p < 1.0, ErrorCode::InvalidArgument, "quantile level must be in (0, 1)");
    const WeightedSample sample = sorted_mixture(ref);
    std::vector<double> out;
    out.reserve(ps.size());
    for (double p : ps) out.push_back(weighted_quantile(sample, p));
    return out;
}

double mixture_quantile(const MixtureReference& ref, double p) {
    const double ps[] = {p};
    return mixture_quantiles(ref, ps).front();
}

double mixture_cdf(const MixtureReference& ref, double t) {
    ref.validate();
    const Index count = ref.sample_count;
    Vector eps, trunc;
    double total = 0.0;
    for (std::size_t i = 0; i < ref.components.size(); ++i) {
        const auto& c = ref.components[i];
        if (c.weight == 0.0) continue;
        draw_component(c, count, ref.seed, i, eps, trunc);
        const auto below = ((c.scale_eps * eps + c.scale_trunc * trunc).array() <= t).count();
        total += c.weight * static_cast<double>(below) / static_cast<double>(count);
    }
    return std::clamp(total, 0.0, 1.0);
}

MixtureReference pt_mixture(Index dof, double a, double v_n, double v_adj, double v_l, Index sample_count,
                            std::uint64_t seed) {
    const double pi = pi_a(dof, a);
    const double v_l_clamped = std::max(v_l, 0.0);
    MixtureReference ref;
    ref.sample_count = sample_count;
    ref.seed = seed;
    ref.components.push_back({pi, std::sqrt(v_l_clamped), std::sqrt(std::max(v_n - v_l_clamped, 0.0)),
                              {Truncation::Inside, dof, a}});
    ref.components.push_back({1.0 - pi, std::sqrt(v_l_clamped), std::sqrt(std::max(v_adj - v_l_clamped, 0.0)),
                              {Truncation::Outside, dof, a}});
    return ref;
}

ReferenceDraws::ReferenceDraws(Index dof, double a, Index draws, std::uint64_t seed)
    : dof_(dof), a_(a), pi_(pi_a(dof, a)), draws_(draws) {
    require(draws >= 1, ErrorCode::InvalidArgument, "reference needs at least one draw");
    // Substreams 0 and 1 match a pt_mixture() built with the same seed.
    const TruncatedGaussianComponent inside{Truncation::Inside, dof, a};
    const TruncatedGaussianComponent outside{Truncation::Outside, dof, a};
    if (inside.acceptance() >= kMinAcceptance) {
        draw_component({1.0, 1.0, 1.0, inside}, draws, seed, 0, eps_inside_, l_inside_);
    }
    if (outside.acceptance() >= kMinAcceptance) {
        draw_component({1.0, 1.0, 1.0, outside}, draws, seed, 1, eps_outside_, l_outside_);
    }
}

const Vector& ReferenceDraws::trunc_draws(Truncation kind) const {
    const Vector& out = kind == Truncation::Outside ? l_outside_ : l_inside_;
    if (out.size() == 0) {
        fail(ErrorCode::AcceptanceExhausted, std::string("the ") + to_string(kind) +
                                                 " region has negligible probability for this threshold");
    }
    return out;
}

double ReferenceDraws::abs_cdf(Truncation kind, double scale_eps, double scale_trunc, double t) const {
    if (t < 0.0) return 0.0;
    if (kind == Truncation::Unconstrained || scale_trunc == 0.0) {
        // Pure normal component; the inside eps draws serve, else the outside ones.
        const Vector& eps = eps_inside_.size() > 0 ? eps_inside_ : eps_outside_;
        const auto below = ((scale_eps * eps).array().abs() <= t).count();
        return static_cast<double>(below) / static_cast<double>(draws_);
    }
    const Vector& trunc = trunc_draws(kind);
    const Vector& eps = kind == Truncation::Outside ? eps_outside_ : eps_inside_;
    const auto below = ((scale_eps * eps + scale_trunc * trunc).array().abs() <= t).count();
    return static_cast<double>(below) / static_cast<double>(draws_);
}

std::pair<double, double> ReferenceDraws::central_range(Truncation kind, double scale_eps, double scale_trunc,
                                                        double alpha) const {
    require(alpha > 0.0 && alpha < 1.0, ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
    if (kind == Truncation::Unconstrained || scale_trunc == 0.0) {
        const double q = special::normal_quantile(1.0 - 0.5 * alpha) * scale_eps;
        return {-q, q};
    }
    const Vector& trunc = trunc_draws(kind);
    const Vector& eps = kind == Truncation::Outside ? eps_outside_ : eps_inside_;
    // One buffer per thread; the draws themselves are shared read-only.
    thread_local Vector scratch;
    scratch = scale_eps * eps + scale_trunc * trunc;
    auto* data = scratch.data();
    const auto n = static_cast<std::ptrdiff_t>(scratch.size());
    const auto rank = [n](double p) {
        const auto r = static_cast<std::ptrdiff_t>(std::ceil(p * static_cast<double>(n))) - 1;
        return std::clamp<std::ptrdiff_t>(r, 0, n - 1);
    };
    const auto lo_rank = rank(0.5 * alpha);
    const auto hi_rank = rank(1.0 - 0.5 * alpha);
    std::nth_element(data, data + lo_rank, data + n);
    const double lo = data[lo_rank];
    std::nth_element(data + lo_rank, data + hi_rank, data + n);
    const double hi = data[hi_rank];
    return {lo, hi};
}

Interval pt_specific_ci(const PtCiInputs& in, const ReferenceDraws& draws) {
    require(in.n >= 1, ErrorCode::InvalidArgument, "pt_specific_ci needs N >= 1");
    const double v_l = std::max(in.v_l, 0.0);
    Truncation kind = Truncation::Unconstrained;
    double excess = 0.0;
    if (in.phi) {
        kind = Truncation::Inside;
        excess = std::max(in.v_n - v_l, 0.0);
    } else if (in.arm == Adjustment::F) {
        kind = Truncation::Outside;
        excess = std::max(in.v_f - v_l, 0.0);
    }
    const auto [lo, hi] = draws.central_range(kind, std::sqrt(v_l), std::sqrt(excess), in.alpha);
    const double root_n = std::sqrt(static_cast<double>(in.n));
    return {in.tau_hat - hi / root_n, in.tau_hat - lo / root_n};
}

Interval pt_specific_ci(const PtCiInputs& in, Index draws, std::uint64_t seed) {
    const ReferenceDraws reference(in.dof, in.a, draws, seed);
    return pt_specific_ci(in, reference);
}

}  // namespace pretest
