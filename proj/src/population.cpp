#include "pretest/population.hpp"

#include "pretest/rng.hpp"

#include <cmath>

namespace pretest {

const char* to_string(Adjustment adj) noexcept {
    switch (adj) {
        case Adjustment::N: return "N";
        case Adjustment::F: return "F";
        case Adjustment::L: return "L";
    }
    return "?";
}

Matrix center_columns(const Eigen::Ref<const Matrix>& x) {
    Matrix out = x;
    out.rowwise() -= x.colwise().mean();
    return out;
}

Matrix covariate_covariance(const Eigen::Ref<const Matrix>& x) {
    require(x.rows() >= 2, ErrorCode::InvalidSizes, "covariance needs at least two rows");
    const Matrix centered = center_columns(x);
    return (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
}

FinitePopulation::FinitePopulation(Vector y0, Vector y1, Matrix x)
    : y0_(std::move(y0)), y1_(std::move(y1)), x_(std::move(x)) {
    if (y1_.size() != y0_.size() || x_.rows() != y0_.size()) {
        fail(ErrorCode::DimensionMismatch, "potential outcomes and covariates must share N rows");
    }
    require(x_.cols() >= 1, ErrorCode::DimensionMismatch, "at least one covariate is required");
    require(y0_.size() >= 2, ErrorCode::InvalidSizes, "population needs N >= 2");
    x_.rowwise() -= x_.colwise().mean().eval();
}

namespace {

double variance(const Vector& v) {
    return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

TrueParameters true_parameters(const FinitePopulation& pop, double e1) {
    const Index n = pop.size();
    require(e1 > 0.0 && e1 < 1.0, ErrorCode::InvalidSizes, "e1 must lie in (0, 1)");
    const double n1 = e1 * static_cast<double>(n);
    require(std::abs(n1 - std::round(n1)) < 1e-9, ErrorCode::InvalidSizes, "N * e1 must be an integer");

    TrueParameters tp;
    tp.e1 = e1;
    tp.e0 = 1.0 - e1;
    tp.tau = pop.tau();

    const Matrix& x = pop.x();
    tp.s2_x = covariate_covariance(x);
    const Eigen::LDLT<Matrix> s2_x_solver(tp.s2_x);
    Eigen::JacobiSVD<Matrix> svd(tp.s2_x);
    const auto& sv = svd.singularValues();
    if (!(sv(sv.size() - 1) > 1e-10 * sv(0))) {
        fail(ErrorCode::SingularCovariates, "finite-population covariate covariance is singular");
    }

    // Slopes of lm(Y(z) ~ 1 + x) with centered x: (S^2_x)^{-1} Cov(x, Y(z)).
    const double denom = static_cast<double>(n - 1);
    auto slope = [&](const Vector& y) -> Vector {
        const Vector cov = x.transpose() * (y.array() - y.mean()).matrix() / denom;
        return s2_x_solver.solve(cov);
    };
    tp.gamma0 = slope(pop.y0());
    tp.gamma1 = slope(pop.y1());
    tp.gammaF = tp.e0 * tp.gamma0 + tp.e1 * tp.gamma1;

    PerAdjustment<Vector> adj0;
    PerAdjustment<Vector> adj1;
    adj0[Adjustment::N] = pop.y0();
    adj1[Adjustment::N] = pop.y1();
    adj0[Adjustment::F] = pop.y0() - x * tp.gammaF;
    adj1[Adjustment::F] = pop.y1() - x * tp.gammaF;
    adj0[Adjustment::L] = pop.y0() - x * tp.gamma0;
    adj1[Adjustment::L] = pop.y1() - x * tp.gamma1;

    for (Adjustment a : kAdjustments) {
        tp.s2_control[a] = variance(adj0[a]);
        tp.s2_treated[a] = variance(adj1[a]);
        const Vector effects = adj1[a] - adj0[a];
        tp.s2_tau[a] = variance(effects);
        tp.v[a] = tp.s2_control[a] / tp.e0 + tp.s2_treated[a] / tp.e1 - tp.s2_tau[a];
        const double total = tp.v[a] + tp.s2_tau[a];
        tp.kappa[a] = total > 0.0 ? tp.v[a] / total : 1.0;
    }
    for (Adjustment a : kAdjustments) {
        tp.rho[a] = tp.v[a] > 0.0 ? tp.v[Adjustment::L] / tp.v[a] : 1.0;
    }
    tp.rho[Adjustment::L] = 1.0;

    tp.c[Adjustment::N] = tp.s2_x * (tp.gamma0 / tp.e0 + tp.gamma1 / tp.e1);
    tp.c[Adjustment::F] = tp.s2_x * ((1.0 / tp.e1 - 1.0 / tp.e0) * (tp.gamma1 - tp.gamma0));
    tp.c[Adjustment::L] = Vector::Zero(x.cols());
    return tp;
}

Index Recipe::population_size() const {
    switch (kind) {
        case RecipeKind::Efficiency: return 500;
        case RecipeKind::Coverage: return 2000;
        case RecipeKind::FrtP1:
        case RecipeKind::FrtP2: return 100;
    }
    return 0;
}

Index Recipe::default_n1() const {
    switch (kind) {
        case RecipeKind::Efficiency: return 100;
        case RecipeKind::Coverage: return 100;
        case RecipeKind::FrtP1:
        case RecipeKind::FrtP2: return 10;
    }
    return 0;
}

std::string Recipe::name() const {
    switch (kind) {
        case RecipeKind::Efficiency: return "efficiency";
        case RecipeKind::Coverage: return "coverage";
        case RecipeKind::FrtP1: return "frt_p1";
        case RecipeKind::FrtP2: return "frt_p2";
    }
    return "?";
}

Recipe Recipe::parse(const std::string& name, double sigma_eps) {
    Recipe r;
    r.sigma_eps = sigma_eps;
    if (name == "efficiency") r.kind = RecipeKind::Efficiency;
    else if (name == "coverage") r.kind = RecipeKind::Coverage;
    else if (name == "frt_p1") r.kind = RecipeKind::FrtP1;
    else if (name == "frt_p2") r.kind = RecipeKind::FrtP2;
    else fail(ErrorCode::Config, "unknown recipe '" + name + "' (efficiency|coverage|frt_p1|frt_p2)");
    return r;
}

namespace {

// Draws eps_2..eps_N and sets eps_1 so that sum_i eps_i x_i = 0 for the centered x.
Vector anchored_noise(const Vector& x, double sigma, Rng& rng) {
    const Index n = x.size();
    Vector eps(n);
    for (Index i = 1; i < n; ++i) eps(i) = rng.normal(0.0, sigma);
    eps(0) = -x.tail(n - 1).dot(eps.tail(n - 1)) / x(0);
    return eps;
}

FinitePopulation draw_once(const Recipe& recipe, Rng& rng) {
    const Index n = recipe.population_size();
    switch (recipe.kind) {
        case RecipeKind::Efficiency: {
            constexpr Index J = 5;
            Matrix x(n, J);
            Vector y0(n), y1(n);
            for (Index i = 0; i < n; ++i) {
                double cubes = 0.0;
                for (Index j = 0; j < J; ++j) {
                    x(i, j) = rng.uniform(-1.0, 1.0);
                    cubes += x(i, j) * x(i, j) * x(i, j);
                }
                y0(i) = rng.normal(-cubes, 0.1);
                y1(i) = rng.normal(cubes, 0.4);
            }
            return {std::move(y0), std::move(y1), std::move(x)};
        }
        case RecipeKind::Coverage: {
            require(recipe.sigma_eps > 0.0, ErrorCode::Config, "coverage recipe needs sigma_eps > 0");
            Vector x(n);
            for (Index i = 0; i < n; ++i) x(i) = rng.normal();
            x.array() -= x.mean();
            if (std::abs(x(0)) < kAnchorTolerance) fail(ErrorCode::DegenerateAnchor, "|x_1| too small");
            const Vector eps = anchored_noise(x, recipe.sigma_eps, rng);
            Vector y0 = -2.5 * x + eps;
            Vector y1 = x + eps;
            return {std::move(y0), std::move(y1), Matrix(x)};
        }
        case RecipeKind::FrtP1: {
            Vector x(n), y0(n), y1(n);
            for (Index i = 0; i < n; ++i) {
                x(i) = rng.uniform(-1.0, 1.0);
                const double cube = x(i) * x(i) * x(i);
                y1(i) = rng.normal(cube, 1.0);
                y0(i) = rng.normal(-cube, 0.5);
            }
            y0.array() -= y0.mean();
            y1.array() -= y1.mean();
            return {std::move(y0), std::move(y1), Matrix(x)};
        }
        case RecipeKind::FrtP2: {
            Vector x(n);
            for (Index i = 0; i < n; ++i) x(i) = rng.normal();
            x.array() -= x.mean();
            if (std::abs(x(0)) < kAnchorTolerance) fail(ErrorCode::DegenerateAnchor, "|x_1| too small");
            const Vector eps = anchored_noise(x, 1.0, rng);
            Vector y1 = eps;
            Vector y0 = x + eps;
            y0.array() -= y0.mean();
            y1.array() -= y1.mean();
            return {std::move(y0), std::move(y1), Matrix(x)};
        }
    }
    fail(ErrorCode::Config, "unhandled recipe");
}

}  // namespace

FinitePopulation generate_population(const Recipe& recipe, std::uint64_t seed) {
    constexpr std::uint64_t kMaxRedraws = 64;
    for (std::uint64_t attempt = 0; attempt < kMaxRedraws; ++attempt) {
        Rng rng(seed, Stream::Population, attempt);
        try {
            return draw_once(recipe, rng);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::DegenerateAnchor) throw;
        }
    }
    fail(ErrorCode::DegenerateAnchor, "no usable anchor unit after repeated redraws");
}

}  // namespace pretest
