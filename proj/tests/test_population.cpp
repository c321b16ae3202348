#include "doctest.h"

#include "pretest/population.hpp"
#include "pretest/rng.hpp"

#include <cmath>

using namespace pretest;

namespace {

FinitePopulation small_population(std::uint64_t seed, Index n, Index j) {
    Rng rng(seed);
    Matrix x(n, j);
    Vector y0(n), y1(n);
    for (Index i = 0; i < n; ++i) {
        for (Index k = 0; k < j; ++k) x(i, k) = rng.normal();
        y0(i) = x.row(i).sum() + rng.normal();
        y1(i) = 1.0 - 2.0 * x(i, 0) + 1.5 * rng.normal();
    }
    return {y0, y1, x};
}

double sample_var(const Vector& v) { return (v.array() - v.mean()).square().sum() / (v.size() - 1.0); }

}  // namespace

TEST_CASE("covariates are centered on construction") {
    const FinitePopulation pop = small_population(1, 20, 3);
    CHECK(pop.x().colwise().mean().norm() < 1e-14);
}

TEST_CASE("dimension mismatch is rejected") {
    CHECK_THROWS_AS(FinitePopulation(Vector::Zero(4), Vector::Zero(5), Matrix::Zero(4, 1)), Error);
    CHECK_THROWS_AS(FinitePopulation(Vector::Zero(4), Vector::Zero(4), Matrix::Zero(3, 1)), Error);
}

TEST_CASE("true parameters follow their definitions") {
    const FinitePopulation pop = small_population(2, 40, 2);
    const TrueParameters tp = true_parameters(pop, 0.25);
    CHECK(tp.e0 == 0.75);
    CHECK(tp.tau == doctest::Approx((pop.y1() - pop.y0()).mean()).epsilon(1e-14));

    // Slopes from least squares of each potential outcome on x.
    const Matrix& x = pop.x();
    const Vector g0 = (x.transpose() * x).ldlt().solve(x.transpose() * (pop.y0().array() - pop.y0().mean()).matrix());
    const Vector g1 = (x.transpose() * x).ldlt().solve(x.transpose() * (pop.y1().array() - pop.y1().mean()).matrix());
    CHECK((tp.gamma0 - g0).norm() < 1e-12);
    CHECK((tp.gamma1 - g1).norm() < 1e-12);
    CHECK((tp.gammaF - (0.75 * g0 + 0.25 * g1)).norm() < 1e-12);

    const double vn = sample_var(pop.y0()) / 0.75 + sample_var(pop.y1()) / 0.25 - sample_var(pop.y1() - pop.y0());
    CHECK(tp.v[Adjustment::N] == doctest::Approx(vn).epsilon(1e-12));
    const Vector r0 = pop.y0() - x * g0;
    const Vector r1 = pop.y1() - x * g1;
    const double vl = sample_var(r0) / 0.75 + sample_var(r1) / 0.25 - sample_var(r1 - r0);
    CHECK(tp.v[Adjustment::L] == doctest::Approx(vl).epsilon(1e-12));
    CHECK(tp.rho[Adjustment::L] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("variance gap equals the projection of c onto v_x") {
    for (std::uint64_t seed = 3; seed < 13; ++seed) {
        const FinitePopulation pop = small_population(seed, 5 * (6 + static_cast<Index>(seed)), 1 + seed % 3);
        const TrueParameters tp = true_parameters(pop, 0.4);
        const Eigen::LDLT<Matrix> vx(tp.v_x());
        for (Adjustment adj : kAdjustments) {
            const double gap = tp.v[adj] - tp.v[Adjustment::L];
            const double quad = tp.c[adj].dot(vx.solve(tp.c[adj]));
            CHECK(gap == doctest::Approx(quad).epsilon(1e-9));
            CHECK(gap >= -1e-12);
            CHECK(tp.kappa[adj] <= 1.0 + 1e-15);
            CHECK(tp.rho[adj] <= 1.0 + 1e-15);
        }
        CHECK(tp.c[Adjustment::L].norm() == 0.0);
    }
}

TEST_CASE("non-integer arm size is rejected") {
    const FinitePopulation pop = small_population(4, 10, 1);
    CHECK_THROWS_AS(true_parameters(pop, 0.33), Error);
}

TEST_CASE("recipe populations") {
    SUBCASE("efficiency") {
        const FinitePopulation pop = generate_population(Recipe::parse("efficiency"), 1);
        CHECK(pop.size() == 500);
        CHECK(pop.covariates() == 5);
    }
    SUBCASE("coverage anchors the noise") {
        const Recipe recipe = Recipe::parse("coverage", 1.5);
        const FinitePopulation pop = generate_population(recipe, 1);
        CHECK(pop.size() == 2000);
        // y0 = -2.5 x + eps and y1 = x + eps, with sum eps x = 0, so both slopes are exact.
        const TrueParameters tp = true_parameters(pop, 0.05);
        CHECK(tp.gamma0(0) == doctest::Approx(-2.5).epsilon(1e-10));
        CHECK(tp.gamma1(0) == doctest::Approx(1.0).epsilon(1e-10));
    }
    SUBCASE("frt populations are centered to a zero effect") {
        for (const char* name : {"frt_p1", "frt_p2"}) {
            const FinitePopulation pop = generate_population(Recipe::parse(name), 7);
            CHECK(pop.size() == 100);
            CHECK(std::abs(pop.y1().mean() - pop.y0().mean()) < 1e-12);
        }
    }
    SUBCASE("same seed, same population") {
        const FinitePopulation a = generate_population(Recipe::parse("frt_p1"), 9);
        const FinitePopulation b = generate_population(Recipe::parse("frt_p1"), 9);
        CHECK((a.y0() - b.y0()).norm() == 0.0);
        CHECK((a.x() - b.x()).norm() == 0.0);
    }
    CHECK_THROWS_AS(Recipe::parse("nope"), Error);
}
