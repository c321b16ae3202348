#include "doctest.h"

#include "pretest/design.hpp"
#include "pretest/population.hpp"
#include "pretest/special.hpp"

#include <cmath>
#include <limits>
#include <map>

using namespace pretest;

namespace {

Matrix covariates(std::uint64_t seed, Index n, Index j) {
    Rng rng(seed);
    Matrix x(n, j);
    for (Index i = 0; i < n; ++i)
        for (Index k = 0; k < j; ++k) x(i, k) = rng.normal() + (k == 1 ? 0.5 * x(i, 0) : 0.0);
    return x;
}

}  // namespace

TEST_CASE("complete randomization has fixed arm sizes and is uniform") {
    Rng rng(1, Stream::Assignment, 0);
    std::map<int, int> counts;
    constexpr int draws = 50'000;
    for (int r = 0; r < draws; ++r) {
        const Assignment z = complete_randomization(5, 2, rng);
        REQUIRE(z.n1() == 2);
        int mask = 0;
        for (Index i = 0; i < 5; ++i) mask |= z.treated(i) ? 1 << i : 0;
        ++counts[mask];
    }
    CHECK(counts.size() == 10);
    double stat = 0.0;
    for (const auto& [mask, c] : counts) stat += (c - draws / 10.0) * (c - draws / 10.0) / (draws / 10.0);
    CHECK(special::chi2_cdf(9, stat) < 0.999);
}

TEST_CASE("assignment validation") {
    CHECK_THROWS_AS(Assignment(Vector::Zero(4)), Error);
    CHECK_THROWS_AS(Assignment(Vector::Ones(4)), Error);
    Vector bad(3);
    bad << 1, 0, 2;
    CHECK_THROWS_AS(Assignment{bad}, Error);
    Rng rng(1);
    CHECK_THROWS_AS(complete_randomization(5, 0, rng), Error);
    CHECK_THROWS_AS(complete_randomization(5, 5, rng), Error);
}

TEST_CASE("Mahalanobis distance matches the direct formula") {
    const Matrix x = covariates(2, 25, 3);
    const BalanceChecker checker(x);
    Rng rng(3);
    for (int r = 0; r < 20; ++r) {
        const Assignment z = complete_randomization(25, 10, rng);
        const Matrix xc = x.rowwise() - x.colwise().mean();
        Vector t = Vector::Zero(3), c = Vector::Zero(3);
        for (Index i = 0; i < 25; ++i) (z.treated(i) ? t : c) += xc.row(i).transpose();
        const Vector diff = t / 10.0 - c / 15.0;
        const Matrix s2 = xc.transpose() * xc / 24.0;
        const Matrix cov = s2 * (1.0 / 10.0 + 1.0 / 15.0);
        const double m = diff.dot(cov.inverse() * diff);
        CHECK(checker.mahalanobis(z) == doctest::Approx(m).epsilon(1e-11));
        CHECK((checker.mean_difference(z) - diff).norm() < 1e-13);
    }
}

TEST_CASE("M has mean J under complete randomization (exact, by enumeration)") {
    // E[tau_x tau_x'] = S^2_x / (N e0 e1) exactly, so E[M] = J.
    const Matrix x = covariates(5, 10, 2);
    const BalanceChecker checker(x);
    double total = 0.0;
    int count = 0;
    for (int mask = 0; mask < 1024; ++mask) {
        if (__builtin_popcount(static_cast<unsigned>(mask)) != 4) continue;
        Vector z(10);
        for (int i = 0; i < 10; ++i) z(i) = (mask >> i) & 1;
        total += checker.mahalanobis(Assignment(z));
        ++count;
    }
    CHECK(count == 210);
    CHECK(total / count == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("balance indicator uses a strict inequality") {
    const Matrix x = covariates(6, 12, 1);
    Rng rng(7);
    const Assignment z = complete_randomization(12, 6, rng);
    const BalanceChecker checker(x);
    const double m = checker.mahalanobis(z);
    CHECK_FALSE(checker.report(z, m).phi);
    CHECK(checker.report(z, std::nextafter(m, 1e9)).phi);
    CHECK(checker.report(z, std::numeric_limits<double>::infinity()).phi);
    CHECK_FALSE(checker.report(z, 0.0).phi);
    CHECK(balance_test(x, z, 1.0).m == doctest::Approx(m).epsilon(1e-15));
}

TEST_CASE("swapping arms leaves M unchanged") {
    const Matrix x = covariates(8, 16, 2);
    const BalanceChecker checker(x);
    Rng rng(9);
    const Assignment z = complete_randomization(16, 8, rng);
    CHECK(checker.mahalanobis(z.swapped()) == doctest::Approx(checker.mahalanobis(z)).epsilon(1e-12));
}

TEST_CASE("singular covariates are reported") {
    Matrix x = covariates(10, 20, 2);
    x.col(1) = 3.0 * x.col(0);
    try {
        BalanceChecker checker(x);
        FAIL("expected SingularCovariates");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SingularCovariates);
    }
}

TEST_CASE("rerandomization accepts only balanced draws") {
    const Matrix x = covariates(11, 60, 2);
    const double a = special::chi2_quantile(2, 0.1);
    Rng rng(12, Stream::Assignment, 0);
    const BalanceChecker checker(x);
    for (int r = 0; r < 50; ++r) {
        const RemDraw draw = rem_randomization(checker, 20, a, rng);
        CHECK(checker.mahalanobis(draw.assignment) < a);
        CHECK(draw.attempts >= 1);
    }
    CHECK_THROWS_AS(rem_randomization(checker, 20, 0.0, rng), Error);
    try {
        rem_randomization(checker, 20, 1e-12, rng, 100);
        FAIL("expected AcceptanceExhausted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AcceptanceExhausted);
    }
}

TEST_CASE("threshold parsing") {
    CHECK(std::isinf(Threshold::parse("inf").resolve(3)));
    CHECK(Threshold::parse("2.5").resolve(3) == 2.5);
    CHECK(Threshold::parse("chi2_quantile(0.2)").resolve(5) == doctest::Approx(special::chi2_quantile(5, 0.2)));
    CHECK_THROWS_AS(Threshold::parse("-1"), Error);
    CHECK_THROWS_AS(Threshold::parse("chi2_quantile(2)"), Error);
    CHECK_THROWS_AS(Threshold::parse("abc"), Error);
}
