#include "doctest.h"

#include "pretest/special.hpp"

#include <cmath>
#include <functional>
#include <limits>

using namespace pretest::special;

namespace {

double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
               double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) return left + right + (left + right - whole) / 15.0;
    return simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-13) {
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    return simpson(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 60);
}

// chi^2_k CDF by quadrature in u = sqrt(x), which removes the singularity at 0 for k = 1.
double chi2_cdf_quadrature(int k, double x) {
    const double log_norm = -0.5 * k * std::log(2.0) - std::lgamma(0.5 * k);
    const auto density_u = [&](double u) {
        if (u == 0.0) return k == 1 ? 2.0 * std::exp(log_norm) : 0.0;
        const double t = u * u;
        return 2.0 * u * std::exp(log_norm + (0.5 * k - 1.0) * std::log(t) - 0.5 * t);
    };
    return integrate(density_u, 0.0, std::sqrt(x));
}

}  // namespace

TEST_CASE("normal quantile reference values") {
    CHECK(normal_quantile(0.5) == 0.0);
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
    CHECK(normal_quantile(0.995) == doctest::Approx(2.5758293035489004).epsilon(1e-14));
    CHECK(normal_quantile(0.9) == doctest::Approx(1.2815515655446004).epsilon(1e-14));
    CHECK(normal_quantile(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-14));
    CHECK(normal_quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-13));
    CHECK_THROWS(normal_quantile(0.0));
    CHECK_THROWS(normal_quantile(1.0));
}

TEST_CASE("normal quantile inverts the cdf") {
    for (double p = 1e-6; p < 1.0; p += 0.0137) {
        const double q = normal_quantile(p);
        CHECK(normal_cdf(q) == doctest::Approx(p).epsilon(1e-13));
    }
}

TEST_CASE("incomplete gamma against tabulated values") {
    CHECK(gamma_p(2.0, 1.0) == doctest::Approx(0.26424111765711527644).epsilon(1e-13));
    CHECK(gamma_p(1.5, 1.0) == doctest::Approx(0.42759329552912134220).epsilon(1e-13));
    CHECK(gamma_p(2.0, 5.0) == doctest::Approx(0.95957231800548714595).epsilon(1e-13));
    CHECK(gamma_p(11.5, 11.0) == doctest::Approx(0.47974821959920432857).epsilon(1e-12));
    CHECK(gamma_p(98.0, 99.0) == doctest::Approx(0.55342727426212001696).epsilon(1e-11));
    CHECK(gamma_p(1005.0, 1001.0) == doctest::Approx(0.45389544705967349580).epsilon(1e-10));
    CHECK(gamma_p(2.0, 0.0) == 0.0);
}

TEST_CASE("upper and lower gamma are complementary") {
    for (double s : {0.5, 1.0, 2.5, 7.0, 30.0}) {
        for (double x : {0.01, 0.7, 2.0, 6.5, 40.0}) {
            CHECK(gamma_p(s, x) + gamma_q(s, x) == doctest::Approx(1.0).epsilon(1e-14));
        }
    }
}

TEST_CASE("chi-square cdf closed forms") {
    for (double x : {0.001, 0.3, 1.0, 3.84, 10.0, 30.0}) {
        CHECK(chi2_cdf(1, x) == doctest::Approx(std::erf(std::sqrt(0.5 * x))).epsilon(1e-13));
        CHECK(chi2_cdf(2, x) == doctest::Approx(-std::expm1(-0.5 * x)).epsilon(1e-13));
    }
    CHECK(chi2_cdf(3, 0.0) == 0.0);
    CHECK(chi2_cdf(3, std::numeric_limits<double>::infinity()) == 1.0);
}

TEST_CASE("chi-square cdf against quadrature") {
    for (int k : {1, 2, 3, 5, 10}) {
        for (double x : {0.2, 1.0, 2.0, 4.5, 12.0}) {
            CHECK(std::abs(chi2_cdf(k, x) - chi2_cdf_quadrature(k, x)) < 1e-9);
        }
    }
    CHECK(std::abs(chi2_cdf(3, 2.0) - chi2_cdf_quadrature(3, 2.0)) < 1e-10);
}

TEST_CASE("chi-square quantile round trip") {
    CHECK(chi2_quantile(1, 0.95) == doctest::Approx(3.841458820694124).epsilon(1e-12));
    CHECK(chi2_quantile(5, 0.2) == doctest::Approx(2.342534).epsilon(1e-6));
    for (int k : {1, 2, 5, 17}) {
        for (double p : {0.01, 0.2, 0.5, 0.75, 0.8, 0.99}) {
            CHECK(chi2_cdf(k, chi2_quantile(k, p)) == doctest::Approx(p).epsilon(1e-12));
        }
    }
    CHECK(chi2_quantile(4, 0.0) == 0.0);
    CHECK(std::isinf(chi2_quantile(4, 1.0)));
}
