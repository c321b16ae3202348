#pragma once

// Independent numeric references for tests: adaptive Simpson quadrature and
// the densities built on it.

#include <cmath>
#include <functional>

namespace oracle {

inline double simpson_step(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                           double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double flm = f(0.5 * (a + m));
    const double frm = f(0.5 * (m + b));
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) return left + right + (left + right - whole) / 15.0;
    return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-13) {
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    return simpson_step(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 60);
}

inline double normal_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); }

// chi^2_k CDF by quadrature in u = sqrt(x).
inline double chi2_cdf(int k, double x) {
    if (x <= 0.0) return 0.0;
    const double log_norm = -0.5 * k * std::log(2.0) - std::lgamma(0.5 * k);
    const auto density_u = [&](double u) {
        if (u == 0.0) return k == 1 ? 2.0 * std::exp(log_norm) : 0.0;
        const double t = u * u;
        return 2.0 * u * std::exp(log_norm + (0.5 * k - 1.0) * std::log(t) - 0.5 * t);
    };
    return integrate(density_u, 0.0, std::sqrt(x));
}

// E[g(D_1) | D'D < a] (inside) or | D'D >= a (outside), D ~ N(0, I_J), via
// the density of D_1 times P(chi^2_{J-1} <> a - t^2).
inline double truncated_moment(int dof, double a, bool inside, const std::function<double(double)>& g) {
    const auto rest = [&](double t) {
        const double r = a - t * t;
        double below = 0.0;
        if (dof == 1) below = r > 0.0 ? 1.0 : 0.0;
        else below = chi2_cdf(dof - 1, r);
        return inside ? below : 1.0 - below;
    };
    const double hi = 12.0;
    const double root = std::sqrt(a);
    // Split at +-sqrt(a), where the integrand has a kink (or jump for J = 1).
    const auto piece = [&](const std::function<double(double)>& h) {
        if (root >= hi) return integrate(h, -hi, hi);
        return integrate(h, -hi, -root) + integrate(h, -root, root) + integrate(h, root, hi);
    };
    const double mass = piece([&](double t) { return normal_pdf(t) * rest(t); });
    const double num = piece([&](double t) { return g(t) * normal_pdf(t) * rest(t); });
    return num / mass;
}

}  // namespace oracle
