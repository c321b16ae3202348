#include "pretest/design.hpp"

#include "pretest/population.hpp"
#include "pretest/special.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <vector>

namespace pretest {

Assignment::Assignment(Vector z) : z_(std::move(z)) {
    Index treated = 0;
    for (Index i = 0; i < z_.size(); ++i) {
        if (z_(i) == 1.0) ++treated;
        else if (z_(i) != 0.0) fail(ErrorCode::InvalidArgument, "assignment entries must be 0 or 1");
    }
    n1_ = treated;
    if (n1_ < 1 || n1_ > z_.size() - 1) {
        fail(ErrorCode::InvalidSizes, "both arms must be nonempty (n1=" + std::to_string(n1_) +
                                          ", N=" + std::to_string(z_.size()) + ")");
    }
}

Assignment Assignment::swapped() const { return Assignment((1.0 - z_.array()).matrix()); }

Assignment complete_randomization(Index n, Index n1, Rng& rng) {
    if (n1 < 1 || n1 > n - 1) {
        fail(ErrorCode::InvalidSizes, "complete randomization needs 1 <= n1 <= N-1");
    }
    std::vector<Index> units(static_cast<std::size_t>(n));
    std::iota(units.begin(), units.end(), Index{0});
    Vector z = Vector::Zero(n);
    // Partial Fisher-Yates: the first n1 slots are a uniform n1-subset.
    for (Index k = 0; k < n1; ++k) {
        const auto remaining = static_cast<std::uint64_t>(n - k);
        const Index pick = k + static_cast<Index>(rng.below(remaining));
        std::swap(units[static_cast<std::size_t>(k)], units[static_cast<std::size_t>(pick)]);
        z(units[static_cast<std::size_t>(k)]) = 1.0;
    }
    return Assignment(std::move(z));
}

BalanceChecker::BalanceChecker(const Eigen::Ref<const Matrix>& x) : x_(center_columns(x)) {
    const Matrix s2 = covariate_covariance(x_);
    Eigen::JacobiSVD<Matrix> svd(s2);
    const auto& sv = svd.singularValues();
    if (!(sv(sv.size() - 1) > 1e-10 * sv(0))) {
        fail(ErrorCode::SingularCovariates, "covariate covariance S^2_x is singular");
    }
    s2_x_.compute(s2);
    if (s2_x_.info() != Eigen::Success) fail(ErrorCode::SingularCovariates, "S^2_x is not positive definite");
}

Vector BalanceChecker::mean_difference(const Assignment& z) const {
    if (z.size() != x_.rows()) fail(ErrorCode::DimensionMismatch, "assignment length differs from covariate rows");
    const Vector treated_sum = x_.transpose() * z.z();
    const Vector total = x_.colwise().sum().transpose();
    return treated_sum / static_cast<double>(z.n1()) - (total - treated_sum) / static_cast<double>(z.n0());
}

double BalanceChecker::mahalanobis(const Assignment& z) const {
    const Vector diff = mean_difference(z);
    const double n = static_cast<double>(z.size());
    const double e0 = static_cast<double>(z.n0()) / n;
    const double e1 = static_cast<double>(z.n1()) / n;
    return std::max(0.0, n * e0 * e1 * diff.dot(s2_x_.solve(diff)));
}

BalanceReport BalanceChecker::report(const Assignment& z, double a) const {
    BalanceReport out;
    out.tau_x = mean_difference(z);
    const double n = static_cast<double>(z.size());
    const double e0 = static_cast<double>(z.n0()) / n;
    const double e1 = static_cast<double>(z.n1()) / n;
    out.m = std::max(0.0, n * e0 * e1 * out.tau_x.dot(s2_x_.solve(out.tau_x)));
    out.a = a;
    out.phi = out.m < a;
    return out;
}

BalanceReport balance_test(const Eigen::Ref<const Matrix>& x, const Assignment& z, double a) {
    return BalanceChecker(x).report(z, a);
}

RemDraw rem_randomization(const BalanceChecker& balance, Index n1, double a, Rng& rng,
                          std::uint64_t max_attempts) {
    require(a > 0.0, ErrorCode::InvalidArgument, "rerandomization needs a > 0");
    for (std::uint64_t attempt = 1; attempt <= max_attempts; ++attempt) {
        Assignment z = complete_randomization(balance.size(), n1, rng);
        if (balance.mahalanobis(z) < a) return {std::move(z), attempt};
    }
    fail(ErrorCode::AcceptanceExhausted,
         "no assignment with M < a after " + std::to_string(max_attempts) + " attempts; threshold too strict");
}

RemDraw rem_randomization(const Eigen::Ref<const Matrix>& x, Index n1, double a, Rng& rng,
                          std::uint64_t max_attempts) {
    return rem_randomization(BalanceChecker(x), n1, a, rng, max_attempts);
}

Threshold Threshold::parse(const std::string& text) {
    if (text == "inf" || text == "+inf" || text == "Inf") return absolute(std::numeric_limits<double>::infinity());
    const std::string prefix = "chi2_quantile(";
    try {
        if (text.rfind(prefix, 0) == 0 && text.back() == ')') {
            const double p = std::stod(text.substr(prefix.size(), text.size() - prefix.size() - 1));
            if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::Config, "chi2 quantile level must be in [0, 1]");
            return chi2_quantile(p);
        }
        std::size_t used = 0;
        const double a = std::stod(text, &used);
        if (used != text.size() || !(a >= 0.0)) fail(ErrorCode::Config, "threshold must be a number >= 0");
        return absolute(a);
    } catch (const std::logic_error&) {
        fail(ErrorCode::Config, "cannot parse threshold '" + text + "'");
    }
}

double Threshold::resolve(Index dof) const {
    if (kind == Kind::Value) return value;
    return special::chi2_quantile(static_cast<int>(dof), value);
}

std::string Threshold::describe() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.15g", value);
    if (std::strtod(buf, nullptr) != value) std::snprintf(buf, sizeof buf, "%.17g", value);
    if (kind == Kind::Chi2Quantile) return std::string("chi2_quantile(") + buf + ")";
    if (std::isinf(value)) return "inf";
    return buf;
}

}  // namespace pretest
