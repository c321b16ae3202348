#pragma once

#include "pretest/core.hpp"
#include "pretest/rng.hpp"

#include <cstdint>
#include <string>
#include <utility>

namespace pretest {

// A treatment assignment with fixed arm sizes; z is stored as 0/1 doubles so
// it drops straight into design matrices.
class Assignment {
public:
    explicit Assignment(Vector z);

    const Vector& z() const { return z_; }
    Index size() const { return z_.size(); }
    Index n1() const { return n1_; }
    Index n0() const { return size() - n1_; }
    bool treated(Index i) const { return z_(i) != 0.0; }

    Assignment swapped() const;

private:
    Vector z_;
    Index n1_ = 0;
};

Assignment complete_randomization(Index n, Index n1, Rng& rng);

struct BalanceReport {
    Vector tau_x;
    double m = 0.0;
    double a = 0.0;
    bool phi = false;  // true = balanced (M < a)
};

// Mahalanobis balance of covariate means against the exact design covariance
// Cov(tau_hat_x) = S^2_x / (N e0 e1). Precomputes the factorization of S^2_x,
// so repeated evaluation over many assignments is cheap.
class BalanceChecker {
public:
    explicit BalanceChecker(const Eigen::Ref<const Matrix>& x);

    Vector mean_difference(const Assignment& z) const;
    double mahalanobis(const Assignment& z) const;
    BalanceReport report(const Assignment& z, double a) const;

    Index size() const { return x_.rows(); }
    Index covariates() const { return x_.cols(); }

private:
    Matrix x_;
    Eigen::LLT<Matrix> s2_x_;
};

BalanceReport balance_test(const Eigen::Ref<const Matrix>& x, const Assignment& z, double a);

struct RemDraw {
    Assignment assignment;
    std::uint64_t attempts = 0;
};

// Rejection sampling of complete randomizations until M < a.
RemDraw rem_randomization(const BalanceChecker& balance, Index n1, double a, Rng& rng,
                          std::uint64_t max_attempts = 1'000'000);
RemDraw rem_randomization(const Eigen::Ref<const Matrix>& x, Index n1, double a, Rng& rng,
                          std::uint64_t max_attempts = 1'000'000);

// Balance threshold given either directly or as a chi-square quantile level.
struct Threshold {
    enum class Kind { Value, Chi2Quantile };
    Kind kind = Kind::Value;
    double value = 0.0;

    static Threshold absolute(double a) { return {Kind::Value, a}; }
    static Threshold chi2_quantile(double p) { return {Kind::Chi2Quantile, p}; }
    // Accepts "inf", a number, or "chi2_quantile(p)".
    static Threshold parse(const std::string& text);

    double resolve(Index dof) const;
    std::string describe() const;
};

}  // namespace pretest
