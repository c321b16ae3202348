#pragma once

#include "pretest/core.hpp"
#include "pretest/design.hpp"
#include "pretest/ols.hpp"
#include "pretest/population.hpp"

#include <array>
#include <optional>
#include <string>

namespace pretest {

// Realized data (Z, Y, X) from one assignment. Covariates are centered.
class ObservedTrial {
public:
    ObservedTrial(Assignment z, Vector y, Matrix x);

    static ObservedTrial observe(const FinitePopulation& pop, const Assignment& z);

    const Assignment& assignment() const { return z_; }
    const Vector& y() const { return y_; }
    const Matrix& x() const { return x_; }
    Index size() const { return y_.size(); }
    Index covariates() const { return x_.cols(); }

private:
    Assignment z_;
    Vector y_;
    Matrix x_;
};

enum class Method { N, F, L, PT_F, PT_L };

inline constexpr std::array<Method, 5> kMethods{Method::N, Method::F, Method::L, Method::PT_F, Method::PT_L};

const char* to_string(Method m) noexcept;
Method parse_method(const std::string& text);

enum class ArmUsed { Unadjusted, Adjusted };

const char* to_string(ArmUsed arm) noexcept;

struct EstimateReport {
    Method method = Method::N;
    double tau_hat = 0.0;
    double se_hat = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double alpha = 0.05;
    std::optional<BalanceReport> balance;      // PT methods only
    std::optional<ArmUsed> adjusted_arm_used;  // PT methods only
    // Covariate slope gamma_hat in tau_hat = tau_hat_N - gamma_hat' tau_hat_x (empty for N).
    Vector slopes;

    bool covers(double tau) const { return ci_lo <= tau && tau <= ci_hi; }
    double ci_length() const { return ci_hi - ci_lo; }
};

struct EstimateOptions {
    HcVariant hc = HcVariant::HC2;
    double alpha = 0.05;
};

// q_{1 - alpha/2} of the standard normal.
double normal_critical_value(double alpha);

// Reusable analysis workspace bound to one covariate matrix: evaluates the
// unadjusted, additive and fully interacted regressions for any (z, y) without
// reallocating.
class TrialAnalyzer {
public:
    explicit TrialAnalyzer(const Eigen::Ref<const Matrix>& x, EstimateOptions options = {});

    EstimateReport estimate(Adjustment adj, const Assignment& z, const Eigen::Ref<const Vector>& y);
    EstimateReport estimate_pt(Adjustment arm, const Assignment& z, const Eigen::Ref<const Vector>& y, double a);

    // Built on first use so regressions work even when S^2_x is singular.
    const BalanceChecker& balance();
    const EstimateOptions& options() const { return options_; }
    const Matrix& x() const { return x_; }

private:
    void build_design(Adjustment adj, const Assignment& z);

    Matrix x_;
    EstimateOptions options_;
    std::optional<BalanceChecker> balance_;
    double critical_ = 0.0;
    std::array<Matrix, 3> designs_;
    std::array<LeastSquares<double>, 3> solvers_;
};

EstimateReport estimate_N(const ObservedTrial& trial, HcVariant hc = HcVariant::HC2, double alpha = 0.05);
EstimateReport estimate_F(const ObservedTrial& trial, HcVariant hc = HcVariant::HC2, double alpha = 0.05);
EstimateReport estimate_L(const ObservedTrial& trial, HcVariant hc = HcVariant::HC2, double alpha = 0.05);
EstimateReport estimate_PT(const ObservedTrial& trial, double a, Adjustment arm,
                           HcVariant hc = HcVariant::HC2, double alpha = 0.05);

// tau_pt = phi tau_N + (1 - phi) tau_adj, and likewise for se and CI.
EstimateReport compose_pt(const EstimateReport& unadjusted, const EstimateReport& adjusted,
                          const BalanceReport& balance);

Method pt_method(Adjustment arm);

}  // namespace pretest
