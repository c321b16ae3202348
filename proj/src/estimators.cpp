#include "pretest/estimators.hpp"

#include "pretest/special.hpp"

namespace pretest {

const char* to_string(Method m) noexcept {
    switch (m) {
        case Method::N: return "N";
        case Method::F: return "F";
        case Method::L: return "L";
        case Method::PT_F: return "PT_F";
        case Method::PT_L: return "PT_L";
    }
    return "?";
}

Method parse_method(const std::string& text) {
    for (Method m : kMethods) {
        if (text == to_string(m)) return m;
    }
    fail(ErrorCode::Config, "unknown method '" + text + "' (N|F|L|PT_F|PT_L)");
}

const char* to_string(ArmUsed arm) noexcept {
    return arm == ArmUsed::Unadjusted ? "unadjusted" : "adjusted";
}

Method pt_method(Adjustment arm) {
    switch (arm) {
        case Adjustment::F: return Method::PT_F;
        case Adjustment::L: return Method::PT_L;
        case Adjustment::N: break;
    }
    fail(ErrorCode::InvalidArgument, "the preliminary-test procedure adjusts with F or L");
}

double normal_critical_value(double alpha) {
    require(alpha > 0.0 && alpha < 1.0, ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
    return special::normal_quantile(1.0 - 0.5 * alpha);
}

ObservedTrial::ObservedTrial(Assignment z, Vector y, Matrix x)
    : z_(std::move(z)), y_(std::move(y)), x_(center_columns(x)) {
    if (y_.size() != z_.size() || x_.rows() != z_.size()) {
        fail(ErrorCode::DimensionMismatch, "z, y and x must share N rows");
    }
    require(x_.cols() >= 1, ErrorCode::DimensionMismatch, "at least one covariate is required");
}

ObservedTrial ObservedTrial::observe(const FinitePopulation& pop, const Assignment& z) {
    if (z.size() != pop.size()) fail(ErrorCode::DimensionMismatch, "assignment length differs from population");
    Vector y = pop.y0() + z.z().cwiseProduct(pop.y1() - pop.y0());
    return {z, std::move(y), pop.x()};
}

TrialAnalyzer::TrialAnalyzer(const Eigen::Ref<const Matrix>& x, EstimateOptions options)
    : x_(center_columns(x)), options_(options), critical_(normal_critical_value(options.alpha)) {
    const Index n = x_.rows();
    const Index j = x_.cols();
    designs_[0].resize(n, 2);
    designs_[1].resize(n, 2 + j);
    designs_[2].resize(n, 2 + 2 * j);
    for (auto& d : designs_) d.col(0).setOnes();
    designs_[1].rightCols(j) = x_;
    designs_[2].middleCols(2, j) = x_;
}

const BalanceChecker& TrialAnalyzer::balance() {
    if (!balance_) balance_.emplace(x_);
    return *balance_;
}

void TrialAnalyzer::build_design(Adjustment adj, const Assignment& z) {
    auto& d = designs_[static_cast<std::size_t>(adj)];
    d.col(1) = z.z();
    if (adj == Adjustment::L) {
        const Index j = x_.cols();
        d.rightCols(j) = x_.array().colwise() * z.z().array();
    }
}

EstimateReport TrialAnalyzer::estimate(Adjustment adj, const Assignment& z, const Eigen::Ref<const Vector>& y) {
    if (z.size() != x_.rows() || y.size() != x_.rows()) {
        fail(ErrorCode::DimensionMismatch, "trial dimensions do not match the analyzer");
    }
    build_design(adj, z);
    const auto slot = static_cast<std::size_t>(adj);
    const auto& fit = solvers_[slot].fit(designs_[slot], y, options_.hc);

    EstimateReport out;
    out.method = adj == Adjustment::N ? Method::N : (adj == Adjustment::F ? Method::F : Method::L);
    out.alpha = options_.alpha;
    out.tau_hat = fit.coefficients(1);
    out.se_hat = fit.robust_se(1);
    out.ci_lo = out.tau_hat - critical_ * out.se_hat;
    out.ci_hi = out.tau_hat + critical_ * out.se_hat;

    const Index j = x_.cols();
    if (adj == Adjustment::F) {
        out.slopes = fit.coefficients.tail(j);
    } else if (adj == Adjustment::L) {
        // Arm-specific slopes: control = x coefficient, treated = x + z:x coefficients.
        const double n = static_cast<double>(z.size());
        const double e0 = static_cast<double>(z.n0()) / n;
        const double e1 = static_cast<double>(z.n1()) / n;
        const Vector control = fit.coefficients.segment(2, j);
        const Vector treated = control + fit.coefficients.tail(j);
        out.slopes = e0 * treated + e1 * control;
    }
    return out;
}

EstimateReport TrialAnalyzer::estimate_pt(Adjustment arm, const Assignment& z, const Eigen::Ref<const Vector>& y,
                                          double a) {
    const BalanceReport balance = this->balance().report(z, a);
    const EstimateReport unadjusted = estimate(Adjustment::N, z, y);
    const EstimateReport adjusted = estimate(arm, z, y);
    EstimateReport out = compose_pt(unadjusted, adjusted, balance);
    out.method = pt_method(arm);
    return out;
}

EstimateReport compose_pt(const EstimateReport& unadjusted, const EstimateReport& adjusted,
                          const BalanceReport& balance) {
    EstimateReport out = balance.phi ? unadjusted : adjusted;
    out.method = adjusted.method == Method::L ? Method::PT_L : Method::PT_F;
    out.balance = balance;
    out.adjusted_arm_used = balance.phi ? ArmUsed::Unadjusted : ArmUsed::Adjusted;
    return out;
}

EstimateReport estimate_N(const ObservedTrial& trial, HcVariant hc, double alpha) {
    TrialAnalyzer analyzer(trial.x(), {hc, alpha});
    return analyzer.estimate(Adjustment::N, trial.assignment(), trial.y());
}

EstimateReport estimate_F(const ObservedTrial& trial, HcVariant hc, double alpha) {
    TrialAnalyzer analyzer(trial.x(), {hc, alpha});
    return analyzer.estimate(Adjustment::F, trial.assignment(), trial.y());
}

EstimateReport estimate_L(const ObservedTrial& trial, HcVariant hc, double alpha) {
    TrialAnalyzer analyzer(trial.x(), {hc, alpha});
    return analyzer.estimate(Adjustment::L, trial.assignment(), trial.y());
}

EstimateReport estimate_PT(const ObservedTrial& trial, double a, Adjustment arm, HcVariant hc, double alpha) {
    TrialAnalyzer analyzer(trial.x(), {hc, alpha});
    return analyzer.estimate_pt(arm, trial.assignment(), trial.y(), a);
}

}  // namespace pretest
