#pragma once

#include "pretest/core.hpp"

#include <array>
#include <cstdint>
#include <string>

namespace pretest {

// Regression specifications: unadjusted (Neyman), additive (Fisher ANCOVA),
// fully interacted (Lin).
enum class Adjustment { N = 0, F = 1, L = 2 };

inline constexpr std::array<Adjustment, 3> kAdjustments{Adjustment::N, Adjustment::F, Adjustment::L};

const char* to_string(Adjustment adj) noexcept;

template <typename T>
struct PerAdjustment {
    std::array<T, 3> values{};
    T& operator[](Adjustment adj) { return values[static_cast<std::size_t>(adj)]; }
    const T& operator[](Adjustment adj) const { return values[static_cast<std::size_t>(adj)]; }
};

// Column means subtracted; divisor N - 1.
Matrix covariate_covariance(const Eigen::Ref<const Matrix>& x);
Matrix center_columns(const Eigen::Ref<const Matrix>& x);

// The science table {Y_i(0), Y_i(1), x_i}. Covariates are centered on construction.
class FinitePopulation {
public:
    FinitePopulation(Vector y0, Vector y1, Matrix x);

    const Vector& y0() const { return y0_; }
    const Vector& y1() const { return y1_; }
    const Matrix& x() const { return x_; }
    Index size() const { return y0_.size(); }
    Index covariates() const { return x_.cols(); }

    double tau() const { return (y1_ - y0_).mean(); }

private:
    Vector y0_;
    Vector y1_;
    Matrix x_;
};

struct TrueParameters {
    double tau = 0.0;
    double e0 = 0.0;
    double e1 = 0.0;
    Vector gamma0;
    Vector gamma1;
    Vector gammaF;
    Matrix s2_x;
    // S^2_{z,*}: finite-population variances of the adjusted potential outcomes.
    PerAdjustment<double> s2_control;
    PerAdjustment<double> s2_treated;
    PerAdjustment<double> s2_tau;
    PerAdjustment<double> v;
    PerAdjustment<double> kappa;
    PerAdjustment<double> rho;
    PerAdjustment<Vector> c;

    // N Cov(tau_hat_x) = S^2_x / (e0 e1).
    Matrix v_x() const { return s2_x / (e0 * e1); }
};

TrueParameters true_parameters(const FinitePopulation& pop, double e1);

// Data-generating recipes for the three simulation studies.
enum class RecipeKind { Efficiency, Coverage, FrtP1, FrtP2 };

struct Recipe {
    RecipeKind kind = RecipeKind::Efficiency;
    double sigma_eps = 1.0;  // Coverage only

    Index population_size() const;
    Index default_n1() const;
    std::string name() const;

    static Recipe parse(const std::string& name, double sigma_eps = 1.0);
};

// Smallest |x_1| accepted as the anchor that absorbs sum_i eps_i x_i = 0.
inline constexpr double kAnchorTolerance = 1e-6;

FinitePopulation generate_population(const Recipe& recipe, std::uint64_t seed);

}  // namespace pretest
