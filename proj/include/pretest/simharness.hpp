#pragma once

#include "pretest/core.hpp"
#include "pretest/design.hpp"
#include "pretest/estimators.hpp"
#include "pretest/frt.hpp"
#include "pretest/population.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pretest {

enum class Study { Estimation, Overlay, FrtType1 };

const char* to_string(Study s) noexcept;

// An estimation method as simulated: the five estimators with their normal
// intervals, and the two PT estimators with PT-specific intervals.
struct SimMethod {
    Method method = Method::N;
    bool pt_specific_ci = false;

    std::string name() const;
    static SimMethod parse(const std::string& text);
};

struct FrtStudySpec {
    std::vector<Statistic> statistics;
    FrtMode mode = FrtMode::Unconditional;
    Index reps = 500;
    std::uint64_t enumeration_cap = 100'000;
    Index refdraws = 1000;
};

struct SimulationConfig {
    std::string config_id = "sim";
    Study study = Study::Estimation;
    Recipe recipe;
    Index n1 = 0;  // 0 = recipe default
    Threshold a_spec = Threshold::chi2_quantile(0.5);
    Index replications = 1000;
    std::vector<SimMethod> methods;
    bool conditional_breakdown = true;
    std::optional<FrtStudySpec> frt;
    std::uint64_t seed = 0;
    int threads = 1;
    Index population_redraws = 1;
    double alpha = 0.05;
    HcVariant hc = HcVariant::HC2;
    Index refdraws = 20'000;  // per component, PT-specific intervals
    std::string output_path;

    void validate() const;
    Index arm_size() const { return n1 > 0 ? n1 : recipe.default_n1(); }

    // JSON text in, JSON text out; unknown keys are rejected.
    static SimulationConfig from_json(const std::string& text);
    std::string to_json() const;
};

inline constexpr std::array<double, 3> kAlphaGrid{0.01, 0.05, 0.10};

struct MetricRow {
    std::string config_id;
    std::string method;
    std::string metric;
    double value = 0.0;
    double mc_se = 0.0;  // NaN when not available
};

// Per-replication record for plot data.
struct ReplicationRecord {
    Index population = 0;
    Index replication = 0;
    double m = 0.0;
    bool phi = false;
    std::vector<double> values;  // tau_hat - tau per method, or p-values per statistic
};

struct SimulationSummary {
    SimulationConfig config;
    double a = 0.0;
    std::vector<double> tau;  // per population
    std::vector<std::string> columns;  // method or statistic names, in order
    std::vector<MetricRow> rows;
    std::vector<ReplicationRecord> records;
    double runtime_seconds = 0.0;  // reported, never written to result files

    // First row matching (method, metric) for the first population.
    const MetricRow& row(const std::string& method, const std::string& metric) const;
    double metric(const std::string& method, const std::string& metric) const { return row(method, metric).value; }
    double mc_se(const std::string& method, const std::string& metric) const { return row(method, metric).mc_se; }
};

SimulationSummary run_simulation(const SimulationConfig& config);
SimulationSummary rem_vs_cr_overlay(const SimulationConfig& config);
SimulationSummary frt_type1_study(const SimulationConfig& config);

// Dispatches on config.study.
SimulationSummary run_study(const SimulationConfig& config);

// Long-format CSV (config_id, method, metric, value, mc_se).
std::string summary_csv(const SimulationSummary& summary);
// Config echo, population constants and metrics; no timing.
std::string summary_json(const SimulationSummary& summary);

// Writes the CSV to path and the JSON sidecar next to it (same stem, .json).
// With plot data: <stem>_draws.csv and <stem>_quantiles.csv for estimation
// studies, <stem>_pvalues.csv and <stem>_histogram.csv (20 bins) for FRT studies.
std::vector<std::string> write_outputs(const SimulationSummary& summary, const std::string& path, bool plot_data);

std::string plot_draws_csv(const SimulationSummary& summary);
std::string plot_quantiles_csv(const SimulationSummary& summary);
std::string plot_histogram_csv(const SimulationSummary& summary, int bins = 20);

// Formatting shared by all CSV writers: %.12g, NA for NaN.
std::string format_number(double v);

}  // namespace pretest
