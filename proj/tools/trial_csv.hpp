#pragma once

#include "pretest/estimators.hpp"
#include "pretest/population.hpp"

#include <string>
#include <vector>

namespace pretest::cli {

struct TrialTable {
    std::vector<std::string> covariate_names;
    ObservedTrial trial;
};

// Header z,y,<covariates...>; one row per unit. Errors name the line and column.
TrialTable parse_trial_csv(const std::string& text, const std::string& source = "<input>");
TrialTable read_trial_csv(const std::string& path);

// Same schema; y is the observed outcome under z.
std::string trial_csv(const ObservedTrial& trial);

}  // namespace pretest::cli
