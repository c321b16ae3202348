#include "pretest/core.hpp"
#include "pretest/ols.hpp"

namespace pretest {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::LeverageOne: return "LeverageOne";
        case ErrorCode::SingularCovariates: return "SingularCovariates";
        case ErrorCode::InvalidSizes: return "InvalidSizes";
        case ErrorCode::AcceptanceExhausted: return "AcceptanceExhausted";
        case ErrorCode::DegenerateAnchor: return "DegenerateAnchor";
        case ErrorCode::EmptyConditionSet: return "EmptyConditionSet";
        case ErrorCode::RankDeficientObserved: return "RankDeficientObserved";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::Parse: return "ParseError";
        case ErrorCode::Config: return "ConfigError";
        case ErrorCode::Io: return "IoError";
    }
    return "Unknown";
}

bool Error::is_statistical() const noexcept {
    switch (code_) {
        case ErrorCode::RankDeficient:
        case ErrorCode::LeverageOne:
        case ErrorCode::SingularCovariates:
        case ErrorCode::AcceptanceExhausted:
        case ErrorCode::DegenerateAnchor:
        case ErrorCode::EmptyConditionSet:
        case ErrorCode::RankDeficientObserved:
            return true;
        default:
            return false;
    }
}

const char* to_string(HcVariant hc) noexcept {
    switch (hc) {
        case HcVariant::HC0: return "HC0";
        case HcVariant::HC1: return "HC1";
        case HcVariant::HC2: return "HC2";
        case HcVariant::HC3: return "HC3";
    }
    return "HC?";
}

HcVariant parse_hc(const std::string& text) {
    if (text == "HC0" || text == "hc0") return HcVariant::HC0;
    if (text == "HC1" || text == "hc1") return HcVariant::HC1;
    if (text == "HC2" || text == "hc2") return HcVariant::HC2;
    if (text == "HC3" || text == "hc3") return HcVariant::HC3;
    fail(ErrorCode::InvalidArgument, "unknown HC variant '" + text + "' (expected HC0..HC3)");
}

}  // namespace pretest
