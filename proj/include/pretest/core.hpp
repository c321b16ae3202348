#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pretest {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;
using Index = Eigen::Index;

enum class ErrorCode {
    RankDeficient,
    DimensionMismatch,
    LeverageOne,
    SingularCovariates,
    InvalidSizes,
    AcceptanceExhausted,
    DegenerateAnchor,
    EmptyConditionSet,
    RankDeficientObserved,
    InvalidArgument,
    Parse,
    Config,
    Io,
};

const char* to_string(ErrorCode code) noexcept;

// Single exception type for the library; the code drives CLI exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    // Input/statistical/config classification used by the CLI exit-code contract.
    bool is_statistical() const noexcept;

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const char* what) {
    if (!condition) fail(code, what);
}

}  // namespace pretest
