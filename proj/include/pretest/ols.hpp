#pragma once

#include "pretest/core.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>

namespace pretest {

// Eicker-Huber-White weights: HC0 = 1, HC1 = n/(n-p), HC2 = 1/(1-h), HC3 = 1/(1-h)^2.
enum class HcVariant { HC0, HC1, HC2, HC3 };

const char* to_string(HcVariant hc) noexcept;
HcVariant parse_hc(const std::string& text);

// Relative tolerance on sigma_min / sigma_max below which a design is rank deficient.
inline constexpr double kRankTolerance = 1e-10;

template <typename Scalar>
struct RegressionFit {
    VectorX<Scalar> coefficients;
    MatrixX<Scalar> robust_cov;
    VectorX<Scalar> residuals;
    VectorX<Scalar> hat_diagonals;
    Index n = 0;
    Index p = 0;

    Scalar robust_se(Index j) const { return std::sqrt(std::max(robust_cov(j, j), Scalar(0))); }
};

// Least squares through a thin Householder QR, X = QR, so that
//   beta = R^{-1} Q'y,  h_ii = |Q_i|^2,  (X'X)^{-1} X' W X (X'X)^{-1} = R^{-1} (Q' W Q) R^{-T}.
// The object keeps its buffers between calls; refits of equally sized designs
// do not reallocate.
template <typename Scalar>
class LeastSquares {
public:
    using Mat = MatrixX<Scalar>;
    using Vec = VectorX<Scalar>;

    template <typename DerivedX, typename DerivedY>
    const RegressionFit<Scalar>& fit(const Eigen::MatrixBase<DerivedX>& design,
                                     const Eigen::MatrixBase<DerivedY>& response,
                                     HcVariant hc = HcVariant::HC2) {
        const Index n = design.rows();
        const Index p = design.cols();
        if (response.size() != n) {
            fail(ErrorCode::DimensionMismatch, "design has " + std::to_string(n) + " rows but response has " +
                                                   std::to_string(response.size()));
        }
        if (p < 1 || n <= p) {
            fail(ErrorCode::DimensionMismatch,
                 "least squares needs n > p (n=" + std::to_string(n) + ", p=" + std::to_string(p) + ")");
        }

        x_ = design;
        qr_.compute(x_);
        r_ = qr_.matrixQR().topLeftCorner(p, p).template triangularView<Eigen::Upper>();

        svd_.compute(r_);
        const auto& sv = svd_.singularValues();
        const Scalar smax = sv(0);
        const Scalar smin = sv(p - 1);
        if (!(smax > Scalar(0)) || !(smin > Scalar(kRankTolerance) * smax)) {
            fail(ErrorCode::RankDeficient, "design matrix is rank deficient (collinear columns)");
        }

        q_.setIdentity(n, p);
        qr_.householderQ().applyThisOnTheLeft(q_);
        r_inv_.setIdentity(p, p);
        r_.template triangularView<Eigen::Upper>().solveInPlace(r_inv_);

        auto& out = result_;
        out.n = n;
        out.p = p;
        out.coefficients.noalias() = r_inv_ * (q_.transpose() * response);
        out.residuals = response;
        out.residuals.noalias() -= x_ * out.coefficients;
        out.hat_diagonals = q_.rowwise().squaredNorm();
        for (Index i = 0; i < n; ++i) {
            out.hat_diagonals(i) = std::clamp(out.hat_diagonals(i), Scalar(0), Scalar(1));
        }

        weights_.resize(n);
        for (Index i = 0; i < n; ++i) {
            const Scalar e2 = out.residuals(i) * out.residuals(i);
            const Scalar h = out.hat_diagonals(i);
            Scalar omega = 1;
            switch (hc) {
                case HcVariant::HC0: break;
                case HcVariant::HC1: omega = Scalar(n) / Scalar(n - p); break;
                case HcVariant::HC2:
                case HcVariant::HC3: {
                    const Scalar slack = Scalar(1) - h;
                    if (slack < Scalar(kRankTolerance)) {
                        fail(ErrorCode::LeverageOne,
                             "unit " + std::to_string(i) + " has leverage 1 under " + to_string(hc));
                    }
                    omega = hc == HcVariant::HC2 ? Scalar(1) / slack : Scalar(1) / (slack * slack);
                    break;
                }
            }
            weights_(i) = omega * e2;
        }

        meat_.noalias() = q_.transpose() * (weights_.asDiagonal() * q_);
        out.robust_cov.noalias() = r_inv_ * meat_ * r_inv_.transpose();
        out.robust_cov = Scalar(0.5) * (out.robust_cov + out.robust_cov.transpose()).eval();
        return out;
    }

    const RegressionFit<Scalar>& result() const { return result_; }

private:
    Mat x_;
    Eigen::HouseholderQR<Mat> qr_;
    Eigen::JacobiSVD<Mat> svd_;
    Mat r_;
    Mat q_;
    Mat r_inv_;
    Mat meat_;
    Vec weights_;
    RegressionFit<Scalar> result_;
};

// One-shot fit; pure function of its inputs.
template <typename DerivedX, typename DerivedY>
RegressionFit<typename DerivedX::Scalar> fit(const Eigen::MatrixBase<DerivedX>& design,
                                             const Eigen::MatrixBase<DerivedY>& response,
                                             HcVariant hc = HcVariant::HC2) {
    LeastSquares<typename DerivedX::Scalar> solver;
    return solver.fit(design, response, hc);
}

}  // namespace pretest
