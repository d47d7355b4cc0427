#pragma once

#include "aggdp/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace aggdp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kPivotThreshold = 1e-10;

/// Solves A x = b by LU with partial pivoting; throws if a pivot falls below kPivotThreshold.
inline Vector solve_dense(const Matrix& a, const Vector& b, const std::string& context = "linear system") {
    if (a.rows() != a.cols() || a.rows() != b.size())
        throw ValidationError(context + ": dimension mismatch");
    Eigen::PartialPivLU<Matrix> lu(a);
    const Matrix& factors = lu.matrixLU();
    for (Eigen::Index k = 0; k < factors.rows(); ++k) {
        if (!(std::abs(factors(k, k)) >= kPivotThreshold))
            throw NumericalError(context + ": singular matrix (pivot " + std::to_string(k) + " magnitude " +
                                 std::to_string(std::abs(factors(k, k))) + ")");
    }
    return lu.solve(b);
}

inline double sup_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

inline double sup_distance(const Vector& a, const Vector& b) { return sup_norm(a - b); }

inline bool all_finite(const Vector& v) { return v.allFinite(); }

} // namespace aggdp
