#pragma once

#include <cstddef>
#include <vector>

#include "complora/matrix.hpp"

namespace complora {

/// Thin SVD  w = u * diag(sigma) * v^T  with k = min(rows, cols).
///
/// u is rows x k, v is cols x k, both column-orthonormal; sigma is
/// non-negative and non-increasing.
struct SvdFactorization {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;

    std::size_t rank_bound() const noexcept { return sigma.size(); }
    Matrix reconstruct() const;
};

struct SvdOptions {
    /// A column pair (a, b) is rotated while |a.b| > pair_tol * |a| * |b|.
    /// Zero selects rows * machine epsilon. Iteration stops after the first
    /// sweep with no rotation.
    double pair_tol = 0.0;
    int max_sweeps = 100;
};

/// One-sided (Hestenes) Jacobi SVD. Throws SvdError on non-convergence and
/// NumericError on non-finite input.
SvdFactorization svd(const Matrix& w, const SvdOptions& options = {});

/// Frobenius-optimal rank-r approximation u_r * diag(sigma_r) * v_r^T.
/// Throws RangeError unless 1 <= r <= min(rows, cols).
Matrix best_rank_r(const Matrix& w, std::size_t r);

/// Count of singular values strictly above `tol`.
std::size_t numerical_rank(const Matrix& m, double tol = 1e-10);

}  // namespace complora
