#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "complora/matrix.hpp"
#include "complora/svd.hpp"

namespace complora {

/// Partition of a weight's singular basis at cut index p.
///
/// The first p singular triplets form the principal part, the remaining
/// c = k - p the complementary part. The adapter projections are built from
/// the complementary vectors alone and carry no singular values:
///   proj_in  (c x d_in)  rows are complementary right singular vectors,
///   proj_out (d_out x c) columns are complementary left singular vectors.
/// Any update of the form proj_out * M * proj_in therefore annihilates every
/// principal direction on both sides.
struct SubspaceSplit {
    std::size_t p = 0;
    std::size_t c = 0;
    Matrix u_p;
    Matrix v_p;
    std::vector<double> sigma_p;
    Matrix u_c;
    Matrix v_c;
    std::vector<double> sigma_c;
    Matrix proj_in;
    Matrix proj_out;

    std::size_t k() const noexcept { return p + c; }
    std::size_t d_in() const noexcept { return proj_in.cols(); }
    std::size_t d_out() const noexcept { return proj_out.rows(); }

    /// u_p * diag(sigma_p) * v_p^T
    Matrix principal_part() const;
    /// u_c * diag(sigma_c) * v_c^T
    Matrix complementary_part() const;
};

/// Throws RangeError when p > k.
SubspaceSplit split(const SvdFactorization& fact, std::size_t p);

/// Convenience: svd followed by split.
SubspaceSplit split_weight(const Matrix& w, std::size_t p);

/// Principal plus complementary reconstruction; equals the decomposed weight.
Matrix reconstruct(const SubspaceSplit& s);

struct SpectrumTable {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> sigma;  // one descending vector per matrix
    std::vector<double> aggregate;           // mean sigma per index over matrices that have it

    /// CSV with header `matrix_id,index,sigma`; index is 1-based.
    std::string to_csv() const;
};

/// Singular values of every matrix. ids default to "0", "1", ... when empty.
SpectrumTable singular_spectrum(const std::vector<Matrix>& weights, std::vector<std::string> ids = {});

/// sigma[p-1] / sigma[p], infinity when sigma[p] is zero. Requires 1 <= p < k.
double spectral_gap(std::span<const double> sigma, std::size_t p);

}  // namespace complora
