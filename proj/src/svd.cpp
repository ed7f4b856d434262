#include "complora/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "complora/errors.hpp"

namespace complora {

namespace {

// Orthonormal columns for the zero-sigma slots of `cols`, built by
// Gram-Schmidt over the standard basis. `filled[j]` marks columns that are
// already set.
void complete_basis(std::vector<std::vector<double>>& cols, const std::vector<bool>& filled, std::size_t dim) {
    std::vector<std::size_t> basis;
    for (std::size_t j = 0; j < cols.size(); ++j)
        if (filled[j]) basis.push_back(j);

    std::size_t candidate = 0;
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (filled[j]) continue;
        for (; candidate < dim; ++candidate) {
            std::vector<double> e(dim, 0.0);
            e[candidate] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t b : basis) {
                    const double proj = dot(e, cols[b]);
                    for (std::size_t i = 0; i < dim; ++i) e[i] -= proj * cols[b][i];
                }
            }
            const double n = norm2(e);
            if (n > 0.5) {
                for (double& x : e) x /= n;
                cols[j] = std::move(e);
                basis.push_back(j);
                ++candidate;
                break;
            }
        }
    }
}

// Requires rows >= cols.
SvdFactorization jacobi_tall(const Matrix& w, const SvdOptions& options) {
    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    const double wnorm = frobenius_norm(w);
    const double pair_tol =
        options.pair_tol > 0.0 ? options.pair_tol : static_cast<double>(std::max<std::size_t>(m, 1)) *
                                                         std::numeric_limits<double>::epsilon();

    // Work on columns stored contiguously: g[j] is column j of w, vt[j] is
    // column j of the accumulated right rotation.
    std::vector<std::vector<double>> g(n, std::vector<double>(m));
    std::vector<std::vector<double>> vt(n, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < m; ++i) g[j][i] = w(i, j);
        vt[j][j] = 1.0;
    }

    auto rotate = [](std::vector<double>& x, std::vector<double>& y, double c, double s) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double xi = x[i], yi = y[i];
            x[i] = c * xi - s * yi;
            y[i] = s * xi + c * yi;
        }
    };

    int sweep = 0;
    double off = 0.0;
    bool converged = n < 2;
    while (!converged && sweep < options.max_sweeps) {
        ++sweep;
        off = 0.0;
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = dot(g[p], g[p]);
                const double beta = dot(g[q], g[q]);
                const double gamma = dot(g[p], g[q]);
                off += gamma * gamma;
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= pair_tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate(g[p], g[q], c, s);
                rotate(vt[p], vt[q], c, s);
                rotated = true;
            }
        }
        converged = !rotated;
    }
    if (!converged) {
        const double scale = wnorm > 0.0 ? wnorm * wnorm : 1.0;
        throw SvdError(sweep, std::sqrt(off) / scale);
    }

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) sigma[j] = norm2(g[j]);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

    SvdFactorization out;
    out.sigma.resize(n);
    std::vector<std::vector<double>> ucols(n);
    std::vector<bool> filled(n, false);
    const double tiny = std::numeric_limits<double>::min() * 1e8;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        out.sigma[k] = sigma[j];
        if (sigma[j] > tiny) {
            ucols[k] = g[j];
            for (double& x : ucols[k]) x /= sigma[j];
            filled[k] = true;
        } else {
            out.sigma[k] = 0.0;
            ucols[k].assign(m, 0.0);
        }
    }
    complete_basis(ucols, filled, m);

    out.u = Matrix(m, n);
    out.v = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.u.set_col(k, ucols[k]);
        out.v.set_col(k, vt[order[k]]);
    }
    return out;
}

}  // namespace

Matrix SvdFactorization::reconstruct() const { return scaled_outer(u, sigma, v); }

SvdFactorization svd(const Matrix& w, const SvdOptions& options) {
    require_finite(w, "svd input");
    if (w.rows() >= w.cols()) return jacobi_tall(w, options);
    SvdFactorization t = jacobi_tall(w.transpose(), options);
    std::swap(t.u, t.v);
    return t;
}

Matrix best_rank_r(const Matrix& w, std::size_t r) {
    const std::size_t k = std::min(w.rows(), w.cols());
    if (r < 1 || r > k) {
        throw RangeError("best_rank_r: rank " + std::to_string(r) + " outside [1, " + std::to_string(k) +
                         "] for shape " + shape_str(w.rows(), w.cols()));
    }
    const SvdFactorization f = svd(w);
    return scaled_outer(f.u.col_block(0, r), std::span<const double>(f.sigma).first(r), f.v.col_block(0, r));
}

std::size_t numerical_rank(const Matrix& m, double tol) {
    if (m.empty()) return 0;
    const SvdFactorization f = svd(m);
    return static_cast<std::size_t>(std::count_if(f.sigma.begin(), f.sigma.end(), [tol](double s) { return s > tol; }));
}

}  // namespace complora
