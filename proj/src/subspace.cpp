#include "complora/subspace.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "complora/errors.hpp"
#include "complora/format.hpp"

namespace complora {

Matrix SubspaceSplit::principal_part() const { return scaled_outer(u_p, sigma_p, v_p); }

Matrix SubspaceSplit::complementary_part() const { return scaled_outer(u_c, sigma_c, v_c); }

SubspaceSplit split(const SvdFactorization& fact, std::size_t p) {
    const std::size_t k = fact.sigma.size();
    if (p > k) {
        throw RangeError("principal cut p = " + std::to_string(p) + " exceeds rank bound k = " + std::to_string(k));
    }
    SubspaceSplit s;
    s.p = p;
    s.c = k - p;
    s.u_p = fact.u.col_block(0, p);
    s.v_p = fact.v.col_block(0, p);
    s.sigma_p.assign(fact.sigma.begin(), fact.sigma.begin() + static_cast<std::ptrdiff_t>(p));
    s.u_c = fact.u.col_block(p, s.c);
    s.v_c = fact.v.col_block(p, s.c);
    s.sigma_c.assign(fact.sigma.begin() + static_cast<std::ptrdiff_t>(p), fact.sigma.end());
    s.proj_in = s.v_c.transpose();
    s.proj_out = s.u_c;
    return s;
}

SubspaceSplit split_weight(const Matrix& w, std::size_t p) { return split(svd(w), p); }

Matrix reconstruct(const SubspaceSplit& s) { return s.principal_part() + s.complementary_part(); }

std::string SpectrumTable::to_csv() const {
    std::ostringstream out;
    out << "matrix_id,index,sigma\n";
    for (std::size_t m = 0; m < sigma.size(); ++m)
        for (std::size_t i = 0; i < sigma[m].size(); ++i)
            out << ids[m] << ',' << (i + 1) << ',' << format_double(sigma[m][i]) << '\n';
    return out.str();
}

SpectrumTable singular_spectrum(const std::vector<Matrix>& weights, std::vector<std::string> ids) {
    if (weights.empty()) throw RangeError("singular_spectrum needs at least one matrix");
    if (ids.empty()) {
        for (std::size_t i = 0; i < weights.size(); ++i) ids.push_back(std::to_string(i));
    }
    if (ids.size() != weights.size()) throw ShapeError("singular_spectrum: one id per matrix required");

    SpectrumTable table;
    table.ids = std::move(ids);
    std::size_t longest = 0;
    for (const Matrix& w : weights) {
        table.sigma.push_back(svd(w).sigma);
        longest = std::max(longest, table.sigma.back().size());
    }
    table.aggregate.assign(longest, 0.0);
    std::vector<std::size_t> counts(longest, 0);
    for (const auto& s : table.sigma) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            table.aggregate[i] += s[i];
            ++counts[i];
        }
    }
    for (std::size_t i = 0; i < longest; ++i) table.aggregate[i] /= static_cast<double>(counts[i]);
    return table;
}

double spectral_gap(std::span<const double> sigma, std::size_t p) {
    if (p < 1 || p >= sigma.size()) throw RangeError("spectral_gap needs 1 <= p < k");
    if (sigma[p] == 0.0) return std::numeric_limits<double>::infinity();
    return sigma[p - 1] / sigma[p];
}

}  // namespace complora
