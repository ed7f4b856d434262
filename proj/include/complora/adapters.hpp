#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "complora/matrix.hpp"
#include "complora/random.hpp"
#include "complora/subspace.hpp"

namespace complora {

/// Vanilla low-rank adapter: delta = eta * b * a.
struct LoraAdapter {
    Matrix a;  // r x d_in
    Matrix b;  // d_out x r
    double eta = 1.0;

    std::size_t rank() const noexcept { return a.rows(); }
};

/// Low-rank adapter confined to the complementary subspace of a frozen
/// weight: delta = eta * proj_out * b * a * proj_in.
///
/// proj_in and proj_out come from a SubspaceSplit and never change; only a
/// and b are trained.
struct CompLoraAdapter {
    Matrix proj_in;   // c x d_in
    Matrix proj_out;  // d_out x c
    Matrix a;         // r x c
    Matrix b;         // c x r
    double eta = 1.0;

    std::size_t rank() const noexcept { return a.rows(); }
    std::size_t comp_dim() const noexcept { return proj_in.rows(); }
};

using Adapter = std::variant<std::monostate, LoraAdapter, CompLoraAdapter>;

enum class Method { lora, comp_lora };

std::string to_string(Method m);
/// Accepts "lora" and "comp_lora" (also "comp-lora").
Method parse_method(const std::string& name);

/// Gaussian a with variance 1/d_in, zero b.
LoraAdapter init_lora(std::size_t d_in, std::size_t d_out, std::size_t r, double eta, RandomSource& rng);

/// Gaussian a with variance 1/c, zero b, projections copied from `split`.
/// Throws RangeError when r > c or r == 0, and when eta <= 0.
CompLoraAdapter init_comp(const SubspaceSplit& split, std::size_t r, double eta, RandomSource& rng);

bool has_adapter(const Adapter& adapter);
std::size_t adapter_rank(const Adapter& adapter);

/// eta * proj_out * b * a * proj_in, or eta * b * a. Zero-sized for no adapter.
Matrix effective_delta(const Adapter& adapter);

/// h = W x + eta * delta_path(x) + bias for column inputs x (d_in x n).
/// `bias` may be empty (no bias) or of length d_out.
Matrix forward(const Matrix& weight, std::span<const double> bias, const Adapter& adapter, const Matrix& x);

/// Same map for row-stacked inputs x (n x d_in), returning n x d_out.
Matrix forward_rows(const Matrix& weight, std::span<const double> bias, const Adapter& adapter, const Matrix& x);

/// W + effective_delta(adapter).
Matrix merge(const Matrix& weight, const Adapter& adapter);

struct ParamCount {
    std::size_t learnable = 0;
    std::size_t frozen = 0;

    bool operator==(const ParamCount&) const = default;
};

/// Learnable a/b scalars and frozen projection scalars.
ParamCount param_count(const Adapter& adapter);

/// Throws ShapeError when the adapter does not fit a d_out x d_in weight.
void check_adapter_shape(const Adapter& adapter, std::size_t d_out, std::size_t d_in);

enum class Projection : std::size_t { query = 0, key = 1, value = 2, output = 3 };
inline constexpr std::array<Projection, 4> kProjections = {Projection::query, Projection::key, Projection::value,
                                                           Projection::output};
std::string to_string(Projection p);

/// Which attention projections receive adapters, per layer and per tower.
///
/// The textual tower of the classifier is a frozen class-embedding table
/// with no linear layers, so `textual` must stay empty or all-false unless a
/// text encoder is present.
struct AdapterPlacement {
    std::vector<std::array<bool, 4>> visual;
    std::vector<std::array<bool, 4>> textual;

    /// Query, key and value of every layer.
    static AdapterPlacement qkv(std::size_t n_layers);
    static AdapterPlacement all(std::size_t n_layers);
    static AdapterPlacement none(std::size_t n_layers);

    bool selects(std::size_t layer, Projection p) const;
    std::size_t selected_count() const;
};

}  // namespace complora
