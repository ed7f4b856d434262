#include "complora/adapters.hpp"

#include <cmath>

#include "complora/errors.hpp"

namespace complora {

std::string to_string(Method m) { return m == Method::lora ? "lora" : "comp_lora"; }

Method parse_method(const std::string& name) {
    if (name == "lora") return Method::lora;
    if (name == "comp_lora" || name == "comp-lora") return Method::comp_lora;
    throw RangeError("unknown method '" + name + "'");
}

std::string to_string(Projection p) {
    switch (p) {
        case Projection::query: return "q";
        case Projection::key: return "k";
        case Projection::value: return "v";
        case Projection::output: return "o";
    }
    return "?";
}

LoraAdapter init_lora(std::size_t d_in, std::size_t d_out, std::size_t r, double eta, RandomSource& rng) {
    if (r == 0 || r > std::min(d_in, d_out)) throw RangeError("lora rank " + std::to_string(r) + " out of range");
    if (!(eta > 0.0)) throw RangeError("adapter scale eta must be positive");
    LoraAdapter ad;
    ad.a = rng.gaussian(r, d_in, 1.0 / std::sqrt(static_cast<double>(d_in)));
    ad.b = Matrix(d_out, r);
    ad.eta = eta;
    return ad;
}

CompLoraAdapter init_comp(const SubspaceSplit& split, std::size_t r, double eta, RandomSource& rng) {
    if (r == 0 || r > split.c) {
        throw RangeError("comp-lora rank " + std::to_string(r) + " exceeds complementary dimension " +
                         std::to_string(split.c));
    }
    if (!(eta > 0.0)) throw RangeError("adapter scale eta must be positive");
    CompLoraAdapter ad;
    ad.proj_in = split.proj_in;
    ad.proj_out = split.proj_out;
    ad.a = rng.gaussian(r, split.c, 1.0 / std::sqrt(static_cast<double>(split.c)));
    ad.b = Matrix(split.c, r);
    ad.eta = eta;
    return ad;
}

bool has_adapter(const Adapter& adapter) { return !std::holds_alternative<std::monostate>(adapter); }

std::size_t adapter_rank(const Adapter& adapter) {
    if (const auto* l = std::get_if<LoraAdapter>(&adapter)) return l->rank();
    if (const auto* c = std::get_if<CompLoraAdapter>(&adapter)) return c->rank();
    return 0;
}

Matrix effective_delta(const Adapter& adapter) {
    if (const auto* l = std::get_if<LoraAdapter>(&adapter)) return l->eta * matmul(l->b, l->a);
    if (const auto* c = std::get_if<CompLoraAdapter>(&adapter)) {
        return c->eta * matmul(matmul(c->proj_out, matmul(c->b, c->a)), c->proj_in);
    }
    return {};
}

void check_adapter_shape(const Adapter& adapter, std::size_t d_out, std::size_t d_in) {
    if (const auto* l = std::get_if<LoraAdapter>(&adapter)) {
        if (l->a.cols() != d_in || l->b.rows() != d_out || l->b.cols() != l->a.rows()) {
            throw ShapeError("lora adapter b " + shape_str(l->b.rows(), l->b.cols()) + ", a " +
                             shape_str(l->a.rows(), l->a.cols()) + " does not fit weight " + shape_str(d_out, d_in));
        }
    } else if (const auto* c = std::get_if<CompLoraAdapter>(&adapter)) {
        const std::size_t cdim = c->proj_in.rows();
        if (c->proj_in.cols() != d_in || c->proj_out.rows() != d_out || c->proj_out.cols() != cdim ||
            c->a.cols() != cdim || c->b.rows() != cdim || c->b.cols() != c->a.rows()) {
            throw ShapeError("comp-lora adapter (proj_in " + shape_str(c->proj_in.rows(), c->proj_in.cols()) +
                             ", proj_out " + shape_str(c->proj_out.rows(), c->proj_out.cols()) + ", a " +
                             shape_str(c->a.rows(), c->a.cols()) + ", b " + shape_str(c->b.rows(), c->b.cols()) +
                             ") does not fit weight " + shape_str(d_out, d_in));
        }
    }
}

Matrix forward_rows(const Matrix& weight, std::span<const double> bias, const Adapter& adapter, const Matrix& x) {
    if (x.cols() != weight.cols()) {
        throw ShapeError("input rows of width " + std::to_string(x.cols()) + " do not fit weight " +
                         shape_str(weight.rows(), weight.cols()));
    }
    if (!bias.empty() && bias.size() != weight.rows()) throw ShapeError("bias length does not match weight rows");
    check_adapter_shape(adapter, weight.rows(), weight.cols());

    Matrix y = matmul_bt(x, weight);
    if (const auto* l = std::get_if<LoraAdapter>(&adapter)) {
        y += l->eta * matmul_bt(matmul_bt(x, l->a), l->b);
    } else if (const auto* c = std::get_if<CompLoraAdapter>(&adapter)) {
        const Matrix z = matmul_bt(x, c->proj_in);
        y += c->eta * matmul_bt(matmul_bt(matmul_bt(z, c->a), c->b), c->proj_out);
    }
    if (!bias.empty()) {
        for (std::size_t i = 0; i < y.rows(); ++i)
            for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += bias[j];
    }
    return y;
}

Matrix forward(const Matrix& weight, std::span<const double> bias, const Adapter& adapter, const Matrix& x) {
    if (x.rows() != weight.cols()) {
        throw ShapeError("column inputs " + shape_str(x.rows(), x.cols()) + " do not fit weight " +
                         shape_str(weight.rows(), weight.cols()));
    }
    return forward_rows(weight, bias, adapter, x.transpose()).transpose();
}

Matrix merge(const Matrix& weight, const Adapter& adapter) {
    check_adapter_shape(adapter, weight.rows(), weight.cols());
    if (!has_adapter(adapter)) return weight;
    return weight + effective_delta(adapter);
}

ParamCount param_count(const Adapter& adapter) {
    if (const auto* l = std::get_if<LoraAdapter>(&adapter)) return {l->a.size() + l->b.size(), 0};
    if (const auto* c = std::get_if<CompLoraAdapter>(&adapter)) {
        return {c->a.size() + c->b.size(), c->proj_in.size() + c->proj_out.size()};
    }
    return {};
}

AdapterPlacement AdapterPlacement::qkv(std::size_t n_layers) {
    return {std::vector<std::array<bool, 4>>(n_layers, {true, true, true, false}), {}};
}

AdapterPlacement AdapterPlacement::all(std::size_t n_layers) {
    return {std::vector<std::array<bool, 4>>(n_layers, {true, true, true, true}), {}};
}

AdapterPlacement AdapterPlacement::none(std::size_t n_layers) {
    return {std::vector<std::array<bool, 4>>(n_layers, {false, false, false, false}), {}};
}

bool AdapterPlacement::selects(std::size_t layer, Projection p) const {
    return layer < visual.size() && visual[layer][static_cast<std::size_t>(p)];
}

std::size_t AdapterPlacement::selected_count() const {
    std::size_t n = 0;
    for (const auto& tower : {&visual, &textual})
        for (const auto& flags : *tower)
            for (bool f : flags) n += f ? 1 : 0;
    return n;
}

}  // namespace complora
