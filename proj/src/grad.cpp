#include "complora/grad.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "complora/errors.hpp"

namespace complora {

Matrix linear_forward(const Matrix& weight, const Adapter& adapter, const Matrix& x, LinearCache* cache) {
    if (x.cols() != weight.cols()) {
        throw ShapeError("linear input " + shape_str(x.rows(), x.cols()) + " does not fit weight " +
                         shape_str(weight.rows(), weight.cols()));
    }
    check_adapter_shape(adapter, weight.rows(), weight.cols());
    Matrix y = matmul_bt(x, weight);
    Matrix z, h;
    if (const auto* l = std::get_if<LoraAdapter>(&adapter)) {
        h = matmul_bt(x, l->a);
        y += l->eta * matmul_bt(h, l->b);
    } else if (const auto* c = std::get_if<CompLoraAdapter>(&adapter)) {
        z = matmul_bt(x, c->proj_in);
        h = matmul_bt(z, c->a);
        y += c->eta * matmul_bt(matmul_bt(h, c->b), c->proj_out);
    }
    if (cache) {
        cache->x = x;
        cache->z = std::move(z);
        cache->h = std::move(h);
    }
    return y;
}

LinearGrad linear_backward(const Matrix& weight, const Adapter& adapter, const LinearCache& cache, const Matrix& dy) {
    if (dy.rows() != cache.x.rows() || dy.cols() != weight.rows()) {
        throw ShapeError("upstream gradient " + shape_str(dy.rows(), dy.cols()) + " does not match layer output " +
                         shape_str(cache.x.rows(), weight.rows()));
    }
    LinearGrad out;
    out.dx = matmul(dy, weight);
    if (const auto* l = std::get_if<LoraAdapter>(&adapter)) {
        // y_ad = eta * h b^T with h = x a^T
        AdapterGrad g;
        g.db = l->eta * matmul_at(dy, cache.h);
        const Matrix dh = l->eta * matmul(dy, l->b);
        g.da = matmul_at(dh, cache.x);
        out.dx += matmul(dh, l->a);
        out.adapter = std::move(g);
    } else if (const auto* c = std::get_if<CompLoraAdapter>(&adapter)) {
        // y_ad = eta * (h b^T) proj_out^T with h = z a^T, z = x proj_in^T
        AdapterGrad g;
        const Matrix dcore = matmul(dy, c->proj_out);
        g.db = c->eta * matmul_at(dcore, cache.h);
        const Matrix dh = c->eta * matmul(dcore, c->b);
        g.da = matmul_at(dh, cache.z);
        out.dx += matmul(matmul(dh, c->a), c->proj_in);
        out.adapter = std::move(g);
    }
    return out;
}

Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& theta, double h) {
    if (!(h > 0.0)) throw RangeError("finite-difference step must be positive");
    Matrix grad(theta.rows(), theta.cols());
    Matrix probe = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double orig = probe.data()[i];
        probe.data()[i] = orig + h;
        const double fp = f(probe);
        probe.data()[i] = orig - h;
        const double fm = f(probe);
        probe.data()[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("non-finite function value at parameter index " + std::to_string(i));
        }
        grad.data()[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

double relative_error(const Matrix& a, const Matrix& b, double floor) {
    const double scale = std::max({max_abs(a), max_abs(b), floor});
    return max_abs_diff(a, b) / scale;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix p = logits;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        auto row = p.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double& x : row) {
            x = std::exp(x - mx);
            sum += x;
        }
        for (double& x : row) x /= sum;
    }
    return p;
}

SoftmaxCrossEntropy softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
    if (labels.size() != logits.rows()) throw ShapeError("one label per logit row required");
    SoftmaxCrossEntropy out;
    out.probs = softmax_rows(logits);
    out.dlogits = out.probs;
    const double inv_n = logits.rows() ? 1.0 / static_cast<double>(logits.rows()) : 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto label = static_cast<std::size_t>(labels[i]);
        if (labels[i] < 0 || label >= logits.cols()) throw RangeError("label out of range");
        out.loss -= std::log(std::max(out.probs(i, label), 1e-300));
        out.dlogits(i, label) -= 1.0;
    }
    out.loss *= inv_n;
    out.dlogits *= inv_n;
    return out;
}

void step(OptimizerState& state, std::span<Matrix* const> params, std::span<const Matrix> grads) {
    if (params.size() != grads.size()) throw ShapeError("optimizer: parameter and gradient counts differ");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols()) {
            throw ShapeError("optimizer: gradient " + shape_str(grads[i].rows(), grads[i].cols()) +
                             " does not match parameter " + shape_str(params[i]->rows(), params[i]->cols()));
        }
    }
    ++state.step_count;
    if (state.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto p = params[i]->data();
            const auto g = grads[i].data();
            for (std::size_t j = 0; j < p.size(); ++j) p[j] -= state.lr * g[j];
        }
        return;
    }

    if (state.m.empty()) {
        for (const Matrix& g : grads) {
            state.m.emplace_back(g.rows(), g.cols());
            state.v.emplace_back(g.rows(), g.cols());
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("optimizer: parameter set changed between steps");
    const double t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i]->data();
        const auto g = grads[i].data();
        auto m = state.m[i].data();
        auto v = state.v[i].data();
        if (m.size() != p.size()) throw ShapeError("optimizer: moment shape mismatch");
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            p[j] -= state.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + state.epsilon);
        }
    }
}

RecoveryResult fit_projected_target(CompLoraAdapter& adapter, const Matrix& target, OptimizerState optimizer,
                                    std::size_t max_steps, double grad_tol) {
    check_adapter_shape(adapter, target.rows(), target.cols());
    // Residual pulled into the complementary coordinates: eta * P_out^T (delta - T) P_in^T.
    Matrix* params[] = {&adapter.a, &adapter.b};
    RecoveryResult out;
    for (;; ++out.steps) {
        Matrix residual = effective_delta(adapter) - target;
        out.loss = 0.5 * frobenius_norm(residual) * frobenius_norm(residual);
        if (!std::isfinite(out.loss)) throw TrainingError("non-finite recovery loss", out.steps);
        const Matrix core = matmul_bt(matmul_at(adapter.proj_out, residual), adapter.proj_in) * adapter.eta;
        const Matrix grads[] = {matmul_at(adapter.b, core), matmul_bt(core, adapter.a)};
        const double gnorm = std::hypot(frobenius_norm(grads[0]), frobenius_norm(grads[1]));
        if (out.steps >= max_steps || gnorm < grad_tol) return out;
        step(optimizer, params, grads);
    }
}

}  // namespace complora

