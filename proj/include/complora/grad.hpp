#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "complora/adapters.hpp"
#include "complora/matrix.hpp"

namespace complora {

/// Gradient of a scalar loss with respect to one adapter's (a, b).
struct AdapterGrad {
    Matrix da;
    Matrix db;
};

/// Inputs a frozen linear layer (plus adapter) needs for its backward pass.
struct LinearCache {
    Matrix x;  // n x d_in
    Matrix z;  // x * proj_in^T (comp only), n x c
    Matrix h;  // adapter core input times a^T, n x r
};

/// y = x W^T + eta * adapter(x) for row-stacked x. Fills `cache` when given.
Matrix linear_forward(const Matrix& weight, const Adapter& adapter, const Matrix& x, LinearCache* cache);

struct LinearGrad {
    Matrix dx;
    std::optional<AdapterGrad> adapter;
};

/// Backward of linear_forward for upstream gradient dy (n x d_out).
/// Never produces a gradient for the weight or the projections.
LinearGrad linear_backward(const Matrix& weight, const Adapter& adapter, const LinearCache& cache, const Matrix& dy);

/// Central differences, entry by entry:
///   g_ij = (f(theta + h e_ij) - f(theta - h e_ij)) / (2h).
/// Throws RangeError for h <= 0 and NumericError on a non-finite evaluation.
Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& theta, double h = 1e-5);

/// max |a - b| / max(max|a|, max|b|, floor).
double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-12);

struct SoftmaxCrossEntropy {
    double loss = 0.0;   // mean over rows
    Matrix dlogits;      // d loss / d logits
    Matrix probs;
};

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

/// Mean cross-entropy of row logits against integer labels.
SoftmaxCrossEntropy softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

enum class OptimizerKind { sgd, adam };

/// First-order optimizer state. Moments are allocated lazily on the first
/// step to match the parameter shapes.
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step_count = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;
};

/// One update of every parameter. SGD: theta -= lr * g. Adam: bias-corrected
/// moment update. Throws ShapeError when params and grads disagree.
void step(OptimizerState& state, std::span<Matrix* const> params, std::span<const Matrix> grads);

struct RecoveryResult {
    std::size_t steps = 0;
    double loss = 0.0;  // 0.5 * ||delta - target||_F^2 at the end
};

/// Least-squares fit of the adapter factors to `target`:
///   min over (a, b) of 0.5 * ||effective_delta(adapter) - target||_F^2
/// with the projections frozen. Stops after `max_steps` or once the gradient
/// norm drops below `grad_tol`.
RecoveryResult fit_projected_target(CompLoraAdapter& adapter, const Matrix& target, OptimizerState optimizer,
                                    std::size_t max_steps, double grad_tol = 1e-12);

}  // namespace complora
