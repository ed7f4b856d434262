#include "complora/pretrain.hpp"

#include <algorithm>
#include <string>

#include "complora/errors.hpp"
#include "complora/subspace.hpp"
#include "complora/svd.hpp"
#include "complora/training.hpp"

namespace complora {

Matrix input_subspace(const Matrix& inputs, std::span<const int> labels, std::size_t n_classes, std::size_t seq_len,
                      std::size_t p) {
    const std::size_t d = inputs.cols();
    // Class means first, then the leading uncentered principal directions of
    // all tokens when there are fewer classes than p.
    Matrix means(n_classes, d);
    std::vector<double> counts(n_classes, 0.0);
    for (std::size_t s = 0; s < labels.size(); ++s) {
        const auto c = static_cast<std::size_t>(labels[s]);
        for (std::size_t t = 0; t < seq_len; ++t) {
            const auto row = inputs.row(s * seq_len + t);
            for (std::size_t j = 0; j < d; ++j) means(c, j) += row[j];
        }
        counts[c] += static_cast<double>(seq_len);
    }
    for (std::size_t c = 0; c < n_classes; ++c)
        for (std::size_t j = 0; j < d; ++j) means(c, j) /= std::max(counts[c], 1.0);

    const std::size_t from_means = std::min(p, std::min(n_classes, d));
    Matrix basis = svd(means).v.col_block(0, from_means).transpose();
    if (from_means == p) return basis;

    Matrix residual = inputs;
    const Matrix proj = matmul(matmul_bt(residual, basis), basis);
    residual -= proj;
    const Matrix extra = svd(residual).v.col_block(0, p - from_means).transpose();
    Matrix out(p, d);
    for (std::size_t i = 0; i < from_means; ++i) std::copy_n(basis.row(i).begin(), d, out.row(i).begin());
    for (std::size_t i = 0; i < extra.rows(); ++i) std::copy_n(extra.row(i).begin(), d, out.row(from_means + i).begin());
    return out;
}

Matrix enforce_spectral_gap(const Matrix& w, std::size_t p, double gap_target) {
    SvdFactorization f = svd(w);
    if (p == 0 || p >= f.sigma.size()) return w;
    const double gap = spectral_gap(f.sigma, p);
    if (gap >= gap_target) return w;
    const double factor = gap / gap_target;
    for (std::size_t i = p; i < f.sigma.size(); ++i) f.sigma[i] *= factor;
    return f.reconstruct();
}

PretrainResult synth_pretrain(const EncoderConfig& config, const TaskSpec& task, RandomSource& rng,
                              const PretrainConfig& pretrain) {
    config.validate();
    task.validate();
    if (task.d_model() != config.d_model) throw ShapeError("task prototypes do not match d_model");

    MiniEncoder model = MiniEncoder::random(config, pretrain.base_scale, rng);
    ClassifierHead head = make_head(rng.gaussian(task.n_classes, config.d_model, 1.0), pretrain.temperature);
    const std::vector<Sample> train = sample_inputs(task, config.seq_len, pretrain.samples_per_class, rng);

    const std::size_t p = pretrain.principal_dim;
    if (p < 1 || p > config.d_model) throw RangeError("principal_dim must lie in [1, d_model]");
    {
        // Layer inputs of the base model, one pass per layer.
        Matrix x = stack_tokens(train);
        const std::vector<int> labels = labels_of(train);
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            const Matrix a = input_subspace(x, labels, task.n_classes, config.seq_len, p);
            for (auto& ad : model.layers[l].adapter) ad = LoraAdapter{a, Matrix(config.d_model, p), 1.0};
            x += mha_forward(model.layers[l], x, config.n_heads, config.seq_len);
        }
    }
    OptimizerState opt;
    opt.kind = pretrain.optimizer;
    opt.lr = pretrain.lr;
    TrainResult fit = train_attached(std::move(model), head, train, opt, pretrain.epochs, /*train_a=*/false);
    model = std::move(fit.model);
    merge_adapters(model);

    PretrainResult out;
    for (auto& layer : model.layers) {
        for (auto& w : layer.weight) {
            w = enforce_spectral_gap(w, pretrain.principal_dim, pretrain.gap_target);
            out.gaps.push_back(spectral_gap(svd(w).sigma, pretrain.principal_dim));
        }
    }

    const std::vector<Sample> heldout =
        sample_inputs(task, config.seq_len, pretrain.heldout_per_class, rng, train.size());
    out.train_accuracy = accuracy(model, head, train);
    out.heldout_accuracy = accuracy(model, head, heldout);
    if (out.train_accuracy < pretrain.min_accuracy || out.heldout_accuracy < pretrain.min_accuracy) {
        throw PretrainError("synthetic pretraining reached train accuracy " + std::to_string(out.train_accuracy) +
                            ", held-out " + std::to_string(out.heldout_accuracy) + " (< " +
                            std::to_string(pretrain.min_accuracy) + ")");
    }
    out.model = std::move(model);
    out.head = std::move(head);
    return out;
}

}  // namespace complora
