#include "complora/training.hpp"

#include <cmath>
#include <string>

#include "complora/errors.hpp"

namespace complora {

bool TrainConfig::same_budget(const TrainConfig& other) const {
    return rank == other.rank && eta == other.eta && optimizer == other.optimizer && lr == other.lr &&
           epochs == other.epochs && placement.visual == other.placement.visual &&
           placement.textual == other.placement.textual;
}

LossAndGrad loss_and_grad(const MiniEncoder& model, const ClassifierHead& head, const Matrix& tokens,
                          const std::vector<int>& labels) {
    GradientTape tape;
    const Matrix emb = encode_batch(model, tokens, &tape);
    const SoftmaxCrossEntropy ce = softmax_cross_entropy(logits(head, emb), labels);
    LossAndGrad out;
    out.loss = ce.loss;
    out.grads = backward(model, tape, logits_backward(head, ce.dlogits));
    return out;
}

double loss_only(const MiniEncoder& model, const ClassifierHead& head, const Matrix& tokens,
                 const std::vector<int>& labels) {
    return softmax_cross_entropy(logits(head, encode_batch(model, tokens)), labels).loss;
}

TrainResult train_attached(MiniEncoder model, const ClassifierHead& head, const std::vector<Sample>& samples,
                           OptimizerState optimizer, std::size_t epochs, bool train_a) {
    if (samples.empty()) throw RangeError("training needs at least one sample");
    const Matrix tokens = stack_tokens(samples);
    const std::vector<int> labels = labels_of(samples);
    TrainResult out;
    out.loss_curve.reserve(epochs + 1);
    const std::vector<Matrix*> params = trainable_parameters(model, train_a);
    for (std::size_t e = 0; e < epochs; ++e) {
        LossAndGrad lg;
        try {
            lg = loss_and_grad(model, head, tokens, labels);
        } catch (const NumericError& err) {
            throw TrainingError(std::string("non-finite forward pass: ") + err.what(), static_cast<long>(e));
        }
        if (!std::isfinite(lg.loss)) throw TrainingError("non-finite training loss", static_cast<long>(e));
        out.loss_curve.push_back(lg.loss);
        const std::vector<Matrix> grads = flatten_gradients(model, lg.grads, train_a);
        step(optimizer, params, grads);
    }
    double final_loss = 0.0;
    try {
        final_loss = loss_only(model, head, tokens, labels);
    } catch (const NumericError& err) {
        throw TrainingError(std::string("non-finite forward pass: ") + err.what(), static_cast<long>(epochs));
    }
    if (!std::isfinite(final_loss)) throw TrainingError("non-finite training loss", static_cast<long>(epochs));
    out.loss_curve.push_back(final_loss);
    out.train_accuracy = accuracy(model, head, samples);
    out.model = std::move(model);
    return out;
}

TrainResult train_adapter(const MiniEncoder& pretrained, const ClassifierHead& head, const FewShotEpisode& episode,
                          const TrainConfig& config, RandomSource& rng) {
    if (config.placement.selected_count() == 0 && config.epochs > 0) {
        throw RangeError("adapter placement selects no layer");
    }
    MiniEncoder model = pretrained;
    clear_adapters(model);
    attach_adapters(model, config.placement, config.method, config.rank, config.principal_dim, config.eta, rng);
    OptimizerState opt;
    opt.kind = config.optimizer;
    opt.lr = config.lr;
    return train_attached(std::move(model), head, episode.support, std::move(opt), config.epochs);
}

double accuracy(const MiniEncoder& model, const ClassifierHead& head, const std::vector<Sample>& samples) {
    if (samples.empty()) return 0.0;
    const std::vector<int> pred = predict(logits(head, encode_batch(model, stack_tokens(samples))));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) correct += pred[i] == samples[i].label ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace complora
