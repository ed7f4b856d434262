#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "complora/adapters.hpp"
#include "complora/grad.hpp"
#include "complora/model.hpp"
#include "complora/tasks.hpp"

namespace complora {

struct TrainConfig {
    Method method = Method::comp_lora;
    std::size_t rank = 2;
    /// Principal cut p; the complementary dimension is k - p per matrix.
    std::size_t principal_dim = 4;
    double eta = 1.0;
    OptimizerKind optimizer = OptimizerKind::adam;
    double lr = 2e-4;
    std::size_t epochs = 200;
    AdapterPlacement placement = AdapterPlacement::qkv(2);

    /// Everything except the method must match for a fair comparison.
    bool same_budget(const TrainConfig& other) const;
};

struct TrainResult {
    MiniEncoder model;
    std::vector<double> loss_curve;  // loss before each step, then the final loss
    double train_accuracy = 0.0;
};

/// Full-batch cross-entropy training of the adapters already attached to
/// `model` on `samples`. Frozen weights and projections are never touched.
/// Throws TrainingError carrying the step index on a non-finite loss.
TrainResult train_attached(MiniEncoder model, const ClassifierHead& head, const std::vector<Sample>& samples,
                           OptimizerState optimizer, std::size_t epochs, bool train_a = true);

/// Attaches fresh adapters per `config` (seeded by `rng`) and trains them on
/// the episode support set.
TrainResult train_adapter(const MiniEncoder& pretrained, const ClassifierHead& head, const FewShotEpisode& episode,
                          const TrainConfig& config, RandomSource& rng);

/// Top-1 accuracy with lowest-index tie breaking.
double accuracy(const MiniEncoder& model, const ClassifierHead& head, const std::vector<Sample>& samples);

/// Mean cross-entropy loss and its gradient for the attached adapters.
struct LossAndGrad {
    double loss = 0.0;
    EncoderGrads grads;
};
LossAndGrad loss_and_grad(const MiniEncoder& model, const ClassifierHead& head, const Matrix& tokens,
                          const std::vector<int>& labels);
double loss_only(const MiniEncoder& model, const ClassifierHead& head, const Matrix& tokens,
                 const std::vector<int>& labels);

}  // namespace complora
