#pragma once

#include <cstddef>
#include <vector>

#include "complora/model.hpp"
#include "complora/tasks.hpp"

namespace complora {

/// Synthetic pretraining recipe.
///
/// 1. Random base weights N(0, base_scale^2 / d).
/// 2. Random unit class embeddings for the task.
/// 3. Every projection gets a rank-p delta  b * a  whose input factor a is
///    fixed to input_subspace() of that layer's inputs under the base
///    model; b is trained on `samples_per_class` inputs per class and the
///    delta merged. The task is then carried by p directions per weight.
/// 4. Spectral gap: on every weight whose sigma_p / sigma_{p+1} is below
///    `gap_target`, the principal values are amplified relative to the rest
///    by scaling sigma_{p+1..k} by gap / gap_target. The principal part,
///    which carries the task, is left as trained.
/// 5. Train and held-out accuracy must reach `min_accuracy`, else
///    PretrainError.
struct PretrainConfig {
    double base_scale = 0.3;
    double temperature = 0.05;
    std::size_t samples_per_class = 16;
    std::size_t heldout_per_class = 64;
    std::size_t epochs = 100;
    OptimizerKind optimizer = OptimizerKind::adam;
    double lr = 1e-2;
    std::size_t principal_dim = 4;
    double gap_target = 6.0;
    double min_accuracy = 0.9;
};

struct PretrainResult {
    MiniEncoder model;
    ClassifierHead head;
    double train_accuracy = 0.0;
    double heldout_accuracy = 0.0;
    /// sigma_p / sigma_{p+1} per (layer, projection) after amplification.
    std::vector<double> gaps;
};

PretrainResult synth_pretrain(const EncoderConfig& config, const TaskSpec& task, RandomSource& rng,
                              const PretrainConfig& pretrain = {});

/// Orthonormal rows (p x d) spanning the class means of `inputs` (rows stack
/// seq_len tokens per sample), completed with the leading principal
/// directions of the remaining token energy when n_classes < p.
Matrix input_subspace(const Matrix& inputs, std::span<const int> labels, std::size_t n_classes, std::size_t seq_len,
                      std::size_t p);

/// Rescales sigma_{p+1..k} of `w` so that sigma_p / sigma_{p+1} is at least
/// `gap_target`. Returns `w` unchanged when the gap already holds.
Matrix enforce_spectral_gap(const Matrix& w, std::size_t p, double gap_target);

}  // namespace complora
