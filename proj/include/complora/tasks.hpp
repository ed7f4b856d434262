#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "complora/matrix.hpp"
#include "complora/random.hpp"

namespace complora {

/// Synthetic classification task: every token of an input is its class
/// prototype plus isotropic Gaussian noise.
struct TaskSpec {
    std::size_t n_classes = 0;
    Matrix prototypes;  // n_classes x d_model
    double noise = 0.0;
    double margin = 0.0;
    std::uint64_t seed = 0;

    std::size_t d_model() const { return prototypes.cols(); }
    /// Throws RangeError for duplicate prototypes or non-positive noise.
    void validate() const;
};

struct Sample {
    Matrix tokens;  // seq_len x d_model
    int label = 0;
    std::uint64_t id = 0;
};

struct FewShotEpisode {
    std::vector<Sample> support;
    std::vector<Sample> query;
    std::size_t n_shots = 0;
};

/// Two tasks whose prototypes lie in mutually orthogonal subspaces of a
/// random orthonormal basis. Prototypes of one task are pairwise `margin`
/// apart.
struct TaskPair {
    TaskSpec first;
    TaskSpec second;
};

TaskPair make_task_pair(std::size_t d_model, std::size_t n_classes_first, std::size_t n_classes_second,
                        double margin, double noise, std::uint64_t seed);

/// `per_class` fresh samples of every class, ids starting at `first_id`.
std::vector<Sample> sample_inputs(const TaskSpec& task, std::size_t seq_len, std::size_t per_class,
                                  RandomSource& rng, std::uint64_t first_id = 0);

/// Balanced support of n_shots per class plus n_query per class, drawn
/// independently and labelled with distinct ids.
FewShotEpisode sample_episode(const TaskSpec& task, std::size_t seq_len, std::size_t n_shots, std::size_t n_query,
                              RandomSource& rng);

/// Rows of every sample stacked in order, plus the labels.
Matrix stack_tokens(const std::vector<Sample>& samples);
std::vector<int> labels_of(const std::vector<Sample>& samples);

}  // namespace complora
