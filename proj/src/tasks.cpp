#include "complora/tasks.hpp"

#include <cmath>

#include "complora/errors.hpp"
#include "complora/svd.hpp"

namespace complora {

void TaskSpec::validate() const {
    if (n_classes == 0 || prototypes.rows() != n_classes) throw RangeError("task needs one prototype per class");
    if (!(noise > 0.0)) throw RangeError("task noise scale must be positive");
    for (std::size_t i = 0; i < n_classes; ++i)
        for (std::size_t j = i + 1; j < n_classes; ++j)
            if (prototypes.row_block(i, 1) == prototypes.row_block(j, 1)) {
                throw RangeError("task prototypes " + std::to_string(i) + " and " + std::to_string(j) +
                                 " coincide");
            }
}

TaskPair make_task_pair(std::size_t d_model, std::size_t n_classes_first, std::size_t n_classes_second,
                        double margin, double noise, std::uint64_t seed) {
    if (n_classes_first + n_classes_second > d_model) {
        throw RangeError("task pair needs n_classes_first + n_classes_second <= d_model");
    }
    RandomSource rng(seed);
    const Matrix basis = svd(rng.gaussian(d_model, d_model, 1.0)).u;
    const double scale = margin / std::sqrt(2.0);

    auto build = [&](std::size_t offset, std::size_t n) {
        TaskSpec t;
        t.n_classes = n;
        t.prototypes = Matrix(n, d_model);
        for (std::size_t c = 0; c < n; ++c)
            for (std::size_t j = 0; j < d_model; ++j) t.prototypes(c, j) = scale * basis(j, offset + c);
        t.noise = noise;
        t.margin = margin;
        t.seed = seed;
        t.validate();
        return t;
    };
    return {build(0, n_classes_first), build(n_classes_first, n_classes_second)};
}

std::vector<Sample> sample_inputs(const TaskSpec& task, std::size_t seq_len, std::size_t per_class,
                                  RandomSource& rng, std::uint64_t first_id) {
    std::vector<Sample> out;
    out.reserve(task.n_classes * per_class);
    const std::size_t d = task.d_model();
    for (std::size_t k = 0; k < per_class; ++k) {
        for (std::size_t c = 0; c < task.n_classes; ++c) {
            Sample s;
            s.label = static_cast<int>(c);
            s.id = first_id + out.size();
            s.tokens = Matrix(seq_len, d);
            for (std::size_t t = 0; t < seq_len; ++t)
                for (std::size_t j = 0; j < d; ++j) s.tokens(t, j) = task.prototypes(c, j) + task.noise * rng.normal();
            out.push_back(std::move(s));
        }
    }
    return out;
}

FewShotEpisode sample_episode(const TaskSpec& task, std::size_t seq_len, std::size_t n_shots, std::size_t n_query,
                              RandomSource& rng) {
    if (n_shots < 1 || n_query < 1) throw RangeError("episode needs n_shots >= 1 and n_query >= 1");
    FewShotEpisode ep;
    ep.n_shots = n_shots;
    ep.support = sample_inputs(task, seq_len, n_shots, rng, 0);
    ep.query = sample_inputs(task, seq_len, n_query, rng, ep.support.size());
    return ep;
}

Matrix stack_tokens(const std::vector<Sample>& samples) {
    if (samples.empty()) return {};
    const std::size_t seq = samples.front().tokens.rows();
    const std::size_t d = samples.front().tokens.cols();
    Matrix out(samples.size() * seq, d);
    for (std::size_t s = 0; s < samples.size(); ++s) {
        if (samples[s].tokens.rows() != seq || samples[s].tokens.cols() != d) throw ShapeError("ragged sample batch");
        std::copy(samples[s].tokens.data().begin(), samples[s].tokens.data().end(),
                  out.data().begin() + static_cast<std::ptrdiff_t>(s * seq * d));
    }
    return out;
}

std::vector<int> labels_of(const std::vector<Sample>& samples) {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

}  // namespace complora
