#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "complora/model.hpp"
#include "complora/pretrain.hpp"
#include "complora/tasks.hpp"
#include "complora/training.hpp"

namespace complora {

/// Geometry of the synthetic two-task world: task0 is the knowledge stored
/// by pretraining, task1 the novel few-shot classes.
struct SetupConfig {
    EncoderConfig encoder;
    std::size_t n_classes_task0 = 4;
    std::size_t n_classes_task1 = 4;
    double margin = 5.0;
    double noise = 1.0;
    double temperature = 0.05;
    PretrainConfig pretrain;
};

struct TwoTaskSetup {
    MiniEncoder model;
    ClassifierHead head0;
    ClassifierHead head1;
    TaskSpec task0;
    TaskSpec task1;
    double pretrain_heldout_accuracy = 0.0;
    std::vector<double> spectral_gaps;
};

/// Task pair, synthetic pretraining on task0 and a random task1 head, all
/// derived from `seed`.
TwoTaskSetup build_setup(const SetupConfig& config, std::uint64_t seed);

struct EpisodeConfig {
    std::size_t n_shots = 8;
    std::size_t n_query = 32;  // per class, for both the task1 query set and the task0 retention set
};

/// One experiment result row. Accuracies lie in [0, 1]; wall time is kept
/// out of every deterministic artifact.
struct RunRecord {
    std::string method;
    std::uint64_t seed = 0;
    std::size_t n_shots = 0;
    std::size_t rank = 0;
    std::optional<std::size_t> comp_dim;  // comp_lora only
    std::size_t principal_dim = 0;
    double eta = 1.0;
    std::size_t epochs = 0;
    double train_accuracy = 0.0;
    double query_accuracy = 0.0;
    std::optional<double> retention_accuracy;
    std::optional<double> pretrained_accuracy;
    double wall_time_s = 0.0;

    /// Mean of query and retention accuracy; query accuracy alone when no
    /// retention was measured.
    double score() const;
};

/// Column order of runs.csv.
inline constexpr const char* kRunCsvHeader =
    "method,seed,n_shots,rank,c,p,eta,epochs,train_acc,query_acc,retention_acc,pretrained_task0_acc,score";

std::string runs_to_csv(std::vector<RunRecord> records);
/// Orders by (method, n_shots, c descending, seed).
void sort_records(std::vector<RunRecord>& records);

/// Fine-tunes fresh adapters on a task1 episode, then measures task1 query
/// accuracy and task0 retention against the pretrained head. The episode,
/// the retention set and the adapter init each come from their own stream
/// of `seed`, so every method sees identical data.
RunRecord run_episode(const TwoTaskSetup& setup, const TrainConfig& train, const EpisodeConfig& episode,
                      std::uint64_t seed);

/// Task0-retention experiment for one method: the run_episode record, which
/// carries both adaptation and retention.
RunRecord forgetting_protocol(const TwoTaskSetup& setup, const TrainConfig& train, const EpisodeConfig& episode,
                              std::uint64_t seed);

struct Stat {
    std::size_t n = 0;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation (n - 1)
    double stderr_ = 0.0;
};
Stat summarize(const std::vector<double>& values);

struct ForgettingSummary {
    Stat lora_retention;
    Stat comp_retention;
    Stat lora_query;
    Stat comp_query;
    Stat pretrained;
    double retention_gap = 0.0;         // comp - lora
    double retention_gap_stderr = 0.0;  // sqrt(se_comp^2 + se_lora^2)
    double query_gap = 0.0;             // comp - lora

    bool retention_improved() const { return retention_gap > retention_gap_stderr; }
    bool adaptation_matched(double tolerance = 0.02) const { return std::abs(query_gap) < tolerance; }
};
ForgettingSummary summarize_forgetting(const std::vector<RunRecord>& records);

/// The mirrored power-of-two schedule {k - 2^n} U {2^n}, n = 0..8, plus k,
/// clipped to [r, k], deduplicated and sorted descending.
std::vector<std::size_t> mirrored_dims(std::size_t k, std::size_t r);

/// Sweep configurations: one comp_lora TrainConfig per complementary dim.
/// Throws RangeError for dims outside [r, k].
std::vector<TrainConfig> sweep_configs(const TrainConfig& base, const std::vector<std::size_t>& dims, std::size_t k);

struct SweepSummary {
    std::vector<std::size_t> dims;  // descending, dims.front() == k
    std::vector<Stat> score;
    std::vector<Stat> query;
    std::vector<Stat> retention;
    std::vector<std::size_t> best_dim_per_seed;  // ties go to the larger c
    double interior_best_fraction = 0.0;
    double best_interior_mean = 0.0;
    double full_space_mean = 0.0;

    std::string to_csv() const;
};
SweepSummary summarize_sweep(const std::vector<RunRecord>& records, std::size_t k);

struct CompareRow {
    std::string method;
    std::size_t n_shots = 0;
    Stat query;
    Stat retention;
};
/// Mean and sample standard deviation of query accuracy per (method, shots).
std::vector<CompareRow> aggregate_compare(const std::vector<RunRecord>& records);
std::string compare_to_csv(const std::vector<CompareRow>& rows);

/// Throws RangeError unless every config matches the first one in budget
/// (rank, eta, optimizer, lr, epochs, placement).
void require_matched_budget(const std::vector<TrainConfig>& configs);

/// Runs jobs[i] for every i on up to `threads` workers; results keep job
/// order. The first exception is rethrown after all workers stop.
template <typename T>
std::vector<T> run_parallel(const std::vector<std::function<T()>>& jobs, std::size_t threads);

}  // namespace complora

#include "complora/harness_parallel.hpp"
