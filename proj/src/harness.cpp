#include "complora/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>

#include "complora/errors.hpp"
#include "complora/format.hpp"

namespace complora {

namespace {

constexpr std::uint64_t kTaskStream = 1;
constexpr std::uint64_t kPretrainStream = 2;
constexpr std::uint64_t kEpisodeStream = 3;
constexpr std::uint64_t kRetentionStream = 4;
constexpr std::uint64_t kAdapterStream = 5;
constexpr std::uint64_t kRetentionFirstId = 1'000'000;

std::string optional_number(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

TwoTaskSetup build_setup(const SetupConfig& config, std::uint64_t seed) {
    config.encoder.validate();
    RandomSource root(seed);
    const TaskPair pair = make_task_pair(config.encoder.d_model, config.n_classes_task0, config.n_classes_task1,
                                         config.margin, config.noise, root.fork(kTaskStream).next_u64());
    RandomSource rng = root.fork(kPretrainStream);
    PretrainConfig pretrain = config.pretrain;
    pretrain.temperature = config.temperature;
    PretrainResult fit = synth_pretrain(config.encoder, pair.first, rng, pretrain);

    TwoTaskSetup out;
    out.head1 = make_head(rng.gaussian(config.n_classes_task1, config.encoder.d_model, 1.0), config.temperature);
    out.model = std::move(fit.model);
    out.head0 = std::move(fit.head);
    out.task0 = pair.first;
    out.task1 = pair.second;
    out.pretrain_heldout_accuracy = fit.heldout_accuracy;
    out.spectral_gaps = std::move(fit.gaps);
    return out;
}

double RunRecord::score() const {
    return retention_accuracy ? 0.5 * (query_accuracy + *retention_accuracy) : query_accuracy;
}

void sort_records(std::vector<RunRecord>& records) {
    std::stable_sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
        const std::size_t ca = a.comp_dim.value_or(0);
        const std::size_t cb = b.comp_dim.value_or(0);
        return std::tie(a.method, a.n_shots, cb, a.seed) < std::tie(b.method, b.n_shots, ca, b.seed);
    });
}

std::string runs_to_csv(std::vector<RunRecord> records) {
    sort_records(records);
    std::ostringstream out;
    out << kRunCsvHeader << '\n';
    for (const RunRecord& r : records) {
        out << r.method << ',' << r.seed << ',' << r.n_shots << ',' << r.rank << ','
            << (r.comp_dim ? std::to_string(*r.comp_dim) : std::string()) << ',' << r.principal_dim << ','
            << format_double(r.eta) << ',' << r.epochs << ',' << format_double(r.train_accuracy) << ','
            << format_double(r.query_accuracy) << ',' << optional_number(r.retention_accuracy) << ','
            << optional_number(r.pretrained_accuracy) << ',' << format_double(r.score()) << '\n';
    }
    return out.str();
}

RunRecord run_episode(const TwoTaskSetup& setup, const TrainConfig& train, const EpisodeConfig& episode,
                      std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t seq_len = setup.model.config.seq_len;
    RandomSource root(seed);
    RandomSource episode_rng = root.fork(kEpisodeStream);
    RandomSource retention_rng = root.fork(kRetentionStream);
    RandomSource adapter_rng = root.fork(kAdapterStream);

    const FewShotEpisode ep = sample_episode(setup.task1, seq_len, episode.n_shots, episode.n_query, episode_rng);
    const std::vector<Sample> retention =
        sample_inputs(setup.task0, seq_len, episode.n_query, retention_rng, kRetentionFirstId);
    const TrainResult fit = train_adapter(setup.model, setup.head1, ep, train, adapter_rng);

    RunRecord r;
    r.method = to_string(train.method);
    r.seed = seed;
    r.n_shots = episode.n_shots;
    r.rank = train.rank;
    r.principal_dim = train.method == Method::comp_lora ? train.principal_dim : 0;
    if (train.method == Method::comp_lora) r.comp_dim = setup.model.config.d_model - train.principal_dim;
    r.eta = train.eta;
    r.epochs = train.epochs;
    r.train_accuracy = fit.train_accuracy;
    r.query_accuracy = accuracy(fit.model, setup.head1, ep.query);
    r.retention_accuracy = accuracy(fit.model, setup.head0, retention);
    r.pretrained_accuracy = accuracy(setup.model, setup.head0, retention);
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

RunRecord forgetting_protocol(const TwoTaskSetup& setup, const TrainConfig& train, const EpisodeConfig& episode,
                              std::uint64_t seed) {
    return run_episode(setup, train, episode, seed);
}

Stat summarize(const std::vector<double>& values) {
    Stat s;
    s.n = values.size();
    if (s.n == 0) return s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
        s.stderr_ = s.stddev / std::sqrt(static_cast<double>(s.n));
    }
    return s;
}

ForgettingSummary summarize_forgetting(const std::vector<RunRecord>& records) {
    std::vector<double> lr, cr, lq, cq;
    std::map<std::uint64_t, double> pretrained;
    for (const RunRecord& r : records) {
        if (!r.retention_accuracy) throw RangeError("forgetting summary needs retention accuracy");
        const bool comp = r.method == to_string(Method::comp_lora);
        (comp ? cr : lr).push_back(*r.retention_accuracy);
        (comp ? cq : lq).push_back(r.query_accuracy);
        if (r.pretrained_accuracy) pretrained[r.seed] = *r.pretrained_accuracy;
    }
    if (lr.empty() || cr.empty()) throw RangeError("forgetting summary needs both lora and comp_lora runs");
    ForgettingSummary s;
    s.lora_retention = summarize(lr);
    s.comp_retention = summarize(cr);
    s.lora_query = summarize(lq);
    s.comp_query = summarize(cq);
    std::vector<double> pre;
    for (const auto& [seed, acc] : pretrained) pre.push_back(acc);
    s.pretrained = summarize(pre);
    s.retention_gap = s.comp_retention.mean - s.lora_retention.mean;
    s.retention_gap_stderr = std::hypot(s.comp_retention.stderr_, s.lora_retention.stderr_);
    s.query_gap = s.comp_query.mean - s.lora_query.mean;
    return s;
}

std::vector<std::size_t> mirrored_dims(std::size_t k, std::size_t r) {
    std::vector<std::size_t> dims{k};
    for (std::size_t n = 0; n <= 8; ++n) {
        const std::size_t pow = std::size_t{1} << n;
        if (pow <= k) dims.push_back(k - pow);
        dims.push_back(pow);
    }
    std::erase_if(dims, [&](std::size_t c) { return c < r || c > k || c == 0; });
    std::sort(dims.begin(), dims.end(), std::greater<>());
    dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
    return dims;
}

std::vector<TrainConfig> sweep_configs(const TrainConfig& base, const std::vector<std::size_t>& dims, std::size_t k) {
    std::vector<TrainConfig> out;
    for (std::size_t c : dims) {
        if (c < base.rank || c > k)
            throw RangeError("complementary dim " + std::to_string(c) + " outside [" + std::to_string(base.rank) +
                             ", " + std::to_string(k) + "]");
        TrainConfig cfg = base;
        cfg.method = Method::comp_lora;
        cfg.principal_dim = k - c;
        out.push_back(cfg);
    }
    return out;
}

SweepSummary summarize_sweep(const std::vector<RunRecord>& records, std::size_t k) {
    std::map<std::size_t, std::vector<double>, std::greater<>> score, query, retention;
    std::map<std::uint64_t, std::map<std::size_t, double, std::greater<>>> per_seed;
    for (const RunRecord& r : records) {
        if (!r.comp_dim) throw RangeError("sweep summary needs comp_lora runs");
        score[*r.comp_dim].push_back(r.score());
        query[*r.comp_dim].push_back(r.query_accuracy);
        retention[*r.comp_dim].push_back(r.retention_accuracy.value_or(0.0));
        per_seed[r.seed][*r.comp_dim] = r.score();
    }
    if (!score.contains(k)) throw RangeError("sweep must include the full space c = k");

    SweepSummary s;
    for (const auto& [c, v] : score) {
        s.dims.push_back(c);
        s.score.push_back(summarize(v));
        s.query.push_back(summarize(query[c]));
        s.retention.push_back(summarize(retention[c]));
    }
    s.full_space_mean = s.score.front().mean;
    s.best_interior_mean = -1.0;
    for (std::size_t i = 0; i < s.dims.size(); ++i)
        if (s.dims[i] != k) s.best_interior_mean = std::max(s.best_interior_mean, s.score[i].mean);

    std::size_t interior_wins = 0;
    for (const auto& [seed, by_dim] : per_seed) {
        std::size_t best = by_dim.begin()->first;
        double best_score = by_dim.begin()->second;
        for (const auto& [c, v] : by_dim) {
            if (v > best_score) {
                best = c;
                best_score = v;
            }
        }
        s.best_dim_per_seed.push_back(best);
        if (best != k && best != s.dims.back()) ++interior_wins;
    }
    s.interior_best_fraction =
        per_seed.empty() ? 0.0 : static_cast<double>(interior_wins) / static_cast<double>(per_seed.size());
    return s;
}

std::string SweepSummary::to_csv() const {
    std::ostringstream out;
    out << "c,n,mean_score,std_score,mean_query_acc,mean_retention_acc\n";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        out << dims[i] << ',' << score[i].n << ',' << format_double(score[i].mean) << ','
            << format_double(score[i].stddev) << ',' << format_double(query[i].mean) << ','
            << format_double(retention[i].mean) << '\n';
    }
    return out.str();
}

std::vector<CompareRow> aggregate_compare(const std::vector<RunRecord>& records) {
    std::map<std::pair<std::string, std::size_t>, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const RunRecord& r : records) {
        auto& g = groups[{r.method, r.n_shots}];
        g.first.push_back(r.query_accuracy);
        if (r.retention_accuracy) g.second.push_back(*r.retention_accuracy);
    }
    std::vector<CompareRow> rows;
    for (const auto& [key, values] : groups)
        rows.push_back({key.first, key.second, summarize(values.first), summarize(values.second)});
    return rows;
}

std::string compare_to_csv(const std::vector<CompareRow>& rows) {
    std::ostringstream out;
    out << "method,n_shots,n,mean_query_acc,std_query_acc,mean_retention_acc,std_retention_acc\n";
    for (const CompareRow& r : rows) {
        out << r.method << ',' << r.n_shots << ',' << r.query.n << ',' << format_double(r.query.mean) << ','
            << format_double(r.query.stddev) << ',' << format_double(r.retention.mean) << ','
            << format_double(r.retention.stddev) << '\n';
    }
    return out.str();
}

void require_matched_budget(const std::vector<TrainConfig>& configs) {
    for (const TrainConfig& c : configs)
        if (!configs.front().same_budget(c)) throw RangeError("methods must share rank, eta, optimizer, lr, epochs and placement");
}

}  // namespace complora
