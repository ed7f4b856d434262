#include "complora/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <chrono>
#include <fstream>
#include <memory>
#include <ostream>

#include "complora/checkpoint.hpp"
#include "complora/errors.hpp"
#include "complora/format.hpp"
#include "complora/subspace.hpp"
#include "complora/svd.hpp"

namespace complora {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

json stat_json(const Stat& s) { return {{"n", s.n}, {"mean", s.mean}, {"std", s.stddev}, {"stderr", s.stderr_}}; }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::vector<std::shared_ptr<const TwoTaskSetup>> build_setups(const ExperimentConfig& cfg, std::size_t jobs) {
    std::vector<std::function<std::shared_ptr<const TwoTaskSetup>()>> work;
    for (std::uint64_t seed : cfg.seeds)
        work.emplace_back([&cfg, seed] { return std::make_shared<const TwoTaskSetup>(build_setup(cfg.setup, seed)); });
    return run_parallel(work, jobs);
}

struct RunJob {
    std::size_t setup_index = 0;
    TrainConfig train;
    EpisodeConfig episode;
    std::uint64_t seed = 0;
};

std::vector<RunRecord> run_jobs(const std::vector<std::shared_ptr<const TwoTaskSetup>>& setups,
                                const std::vector<RunJob>& jobs, std::size_t threads) {
    std::vector<std::function<RunRecord()>> work;
    for (const RunJob& job : jobs)
        work.emplace_back([&setups, &job] { return run_episode(*setups[job.setup_index], job.train, job.episode, job.seed); });
    std::vector<RunRecord> records = run_parallel(work, threads);
    sort_records(records);
    return records;
}

std::vector<RunJob> method_jobs(const ExperimentConfig& cfg) {
    std::vector<TrainConfig> configs;
    for (Method m : cfg.methods) {
        TrainConfig t = cfg.train;
        t.method = m;
        configs.push_back(t);
    }
    require_matched_budget(configs);
    std::vector<RunJob> jobs;
    for (const TrainConfig& t : configs)
        for (std::size_t shots : cfg.shots)
            for (std::size_t i = 0; i < cfg.seeds.size(); ++i) jobs.push_back({i, t, cfg.episode(shots), cfg.seeds[i]});
    return jobs;
}

json metadata(const std::vector<RunRecord>& records, double total_s, std::size_t threads) {
    json runs = json::array();
    for (const RunRecord& r : records) {
        json item = {{"method", r.method}, {"seed", r.seed}, {"n_shots", r.n_shots}, {"wall_time_s", r.wall_time_s}};
        if (r.comp_dim) item["c"] = *r.comp_dim;
        runs.push_back(item);
    }
    return {{"jobs", threads}, {"total_wall_time_s", total_s}, {"runs", runs}};
}

json pretrain_json(const std::vector<std::shared_ptr<const TwoTaskSetup>>& setups, const ExperimentConfig& cfg) {
    json out = json::array();
    for (std::size_t i = 0; i < setups.size(); ++i) {
        double min_gap = std::numeric_limits<double>::infinity();
        for (double g : setups[i]->spectral_gaps) min_gap = std::min(min_gap, g);
        out.push_back({{"seed", cfg.seeds[i]},
                       {"heldout_task0_acc", setups[i]->pretrain_heldout_accuracy},
                       {"min_spectral_gap", min_gap}});
    }
    return out;
}

CommandOutput run_decompose(const ExperimentConfig& cfg, const RunOptions& opt) {
    CommandOutput out;
    MiniEncoder model;
    json summary = {{"command", "decompose"}};
    if (!cfg.checkpoint.empty()) {
        std::filesystem::path path = cfg.checkpoint;
        if (path.is_relative()) path = opt.config_dir / path;
        model = load_model(Checkpoint::load(path));
        summary["checkpoint"] = cfg.checkpoint;
    } else {
        const TwoTaskSetup setup = build_setup(cfg.setup, cfg.seeds.front());
        Checkpoint ckpt;
        store_model(ckpt, setup.model, &setup.head0);
        out.files["model.ckpt"] = ckpt.serialize();
        model = setup.model;
        summary["seed"] = cfg.seeds.front();
        summary["heldout_task0_acc"] = setup.pretrain_heldout_accuracy;
    }

    std::vector<Matrix> weights;
    std::vector<std::string> ids;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        for (Projection p : kProjections) {
            weights.push_back(model.layers[l].w(p));
            ids.push_back("layer" + std::to_string(l) + "." + to_string(p));
        }
    }
    const SpectrumTable table = singular_spectrum(weights, ids);
    out.files["spectrum.csv"] = table.to_csv();

    const std::size_t p = cfg.principal_dim();
    json matrices = json::array();
    for (std::size_t i = 0; i < table.ids.size(); ++i) {
        const auto& s = table.sigma[i];
        double total = 0.0, head = 0.0;
        for (std::size_t j = 0; j < s.size(); ++j) {
            total += s[j] * s[j];
            if (j < p) head += s[j] * s[j];
        }
        json m = {{"id", table.ids[i]}, {"sigma_max", s.empty() ? 0.0 : s.front()},
                  {"principal_energy_fraction", total > 0.0 ? head / total : 0.0}};
        if (p >= 1 && p < s.size()) m["spectral_gap"] = spectral_gap(s, p);
        matrices.push_back(m);
    }
    summary["p"] = p;
    summary["matrices"] = matrices;
    summary["mean_sigma"] = table.aggregate;
    out.files["summary.json"] = dump(summary);

    std::vector<PlotSeries> series;
    PlotSeries mean{"mean over matrices", {}, table.aggregate};
    for (std::size_t i = 0; i < table.aggregate.size(); ++i) mean.x.push_back(static_cast<double>(i + 1));
    series.push_back(mean);
    out.files["spectrum.svg"] = svg_line_plot("Singular spectrum", "index", "sigma", series, true);
    out.metadata_json = dump({{"jobs", 1}});
    return out;
}

CommandOutput run_methods(const ExperimentConfig& cfg, const RunOptions& opt) {
    const auto start = Clock::now();
    const auto setups = build_setups(cfg, opt.jobs);
    const std::vector<RunRecord> records = run_jobs(setups, method_jobs(cfg), opt.jobs);

    CommandOutput out;
    out.files["runs.csv"] = runs_to_csv(records);
    const std::vector<CompareRow> rows = aggregate_compare(records);
    json table = json::array();
    for (const CompareRow& r : rows)
        table.push_back({{"method", r.method}, {"n_shots", r.n_shots}, {"query_acc", stat_json(r.query)},
                         {"retention_acc", stat_json(r.retention)}});
    json summary = {{"command", to_string(cfg.command)}, {"pretrain", pretrain_json(setups, cfg)}, {"table", table}};

    if (cfg.command == Command::compare) {
        out.files["compare.csv"] = compare_to_csv(rows);
        std::vector<PlotSeries> series;
        for (Method m : cfg.methods) {
            PlotSeries s{to_string(m), {}, {}};
            for (const CompareRow& r : rows) {
                if (r.method != s.label) continue;
                s.x.push_back(static_cast<double>(r.n_shots));
                s.y.push_back(r.query.mean);
            }
            series.push_back(s);
        }
        out.files["compare.svg"] = svg_line_plot("Query accuracy", "shots", "top-1", series);
    }
    if (cfg.command == Command::forget) {
        json per_shots = json::array();
        for (std::size_t shots : cfg.shots) {
            std::vector<RunRecord> subset;
            for (const RunRecord& r : records)
                if (r.n_shots == shots) subset.push_back(r);
            const ForgettingSummary f = summarize_forgetting(subset);
            per_shots.push_back({{"n_shots", shots},
                                 {"lora_retention", stat_json(f.lora_retention)},
                                 {"comp_lora_retention", stat_json(f.comp_retention)},
                                 {"lora_query", stat_json(f.lora_query)},
                                 {"comp_lora_query", stat_json(f.comp_query)},
                                 {"pretrained_task0", stat_json(f.pretrained)},
                                 {"retention_gap", f.retention_gap},
                                 {"retention_gap_stderr", f.retention_gap_stderr},
                                 {"query_gap", f.query_gap},
                                 {"retention_improved", f.retention_improved()},
                                 {"adaptation_matched", f.adaptation_matched()}});
        }
        summary["forgetting"] = per_shots;
    }
    out.files["summary.json"] = dump(summary);
    out.metadata_json = dump(metadata(records, std::chrono::duration<double>(Clock::now() - start).count(), opt.jobs));
    return out;
}

CommandOutput run_sweep(const ExperimentConfig& cfg, const RunOptions& opt) {
    const auto start = Clock::now();
    const std::size_t k = cfg.setup.encoder.d_model;
    const std::vector<std::size_t> dims = cfg.dims.empty() ? mirrored_dims(k, cfg.train.rank) : cfg.dims;
    std::vector<std::size_t> with_full = dims;
    if (std::find(with_full.begin(), with_full.end(), k) == with_full.end()) with_full.insert(with_full.begin(), k);
    const std::vector<TrainConfig> configs = sweep_configs(cfg.train, with_full, k);
    require_matched_budget(configs);

    const auto setups = build_setups(cfg, opt.jobs);
    std::vector<RunJob> jobs;
    for (const TrainConfig& t : configs)
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) jobs.push_back({i, t, cfg.episode(cfg.shots.front()), cfg.seeds[i]});
    const std::vector<RunRecord> records = run_jobs(setups, jobs, opt.jobs);
    const SweepSummary s = summarize_sweep(records, k);

    CommandOutput out;
    out.files["runs.csv"] = runs_to_csv(records);
    out.files["sweep.csv"] = s.to_csv();
    json points = json::array();
    for (std::size_t i = 0; i < s.dims.size(); ++i)
        points.push_back({{"c", s.dims[i]}, {"score", stat_json(s.score[i])}, {"query_acc", stat_json(s.query[i])},
                          {"retention_acc", stat_json(s.retention[i])}});
    json summary = {{"command", "sweep-c"},
                    {"n_shots", cfg.shots.front()},
                    {"pretrain", pretrain_json(setups, cfg)},
                    {"points", points},
                    {"best_c_per_seed", s.best_dim_per_seed},
                    {"interior_best_fraction", s.interior_best_fraction},
                    {"best_interior_score", s.best_interior_mean},
                    {"full_space_score", s.full_space_mean}};
    out.files["summary.json"] = dump(summary);

    std::vector<PlotSeries> series(3);
    series[0].label = "score";
    series[1].label = "query acc";
    series[2].label = "retention acc";
    for (std::size_t i = 0; i < s.dims.size(); ++i) {
        for (auto& ser : series) ser.x.push_back(static_cast<double>(s.dims[i]));
        series[0].y.push_back(s.score[i].mean);
        series[1].y.push_back(s.query[i].mean);
        series[2].y.push_back(s.retention[i].mean);
    }
    out.files["sweep.svg"] = svg_line_plot("Complementary dimension sweep", "c", "accuracy", series);
    out.metadata_json = dump(metadata(records, std::chrono::duration<double>(Clock::now() - start).count(), opt.jobs));
    return out;
}

}  // namespace

CommandOutput execute(const ExperimentConfig& config, const RunOptions& options) {
    ExperimentConfig cfg = config;
    if (options.seed_override) cfg.seeds = {*options.seed_override};
    CommandOutput out;
    switch (cfg.command) {
        case Command::decompose: out = run_decompose(cfg, options); break;
        case Command::train:
        case Command::forget:
        case Command::compare: out = run_methods(cfg, options); break;
        case Command::sweep_c: out = run_sweep(cfg, options); break;
    }
    out.files["config.json"] = config_to_json(cfg) + "\n";
    return out;
}

void write_outputs(const CommandOutput& output, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, content] : output.files) write_file_atomic(dir / name, content);
    write_file_atomic(dir / "metadata.json", output.metadata_json);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Comp-LoRA experiments on a synthetic two-task encoder", "comp-lora"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed_override;
    for (const char* name : {"decompose", "train", "sweep-c", "forget", "compare"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON experiment config")->required();
        sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
        sub->add_option("--jobs", jobs, "parallel runs")->check(CLI::PositiveNumber);
        sub->add_option("--seed-override", seed_override, "run a single seed instead of the config's list");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        std::string text;
        try {
            text = read_file(config_path);
        } catch (const std::exception& e) {
            throw ConfigError("--config", std::string("cannot read: ") + e.what());
        }
        const ExperimentConfig cfg = parse_config(text, command);
        RunOptions options;
        options.jobs = jobs;
        options.seed_override = seed_override;
        options.config_dir = std::filesystem::path(config_path).parent_path();
        const CommandOutput result = execute(cfg, options);
        const std::filesystem::path dir = out_dir.empty() ? std::filesystem::path(cfg.output_dir) : std::filesystem::path(out_dir);
        write_outputs(result, dir);
        for (const auto& [name, content] : result.files) out << (dir / name).string() << '\n';
        return 0;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace complora
