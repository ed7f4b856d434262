#include <doctest.h>

#include <sstream>

#include "complora/errors.hpp"
#include "complora/harness.hpp"

using namespace complora;

namespace {

const TwoTaskSetup& shared_setup() {
    static const TwoTaskSetup setup = build_setup(SetupConfig{}, 0);
    return setup;
}

RunRecord record(const std::string& method, std::uint64_t seed, std::size_t shots, double q, double r,
                 std::optional<std::size_t> c = std::nullopt) {
    RunRecord rec;
    rec.method = method;
    rec.seed = seed;
    rec.n_shots = shots;
    rec.comp_dim = c;
    rec.query_accuracy = q;
    rec.retention_accuracy = r;
    return rec;
}

}  // namespace

TEST_SUITE("harness") {
    TEST_CASE("mirrored dims for the default geometry") {
        CHECK(mirrored_dims(64, 2) == std::vector<std::size_t>{64, 63, 62, 60, 56, 48, 32, 16, 8, 4, 2});
        CHECK(mirrored_dims(8, 1) == std::vector<std::size_t>{8, 7, 6, 4, 2, 1});
        const std::vector<std::size_t> d = mirrored_dims(512, 2);
        CHECK(d.front() == 512);
        CHECK(d.back() == 2);
        CHECK(std::find(d.begin(), d.end(), 384) != d.end());
        CHECK(std::find(d.begin(), d.end(), 511) != d.end());
    }

    TEST_CASE("sweep configs map c to p = k - c and reject dims outside [r, k]") {
        const std::vector<TrainConfig> cfgs = sweep_configs(TrainConfig{}, {64, 60, 2}, 64);
        CHECK(cfgs[0].principal_dim == 0);
        CHECK(cfgs[1].principal_dim == 4);
        CHECK(cfgs[2].principal_dim == 62);
        CHECK_THROWS_AS(sweep_configs(TrainConfig{}, {1}, 64), RangeError);
        CHECK_THROWS_AS(sweep_configs(TrainConfig{}, {65}, 64), RangeError);
    }

    TEST_CASE("aggregated means and deviations match a recomputation from raw records") {
        std::vector<RunRecord> rs;
        const double q[] = {0.5, 0.75, 0.625, 1.0, 0.25};
        for (std::uint64_t s = 0; s < 5; ++s) {
            rs.push_back(record("lora", s, 4, q[s], 0.9));
            rs.push_back(record("comp_lora", s, 4, q[4 - s] * 0.5, 0.95, 60));
        }
        const std::vector<CompareRow> rows = aggregate_compare(rs);
        REQUIRE(rows.size() == 2);
        for (const CompareRow& row : rows) {
            double sum = 0.0, sq = 0.0;
            std::size_t n = 0;
            for (const RunRecord& r : rs)
                if (r.method == row.method) sum += r.query_accuracy, ++n;
            const double mean = sum / static_cast<double>(n);
            for (const RunRecord& r : rs)
                if (r.method == row.method) sq += (r.query_accuracy - mean) * (r.query_accuracy - mean);
            CHECK(std::abs(row.query.mean - mean) < 1e-12);
            CHECK(std::abs(row.query.stddev - std::sqrt(sq / static_cast<double>(n - 1))) < 1e-12);
        }
        CHECK(aggregate_compare({record("lora", 0, 1, 0.5, 0.5)}).size() == 1);
    }

    TEST_CASE("runs.csv has the documented header and a stable order") {
        std::vector<RunRecord> rs{record("lora", 2, 8, 0.5, 0.75), record("comp_lora", 1, 8, 1.0, 0.5, 60),
                                  record("comp_lora", 0, 8, 1.0, 0.5, 62), record("lora", 1, 8, 0.25, 1.0)};
        const std::string csv = runs_to_csv(rs);
        std::istringstream in(csv);
        std::string line;
        std::getline(in, line);
        CHECK(line == kRunCsvHeader);
        std::vector<std::string> lines;
        while (std::getline(in, line)) lines.push_back(line);
        REQUIRE(lines.size() == 4);
        CHECK(lines[0].rfind("comp_lora,0,8,0,62,", 0) == 0);
        CHECK(lines[1].rfind("comp_lora,1,8,0,60,", 0) == 0);
        CHECK(lines[2].rfind("lora,1,8,0,,", 0) == 0);
        CHECK(lines[3].rfind("lora,2,", 0) == 0);
        std::reverse(rs.begin(), rs.end());
        CHECK(runs_to_csv(rs) == csv);
    }

    TEST_CASE("forgetting summary: gap, stderr and adaptation tolerance") {
        std::vector<RunRecord> rs;
        for (std::uint64_t s = 0; s < 4; ++s) {
            rs.push_back(record("lora", s, 8, 0.9, 0.80 + 0.01 * static_cast<double>(s)));
            rs.push_back(record("comp_lora", s, 8, 0.91, 0.90 + 0.01 * static_cast<double>(s), 60));
        }
        const ForgettingSummary f = summarize_forgetting(rs);
        CHECK(f.retention_gap == doctest::Approx(0.1));
        CHECK(f.retention_gap_stderr == doctest::Approx(std::sqrt(2.0) * f.lora_retention.stderr_));
        CHECK(f.retention_improved());
        CHECK(f.query_gap == doctest::Approx(0.01));
        CHECK(f.adaptation_matched());
        CHECK_THROWS_AS(summarize_forgetting({rs[0]}), RangeError);
    }

    TEST_CASE("sweep summary picks the best c per seed with ties to the larger c") {
        std::vector<RunRecord> rs;
        for (std::uint64_t s = 0; s < 2; ++s) {
            rs.push_back(record("comp_lora", s, 8, 0.8, 0.8, 64));
            rs.push_back(record("comp_lora", s, 8, 0.9, 0.9, 60));
            rs.push_back(record("comp_lora", s, 8, s == 0 ? 0.9 : 0.2, 0.9, 2));
        }
        const SweepSummary sw = summarize_sweep(rs, 64);
        CHECK(sw.dims == std::vector<std::size_t>{64, 60, 2});
        CHECK(sw.best_dim_per_seed == std::vector<std::size_t>{60, 60});
        CHECK(sw.interior_best_fraction == 1.0);
        CHECK(sw.best_interior_mean >= sw.full_space_mean);
        CHECK(sw.to_csv().rfind("c,n,mean_score,", 0) == 0);
        CHECK_THROWS_AS(summarize_sweep({rs[1]}, 64), RangeError);
    }

    TEST_CASE("matched budget is enforced") {
        TrainConfig a, b;
        b.method = Method::lora;
        CHECK_NOTHROW(require_matched_budget({a, b}));
        b.epochs = 3;
        CHECK_THROWS_AS(require_matched_budget({a, b}), RangeError);
    }

    TEST_CASE("parallel runner keeps job order and forwards exceptions") {
        std::vector<std::function<int()>> jobs;
        for (int i = 0; i < 20; ++i) jobs.emplace_back([i] { return i * i; });
        const std::vector<int> out = run_parallel(jobs, 4);
        for (int i = 0; i < 20; ++i) CHECK(out[static_cast<std::size_t>(i)] == i * i);
        jobs.emplace_back([]() -> int { throw RangeError("boom"); });
        CHECK_THROWS_AS(run_parallel(jobs, 3), RangeError);
    }

    TEST_CASE("pretrained setup stores task0 and a spectral gap") {
        const TwoTaskSetup& s = shared_setup();
        CHECK(s.pretrain_heldout_accuracy >= 0.9);
        for (double g : s.spectral_gaps) CHECK(g >= 6.0 - 1e-9);
        CHECK(s.head1.n_classes() == 4);
    }

    TEST_CASE("zero-epoch run keeps retention at the pretrained accuracy exactly") {
        TrainConfig t;
        t.epochs = 0;
        for (Method m : {Method::lora, Method::comp_lora}) {
            t.method = m;
            const RunRecord r = forgetting_protocol(shared_setup(), t, EpisodeConfig{4, 16}, 3);
            CHECK(*r.retention_accuracy == *r.pretrained_accuracy);
        }
    }

    TEST_CASE("identical inputs give bit-identical records") {
        TrainConfig t;
        t.lr = 3e-3;
        t.epochs = 5;
        const RunRecord a = run_episode(shared_setup(), t, EpisodeConfig{2, 8}, 11);
        const RunRecord b = run_episode(shared_setup(), t, EpisodeConfig{2, 8}, 11);
        CHECK(runs_to_csv({a}) == runs_to_csv({b}));
        CHECK(a.comp_dim == std::optional<std::size_t>{60});
    }
}
