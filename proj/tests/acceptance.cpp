#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "complora/cli.hpp"
#include "complora/format.hpp"
#include "complora/harness.hpp"
#include "complora/subspace.hpp"

using namespace complora;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double orthogonality(const Matrix& q) {
    const Matrix g = matmul_at(q, q);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) worst = std::max(worst, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
    return worst;
}

double rel(const Matrix& a, const Matrix& b) { return frobenius_norm(a - b) / std::max(frobenius_norm(b), 1e-300); }

std::filesystem::path config_path(const std::string& name) { return std::filesystem::path(COMPLORA_CONFIG_DIR) / name; }

Outcome svd_correctness() {
    const auto t0 = Clock::now();
    RandomSource rng(101);
    double worst_res = 0.0, worst_orth = 0.0;
    bool sorted = true;
    for (int i = 0; i < 500; ++i) {
        const std::size_t m = 2 + rng.below(63), n = 2 + rng.below(63);
        const Matrix w = rng.gaussian(m, n, 1.0);
        const SvdFactorization f = svd(w);
        worst_res = std::max(worst_res, rel(f.reconstruct(), w));
        worst_orth = std::max({worst_orth, orthogonality(f.u), orthogonality(f.v)});
        for (std::size_t j = 1; j < f.sigma.size(); ++j) sorted &= f.sigma[j] <= f.sigma[j - 1];
    }
    const double t = seconds_since(t0);
    return {worst_res < 1e-8 && worst_orth < 1e-10 && sorted && t < 30.0,
            "max residual " + fmt(worst_res) + ", max orthogonality " + fmt(worst_orth) + ", sorted " +
                (sorted ? "yes" : "no") + ", " + fmt(t) + " s"};
}

Outcome split_completeness() {
    RandomSource rng(202);
    double worst_rec = 0.0, worst_pyth = 0.0;
    for (int i = 0; i < 40; ++i) {
        const std::size_t m = 2 + rng.below(31), n = 2 + rng.below(31);
        const Matrix w = rng.gaussian(m, n, 1.0);
        const SvdFactorization f = svd(w);
        const double total = frobenius_norm(w) * frobenius_norm(w);
        for (std::size_t p = 0; p <= f.sigma.size(); ++p) {
            const SubspaceSplit s = split(f, p);
            worst_rec = std::max(worst_rec, rel(s.principal_part() + s.complementary_part(), w));
            const double a = frobenius_norm(s.principal_part()), b = frobenius_norm(s.complementary_part());
            worst_pyth = std::max(worst_pyth, std::abs(a * a + b * b - total) / total);
        }
    }
    return {worst_rec < 1e-10 && worst_pyth < 1e-8,
            "max reconstruction " + fmt(worst_rec) + ", max norm split " + fmt(worst_pyth)};
}

Outcome principal_annihilation() {
    RandomSource rng(303);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const std::size_t m = 3 + rng.below(30), n = 3 + rng.below(30);
        const std::size_t k = std::min(m, n);
        const std::size_t p = 1 + rng.below(k - 2);
        const std::size_t r = 1 + rng.below(k - p);
        const SubspaceSplit s = split_weight(rng.gaussian(m, n, 1.0), p);
        CompLoraAdapter ad = init_comp(s, r, 0.5 + rng.uniform(), rng);
        ad.a = rng.gaussian(ad.a.rows(), ad.a.cols(), 1.0);
        ad.b = rng.gaussian(ad.b.rows(), ad.b.cols(), 1.0);
        const Matrix delta = effective_delta(ad);
        const double scale = frobenius_norm(delta);
        const Matrix left = matmul_at(s.u_p, delta);
        const Matrix right = matmul(delta, s.v_p);
        for (std::size_t j = 0; j < p; ++j) {
            worst = std::max(worst, norm2(left.row(j)) / scale);
            worst = std::max(worst, norm2(right.col(j)) / scale);
        }
    }
    return {worst < 1e-10, "max principal projection / ||delta||_F " + fmt(worst)};
}

MiniEncoder random_encoder(RandomSource& rng) { return MiniEncoder::random(EncoderConfig{}, 0.3, rng); }

Outcome zero_init_transparency() {
    RandomSource rng(404);
    const MiniEncoder base = random_encoder(rng);
    const ClassifierHead head = make_head(rng.gaussian(4, 64, 1.0), 0.05);
    double worst = 0.0;
    for (Method m : {Method::lora, Method::comp_lora}) {
        MiniEncoder adapted = base;
        attach_adapters(adapted, AdapterPlacement::all(2), m, 2, 4, 1.0, rng);
        for (int i = 0; i < 100; ++i) {
            const Matrix tokens = rng.gaussian(8, 64, 1.0);
            const Matrix e0 = encode_batch(base, tokens), e1 = encode_batch(adapted, tokens);
            worst = std::max({worst, max_abs_diff(e0, e1), max_abs_diff(logits(head, e0), logits(head, e1))});
        }
    }
    return {worst <= 1e-15, "max deviation " + fmt(worst) + " over 100 inputs per method"};
}

Outcome merge_equivalence() {
    RandomSource rng(505);
    double worst = 0.0;
    for (Method m : {Method::lora, Method::comp_lora}) {
        MiniEncoder adapted = random_encoder(rng);
        attach_adapters(adapted, AdapterPlacement::all(2), m, 2, 4, 1.0, rng);
        for (Matrix* p : trainable_parameters(adapted)) *p = rng.gaussian(p->rows(), p->cols(), 0.3);
        MiniEncoder merged = adapted;
        merge_adapters(merged);
        for (int i = 0; i < 20; ++i) {
            const Matrix tokens = rng.gaussian(8, 64, 1.0);
            worst = std::max(worst, max_abs_diff(encode_batch(adapted, tokens), encode_batch(merged, tokens)));
        }
    }
    return {worst < 1e-12, "max deviation " + fmt(worst)};
}

double weighted_sum(const Matrix& y, const Matrix& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * w.data()[i];
    return s;
}

Matrix& factor(Adapter& ad, bool want_a) {
    if (auto* l = std::get_if<LoraAdapter>(&ad)) return want_a ? l->a : l->b;
    auto& c = std::get<CompLoraAdapter>(ad);
    return want_a ? c.a : c.b;
}

Outcome gradient_oracle() {
    const auto t0 = Clock::now();
    RandomSource rng(606);
    EncoderConfig small;
    small.d_model = 12;
    small.n_heads = 2;
    small.n_layers = 2;
    small.seq_len = 4;
    double worst_linear = 0.0, worst_mha = 0.0, worst_pipeline = 0.0;

    for (Method m : {Method::lora, Method::comp_lora}) {
        for (int point = 0; point < 100; ++point) {
            // Linear layer.
            {
                const Matrix w = rng.gaussian(7, 6, 1.0);
                Adapter ad = m == Method::lora ? Adapter(init_lora(6, 7, 2, 0.8, rng))
                                               : Adapter(init_comp(split_weight(w, 2), 2, 0.8, rng));
                factor(ad, false) = rng.gaussian(factor(ad, false).rows(), factor(ad, false).cols(), 1.0);
                const Matrix x = rng.gaussian(3, 6, 1.0), probe = rng.gaussian(3, 7, 1.0);
                LinearCache cache;
                linear_forward(w, ad, x, &cache);
                const LinearGrad g = linear_backward(w, ad, cache, probe);
                for (bool want_a : {true, false}) {
                    const Matrix fd = fd_gradient([&](const Matrix& t) {
                        Adapter tmp = ad;
                        factor(tmp, want_a) = t;
                        return weighted_sum(linear_forward(w, tmp, x, nullptr), probe);
                    }, factor(ad, want_a));
                    worst_linear = std::max(worst_linear, relative_error(want_a ? g.adapter->da : g.adapter->db, fd));
                }
                const Matrix fdx =
                    fd_gradient([&](const Matrix& t) { return weighted_sum(linear_forward(w, ad, t, nullptr), probe); }, x);
                worst_linear = std::max(worst_linear, relative_error(g.dx, fdx));
            }

            MiniEncoder model = MiniEncoder::random(small, 1.0, rng);
            attach_adapters(model, AdapterPlacement::all(2), m, 2, 2, 0.9, rng);
            for (Matrix* p : trainable_parameters(model, false)) *p = rng.gaussian(p->rows(), p->cols(), 0.5);

            // Attention block.
            {
                AttentionLayer& layer = model.layers[0];
                const Matrix x = rng.gaussian(8, 12, 1.0), probe = rng.gaussian(8, 12, 1.0);
                MhaCache cache;
                mha_forward(layer, x, 2, 4, &cache);
                const MhaGrad g = mha_backward(layer, cache, probe, 2, 4);
                const Matrix fdx =
                    fd_gradient([&](const Matrix& t) { return weighted_sum(mha_forward(layer, t, 2, 4), probe); }, x);
                worst_mha = std::max(worst_mha, relative_error(g.dx, fdx));
                for (Projection p : kProjections) {
                    const auto idx = static_cast<std::size_t>(p);
                    for (bool want_a : {true, false}) {
                        Matrix& theta = factor(layer.adapter[idx], want_a);
                        const Matrix saved = theta;
                        const Matrix fd = fd_gradient([&](const Matrix& t) {
                            theta = t;
                            return weighted_sum(mha_forward(layer, x, 2, 4), probe);
                        }, saved);
                        theta = saved;
                        worst_mha = std::max(worst_mha, relative_error(want_a ? g.adapter[idx]->da : g.adapter[idx]->db, fd));
                    }
                }
            }

            // Full pipeline: encoder, cosine head and cross-entropy.
            {
                const ClassifierHead head = make_head(rng.gaussian(3, 12, 1.0), 0.2);
                const Matrix tokens = rng.gaussian(8, 12, 1.0);
                const std::vector<int> labels{static_cast<int>(rng.below(3)), static_cast<int>(rng.below(3))};
                const LossAndGrad lg = loss_and_grad(model, head, tokens, labels);
                const std::vector<Matrix> analytic = flatten_gradients(model, lg.grads);
                const std::vector<Matrix*> params = trainable_parameters(model);
                for (std::size_t i = 0; i < params.size(); ++i) {
                    const Matrix saved = *params[i];
                    const Matrix fd = fd_gradient([&](const Matrix& t) {
                        *params[i] = t;
                        return loss_only(model, head, tokens, labels);
                    }, saved);
                    *params[i] = saved;
                    worst_pipeline = std::max(worst_pipeline, relative_error(analytic[i], fd));
                }
            }
        }
    }
    const double t = seconds_since(t0);
    const double worst = std::max({worst_linear, worst_mha, worst_pipeline});
    return {worst < 1e-4 && t < 120.0, "max relative error linear " + fmt(worst_linear) + ", attention " + fmt(worst_mha) +
                                            ", pipeline " + fmt(worst_pipeline) + ", " + fmt(t) + " s"};
}

Outcome rank_r_recovery() {
    RandomSource rng(707);
    double worst = 0.0, slowest = 0.0;
    for (int i = 0; i < 20; ++i) {
        const auto t0 = Clock::now();
        const SubspaceSplit s = split_weight(rng.gaussian(8, 8, 1.0), 2);
        const Matrix target = rng.gaussian(8, 8, 1.0);
        const Matrix core = matmul(matmul_at(s.proj_out, target), s.proj_in.transpose());
        const Matrix oracle = matmul(matmul(s.proj_out, best_rank_r(core, 1)), s.proj_in);
        CompLoraAdapter ad = init_comp(s, 1, 1.0, rng);
        OptimizerState opt;
        opt.kind = OptimizerKind::sgd;
        opt.lr = 0.2 / frobenius_norm(target);
        fit_projected_target(ad, target, opt, 2'000'000, 1e-13);
        worst = std::max(worst, rel(effective_delta(ad), oracle));
        slowest = std::max(slowest, seconds_since(t0));
    }
    return {worst < 1e-3 && slowest < 10.0,
            "max relative distance to oracle " + fmt(worst) + ", slowest instance " + fmt(slowest) + " s"};
}

ExperimentConfig load_config(const std::string& name) { return parse_config(read_file(config_path(name))); }

Outcome forgetting_direction() {
    const auto t0 = Clock::now();
    const ExperimentConfig cfg = load_config("forget.json");
    const CommandOutput out = execute(cfg, RunOptions{});
    const double t = seconds_since(t0);
    const auto summary = nlohmann::json::parse(out.files.at("summary.json"));
    const auto& f = summary.at("forgetting").at(0);
    const double gap = f.at("retention_gap").get<double>();
    const double se = f.at("retention_gap_stderr").get<double>();
    const double qgap = f.at("query_gap").get<double>();
    const std::size_t n = f.at("comp_lora_retention").at("n").get<std::size_t>();
    return {n >= 20 && gap > se && std::abs(qgap) < 0.02 && t < 300.0,
            std::to_string(n) + " seeds, retention comp " + fmt(f.at("comp_lora_retention").at("mean").get<double>()) +
                " vs lora " + fmt(f.at("lora_retention").at("mean").get<double>()) + ", gap " + fmt(gap) +
                " > stderr " + fmt(se) + ", task1 difference " + fmt(qgap) + ", " + fmt(t) + " s"};
}

Outcome sweep_shape() {
    const auto t0 = Clock::now();
    const ExperimentConfig cfg = load_config("sweep.json");
    const CommandOutput out = execute(cfg, RunOptions{});
    const auto summary = nlohmann::json::parse(out.files.at("summary.json"));
    const double interior = summary.at("best_interior_score").get<double>();
    const double full = summary.at("full_space_score").get<double>();
    const double frac = summary.at("interior_best_fraction").get<double>();
    std::string trend;
    for (const auto& p : summary.at("points"))
        trend += (trend.empty() ? "" : " ") + std::to_string(p.at("c").get<std::size_t>()) + ":" +
                 fmt(p.at("score").at("mean").get<double>());
    const bool emitted = out.files.contains("sweep.csv") && out.files.contains("sweep.svg");
    return {emitted && interior >= full && frac >= 0.7,
            "best interior " + fmt(interior) + " vs full space " + fmt(full) + ", interior best in " + fmt(100 * frac) +
                "% of seeds, trend [" + trend + "], " + fmt(seconds_since(t0)) + " s"};
}

Outcome parameter_accounting() {
    RandomSource rng(1001);
    MiniEncoder comp = random_encoder(rng), lora = comp;
    attach_adapters(comp, AdapterPlacement::qkv(2), Method::comp_lora, 2, 4, 1.0, rng);
    attach_adapters(lora, AdapterPlacement::qkv(2), Method::lora, 2, 0, 1.0, rng);
    const std::size_t per_comp = param_count(comp.layers[0].ad(Projection::query)).learnable;
    const std::size_t per_lora = param_count(lora.layers[0].ad(Projection::query)).learnable;
    const std::size_t pair_comp = per_comp + param_count(comp.layers[0].ad(Projection::key)).learnable;
    const std::size_t pair_lora = per_lora + param_count(lora.layers[0].ad(Projection::key)).learnable;

    CompLoraAdapter wide{Matrix(496, 512), Matrix(512, 496), Matrix(2, 496), Matrix(496, 2), 1.0};
    LoraAdapter wide_lora{Matrix(2, 512), Matrix(512, 2), 1.0};
    const std::size_t big_comp = param_count(wide).learnable, big_lora = param_count(wide_lora).learnable;

    const bool ok = per_comp == 2 * 2 * 60 && per_lora == 2 * 2 * 64 && per_comp < per_lora && pair_comp == 480 &&
                    pair_lora == 512 && learnable_parameter_count(comp) == 6 * per_comp &&
                    learnable_parameter_count(lora) == 6 * per_lora && big_comp == 1984 && big_lora == 2048;
    return {ok, "d=64 p=4 r=2: " + std::to_string(per_comp) + " vs " + std::to_string(per_lora) + " per matrix, " +
                    std::to_string(pair_comp) + " vs " + std::to_string(pair_lora) + " per pair; d=512 c=496 r=2: " +
                    std::to_string(big_comp) + " vs " + std::to_string(big_lora)};
}

Outcome cli_determinism() {
    const auto base = std::filesystem::temp_directory_path() / "complora_acceptance";
    std::filesystem::remove_all(base);
    const std::string cfg = config_path("smoke.json").string();
    std::vector<std::pair<std::string, std::string>> runs{{"compare", "--jobs 1"}, {"compare", "--jobs 2"},
                                                          {"sweep-c", "--jobs 1"}, {"sweep-c", "--jobs 2"}};
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const std::string cmd = std::string("\"") + COMPLORA_CLI + "\" " + runs[i].first + " --config \"" + cfg +
                                "\" --out \"" + (base / std::to_string(i)).string() + "\" " + runs[i].second +
                                " > /dev/null";
        if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + cmd};
    }
    std::size_t compared = 0;
    for (std::size_t pair = 0; pair < 2; ++pair) {
        const auto a = base / std::to_string(2 * pair), b = base / std::to_string(2 * pair + 1);
        for (const auto& entry : std::filesystem::directory_iterator(a)) {
            const std::string name = entry.path().filename().string();
            if (name == "metadata.json") continue;
            if (!std::filesystem::exists(b / name) || read_file(entry.path()) != read_file(b / name))
                return {false, "differs: " + name};
            ++compared;
        }
    }
    return {compared >= 8, std::to_string(compared) + " payload files byte-identical across re-runs"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"svd correctness", svd_correctness},
        {"split completeness", split_completeness},
        {"principal annihilation", principal_annihilation},
        {"zero-init transparency", zero_init_transparency},
        {"merge equivalence", merge_equivalence},
        {"gradient oracle", gradient_oracle},
        {"rank-r recovery", rank_r_recovery},
        {"forgetting direction", forgetting_direction},
        {"c-sweep shape", sweep_shape},
        {"parameter accounting", parameter_accounting},
        {"determinism", cli_determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << (i + 1) << "] " << criteria[i].first << ": " << o.detail
                  << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failures == 0 ? 0 : 1;
}
