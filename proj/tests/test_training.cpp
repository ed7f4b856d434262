#include <doctest.h>

#include <cmath>

#include "complora/errors.hpp"
#include "complora/training.hpp"
#include "oracles.hpp"

using namespace complora;

namespace {

struct World {
    MiniEncoder model;
    ClassifierHead head;
    FewShotEpisode episode;
};

World make_world(std::uint64_t seed, std::size_t shots, double margin, double noise) {
    EncoderConfig cfg;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_layers = 1;
    cfg.seq_len = 4;
    RandomSource rng(seed);
    World w;
    w.model = MiniEncoder::random(cfg, 0.5, rng);
    const TaskPair pair = make_task_pair(16, 2, 3, margin, noise, seed);
    w.head = make_head(rng.gaussian(3, 16, 1.0), 0.05);
    w.episode = sample_episode(pair.second, 4, shots, 16, rng);
    return w;
}

TrainConfig config(Method m, std::size_t epochs) {
    TrainConfig c;
    c.method = m;
    c.rank = 2;
    c.principal_dim = 2;
    c.lr = 1e-2;
    c.epochs = epochs;
    c.placement = AdapterPlacement::qkv(1);
    return c;
}

}  // namespace

TEST_SUITE("training") {
    TEST_CASE("zero epochs leave accuracy at the zero-shot value") {
        const World w = make_world(1, 4, 3.0, 0.5);
        for (Method m : {Method::lora, Method::comp_lora}) {
            RandomSource rng(2);
            const TrainResult r = train_adapter(w.model, w.head, w.episode, config(m, 0), rng);
            CHECK(accuracy(r.model, w.head, w.episode.query) == accuracy(w.model, w.head, w.episode.query));
            CHECK(r.loss_curve.size() == 1);
        }
    }

    TEST_CASE("easy 16-shot task is fitted by both methods") {
        const World w = make_world(3, 16, 4.0, 0.3);
        for (Method m : {Method::lora, Method::comp_lora}) {
            RandomSource rng(4);
            const TrainResult r = train_adapter(w.model, w.head, w.episode, config(m, 200), rng);
            CHECK(r.train_accuracy >= 0.95);
            CHECK(r.loss_curve.back() < r.loss_curve.front());
        }
    }

    TEST_CASE("training never touches frozen weights") {
        const World w = make_world(5, 4, 3.0, 0.5);
        RandomSource rng(6), rng0(6);
        const TrainResult r = train_adapter(w.model, w.head, w.episode, config(Method::comp_lora, 20), rng);
        const TrainResult r0 = train_adapter(w.model, w.head, w.episode, config(Method::comp_lora, 0), rng0);
        CHECK(r.model.frozen_checksum() == r0.model.frozen_checksum());
        for (std::size_t p = 0; p < 4; ++p) CHECK(r.model.layers[0].weight[p] == w.model.layers[0].weight[p]);
        const auto& ad = std::get<CompLoraAdapter>(r.model.layers[0].ad(Projection::query));
        const SubspaceSplit s = split_weight(w.model.layers[0].w(Projection::query), 2);
        CHECK(ad.proj_in == s.proj_in);
        CHECK(ad.proj_out == s.proj_out);
    }

    TEST_CASE("comp-lora at p = 0 follows the rotated vanilla LoRA trajectory under SGD") {
        const World w = make_world(7, 4, 3.0, 0.5);
        TrainConfig c = config(Method::comp_lora, 30);
        c.principal_dim = 0;
        c.optimizer = OptimizerKind::sgd;
        c.lr = 0.05;
        MiniEncoder comp = w.model;
        RandomSource rng(8);
        attach_adapters(comp, c.placement, Method::comp_lora, c.rank, 0, 1.0, rng);
        MiniEncoder lora = w.model;
        for (std::size_t l = 0; l < comp.layers.size(); ++l) {
            for (Projection p : kProjections) {
                const auto* ca = std::get_if<CompLoraAdapter>(&comp.layers[l].ad(p));
                if (!ca) continue;
                lora.layers[l].adapter[static_cast<std::size_t>(p)] =
                    LoraAdapter{matmul(ca->a, ca->proj_in), matmul(ca->proj_out, ca->b), ca->eta};
            }
        }
        OptimizerState opt;
        opt.kind = OptimizerKind::sgd;
        opt.lr = c.lr;
        const TrainResult rc = train_attached(comp, w.head, w.episode.support, opt, c.epochs);
        const TrainResult rl = train_attached(lora, w.head, w.episode.support, opt, c.epochs);
        REQUIRE(rc.loss_curve.size() == rl.loss_curve.size());
        for (std::size_t i = 0; i < rc.loss_curve.size(); ++i)
            CHECK(rc.loss_curve[i] == doctest::Approx(rl.loss_curve[i]).epsilon(1e-9));
    }

    TEST_CASE("divergence is reported with its step") {
        const World w = make_world(9, 4, 3.0, 0.5);
        TrainConfig c = config(Method::lora, 50);
        c.optimizer = OptimizerKind::sgd;
        c.lr = 1e300;
        RandomSource rng(10);
        try {
            train_adapter(w.model, w.head, w.episode, c, rng);
            FAIL("expected a TrainingError");
        } catch (const TrainingError& e) {
            CHECK(e.step() >= 1);
        }
    }

    TEST_CASE("budget equality ignores only the method") {
        TrainConfig a = config(Method::lora, 10), b = config(Method::comp_lora, 10);
        CHECK(a.same_budget(b));
        b.lr = 1.0;
        CHECK_FALSE(a.same_budget(b));
    }
}
