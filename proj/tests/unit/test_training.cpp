#include <cmath>
#include <sstream>

#include <doctest.h>

#include "rhnmt/errors.hpp"
#include "rhnmt/training.hpp"
#include "support/toy_data.hpp"

using namespace rhnmt;
using rhnmt::testing::encode_corpus;
using rhnmt::testing::make_copy_corpus;

namespace {

struct ToySetup {
    Vocabulary vocab;
    std::vector<EncodedPair> pairs;
};

ToySetup copy_setup(std::size_t pairs, std::uint64_t seed) {
    auto corpus = make_copy_corpus(pairs, 8, 2, 5, seed);
    ToySetup s;
    s.vocab = Vocabulary::build(corpus.src_lines, 12);
    s.pairs = encode_corpus(corpus, s.vocab, s.vocab);
    return s;
}

NmtModel toy_model(const ToySetup& s, double beta, std::uint64_t seed, std::size_t hidden = 8,
                   std::size_t depth = 1) {
    ModelConfig c;
    c.hidden = hidden;
    c.depth = depth;
    c.layers = 1;
    c.src_vocab = s.vocab.size();
    c.tgt_vocab = s.vocab.size();
    c.dropout = 0.0;
    c.beta = beta;
    Rng rng(seed);
    return NmtModel::create(c, rng);
}

}  // namespace

TEST_CASE("clip_gradients: below the cap, above the cap, recomputed norm") {
    auto a = tensor(1, 2, {1.2, 1.6}, true);  // norm 2
    a->ensure_grad();
    a->grad = {1.2, 1.6};
    std::vector<std::pair<std::string, TensorPtr>> params{{"a", a}};
    CHECK(clip_gradients(params, 5.0) == 1.0);
    CHECK(a->grad == std::vector<double>{1.2, 1.6});

    auto b = tensor(1, 2, 0.0, true);
    b->ensure_grad();
    b->grad = {6.0, 8.0};  // norm 10
    std::vector<std::pair<std::string, TensorPtr>> params_b{{"b", b}};
    CHECK(clip_gradients(params_b, 5.0) == doctest::Approx(0.5).epsilon(1e-15));
    double post = std::sqrt(b->grad[0] * b->grad[0] + b->grad[1] * b->grad[1]);
    CHECK(post == doctest::Approx(5.0).epsilon(1e-12));

    Rng rng(55);
    std::vector<std::pair<std::string, TensorPtr>> many;
    for (int k = 0; k < 4; ++k) {
        auto t = tensor(3, 3, 0.0, true);
        t->ensure_grad();
        for (auto& g : t->grad) g = rng.uniform(-2.0, 2.0);
        many.emplace_back("t" + std::to_string(k), t);
    }
    double pre = 0.0;
    for (const auto& [name, t] : many) {
        for (double g : t->grad) pre += g * g;
    }
    pre = std::sqrt(pre);
    clip_gradients(many, 1.5);
    double after = 0.0;
    for (const auto& [name, t] : many) {
        for (double g : t->grad) after += g * g;
    }
    after = std::sqrt(after);
    CHECK(after == doctest::Approx(std::min(pre, 1.5)).epsilon(1e-12));

    // disabled clipping leaves everything alone
    auto c = tensor(1, 1, 0.0, true);
    c->ensure_grad();
    c->grad = {100.0};
    std::vector<std::pair<std::string, TensorPtr>> params_c{{"c", c}};
    CHECK(clip_gradients(params_c, 0.0) == 1.0);
    CHECK(c->grad[0] == 100.0);
}

TEST_CASE("sgd_update applies p -= lr * grad exactly") {
    auto w = tensor(1, 1, {3.0}, true);
    {
        GraphScope graph;
        auto x = tensor(1, 1, {2.0});
        backward(sum_all(mul(w, x)));
    }
    CHECK(w->grad[0] == 2.0);
    sgd_update({{"w", w}}, 0.1);
    CHECK(w->data[0] == 3.0 - 0.1 * 2.0);
}

TEST_CASE("train_step: loss identity across the beta grid") {
    ToySetup s = copy_setup(8, 900);
    auto batches = make_batches(s.pairs, 4, true, 1);
    for (double beta : {0.0, 0.1, 0.5, 1.0}) {
        NmtModel model = toy_model(s, beta, 77);
        TrainingConfig cfg;
        cfg.beta = beta;
        cfg.dropout = 0.0;
        Rng rng(5);
        for (const auto& batch : batches) {
            StepLosses losses = train_step(model, batch, cfg, rng);
            CHECK(losses.loss - (losses.loss_d + beta * losses.loss_r) == 0.0);
            if (beta == 0.0) {
                CHECK(losses.loss == losses.loss_d);
                CHECK(losses.loss_r == 0.0);
            }
        }
    }
}

TEST_CASE("train_step with beta 0 matches a reconstructor-free twin") {
    ToySetup s = copy_setup(6, 901);
    // same seed: the shared parameter draws are identical, the reconstructor
    // draws happen after all of them
    NmtModel with_rec = toy_model(s, 0.5, 321);
    NmtModel without = toy_model(s, 0.0, 321);
    auto batches = make_batches(s.pairs, 3, true, 2);
    TrainingConfig cfg;
    cfg.beta = 0.0;
    cfg.dropout = 0.0;
    Rng rng_a(9), rng_b(9);
    for (const auto& batch : batches) {
        StepLosses a = train_step(with_rec, batch, cfg, rng_a);
        StepLosses b = train_step(without, batch, cfg, rng_b);
        CHECK(a.loss == b.loss);
        CHECK(a.loss_d == b.loss_d);
    }
    auto pa = with_rec.parameters();
    auto pb = without.parameters();
    for (const auto& [name, t] : pb) {
        for (const auto& [name2, t2] : pa) {
            if (name2 == name) CHECK(t->data == t2->data);
        }
    }
}

TEST_CASE("train: one epoch over one batch records one step") {
    ToySetup s = copy_setup(3, 902);
    NmtModel model = toy_model(s, 0.0, 11);
    TrainingConfig cfg;
    cfg.beta = 0.0;
    cfg.dropout = 0.0;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    TrainingLog log = train(model, s.pairs, cfg);
    CHECK(log.steps.size() == 1);
    CHECK(log.steps[0].step == 1);
    CHECK(log.epochs.size() == 1);
}

TEST_CASE("train rejects an empty corpus") {
    ToySetup s = copy_setup(3, 903);
    NmtModel model = toy_model(s, 0.0, 11);
    TrainingConfig cfg;
    CHECK_THROWS_AS(train(model, {}, cfg), ConfigError);
}

TEST_CASE("training diverges loudly, naming the step") {
    ToySetup s = copy_setup(6, 904);
    NmtModel model = toy_model(s, 0.0, 13);
    TrainingConfig cfg;
    cfg.beta = 0.0;
    cfg.dropout = 0.0;
    cfg.learning_rate = 1e18;
    cfg.grad_clip_norm = 0.0;
    cfg.epochs = 50;
    bool threw = false;
    try {
        train(model, s.pairs, cfg);
    } catch (const TrainingDiverged& e) {
        threw = true;
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("two runs with one seed produce identical logs") {
    ToySetup s = copy_setup(12, 905);
    TrainingConfig cfg;
    cfg.beta = 0.1;
    cfg.dropout = 0.2;
    cfg.batch_size = 4;
    cfg.epochs = 2;
    cfg.seed = 77;

    auto run = [&] {
        NmtModel model = toy_model(s, cfg.beta, 42);
        return train(model, s.pairs, cfg);
    };
    TrainingLog a = run();
    TrainingLog b = run();
    REQUIRE(a.steps.size() == b.steps.size());
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
        CHECK(a.steps[i].loss == b.steps[i].loss);
        CHECK(a.steps[i].loss_d == b.steps[i].loss_d);
        CHECK(a.steps[i].loss_r == b.steps[i].loss_r);
        CHECK(a.steps[i].perplexity == b.steps[i].perplexity);
    }
}

TEST_CASE("beta sweep converges on the copy corpus") {
    ToySetup s = copy_setup(16, 906);
    for (double beta : {0.0, 0.1, 0.5, 1.0}) {
        NmtModel model = toy_model(s, beta, 3, 12, 1);
        TrainingConfig cfg;
        cfg.beta = beta;
        cfg.dropout = 0.0;
        cfg.batch_size = 8;
        cfg.epochs = 40;
        cfg.seed = 4;
        TrainingLog log = train(model, s.pairs, cfg);
        REQUIRE(!log.steps.empty());
        CHECK(log.steps.back().loss_d < log.steps.front().loss_d);
        for (const auto& rec : log.steps) CHECK(std::isfinite(rec.loss));
    }
}

TEST_CASE("log rows carry the five fields in order") {
    StepRecord rec;
    rec.step = 7;
    rec.loss_d = 1.5;
    rec.loss_r = 0.25;
    rec.loss = 1.525;
    rec.perplexity = 4.5;
    std::ostringstream oss;
    write_log_row(oss, rec);
    CHECK(oss.str() == "7\t1.5\t0.25\t1.525\t4.5\n");
}

TEST_CASE("max_steps stops mid-epoch") {
    ToySetup s = copy_setup(20, 907);
    NmtModel model = toy_model(s, 0.0, 15);
    TrainingConfig cfg;
    cfg.beta = 0.0;
    cfg.dropout = 0.0;
    cfg.batch_size = 2;
    cfg.epochs = 100;
    cfg.max_steps = 7;
    TrainingLog log = train(model, s.pairs, cfg);
    CHECK(log.steps.size() == 7);
}

TEST_CASE("training config validation") {
    TrainingConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainingConfig{};
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainingConfig{};
    cfg.beta = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
