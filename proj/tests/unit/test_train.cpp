#include <doctest.h>

#include <cmath>
#include <random>

#include "gridloc/train.hpp"
#include "support.hpp"

using namespace gridloc;
using testsupport::random_matrix;

namespace {

const GraphOperators& ops14() {
    static const GraphOperators ops = build_graph_operators(testsupport::case14());
    return ops;
}

ModelConfig tiny(ModelKind kind = ModelKind::Fir) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.graph_layers = 1;
    cfg.channels = 4;
    cfg.order = 2;
    cfg.iterations = 2;
    cfg.fcn_hidden = 8;
    return cfg;
}

SampleSet make_set(std::size_t count, double target, std::mt19937_64& rng) {
    SampleSet s;
    s.rows_per_sample = 14;
    s.inputs = random_matrix(static_cast<Eigen::Index>(count) * 14, 2, rng);
    s.targets = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(count) * 14, 1, target);
    return s;
}

}  // namespace

TEST_CASE("first Adam step moves each weight by about lr") {
    Param p("w", 1, 3);
    p.value << 1.0, -2.0, 0.5;
    p.grad << 0.3, -4.0, 0.0;
    AdamState st;
    adam_step({&p}, st, 0.01);
    CHECK(st.step == 1);
    // Bias-corrected moments are g and g^2, so the step is lr * g / (|g| + eps).
    CHECK(p.value(0) == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8)).epsilon(1e-14));
    CHECK(p.value(1) == doctest::Approx(-2.0 + 0.01 * 4.0 / (4.0 + 1e-8)).epsilon(1e-14));
    CHECK(p.value(2) == 0.5);
    CHECK(p.m(0) == doctest::Approx(0.03));
    CHECK(p.v(1) == doctest::Approx(0.016));
}

TEST_CASE("second Adam step uses both moments") {
    Param p("w", 1, 1);
    p.value(0) = 0.0;
    AdamState st;
    p.grad(0) = 1.0;
    adam_step({&p}, st, 0.1);
    p.grad(0) = 3.0;
    adam_step({&p}, st, 0.1);
    const double m = 0.9 * 0.1 + 0.1 * 3.0;
    const double v = 0.999 * 0.001 + 0.001 * 9.0;
    const double mh = m / (1.0 - 0.81);
    const double vh = v / (1.0 - 0.999 * 0.999);
    const double first = -0.1 * 1.0 / (1.0 + 1e-8);
    CHECK(p.value(0) == doctest::Approx(first - 0.1 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-12));
}

TEST_CASE("a single sample can be memorised") {
    std::mt19937_64 rng(1);
    auto m = Model::localizer(tiny(ModelKind::Iir), 14, 5);
    const auto g = make_context(ops14());
    const auto x = random_matrix(14, 2, rng);
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(14, 1);
    y(3) = y(4) = y(9) = 1.0;
    AdamState st;
    double loss = 0.0;
    for (int step = 0; step < 200; ++step) {
        loss = m.loss_and_gradients(g, x, y, LossKind::BinaryCrossEntropy);
        adam_step(m.params(), st, 1e-2);
    }
    loss = bce_loss(m.predict(g, x), y);
    CHECK(loss <= 1e-2);
}

TEST_CASE("early stopping keeps the first epoch when validation only gets worse") {
    std::mt19937_64 rng(2);
    const auto train_set = make_set(32, 1.0, rng);
    const auto val_set = make_set(16, 0.0, rng);
    auto m = Model::localizer(tiny(), 14, 3);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.max_epochs = 100;
    cfg.patience = 16;
    cfg.lr = 1e-2;
    const auto g = make_context(ops14());
    const auto h = train(m, g, train_set, val_set, cfg);
    CHECK(h.early_stopped);
    CHECK(h.epochs.size() == 17);
    CHECK(h.best_epoch == 1);
    CHECK(h.best_val_loss == h.epochs.front().val_loss);
    // Restored weights reproduce the best validation loss.
    CHECK(evaluate_loss(m, g, val_set, LossKind::BinaryCrossEntropy) == doctest::Approx(h.best_val_loss).epsilon(1e-12));
}

TEST_CASE("training is deterministic for a fixed seed") {
    std::mt19937_64 rng(3);
    const auto tr = make_set(24, 1.0, rng);
    auto va = make_set(8, 1.0, rng);
    va.targets(5) = 0.0;
    TrainConfig cfg;
    cfg.batch_size = 5;
    cfg.max_epochs = 4;
    const auto g = make_context(ops14());
    auto a = Model::localizer(tiny(ModelKind::Iir), 14, 9);
    auto b = Model::localizer(tiny(ModelKind::Iir), 14, 9);
    const auto ha = train(a, g, tr, va, cfg);
    const auto hb = train(b, g, tr, va, cfg);
    REQUIRE(ha.epochs.size() == hb.epochs.size());
    for (std::size_t i = 0; i < ha.epochs.size(); ++i) {
        CHECK(ha.epochs[i].train_loss == hb.epochs[i].train_loss);
        CHECK(ha.epochs[i].val_loss == hb.epochs[i].val_loss);
    }
    CHECK(a.snapshot() == b.snapshot());
}

TEST_CASE("restored model matches the best recorded epoch") {
    std::mt19937_64 rng(4);
    SampleSet tr = make_set(40, 0.0, rng);
    SampleSet va = make_set(20, 0.0, rng);
    // Labels tied to the sign of P so there is something to learn.
    for (Eigen::Index i = 0; i < tr.targets.rows(); ++i) tr.targets(i) = tr.inputs(i, 0) > 0.5 ? 1.0 : 0.0;
    for (Eigen::Index i = 0; i < va.targets.rows(); ++i) va.targets(i) = va.inputs(i, 0) > 0.5 ? 1.0 : 0.0;
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.max_epochs = 12;
    cfg.patience = 3;
    cfg.lr = 5e-3;
    const auto g = make_context(ops14());
    auto m = Model::localizer(tiny(), 14, 1);
    std::vector<double> seen;
    const auto h = train(m, g, tr, va, cfg, [&](const EpochRecord& r) { seen.push_back(r.val_loss); });
    REQUIRE(seen.size() == h.epochs.size());
    double best = seen.front();
    for (double v : seen) best = std::min(best, v);
    CHECK(h.best_val_loss == best);
    CHECK(h.epochs[static_cast<std::size_t>(h.best_epoch - 1)].val_loss == best);
    CHECK(evaluate_loss(m, g, va, LossKind::BinaryCrossEntropy, 7) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("divergence surfaces as TrainingError") {
    std::mt19937_64 rng(5);
    const auto tr = make_set(4, 1.0, rng);
    const auto va = make_set(4, 1.0, rng);
    auto m = Model::localizer(tiny(), 14, 1);
    m.params().front()->value(0, 0) = std::nan("");
    TrainConfig cfg;
    cfg.max_epochs = 2;
    try {
        train(m, make_context(ops14()), tr, va, cfg);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).rfind("training diverged at epoch 1", 0) == 0);
    }
}

TEST_CASE("train rejects bad arguments") {
    std::mt19937_64 rng(6);
    const auto tr = make_set(4, 1.0, rng);
    auto m = Model::localizer(tiny(), 14, 1);
    const auto g = make_context(ops14());
    CHECK_THROWS_AS(train(m, g, tr, SampleSet{}, TrainConfig{}), std::invalid_argument);
    TrainConfig bad;
    bad.lr = 0.0;
    CHECK_THROWS_AS(train(m, g, tr, tr, bad), std::invalid_argument);
}

TEST_CASE("evaluate_loss does not depend on the chunk size") {
    std::mt19937_64 rng(7);
    auto s = make_set(13, 0.0, rng);
    for (Eigen::Index i = 0; i < s.targets.rows(); i += 3) s.targets(i) = 1.0;
    const auto m = Model::localizer(tiny(ModelKind::Iir), 14, 2);
    const auto g = make_context(ops14());
    const double whole = evaluate_loss(m, g, s, LossKind::BinaryCrossEntropy, 13);
    for (int chunk : {1, 4, 256}) {
        CHECK(evaluate_loss(m, g, s, LossKind::BinaryCrossEntropy, chunk) == doctest::Approx(whole).epsilon(1e-12));
    }
}
