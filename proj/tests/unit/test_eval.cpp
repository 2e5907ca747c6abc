#include <doctest.h>

#include <random>

#include "gridloc/eval.hpp"
#include "support.hpp"

using namespace gridloc;

namespace {

BinaryVector bits(std::initializer_list<int> v) {
    BinaryVector b(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (int x : v) b(i++) = x;
    return b;
}

BinaryVector from_set(std::initializer_list<int> one_based, Eigen::Index n) {
    BinaryVector b = BinaryVector::Zero(n);
    for (int i : one_based) b(i - 1) = 1;
    return b;
}

// Plain counting, no shortcuts.
double oracle_f1(const std::vector<int>& p, const std::vector<int>& t) {
    int tp = 0, fp = 0, fn = 0, pos = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        pos += t[i];
        if (p[i] == 1 && t[i] == 1) ++tp;
        if (p[i] == 1 && t[i] == 0) ++fp;
        if (p[i] == 0 && t[i] == 1) ++fn;
    }
    if (pos == 0) return fp == 0 ? 1.0 : 0.0;
    return 2.0 * tp / (2.0 * tp + fp + fn);
}

}  // namespace

TEST_CASE("f1 examples") {
    CHECK(f1_score(bits({0, 0, 0}), bits({0, 0, 0})) == 1.0);
    CHECK(f1_score(bits({0, 1, 0}), bits({0, 0, 0})) == 0.0);
    // TP 2, FP 1, FN 1.
    CHECK(f1_score(bits({1, 1, 1, 0}), bits({1, 1, 0, 1})) == doctest::Approx(4.0 / 6.0).epsilon(1e-15));
    const auto truth = from_set({4, 5, 7, 9, 10}, 14);
    const auto pred = from_set({4, 5, 6, 9, 10}, 14);
    const auto c = confusion(pred, truth);
    CHECK(c.tp == 4);
    CHECK(c.fp == 1);
    CHECK(c.fn == 1);
    CHECK(c.tn == 8);
    CHECK(f1_score(pred, truth) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK_THROWS_AS(f1_score(bits({1}), bits({1, 0})), std::invalid_argument);
}

TEST_CASE("f1 is 1 on identical inputs and symmetric") {
    std::mt19937_64 rng(1);
    std::bernoulli_distribution coin(0.3);
    for (int trial = 0; trial < 200; ++trial) {
        BinaryVector a(9), b(9);
        for (Eigen::Index i = 0; i < 9; ++i) {
            a(i) = coin(rng);
            b(i) = coin(rng);
        }
        CHECK(f1_score(a, a) == 1.0);
        CHECK(f1_score(a, b) == f1_score(b, a));
        const double f = f1_score(a, b);
        CHECK(f >= 0.0);
        CHECK(f <= 1.0);
    }
}

TEST_CASE("sample-wise and bus-wise scores match a counting oracle") {
    std::mt19937_64 rng(2);
    std::bernoulli_distribution coin(0.35);
    for (int trial = 0; trial < 20; ++trial) {
        BinaryMatrix P(20, 6), T(20, 6);
        for (Eigen::Index i = 0; i < P.size(); ++i) {
            P(i) = coin(rng);
            T(i) = coin(rng);
        }
        const auto sw = sample_wise_eval(P, T);
        const auto bw = bus_wise_eval(P, T);
        REQUIRE(sw.f1.size() == 20);
        REQUIRE(bw.f1.size() == 6);
        std::size_t ok = 0;
        for (Eigen::Index r = 0; r < 20; ++r) {
            std::vector<int> p, t;
            for (Eigen::Index c = 0; c < 6; ++c) {
                p.push_back(P(r, c));
                t.push_back(T(r, c));
            }
            CHECK(sw.f1[static_cast<std::size_t>(r)] == oracle_f1(p, t));
            ok += oracle_f1(p, t) >= 0.9 ? 1 : 0;
        }
        CHECK(sw.acceptable_ratio == static_cast<double>(ok) / 20.0);
        for (Eigen::Index c = 0; c < 6; ++c) {
            std::vector<int> p, t;
            for (Eigen::Index r = 0; r < 20; ++r) {
                p.push_back(P(r, c));
                t.push_back(T(r, c));
            }
            CHECK(bw.f1[static_cast<std::size_t>(c)] == oracle_f1(p, t));
        }
        const auto all = confusion(P.reshaped(), T.reshaped());
        CHECK(sw.totals.tp == all.tp);
        CHECK(bw.totals.fn == all.fn);
        CHECK(sw.totals.tn + sw.totals.tp + sw.totals.fp + sw.totals.fn == 120);
    }
}

TEST_CASE("perfect predictions") {
    BinaryMatrix T = BinaryMatrix::Zero(5, 4);
    T(1, 2) = T(3, 0) = T(3, 1) = 1;
    const auto sw = sample_wise_eval(T, T);
    const auto bw = bus_wise_eval(T, T);
    CHECK(sw.acceptable_ratio == 1.0);
    CHECK(bw.acceptable_ratio == 1.0);
    for (double f : sw.f1) CHECK(f == 1.0);
    CHECK_THROWS_AS(sample_wise_eval(T, BinaryMatrix::Zero(5, 3)), std::invalid_argument);
    CHECK_THROWS_AS(bus_wise_eval(T, BinaryMatrix::Zero(4, 4)), std::invalid_argument);
}

TEST_CASE("threshold is strict") {
    Eigen::MatrixXd p(1, 3);
    p << 0.5, 0.5000001, 0.2;
    const auto b = threshold_predictions(p);
    CHECK(b(0, 0) == 0);
    CHECK(b(0, 1) == 1);
    CHECK(b(0, 2) == 0);
}

TEST_CASE("predictions and truth from labeled samples") {
    const auto ops = build_graph_operators(testsupport::case14());
    const auto m = Model::localizer(ModelConfig{.channels = 4}, 14, 1);
    std::mt19937_64 rng(3);
    std::vector<LabeledSample> s(5);
    for (auto& x : s) {
        x.X = testsupport::random_matrix(14, 2, rng);
        x.y = Eigen::VectorXd::Zero(14);
    }
    s[2].y(5) = 1.0;
    const auto P = predict_samples(m, ops, s, 2);
    REQUIRE(P.rows() == 5);
    for (Eigen::Index i = 0; i < 5; ++i) {
        CHECK((P.row(i).transpose() - model_forward(m, ops, s[static_cast<std::size_t>(i)].X)).cwiseAbs().maxCoeff() <=
              1e-12);
    }
    const auto T = truth_matrix(s);
    CHECK(T.sum() == 1);
    CHECK(T(2, 5) == 1);
}

TEST_CASE("latency benchmark") {
    const auto ops = build_graph_operators(testsupport::case14());
    const auto m = Model::localizer(ModelConfig{.channels = 4}, 14, 1);
    std::mt19937_64 rng(4);
    const std::vector<Eigen::MatrixXd> in{testsupport::random_matrix(14, 2, rng)};
    try {
        latency_benchmark(m, ops, in, 0);
        FAIL("expected an error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("no measurements") != std::string::npos);
    }
    const auto a = latency_benchmark(m, ops, in, 50);
    const auto b = latency_benchmark(m, ops, in, 50);
    CHECK(a.repetitions == 50);
    CHECK(a.mean_ms > 0.0);
    CHECK(a.p95_ms >= 0.0);
    CHECK(a.mean_ms <= 3.0 * b.mean_ms);
    CHECK(b.mean_ms <= 3.0 * a.mean_ms);
}
