#include <doctest.h>

#include <cmath>
#include <random>

#include "gridloc/layers.hpp"
#include "gridloc/model.hpp"
#include "gridloc/spectral.hpp"
#include "support.hpp"

using namespace gridloc;
using testsupport::random_matrix;

namespace {

const GraphOperators& ops14() {
    static const GraphOperators ops = build_graph_operators(testsupport::case14());
    return ops;
}

const SpectralDecomposition& dec14() {
    static const SpectralDecomposition d = eigendecompose(ops14().L);
    return d;
}

Eigen::MatrixXd scalar(double v) {
    return Eigen::MatrixXd::Constant(1, 1, v);
}

// Fills every parameter with N(0, scale) draws.
void randomize(Layer& layer, std::mt19937_64& rng, double scale = 0.4) {
    for (auto* p : layer.params()) p->value = random_matrix(p->value.rows(), p->value.cols(), rng, scale);
}

// Checks parameter and input gradients of loss = sum(R .* layer(x)).
void check_layer_gradients(Layer& layer, const GraphContext& g, Tensor2 x, std::mt19937_64& rng) {
    LayerCache cache;
    const Tensor2 y = layer.forward(g, x, cache);
    const Eigen::MatrixXd R = random_matrix(y.rows(), y.cols(), rng);
    for (auto* p : layer.params()) p->grad.setZero();
    const Tensor2 gx = layer.backward(g, cache, R);

    auto loss = [&]() {
        LayerCache c;
        return layer.forward(g, x, c).cwiseProduct(R).sum();
    };
    for (auto* p : layer.params()) {
        const Eigen::MatrixXd analytic = p->grad;
        const Eigen::MatrixXd numeric = testsupport::numeric_gradient(p->value, loss);
        INFO(layer.kind() << " parameter " << p->name);
        CHECK(testsupport::gradient_relative_error(analytic, numeric) <= 1e-4);
    }
    const Eigen::MatrixXd numeric_x = testsupport::numeric_gradient(x, loss);
    INFO(layer.kind() << " input");
    CHECK(testsupport::gradient_relative_error(gx, numeric_x) <= 1e-4);
}

}  // namespace

TEST_CASE("arma1 with alpha = 0 is the affine skip term") {
    std::mt19937_64 rng(1);
    const auto X = random_matrix(14, 2, rng);
    const auto beta = random_matrix(2, 3, rng);
    const Eigen::RowVectorXd theta = random_matrix(1, 3, rng);
    const Eigen::MatrixXd expect = (X * beta).rowwise() + theta;
    for (int T : {1, 4, 9}) {
        const auto Y = arma1_forward(ops14().L_mod, X, Eigen::MatrixXd::Zero(3, 3), beta, theta, T);
        CHECK((Y - expect).cwiseAbs().maxCoeff() <= 1e-14);
    }
}

TEST_CASE("arma1 is linear without bias") {
    std::mt19937_64 rng(2);
    const auto Y = arma1_forward(ops14().L_mod, Eigen::MatrixXd::Zero(14, 2), random_matrix(3, 3, rng, 0.2),
                                 random_matrix(2, 3, rng), Eigen::RowVectorXd::Zero(3), 8);
    CHECK(Y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scalar arma1 converges to the rational response") {
    const auto& d = dec14();
    std::mt19937_64 rng(3);
    const auto X = random_matrix(14, 1, rng);
    const double rho = (1.0 - d.eigenvalues.array()).abs().maxCoeff();  // spectral radius of L_mod
    for (double a : {0.7 / rho, -0.6 / rho}) {
        const double b = 1.3;
        const auto Y = arma1_forward(ops14().L_mod, X, scalar(a), scalar(b), Eigen::RowVectorXd::Zero(1), 64);
        const auto ref = apply_spectral_filter(d, [&](double l) { return b / (1.0 - a * (1.0 - l)); }, X);
        CHECK((Y - ref).cwiseAbs().maxCoeff() <= 1e-6);
    }
    // At |a| rho = 0.9 the 64-step truncation error is bounded by the geometric tail.
    const double a = 0.9 / rho;
    const auto Y = arma1_forward(ops14().L_mod, X, scalar(a), scalar(1.0), Eigen::RowVectorXd::Zero(1), 64);
    const auto ref = apply_spectral_filter(d, [&](double l) { return 1.0 / (1.0 - a * (1.0 - l)); }, X);
    CHECK((Y - ref).norm() <= std::pow(0.9, 65) / (1.0 - 0.9) * X.norm() * (1.0 + 1e-9));
}

TEST_CASE("arma_k averages its stacks") {
    const auto& d = dec14();
    std::mt19937_64 rng(4);
    const auto X = random_matrix(14, 2, rng);
    ArmaStack s{random_matrix(3, 3, rng, 0.2), random_matrix(2, 3, rng), random_matrix(1, 3, rng)};
    const auto one = arma1_forward(ops14().L_mod, X, s.alpha, s.beta, s.theta, 6);
    CHECK((arma_k_forward(ops14().L_mod, X, {s}, 6) - one).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((arma_k_forward(ops14().L_mod, X, {s, s}, 6) - one).cwiseAbs().maxCoeff() <= 1e-14);

    const auto x1 = random_matrix(14, 1, rng);
    const std::vector<double> a{0.5, -0.4, 0.2};
    const std::vector<double> b{1.0, -0.7, 2.0};
    std::vector<ArmaStack> stacks;
    for (int k = 0; k < 3; ++k) stacks.push_back({scalar(a[k]), scalar(b[k]), Eigen::RowVectorXd::Zero(1)});
    const auto Y = arma_k_forward(ops14().L_mod, x1, stacks, 64);
    const auto ref = apply_spectral_filter(
        d,
        [&](double l) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += b[k] / (1.0 - a[k] * (1.0 - l));
            return s / 3.0;
        },
        x1);
    CHECK((Y - ref).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("ArmaLayer matches the free function on a batch") {
    std::mt19937_64 rng(5);
    ArmaLayer layer(2, 3, 2, 5);
    randomize(layer, rng, 0.3);
    const auto g = make_context(ops14());
    const auto X0 = random_matrix(14, 2, rng);
    const auto X1 = random_matrix(14, 2, rng);
    Tensor2 batch(28, 2);
    batch << X0, X1;
    LayerCache cache;
    const auto Y = layer.forward(g, batch, cache);
    std::vector<ArmaStack> stacks;
    for (int k = 0; k < 2; ++k) stacks.push_back({layer.alpha(k).value, layer.beta(k).value, layer.theta(k).value});
    CHECK((Y.topRows(14) - arma_k_forward(ops14().L_mod, X0, stacks, 5)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((Y.bottomRows(14) - arma_k_forward(ops14().L_mod, X1, stacks, 5)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("fir basics") {
    std::mt19937_64 rng(6);
    const auto X = random_matrix(14, 2, rng);
    const auto t0 = random_matrix(2, 3, rng);
    CHECK((fir_forward(ops14().L, X, {t0}) - X * t0).cwiseAbs().maxCoeff() <= 1e-14);
    const std::vector<Eigen::MatrixXd> zero(4, Eigen::MatrixXd::Zero(2, 3));
    CHECK(fir_forward(ops14().L, X, zero).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scalar fir is a Chebyshev series in L - I") {
    const auto& d = dec14();
    std::mt19937_64 rng(7);
    const auto X = random_matrix(14, 1, rng);
    const std::vector<double> c{0.4, -1.1, 0.6, 0.3};
    std::vector<Eigen::MatrixXd> coeffs;
    for (double v : c) coeffs.push_back(scalar(v));
    const auto h = [&](double l) {
        const double x = l - 1.0;
        return c[0] + c[1] * x + c[2] * (2 * x * x - 1) + c[3] * (4 * x * x * x - 3 * x);
    };
    CHECK((fir_forward(ops14().L, X, coeffs) - apply_spectral_filter(d, h, X)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("FirLayer matches the free function") {
    std::mt19937_64 rng(8);
    FirLayer layer(2, 4, 3);
    randomize(layer, rng);
    const auto X = random_matrix(14, 2, rng);
    LayerCache cache;
    const auto Y = layer.forward(make_context(ops14()), X, cache);
    std::vector<Eigen::MatrixXd> coeffs;
    for (int k = 0; k < 3; ++k) coeffs.push_back(layer.coeff(k).value);
    CHECK((Y - fir_forward(ops14().L, X, coeffs)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("FIR and ARMA locality") {
    // Path graph: hop distance is the index difference.
    const Eigen::Index n = 12;
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) W(i, i + 1) = W(i + 1, i) = 1.0 + 0.1 * static_cast<double>(i);
    const auto ops = graph_operators_from_adjacency(W);
    const auto g = make_context(ops);
    std::mt19937_64 rng(9);
    const auto X = random_matrix(n, 1, rng);

    FirLayer fir(1, 1, 4);
    randomize(fir, rng);
    ArmaLayer arma(1, 1, 2, 3);
    randomize(arma, rng);
    for (Layer* layer : std::initializer_list<Layer*>{&fir, &arma}) {
        const int radius = layer == &fir ? 3 : 3;  // K - 1 hops for FIR, T hops for ARMA
        LayerCache c0;
        const auto base = layer->forward(g, X, c0);
        for (Eigen::Index src = 0; src < n; ++src) {
            Tensor2 Xp = X;
            Xp(src) += 1.0;
            LayerCache c1;
            const auto out = layer->forward(g, Xp, c1);
            for (Eigen::Index v = 0; v < n; ++v) {
                if (std::abs(src - v) > radius) CHECK(out(v) == base(v));
            }
            // The node right at the radius still feels it.
            if (src + radius < n) CHECK(out(src + radius) != base(src + radius));
        }
    }
}

TEST_CASE("sparse and dense shifts agree") {
    const auto ops = build_graph_operators(testsupport::case300());
    auto g = make_context(ops);
    REQUIRE(g.shift_sparse != nullptr);
    std::mt19937_64 rng(10);
    const auto Y = random_matrix(600, 3, rng);
    auto dense = g;
    dense.shift_sparse = nullptr;
    CHECK((apply_shift(g, Y) - apply_shift(dense, Y)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("layer gradients on a random 5-node graph") {
    std::mt19937_64 rng(11);
    const auto ops = testsupport::random_graph(5, rng);
    const auto g = make_context(ops);
    const Eigen::Index batch = 2;

    SUBCASE("arma") {
        ArmaLayer l(3, 2, 3, 4);
        randomize(l, rng);
        check_layer_gradients(l, g, random_matrix(5 * batch, 3, rng), rng);
    }
    SUBCASE("fir") {
        FirLayer l(3, 2, 4);
        randomize(l, rng);
        check_layer_gradients(l, g, random_matrix(5 * batch, 3, rng), rng);
    }
    SUBCASE("dense") {
        DenseLayer l(3, 4);
        randomize(l, rng);
        check_layer_gradients(l, g, random_matrix(5 * batch, 3, rng), rng);
    }
    SUBCASE("relu") {
        ReluLayer l(3);
        // Keep inputs away from the kink.
        Tensor2 x = random_matrix(5 * batch, 3, rng);
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += x(i) >= 0 ? 0.1 : -0.1;
        check_layer_gradients(l, g, x, rng);
    }
    SUBCASE("flatten") {
        FlattenLayer l(5, 3);
        check_layer_gradients(l, g, random_matrix(5 * batch, 3, rng), rng);
    }
    SUBCASE("unflatten") {
        UnflattenLayer l(5);
        check_layer_gradients(l, g, random_matrix(batch, 5, rng), rng);
    }
}

TEST_CASE("flatten feature order") {
    GraphContext g;
    g.nodes = 3;
    FlattenLayer f(3, 2);
    Tensor2 x(6, 2);
    x << 1, 10, 2, 20, 3, 30, 4, 40, 5, 50, 6, 60;
    LayerCache c;
    const auto y = f.forward(g, x, c);
    REQUIRE(y.rows() == 2);
    REQUIRE(y.cols() == 6);
    Eigen::RowVectorXd first(6), second(6);
    first << 1, 2, 3, 10, 20, 30;
    second << 4, 5, 6, 40, 50, 60;
    CHECK(y.row(0) == first);
    CHECK(y.row(1) == second);
}

TEST_CASE("layers reject wrong channel counts") {
    const auto g = make_context(ops14());
    ArmaLayer a(2, 3, 1, 2);
    LayerCache c;
    CHECK_THROWS_AS(a.forward(g, Eigen::MatrixXd::Zero(14, 3), c), std::invalid_argument);
    CHECK_THROWS_AS(a.forward(g, Eigen::MatrixXd::Zero(13, 2), c), std::invalid_argument);
    CHECK_THROWS(ArmaLayer(2, 3, 0, 2));
    CHECK_THROWS(FirLayer(2, 3, 0));
}
