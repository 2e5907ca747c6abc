#include "gridloc/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace gridloc {

namespace {

using MapMat = Eigen::Map<Eigen::MatrixXd>;
using ConstMapMat = Eigen::Map<const Eigen::MatrixXd>;

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

void check_batch(const GraphContext& g, const Tensor2& x, Eigen::Index channels, const char* layer) {
    require(x.cols() == channels, std::string(layer) + ": expected " + std::to_string(channels) + " channels, got " +
                                      std::to_string(x.cols()));
    require(g.nodes > 0 && x.rows() % g.nodes == 0, std::string(layer) + ": rows not a multiple of node count");
}

void glorot(Eigen::MatrixXd& w, Eigen::Index fan_in, Eigen::Index fan_out, double scale, std::mt19937_64& rng) {
    const double limit = scale * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
    }
}

}  // namespace

Tensor2 apply_shift(const Eigen::MatrixXd& S, const Tensor2& Y) {
    const Eigen::Index n = S.rows();
    require(Y.size() % n == 0, "apply_shift: batch is not a multiple of the node count");
    const Eigen::Index cols = Y.size() / n;
    Tensor2 out(Y.rows(), Y.cols());
    MapMat(out.data(), n, cols).noalias() = S * ConstMapMat(Y.data(), n, cols);
    return out;
}

void apply_shift_add(const Eigen::MatrixXd& S, const Tensor2& Y, double scale, Tensor2& out) {
    const Eigen::Index n = S.rows();
    const Eigen::Index cols = Y.size() / n;
    MapMat(out.data(), n, cols).noalias() += scale * (S * ConstMapMat(Y.data(), n, cols));
}

Tensor2 apply_shift(const GraphContext& g, const Tensor2& Y) {
    if (g.shift_sparse == nullptr) return apply_shift(*g.shift, Y);
    const Eigen::Index n = g.shift_sparse->rows();
    require(Y.size() % n == 0, "apply_shift: batch is not a multiple of the node count");
    const Eigen::Index cols = Y.size() / n;
    Tensor2 out(Y.rows(), Y.cols());
    MapMat(out.data(), n, cols).noalias() = *g.shift_sparse * ConstMapMat(Y.data(), n, cols);
    return out;
}

void apply_shift_add(const GraphContext& g, const Tensor2& Y, double scale, Tensor2& out) {
    if (g.shift_sparse == nullptr) return apply_shift_add(*g.shift, Y, scale, out);
    const Eigen::Index n = g.shift_sparse->rows();
    const Eigen::Index cols = Y.size() / n;
    MapMat(out.data(), n, cols).noalias() += scale * (*g.shift_sparse * ConstMapMat(Y.data(), n, cols));
}

Param::Param(std::string n, Eigen::Index rows, Eigen::Index cols)
    : name(std::move(n)),
      value(Eigen::MatrixXd::Zero(rows, cols)),
      grad(Eigen::MatrixXd::Zero(rows, cols)),
      m(Eigen::MatrixXd::Zero(rows, cols)),
      v(Eigen::MatrixXd::Zero(rows, cols)) {}

std::vector<const Param*> Layer::params() const {
    auto mut = const_cast<Layer*>(this)->params();
    return {mut.begin(), mut.end()};
}

// ---------------------------------------------------------------- ARMA

ArmaLayer::ArmaLayer(Eigen::Index c_in, Eigen::Index c_out, int stacks, int iterations)
    : c_in_(c_in), c_out_(c_out), stacks_(stacks), iterations_(iterations) {
    require(stacks >= 1, "ArmaLayer: K must be >= 1");
    require(iterations >= 1, "ArmaLayer: T must be >= 1");
    require(c_in >= 1 && c_out >= 1, "ArmaLayer: channel counts must be positive");
    for (int k = 0; k < stacks; ++k) {
        const auto s = std::to_string(k);
        params_.emplace_back("alpha" + s, c_out, c_out);
        params_.emplace_back("beta" + s, c_in, c_out);
        params_.emplace_back("theta" + s, 1, c_out);
    }
}

std::vector<Param*> ArmaLayer::params() {
    std::vector<Param*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
}

// Cache layout: [x, then per stack: P(0) .. P(T-1)] where P(t) = L_mod Y(t).
Tensor2 ArmaLayer::forward(const GraphContext& g, const Tensor2& x, LayerCache& cache) const {
    check_batch(g, x, c_in_, "arma");
    const auto T = static_cast<std::size_t>(iterations_);
    cache.mats.assign(1 + static_cast<std::size_t>(stacks_) * T, {});
    cache.mats[0] = x;

    Tensor2 out = Tensor2::Zero(x.rows(), c_out_);
    for (int k = 0; k < stacks_; ++k) {
        const auto& alpha = params_[static_cast<std::size_t>(3 * k)].value;
        const auto& beta = params_[static_cast<std::size_t>(3 * k + 1)].value;
        const auto& theta = params_[static_cast<std::size_t>(3 * k + 2)].value;
        Tensor2 skip = x * beta;
        skip.rowwise() += theta.row(0);
        Tensor2 y = skip;
        for (std::size_t t = 0; t < T; ++t) {
            auto& p = cache.mats[1 + static_cast<std::size_t>(k) * T + t];
            p = apply_shift(g, y);
            y.noalias() = p * alpha;
            y += skip;
        }
        out += y;
    }
    out /= static_cast<double>(stacks_);
    return out;
}

Tensor2 ArmaLayer::backward(const GraphContext& g, const LayerCache& cache, const Tensor2& grad_out) {
    const auto T = static_cast<std::size_t>(iterations_);
    const Tensor2& x = cache.mats.at(0);
    Tensor2 grad_x = Tensor2::Zero(x.rows(), c_in_);
    Tensor2 grad_p(x.rows(), c_out_);
    for (int k = 0; k < stacks_; ++k) {
        auto& alpha = params_[static_cast<std::size_t>(3 * k)];
        auto& beta = params_[static_cast<std::size_t>(3 * k + 1)];
        auto& theta = params_[static_cast<std::size_t>(3 * k + 2)];
        Tensor2 grad_y = grad_out / static_cast<double>(stacks_);
        Tensor2 grad_skip = Tensor2::Zero(x.rows(), c_out_);
        for (std::size_t t = T; t-- > 0;) {
            const auto& p = cache.mats[1 + static_cast<std::size_t>(k) * T + t];
            grad_skip += grad_y;
            alpha.grad.noalias() += p.transpose() * grad_y;
            grad_p.noalias() = grad_y * alpha.value.transpose();
            grad_y.setZero();
            // L_mod is symmetric, so its transpose is itself.
            apply_shift_add(g, grad_p, 1.0, grad_y);
        }
        grad_skip += grad_y;
        beta.grad.noalias() += x.transpose() * grad_skip;
        theta.grad += grad_skip.colwise().sum();
        grad_x.noalias() += grad_skip * beta.value.transpose();
    }
    return grad_x;
}

// ---------------------------------------------------------------- FIR

FirLayer::FirLayer(Eigen::Index c_in, Eigen::Index c_out, int order) : c_in_(c_in), c_out_(c_out), order_(order) {
    require(order >= 1, "FirLayer: K must be >= 1");
    require(c_in >= 1 && c_out >= 1, "FirLayer: channel counts must be positive");
    for (int k = 0; k < order; ++k) params_.emplace_back("theta" + std::to_string(k), c_in, c_out);
}

std::vector<Param*> FirLayer::params() {
    std::vector<Param*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
}

// Cache: T_0 .. T_{K-1}, the Chebyshev terms applied to x. L_hat = L - I = -L_mod.
Tensor2 FirLayer::forward(const GraphContext& g, const Tensor2& x, LayerCache& cache) const {
    check_batch(g, x, c_in_, "fir");
    auto& terms = cache.mats;
    terms.assign(static_cast<std::size_t>(order_), {});
    terms[0] = x;
    if (order_ > 1) {
        terms[1] = apply_shift(g, x);
        terms[1] *= -1.0;
    }
    for (std::size_t k = 2; k < terms.size(); ++k) {
        terms[k] = -terms[k - 2];
        apply_shift_add(g, terms[k - 1], -2.0, terms[k]);
    }
    Tensor2 out = Tensor2::Zero(x.rows(), c_out_);
    for (std::size_t k = 0; k < terms.size(); ++k) out.noalias() += terms[k] * params_[k].value;
    return out;
}

Tensor2 FirLayer::backward(const GraphContext& g, const LayerCache& cache, const Tensor2& grad_out) {
    const auto& terms = cache.mats;
    const auto K = terms.size();
    std::vector<Tensor2> grad_terms(K);
    for (std::size_t k = 0; k < K; ++k) {
        params_[k].grad.noalias() += terms[k].transpose() * grad_out;
        grad_terms[k].noalias() = grad_out * params_[k].value.transpose();
    }
    for (std::size_t k = K; k-- > 2;) {
        apply_shift_add(g, grad_terms[k], -2.0, grad_terms[k - 1]);
        grad_terms[k - 2] -= grad_terms[k];
    }
    if (K > 1) apply_shift_add(g, grad_terms[1], -1.0, grad_terms[0]);
    return grad_terms[0];
}

// ---------------------------------------------------------------- dense / activations

DenseLayer::DenseLayer(Eigen::Index c_in, Eigen::Index c_out)
    : c_in_(c_in), c_out_(c_out), weight_("weight", c_in, c_out), bias_("bias", 1, c_out) {
    require(c_in >= 1 && c_out >= 1, "DenseLayer: channel counts must be positive");
}

Tensor2 DenseLayer::forward(const GraphContext&, const Tensor2& x, LayerCache& cache) const {
    require(x.cols() == c_in_, "dense: expected " + std::to_string(c_in_) + " channels");
    cache.mats.assign(1, x);
    Tensor2 y = x * weight_.value;
    y.rowwise() += bias_.value.row(0);
    return y;
}

Tensor2 DenseLayer::backward(const GraphContext&, const LayerCache& cache, const Tensor2& grad_out) {
    const auto& x = cache.mats.at(0);
    weight_.grad.noalias() += x.transpose() * grad_out;
    bias_.grad += grad_out.colwise().sum();
    return grad_out * weight_.value.transpose();
}

Tensor2 ReluLayer::forward(const GraphContext&, const Tensor2& x, LayerCache& cache) const {
    Tensor2 y = x.cwiseMax(0.0);
    cache.mats.assign(1, x);
    return y;
}

Tensor2 ReluLayer::backward(const GraphContext&, const LayerCache& cache, const Tensor2& grad_out) {
    const auto& x = cache.mats.at(0);
    return (x.array() > 0.0).select(grad_out, 0.0);
}

Tensor2 FlattenLayer::forward(const GraphContext&, const Tensor2& x, LayerCache&) const {
    require(x.cols() == channels_ && x.rows() % nodes_ == 0, "flatten: shape mismatch");
    const Eigen::Index batch = x.rows() / nodes_;
    Tensor2 y(batch, nodes_ * channels_);
    for (Eigen::Index c = 0; c < channels_; ++c) {
        for (Eigen::Index b = 0; b < batch; ++b) {
            y.row(b).segment(c * nodes_, nodes_) = x.col(c).segment(b * nodes_, nodes_).transpose();
        }
    }
    return y;
}

Tensor2 FlattenLayer::backward(const GraphContext&, const LayerCache&, const Tensor2& grad_out) {
    const Eigen::Index batch = grad_out.rows();
    Tensor2 g(batch * nodes_, channels_);
    for (Eigen::Index c = 0; c < channels_; ++c) {
        for (Eigen::Index b = 0; b < batch; ++b) {
            g.col(c).segment(b * nodes_, nodes_) = grad_out.row(b).segment(c * nodes_, nodes_).transpose();
        }
    }
    return g;
}

Tensor2 UnflattenLayer::forward(const GraphContext&, const Tensor2& x, LayerCache&) const {
    require(x.cols() == nodes_, "unflatten: shape mismatch");
    Tensor2 y(x.rows() * nodes_, 1);
    for (Eigen::Index b = 0; b < x.rows(); ++b) y.col(0).segment(b * nodes_, nodes_) = x.row(b).transpose();
    return y;
}

Tensor2 UnflattenLayer::backward(const GraphContext&, const LayerCache&, const Tensor2& grad_out) {
    const Eigen::Index batch = grad_out.rows() / nodes_;
    Tensor2 g(batch, nodes_);
    for (Eigen::Index b = 0; b < batch; ++b) g.row(b) = grad_out.col(0).segment(b * nodes_, nodes_).transpose();
    return g;
}

void initialize_layer(Layer& layer, std::mt19937_64& rng) {
    if (auto* arma = dynamic_cast<ArmaLayer*>(&layer)) {
        const auto ci = arma->in_channels();
        const auto co = arma->out_channels();
        for (int k = 0; k < arma->stacks(); ++k) {
            glorot(arma->alpha(k).value, co, co, 0.5, rng);
            glorot(arma->beta(k).value, ci, co, 1.0, rng);
            arma->theta(k).value.setZero();
        }
    } else if (auto* fir = dynamic_cast<FirLayer*>(&layer)) {
        for (int k = 0; k < fir->order(); ++k) {
            glorot(fir->coeff(k).value, fir->in_channels(), fir->out_channels(), 1.0, rng);
        }
    } else if (auto* dense = dynamic_cast<DenseLayer*>(&layer)) {
        glorot(dense->weight().value, dense->in_channels(), dense->out_channels(), 1.0, rng);
        dense->bias().value.setZero();
    }
}

Tensor2 arma1_forward(const Eigen::MatrixXd& L_mod, const Tensor2& X, const Eigen::MatrixXd& alpha,
                      const Eigen::MatrixXd& beta, const Eigen::RowVectorXd& theta, int iterations) {
    return arma_k_forward(L_mod, X, {ArmaStack{alpha, beta, theta}}, iterations);
}

Tensor2 arma_k_forward(const Eigen::MatrixXd& L_mod, const Tensor2& X, const std::vector<ArmaStack>& stacks,
                       int iterations) {
    require(!stacks.empty(), "arma_k_forward: no stacks");
    require(X.rows() == L_mod.rows(), "arma_k_forward: X rows must match the operator");
    const auto c_in = X.cols();
    const auto c_out = stacks.front().alpha.rows();
    ArmaLayer layer(c_in, c_out, static_cast<int>(stacks.size()), iterations);
    for (std::size_t k = 0; k < stacks.size(); ++k) {
        const auto& s = stacks[k];
        require(s.alpha.rows() == c_out && s.alpha.cols() == c_out, "arma: alpha must be c_out x c_out");
        require(s.beta.rows() == c_in && s.beta.cols() == c_out, "arma: beta must be c_in x c_out");
        require(s.theta.size() == c_out, "arma: theta must have c_out entries");
        const int k_int = static_cast<int>(k);
        layer.alpha(k_int).value = s.alpha;
        layer.beta(k_int).value = s.beta;
        layer.theta(k_int).value = s.theta;
    }
    GraphContext g{nullptr, &L_mod, L_mod.rows()};
    LayerCache cache;
    return layer.forward(g, X, cache);
}

Tensor2 fir_forward(const Eigen::MatrixXd& L, const Tensor2& X, const std::vector<Eigen::MatrixXd>& coefficients) {
    require(!coefficients.empty(), "fir_forward: no coefficients");
    require(X.rows() == L.rows(), "fir_forward: X rows must match the operator");
    FirLayer layer(X.cols(), coefficients.front().cols(), static_cast<int>(coefficients.size()));
    for (std::size_t k = 0; k < coefficients.size(); ++k) {
        require(coefficients[k].rows() == X.cols() && coefficients[k].cols() == layer.out_channels(),
                "fir_forward: coefficient shape mismatch");
        layer.coeff(static_cast<int>(k)).value = coefficients[k];
    }
    const Eigen::MatrixXd L_mod = Eigen::MatrixXd::Identity(L.rows(), L.cols()) - L;
    GraphContext g{&L, &L_mod, L.rows()};
    LayerCache cache;
    return layer.forward(g, X, cache);
}

}  // namespace gridloc
