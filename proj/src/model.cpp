#include "gridloc/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gridloc {

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::Iir: return "iir";
        case ModelKind::Fir: return "fir";
        case ModelKind::Fcn: return "fcn";
    }
    return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "iir") return ModelKind::Iir;
    if (s == "fir") return ModelKind::Fir;
    if (s == "fcn") return ModelKind::Fcn;
    throw std::invalid_argument("unknown model kind '" + s + "' (expected iir, fir or fcn)");
}

GraphContext make_context(const GraphOperators& ops) {
    GraphContext g{&ops.L, &ops.L_mod, static_cast<Eigen::Index>(ops.n)};
    // Dense GEMM wins on small or dense graphs.
    const auto nnz = static_cast<double>(ops.L_mod_sparse.nonZeros());
    if (ops.n >= 32 && ops.L_mod_sparse.size() > 0 && nnz < 0.2 * static_cast<double>(ops.n * ops.n)) {
        g.shift_sparse = &ops.L_mod_sparse;
    }
    return g;
}

double sigmoid(double z) {
    const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    return std::clamp(p, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

double bce_loss(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y) {
    if (p.rows() != y.rows() || p.cols() != y.cols()) throw std::invalid_argument("bce_loss: length mismatch");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double pc = std::clamp(p(i), kProbabilityClamp, 1.0 - kProbabilityClamp);
        sum -= y(i) * std::log(pc) + (1.0 - y(i)) * std::log(1.0 - pc);
    }
    return sum / static_cast<double>(p.size());
}

double mse_loss(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target) {
    if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
        throw std::invalid_argument("mse_loss: shape mismatch");
    }
    return (prediction - target).squaredNorm() / static_cast<double>(prediction.size());
}

Model::Model(std::vector<std::unique_ptr<Layer>> layers, bool sigmoid_output)
    : layers_(std::move(layers)), sigmoid_output_(sigmoid_output) {
    for (std::size_t i = 1; i < layers_.size(); ++i) {
        const bool reshaped = layers_[i - 1]->kind() == "flatten" || layers_[i]->kind() == "unflatten";
        if (!reshaped && layers_[i - 1]->out_channels() != layers_[i]->in_channels()) {
            throw std::invalid_argument("Model: layer " + std::to_string(i) + " does not chain with its predecessor");
        }
    }
}

Model::Model(const Model& other) : sigmoid_output_(other.sigmoid_output_) {
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Model& Model::operator=(const Model& other) {
    if (this != &other) {
        Model copy(other);
        *this = std::move(copy);
    }
    return *this;
}

Model Model::localizer(const ModelConfig& cfg, Eigen::Index nodes, std::uint64_t seed) {
    if (cfg.graph_layers < 1 || cfg.channels < 1 || cfg.order < 1 || cfg.iterations < 1 || cfg.fcn_hidden < 1) {
        throw std::invalid_argument("ModelConfig: all sizes must be positive");
    }
    std::vector<std::unique_ptr<Layer>> layers;
    const Eigen::Index c = cfg.channels;
    if (cfg.kind == ModelKind::Fcn) {
        const Eigen::Index h = cfg.fcn_hidden;
        layers.push_back(std::make_unique<FlattenLayer>(nodes, cfg.in_channels));
        layers.push_back(std::make_unique<DenseLayer>(nodes * cfg.in_channels, h));
        layers.push_back(std::make_unique<ReluLayer>(h));
        layers.push_back(std::make_unique<DenseLayer>(h, h));
        layers.push_back(std::make_unique<ReluLayer>(h));
        layers.push_back(std::make_unique<DenseLayer>(h, nodes));
        layers.push_back(std::make_unique<UnflattenLayer>(nodes));
    } else {
        Eigen::Index c_in = cfg.in_channels;
        for (int l = 0; l < cfg.graph_layers; ++l) {
            if (cfg.kind == ModelKind::Iir) {
                layers.push_back(std::make_unique<ArmaLayer>(c_in, c, cfg.order, cfg.iterations));
            } else {
                layers.push_back(std::make_unique<FirLayer>(c_in, c, cfg.order));
            }
            layers.push_back(std::make_unique<ReluLayer>(c));
            c_in = c;
        }
        layers.push_back(std::make_unique<DenseLayer>(c, c));
        layers.push_back(std::make_unique<ReluLayer>(c));
        layers.push_back(std::make_unique<DenseLayer>(c, 1));
    }
    std::mt19937_64 rng(seed);
    for (auto& l : layers) initialize_layer(*l, rng);
    return Model(std::move(layers), true);
}

Model Model::single_filter(ModelKind kind, int order, int iterations, std::uint64_t seed) {
    std::vector<std::unique_ptr<Layer>> layers;
    if (kind == ModelKind::Iir) {
        layers.push_back(std::make_unique<ArmaLayer>(1, 1, order, iterations));
    } else if (kind == ModelKind::Fir) {
        layers.push_back(std::make_unique<FirLayer>(1, 1, order));
    } else {
        throw std::invalid_argument("single_filter: kind must be iir or fir");
    }
    std::mt19937_64 rng(seed);
    initialize_layer(*layers.front(), rng);
    return Model(std::move(layers), false);
}

std::vector<Param*> Model::params() {
    std::vector<Param*> out;
    for (auto& l : layers_) {
        for (auto* p : l->params()) out.push_back(p);
    }
    return out;
}

std::vector<const Param*> Model::params() const {
    auto mut = const_cast<Model*>(this)->params();
    return {mut.begin(), mut.end()};
}

std::size_t Model::parameter_count() const {
    std::size_t total = 0;
    for (const auto* p : params()) total += static_cast<std::size_t>(p->value.size());
    return total;
}

Tensor2 Model::forward(const GraphContext& g, const Tensor2& x, ForwardCache& cache) const {
    if (!x.allFinite()) throw std::runtime_error("non-finite model input");
    cache.layers.resize(layers_.size());
    Tensor2 h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i]->forward(g, h, cache.layers[i]);
        if (!h.allFinite()) {
            throw std::runtime_error("non-finite activation at layer " + std::to_string(i) + " (" +
                                     layers_[i]->kind() + ")");
        }
    }
    cache.logits = h;
    if (sigmoid_output_) {
        cache.probabilities = h.unaryExpr([](double z) { return sigmoid(z); });
        return cache.probabilities;
    }
    return h;
}

Tensor2 Model::predict(const GraphContext& g, const Tensor2& x) const {
    ForwardCache cache;
    return forward(g, x, cache);
}

double Model::loss_and_gradients(const GraphContext& g, const Tensor2& x, const Tensor2& target, LossKind loss,
                                 double loss_scale) {
    zero_grad();
    ForwardCache cache;
    const Tensor2 out = forward(g, x, cache);
    if (out.rows() != target.rows() || out.cols() != target.cols()) {
        throw std::invalid_argument("loss_and_gradients: target shape mismatch");
    }
    const double count = static_cast<double>(out.size());
    double value = 0.0;
    Tensor2 grad(out.rows(), out.cols());
    if (loss == LossKind::BinaryCrossEntropy) {
        if (!sigmoid_output_) throw std::invalid_argument("binary cross-entropy needs a sigmoid output");
        value = bce_loss(out, target);
        for (Eigen::Index i = 0; i < out.size(); ++i) {
            const double p = out(i);
            const bool inside = p > kProbabilityClamp && p < 1.0 - kProbabilityClamp;
            // d/dz of the unclamped BCE through the sigmoid is p - y.
            grad(i) = inside ? loss_scale * (p - target(i)) / count : 0.0;
        }
    } else {
        if (sigmoid_output_) throw std::invalid_argument("mean squared error expects a linear output");
        value = mse_loss(out, target);
        grad = (2.0 * loss_scale / count) * (out - target);
    }
    for (std::size_t i = layers_.size(); i-- > 0;) grad = layers_[i]->backward(g, cache.layers[i], grad);
    return value * loss_scale;
}

std::vector<Eigen::MatrixXd> Model::snapshot() const {
    std::vector<Eigen::MatrixXd> out;
    for (const auto* p : params()) out.push_back(p->value);
    return out;
}

void Model::restore(const std::vector<Eigen::MatrixXd>& values) {
    auto ps = params();
    if (ps.size() != values.size()) throw std::invalid_argument("Model::restore: parameter count mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (ps[i]->value.rows() != values[i].rows() || ps[i]->value.cols() != values[i].cols()) {
            throw std::invalid_argument("Model::restore: shape mismatch for " + ps[i]->name);
        }
        ps[i]->value = values[i];
    }
}

void Model::zero_grad() {
    for (auto* p : params()) p->grad.setZero();
}

Eigen::VectorXd model_forward(const Model& model, const GraphOperators& ops, const Tensor2& X) {
    if (X.rows() != static_cast<Eigen::Index>(ops.n) || X.cols() != 2) {
        throw std::invalid_argument("model_forward: X must be n x 2 (P, Q)");
    }
    return model.predict(make_context(ops), X).col(0);
}

}  // namespace gridloc
