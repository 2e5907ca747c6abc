#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gridloc/grid_model.hpp"
#include "gridloc/layers.hpp"

namespace gridloc {

enum class ModelKind { Iir, Fir, Fcn };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct ModelConfig {
    ModelKind kind = ModelKind::Iir;
    int graph_layers = 3;  // hidden IIR_K / FIR layers
    int channels = 32;
    int order = 3;         // K: ARMA stacks or FIR polynomial order
    int iterations = 8;    // T: unrolled ARMA steps
    int fcn_hidden = 128;
    int in_channels = 2;   // P, Q
};

/// Context built from graph operators; keeps pointers, so the operators must
/// outlive it.
GraphContext make_context(const GraphOperators& ops);

struct ForwardCache {
    std::vector<LayerCache> layers;
    Tensor2 logits;
    Tensor2 probabilities;
};

enum class LossKind { BinaryCrossEntropy, MeanSquaredError };

/// Sequential stack of layers. With `sigmoid_output` the final layer's
/// single channel is squashed into a per-node attack probability.
class Model {
  public:
    Model() = default;
    Model(std::vector<std::unique_ptr<Layer>> layers, bool sigmoid_output);
    Model(const Model& other);
    Model& operator=(const Model& other);
    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;

    /// Localization model: graph layers with ReLU, a per-node dense layer
    /// with ReLU, and a one-channel sigmoid head. The FCN variant flattens
    /// every sample and uses two hidden dense layers.
    static Model localizer(const ModelConfig& cfg, Eigen::Index nodes, std::uint64_t seed);
    /// A single linear filter layer (no activation, no bias beyond ARMA theta).
    static Model single_filter(ModelKind kind, int order, int iterations, std::uint64_t seed);

    [[nodiscard]] bool sigmoid_output() const { return sigmoid_output_; }
    [[nodiscard]] const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
    [[nodiscard]] std::vector<Param*> params();
    [[nodiscard]] std::vector<const Param*> params() const;
    [[nodiscard]] std::size_t parameter_count() const;

    /// Throws std::runtime_error naming the layer index if a non-finite value appears.
    Tensor2 forward(const GraphContext& g, const Tensor2& x, ForwardCache& cache) const;
    Tensor2 predict(const GraphContext& g, const Tensor2& x) const;

    /// Zeroes gradients, runs forward + backward; returns loss * loss_scale.
    double loss_and_gradients(const GraphContext& g, const Tensor2& x, const Tensor2& target, LossKind loss,
                              double loss_scale = 1.0);

    [[nodiscard]] std::vector<Eigen::MatrixXd> snapshot() const;
    void restore(const std::vector<Eigen::MatrixXd>& values);
    void zero_grad();

  private:
    std::vector<std::unique_ptr<Layer>> layers_;
    bool sigmoid_output_ = false;
};

/// Per-node probabilities for one sample X (n x 2).
Eigen::VectorXd model_forward(const Model& model, const GraphOperators& ops, const Tensor2& X);

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean over entries of -[y log p + (1 - y) log(1 - p)], p clamped to [1e-7, 1 - 1e-7].
double bce_loss(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y);
double mse_loss(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target);

double sigmoid(double z);

}  // namespace gridloc
