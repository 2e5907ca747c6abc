#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace gridloc {

/// Node-major signal block. A batch of B samples on an n-node graph is a
/// (B * n) x c matrix whose rows b * n .. b * n + n - 1 belong to sample b.
/// The same column-major buffer read as n x (B * c) lets one GEMM apply a
/// graph operator to every sample and channel at once.
using Tensor2 = Eigen::MatrixXd;

/// Applies the n x n operator S to every sample/channel of a batch.
Tensor2 apply_shift(const Eigen::MatrixXd& S, const Tensor2& Y);
void apply_shift_add(const Eigen::MatrixXd& S, const Tensor2& Y, double scale, Tensor2& out);

struct Param {
    std::string name;
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    // Adam moments.
    Eigen::MatrixXd m;
    Eigen::MatrixXd v;

    Param() = default;
    Param(std::string n, Eigen::Index rows, Eigen::Index cols);
};

/// Graph operators a layer may read during forward/backward.
struct GraphContext {
    const Eigen::MatrixXd* laplacian = nullptr;  // L
    const Eigen::MatrixXd* shift = nullptr;      // L_mod = I - L
    Eigen::Index nodes = 0;
    // Optional sparse copy of `shift`; used instead of it when set.
    const Eigen::SparseMatrix<double>* shift_sparse = nullptr;
};

Tensor2 apply_shift(const GraphContext& g, const Tensor2& Y);
void apply_shift_add(const GraphContext& g, const Tensor2& Y, double scale, Tensor2& out);

struct LayerCache {
    std::vector<Eigen::MatrixXd> mats;
};

class Layer {
  public:
    virtual ~Layer() = default;
    [[nodiscard]] virtual std::string kind() const = 0;
    [[nodiscard]] virtual Eigen::Index in_channels() const = 0;
    [[nodiscard]] virtual Eigen::Index out_channels() const = 0;
    virtual Tensor2 forward(const GraphContext& g, const Tensor2& x, LayerCache& cache) const = 0;
    /// Accumulates parameter gradients and returns d loss / d input.
    virtual Tensor2 backward(const GraphContext& g, const LayerCache& cache, const Tensor2& grad_out) = 0;
    virtual std::vector<Param*> params() { return {}; }
    [[nodiscard]] std::vector<const Param*> params() const;
    /// Integer hyperparameters needed to rebuild the layer (checkpoints).
    [[nodiscard]] virtual std::vector<std::int64_t> shape_args() const = 0;
    [[nodiscard]] virtual std::unique_ptr<Layer> clone() const = 0;
};

/// K parallel unrolled first-order recursions, averaged:
/// Y0 = X beta + theta, Y(t+1) = L_mod Y(t) alpha + X beta + theta.
class ArmaLayer final : public Layer {
  public:
    ArmaLayer(Eigen::Index c_in, Eigen::Index c_out, int stacks, int iterations);

    [[nodiscard]] std::string kind() const override { return "arma"; }
    [[nodiscard]] Eigen::Index in_channels() const override { return c_in_; }
    [[nodiscard]] Eigen::Index out_channels() const override { return c_out_; }
    [[nodiscard]] int stacks() const { return stacks_; }
    [[nodiscard]] int iterations() const { return iterations_; }
    Tensor2 forward(const GraphContext& g, const Tensor2& x, LayerCache& cache) const override;
    Tensor2 backward(const GraphContext& g, const LayerCache& cache, const Tensor2& grad_out) override;
    std::vector<Param*> params() override;
    [[nodiscard]] std::vector<std::int64_t> shape_args() const override {
        return {c_in_, c_out_, stacks_, iterations_};
    }
    [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<ArmaLayer>(*this); }

    Param& alpha(int k) { return params_[static_cast<std::size_t>(3 * k)]; }
    Param& beta(int k) { return params_[static_cast<std::size_t>(3 * k + 1)]; }
    Param& theta(int k) { return params_[static_cast<std::size_t>(3 * k + 2)]; }

  private:
    Eigen::Index c_in_, c_out_;
    int stacks_, iterations_;
    std::vector<Param> params_;  // alpha_k, beta_k, theta_k
};

/// Chebyshev polynomial filter of order K in L_hat = L - I:
/// Y = sum_k T_k(L_hat) X Theta_k.
class FirLayer final : public Layer {
  public:
    FirLayer(Eigen::Index c_in, Eigen::Index c_out, int order);

    [[nodiscard]] std::string kind() const override { return "fir"; }
    [[nodiscard]] Eigen::Index in_channels() const override { return c_in_; }
    [[nodiscard]] Eigen::Index out_channels() const override { return c_out_; }
    [[nodiscard]] int order() const { return order_; }
    Tensor2 forward(const GraphContext& g, const Tensor2& x, LayerCache& cache) const override;
    Tensor2 backward(const GraphContext& g, const LayerCache& cache, const Tensor2& grad_out) override;
    std::vector<Param*> params() override;
    [[nodiscard]] std::vector<std::int64_t> shape_args() const override { return {c_in_, c_out_, order_}; }
    [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<FirLayer>(*this); }

    Param& coeff(int k) { return params_[static_cast<std::size_t>(k)]; }

  private:
    Eigen::Index c_in_, c_out_;
    int order_;
    std::vector<Param> params_;
};

/// Row-wise affine map Y = X W + b, shared by every node (or every sample
/// when rows are flattened samples).
class DenseLayer final : public Layer {
  public:
    DenseLayer(Eigen::Index c_in, Eigen::Index c_out);

    [[nodiscard]] std::string kind() const override { return "dense"; }
    [[nodiscard]] Eigen::Index in_channels() const override { return c_in_; }
    [[nodiscard]] Eigen::Index out_channels() const override { return c_out_; }
    Tensor2 forward(const GraphContext& g, const Tensor2& x, LayerCache& cache) const override;
    Tensor2 backward(const GraphContext& g, const LayerCache& cache, const Tensor2& grad_out) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }
    [[nodiscard]] std::vector<std::int64_t> shape_args() const override { return {c_in_, c_out_}; }
    [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<DenseLayer>(*this); }

    Param& weight() { return weight_; }
    Param& bias() { return bias_; }

  private:
    Eigen::Index c_in_, c_out_;
    Param weight_, bias_;
};

class ReluLayer final : public Layer {
  public:
    explicit ReluLayer(Eigen::Index channels) : channels_(channels) {}
    [[nodiscard]] std::string kind() const override { return "relu"; }
    [[nodiscard]] Eigen::Index in_channels() const override { return channels_; }
    [[nodiscard]] Eigen::Index out_channels() const override { return channels_; }
    Tensor2 forward(const GraphContext& g, const Tensor2& x, LayerCache& cache) const override;
    Tensor2 backward(const GraphContext& g, const LayerCache& cache, const Tensor2& grad_out) override;
    [[nodiscard]] std::vector<std::int64_t> shape_args() const override { return {channels_}; }
    [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<ReluLayer>(*this); }

  private:
    Eigen::Index channels_;
};

/// (B * n) x c node rows -> B x (c * n) sample rows, feature index ch * n + i.
class FlattenLayer final : public Layer {
  public:
    FlattenLayer(Eigen::Index nodes, Eigen::Index channels) : nodes_(nodes), channels_(channels) {}
    [[nodiscard]] std::string kind() const override { return "flatten"; }
    [[nodiscard]] Eigen::Index in_channels() const override { return channels_; }
    [[nodiscard]] Eigen::Index out_channels() const override { return channels_ * nodes_; }
    Tensor2 forward(const GraphContext& g, const Tensor2& x, LayerCache& cache) const override;
    Tensor2 backward(const GraphContext& g, const LayerCache& cache, const Tensor2& grad_out) override;
    [[nodiscard]] std::vector<std::int64_t> shape_args() const override { return {nodes_, channels_}; }
    [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<FlattenLayer>(*this); }

  private:
    Eigen::Index nodes_, channels_;
};

/// B x n sample rows -> (B * n) x 1 node rows.
class UnflattenLayer final : public Layer {
  public:
    explicit UnflattenLayer(Eigen::Index nodes) : nodes_(nodes) {}
    [[nodiscard]] std::string kind() const override { return "unflatten"; }
    [[nodiscard]] Eigen::Index in_channels() const override { return nodes_; }
    [[nodiscard]] Eigen::Index out_channels() const override { return 1; }
    Tensor2 forward(const GraphContext& g, const Tensor2& x, LayerCache& cache) const override;
    Tensor2 backward(const GraphContext& g, const LayerCache& cache, const Tensor2& grad_out) override;
    [[nodiscard]] std::vector<std::int64_t> shape_args() const override { return {nodes_}; }
    [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<UnflattenLayer>(*this); }

  private:
    Eigen::Index nodes_;
};

/// Uniform Glorot init of every weight matrix; biases and theta start at 0.
/// ARMA alpha gets an extra factor 0.5 so the recursion starts contractive.
void initialize_layer(Layer& layer, std::mt19937_64& rng);

// Single-sample filter entry points used by tests and the filter experiment.
Tensor2 arma1_forward(const Eigen::MatrixXd& L_mod, const Tensor2& X, const Eigen::MatrixXd& alpha,
                      const Eigen::MatrixXd& beta, const Eigen::RowVectorXd& theta, int iterations);

struct ArmaStack {
    Eigen::MatrixXd alpha;
    Eigen::MatrixXd beta;
    Eigen::RowVectorXd theta;
};

Tensor2 arma_k_forward(const Eigen::MatrixXd& L_mod, const Tensor2& X, const std::vector<ArmaStack>& stacks,
                       int iterations);

Tensor2 fir_forward(const Eigen::MatrixXd& L, const Tensor2& X, const std::vector<Eigen::MatrixXd>& coefficients);

}  // namespace gridloc
